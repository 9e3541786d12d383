#![no_main]

use libfuzzer_sys::fuzz_target;
use vae_replica::io::{decode_matrix, encode_matrix};

fuzz_target!(|data: &[u8]| {
    if let Ok(x) = decode_matrix(data) {
        assert_eq!(encode_matrix(&x).unwrap(), data);
    }
});
