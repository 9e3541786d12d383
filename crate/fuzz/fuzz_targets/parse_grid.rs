#![no_main]

use libfuzzer_sys::fuzz_target;
use vae_replica::config::{parse_alpha, parse_grid};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_grid(text) {
        assert!(!values.is_empty() && values.iter().all(|v| v.is_finite()));
    }
    let _ = parse_alpha(text);
});
