#![no_main]

use libfuzzer_sys::fuzz_target;
use vae_replica::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json_str(text) {
        let echoed = cfg.to_json_pretty().unwrap();
        if let Some(grid) = &cfg.alpha_grid {
            let _ = grid.values();
        }
        let _ = RunConfig::from_json_str(&echoed);
    }
});
