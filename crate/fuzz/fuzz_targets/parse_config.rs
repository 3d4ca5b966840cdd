#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = waveguide_cli::parse_config_str(text) {
            assert!(cfg.modes_count > 0);
            assert!(cfg.solver.tol_energy > 0.0);
        }
    }
});
