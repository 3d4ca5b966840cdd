#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = waveguide_cli::read_csv(text) {
            assert!(table.rows.iter().all(|r| r.len() == table.header.len()));
        }
    }
});
