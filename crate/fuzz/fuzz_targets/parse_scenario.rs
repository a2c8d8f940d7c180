#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = ltqkd_cli::parse_scenario(text) {
            let _ = s.loss.points();
            let _ = s.methods();
        }
    }
});
