#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = ltqkd_cli::load_scenario(text) {
            let _ = s.fixed_selection();
            let _ = s.config(1);
            let _ = s.search_space();
        }
    }
});
