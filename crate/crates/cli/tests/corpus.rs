use std::path::Path;

use ltqkd_cli::{load_scenario, parse_scenario};

#[test]
fn fuzz_seeds_replay_cleanly() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut seen = 0;
    for target in ["parse_scenario", "validate_scenario"] {
        for entry in std::fs::read_dir(root.join(target)).unwrap() {
            let bytes = std::fs::read(entry.unwrap().path()).unwrap();
            let text = String::from_utf8_lossy(&bytes);
            if let Ok(s) = parse_scenario(&text) {
                let _ = s.loss.points();
            }
            if let Ok(s) = load_scenario(&text) {
                assert!(s.config(1).is_ok());
            }
            seen += 1;
        }
    }
    assert!(seen >= 2);
}

#[test]
fn hostile_inputs_do_not_panic() {
    let cases = [
        "",
        "schema_version = 1",
        "schema_version = -1\nprotocol = \"pm\"",
        "schema_version = 1\nprotocol = \"pm\"\nmethods = []\nn_tot = []\n[loss]\nvalues = []",
        "schema_version = 1\nprotocol = \"pm\"\nmethods = [\"kato\"]\nn_tot = [1]\n[loss]\nstart = 0.0\nstop = 1e300\nstep = 1e-300",
        "schema_version = 1\nprotocol = \"pm\"\nmethods = [\"kato\"]\nn_tot = [1]\n[loss]\nvalues = [nan, inf]",
        "schema_version = 1\nprotocol = \"mdi\"\nmethods = [\"kato\"]\nn_tot = [1]\n[loss]\nvalues = [1.0]\n[selection]\np_z_a = nan\np_z_b = 0.5\np_t_given_z = 0.1",
        "schema_version = 1\nprotocol = \"mdi\"\nmethods = [\"kato\"]\nn_tot = [1]\n[loss]\nvalues = [1.0]\n[parameters]\nomega_weights = [-1.0]",
        "schema_version = 1\nprotocol = \"pm\"\nmethods = [\"kato\"]\nn_tot = [1]\n[loss]\nvalues = [1.0]\n[search]\npoints = 0",
        "[[[",
    ];
    for text in cases {
        let _ = parse_scenario(text);
        assert!(load_scenario(text).is_err(), "{text}");
    }
}
