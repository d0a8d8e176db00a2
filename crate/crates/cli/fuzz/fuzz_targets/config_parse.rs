#![no_main]

use libfuzzer_sys::fuzz_target;
use suballoc_cli::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        // Anything accepted must survive a round trip unchanged.
        let again = parse_config(&cfg.to_json()).expect("re-serialized config parses");
        assert_eq!(cfg, again);
        let _ = cfg.integrator_options(1.0);
    }
});
