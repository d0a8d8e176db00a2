#![no_main]

use libfuzzer_sys::fuzz_target;
use suballoc_cli::config::parse_graph_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = parse_graph_spec(text) {
        let l = g.laplacian();
        assert!(l.row_sums().iter().all(|s| s.abs() <= 1e-9 * (1.0 + g.in_degrees().iter().fold(0.0, |m: f64, d| m.max(*d)))));
        let _ = suballoc::spectral_diagnostics(&g);
    }
});
