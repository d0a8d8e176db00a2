//! Replays the checked-in fuzz corpus through the parser entry points with
//! the same assertions the fuzz targets make.

use std::fs;
use std::path::{Path, PathBuf};

use suballoc_cli::config::{parse_agent_spec, parse_config, parse_graph_spec};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn config_seeds_parse_and_round_trip() {
    for (path, text) in seeds("config_parse") {
        let cfg = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
    }
}

#[test]
fn graph_seeds_parse() {
    for (path, text) in seeds("graph_spec") {
        let g = parse_graph_spec(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(g.laplacian().row_sums().iter().all(|s| s.abs() < 1e-12));
    }
}

#[test]
fn agent_seeds_parse() {
    for (path, text) in seeds("agent_spec") {
        let a = parse_agent_spec(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(a.cost.grad(&vec![0.0; a.b.len()]).len(), a.b.len());
    }
}

#[test]
fn truncated_seeds_are_rejected_cleanly() {
    for (_, text) in seeds("config_parse") {
        for cut in [1, text.len() / 3, text.len() / 2, text.len() - 2] {
            assert!(parse_config(&text[..cut]).is_err());
        }
    }
}
