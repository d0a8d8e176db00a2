#![no_main]

use libfuzzer_sys::fuzz_target;
use suballoc_cli::config::parse_agent_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(agent) = parse_agent_spec(text) {
        let x = vec![0.0; agent.b.len()];
        assert!(agent.cost.grad(&x).len() == x.len());
        let _ = agent.cost.eval(&x);
    }
});
