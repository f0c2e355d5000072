#![no_main]

use libfuzzer_sys::fuzz_target;
use tabkg::Graph;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = Graph::from_json(text) {
        let back = Graph::from_json(&g.to_json()).expect("saved graph loads");
        assert_eq!(back, g);
        let _ = g.to_dag();
    }
});
