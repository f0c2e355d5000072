#![no_main]

use libfuzzer_sys::fuzz_target;
use tabkg::fixtures::{generate_fixture, FixtureSpec};
use tabkg::proposer::parse_proposal;
use tabkg::{ColumnMeta, Graph};

fn metas() -> &'static [ColumnMeta] {
    static METAS: std::sync::OnceLock<Vec<ColumnMeta>> = std::sync::OnceLock::new();
    METAS.get_or_init(|| generate_fixture(&FixtureSpec::new("mini-retail", 10, 0)).unwrap().table.metas())
}

fuzz_target!(|data: &[u8]| {
    let raw = String::from_utf8_lossy(data);
    let parsed = parse_proposal(&raw, metas());
    let mut g = Graph::new(metas().iter().map(|m| m.name.clone())).unwrap();
    for e in parsed.edges {
        let _ = g.insert_edge(e);
    }
    let _ = g.to_dag();
});
