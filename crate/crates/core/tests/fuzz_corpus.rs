//! Replays the checked-in fuzz corpus through the same entry points and
//! assertions as the fuzz targets, so regressions surface on stable.

use std::fs;
use std::path::PathBuf;

use tabkg::compressor::CompressionPlan;
use tabkg::fixtures::{generate_fixture, FixtureSpec};
use tabkg::generator::DiffusionModel;
use tabkg::proposer::parse_proposal;
use tabkg::table::{metadata_of, parse_metadata, read_table};
use tabkg::{Condition, Expr, Graph};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus for {target}");
    files.into_iter().map(|p| (p.display().to_string(), fs::read(&p).unwrap())).collect()
}

fn text(bytes: &[u8]) -> Option<&str> {
    std::str::from_utf8(bytes).ok()
}

#[test]
fn expr_seeds() {
    let mut parsed = 0;
    for (name, bytes) in corpus("expr_parse") {
        if let Some(Ok(e)) = text(&bytes).map(Expr::parse) {
            let shown = e.to_string();
            assert_eq!(Expr::parse(&shown).unwrap().to_string(), shown, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 2);
}

#[test]
fn condition_seeds() {
    let mut parsed = 0;
    for (name, bytes) in corpus("condition_parse") {
        if let Some(Ok(c)) = text(&bytes).map(Condition::parse) {
            let shown = c.to_string();
            assert_eq!(Condition::parse(&shown).unwrap().to_string(), shown, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 2);
}

#[test]
fn proposal_seeds() {
    let metas = generate_fixture(&FixtureSpec::new("mini-retail", 10, 0)).unwrap().table.metas();
    for (_, bytes) in corpus("proposal_parse") {
        let parsed = parse_proposal(&String::from_utf8_lossy(&bytes), &metas);
        let mut g = Graph::new(metas.iter().map(|m| m.name.clone())).unwrap();
        for e in parsed.edges {
            let _ = g.insert_edge(e);
        }
        let _ = g.to_dag();
    }
}

#[test]
fn graph_seeds() {
    let mut loaded = 0;
    for (name, bytes) in corpus("graph_json") {
        if let Some(Ok(g)) = text(&bytes).map(Graph::from_json) {
            assert_eq!(Graph::from_json(&g.to_json()).unwrap(), g, "{name}");
            let _ = g.to_dag();
            loaded += 1;
        }
    }
    assert!(loaded >= 2);
}

#[test]
fn table_seeds() {
    let meta = metadata_of(&generate_fixture(&FixtureSpec::new("mini-retail", 10, 0)).unwrap().table.metas());
    for (name, bytes) in corpus("table_csv") {
        if let Ok((table, _)) = read_table(bytes.as_slice(), &meta) {
            let (again, _) = read_table(table.to_csv_string().as_bytes(), &meta).unwrap();
            assert_eq!(again.n_rows(), table.n_rows(), "{name}");
        }
    }
}

#[test]
fn metadata_plan_and_model_seeds() {
    for (name, bytes) in corpus("metadata_json") {
        assert!(parse_metadata(text(&bytes).unwrap()).is_ok(), "{name}");
    }
    for (name, bytes) in corpus("plan_json") {
        let plan = CompressionPlan::from_json(text(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!plan.compressed_metas().is_empty());
    }
    for (name, bytes) in corpus("model_json") {
        let model = DiffusionModel::from_json(text(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(model.sample_with_steps(3, 0, 2).unwrap().n_rows(), 3);
    }
}

#[test]
fn truncated_seeds_never_panic() {
    let metas = generate_fixture(&FixtureSpec::new("mini-retail", 10, 0)).unwrap().table.metas();
    let meta = metadata_of(&metas);
    let targets = ["expr_parse", "condition_parse", "proposal_parse", "graph_json", "table_csv", "metadata_json", "plan_json", "model_json"];
    for target in targets {
        for (_, bytes) in corpus(target) {
            let step = (bytes.len() / 400).max(1);
            for cut in (0..bytes.len()).step_by(step) {
                let prefix = &bytes[..cut];
                let lossy = String::from_utf8_lossy(prefix);
                match target {
                    "expr_parse" => drop(Expr::parse(&lossy)),
                    "condition_parse" => drop(Condition::parse(&lossy)),
                    "proposal_parse" => drop(parse_proposal(&lossy, &metas)),
                    "graph_json" => drop(Graph::from_json(&lossy)),
                    "table_csv" => drop(read_table(prefix, &meta)),
                    "metadata_json" => drop(parse_metadata(&lossy)),
                    "plan_json" => drop(CompressionPlan::from_json(&lossy)),
                    _ => drop(DiffusionModel::from_json(&lossy)),
                }
            }
        }
    }
}
