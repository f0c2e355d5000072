use std::collections::BTreeSet;

use proptest::prelude::*;
use tabkg::compressor::{build_plan, compress, decompress, verify_roundtrip};
use tabkg::evaluator::{hcs, mdi};
use tabkg::fixtures::{generate_fixture, FixtureSpec, RECIPES};
use tabkg::generator::{independent_sample, train, Encoder, GenConfig};
use tabkg::validator::{prune, satisfaction};
use tabkg::{EdgeKind, ValidatedGraph};

fn small_gen() -> GenConfig {
    GenConfig {
        epochs: 2,
        batch_size: 128,
        hidden_width: 32,
        hidden_layers: 2,
        sampler_steps: 8,
        ..GenConfig::default()
    }
}

#[test]
fn clean_fixtures_round_trip_losslessly() {
    for recipe in RECIPES {
        let f = generate_fixture(&FixtureSpec::new(recipe, 1500, 4)).unwrap();
        let (validated, report) = prune(&f.truth, &f.table, 0.9).unwrap();
        assert_eq!(report.n_validated, f.truth.edges.len(), "{recipe}");
        assert_eq!(report.hallucination_rate, 0.0);
        let plan = build_plan(&validated, &f.table).unwrap();
        let roundtrip = verify_roundtrip(&f.table, &plan).unwrap();
        assert!(roundtrip.pass, "{recipe}: {:?}", roundtrip.per_column);
        assert!(roundtrip.per_column.values().all(|&m| m == 1.0));
    }
}

#[test]
fn retail_keeps_the_in_degree_zero_columns() {
    let f = generate_fixture(&FixtureSpec::new("mini-retail", 500, 0)).unwrap();
    let (validated, _) = prune(&f.truth, &f.table, 0.9).unwrap();
    let plan = build_plan(&validated, &f.table).unwrap();
    // Oracle: columns never targeted by a binary truth edge.
    let targets: BTreeSet<&str> = f.truth.edges.iter().filter(|e| !e.is_unary()).map(|e| e.target.as_str()).collect();
    let expected: Vec<&str> = f.table.names().into_iter().filter(|n| !targets.contains(n)).collect();
    assert_eq!(plan.keep, expected);
    let compressed = compress(&f.table, &plan).unwrap();
    assert!(compressed.table.n_cols() <= 8);
    assert_eq!(compressed.offset_columns, vec!["ship_date__offset".to_string()]);
}

#[test]
fn decompressed_samples_are_consistent_by_construction() {
    for recipe in RECIPES {
        let f = generate_fixture(&FixtureSpec::new(recipe, 800, 2)).unwrap();
        let (validated, _) = prune(&f.truth, &f.table, 0.9).unwrap();
        let plan = build_plan(&validated, &f.table).unwrap();
        let compressed = compress(&f.table, &plan).unwrap();
        let encoder = Encoder::fit(&compressed.table, &compressed.offset_columns).unwrap();
        let model = train(&compressed.table, &encoder, &small_gen()).unwrap();
        let (synth, _) = decompress(&model.sample(600, 9).unwrap(), &plan).unwrap();
        assert_eq!(hcs(&synth, &validated, &f.table).unwrap().unwrap(), 100.0, "{recipe}");
        assert_eq!(mdi(&synth, &validated).unwrap().unwrap(), 100.0, "{recipe}");
        for e in validated.edges.iter().filter(|e| e.kind == EdgeKind::Semantic && !e.is_unary()) {
            assert_eq!(satisfaction(e, &synth).unwrap().rate(), 1.0);
        }
    }
}

#[test]
fn independent_sampling_breaks_the_city_hierarchy() {
    let f = generate_fixture(&FixtureSpec::new("mini-retail", 5000, 8)).unwrap();
    let truth = ValidatedGraph::new(f.truth.clone()).unwrap();
    let synth = independent_sample(&f.table, 5000, 1).unwrap();
    let city_state: tabkg::Graph = tabkg::Graph::new(f.table.names()).unwrap().with_edge(tabkg::Edge::hier("order_city", "order_state", 1.0)).unwrap();
    let got = hcs(&synth, &city_state, &f.table).unwrap().unwrap();
    // Oracle: with city and state drawn independently from their empirical
    // marginals, a row matches with probability Σ_c P(c)·P(state(c)).
    let col = |name: &str| f.table.column(name).unwrap().clone();
    let (city, state) = (col("order_city"), col("order_state"));
    let n = f.table.n_rows() as f64;
    let mut expected = 0.0;
    let cities: BTreeSet<String> = (0..city.len()).map(|r| city.category_at(r).unwrap().to_string()).collect();
    for c in &cities {
        let rows: Vec<usize> = (0..city.len()).filter(|&r| city.category_at(r) == Some(c)).collect();
        let mapped = state.category_at(rows[0]).unwrap();
        let p_state = (0..state.len()).filter(|&r| state.category_at(r) == Some(mapped)).count() as f64 / n;
        expected += rows.len() as f64 / n * p_state;
    }
    assert!((got / 100.0 - expected).abs() < 0.02, "{got} vs {}", 100.0 * expected);
    assert!(hcs(&synth, &truth, &f.table).unwrap().unwrap() < 60.0);
    assert!(mdi(&synth, &truth).unwrap().unwrap() < 80.0);
}

#[test]
fn encoder_round_trips_a_compressed_fixture() {
    let f = generate_fixture(&FixtureSpec::new("mini-retail", 400, 3)).unwrap();
    let (validated, _) = prune(&f.truth, &f.table, 0.9).unwrap();
    let plan = build_plan(&validated, &f.table).unwrap();
    let compressed = compress(&f.table, &plan).unwrap();
    let encoder = Encoder::fit(&compressed.table, &compressed.offset_columns).unwrap();
    let back = encoder.decode(&encoder.encode(&compressed.table).unwrap()).unwrap();
    for (a, b) in compressed.table.columns().iter().zip(back.columns()) {
        for r in 0..a.len() {
            let (x, y) = (a.value(r), b.value(r));
            match (x.as_f64(), y.as_f64()) {
                (Some(p), Some(q)) => assert!((p - q).abs() <= 1e-6 * p.abs().max(1.0), "{}: {p} vs {q}", a.name()),
                _ => assert_eq!(x, y, "{}", a.name()),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn prune_is_monotone_in_theta(seed in 0u64..1000, noise in 0.0f64..0.3, a in 0.5f64..1.0, b in 0.5f64..1.0) {
        let f = generate_fixture(&FixtureSpec::new("mini-procurement", 300, seed).with_noise(noise)).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let keys = |theta| -> BTreeSet<_> {
            let (g, _) = prune(&f.truth, &f.table, theta).unwrap();
            g.edges.iter().map(|e| e.key()).collect()
        };
        prop_assert!(keys(hi).is_subset(&keys(lo)));
    }
}
