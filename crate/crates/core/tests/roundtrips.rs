use std::collections::BTreeSet;

use proptest::prelude::*;
use tabkg::expr::{BinOp, CmpOp};
use tabkg::proposer::{parse_proposal, render_proposal};
use tabkg::{Column, ColumnKind, ColumnMeta, Condition, Edge, Expr, Graph, Rule, TemporalRelation};

const NUMERIC: [&str; 4] = ["qty", "price", "sales", "unit cost"];
const CATEGORICAL: [&str; 3] = ["city", "order state", "mode"];
const STAMPS: [&str; 2] = ["t0", "t1"];

fn metas() -> Vec<ColumnMeta> {
    let mut m: Vec<ColumnMeta> = NUMERIC.iter().map(|n| ColumnMeta::new(*n, "", ColumnKind::Numeric)).collect();
    m.extend(CATEGORICAL.iter().map(|n| ColumnMeta::new(*n, "", ColumnKind::Categorical)));
    m.extend(STAMPS.iter().map(|n| ColumnMeta::new(*n, "", ColumnKind::Timestamp)));
    m
}

fn all_nodes() -> Vec<&'static str> {
    NUMERIC.iter().chain(&CATEGORICAL).chain(&STAMPS).copied().collect()
}

fn arb_expr(vars: &'static [&'static str]) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..4000).prop_map(|k| Expr::Num(f64::from(k) / 4.0)),
        proptest::sample::select(vars).prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (
                proptest::sample::select(&[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][..]),
                inner.clone(),
                inner
            )
                .prop_map(|(op, a, b)| Expr::bin(op, a, b)),
        ]
    })
}

fn arb_cmp() -> impl Strategy<Value = CmpOp> {
    proptest::sample::select(&[CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne][..])
}

/// One relationship, expanded into the edges the grammar produces for it.
fn arb_relationship() -> impl Strategy<Value = Vec<Edge>> {
    let conf = (0u32..=100).prop_map(|k| f64::from(k) / 100.0);
    prop_oneof![
        (proptest::sample::subsequence(&CATEGORICAL[..], 2), conf.clone()).prop_map(|(p, c)| vec![Edge::hier(p[0], p[1], c)]),
        (arb_expr(&NUMERIC[..3]), conf.clone()).prop_filter_map("target must not appear", |(expr, c)| {
            let vars = expr.vars();
            (!vars.is_empty() && !vars.contains("unit cost")).then(|| {
                vars.iter()
                    .map(|v| Edge::new(v.as_str(), "unit cost", Rule::Formula { expr: expr.clone() }, c))
                    .collect()
            })
        }),
        (any::<bool>(), conf.clone()).prop_map(|(strict, c)| {
            let relation = if strict { TemporalRelation::Before } else { TemporalRelation::BeforeOrEqual };
            vec![Edge::new("t0", "t1", Rule::TemporalOrder { relation, offset_target: None }, c)]
        }),
        (proptest::collection::btree_set("[A-Za-z ,\"{}|]{1,8}", 1..4), conf.clone()).prop_map(|(allowed, c)| {
            vec![Edge::new("mode", "mode", Rule::DomainSet { allowed }, c)]
        }),
        (arb_expr(&NUMERIC[..2]), arb_cmp(), arb_expr(&NUMERIC[2..3]), "[a-z0-9 ]{1,6}", conf).prop_filter_map(
            "condition needs a column",
            |(lhs, op, rhs, value, c)| {
                let condition = Condition { lhs, op, rhs };
                let vars = condition.vars();
                (!vars.is_empty()).then(|| {
                    vars.iter()
                        .map(|v| {
                            let rule = Rule::ConditionImplies {
                                condition: condition.clone(),
                                value: value.clone(),
                            };
                            Edge::new(v.as_str(), "city", rule, c)
                        })
                        .collect()
                })
            }
        ),
    ]
}

fn fingerprint(edges: &[Edge]) -> BTreeSet<(String, String, String, u64)> {
    edges
        .iter()
        .map(|e| (e.source.clone(), e.target.clone(), e.rule.canonical(), e.confidence.to_bits()))
        .collect()
}

proptest! {
    #[test]
    fn expr_display_parses_back(e in arb_expr(&NUMERIC)) {
        let text = e.to_string();
        prop_assert_eq!(Expr::parse(&text).unwrap(), e);
    }

    #[test]
    fn condition_display_parses_back(lhs in arb_expr(&NUMERIC), op in arb_cmp(), rhs in arb_expr(&NUMERIC)) {
        let c = Condition { lhs, op, rhs };
        prop_assert_eq!(Condition::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn rendered_proposals_parse_back(rels in proptest::collection::vec(arb_relationship(), 0..8)) {
        // A grouped rule is written once per target, with its first confidence.
        let mut seen = BTreeSet::new();
        let edges: Vec<Edge> = rels
            .into_iter()
            .filter(|r| match &r[0].rule {
                Rule::Formula { .. } | Rule::ConditionImplies { .. } => seen.insert((r[0].target.clone(), r[0].rule.canonical())),
                _ => true,
            })
            .flatten()
            .collect();
        let parsed = parse_proposal(&render_proposal(&edges), &metas());
        prop_assert_eq!(parsed.dropped, 0);
        prop_assert_eq!(fingerprint(&parsed.edges), fingerprint(&edges));
    }

    #[test]
    fn graph_json_round_trip(rels in proptest::collection::vec(arb_relationship(), 0..8)) {
        let mut g = Graph::new(all_nodes()).unwrap();
        for e in rels.into_iter().flatten() {
            g.insert_edge(e).unwrap();
        }
        prop_assert_eq!(Graph::from_json(&g.to_json()).unwrap(), g);
    }
}

#[test]
fn thirty_six_edge_graph_survives_save_and_load() {
    let nodes: Vec<String> = (0..12).map(|i| format!("c{i}")).collect();
    let mut g = Graph::new(nodes.clone()).unwrap();
    for i in 0..12 {
        for j in 1..=3 {
            let (s, t) = (&nodes[i], &nodes[(i + j) % 12]);
            g.insert_edge(Edge::hier(s, t, (i * 3 + j) as f64 / 40.0)).unwrap();
        }
    }
    assert_eq!(g.edges.len(), 36);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    g.save(&path).unwrap();
    assert_eq!(Graph::load(&path).unwrap(), g);
}

#[test]
fn truncated_json_reports_an_offset() {
    let g = Graph::new(["a", "b"]).unwrap().with_edge(Edge::hier("a", "b", 0.5)).unwrap();
    let text = g.to_json();
    let err = Graph::from_json(&text[..text.len() / 2]).unwrap_err();
    assert!(err.to_string().contains("at byte"), "{err}");
}

#[test]
fn columns_from_values_keep_kinds() {
    let meta = ColumnMeta::new("x", "", ColumnKind::Numeric);
    let c = Column::from_values(meta, &[tabkg::Value::Number(1.5), tabkg::Value::Missing]).unwrap();
    assert_eq!(c.f64_at(0), Some(1.5));
    assert!(c.is_missing(1));
}
