//! Synthetic "real" tables with known relationships and their ground-truth
//! graphs.
//!
//! Two recipes are built in. `mini-retail` has a city → state → country
//! hierarchy, order amounts tied by formulas, an order/ship date ordering, a
//! shipping-mode domain and a late-delivery flag set by a condition.
//! `mini-procurement` has a supplier → country hierarchy, net/tax/gross
//! amounts and an order → planned → actual delivery date chain.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Condition, Expr};
use crate::graph::{Edge, Graph, GraphError, Rule, TemporalRelation};
use crate::table::{Column, ColumnKind, ColumnMeta, Table, TableError};
use crate::{derive_seed, seeded_rng, Rng};

pub const RECIPES: [&str; 2] = ["mini-retail", "mini-procurement"];

/// 2021-01-01T00:00:00Z.
const EPOCH_2021: i64 = 1_609_459_200;
const DAY: i64 = 86_400;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown fixture recipe `{0}` (known: mini-retail, mini-procurement)")]
    UnknownRecipe(String),
    #[error("violation probability for `{target}` is {rate}; must lie in [0, 0.5]")]
    BadNoise { target: String, rate: f64 },
    #[error("noise override names `{0}`, which is not a dependent column of the recipe")]
    UnknownTarget(String),
    #[error("a fixture needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub recipe: String,
    pub n_rows: usize,
    pub seed: u64,
    /// Violation probability applied to every relationship.
    pub noise: f64,
    /// Per-target violation probabilities, keyed by dependent column.
    pub overrides: BTreeMap<String, f64>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            recipe: "mini-retail".into(),
            n_rows: 5000,
            seed: 0,
            noise: 0.0,
            overrides: BTreeMap::new(),
        }
    }
}

impl FixtureSpec {
    pub fn new(recipe: &str, n_rows: usize, seed: u64) -> Self {
        Self {
            recipe: recipe.into(),
            n_rows,
            seed,
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_override(mut self, target: &str, rate: f64) -> Self {
        self.overrides.insert(target.into(), rate);
        self
    }

    /// Violation probability for the relationships into `target`.
    pub fn rate(&self, target: &str) -> f64 {
        self.overrides.get(target).copied().unwrap_or(self.noise)
    }

    fn check(&self, targets: &[&str]) -> Result<(), FixtureError> {
        if self.n_rows < 2 {
            return Err(FixtureError::TooFewRows(self.n_rows));
        }
        let bad = |rate: f64| !(0.0..=0.5).contains(&rate);
        if bad(self.noise) {
            return Err(FixtureError::BadNoise { target: "*".into(), rate: self.noise });
        }
        for (target, &rate) in &self.overrides {
            if !targets.contains(&target.as_str()) {
                return Err(FixtureError::UnknownTarget(target.clone()));
            }
            if bad(rate) {
                return Err(FixtureError::BadNoise { target: target.clone(), rate });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub table: Table,
    pub truth: Graph,
}

impl Fixture {
    /// Writes `data.csv`, `metadata.json` and `truth.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), FixtureError> {
        std::fs::create_dir_all(dir).map_err(|source| TableError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        crate::table::write_table(&self.table, &dir.join("data.csv"), &dir.join("metadata.json"))?;
        self.truth.save(&dir.join("truth.json"))?;
        Ok(())
    }
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture, FixtureError> {
    let mut rng = seeded_rng(derive_seed(spec.seed, &format!("fixture/{}", spec.recipe)));
    match spec.recipe.as_str() {
        "mini-retail" => {
            spec.check(&RETAIL_TARGETS)?;
            retail(spec, &mut rng)
        }
        "mini-procurement" => {
            spec.check(&PROCUREMENT_TARGETS)?;
            procurement(spec, &mut rng)
        }
        other => Err(FixtureError::UnknownRecipe(other.to_string())),
    }
}

fn meta(name: &str, description: &str, kind: ColumnKind) -> ColumnMeta {
    ColumnMeta::new(name, description, kind)
}

fn cat_column(name: &str, description: &str, values: Vec<String>) -> Column {
    let v: Vec<Option<String>> = values.into_iter().map(Some).collect();
    Column::categorical(meta(name, description, ColumnKind::Categorical), &v)
}

fn num_column(name: &str, description: &str, values: Vec<f64>) -> Column {
    Column::numeric(meta(name, description, ColumnKind::Numeric), values.into_iter().map(Some).collect())
}

fn time_column(name: &str, description: &str, values: Vec<i64>) -> Column {
    Column::timestamp(meta(name, description, ColumnKind::Timestamp), values.into_iter().map(Some).collect())
}

/// Replaces `current` by a different entry of `options`, uniformly.
fn other<T: Clone + PartialEq>(rng: &mut Rng, options: &[T], current: &T) -> T {
    let rest: Vec<&T> = options.iter().filter(|o| *o != current).collect();
    rest[rng.random_range(0..rest.len())].clone()
}

fn weighted(rng: &mut Rng, weights: &[f64]) -> usize {
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn inflate(rng: &mut Rng, x: f64) -> f64 {
    x * (1.0 + rng.random_range(0.1..0.5))
}

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn truth_edge(source: &str, target: &str, rule: Rule, spec: &FixtureSpec) -> Edge {
    let mut e = Edge::new(source, target, rule, 1.0);
    e.score = Some(1.0 - spec.rate(target));
    e
}

fn formula_edges(target: &str, expr: &str, spec: &FixtureSpec) -> Vec<Edge> {
    let expr = Expr::parse(expr).expect("recipe formula parses");
    expr.vars()
        .into_iter()
        .map(|v| truth_edge(&v, target, Rule::Formula { expr: expr.clone() }, spec))
        .collect()
}

fn before(source: &str, target: &str, spec: &FixtureSpec) -> Edge {
    let rule = Rule::TemporalOrder {
        relation: TemporalRelation::Before,
        offset_target: None,
    };
    truth_edge(source, target, rule, spec)
}

fn domain(target: &str, allowed: &[&str], spec: &FixtureSpec) -> Edge {
    let rule = Rule::DomainSet {
        allowed: allowed.iter().map(|s| s.to_string()).collect(),
    };
    truth_edge(target, target, rule, spec)
}

const CITIES: [(&str, usize); 10] = [
    ("Los Angeles", 0),
    ("San Diego", 0),
    ("San Francisco", 0),
    ("Houston", 1),
    ("Dallas", 1),
    ("Toronto", 2),
    ("Ottawa", 2),
    ("Hamilton", 2),
    ("Montreal", 3),
    ("Quebec City", 3),
];
const STATES: [(&str, usize); 4] = [("CA", 0), ("TX", 0), ("ON", 1), ("QC", 1)];
const COUNTRIES: [&str; 2] = ["USA", "Canada"];
const MODES: [(&str, i64, f64); 4] = [
    ("Standard Class", 4, 0.55),
    ("Second Class", 2, 0.20),
    ("First Class", 1, 0.15),
    ("Same Day", 0, 0.10),
];
const RATES: [f64; 6] = [0.02, 0.05, 0.1, 0.15, 0.2, 0.25];
const LATE_RULE: &str = "ship_date - order_date > scheduled_days * 86400";
const RETAIL_TARGETS: [&str; 9] = [
    "order_state",
    "order_country",
    "sales",
    "discount",
    "total",
    "ship_date",
    "shipping_mode",
    "scheduled_days",
    "late_flag",
];

fn retail(spec: &FixtureSpec, rng: &mut Rng) -> Result<Fixture, FixtureError> {
    let n = spec.n_rows;
    let hit = |rng: &mut Rng, target: &str| rng.random::<f64>() < spec.rate(target);
    let state_names: Vec<&str> = STATES.iter().map(|s| s.0).collect();
    let price_dist = LogNormal::new(3.0, 0.6).expect("valid lognormal");
    let delay = Normal::new(0.3, 1.0).expect("valid normal");
    let mode_weights: Vec<f64> = MODES.iter().map(|m| m.2).collect();
    let sched_options: Vec<f64> = MODES.iter().map(|m| m.1 as f64).collect();

    let (mut city, mut state, mut country) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut qty, mut price, mut sales) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut rate, mut discount, mut total) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut order, mut ship) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut mode, mut sched, mut late) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let (c, s_idx) = CITIES[rng.random_range(0..CITIES.len())];
        let mut s = STATES[s_idx].0;
        if hit(rng, "order_state") {
            s = other(rng, &state_names, &s);
        }
        let s_country = STATES.iter().find(|x| x.0 == s).expect("known state").1;
        let mut k = COUNTRIES[s_country];
        if hit(rng, "order_country") {
            k = other(rng, &COUNTRIES, &k);
        }

        let q = f64::from(rng.random_range(1u8..=5));
        let p = cents(price_dist.sample(rng)).max(0.5);
        let mut sa = q * p;
        if hit(rng, "sales") {
            sa = inflate(rng, sa);
        }
        let r = RATES[rng.random_range(0..RATES.len())];
        let mut d = sa * r;
        if hit(rng, "discount") {
            d = inflate(rng, d);
        }
        let mut t = sa - d;
        if hit(rng, "total") {
            t = inflate(rng, t);
        }

        let m = weighted(rng, &mode_weights);
        let mut mode_name = MODES[m].0.to_string();
        if hit(rng, "shipping_mode") {
            mode_name = "Unknown".into();
        }
        let mut sd = MODES[m].1 as f64;
        if hit(rng, "scheduled_days") {
            sd = other(rng, &sched_options, &sd);
        }

        let mut o = EPOCH_2021 + rng.random_range(0..30 * DAY);
        let gap = (sd * DAY as f64 + (delay.sample(rng) * DAY as f64).round()) as i64;
        let mut sh = o + gap.max(3600);
        if hit(rng, "ship_date") {
            std::mem::swap(&mut o, &mut sh);
        }

        // Same arithmetic as the condition's evaluation on a row.
        let cond = sh as f64 - o as f64 > sd * 86400.0;
        let mut flag = cond;
        if cond && hit(rng, "late_flag") {
            flag = false;
        }

        city.push(c.to_string());
        state.push(s.to_string());
        country.push(k.to_string());
        qty.push(q);
        price.push(p);
        sales.push(sa);
        rate.push(r);
        discount.push(d);
        total.push(t);
        order.push(o);
        ship.push(sh);
        mode.push(mode_name);
        sched.push(sd);
        late.push(if flag { "1" } else { "0" }.to_string());
    }

    let table = Table::new(vec![
        cat_column("order_city", "City the order ships to", city),
        cat_column("order_state", "State or province of the order city", state),
        cat_column("order_country", "Country of the order state", country),
        num_column("qty", "Units ordered", qty),
        num_column("price", "Unit price of the product", price),
        num_column("sales", "Gross sales value of the order line: qty times price", sales),
        num_column("discount_rate", "Discount rate applied to the line", rate),
        num_column("discount", "Discount amount: sales times discount_rate", discount),
        num_column("total", "Net amount after discount: sales minus discount", total),
        time_column("order_date", "When the order was placed", order),
        time_column("ship_date", "When the order shipped; after order_date", ship),
        cat_column("shipping_mode", "Shipping service level", mode),
        num_column("scheduled_days", "Days to ship promised by the shipping mode", sched),
        cat_column("late_flag", "1 when shipping took longer than scheduled_days, else 0", late),
    ])?;

    let mut edges = vec![
        truth_edge("order_city", "order_state", Rule::HierMap, spec),
        truth_edge("order_state", "order_country", Rule::HierMap, spec),
        truth_edge("shipping_mode", "scheduled_days", Rule::HierMap, spec),
    ];
    edges.extend(formula_edges("sales", "qty * price", spec));
    edges.extend(formula_edges("discount", "sales * discount_rate", spec));
    edges.extend(formula_edges("total", "sales - discount", spec));
    edges.push(before("order_date", "ship_date", spec));
    edges.push(domain("shipping_mode", &MODES.map(|m| m.0), spec));
    let condition = Condition::parse(LATE_RULE).expect("recipe condition parses");
    for v in condition.vars() {
        let rule = Rule::ConditionImplies {
            condition: condition.clone(),
            value: "1".into(),
        };
        edges.push(truth_edge(&v, "late_flag", rule, spec));
    }
    let names: Vec<String> = table.names().into_iter().map(str::to_string).collect();
    let truth = Graph::from_parts(names, edges)?;
    Ok(Fixture { table, truth })
}

const SUPPLIERS: usize = 12;
const SUPPLIER_COUNTRIES: [&str; 4] = ["DE", "FR", "PL", "IT"];
const STATUSES: [(&str, f64); 4] = [("OPEN", 0.2), ("PARTIAL", 0.15), ("CLOSED", 0.6), ("CANCELED", 0.05)];
const PROCUREMENT_TARGETS: [&str; 7] = [
    "supplier_country",
    "net_amount",
    "tax_amount",
    "gross_amount",
    "planned_delivery_date",
    "actual_delivery_date",
    "po_status",
];

fn procurement(spec: &FixtureSpec, rng: &mut Rng) -> Result<Fixture, FixtureError> {
    let n = spec.n_rows;
    let hit = |rng: &mut Rng, target: &str| rng.random::<f64>() < spec.rate(target);
    let price_dist = LogNormal::new(2.5, 0.8).expect("valid lognormal");
    let lead = Exp::new(1.0 / 10.0).expect("valid rate");
    let slip = Exp::new(1.0 / 2.0).expect("valid rate");
    let status_weights: Vec<f64> = STATUSES.iter().map(|s| s.1).collect();

    let mut cols: [Vec<f64>; 5] = Default::default();
    let (mut supplier, mut country, mut status) = (Vec::new(), Vec::new(), Vec::new());
    let (mut ordered, mut planned, mut actual) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let s = rng.random_range(0..SUPPLIERS);
        let mut k = SUPPLIER_COUNTRIES[s % SUPPLIER_COUNTRIES.len()];
        if hit(rng, "supplier_country") {
            k = other(rng, &SUPPLIER_COUNTRIES, &k);
        }
        let q = f64::from(rng.random_range(1u8..=100));
        let p = cents(price_dist.sample(rng)).max(0.1);
        let mut net = q * p;
        if hit(rng, "net_amount") {
            net = inflate(rng, net);
        }
        let mut tax = net * 0.2;
        if hit(rng, "tax_amount") {
            tax = inflate(rng, tax);
        }
        let mut gross = net + tax;
        if hit(rng, "gross_amount") {
            gross = inflate(rng, gross);
        }

        let mut o = EPOCH_2021 + rng.random_range(0..90 * DAY);
        let mut pl = o + DAY + (lead.sample(rng) * DAY as f64) as i64;
        if hit(rng, "planned_delivery_date") {
            std::mem::swap(&mut o, &mut pl);
        }
        let mut ac = pl + 3600 + (slip.sample(rng) * DAY as f64) as i64;
        if hit(rng, "actual_delivery_date") {
            std::mem::swap(&mut pl, &mut ac);
        }
        let mut st = STATUSES[weighted(rng, &status_weights)].0;
        if hit(rng, "po_status") {
            st = "Unknown";
        }

        supplier.push(format!("SUP-{:02}", s + 1));
        country.push(k.to_string());
        for (col, v) in cols.iter_mut().zip([q, p, net, tax, gross]) {
            col.push(v);
        }
        ordered.push(o);
        planned.push(pl);
        actual.push(ac);
        status.push(st.to_string());
    }
    let [q, p, net, tax, gross] = cols;
    let table = Table::new(vec![
        cat_column("supplier", "Supplier identifier", supplier),
        cat_column("supplier_country", "Country the supplier is based in", country),
        num_column("quantity", "Units on the purchase order line", q),
        num_column("net_price", "Net unit price", p),
        num_column("net_amount", "Line value before tax: quantity times net_price", net),
        num_column("tax_amount", "Tax on the line at 20 percent of net_amount", tax),
        num_column("gross_amount", "Line value including tax", gross),
        time_column("order_date", "When the purchase order was issued", ordered),
        time_column("planned_delivery_date", "Delivery date agreed with the supplier", planned),
        time_column("actual_delivery_date", "When the goods arrived", actual),
        cat_column("po_status", "Purchase order status", status),
    ])?;
    let mut edges = vec![truth_edge("supplier", "supplier_country", Rule::HierMap, spec)];
    edges.extend(formula_edges("net_amount", "quantity * net_price", spec));
    edges.extend(formula_edges("tax_amount", "net_amount * 0.2", spec));
    edges.extend(formula_edges("gross_amount", "net_amount + tax_amount", spec));
    edges.push(before("order_date", "planned_delivery_date", spec));
    edges.push(before("planned_delivery_date", "actual_delivery_date", spec));
    edges.push(domain("po_status", &STATUSES.map(|s| s.0), spec));
    let names: Vec<String> = table.names().into_iter().map(str::to_string).collect();
    let truth = Graph::from_parts(names, edges)?;
    Ok(Fixture { table, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validator::satisfaction;

    #[test]
    fn clean_fixtures_satisfy_every_truth_edge() {
        for recipe in RECIPES {
            let f = generate_fixture(&FixtureSpec::new(recipe, 2000, 1)).unwrap();
            assert!(f.truth.is_acyclic());
            for e in &f.truth.edges {
                let s = satisfaction(e, &f.table).unwrap();
                assert_eq!(s.rate(), 1.0, "{recipe}: {} -> {}", e.source, e.target);
                assert!(s.total > 0);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = FixtureSpec::new("mini-retail", 300, 9);
        let a = generate_fixture(&spec).unwrap().table.to_csv_string();
        let b = generate_fixture(&spec).unwrap().table.to_csv_string();
        assert_eq!(a, b);
        let c = generate_fixture(&FixtureSpec::new("mini-retail", 300, 10)).unwrap().table.to_csv_string();
        assert_ne!(a, c);
    }

    #[test]
    fn temporal_noise_rate_is_binomial() {
        let spec = FixtureSpec::new("mini-retail", 5000, 3).with_override("ship_date", 0.05);
        let f = generate_fixture(&spec).unwrap();
        let e = f.truth.edges.iter().find(|e| e.target == "ship_date").unwrap();
        let rate = satisfaction(e, &f.table).unwrap().rate();
        // 3 standard deviations of a binomial proportion at n = 5000.
        assert!((rate - 0.95).abs() < 3.0 * (0.05f64 * 0.95 / 5000.0).sqrt(), "{rate}");
        assert_eq!(e.score, Some(0.95));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(generate_fixture(&FixtureSpec::new("nope", 10, 0)), Err(FixtureError::UnknownRecipe(_))));
        let spec = FixtureSpec::new("mini-retail", 10, 0).with_noise(0.6);
        assert!(matches!(generate_fixture(&spec), Err(FixtureError::BadNoise { .. })));
        let spec = FixtureSpec::new("mini-retail", 10, 0).with_override("qty", 0.1);
        assert!(matches!(generate_fixture(&spec), Err(FixtureError::UnknownTarget(_))));
    }
}
