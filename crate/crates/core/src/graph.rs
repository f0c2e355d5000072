//! Column relationship graph: typed, directed edges over the columns of one
//! table.
//!
//! Domain-set rules constrain a single column and are stored as *unary*
//! edges (`source == target`). Unary edges never count as incoming edges,
//! never form cycles and do not affect the topological order.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Condition, Expr};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge {0} -> {1} ({2:?})")]
    DuplicateEdge(String, String, EdgeKind),
    #[error("invalid edge {from} -> {target}: {reason}")]
    InvalidEdge {
        from: String,
        target: String,
        reason: String,
    },
    #[error("graph contains a cycle through `{0}`")]
    Cycle(String),
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Hierarchical,
    Mathematical,
    Temporal,
    Semantic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalRelation {
    /// Strict `<`.
    Before,
    /// `<=`.
    BeforeOrEqual,
}

impl TemporalRelation {
    pub fn holds(self, source: i64, target: i64) -> bool {
        match self {
            TemporalRelation::Before => source < target,
            TemporalRelation::BeforeOrEqual => source <= target,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            TemporalRelation::Before => "<",
            TemporalRelation::BeforeOrEqual => "<=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Rule {
    /// Many-to-one mapping; the map itself is fitted from data.
    HierMap,
    Formula {
        expr: Expr,
    },
    TemporalOrder {
        relation: TemporalRelation,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset_target: Option<String>,
    },
    DomainSet {
        allowed: BTreeSet<String>,
    },
    ConditionImplies {
        condition: Condition,
        value: String,
    },
}

impl Rule {
    pub fn kind(&self) -> EdgeKind {
        match self {
            Rule::HierMap => EdgeKind::Hierarchical,
            Rule::Formula { .. } => EdgeKind::Mathematical,
            Rule::TemporalOrder { .. } => EdgeKind::Temporal,
            Rule::DomainSet { .. } | Rule::ConditionImplies { .. } => EdgeKind::Semantic,
        }
    }

    /// Stable textual form, used for deterministic tie-breaks.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("rule serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
    pub confidence: f64,
    #[serde(default)]
    pub votes: u32,
    #[serde(default)]
    pub score: Option<f64>,
    pub rule: Rule,
}

/// Identity of an edge for deduplication, voting and discovery scoring.
pub type EdgeKey = (String, String, EdgeKind);

impl Edge {
    pub fn new(source: impl Into<String>, target: impl Into<String>, rule: Rule, confidence: f64) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            kind: rule.kind(),
            confidence,
            votes: 0,
            score: None,
            rule,
        }
    }

    pub fn hier(source: &str, target: &str, confidence: f64) -> Self {
        Edge::new(source, target, Rule::HierMap, confidence)
    }

    pub fn key(&self) -> EdgeKey {
        (self.source.clone(), self.target.clone(), self.kind)
    }

    pub fn is_unary(&self) -> bool {
        self.source == self.target
    }

    /// Weight used when breaking cycles: validated score if present,
    /// otherwise proposer confidence.
    pub fn strength(&self) -> f64 {
        self.score.unwrap_or(self.confidence)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl Graph {
    pub fn new<S: Into<String>>(nodes: impl IntoIterator<Item = S>) -> Result<Self, GraphError> {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(n.as_str()) {
                return Err(GraphError::DuplicateNode(n.clone()));
            }
        }
        Ok(Self {
            nodes,
            edges: Vec::new(),
        })
    }

    /// Builds a graph from serialized parts, rejecting anything `insert_edge`
    /// would reject and also rejecting duplicate edge keys.
    pub fn from_parts(nodes: Vec<String>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut g = Graph::new(nodes)?;
        let mut keys = HashSet::new();
        for e in edges {
            g.check_edge(&e)?;
            if !keys.insert(e.key()) {
                return Err(GraphError::DuplicateEdge(e.source, e.target, e.kind));
            }
            g.edges.push(e);
        }
        Ok(g)
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    fn check_edge(&self, e: &Edge) -> Result<(), GraphError> {
        let invalid = |reason: &str| GraphError::InvalidEdge {
            from: e.source.clone(),
            target: e.target.clone(),
            reason: reason.to_string(),
        };
        for n in [&e.source, &e.target] {
            if !self.has_node(n) {
                return Err(GraphError::UnknownColumn(n.clone()));
            }
        }
        if e.kind != e.rule.kind() {
            return Err(invalid("edge kind does not match its rule"));
        }
        if !(0.0..=1.0).contains(&e.confidence) {
            return Err(invalid("confidence outside [0, 1]"));
        }
        if e.score.is_some_and(|s| !(0.0..=1.0).contains(&s)) {
            return Err(invalid("score outside [0, 1]"));
        }
        let unary_rule = matches!(e.rule, Rule::DomainSet { .. });
        if e.is_unary() != unary_rule {
            return Err(invalid(if unary_rule {
                "domain-set rules constrain a single column"
            } else {
                "source and target must differ"
            }));
        }
        match &e.rule {
            Rule::Formula { expr } => {
                let vars = expr.vars();
                if let Some(v) = vars.iter().find(|v| !self.has_node(v)) {
                    return Err(GraphError::UnknownColumn(v.clone()));
                }
                if !vars.contains(&e.source) || vars.contains(&e.target) {
                    return Err(invalid("formula must use the source and not the target"));
                }
            }
            Rule::ConditionImplies { condition, .. } => {
                let vars = condition.vars();
                if let Some(v) = vars.iter().find(|v| !self.has_node(v)) {
                    return Err(GraphError::UnknownColumn(v.clone()));
                }
                if !vars.contains(&e.source) {
                    return Err(invalid("condition must reference the source"));
                }
            }
            Rule::DomainSet { allowed } if allowed.is_empty() => {
                return Err(invalid("empty domain set"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Adds an edge. A duplicate `(source, target, kind)` keeps whichever
    /// edge has the higher confidence.
    pub fn insert_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        self.check_edge(&edge)?;
        let key = edge.key();
        match self.edges.iter_mut().find(|e| e.key() == key) {
            Some(existing) if edge.confidence > existing.confidence => *existing = edge,
            Some(_) => {}
            None => self.edges.push(edge),
        }
        Ok(())
    }

    pub fn with_edge(mut self, edge: Edge) -> Result<Self, GraphError> {
        self.insert_edge(edge)?;
        Ok(self)
    }

    /// Edges that constrain two distinct columns.
    pub fn binary_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| !e.is_unary())
    }

    pub fn incoming<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.binary_edges().filter(move |e| e.target == node)
    }

    fn successors(&self) -> HashMap<&str, Vec<&str>> {
        let mut out: HashMap<&str, Vec<&str>> = HashMap::new();
        for e in self.binary_edges() {
            out.entry(e.source.as_str()).or_default().push(e.target.as_str());
        }
        out
    }

    fn reaches(succ: &HashMap<&str, Vec<&str>>, from: &str, to: &str) -> bool {
        let mut stack = vec![from];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                if let Some(next) = succ.get(n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        false
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Breaks every cycle by repeatedly removing the weakest edge that lies
    /// on a cycle (lowest score, else confidence; ties to the
    /// lexicographically smallest `(source, target, kind)`).
    /// Returns the acyclic graph and the removed edges in removal order.
    pub fn to_dag(&self) -> (Graph, Vec<Edge>) {
        let mut g = self.clone();
        let mut removed = Vec::new();
        loop {
            let succ = g.successors();
            let victim = g
                .edges
                .iter()
                .enumerate()
                .filter(|(_, e)| !e.is_unary() && Self::reaches(&succ, &e.target, &e.source))
                .min_by(|(_, a), (_, b)| {
                    a.strength()
                        .total_cmp(&b.strength())
                        .then_with(|| (&a.source, &a.target, a.kind).cmp(&(&b.source, &b.target, b.kind)))
                })
                .map(|(i, _)| i);
            match victim {
                Some(i) => removed.push(g.edges.remove(i)),
                None => return (g, removed),
            }
        }
    }

    /// Columns with no incoming (binary) edge.
    pub fn independent_set(&self) -> BTreeSet<String> {
        let targets: HashSet<&str> = self.binary_edges().map(|e| e.target.as_str()).collect();
        self.nodes
            .iter()
            .filter(|n| !targets.contains(n.as_str()))
            .cloned()
            .collect()
    }

    /// Kahn's algorithm, always taking the lexicographically smallest ready
    /// node.
    pub fn topological_order(&self) -> Result<Vec<String>, GraphError> {
        let mut indegree: HashMap<&str, usize> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        // Parallel edges of different kinds count once.
        let pairs: BTreeSet<(&str, &str)> = self
            .binary_edges()
            .map(|e| (e.source.as_str(), e.target.as_str()))
            .collect();
        let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
        for &(s, t) in &pairs {
            *indegree.get_mut(t).expect("edge endpoints are nodes") += 1;
            succ.entry(s).or_default().push(t);
        }
        let mut ready: BinaryHeap<Reverse<&str>> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&n, _)| Reverse(n))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(n)) = ready.pop() {
            order.push(n.to_string());
            for &t in succ.get(n).map(Vec::as_slice).unwrap_or_default() {
                let d = indegree.get_mut(t).expect("node");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(t));
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = self
                .nodes
                .iter()
                .filter(|n| indegree[n.as_str()] > 0)
                .min()
                .cloned()
                .unwrap_or_default();
            return Err(GraphError::Cycle(stuck));
        }
        Ok(order)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Graph, GraphError> {
        let raw: Graph = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        Graph::from_parts(raw.nodes, raw.edges)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Graph, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Graph::from_json(&text)
    }
}

/// Converts serde_json's line/column into a byte offset into `text`.
pub(crate) fn json_error(text: &str, e: &serde_json::Error) -> GraphError {
    let offset = if e.line() == 0 {
        0
    } else {
        text.split_inclusive('\n')
            .take(e.line() - 1)
            .map(str::len)
            .sum::<usize>()
            + e.column().saturating_sub(1)
    };
    GraphError::Parse {
        offset,
        msg: e.to_string(),
    }
}

/// A graph whose edges have passed validation and that contains no cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedGraph(Graph);

impl ValidatedGraph {
    pub fn new(graph: Graph) -> Result<Self, GraphError> {
        graph.topological_order()?;
        Ok(Self(graph))
    }

    pub fn into_inner(self) -> Graph {
        self.0
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        Self::new(Graph::load(path)?)
    }
}

impl Deref for ValidatedGraph {
    type Target = Graph;

    fn deref(&self) -> &Graph {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(nodes: &[&str], edges: &[(&str, &str, f64)]) -> Graph {
        let mut g = Graph::new(nodes.iter().copied()).unwrap();
        for &(s, t, score) in edges {
            let mut e = Edge::hier(s, t, 1.0);
            e.score = Some(score);
            g.insert_edge(e).unwrap();
        }
        g
    }

    fn pairs(g: &Graph) -> Vec<(String, String)> {
        g.edges.iter().map(|e| (e.source.clone(), e.target.clone())).collect()
    }

    /// Exhaustive oracle: the acyclic edge subset with maximal total score.
    fn best_acyclic_subset(g: &Graph) -> Vec<(String, String)> {
        let n = g.edges.len();
        assert!(n <= 6);
        let mut best: Option<(f64, u32)> = None;
        for mask in 0u32..(1 << n) {
            let mut sub = Graph::new(g.nodes.clone()).unwrap();
            let mut total = 0.0;
            for (i, e) in g.edges.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    sub.edges.push(e.clone());
                    total += e.strength();
                }
            }
            if sub.is_acyclic() && best.is_none_or(|(b, _)| total > b) {
                best = Some((total, mask));
            }
        }
        let mask = best.unwrap().1;
        g.edges
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, e)| (e.source.clone(), e.target.clone()))
            .collect()
    }

    #[test]
    fn insert_and_dedup() {
        let mut g = Graph::new(["city", "country"]).unwrap();
        g.insert_edge(Edge::hier("city", "country", 0.8)).unwrap();
        assert_eq!(g.len(), 1);
        g.insert_edge(Edge::hier("city", "country", 0.9)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edges[0].confidence, 0.9);
        g.insert_edge(Edge::hier("city", "country", 0.5)).unwrap();
        assert_eq!(g.edges[0].confidence, 0.9);
        assert!(matches!(
            g.insert_edge(Edge::hier("city", "foo", 0.9)),
            Err(GraphError::UnknownColumn(c)) if c == "foo"
        ));
    }

    #[test]
    fn rejects_malformed_edges() {
        let mut g = Graph::new(["a", "b"]).unwrap();
        assert!(g.insert_edge(Edge::hier("a", "a", 1.0)).is_err());
        assert!(g.insert_edge(Edge::hier("a", "b", 1.5)).is_err());
        let mut wrong_kind = Edge::hier("a", "b", 1.0);
        wrong_kind.kind = EdgeKind::Temporal;
        assert!(g.insert_edge(wrong_kind).is_err());
        let empty = Rule::DomainSet {
            allowed: BTreeSet::new(),
        };
        assert!(g.insert_edge(Edge::new("a", "a", empty, 1.0)).is_err());
        let formula = Rule::Formula {
            expr: Expr::parse("a * c").unwrap(),
        };
        assert!(matches!(
            g.insert_edge(Edge::new("a", "b", formula, 1.0)),
            Err(GraphError::UnknownColumn(c)) if c == "c"
        ));
    }

    #[test]
    fn two_cycle_drops_weaker_edge() {
        let g = graph(&["A", "B"], &[("A", "B", 1.0), ("B", "A", 0.92)]);
        let (dag, removed) = g.to_dag();
        assert_eq!(pairs(&dag), vec![("A".to_string(), "B".to_string())]);
        assert_eq!(removed.len(), 1);
        assert_eq!(pairs(&dag), best_acyclic_subset(&g));
    }

    #[test]
    fn greedy_matches_exhaustive_oracle_on_small_cases() {
        let cases = [
            graph(&["A", "B", "C"], &[("A", "B", 0.95), ("B", "C", 0.99), ("C", "A", 0.91)]),
            graph(
                &["A", "B", "C", "D"],
                &[("A", "B", 1.0), ("B", "C", 0.97), ("C", "D", 1.0), ("D", "B", 0.93), ("A", "D", 0.99)],
            ),
            graph(
                &["A", "B", "C"],
                &[("A", "B", 0.9), ("B", "A", 0.95), ("B", "C", 1.0), ("C", "B", 0.91)],
            ),
        ];
        for g in cases {
            let (dag, _) = g.to_dag();
            assert!(dag.is_acyclic());
            let mut got = pairs(&dag);
            let mut want = best_acyclic_subset(&g);
            got.sort();
            want.sort();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn acyclic_chain_unchanged() {
        let g = graph(&["A", "B", "C"], &[("A", "B", 0.9), ("B", "C", 0.95)]);
        let (dag, removed) = g.to_dag();
        assert_eq!(dag, g);
        assert!(removed.is_empty());
    }

    #[test]
    fn equal_scores_remove_smallest_pair() {
        let g = graph(&["A", "B", "C"], &[("A", "B", 1.0), ("B", "C", 1.0), ("C", "A", 1.0)]);
        let (dag, removed) = g.to_dag();
        assert_eq!(removed.len(), 1);
        assert_eq!((removed[0].source.as_str(), removed[0].target.as_str()), ("A", "B"));
        assert!(dag.is_acyclic());
    }

    #[test]
    fn independent_sets() {
        let chain = graph(
            &["city", "state", "country", "other"],
            &[("city", "state", 1.0), ("state", "country", 1.0)],
        );
        let keep: Vec<_> = chain.independent_set().into_iter().collect();
        assert_eq!(keep, vec!["city", "other"]);

        let edgeless = graph(&["x", "y", "z"], &[]);
        assert_eq!(edgeless.independent_set().len(), 3);

        let diamond = graph(
            &["A", "B", "C", "D"],
            &[("A", "B", 1.0), ("A", "C", 1.0), ("B", "D", 1.0), ("C", "D", 1.0)],
        );
        assert_eq!(diamond.independent_set().into_iter().collect::<Vec<_>>(), vec!["A"]);
    }

    #[test]
    fn unary_edges_do_not_make_columns_dependent() {
        let mut g = Graph::new(["mode"]).unwrap();
        let rule = Rule::DomainSet {
            allowed: ["Same Day".to_string()].into(),
        };
        g.insert_edge(Edge::new("mode", "mode", rule, 1.0)).unwrap();
        assert_eq!(g.independent_set().len(), 1);
        assert_eq!(g.topological_order().unwrap(), vec!["mode"]);
        assert!(g.to_dag().1.is_empty());
    }

    #[test]
    fn topological_orders() {
        let g = graph(&["C", "B", "A"], &[("A", "B", 1.0), ("A", "C", 1.0)]);
        assert_eq!(g.topological_order().unwrap(), vec!["A", "B", "C"]);

        let chain = graph(&["d", "c", "b", "a"], &[("a", "b", 1.0), ("b", "c", 1.0), ("c", "d", 1.0)]);
        assert_eq!(chain.topological_order().unwrap(), vec!["a", "b", "c", "d"]);

        let diamond = graph(
            &["D", "C", "B", "A"],
            &[("A", "B", 1.0), ("A", "C", 1.0), ("B", "D", 1.0), ("C", "D", 1.0)],
        );
        let order = diamond.topological_order().unwrap();
        assert_eq!(order, vec!["A", "B", "C", "D"]);
        // Independent check: every edge's source precedes its target.
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        for e in &diamond.edges {
            assert!(pos[e.source.as_str()] < pos[e.target.as_str()]);
        }

        let cyclic = graph(&["A", "B"], &[("A", "B", 1.0), ("B", "A", 1.0)]);
        assert!(matches!(cyclic.topological_order(), Err(GraphError::Cycle(_))));
        assert!(ValidatedGraph::new(cyclic).is_err());
    }

    #[test]
    fn json_round_trip_and_errors() {
        let empty = Graph::new(Vec::<String>::new()).unwrap();
        assert_eq!(Graph::from_json(&empty.to_json()).unwrap(), empty);

        let g = graph(&["A", "B"], &[("A", "B", 0.97)]);
        let text = g.to_json();
        assert_eq!(Graph::from_json(&text).unwrap(), g);

        let cut = &text[..text.len() / 2];
        match Graph::from_json(cut) {
            Err(GraphError::Parse { offset, .. }) => assert!(offset > 0 && offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        let dup = format!(
            "{{\"nodes\":[\"A\",\"B\"],\"edges\":[{e},{e}]}}",
            e = serde_json::to_string(&g.edges[0]).unwrap()
        );
        assert!(matches!(Graph::from_json(&dup), Err(GraphError::DuplicateEdge(..))));
    }

    #[test]
    fn rule_json_shape() {
        let e = Edge::new(
            "order_date",
            "ship_date",
            Rule::TemporalOrder {
                relation: TemporalRelation::Before,
                offset_target: None,
            },
            0.9,
        );
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["kind"], "temporal");
        assert_eq!(v["rule"]["type"], "temporal_order");
        assert_eq!(v["rule"]["relation"], "before");
    }
}
