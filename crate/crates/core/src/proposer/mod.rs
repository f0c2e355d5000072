//! Relationship discovery: prompt construction, provider queries, proposal
//! parsing and majority voting across an ensemble.

mod grammar;
mod providers;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Edge, EdgeKind, Graph, GraphError, Rule};
use crate::table::{metadata_of, ColumnMeta};

pub use grammar::{parse_proposal, render_proposal, ParsedProposal};
pub use providers::{
    build_providers, FailingStub, HttpProvider, NoisyStub, PerfectStub, Provider, ProviderError, ProviderSpec, SilentStub,
};

#[derive(Debug, Error)]
pub enum ProposeError {
    #[error("need at least 2 columns to look for relationships, got {0}")]
    TooFewColumns(usize),
    #[error("no candidate graphs to vote on")]
    NoGraphs,
    #[error("vote threshold {threshold} outside [1, {k}]")]
    BadThreshold { threshold: usize, k: usize },
    #[error("candidate graphs disagree on the column set")]
    NodeMismatch,
    #[error("every provider failed: {0}")]
    AllFailed(String),
    #[error("ensemble needs at least one provider and one temperature")]
    EmptyEnsemble,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const INSTRUCTIONS: &str = "\
You are given the columns of a table, one per line as `name: description`.
List every operational relationship between columns, one per line, using
exactly these forms (confidence in [0, 1] after the bar):

HIER <source> -> <target> | <confidence>
MATH <target> = <arithmetic over columns, + - * /> | <confidence>
TEMP <earlier> < <later> | <confidence>      (use <= when equality is allowed)
SEM <column> IN {value1, value2, ...} | <confidence>
SEM <target> = <value> IF <expression> <comparison> <expression> | <confidence>

HIER means each source value determines one target value. Write column names
that contain spaces or symbols in backticks. Output nothing else.

Columns:
";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub text: String,
    /// SHA-256 of the metadata the prompt was built from.
    pub schema_hash: String,
}

pub fn serialize_prompt(metas: &[ColumnMeta]) -> Result<Prompt, ProposeError> {
    if metas.len() < 2 {
        return Err(ProposeError::TooFewColumns(metas.len()));
    }
    let mut text = String::from(INSTRUCTIONS);
    for m in metas {
        text.push_str(&m.name);
        text.push_str(": ");
        text.push_str(&m.description);
        text.push('\n');
    }
    let meta_json = serde_json::to_string(&metadata_of(metas)).expect("metadata serializes");
    let schema_hash = hex::encode(Sha256::digest(meta_json.as_bytes()));
    Ok(Prompt { text, schema_hash })
}

/// Outcome of one provider query.
#[derive(Debug, Clone, Serialize)]
pub struct ProposalRun {
    pub provider: String,
    pub temperature: f64,
    pub graph: Option<Graph>,
    pub dropped_lines: usize,
    pub error: Option<String>,
    #[serde(skip)]
    pub raw: String,
}

impl ProposalRun {
    pub fn failed(&self) -> bool {
        self.graph.is_none()
    }
}

/// Queries one provider and builds its candidate graph. Transport failures
/// are recorded on the run rather than returned.
pub fn propose(provider: &dyn Provider, prompt: &Prompt, temperature: f64, metas: &[ColumnMeta]) -> ProposalRun {
    let mut run = ProposalRun {
        provider: provider.id().to_string(),
        temperature,
        graph: None,
        dropped_lines: 0,
        error: None,
        raw: String::new(),
    };
    match provider.complete(prompt, temperature) {
        Ok(raw) => {
            let parsed = parse_proposal(&raw, metas);
            let mut g = Graph::new(metas.iter().map(|m| m.name.clone())).expect("table column names are unique");
            let mut dropped = parsed.dropped;
            for e in parsed.edges {
                if g.insert_edge(e).is_err() {
                    dropped += 1;
                }
            }
            run.graph = Some(g);
            run.dropped_lines = dropped;
            run.raw = raw;
        }
        Err(e) => run.error = Some(e.to_string()),
    }
    run
}

/// `⌈k/2⌉`.
pub fn default_threshold(k: usize) -> usize {
    k.div_ceil(2)
}

type VoteKey = (String, String, EdgeKind, Option<String>);

fn vote_key(e: &Edge) -> VoteKey {
    let formula = match &e.rule {
        Rule::Formula { expr } => Some(expr.to_string()),
        _ => None,
    };
    (e.source.clone(), e.target.clone(), e.kind, formula)
}

/// Keeps every edge proposed by at least `threshold` graphs. Mathematical
/// edges only match when their formulas are structurally equal. The result
/// is independent of the order of `graphs`.
pub fn majority_vote(graphs: &[Graph], threshold: usize) -> Result<Graph, ProposeError> {
    let first = graphs.first().ok_or(ProposeError::NoGraphs)?;
    if threshold == 0 || threshold > graphs.len() {
        return Err(ProposeError::BadThreshold {
            threshold,
            k: graphs.len(),
        });
    }
    let nodes: std::collections::BTreeSet<&String> = first.nodes.iter().collect();
    if graphs
        .iter()
        .any(|g| g.nodes.len() != nodes.len() || !g.nodes.iter().all(|n| nodes.contains(n)))
    {
        return Err(ProposeError::NodeMismatch);
    }

    let mut tally: BTreeMap<VoteKey, Vec<&Edge>> = BTreeMap::new();
    for g in graphs {
        let mut counted = std::collections::HashSet::new();
        for e in &g.edges {
            let key = vote_key(e);
            if counted.insert(key.clone()) {
                tally.entry(key).or_default().push(e);
            }
        }
    }

    let mut winners: BTreeMap<(String, String, EdgeKind), Edge> = BTreeMap::new();
    for (_, proposals) in tally {
        if proposals.len() < threshold {
            continue;
        }
        let mut confs: Vec<f64> = proposals.iter().map(|e| e.confidence).collect();
        confs.sort_by(f64::total_cmp);
        let mean = (confs.iter().sum::<f64>() / confs.len() as f64).clamp(0.0, 1.0);
        let best = proposals
            .iter()
            .min_by(|a, b| {
                b.confidence
                    .total_cmp(&a.confidence)
                    .then_with(|| a.rule.canonical().cmp(&b.rule.canonical()))
            })
            .expect("nonempty");
        let edge = Edge {
            confidence: mean,
            votes: proposals.len() as u32,
            score: None,
            ..(*best).clone()
        };
        let triple = edge.key();
        match winners.get(&triple) {
            Some(prev) if !outranks(&edge, prev) => {}
            _ => {
                winners.insert(triple, edge);
            }
        }
    }

    let mut out = Graph::new(first.nodes.clone())?;
    out.edges = winners.into_values().collect();
    Ok(out)
}

/// Resolves two retained edges on the same `(source, target, kind)`.
fn outranks(a: &Edge, b: &Edge) -> bool {
    (a.confidence, a.votes) > (b.confidence, b.votes)
        || ((a.confidence, a.votes) == (b.confidence, b.votes) && a.rule.canonical() < b.rule.canonical())
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleMode {
    /// Every provider queried once at the given temperature.
    CrossModel { temperature: f64 },
    /// Every provider queried once per temperature.
    SameModelTemperatures(Vec<f64>),
}

pub struct EnsembleConfig {
    pub providers: Vec<Box<dyn Provider>>,
    pub mode: EnsembleMode,
    /// Absolute threshold; `None` means `⌈K'/2⌉` over successful queries.
    pub vote_threshold: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleOutcome {
    pub prompt_hash: String,
    pub runs: Vec<ProposalRun>,
    /// Successful queries.
    pub k: usize,
    pub threshold: usize,
    pub candidate: Graph,
}

/// Queries every provider (concurrently), votes over the surviving graphs
/// and, if `log_dir` is given, writes the prompt and each raw response there.
pub fn run_ensemble(
    config: &EnsembleConfig,
    metas: &[ColumnMeta],
    log_dir: Option<&Path>,
) -> Result<EnsembleOutcome, ProposeError> {
    let prompt = serialize_prompt(metas)?;
    let temps = match &config.mode {
        EnsembleMode::CrossModel { temperature } => vec![*temperature],
        EnsembleMode::SameModelTemperatures(t) => t.clone(),
    };
    if config.providers.is_empty() || temps.is_empty() {
        return Err(ProposeError::EmptyEnsemble);
    }
    let jobs: Vec<(&dyn Provider, f64)> = config
        .providers
        .iter()
        .flat_map(|p| temps.iter().map(move |&t| (p.as_ref(), t)))
        .collect();

    let mut runs: Vec<ProposalRun> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(p, t)| {
                let prompt = &prompt;
                s.spawn(move || propose(p, prompt, t, metas))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("provider thread panicked")).collect()
    });
    runs.sort_by(|a, b| {
        a.provider
            .cmp(&b.provider)
            .then_with(|| a.temperature.total_cmp(&b.temperature))
    });

    if let Some(dir) = log_dir {
        write_transcripts(dir, &prompt, &runs)?;
    }

    let graphs: Vec<Graph> = runs.iter().filter_map(|r| r.graph.clone()).collect();
    if graphs.is_empty() {
        let errors: Vec<String> = runs
            .iter()
            .map(|r| format!("{}: {}", r.provider, r.error.as_deref().unwrap_or("?")))
            .collect();
        return Err(ProposeError::AllFailed(errors.join("; ")));
    }
    let k = graphs.len();
    let threshold = config.vote_threshold.unwrap_or_else(|| default_threshold(k));
    let candidate = majority_vote(&graphs, threshold)?;
    Ok(EnsembleOutcome {
        prompt_hash: prompt.schema_hash,
        runs,
        k,
        threshold,
        candidate,
    })
}

fn write_transcripts(dir: &Path, prompt: &Prompt, runs: &[ProposalRun]) -> Result<(), ProposeError> {
    let write = |name: String, text: &str| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| ProposeError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    std::fs::create_dir_all(dir).map_err(|source| ProposeError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write("prompt.txt".into(), &prompt.text)?;
    for (i, r) in runs.iter().enumerate() {
        let slug: String = r
            .provider
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let body = match &r.error {
            Some(e) => format!("ERROR: {e}\n"),
            None => r.raw.clone(),
        };
        write(format!("response_{i:02}_{slug}_t{}.txt", r.temperature), &body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ColumnKind;

    fn metas() -> Vec<ColumnMeta> {
        vec![
            ColumnMeta::new("sales", "total sale value", ColumnKind::Numeric),
            ColumnMeta::new("qty", "units ordered", ColumnKind::Numeric),
            ColumnMeta::new("price", "", ColumnKind::Numeric),
        ]
    }

    fn graph_with(edges: &[(&str, &str, f64)]) -> Graph {
        let mut g = Graph::new(["a", "b", "c"]).unwrap();
        for &(s, t, c) in edges {
            g.insert_edge(Edge::hier(s, t, c)).unwrap();
        }
        g
    }

    #[test]
    fn prompt_lists_columns() {
        let p = serialize_prompt(&metas()).unwrap();
        assert!(p.text.contains("\nsales: total sale value\n"));
        assert!(p.text.contains("\nqty: units ordered\n"));
        assert!(p.text.contains("\nprice: \n"));
        assert_eq!(p.schema_hash.len(), 64);
        assert!(matches!(
            serialize_prompt(&metas()[..1]),
            Err(ProposeError::TooFewColumns(1))
        ));
    }

    #[test]
    fn threshold_is_half_rounded_up() {
        assert_eq!(default_threshold(1), 1);
        assert_eq!(default_threshold(3), 2);
        assert_eq!(default_threshold(4), 2);
        assert_eq!(default_threshold(5), 3);
    }

    #[test]
    fn vote_keeps_majority_edges() {
        let gs = [
            graph_with(&[("a", "b", 1.0), ("b", "c", 1.0)]),
            graph_with(&[("a", "b", 0.8)]),
            graph_with(&[]),
        ];
        let out = majority_vote(&gs, 2).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.edges[0].votes, 2);
        assert!((out.edges[0].confidence - 0.9).abs() < 1e-12);
    }

    #[test]
    fn vote_mean_confidence_over_five() {
        let gs: Vec<Graph> = [0.8, 0.9, 1.0, 0.9, 0.9]
            .iter()
            .map(|&c| graph_with(&[("a", "b", c)]))
            .collect();
        let out = majority_vote(&gs, 3).unwrap();
        assert_eq!(out.edges[0].votes, 5);
        assert!((out.edges[0].confidence - 0.9).abs() < 1e-12);
    }

    #[test]
    fn vote_errors() {
        assert!(matches!(majority_vote(&[], 1), Err(ProposeError::NoGraphs)));
        let g = graph_with(&[]);
        assert!(majority_vote(std::slice::from_ref(&g), 2).is_err());
        assert!(majority_vote(std::slice::from_ref(&g), 0).is_err());
    }

    #[test]
    fn formulas_must_match_structurally() {
        let m = metas();
        let g1 = propose(&PerfectLike("MATH sales = qty * price"), &serialize_prompt(&m).unwrap(), 0.0, &m);
        let g2 = propose(&PerfectLike("MATH sales = qty*price | 1"), &serialize_prompt(&m).unwrap(), 0.0, &m);
        let g3 = propose(&PerfectLike("MATH sales = qty + price"), &serialize_prompt(&m).unwrap(), 0.0, &m);
        let gs = [g1.graph.unwrap(), g2.graph.unwrap(), g3.graph.unwrap()];
        let out = majority_vote(&gs, 2).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.edges.iter().all(|e| e.votes == 2));
    }

    struct PerfectLike(&'static str);

    impl Provider for PerfectLike {
        fn id(&self) -> &str {
            "fixed"
        }
        fn complete(&self, _: &Prompt, _: f64) -> Result<String, ProviderError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn failing_provider_reduces_k() {
        let m = metas();
        let config = EnsembleConfig {
            providers: vec![
                Box::new(PerfectLike("MATH sales = qty * price")),
                Box::new(FailingStub::new("down")),
                Box::new(SilentStub::new("quiet")),
            ],
            mode: EnsembleMode::CrossModel { temperature: 0.0 },
            vote_threshold: None,
        };
        let out = run_ensemble(&config, &m, None).unwrap();
        assert_eq!(out.k, 2);
        assert_eq!(out.threshold, 1);
        assert_eq!(out.candidate.len(), 2);
        assert!(out.runs.iter().any(ProposalRun::failed));

        let all_down = EnsembleConfig {
            providers: vec![Box::new(FailingStub::new("down"))],
            mode: EnsembleMode::CrossModel { temperature: 0.0 },
            vote_threshold: None,
        };
        assert!(matches!(run_ensemble(&all_down, &m, None), Err(ProposeError::AllFailed(_))));
    }

    #[test]
    fn transcripts_are_written() {
        let m = metas();
        let dir = tempfile::tempdir().unwrap();
        let config = EnsembleConfig {
            providers: vec![Box::new(PerfectLike("HIER qty -> price"))],
            mode: EnsembleMode::SameModelTemperatures(vec![0.1, 0.2]),
            vote_threshold: None,
        };
        let out = run_ensemble(&config, &m, Some(dir.path())).unwrap();
        assert_eq!(out.k, 2);
        assert!(dir.path().join("prompt.txt").exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
    }
}
