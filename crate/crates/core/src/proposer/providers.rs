//! Proposal sources: deterministic stubs for offline runs and a generic
//! chat-completions HTTP client.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grammar::render_proposal;
use super::Prompt;
use crate::expr::{BinOp, Expr};
use crate::graph::{Edge, EdgeKey, Graph, Rule, TemporalRelation};
use crate::table::{ColumnKind, ColumnMeta};
use crate::{derive_seed, seeded_rng};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider transport failure: {0}")]
    Transport(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &Prompt, temperature: f64) -> Result<String, ProviderError>;
}

/// Emits the ground-truth graph verbatim.
pub struct PerfectStub {
    id: String,
    truth: Graph,
}

impl PerfectStub {
    pub fn new(id: impl Into<String>, truth: Graph) -> Self {
        Self { id: id.into(), truth }
    }
}

impl Provider for PerfectStub {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _: &Prompt, _: f64) -> Result<String, ProviderError> {
        Ok(render_proposal(&self.truth.edges))
    }
}

/// Ground truth with each rule line dropped with probability `p/2`, plus
/// well-formed spurious edges numbering at least `round(p·|E|)`.
/// Deterministic in `(seed, temperature)`.
pub struct NoisyStub {
    id: String,
    truth: Graph,
    metas: Vec<ColumnMeta>,
    p: f64,
    seed: u64,
}

impl NoisyStub {
    pub fn new(id: impl Into<String>, truth: Graph, metas: Vec<ColumnMeta>, p: f64, seed: u64) -> Result<Self, ProviderError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ProviderError::Config(format!("noise probability {p} outside [0, 1]")));
        }
        Ok(Self {
            id: id.into(),
            truth,
            metas,
            p,
            seed,
        })
    }

    fn reachable(&self) -> HashSet<(String, String)> {
        let mut out = HashSet::new();
        for start in &self.truth.nodes {
            let mut stack = vec![start.as_str()];
            while let Some(n) = stack.pop() {
                for e in self.truth.binary_edges().filter(|e| e.source == n) {
                    if out.insert((start.clone(), e.target.clone())) {
                        stack.push(&e.target);
                    }
                }
            }
        }
        out
    }

    fn spurious(&self, rng: &mut crate::Rng) -> Vec<Edge> {
        let wanted = (self.p * self.truth.len() as f64).round() as usize;
        let names_of = |kind: ColumnKind| -> Vec<&str> {
            self.metas
                .iter()
                .filter(|m| m.kind == kind)
                .map(|m| m.name.as_str())
                .collect()
        };
        let cats = names_of(ColumnKind::Categorical);
        let nums = names_of(ColumnKind::Numeric);
        let stamps = names_of(ColumnKind::Timestamp);
        let reach = self.reachable();
        let linked = |a: &str, b: &str| reach.contains(&(a.to_string(), b.to_string()));
        let truth_targets: BTreeSet<&str> = self.truth.binary_edges().map(|e| e.target.as_str()).collect();
        let domain_cols: BTreeSet<&str> = self
            .truth
            .edges
            .iter()
            .filter(|e| e.is_unary())
            .map(|e| e.target.as_str())
            .collect();
        let free_nums: Vec<&str> = nums.iter().copied().filter(|n| !truth_targets.contains(n)).collect();
        let free_cats: Vec<&str> = cats.iter().copied().filter(|c| !domain_cols.contains(c)).collect();
        let mut seen: HashSet<EdgeKey> = self.truth.edges.iter().map(Edge::key).collect();
        let mut out: Vec<Edge> = Vec::new();
        let conf = |rng: &mut crate::Rng| (rng.random_range(60..=95) as f64) / 100.0;

        for _ in 0..10_000 {
            if out.len() >= wanted {
                break;
            }
            let candidate: Option<Vec<Edge>> = match rng.random_range(0..4) {
                0 if cats.len() >= 2 => {
                    let pair: Vec<&&str> = cats.choose_multiple(rng, 2).collect();
                    let (a, b) = (*pair[0], *pair[1]);
                    (!linked(a, b)).then(|| vec![Edge::hier(a, b, conf(rng))])
                }
                1 if nums.len() >= 3 && !free_nums.is_empty() => {
                    let t = *free_nums.choose(rng).expect("nonempty");
                    let parents: Vec<&str> = nums.iter().copied().filter(|n| *n != t).collect();
                    let pick: Vec<&&str> = parents.choose_multiple(rng, 2).collect();
                    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div].choose(rng).expect("nonempty");
                    let expr = Expr::bin(op, Expr::var(*pick[0]), Expr::var(*pick[1]));
                    let rule = Rule::Formula { expr };
                    let c = conf(rng);
                    Some(pick.iter().map(|p| Edge::new(**p, t, rule.clone(), c)).collect())
                }
                2 if stamps.len() >= 2 => {
                    let pair: Vec<&&str> = stamps.choose_multiple(rng, 2).collect();
                    let (a, b) = (*pair[0], *pair[1]);
                    let rule = Rule::TemporalOrder {
                        relation: TemporalRelation::Before,
                        offset_target: None,
                    };
                    (!linked(a, b)).then(|| vec![Edge::new(a, b, rule, conf(rng))])
                }
                3 if !free_cats.is_empty() => {
                    let t = *free_cats.choose(rng).expect("nonempty");
                    let allowed = (0..rng.random_range(2..=4))
                        .map(|_| format!("unlisted_{}", rng.random_range(0..1000)))
                        .collect();
                    Some(vec![Edge::new(t, t, Rule::DomainSet { allowed }, conf(rng))])
                }
                _ => None,
            };
            let Some(edges) = candidate else { continue };
            if edges.iter().any(|e| seen.contains(&e.key())) {
                continue;
            }
            for e in edges {
                seen.insert(e.key());
                out.push(e);
            }
        }
        out
    }
}

impl Provider for NoisyStub {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _: &Prompt, temperature: f64) -> Result<String, ProviderError> {
        let mut rng = seeded_rng(derive_seed(self.seed, &format!("noisy/{temperature}")));
        let mut out = String::new();
        for line in render_proposal(&self.truth.edges).lines() {
            if rng.random::<f64>() >= self.p / 2.0 {
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str(&render_proposal(&self.spurious(&mut rng)));
        Ok(out)
    }
}

/// Returns an empty response.
pub struct SilentStub {
    id: String,
}

impl SilentStub {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Provider for SilentStub {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _: &Prompt, _: f64) -> Result<String, ProviderError> {
        Ok(String::new())
    }
}

/// Always fails, as an unreachable endpoint would.
pub struct FailingStub {
    id: String,
}

impl FailingStub {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Provider for FailingStub {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _: &Prompt, _: f64) -> Result<String, ProviderError> {
        Err(ProviderError::Transport("timed out".into()))
    }
}

/// OpenAI-style `POST {base_url}/chat/completions` client. The API key is
/// read from the environment variable named in the configuration.
pub struct HttpProvider {
    id: String,
    base_url: String,
    model: String,
    api_key_env: String,
    timeout: Duration,
}

impl HttpProvider {
    pub fn new(id: impl Into<String>, base_url: impl Into<String>, model: impl Into<String>, api_key_env: impl Into<String>, timeout: Duration) -> Self {
        Self {
            id: id.into(),
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: api_key_env.into(),
            timeout,
        }
    }
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &Prompt, temperature: f64) -> Result<String, ProviderError> {
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| ProviderError::Config(format!("environment variable {} is not set", self.api_key_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let body = serde_json::json!({
            "model": self.model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt.text}],
        });
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let reply: serde_json::Value = agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Transport("response has no message content".into()))
    }
}

/// One entry of a provider configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// Builds providers from a JSON list of specs. Stub `truth` paths are
/// resolved relative to `base_dir`.
pub fn build_providers(specs: &[ProviderSpec], metas: &[ColumnMeta], base_dir: &Path) -> Result<Vec<Box<dyn Provider>>, ProviderError> {
    specs.iter().map(|s| build_provider(s, metas, base_dir)).collect()
}

fn build_provider(spec: &ProviderSpec, metas: &[ColumnMeta], base_dir: &Path) -> Result<Box<dyn Provider>, ProviderError> {
    let p = &spec.params;
    let str_param = |key: &str| -> Result<String, ProviderError> {
        p[key]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Config(format!("provider `{}`: missing string param `{key}`", spec.id)))
    };
    let truth = || -> Result<Graph, ProviderError> {
        let path = base_dir.join(str_param("truth")?);
        Graph::load(&path).map_err(|e| ProviderError::Config(format!("provider `{}`: {e}", spec.id)))
    };
    Ok(match spec.kind.as_str() {
        "stub-perfect" => Box::new(PerfectStub::new(&spec.id, truth()?)),
        "stub-noisy" => {
            let noise = p["p"].as_f64().unwrap_or(0.2);
            let seed = p["seed"].as_u64().unwrap_or(0);
            Box::new(NoisyStub::new(&spec.id, truth()?, metas.to_vec(), noise, seed)?)
        }
        "stub-silent" => Box::new(SilentStub::new(&spec.id)),
        "stub-failing" => Box::new(FailingStub::new(&spec.id)),
        "http" => Box::new(HttpProvider::new(
            &spec.id,
            str_param("base_url")?,
            str_param("model")?,
            str_param("api_key_env")?,
            Duration::from_secs(p["timeout_secs"].as_u64().unwrap_or(120)),
        )),
        other => return Err(ProviderError::Config(format!("unknown provider type `{other}`"))),
    })
}
