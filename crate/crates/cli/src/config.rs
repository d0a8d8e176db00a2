//! Experiment configuration: a strict JSON document with the top-level keys
//! `problem`, `graph`, `algorithm`, `integrator`, `initial` and `output`.
//! Unknown keys are rejected everywhere.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use suballoc::dynamics::PiConfig;
use suballoc::integrate::{IntegratorOptions, Method};
use suballoc::problem::{Agent, Quadratic, ResourceProblem};
use suballoc::WeightedDigraph;

use crate::error::CliError;

/// Dense graphs beyond this would not fit the dense-matrix design.
pub const MAX_NODES: usize = 1000;
pub const MAX_DIM: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub graph: GraphSpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub agents: Vec<AgentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub cost: CostSpec,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostSpec {
    /// `½ xᵀQx + rᵀx + c`, `Q` given row by row.
    Quadratic {
        q: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    /// `Q = diag(a)`.
    Diagonal {
        a: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
}

/// Nodes are numbered from 1; an edge `[from, to, w]` lets `from` send to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Suboptimal {
        eps: f64,
    },
    Pi {
        k_p: f64,
        k_i: f64,
    },
    PrimalDual {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain: Option<f64>,
    },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Suboptimal { .. } => "suboptimal",
            Self::Pi { .. } => "pi",
            Self::PrimalDual { .. } => "primal-dual",
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match self {
            Self::Suboptimal { eps } => Some(*eps),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSpec {
    #[default]
    Rkf45,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default)]
    pub method: MethodSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    /// Stop early once the vector field norm drops below this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Zeros,
    /// `x = b` and every multiplier or auxiliary state zero.
    #[default]
    BStart,
    Explicit {
        x: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<Vec<f64>>,
    },
}

/// File names inside the output directory. Command reports are always
/// written as `<command>.json` next to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
}

fn default_trajectory() -> String {
    "trajectory.csv".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { trajectory: default_trajectory() }
    }
}

fn parse_strict<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Validation(format!(
            "config error at `{path}` (line {}, column {}): {inner}",
            inner.line(),
            inner.column()
        ))
    })?;
    Ok(value)
}

fn check_finite(what: &str, v: &[f64]) -> Result<(), CliError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} has non-finite entries")))
    }
}

impl CostSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { q, .. } => q.len(),
            Self::Diagonal { a, .. } => a.len(),
        }
    }

    pub fn build(&self) -> Result<Quadratic, CliError> {
        let n = self.dim();
        if n == 0 || n > MAX_DIM {
            return Err(CliError::Validation(format!("cost dimension {n} must be in 1..={MAX_DIM}")));
        }
        let (q, r, c) = match self {
            Self::Quadratic { q, r, c } => {
                if let Some(row) = q.iter().position(|row| row.len() != n) {
                    return Err(CliError::Validation(format!(
                        "q row {} has length {}, expected {n}",
                        row + 1,
                        q[row].len()
                    )));
                }
                (DMatrix::from_fn(n, n, |i, j| q[i][j]), r, c)
            }
            Self::Diagonal { a, r, c } => (DMatrix::from_diagonal(&DVector::from_column_slice(a)), r, c),
        };
        let r = match r {
            Some(r) if r.len() != n => {
                return Err(CliError::Validation(format!("r has length {}, expected {n}", r.len())))
            }
            Some(r) => DVector::from_column_slice(r),
            None => DVector::zeros(n),
        };
        check_finite("q", q.as_slice())?;
        check_finite("r", r.as_slice())?;
        Quadratic::new(q, r, c.unwrap_or(0.0)).map_err(CliError::from)
    }
}

impl AgentSpec {
    pub fn build(&self) -> Result<Agent, CliError> {
        let cost = self.cost.build()?;
        if self.b.len() != self.cost.dim() {
            return Err(CliError::Validation(format!(
                "b has length {}, cost dimension is {}",
                self.b.len(),
                self.cost.dim()
            )));
        }
        check_finite("b", &self.b)?;
        Ok(Agent { cost: Arc::new(cost), b: self.b.clone() })
    }
}

impl GraphSpec {
    pub fn build(&self) -> Result<WeightedDigraph, CliError> {
        if self.nodes == 0 || self.nodes > MAX_NODES {
            return Err(CliError::Validation(format!(
                "graph nodes {} must be in 1..={MAX_NODES}",
                self.nodes
            )));
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, &(from, to, w)) in self.edges.iter().enumerate() {
            if from == 0 || to == 0 || from > self.nodes || to > self.nodes {
                return Err(CliError::Validation(format!(
                    "edge {} ({from} -> {to}) references a node outside 1..={}",
                    k + 1,
                    self.nodes
                )));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(CliError::Validation(format!(
                    "edge {} ({from} -> {to}) has weight {w}; weights must be positive",
                    k + 1
                )));
            }
            edges.push((from - 1, to - 1, w));
        }
        WeightedDigraph::from_edges(self.nodes, &edges).map_err(CliError::from)
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ResourceProblem, CliError> {
        if self.agents.is_empty() {
            return Err(CliError::Validation("problem needs at least one agent".into()));
        }
        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.build().map_err(|e| e.context(&format!("agent {}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        ResourceProblem::new(agents).map_err(CliError::from)
    }
}

fn positive(what: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what}={v} must be positive and finite")))
    }
}

/// Parses the graph fragment `{"nodes": N, "edges": [[from, to, w], ...]}`.
pub fn parse_graph_spec(text: &str) -> Result<WeightedDigraph, CliError> {
    parse_strict::<GraphSpec>(text)?.build()
}

/// Parses one agent `{"cost": {...}, "b": [...]}`.
pub fn parse_agent_spec(text: &str) -> Result<Agent, CliError> {
    parse_strict::<AgentSpec>(text)?.build()
}

/// Parses and cross-validates a full configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = parse_strict(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Everything the commands need, built once from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: ResourceProblem,
    pub graph: WeightedDigraph,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        parse_config(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let problem = self.problem.build()?;
        let graph = self.graph.build()?;
        if graph.n_nodes() != problem.n_agents() {
            return Err(CliError::Validation(format!(
                "graph has {} nodes but the problem has {} agents",
                graph.n_nodes(),
                problem.n_agents()
            )));
        }
        Ok(Resolved { problem, graph })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let r = self.resolve()?;
        match &self.algorithm {
            AlgorithmSpec::Suboptimal { eps } => positive("algorithm.eps", *eps)?,
            AlgorithmSpec::Pi { k_p, k_i } => {
                PiConfig::new(*k_p, *k_i)?;
            }
            AlgorithmSpec::PrimalDual { gain } => {
                if let Some(g) = gain {
                    positive("algorithm.gain", *g)?;
                }
            }
        }
        self.integrator_options(1.0)?;
        let name = &self.output.trajectory;
        if name.is_empty() || Path::new(name).file_name().and_then(|f| f.to_str()) != Some(name.as_str()) {
            return Err(CliError::Validation(format!(
                "output.trajectory `{name}` must be a plain file name"
            )));
        }
        let nn = r.problem.dim_total();
        let n = r.problem.n();
        if let InitialSpec::Explicit { x, lambda, z, mu } = &self.initial {
            let want = |what: &str, v: &Option<Vec<f64>>, len: usize| -> Result<(), CliError> {
                match v {
                    Some(v) if v.len() != len => Err(CliError::Validation(format!(
                        "initial.{what} has length {}, expected {len}",
                        v.len()
                    ))),
                    Some(v) => check_finite(&format!("initial.{what}"), v),
                    None => Ok(()),
                }
            };
            want("x", &Some(x.clone()), nn)?;
            want("lambda", lambda, nn)?;
            want("z", z, nn)?;
            want("mu", mu, n)?;
            let stray = match self.algorithm {
                AlgorithmSpec::Suboptimal { .. } => vec![("z", z.is_some()), ("mu", mu.is_some())],
                AlgorithmSpec::Pi { .. } => vec![("mu", mu.is_some())],
                AlgorithmSpec::PrimalDual { .. } => vec![("lambda", lambda.is_some()), ("z", z.is_some())],
            };
            if let Some((name, _)) = stray.iter().find(|(_, set)| *set) {
                return Err(CliError::Validation(format!(
                    "initial.{name} is not a state of the {} algorithm",
                    self.algorithm.name()
                )));
            }
        }
        Ok(())
    }

    /// Integrator settings, with the step capped at half of `stiffness` for
    /// the ε-dynamics.
    pub fn integrator_options(&self, stiffness: f64) -> Result<IntegratorOptions, CliError> {
        let s = &self.integrator;
        let mut o = IntegratorOptions::for_eps(stiffness, s.t_end.unwrap_or(10.0));
        o.method = match s.method {
            MethodSpec::Rkf45 => Method::AdaptiveRkf45,
            MethodSpec::Rk4 => Method::FixedRk4,
        };
        if let Some(h) = s.h {
            o.h = h;
        }
        if let Some(v) = s.rel_tol {
            o.rel_tol = v;
        }
        if let Some(v) = s.abs_tol {
            o.abs_tol = v;
        }
        if let Some(v) = s.max_step {
            o.max_step = v;
        }
        if let Some(v) = s.record_every {
            o.record_every = v;
        }
        if let Some(tol) = s.converge_tol {
            positive("integrator.converge_tol", tol)?;
        }
        o.validate()?;
        Ok(o)
    }
}
