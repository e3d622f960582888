//! Scenario files, report assembly and exit-code policy for the binary.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "params": { "sigma_theta": 1, "gamma": 1, "tau": [1, 1, 1], "linear_cost": 0.05 },
//!   "network": [[0, 1], [1, 2]],
//!   "labels": ["a", "b", "c"],
//!   "options": { "tol": 1e-12, "samples": 100000, "seed": 7, "method": "direct" }
//! }
//! ```
//!
//! `params` takes either an explicit `cost` schedule `c(0..n)` or a
//! `linear_cost` slope. Agents are indexed from 0. Every report carries a
//! `schema_version` and echoes the validated parameters.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{self, SolveMethod, DEFAULT_TOL};
use crate::error::Error;
use crate::formation::{self, BlockingReport, CliquePartition, EfficiencyReport, KappaInterval, DEFAULT_PAYOFF_TOL};
use crate::incentives::{self, IcTolerance, SenderDeviation};
use crate::model::{linear_cost, GameParams, Network};
use crate::montecarlo::{self, DeviationSimulation, SimulationResult, DEFAULT_SAMPLES};
use crate::payoffs::{self, PayoffReport};

pub const SCHEMA_VERSION: u32 = 1;
/// Overrides the built-in default tolerance when neither the command line
/// nor the scenario sets one.
pub const TOL_ENV: &str = "INFOCLUBS_TOL";
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(Error::GuardExceeded { .. }) => 4,
            CliError::Model(Error::SingularSystem | Error::NotConverged { .. }) => 1,
            CliError::Model(_) | CliError::Scenario(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub sigma_theta: f64,
    pub gamma: f64,
    pub tau: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_cost: Option<f64>,
}

impl RawParams {
    pub fn validate(&self) -> CliResult<GameParams> {
        let cost = match (&self.cost, self.linear_cost) {
            (Some(c), None) => c.clone(),
            (None, Some(k)) => linear_cost(self.tau.len(), k),
            (None, None) => return Err(CliError::Scenario("params need `cost` or `linear_cost`".into())),
            (Some(_), Some(_)) => {
                return Err(CliError::Scenario("params take only one of `cost` and `linear_cost`".into()))
            }
        };
        Ok(GameParams::new(self.sigma_theta, self.gamma, self.tau.clone(), cost)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationOptions {
    pub sender: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub method: Option<SolveMethod>,
    /// Also simulate this deviation in `simulate`.
    #[serde(default)]
    pub deviation: Option<DeviationOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub params: RawParams,
    #[serde(default)]
    pub network: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Candidate clique partition for `core`; defaults to the recursive one.
    #[serde(default)]
    pub partition: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub options: AnalysisOptions,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: GameParams,
    pub network: Option<Network>,
    pub labels: Option<Vec<String>>,
    pub partition: Option<CliquePartition>,
    pub options: AnalysisOptions,
}

impl Scenario {
    pub fn from_raw(raw: RawScenario) -> CliResult<Self> {
        let params = raw.params.validate()?;
        let n = params.n();
        let network = raw.network.as_deref().map(|edges| Network::new(n, edges)).transpose()?;
        if let Some(labels) = &raw.labels {
            if labels.len() != n {
                return Err(CliError::Scenario(format!("{} labels for {n} agents", labels.len())));
            }
        }
        let partition = raw.partition.map(|blocks| CliquePartition::new(n, blocks)).transpose()?;
        Ok(Scenario { params, network, labels: raw.labels, partition, options: raw.options })
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn network(&self) -> CliResult<&Network> {
        self.network.as_ref().ok_or_else(|| CliError::Scenario("this command needs a `network` edge list".into()))
    }

    fn label(&self, i: usize) -> String {
        self.labels.as_ref().map_or_else(|| i.to_string(), |l| l[i].clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    CheckIc,
    Form,
    Core,
    Welfare,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::CheckIc => "check-ic",
            Command::Form => "form",
            Command::Core => "core",
            Command::Welfare => "welfare",
            Command::Simulate => "simulate",
        }
    }
}

/// Command-line overrides of scenario options.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub method: Option<SolveMethod>,
    /// Value of [`TOL_ENV`], if set.
    pub env_tol: Option<f64>,
}

impl Overrides {
    fn tol(&self, scenario: &Scenario) -> Option<f64> {
        self.tol.or(scenario.options.tol).or(self.env_tol)
    }
}

/// Parses [`TOL_ENV`] from the process environment.
pub fn env_tolerance() -> CliResult<Option<f64>> {
    match std::env::var(TOL_ENV) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|e| CliError::Scenario(format!("{TOL_ENV}={v:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

/// Parameters as they appear in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub sigma_theta: f64,
    pub gamma: f64,
    pub tau: Vec<f64>,
    pub cost: Vec<f64>,
}

impl From<&GameParams> for ParamsEcho {
    fn from(p: &GameParams) -> Self {
        ParamsEcho {
            sigma_theta: p.sigma_theta(),
            gamma: p.gamma(),
            tau: p.tau().to_vec(),
            cost: p.cost_schedule().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    pub command: String,
    pub params: ParamsEcho,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(flatten)]
    pub header: Header,
    pub method: SolveMethod,
    pub tol: f64,
    pub coefficients: Vec<Vec<f64>>,
    pub foc_residual: f64,
    /// Largest entrywise gap between the fixed-point and direct solutions.
    pub method_agreement: f64,
    pub fixed_point_iterations: usize,
    pub is_clique_partition: bool,
    pub payoffs: PayoffReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    #[serde(flatten)]
    pub header: Header,
    pub is_truthful_ic: bool,
    pub witness: Option<usize>,
    pub tolerance: IcTolerance,
    pub per_sender: Vec<SenderDeviation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub agents: Vec<usize>,
    pub payoff: f64,
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormReport {
    #[serde(flatten)]
    pub header: Header,
    pub blocks: Vec<BlockSummary>,
    pub assortative: bool,
    pub welfare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreReport {
    #[serde(flatten)]
    pub header: Header,
    pub candidate: Vec<Vec<usize>>,
    /// `"recursive"` or `"scenario"`.
    pub candidate_source: String,
    pub core: BlockingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    #[serde(flatten)]
    pub header: Header,
    pub efficiency: EfficiencyReport,
    /// Present when the precisions have the shape `(h, h, l, l)` with `h >= l`
    /// and costs are linear.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_region: Option<KappaInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub sender: usize,
    pub slope: f64,
    pub analytic_loss: f64,
    pub analytic_gain: f64,
    pub simulation: DeviationSimulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    #[serde(flatten)]
    pub header: Header,
    pub analytic: Vec<f64>,
    pub simulation: SimulationResult,
    /// `(mean − analytic) / stderr` per agent.
    pub z_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Report {
    Solve(SolveReport),
    CheckIc(IcReport),
    Form(FormReport),
    Core(CoreReport),
    Welfare(WelfareReport),
    Simulate(SimulateReport),
}

impl Report {
    /// Exit code for a successful run: 2 when truthful reporting fails the
    /// incentive check, otherwise 0.
    pub fn exit_code(&self) -> i32 {
        match self {
            Report::CheckIc(r) if !r.is_truthful_ic => 2,
            _ => 0,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

fn header(command: Command, scenario: &Scenario) -> Header {
    Header {
        schema_version: SCHEMA_VERSION,
        command: command.name().to_string(),
        params: ParamsEcho::from(&scenario.params),
        labels: scenario.labels.clone(),
    }
}

pub fn run(command: Command, scenario: &Scenario, overrides: &Overrides) -> CliResult<Report> {
    let params = &scenario.params;
    let head = header(command, scenario);
    let report = match command {
        Command::Solve => {
            let g = scenario.network()?;
            let tol = overrides.tol(scenario).unwrap_or(DEFAULT_TOL);
            let method = overrides.method.or(scenario.options.method).unwrap_or_default();
            let direct = equilibrium::solve_truthful(g, params, SolveMethod::Direct, tol)?;
            let trace = equilibrium::solve_fixed_point(g, params, tol)?;
            let b = match method {
                SolveMethod::Direct => direct.clone(),
                SolveMethod::FixedPoint => trace.coefficients.clone(),
            };
            Report::Solve(SolveReport {
                header: head,
                method,
                tol,
                coefficients: b.to_rows(),
                foc_residual: equilibrium::foc_residual(g, params, &b)?,
                method_agreement: direct.max_abs_diff(&trace.coefficients),
                fixed_point_iterations: trace.iterations(),
                is_clique_partition: g.is_clique_partition(),
                payoffs: payoffs::exante_payoffs(g, &b, params)?,
            })
        }
        Command::CheckIc => {
            let g = scenario.network()?;
            let tol = overrides.tol(scenario).map_or_else(IcTolerance::default, IcTolerance::uniform);
            let r = incentives::check_truthful_ic(g, params, tol)?;
            Report::CheckIc(IcReport {
                header: head,
                is_truthful_ic: r.is_truthful_ic,
                witness: r.witness,
                tolerance: r.tolerance,
                per_sender: r.per_sender,
            })
        }
        Command::Form => {
            let steps = formation::recursive_steps(params);
            let partition = formation::recursive_partition(params);
            Report::Form(FormReport {
                header: head,
                assortative: partition.is_assortative(params.tau()),
                welfare: payoffs::welfare(&partition, params)?,
                blocks: steps
                    .into_iter()
                    .map(|s| BlockSummary { agents: s.block, payoff: s.payoff, objective: s.objective })
                    .collect(),
            })
        }
        Command::Core => {
            let tol = overrides.tol(scenario).unwrap_or(DEFAULT_PAYOFF_TOL);
            let (candidate, source) = match &scenario.partition {
                Some(p) => (p.clone(), "scenario"),
                None => (formation::recursive_partition(params), "recursive"),
            };
            let core = formation::core_check(&candidate, params, tol)?;
            Report::Core(CoreReport {
                header: head,
                candidate: candidate.blocks().to_vec(),
                candidate_source: source.to_string(),
                core,
            })
        }
        Command::Welfare => Report::Welfare(WelfareReport {
            header: head,
            efficiency: formation::efficiency_frontier(params)?,
            kappa_region: two_pair_region(params)?,
        }),
        Command::Simulate => {
            let g = scenario.network()?;
            let samples = overrides.samples.or(scenario.options.samples).unwrap_or(DEFAULT_SAMPLES);
            let seed = overrides.seed.or(scenario.options.seed).unwrap_or(DEFAULT_SEED);
            let b = equilibrium::solve_truthful(g, params, SolveMethod::Direct, DEFAULT_TOL)?;
            let analytic: Vec<f64> =
                payoffs::exante_payoffs(g, &b, params)?.per_agent.iter().map(|a| a.total).collect();
            let simulation = montecarlo::simulate(g, &b, params, samples, seed)?;
            let z_scores = analytic
                .iter()
                .zip(simulation.per_agent_mean.iter().zip(&simulation.per_agent_stderr))
                .map(|(a, (m, s))| if *s > 0.0 { (m - a) / s } else { 0.0 })
                .collect();
            let deviation = match &scenario.options.deviation {
                Some(dev) => {
                    let problem = incentives::DeviationProblem::new(g, &b, params, dev.sender)?;
                    let slopes = vec![dev.slope; problem.neighbors().len()];
                    let analytic_loss = problem.expected_loss(&slopes)?;
                    let truthful_loss = problem.expected_loss(&vec![1.0; slopes.len()])?;
                    Some(DeviationSummary {
                        sender: dev.sender,
                        slope: dev.slope,
                        analytic_loss,
                        analytic_gain: truthful_loss - analytic_loss,
                        simulation: montecarlo::simulate_deviation(g, params, dev.sender, dev.slope, samples, seed)?,
                    })
                }
                None => None,
            };
            Report::Simulate(SimulateReport { header: head, analytic, simulation, z_scores, deviation })
        }
    };
    Ok(report)
}

fn two_pair_region(params: &GameParams) -> CliResult<Option<KappaInterval>> {
    let tau = params.tau();
    let cost = params.cost_schedule();
    let linear = cost.len() == 4 && cost.iter().enumerate().all(|(d, c)| (c - cost[1] * d as f64).abs() <= 1e-12);
    if tau.len() == 4 && linear && tau[0] == tau[1] && tau[2] == tau[3] && tau[0] >= tau[2] {
        Ok(Some(formation::kappa_region(tau[0], tau[2], params.sigma_theta())?))
    } else {
        Ok(None)
    }
}

/// Tabular view of a report.
pub fn to_csv(report: &Report, scenario: &Scenario) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let label = |i: usize| scenario.label(i);
    match report {
        Report::Solve(r) => {
            w.write_record(["agent", "label", "accuracy_loss", "coordination_loss", "link_cost", "total"]).map_err(io)?;
            for (i, a) in r.payoffs.per_agent.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    label(i),
                    a.accuracy_loss.to_string(),
                    a.coordination_loss.to_string(),
                    a.link_cost.to_string(),
                    a.total.to_string(),
                ])
                .map_err(io)?;
            }
        }
        Report::CheckIc(r) => {
            w.write_record(["sender", "label", "neighbor", "slope", "gain"]).map_err(io)?;
            for s in &r.per_sender {
                for (j, k) in s.neighbors.iter().zip(&s.slopes) {
                    w.write_record([s.sender.to_string(), label(s.sender), j.to_string(), k.to_string(), s.gain.to_string()])
                        .map_err(io)?;
                }
            }
        }
        Report::Form(r) => {
            w.write_record(["agent", "label", "block", "payoff"]).map_err(io)?;
            for (k, b) in r.blocks.iter().enumerate() {
                for &i in &b.agents {
                    w.write_record([i.to_string(), label(i), k.to_string(), b.payoff.to_string()]).map_err(io)?;
                }
            }
        }
        Report::Core(r) => {
            w.write_record(["agent", "label", "payoff", "upper_bound_slack"]).map_err(io)?;
            for (i, (u, s)) in r.core.payoffs.iter().zip(&r.core.upper_bound_slack).enumerate() {
                w.write_record([i.to_string(), label(i), u.to_string(), s.to_string()]).map_err(io)?;
            }
        }
        Report::Welfare(r) => {
            w.write_record(["partition", "blocks", "welfare"]).map_err(io)?;
            for (name, p, v) in [
                ("best", &r.efficiency.best_partition, r.efficiency.best_welfare),
                ("core", &r.efficiency.core_partition, r.efficiency.core_welfare),
            ] {
                w.write_record([name.to_string(), format_blocks(p.blocks()), v.to_string()]).map_err(io)?;
            }
        }
        Report::Simulate(r) => {
            w.write_record(["agent", "label", "analytic", "mean", "stderr"]).map_err(io)?;
            for (i, a) in r.analytic.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    label(i),
                    a.to_string(),
                    r.simulation.per_agent_mean[i].to_string(),
                    r.simulation.per_agent_stderr[i].to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

fn format_blocks(blocks: &[Vec<usize>]) -> String {
    let mut s = String::new();
    for (k, b) in blocks.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let members: Vec<String> = b.iter().map(usize::to_string).collect();
        let _ = write!(s, "{{{}}}", members.join(","));
    }
    s
}
