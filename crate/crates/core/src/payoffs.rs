//! Ex-ante expected payoffs, evaluated exactly as Gaussian quadratic forms.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::equilibrium::StrategyCoefficients;
use crate::error::{Error, Result};
use crate::formation::CliquePartition;
use crate::model::{GameParams, Network, SignalCovariance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPayoff {
    /// `−E[(a_i − θ)²]`.
    pub accuracy_loss: f64,
    /// `−(γ/d_i) Σ_j E[(a_i − a_j)²]`, zero for isolated agents.
    pub coordination_loss: f64,
    pub link_cost: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffReport {
    pub per_agent: Vec<AgentPayoff>,
    pub aggregate: f64,
}

/// `E[(v·x − θ)²]` for a linear action with weights `v`.
pub(crate) fn mean_squared_error(cov: &SignalCovariance, v: &DVector<f64>) -> f64 {
    cov.inner(v, v) - 2.0 * v.dot(&cov.state_signal()) + cov.state_variance()
}

pub fn exante_payoffs(g: &Network, b: &StrategyCoefficients, params: &GameParams) -> Result<PayoffReport> {
    g.check_compatible(params)?;
    b.check_support(g)?;
    let cov = SignalCovariance::new(params);
    let gamma = params.gamma();
    let per_agent: Vec<AgentPayoff> = (0..g.n())
        .map(|i| {
            let bi = b.row(i);
            let accuracy_loss = -mean_squared_error(&cov, &bi);
            let d = g.degree(i);
            let coordination_loss = if d == 0 {
                0.0
            } else {
                let spread: f64 = g
                    .neighbors(i)
                    .iter()
                    .map(|&j| {
                        let diff = &bi - b.row(j);
                        cov.inner(&diff, &diff)
                    })
                    .sum();
                -gamma / d as f64 * spread
            };
            let link_cost = params.cost(d);
            AgentPayoff { accuracy_loss, coordination_loss, link_cost, total: accuracy_loss + coordination_loss - link_cost }
        })
        .collect();
    let aggregate = per_agent.iter().map(|p| p.total).sum();
    Ok(PayoffReport { per_agent, aggregate })
}

/// Closed-form payoff of every member of a truthful clique:
/// `−1/(σ_θ + S_C) − c(|C| − 1)`.
pub fn clique_payoff(clique: &[usize], params: &GameParams) -> Result<f64> {
    if clique.is_empty() {
        return Err(Error::EmptySubset);
    }
    for &i in clique {
        params.check_agent(i)?;
    }
    Ok(clique_payoff_unchecked(clique, params))
}

pub(crate) fn clique_payoff_unchecked(clique: &[usize], params: &GameParams) -> f64 {
    -1.0 / params.pooled_precision(clique.iter().copied()) - params.cost(clique.len() - 1)
}

/// Aggregate payoff `Σ_C |C| (−1/(σ_θ + S_C) − c(|C| − 1))`.
pub fn welfare(partition: &CliquePartition, params: &GameParams) -> Result<f64> {
    partition.check_agents(params.n())?;
    Ok(partition
        .blocks()
        .iter()
        .map(|block| block.len() as f64 * clique_payoff_unchecked(block, params))
        .sum())
}
