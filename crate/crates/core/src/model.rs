//! Game primitives: parameters, the communication network, and the joint
//! Gaussian law of the state and the private signals.
//!
//! The state is `θ ~ N(0, 1/σ_θ)` and agent `i` observes `x_i = θ + η_i` with
//! independent noise `η_i ~ N(0, 1/τ_i)`. Every other module reads its
//! covariances from [`SignalCovariance`].

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Prior precision, coordination weight, signal precisions and link costs.
///
/// `cost[d]` is the cost an agent pays for maintaining `d` links, for
/// `d = 0..n`. Construction validates every invariant, so a `GameParams`
/// value in hand is always usable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameParams {
    sigma_theta: f64,
    gamma: f64,
    tau: Vec<f64>,
    cost: Vec<f64>,
}

impl GameParams {
    pub fn new(sigma_theta: f64, gamma: f64, tau: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        validate_params(GameParams { sigma_theta, gamma, tau, cost })
    }

    /// Linear cost schedule `c(d) = kappa * d`.
    pub fn with_linear_cost(sigma_theta: f64, gamma: f64, tau: Vec<f64>, kappa: f64) -> Result<Self> {
        let cost = linear_cost(tau.len(), kappa);
        Self::new(sigma_theta, gamma, tau, cost)
    }

    pub fn n(&self) -> usize {
        self.tau.len()
    }

    pub fn sigma_theta(&self) -> f64 {
        self.sigma_theta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn cost_schedule(&self) -> &[f64] {
        &self.cost
    }

    /// Cost of maintaining `degree` links.
    pub fn cost(&self, degree: usize) -> f64 {
        self.cost[degree]
    }

    /// `σ_θ + Σ_{ℓ ∈ agents} τ_ℓ`, the posterior precision after pooling the
    /// listed signals.
    pub fn pooled_precision<I: IntoIterator<Item = usize>>(&self, agents: I) -> f64 {
        self.sigma_theta + agents.into_iter().map(|l| self.tau[l]).sum::<f64>()
    }

    /// Same game with agents relabeled so that new agent `perm[i]` is old agent `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let mut tau = vec![0.0; self.n()];
        for (old, &new) in perm.iter().enumerate() {
            tau[new] = self.tau[old];
        }
        Ok(GameParams { tau, ..self.clone() })
    }

    pub(crate) fn check_agent(&self, agent: usize) -> Result<()> {
        if agent < self.n() {
            Ok(())
        } else {
            Err(Error::AgentOutOfRange { agent, n: self.n() })
        }
    }
}

pub fn linear_cost(n: usize, kappa: f64) -> Vec<f64> {
    (0..n).map(|d| kappa * d as f64).collect()
}

/// Checks every parameter invariant and hands the params back unchanged.
pub fn validate_params(params: GameParams) -> Result<GameParams> {
    let GameParams { sigma_theta, gamma, tau, cost } = &params;
    if !(sigma_theta.is_finite() && *sigma_theta > 0.0) {
        return Err(Error::NonPositivePriorPrecision(*sigma_theta));
    }
    if !(gamma.is_finite() && *gamma > 0.0) {
        return Err(Error::NonPositiveGamma(*gamma));
    }
    if tau.is_empty() {
        return Err(Error::NoAgents);
    }
    if let Some((agent, &value)) = tau.iter().enumerate().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::NonPositiveSignalPrecision { agent, value });
    }
    if cost.len() != tau.len() {
        return Err(Error::CostLength { got: cost.len(), agents: tau.len() });
    }
    if let Some(degree) = cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost { degree });
    }
    if cost[0] != 0.0 {
        return Err(Error::NonZeroBaseCost(cost[0]));
    }
    let increments: Vec<f64> = cost.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(degree) = increments.iter().position(|&dc| dc < 0.0) {
        return Err(Error::DecreasingCost { degree });
    }
    // Convexity is checked with a relative slack so that schedules like
    // 0.1 * d, which are linear up to rounding, pass.
    for (degree, w) in increments.windows(2).enumerate() {
        let slack = 1e-12 * w[0].abs().max(w[1].abs()).max(1.0);
        if w[1] < w[0] - slack {
            return Err(Error::NonConvexCost { degree });
        }
    }
    Ok(params)
}

/// Undirected simple graph on `n` agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    adjacency: Vec<BTreeSet<usize>>,
}

impl Network {
    pub fn empty(n: usize) -> Self {
        Network { adjacency: vec![BTreeSet::new(); n] }
    }

    /// Builds a network from an edge list, rejecting self-loops, duplicates
    /// (in either orientation) and out-of-range endpoints.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Network::empty(n);
        for &(i, j) in edges {
            for agent in [i, j] {
                if agent >= n {
                    return Err(Error::AgentOutOfRange { agent, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !g.adjacency[i].insert(j) {
                return Err(Error::DuplicateEdge(i.min(j), i.max(j)));
            }
            g.adjacency[j].insert(i);
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Network::new(n, &edges).expect("complete graph edges are valid")
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn line(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Network::new(n, &edges).expect("path edges are valid")
    }

    /// Disjoint union of cliques, one per block.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut edges = Vec::new();
        for block in blocks {
            for (k, &i) in block.iter().enumerate() {
                for &j in &block[k + 1..] {
                    edges.push((i, j));
                }
            }
        }
        Network::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].contains(&j)
    }

    /// Agent `i` together with her neighbors, in increasing order.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.adjacency[i].iter().copied().collect();
        let pos = out.partition_point(|&j| j < i);
        out.insert(pos, i);
        out
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.range(i + 1..).map(move |&j| (i, j)))
            .collect()
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// True iff every connected component is complete.
    pub fn is_clique_partition(&self) -> bool {
        self.components()
            .iter()
            .all(|comp| comp.iter().all(|&i| self.degree(i) == comp.len() - 1))
    }

    /// Relabels agents so that new agent `perm[i]` is old agent `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let edges: Vec<_> = self.edges().into_iter().map(|(i, j)| (perm[i], perm[j])).collect();
        Network::new(self.n(), &edges)
    }

    pub(crate) fn check_compatible(&self, params: &GameParams) -> Result<()> {
        if self.n() != params.n() {
            return Err(Error::DimensionMismatch { what: "network", got: self.n(), expected: params.n() });
        }
        Ok(())
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch { what: "permutation", got: perm.len(), expected: n });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidPartition(format!("{perm:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// Joint second moments of `(θ, x_1, …, x_n)`.
#[derive(Debug, Clone)]
pub struct SignalCovariance {
    signals: DMatrix<f64>,
    state_variance: f64,
}

impl SignalCovariance {
    pub fn new(params: &GameParams) -> Self {
        let n = params.n();
        let prior_var = 1.0 / params.sigma_theta();
        let signals = DMatrix::from_fn(n, n, |l, m| {
            if l == m {
                prior_var + 1.0 / params.tau()[l]
            } else {
                prior_var
            }
        });
        SignalCovariance { signals, state_variance: prior_var }
    }

    pub fn n(&self) -> usize {
        self.signals.nrows()
    }

    /// `Σ_{ℓm} = Cov(x_ℓ, x_m)`.
    pub fn signals(&self) -> &DMatrix<f64> {
        &self.signals
    }

    /// `Cov(x_ℓ, θ)`, identical for every signal.
    pub fn state_signal(&self) -> DVector<f64> {
        DVector::from_element(self.n(), self.state_variance)
    }

    pub fn state_variance(&self) -> f64 {
        self.state_variance
    }

    /// `v' Σ w` over the signal block.
    pub fn inner(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        v.dot(&(&self.signals * w))
    }

    /// Root mean square of the linear action `v · x`.
    pub fn action_norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Covariance of the stacked vector `(θ, x_1, …, x_n)`; index 0 is the state.
    pub fn joint(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::from_element(n + 1, n + 1, self.state_variance);
        out.view_mut((1, 1), (n, n)).copy_from(&self.signals);
        out
    }
}

/// Weights `w` with `E[θ | x_subset] = Σ_ℓ w_ℓ x_ℓ`, in the order given.
pub fn posterior_weights(params: &GameParams, subset: &[usize]) -> Result<Vec<f64>> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    for &l in subset {
        params.check_agent(l)?;
    }
    let denom = params.pooled_precision(subset.iter().copied());
    Ok(subset.iter().map(|&l| params.tau()[l] / denom).collect())
}

/// [`posterior_weights`] scattered into a length-`n` vector.
pub(crate) fn posterior_vector(params: &GameParams, subset: &[usize]) -> DVector<f64> {
    let denom = params.pooled_precision(subset.iter().copied());
    let mut out = DVector::zeros(params.n());
    for &l in subset {
        out[l] = params.tau()[l] / denom;
    }
    out
}
