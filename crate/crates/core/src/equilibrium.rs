//! Linear Bayesian equilibrium of the action stage.
//!
//! Under truthful reporting agent `i` observes the signals of her closed
//! neighborhood and best responds with
//!
//! ```text
//! a_i = 1/(1+γ) E[θ | I_i] + γ/((1+γ) d_i) Σ_{j ∈ N_i} E[a_j | I_i]
//! ```
//!
//! (isolated agents play `E[θ | x_i]`). The best-response operator is a
//! contraction with modulus `γ/(1+γ)` in the norm `max_i ‖a_i‖₂`, so the
//! unique equilibrium can be found either by iteration or by solving the
//! stacked first-order conditions directly.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{posterior_vector, GameParams, Network, SignalCovariance};

pub const DEFAULT_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 1_000_000;

/// Action weights: agent `i` plays `a_i = Σ_ℓ b[i][ℓ] x_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCoefficients {
    b: DMatrix<f64>,
}

impl StrategyCoefficients {
    pub fn zeros(n: usize) -> Self {
        StrategyCoefficients { b: DMatrix::zeros(n, n) }
    }

    pub fn from_matrix(b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != b.ncols() {
            return Err(Error::DimensionMismatch { what: "coefficient columns", got: b.ncols(), expected: b.nrows() });
        }
        Ok(StrategyCoefficients { b })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { what: "coefficient row", got: bad.len(), expected: n });
        }
        Ok(StrategyCoefficients { b: DMatrix::from_fn(n, n, |i, l| rows[i][l]) })
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn get(&self, agent: usize, signal: usize) -> f64 {
        self.b[(agent, signal)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn row(&self, agent: usize) -> DVector<f64> {
        self.b.row(agent).transpose()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.b.row(i).iter().copied().collect()).collect()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &StrategyCoefficients) -> f64 {
        (&self.b - &other.b).amax()
    }

    /// Covariance-weighted distance `max_i sqrt(Δb_i' Σ Δb_i)`, i.e. the
    /// largest root-mean-square change in any agent's action.
    pub fn action_distance(&self, other: &StrategyCoefficients, cov: &SignalCovariance) -> f64 {
        (0..self.n())
            .map(|i| cov.action_norm(&(self.row(i) - other.row(i))))
            .fold(0.0, f64::max)
    }

    /// Rejects non-zero weights on signals outside an agent's closed neighborhood.
    pub fn check_support(&self, g: &Network) -> Result<()> {
        if self.n() != g.n() {
            return Err(Error::DimensionMismatch { what: "coefficients", got: self.n(), expected: g.n() });
        }
        for i in 0..self.n() {
            for l in 0..self.n() {
                if l != i && !g.has_edge(i, l) && self.b[(i, l)] != 0.0 {
                    return Err(Error::SupportViolation { agent: i, signal: l });
                }
            }
        }
        Ok(())
    }

    /// Relabels agents so that new agent `perm[i]` is old agent `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            for l in 0..n {
                b[(perm[i], perm[l])] = self.b[(i, l)];
            }
        }
        StrategyCoefficients { b }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FixedPoint,
    #[default]
    Direct,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::FixedPoint => "fixed_point",
            SolveMethod::Direct => "direct",
        })
    }
}

impl FromStr for SolveMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fixed_point" => Ok(SolveMethod::FixedPoint),
            "direct" => Ok(SolveMethod::Direct),
            other => Err(format!("unknown method {other:?}, expected fixed_point or direct")),
        }
    }
}

fn check_inputs(g: &Network, params: &GameParams) -> Result<()> {
    g.check_compatible(params)
}

/// Row `i` of `T(B)`, or of its linear part when `affine` is false.
fn best_response_row(g: &Network, params: &GameParams, b: &StrategyCoefficients, i: usize, affine: bool) -> DVector<f64> {
    let nbhd = g.closed_neighborhood(i);
    let posterior = posterior_vector(params, &nbhd);
    let d = g.degree(i);
    if d == 0 {
        return if affine { posterior } else { DVector::zeros(g.n()) };
    }
    let gamma = params.gamma();
    let mut inside = vec![false; g.n()];
    for &l in &nbhd {
        inside[l] = true;
    }

    // E[x_ℓ | I_i] = x_ℓ inside the neighborhood and E[θ | I_i] outside it,
    // so a neighbor's out-of-neighborhood weight folds onto the posterior.
    let mut expected_neighbors = DVector::zeros(g.n());
    for &j in g.neighbors(i) {
        let mut folded = 0.0;
        for l in 0..g.n() {
            let w = b.get(j, l);
            if inside[l] {
                expected_neighbors[l] += w;
            } else {
                folded += w;
            }
        }
        expected_neighbors.axpy(folded, &posterior, 1.0);
    }
    let coordination = expected_neighbors * (gamma / ((1.0 + gamma) * d as f64));
    if affine {
        posterior / (1.0 + gamma) + coordination
    } else {
        coordination
    }
}

/// The best-response operator `T`.
pub fn best_response_map(g: &Network, params: &GameParams, b: &StrategyCoefficients) -> Result<StrategyCoefficients> {
    check_inputs(g, params)?;
    b.check_support(g)?;
    Ok(apply_best_response(g, params, b))
}

fn apply_best_response(g: &Network, params: &GameParams, b: &StrategyCoefficients) -> StrategyCoefficients {
    apply_rows(g, params, b, true)
}

fn apply_rows(g: &Network, params: &GameParams, b: &StrategyCoefficients, affine: bool) -> StrategyCoefficients {
    let n = g.n();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        out.set_row(i, &best_response_row(g, params, b, i, affine).transpose());
    }
    StrategyCoefficients { b: out }
}

/// Largest covariance-weighted violation of the first-order conditions,
/// `max_i ‖(T B)_i − B_i‖`.
pub fn foc_residual(g: &Network, params: &GameParams, b: &StrategyCoefficients) -> Result<f64> {
    let tb = best_response_map(g, params, b)?;
    Ok(tb.action_distance(b, &SignalCovariance::new(params)))
}

/// Each agent uses only her own signal: `b_ii = τ_i / (σ_θ + τ_i)`.
pub fn babbling_strategy(params: &GameParams) -> StrategyCoefficients {
    let n = params.n();
    let diag = DVector::from_fn(n, |i, _| params.tau()[i] / (params.sigma_theta() + params.tau()[i]));
    StrategyCoefficients { b: DMatrix::from_diagonal(&diag) }
}

/// Unique equilibrium coefficients under truthful communication.
pub fn solve_truthful(g: &Network, params: &GameParams, method: SolveMethod, tol: f64) -> Result<StrategyCoefficients> {
    match method {
        SolveMethod::Direct => {
            if tol.is_nan() || tol <= 0.0 {
                return Err(Error::NonPositiveTolerance(tol));
            }
            solve_direct(g, params)
        }
        SolveMethod::FixedPoint => solve_fixed_point(g, params, tol).map(|trace| trace.coefficients),
    }
}

/// Output of the fixed-point iteration, including the covariance-weighted
/// length of every step `‖B_{k+1} − B_k‖`.
#[derive(Debug, Clone)]
pub struct FixedPointTrace {
    pub coefficients: StrategyCoefficients,
    pub step_norms: Vec<f64>,
}

impl FixedPointTrace {
    pub fn iterations(&self) -> usize {
        self.step_norms.len()
    }
}

/// Iterates `T` from the babbling profile until a step is shorter than `tol`.
///
/// `T` is affine, so each step is carried forward through its linear part,
/// `Δ_{k+1} = L Δ_k`, and added to the iterate. Step lengths then stay
/// accurate well below the round-off level of the coefficients themselves.
pub fn solve_fixed_point(g: &Network, params: &GameParams, tol: f64) -> Result<FixedPointTrace> {
    check_inputs(g, params)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::NonPositiveTolerance(tol));
    }
    let cov = SignalCovariance::new(params);
    let mut current = babbling_strategy(params);
    let mut delta = StrategyCoefficients { b: apply_best_response(g, params, &current).b - &current.b };
    let origin = StrategyCoefficients::zeros(g.n());
    let mut step_norms = Vec::new();
    while step_norms.len() < MAX_ITERATIONS {
        let step = delta.action_distance(&origin, &cov);
        step_norms.push(step);
        current.b += &delta.b;
        delta = apply_rows(g, params, &delta, false);
        if step < tol {
            return Ok(FixedPointTrace { coefficients: current, step_norms });
        }
    }
    Err(Error::NotConverged { iterations: MAX_ITERATIONS })
}

/// Solves the stacked first-order conditions over the support-restricted
/// unknowns `b_iℓ`, `ℓ ∈ N̄_i`.
pub fn solve_direct(g: &Network, params: &GameParams) -> Result<StrategyCoefficients> {
    check_inputs(g, params)?;
    let n = g.n();
    let gamma = params.gamma();
    let neighborhoods: Vec<Vec<usize>> = (0..n).map(|i| g.closed_neighborhood(i)).collect();
    let mut index = HashMap::new();
    for (i, nbhd) in neighborhoods.iter().enumerate() {
        for &l in nbhd {
            let next = index.len();
            index.insert((i, l), next);
        }
    }
    let dim = index.len();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    for i in 0..n {
        let nbhd = &neighborhoods[i];
        let posterior = posterior_vector(params, nbhd);
        let d = g.degree(i);
        if d == 0 {
            let r = index[&(i, i)];
            a[(r, r)] = 1.0;
            rhs[r] = posterior[i];
            continue;
        }
        let weight = gamma / ((1.0 + gamma) * d as f64);
        for &l in nbhd {
            let r = index[&(i, l)];
            a[(r, r)] += 1.0;
            rhs[r] = posterior[l] / (1.0 + gamma);
            for &j in g.neighbors(i) {
                if let Some(&c) = index.get(&(j, l)) {
                    a[(r, c)] -= weight;
                }
                for &m in &neighborhoods[j] {
                    if nbhd.binary_search(&m).is_err() {
                        a[(r, index[&(j, m)])] -= weight * posterior[l];
                    }
                }
            }
        }
    }

    let solution = a.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let mut b = DMatrix::zeros(n, n);
    for (&(i, l), &k) in &index {
        b[(i, l)] = solution[k];
    }
    Ok(StrategyCoefficients { b })
}
