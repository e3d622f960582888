//! Incentive compatibility of truthful reporting.
//!
//! A sender deviates jointly in the messages she sends and in her later
//! action, holding every other agent at the truthful equilibrium. Receivers
//! keep treating her messages as truthful, so neighbor `j` plays
//! `Σ_{ℓ≠i} b_jℓ x_ℓ + b_ji m_ij`. After the exchange the sender sees
//! `x_{N̄_i}` and best responds; before it she knows only `x_i`, and her
//! interim loss is a quadratic in the message vector whose minimizer is
//! linear in `x_i`. The optimal slopes therefore solve a `d_i × d_i` system.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{foc_residual, solve_truthful, SolveMethod, StrategyCoefficients, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::model::{posterior_vector, GameParams, Network, SignalCovariance};

/// Largest FOC residual accepted for the profile handed to [`optimal_deviation`].
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcTolerance {
    pub slope: f64,
    pub gain: f64,
}

impl Default for IcTolerance {
    fn default() -> Self {
        IcTolerance { slope: 1e-8, gain: 1e-10 }
    }
}

impl IcTolerance {
    pub fn uniform(tol: f64) -> Self {
        IcTolerance { slope: tol, gain: tol }
    }
}

/// One squared-loss term `weight · (alpha·y + beta·m)²` where
/// `y = (θ, x_1, …, x_n)` and `m` is the sender's message vector.
#[derive(Debug, Clone)]
struct LossTerm {
    weight: f64,
    alpha: DVector<f64>,
    beta: DVector<f64>,
}

/// The sender's deviation problem against a fixed truthful equilibrium.
#[derive(Debug, Clone)]
pub struct DeviationProblem {
    sender: usize,
    neighbors: Vec<usize>,
    terms: Vec<LossTerm>,
    /// `E[y | x_i] = conditional_mean · x_i`.
    conditional_mean: DVector<f64>,
    conditional_cov: DMatrix<f64>,
    sender_variance: f64,
    action_signal_weights: DVector<f64>,
    action_message_weights: DVector<f64>,
}

impl DeviationProblem {
    pub fn new(g: &Network, b: &StrategyCoefficients, params: &GameParams, sender: usize) -> Result<Self> {
        g.check_compatible(params)?;
        params.check_agent(sender)?;
        let residual = foc_residual(g, params, b)?;
        if residual.is_nan() || residual > EQUILIBRIUM_TOL {
            return Err(Error::NotAnEquilibrium { residual });
        }
        let d = g.degree(sender);
        if d == 0 {
            return Err(Error::IsolatedSender(sender));
        }
        let n = g.n();
        let gamma = params.gamma();
        let neighbors: Vec<usize> = g.neighbors(sender).iter().copied().collect();
        let nbhd = g.closed_neighborhood(sender);
        let posterior = posterior_vector(params, &nbhd);
        let weight = gamma / ((1.0 + gamma) * d as f64);

        // Neighbor j's action without the sender's message: b_j with b_ji removed.
        let others: Vec<DVector<f64>> = neighbors
            .iter()
            .map(|&j| {
                let mut row = b.row(j);
                row[sender] = 0.0;
                row
            })
            .collect();

        // Continuation best response a = signal_weights·x + message_weights·m.
        let mut signal_weights = &posterior / (1.0 + gamma);
        for row in &others {
            let mut projected = DVector::zeros(n);
            let mut folded = 0.0;
            for l in 0..n {
                if nbhd.binary_search(&l).is_ok() {
                    projected[l] = row[l];
                } else {
                    folded += row[l];
                }
            }
            projected.axpy(folded, &posterior, 1.0);
            signal_weights.axpy(weight, &projected, 1.0);
        }
        let message_weights = DVector::from_iterator(d, neighbors.iter().map(|&j| weight * b.get(j, sender)));

        let embed = |state: f64, signals: &DVector<f64>| {
            let mut out = DVector::zeros(n + 1);
            out[0] = state;
            out.rows_mut(1, n).copy_from(signals);
            out
        };
        let mut terms = vec![LossTerm { weight: 1.0, alpha: embed(-1.0, &signal_weights), beta: message_weights.clone() }];
        for (k, (&j, row)) in neighbors.iter().zip(&others).enumerate() {
            let mut beta = message_weights.clone();
            beta[k] -= b.get(j, sender);
            terms.push(LossTerm { weight: gamma / d as f64, alpha: embed(0.0, &(&signal_weights - row)), beta });
        }

        let joint = SignalCovariance::new(params).joint();
        let with_sender = joint.column(sender + 1).into_owned();
        let sender_variance = with_sender[sender + 1];
        let conditional_mean = &with_sender / sender_variance;
        let conditional_cov = &joint - &with_sender * with_sender.transpose() / sender_variance;

        Ok(DeviationProblem {
            sender,
            neighbors,
            terms,
            conditional_mean,
            conditional_cov,
            sender_variance,
            action_signal_weights: signal_weights,
            action_message_weights: message_weights,
        })
    }

    pub fn sender(&self) -> usize {
        self.sender
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    /// Weights of the continuation action on the signals `x_1..x_n`.
    pub fn action_signal_weights(&self) -> &DVector<f64> {
        &self.action_signal_weights
    }

    /// Weights of the continuation action on the messages sent, one per neighbor.
    pub fn action_message_weights(&self) -> &DVector<f64> {
        &self.action_message_weights
    }

    fn residual_variance(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * t.alpha.dot(&(&self.conditional_cov * &t.alpha)))
            .sum()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.neighbors.len() {
            return Err(Error::DimensionMismatch { what: "message vector", got: v.len(), expected: self.neighbors.len() });
        }
        Ok(())
    }

    /// Expected loss (accuracy plus coordination, excluding link cost) given
    /// the sender's own signal and the messages she sends, with the
    /// continuation action chosen optimally.
    pub fn interim_loss(&self, messages: &[f64], x_sender: f64) -> Result<f64> {
        self.check_len(messages)?;
        let m = DVector::from_column_slice(messages);
        let mean_part: f64 = self
            .terms
            .iter()
            .map(|t| t.weight * (t.alpha.dot(&self.conditional_mean) * x_sender + t.beta.dot(&m)).powi(2))
            .sum();
        Ok(self.residual_variance() + mean_part)
    }

    /// Ex-ante expected loss of the linear message rule `m_ij = slopes[k] · x_i`.
    pub fn expected_loss(&self, slopes: &[f64]) -> Result<f64> {
        self.check_len(slopes)?;
        let k = DVector::from_column_slice(slopes);
        let mean_part: f64 = self
            .terms
            .iter()
            .map(|t| t.weight * (t.alpha.dot(&self.conditional_mean) + t.beta.dot(&k)).powi(2))
            .sum();
        Ok(self.residual_variance() + self.sender_variance * mean_part)
    }

    fn hessian(&self) -> DMatrix<f64> {
        let d = self.neighbors.len();
        self.terms
            .iter()
            .fold(DMatrix::zeros(d, d), |acc, t| acc + &t.beta * t.beta.transpose() * t.weight)
    }

    /// Minimizer of the interim loss per unit of `x_i`.
    pub fn optimal_slopes(&self) -> Result<DVector<f64>> {
        let d = self.neighbors.len();
        let linear = self.terms.iter().fold(DVector::zeros(d), |acc: DVector<f64>, t| {
            acc + &t.beta * (t.weight * t.alpha.dot(&self.conditional_mean))
        });
        let solution = self.hessian().cholesky().ok_or(Error::SingularSystem)?.solve(&linear);
        Ok(-solution)
    }

    /// Solves the problem and summarizes it against truthful reporting.
    pub fn solve(&self) -> Result<SenderDeviation> {
        let slopes = self.optimal_slopes()?;
        let ones = DVector::from_element(self.neighbors.len(), 1.0);
        let diff = &ones - &slopes;
        // Exact quadratic expansion around the minimizer keeps the gain non-negative.
        let gain = self.sender_variance * diff.dot(&(self.hessian() * &diff));
        let slopes: Vec<f64> = slopes.iter().copied().collect();
        Ok(SenderDeviation {
            sender: self.sender,
            neighbors: self.neighbors.clone(),
            truthful_loss: self.expected_loss(&vec![1.0; slopes.len()])?,
            optimal_loss: self.expected_loss(&slopes)?,
            slopes,
            gain,
            action_signal_weights: self.action_signal_weights.iter().copied().collect(),
            action_message_weights: self.action_message_weights.iter().copied().collect(),
        })
    }
}

/// A sender's jointly optimal linear deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenderDeviation {
    pub sender: usize,
    pub neighbors: Vec<usize>,
    /// `slopes[k]`: optimal message to `neighbors[k]` is `slopes[k] · x_sender`.
    pub slopes: Vec<f64>,
    /// Truthful expected loss minus optimal expected loss.
    pub gain: f64,
    pub truthful_loss: f64,
    pub optimal_loss: f64,
    pub action_signal_weights: Vec<f64>,
    pub action_message_weights: Vec<f64>,
}

impl SenderDeviation {
    pub fn max_slope_error(&self) -> f64 {
        self.slopes.iter().map(|k| (k - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn is_truthful(&self, tol: IcTolerance) -> bool {
        self.max_slope_error() <= tol.slope && self.gain <= tol.gain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub per_sender: Vec<SenderDeviation>,
    pub is_truthful_ic: bool,
    /// First sender with a profitable deviation, if any.
    pub witness: Option<usize>,
    pub tolerance: IcTolerance,
}

pub fn optimal_deviation(
    g: &Network,
    b: &StrategyCoefficients,
    params: &GameParams,
    sender: usize,
) -> Result<SenderDeviation> {
    DeviationProblem::new(g, b, params, sender)?.solve()
}

/// Solves the truthful equilibrium and checks every non-isolated sender.
pub fn check_truthful_ic(g: &Network, params: &GameParams, tol: IcTolerance) -> Result<DeviationReport> {
    for t in [tol.slope, tol.gain] {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::NonPositiveTolerance(t));
        }
    }
    let b = solve_truthful(g, params, SolveMethod::Direct, DEFAULT_TOL)?;
    let senders: Vec<usize> = (0..g.n()).filter(|&i| g.degree(i) > 0).collect();
    let per_sender = senders
        .par_iter()
        .map(|&i| optimal_deviation(g, &b, params, i))
        .collect::<Result<Vec<_>>>()?;
    let witness = per_sender.iter().find(|s| !s.is_truthful(tol)).map(|s| s.sender);
    Ok(DeviationReport { is_truthful_ic: witness.is_none(), witness, per_sender, tolerance: tol })
}
