//! Sampling oracle for the closed-form payoffs and deviation losses.
//!
//! Samples are drawn in fixed-size chunks; chunk `k` uses its own ChaCha
//! stream derived from `(seed, k)`, and chunk statistics are merged in chunk
//! order. Results are therefore a function of the inputs and the seed only,
//! whatever the number of worker threads.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_truthful, SolveMethod, StrategyCoefficients, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::incentives::DeviationProblem;
use crate::model::{GameParams, Network};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const FULL_SAMPLES: usize = 1_000_000;
const CHUNK: usize = 8192;

/// Running mean and second central moment (Chan et al. merge).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if other.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return other;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }

    fn stderr(&self) -> f64 {
        if self.count < 2.0 {
            0.0
        } else {
            (self.m2 / (self.count - 1.0) / self.count).sqrt()
        }
    }
}

/// Draws `(θ, x)` into the provided buffer and returns `θ`.
struct Sampler {
    prior_sd: f64,
    noise_sd: Vec<f64>,
}

impl Sampler {
    fn new(params: &GameParams) -> Self {
        Sampler {
            prior_sd: params.sigma_theta().recip().sqrt(),
            noise_sd: params.tau().iter().map(|t| t.recip().sqrt()).collect(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, x: &mut DVector<f64>) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let theta = self.prior_sd * z;
        for (xi, sd) in x.iter_mut().zip(&self.noise_sd) {
            let e: f64 = StandardNormal.sample(rng);
            *xi = theta + sd * e;
        }
        theta
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Runs `per_sample` over `samples` draws and returns per-output moments.
fn run_chunked<F>(samples: usize, seed: u64, outputs: usize, per_sample: F) -> Vec<Moments>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = chunk_rng(seed, k);
            let len = CHUNK.min(samples - k * CHUNK);
            let mut acc = vec![Moments::default(); outputs];
            let mut out = vec![0.0; outputs];
            for _ in 0..len {
                per_sample(&mut rng, &mut out);
                for (m, &v) in acc.iter_mut().zip(&out) {
                    m.push(v);
                }
            }
            acc
        })
        .collect();
    partial.into_iter().fold(vec![Moments::default(); outputs], |acc, chunk| {
        acc.into_iter().zip(chunk).map(|(a, c)| a.merge(c)).collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub per_agent_mean: Vec<f64>,
    pub per_agent_stderr: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// Simulates the game with actions `a = B x` and realized payoffs including link costs.
pub fn simulate(
    g: &Network,
    b: &StrategyCoefficients,
    params: &GameParams,
    samples: usize,
    seed: u64,
) -> Result<SimulationResult> {
    g.check_compatible(params)?;
    if b.n() != g.n() {
        return Err(Error::DimensionMismatch { what: "coefficients", got: b.n(), expected: g.n() });
    }
    if samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let n = g.n();
    let sampler = Sampler::new(params);
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| g.neighbors(i).iter().copied().collect()).collect();
    let costs: Vec<f64> = (0..n).map(|i| params.cost(g.degree(i))).collect();
    let gamma = params.gamma();
    let matrix = b.matrix();

    let moments = run_chunked(samples, seed, n, |rng, out| {
        let mut x = DVector::zeros(n);
        let theta = sampler.draw(rng, &mut x);
        let a = matrix * &x;
        for i in 0..n {
            let mut u = -(a[i] - theta).powi(2) - costs[i];
            if !neighbors[i].is_empty() {
                let spread: f64 = neighbors[i].iter().map(|&j| (a[i] - a[j]).powi(2)).sum();
                u -= gamma / neighbors[i].len() as f64 * spread;
            }
            out[i] = u;
        }
    });
    Ok(SimulationResult {
        per_agent_mean: moments.iter().map(|m| m.mean).collect(),
        per_agent_stderr: moments.iter().map(Moments::stderr).collect(),
        samples,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSimulation {
    /// Mean realized loss (accuracy plus coordination, no link cost).
    pub mean_loss: f64,
    pub stderr: f64,
    /// Mean of truthful loss minus deviation loss on the same draws.
    pub mean_gain: f64,
    pub gain_stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Simulates `sender` sending `slopes[k] · x_sender` to her `k`-th neighbor
/// and then playing her optimal continuation action, everyone else truthful.
pub fn simulate_deviation_slopes(
    g: &Network,
    params: &GameParams,
    sender: usize,
    slopes: &[f64],
    samples: usize,
    seed: u64,
) -> Result<DeviationSimulation> {
    if samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let b = solve_truthful(g, params, SolveMethod::Direct, DEFAULT_TOL)?;
    let problem = DeviationProblem::new(g, &b, params, sender)?;
    let neighbors = problem.neighbors().to_vec();
    if slopes.len() != neighbors.len() {
        return Err(Error::DimensionMismatch { what: "slopes", got: slopes.len(), expected: neighbors.len() });
    }
    let n = g.n();
    let d = neighbors.len() as f64;
    let gamma = params.gamma();
    let sampler = Sampler::new(params);
    let signal_weights = problem.action_signal_weights().clone();
    let message_weights = problem.action_message_weights().clone();
    let receiver_rows: Vec<DVector<f64>> = neighbors
        .iter()
        .map(|&j| {
            let mut row = b.row(j);
            row[sender] = 0.0;
            row
        })
        .collect();
    let received_weight: Vec<f64> = neighbors.iter().map(|&j| b.get(j, sender)).collect();

    let loss = |theta: f64, x: &DVector<f64>, k: &[f64]| {
        let messages: Vec<f64> = k.iter().map(|s| s * x[sender]).collect();
        let own = signal_weights.dot(x) + message_weights.iter().zip(&messages).map(|(w, m)| w * m).sum::<f64>();
        let spread: f64 = receiver_rows
            .iter()
            .zip(&received_weight)
            .zip(&messages)
            .map(|((row, w), m)| (own - row.dot(x) - w * m).powi(2))
            .sum();
        (own - theta).powi(2) + gamma / d * spread
    };
    let truthful = vec![1.0; neighbors.len()];

    let moments = run_chunked(samples, seed, 2, |rng, out| {
        let mut x = DVector::zeros(n);
        let theta = sampler.draw(rng, &mut x);
        let deviating = loss(theta, &x, slopes);
        out[0] = deviating;
        out[1] = loss(theta, &x, &truthful) - deviating;
    });
    Ok(DeviationSimulation {
        mean_loss: moments[0].mean,
        stderr: moments[0].stderr(),
        mean_gain: moments[1].mean,
        gain_stderr: moments[1].stderr(),
        samples,
        seed,
    })
}

/// [`simulate_deviation_slopes`] with the same slope on every link.
pub fn simulate_deviation(
    g: &Network,
    params: &GameParams,
    sender: usize,
    slope: f64,
    samples: usize,
    seed: u64,
) -> Result<DeviationSimulation> {
    params.check_agent(sender)?;
    g.check_compatible(params)?;
    let slopes = vec![slope; g.degree(sender)];
    simulate_deviation_slopes(g, params, sender, &slopes, samples, seed)
}
