//! Test-only oracles, built independently of the library's solution paths.
#![allow(dead_code)]

use infoclubs::formation::enumerate_clique_partitions;
use infoclubs::{CliquePartition, GameParams, Network, StrategyCoefficients};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_params(rng: &mut ChaCha8Rng, n: usize) -> GameParams {
    let sigma = rng.random_range(0.2..5.0);
    let gamma = rng.random_range(0.1..5.0);
    let tau: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
    let mut increments: Vec<f64> = (1..n).map(|_| rng.random_range(0.0..0.1)).collect();
    increments.sort_by(f64::total_cmp);
    let mut cost = vec![0.0];
    for dc in increments {
        cost.push(cost.last().unwrap() + dc);
    }
    GameParams::new(sigma, gamma, tau, cost).unwrap()
}

pub fn random_network(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Network {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Network::new(n, &edges).unwrap()
}

pub fn random_blocks(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut blocks: Vec<Vec<usize>> = (0..n).map(|k| (0..n).filter(|&i| labels[i] == k).collect()).collect();
    blocks.retain(|b: &Vec<usize>| !b.is_empty());
    blocks
}

/// Every simple graph on `n` labeled vertices.
pub fn all_networks(n: usize) -> Vec<Network> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    (0u32..(1 << pairs.len()))
        .map(|mask| {
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, e)| *e).collect();
            Network::new(n, &edges).unwrap()
        })
        .collect()
}

/// Covariance of `(θ, x_1, …, x_n)` written out from the model primitives.
pub fn joint_covariance(params: &GameParams) -> DMatrix<f64> {
    let n = params.n();
    let v = 1.0 / params.sigma_theta();
    DMatrix::from_fn(n + 1, n + 1, |r, c| if r == c && r > 0 { v + 1.0 / params.tau()[r - 1] } else { v })
}

/// Ex-ante deviation loss of `sender` using messages `slopes[k] · x_sender`,
/// computed by explicit Gaussian conditioning `J[:, I] J[I, I]⁻¹` rather than
/// by any shortcut.
pub fn oracle_deviation_loss(
    g: &Network,
    b: &StrategyCoefficients,
    params: &GameParams,
    sender: usize,
    slopes: &[f64],
) -> f64 {
    let n = g.n();
    let joint = joint_covariance(params);
    let info: Vec<usize> = g.closed_neighborhood(sender);
    let rows: Vec<usize> = info.iter().map(|l| l + 1).collect();
    let j_ii = DMatrix::from_fn(rows.len(), rows.len(), |a, c| joint[(rows[a], rows[c])]);
    let j_yi = DMatrix::from_fn(n + 1, rows.len(), |r, c| joint[(r, rows[c])]);
    let projector = &j_yi * j_ii.try_inverse().unwrap();

    // Expresses E[c'y | x_I] as a functional on y.
    let condition = |c: &DVector<f64>| -> DVector<f64> {
        let on_info = projector.transpose() * c;
        let mut out = DVector::zeros(n + 1);
        for (k, &r) in rows.iter().enumerate() {
            out[r] = on_info[k];
        }
        out
    };
    let neighbors: Vec<usize> = g.neighbors(sender).iter().copied().collect();
    let d = neighbors.len() as f64;
    let gamma = params.gamma();
    let mut state = DVector::zeros(n + 1);
    state[0] = 1.0;

    let receiver_actions: Vec<DVector<f64>> = neighbors
        .iter()
        .zip(slopes)
        .map(|(&j, k)| {
            let mut c = DVector::zeros(n + 1);
            for l in 0..n {
                c[l + 1] = b.get(j, l);
            }
            c[sender + 1] = b.get(j, sender) * k;
            c
        })
        .collect();
    let mut own = condition(&state);
    for a in &receiver_actions {
        own += condition(a) * (gamma / d);
    }
    own /= 1.0 + gamma;

    let quad = |c: &DVector<f64>| c.dot(&(&joint * c));
    let mut loss = quad(&(&own - &state));
    for a in &receiver_actions {
        loss += gamma / d * quad(&(&own - a));
    }
    loss
}

/// Minimizes `f` over a box by a coarse grid followed by repeated local grid
/// refinement. Works in one or two dimensions.
pub fn grid_minimize(f: impl Fn(&[f64]) -> f64, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(dim == 1 || dim == 2);
    let points = 41usize;
    let mut center = vec![(lo + hi) / 2.0; dim];
    let mut half = (hi - lo) / 2.0;
    while half > 1e-10 {
        let step = 2.0 * half / (points - 1) as f64;
        let mut best = (f64::INFINITY, center.clone());
        let grid = |k: usize, c: f64| c - half + step * k as f64;
        if dim == 1 {
            for a in 0..points {
                let p = vec![grid(a, center[0])];
                let v = f(&p);
                if v < best.0 {
                    best = (v, p);
                }
            }
        } else {
            for a in 0..points {
                for c in 0..points {
                    let p = vec![grid(a, center[0]), grid(c, center[1])];
                    let v = f(&p);
                    if v < best.0 {
                        best = (v, p);
                    }
                }
            }
        }
        center = best.1;
        half = 2.0 * step;
    }
    center
}

/// Does some coalition, splitting itself into any truthful clique partition,
/// weakly improve all members and strictly improve one?
pub fn oracle_is_blocked(candidate: &CliquePartition, params: &GameParams, tol: f64) -> bool {
    let n = params.n();
    let clique = |members: &[usize]| -> f64 {
        let s: f64 = members.iter().map(|&l| params.tau()[l]).sum();
        -1.0 / (params.sigma_theta() + s) - params.cost(members.len() - 1)
    };
    let mut current = vec![0.0; n];
    for block in candidate.blocks() {
        for &i in block {
            current[i] = clique(block);
        }
    }
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        for sub in enumerate_clique_partitions(members.len()).unwrap() {
            let mut weak = true;
            let mut strict = false;
            for block in sub.blocks() {
                let agents: Vec<usize> = block.iter().map(|&k| members[k]).collect();
                let u = clique(&agents);
                for &i in &agents {
                    weak &= u >= current[i] - tol;
                    strict |= u > current[i] + tol;
                }
            }
            if weak && strict {
                return true;
            }
        }
    }
    false
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
