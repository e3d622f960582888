//! Clique partitions ("information clubs"), the recursive assortative
//! construction, core verification, and welfare comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GameParams;
use crate::payoffs::{clique_payoff_unchecked, welfare};

/// Largest `n` for which every set partition is enumerated.
pub const PARTITION_GUARD: usize = 12;
/// Largest `n` for which every coalition is enumerated.
pub const COALITION_GUARD: usize = 15;
pub const DEFAULT_PAYOFF_TOL: f64 = 1e-9;
/// Objective values this close are treated as tied in the recursive step.
const TIE_EPS: f64 = 1e-12;

/// Disjoint blocks covering agents `0..n`; each block is a clique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliquePartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl CliquePartition {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &i in block {
                if i >= n {
                    return Err(Error::AgentOutOfRange { agent: i, n });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidPartition(format!("agent {i} appears in more than one block")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("agent {missing} is not covered")));
        }
        Ok(CliquePartition { n, blocks })
    }

    pub fn singletons(n: usize) -> Self {
        CliquePartition { n, blocks: (0..n).map(|i| vec![i]).collect() }
    }

    pub fn grand(n: usize) -> Self {
        CliquePartition { n, blocks: vec![(0..n).collect()] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// `block_index()[i]` is the position of agent `i`'s block.
    pub fn block_index(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (k, block) in self.blocks.iter().enumerate() {
            for &i in block {
                out[i] = k;
            }
        }
        out
    }

    pub fn block_of(&self, agent: usize) -> &[usize] {
        self.blocks.iter().find(|b| b.contains(&agent)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Same partition with members and blocks sorted, for order-free comparison.
    pub fn canonical(&self) -> Self {
        let mut blocks: Vec<Vec<usize>> = self
            .blocks
            .iter()
            .map(|b| {
                let mut b = b.clone();
                b.sort_unstable();
                b
            })
            .collect();
        blocks.sort();
        CliquePartition { n: self.n, blocks }
    }

    /// True iff the blocks can be ordered so that every member of an earlier
    /// block has weakly higher precision than every member of a later one.
    pub fn is_assortative(&self, tau: &[f64]) -> bool {
        let mut ranges: Vec<(f64, f64)> = self
            .blocks
            .iter()
            .map(|b| {
                let hi = b.iter().map(|&i| tau[i]).fold(f64::NEG_INFINITY, f64::max);
                let lo = b.iter().map(|&i| tau[i]).fold(f64::INFINITY, f64::min);
                (hi, lo)
            })
            .collect();
        ranges.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
        ranges.windows(2).all(|w| w[0].1 >= w[1].0)
    }

    /// Truthful clique payoff of every agent.
    pub fn payoffs(&self, params: &GameParams) -> Result<Vec<f64>> {
        self.check_agents(params.n())?;
        let mut out = vec![0.0; self.n];
        for block in &self.blocks {
            let u = clique_payoff_unchecked(block, params);
            for &i in block {
                out[i] = u;
            }
        }
        Ok(out)
    }

    pub(crate) fn check_agents(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::DimensionMismatch { what: "partition", got: self.n, expected: n });
        }
        Ok(())
    }
}

/// Agents by descending precision; ties keep their input order.
pub fn precision_order(params: &GameParams) -> Vec<usize> {
    let mut order: Vec<usize> = (0..params.n()).collect();
    order.sort_by(|&a, &b| params.tau()[b].total_cmp(&params.tau()[a]));
    order
}

/// One closed block of the recursive procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursiveStep {
    pub block: Vec<usize>,
    /// Objective `−1/(σ_θ + Σ_{ℓ=r}^{s} τ_ℓ) − c(s − r)` for every endpoint
    /// `s = r, r+1, …` over the residual ranking.
    pub objective: Vec<f64>,
    pub payoff: f64,
}

/// Builds the assortative partition block by block, starting each block at
/// the highest-precision unassigned agent and extending it to the payoff
/// maximizing endpoint (the smallest one on ties).
pub fn recursive_steps(params: &GameParams) -> Vec<RecursiveStep> {
    let order = precision_order(params);
    let mut steps = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut pooled = params.sigma_theta();
        let objective: Vec<f64> = order[start..]
            .iter()
            .enumerate()
            .map(|(links, &agent)| {
                pooled += params.tau()[agent];
                -1.0 / pooled - params.cost(links)
            })
            .collect();
        let mut best = 0;
        for (k, &v) in objective.iter().enumerate().skip(1) {
            if v > objective[best] + TIE_EPS {
                best = k;
            }
        }
        let block = order[start..=start + best].to_vec();
        steps.push(RecursiveStep { payoff: objective[best], block, objective });
        start += best + 1;
    }
    steps
}

pub fn recursive_partition(params: &GameParams) -> CliquePartition {
    CliquePartition { n: params.n(), blocks: recursive_steps(params).into_iter().map(|s| s.block).collect() }
}

/// Open interval of linear cost slopes for which the recursive procedure on
/// precisions `(h, h, l, l)` returns `{{h,h},{l,l}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl KappaInterval {
    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn contains(&self, kappa: f64) -> bool {
        self.lo < kappa && kappa < self.hi
    }
}

pub fn kappa_region(h: f64, l: f64, sigma_theta: f64) -> Result<KappaInterval> {
    if !(l > 0.0 && h >= l && sigma_theta > 0.0 && h.is_finite() && sigma_theta.is_finite()) {
        return Err(Error::KappaOrdering { h, l, sigma_theta });
    }
    let s = sigma_theta;
    // Pair beats the triple {h,h,l}.
    let lo = l / ((s + 2.0 * h) * (s + 2.0 * h + l));
    // Pair beats the singleton {h}, and {l,l} beats two singletons.
    let high_pair = h / ((s + h) * (s + 2.0 * h));
    let low_pair = l / ((s + l) * (s + 2.0 * l));
    Ok(KappaInterval { lo, hi: high_pair.min(low_pair) })
}

/// Every set partition of `0..n` exactly once, as restricted growth strings.
#[derive(Debug, Clone)]
pub struct SetPartitions {
    labels: Vec<usize>,
    maxima: Vec<usize>,
    done: bool,
}

impl Iterator for SetPartitions {
    type Item = CliquePartition;

    fn next(&mut self) -> Option<CliquePartition> {
        if self.done {
            return None;
        }
        let n = self.labels.len();
        let count = self.maxima.last().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); count];
        for (i, &l) in self.labels.iter().enumerate() {
            blocks[l].push(i);
        }
        let current = CliquePartition { n, blocks };

        // Advance: bump the rightmost label that can grow, reset the tail.
        self.done = true;
        for i in (1..n).rev() {
            if self.labels[i] <= self.maxima[i - 1] {
                self.labels[i] += 1;
                self.maxima[i] = self.maxima[i - 1].max(self.labels[i]);
                for k in i + 1..n {
                    self.labels[k] = 0;
                    self.maxima[k] = self.maxima[i];
                }
                self.done = false;
                break;
            }
        }
        Some(current)
    }
}

pub fn enumerate_clique_partitions(n: usize) -> Result<SetPartitions> {
    if n == 0 {
        return Err(Error::NoAgents);
    }
    if n > PARTITION_GUARD {
        return Err(Error::GuardExceeded { what: "partition enumeration", n, limit: PARTITION_GUARD });
    }
    Ok(SetPartitions { labels: vec![0; n], maxima: vec![0; n], done: false })
}

/// Best payoff any agent could reach with `d` links:
/// `max_d [−1/(σ_θ + top d+1 precisions) − c(d)]`.
pub fn ideal_upper_bound(params: &GameParams) -> f64 {
    let mut tau = params.tau().to_vec();
    tau.sort_by(|a, b| b.total_cmp(a));
    let mut pooled = params.sigma_theta();
    tau.iter()
        .enumerate()
        .map(|(d, t)| {
            pooled += t;
            -1.0 / pooled - params.cost(d)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Candidate payoff of each agent minus [`ideal_upper_bound`].
pub fn upper_bound_slack(candidate: &CliquePartition, params: &GameParams) -> Result<Vec<f64>> {
    let bound = ideal_upper_bound(params);
    Ok(candidate.payoffs(params)?.into_iter().map(|u| u - bound).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingWitness {
    pub coalition: Vec<usize>,
    pub clique_payoff: f64,
    /// Members strictly better off in the deviating clique.
    pub improved: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingReport {
    pub payoffs: Vec<f64>,
    pub upper_bound: f64,
    pub upper_bound_slack: Vec<f64>,
    /// Every agent already reaches the ideal bound, so no deviation of any
    /// kind can improve anyone.
    pub bound_certified: bool,
    pub blocking_witnesses: Vec<BlockingWitness>,
    pub in_core: bool,
    pub tolerance: f64,
}

/// Searches every coalition for a truthful clique that weakly improves all
/// members and strictly improves one, and reports the ideal-bound slack.
pub fn core_check(candidate: &CliquePartition, params: &GameParams, tol: f64) -> Result<BlockingReport> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::NonPositiveTolerance(tol));
    }
    let n = params.n();
    candidate.check_agents(n)?;
    if n > COALITION_GUARD {
        return Err(Error::GuardExceeded { what: "coalition search", n, limit: COALITION_GUARD });
    }
    let payoffs = candidate.payoffs(params)?;
    let upper_bound = ideal_upper_bound(params);
    let upper_bound_slack: Vec<f64> = payoffs.iter().map(|u| u - upper_bound).collect();
    let bound_certified = upper_bound_slack.iter().all(|&s| s >= -tol);

    let mut blocking_witnesses = Vec::new();
    let mut members = Vec::with_capacity(n);
    for mask in 1u32..(1u32 << n) {
        members.clear();
        members.extend((0..n).filter(|&i| mask & (1 << i) != 0));
        let u = clique_payoff_unchecked(&members, params);
        if members.iter().any(|&i| u < payoffs[i] - tol) {
            continue;
        }
        let improved: Vec<usize> = members.iter().copied().filter(|&i| u > payoffs[i] + tol).collect();
        if !improved.is_empty() {
            blocking_witnesses.push(BlockingWitness { coalition: members.clone(), clique_payoff: u, improved });
        }
    }
    Ok(BlockingReport {
        in_core: blocking_witnesses.is_empty(),
        payoffs,
        upper_bound,
        upper_bound_slack,
        bound_certified,
        blocking_witnesses,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub best_partition: CliquePartition,
    pub best_welfare: f64,
    pub core_partition: CliquePartition,
    pub core_welfare: f64,
    /// `best_welfare − core_welfare`, never negative.
    pub gap: f64,
    pub partitions_examined: usize,
}

/// Welfare-maximizing clique partition against the recursive core partition.
pub fn efficiency_frontier(params: &GameParams) -> Result<EfficiencyReport> {
    let core_partition = recursive_partition(params);
    let core_welfare = welfare(&core_partition, params)?;
    let mut best: Option<(CliquePartition, f64)> = None;
    let mut partitions_examined = 0;
    for partition in enumerate_clique_partitions(params.n())? {
        partitions_examined += 1;
        let w = welfare(&partition, params)?;
        if best.as_ref().is_none_or(|(_, bw)| w > *bw) {
            best = Some((partition, w));
        }
    }
    let (best_partition, best_welfare) = best.expect("at least one partition");
    // The core partition is one of the enumerated ones; prefer it on ties.
    let (best_partition, best_welfare) = if best_welfare <= core_welfare {
        (core_partition.clone(), core_welfare)
    } else {
        (best_partition, best_welfare)
    };
    Ok(EfficiencyReport {
        gap: best_welfare - core_welfare,
        best_partition,
        best_welfare,
        core_partition,
        core_welfare,
        partitions_examined,
    })
}
