use rayon::prelude::*;

use crate::netgraph::{Deployment, SectorIndex};
use crate::{rng, Error, Result};

pub const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub deployment: Deployment,
    pub k: usize,
    pub trials: usize,
}

impl MonteCarloConfig {
    pub fn new(deployment: Deployment, k: usize, trials: usize) -> Self {
        MonteCarloConfig { deployment, k, trials }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("k", "k must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::domain("trials", "need at least one trial"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub probability: f64,
    pub stderr: f64,
    pub successes: u64,
    /// Number of Bernoulli samples behind the estimate.
    pub samples: u64,
}

impl MonteCarloEstimate {
    fn binomial(successes: u64, samples: u64) -> Self {
        let p = if samples == 0 { 0.0 } else { successes as f64 / samples as f64 };
        let stderr = if samples == 0 { 0.0 } else { (p * (1.0 - p) / samples as f64).sqrt() };
        MonteCarloEstimate { probability: p, stderr, successes, samples }
    }
}

/// Runs `per_trial` on every trial's graph with its own RNG stream and sums
/// the integer tallies, so the result does not depend on the thread count.
fn tally<const N: usize>(
    config: &MonteCarloConfig,
    seed: u64,
    per_trial: impl Fn(&SectorIndex) -> [u64; N] + Sync,
) -> Result<[u64; N]> {
    config.validate()?;
    let d = config.deployment;
    (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let sectors = d.sample_sectors(&mut rng::stream(seed, &[trial]))?;
            let index = SectorIndex::new(&sectors, d.area_side, d.border);
            Ok(per_trial(&index))
        })
        .try_reduce(
            || [0; N],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

/// Fraction of deployments in which every node has at least `k` descendants
/// and `k` antecedents.
pub fn monte_carlo_p_connected(config: &MonteCarloConfig, seed: u64) -> Result<MonteCarloEstimate> {
    let k = config.k;
    let [hits] = tally(config, seed, |index| [index.is_k_connected(k) as u64])?;
    Ok(MonteCarloEstimate::binomial(hits, config.trials as u64))
}

/// Fraction of nodes, pooled over deployments, with at least `k`
/// descendants.
///
/// Nodes within one deployment are weakly dependent, so the reported
/// standard error is the binomial one over pooled nodes.
pub fn monte_carlo_degree_tail(config: &MonteCarloConfig, seed: u64) -> Result<MonteCarloEstimate> {
    let k = config.k;
    let [hits, nodes] = tally(config, seed, |index| {
        let m = index.len();
        let hits = (0..m).filter(|&i| index.degrees_capped(i, k).0 >= k).count();
        [hits as u64, m as u64]
    })?;
    Ok(MonteCarloEstimate::binomial(hits, nodes))
}

/// Among nodes with at least `k` descendants, the fraction that also have at
/// least `k` antecedents.
pub fn monte_carlo_backward_given_forward(config: &MonteCarloConfig, seed: u64) -> Result<MonteCarloEstimate> {
    let k = config.k;
    let [hits, eligible] = tally(config, seed, |index| {
        let (mut hits, mut eligible) = (0, 0);
        for i in 0..index.len() {
            let (out, inn) = index.degrees_capped(i, k);
            if out >= k {
                eligible += 1;
                hits += (inn >= k) as u64;
            }
        }
        [hits, eligible]
    })?;
    Ok(MonteCarloEstimate::binomial(hits, eligible))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::BorderMode;

    #[test]
    fn zero_range_never_connects() {
        let cfg = MonteCarloConfig::new(Deployment::new(50, 1.0, 1.0, 0.0), 1, 500);
        let est = monte_carlo_p_connected(&cfg, 3).unwrap();
        assert_eq!(est.probability, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn full_coverage_always_connects() {
        let d = Deployment::new(20, 1.0, std::f64::consts::TAU, 2.0).with_border(BorderMode::Torus);
        let est = monte_carlo_p_connected(&MonteCarloConfig::new(d, 3, 200), 3).unwrap();
        assert_eq!(est.probability, 1.0);
    }

    #[test]
    fn independent_of_thread_count() {
        let d = Deployment::new(120, 1.0, 2.0, 0.12);
        let cfg = MonteCarloConfig::new(d, 1, 400);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| (monte_carlo_p_connected(&cfg, 9).unwrap(), monte_carlo_degree_tail(&cfg, 9).unwrap()))
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn rejects_bad_config() {
        let d = Deployment::new(10, 1.0, 1.0, 0.1);
        assert!(monte_carlo_p_connected(&MonteCarloConfig::new(d, 0, 10), 0).is_err());
        assert!(monte_carlo_p_connected(&MonteCarloConfig::new(d, 1, 0), 0).is_err());
    }
}
