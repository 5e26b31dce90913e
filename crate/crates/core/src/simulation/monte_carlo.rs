use rayon::prelude::*;

use super::SimError;

/// Aggregate over successful replications, in seed order.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    /// Sample standard deviation across replications.
    pub sd: Vec<f64>,
    /// Standard error of the mean estimate, `sd / √successes`.
    pub mc_se: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Estimates of each successful replication, in seed order.
    pub estimates: Vec<Vec<f64>>,
    pub failures: usize,
    /// Seeds whose replication failed, with the reason.
    pub failed: Vec<(u64, String)>,
}

impl MonteCarloSummary {
    pub fn successes(&self) -> usize {
        self.estimates.len()
    }

    /// Whether `|mean − truth| ≤ k·mc_se` for parameter `i`.
    pub fn within_se(&self, i: usize, k: f64) -> bool {
        self.bias[i].abs() <= k * self.mc_se[i]
    }
}

/// Run `harness(seed)` for seeds `base_seed + 0 .. base_seed + replications`.
pub fn monte_carlo<F>(
    base_seed: u64,
    replications: usize,
    names: Vec<String>,
    truth: Vec<f64>,
    harness: F,
) -> Result<MonteCarloSummary, SimError>
where
    F: Fn(u64) -> Result<Vec<f64>, String> + Sync,
{
    let seeds: Vec<u64> = (0..replications as u64)
        .map(|i| base_seed.wrapping_add(i))
        .collect();
    monte_carlo_seeds(&seeds, names, truth, harness)
}

/// [`monte_carlo`] over an explicit seed list. Replications run in
/// parallel; aggregation follows the order of `seeds`.
pub fn monte_carlo_seeds<F>(
    seeds: &[u64],
    names: Vec<String>,
    truth: Vec<f64>,
    harness: F,
) -> Result<MonteCarloSummary, SimError>
where
    F: Fn(u64) -> Result<Vec<f64>, String> + Sync,
{
    if seeds.len() < 2 {
        return Err(SimError::TooFewReplications(seeds.len()));
    }
    if names.len() != truth.len() {
        return Err(SimError::InvalidConfig(
            "names and truth differ in length".into(),
        ));
    }
    let outcomes: Vec<Result<Vec<f64>, String>> = seeds.par_iter().map(|&s| harness(s)).collect();
    let k = names.len();
    let mut estimates = Vec::new();
    let mut failed = Vec::new();
    for (&seed, outcome) in seeds.iter().zip(outcomes) {
        match outcome {
            Ok(est) if est.len() == k => estimates.push(est),
            Ok(est) => failed.push((seed, format!("expected {k} estimates, got {}", est.len()))),
            Err(reason) => failed.push((seed, reason)),
        }
    }
    if estimates.is_empty() {
        return Err(SimError::AllReplicationsFailed(failed.len()));
    }
    let m = estimates.len() as f64;
    let mean: Vec<f64> = (0..k)
        .map(|i| estimates.iter().map(|e| e[i]).sum::<f64>() / m)
        .collect();
    let sd: Vec<f64> = (0..k)
        .map(|i| {
            if estimates.len() < 2 {
                return f64::NAN;
            }
            let ss: f64 = estimates.iter().map(|e| (e[i] - mean[i]).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(MonteCarloSummary {
        bias: mean.iter().zip(&truth).map(|(a, b)| a - b).collect(),
        mc_se: sd.iter().map(|s| s / m.sqrt()).collect(),
        names,
        truth,
        mean,
        sd,
        seeds: seeds.to_vec(),
        estimates,
        failures: failed.len(),
        failed,
    })
}
