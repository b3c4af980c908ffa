//! Worst-case Monte Carlo validation shared by the three observation regimes.
//!
//! Each regime exposes a [`WorstCaseModel`]: given a trial kind and a random
//! generator it draws admissible data and noise, simulates the observations
//! through its forward solver and returns the estimation error
//! `l(φ̃) − l̂(φ̃)`. The empirical mean of `|error|²` must stay below `σ²`.

use num_complex::Complex64 as C;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Result;

/// How a trial draws its data perturbation and noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrialKind {
    /// Data on the boundary of the uncertainty ellipsoid in a random
    /// direction; uncorrelated noise exhausting the noise budget.
    Random,
    /// Data at the analytic extremizer (random unimodular phase);
    /// uncorrelated noise exhausting the noise budget.
    ExtremalData,
    /// Data and noise both at their analytic extremizers — the saddle
    /// element whose expected squared error is exactly `σ²`.
    ExtremalNoise,
}

impl TrialKind {
    pub const ALL: [TrialKind; 3] = [TrialKind::Random, TrialKind::ExtremalData, TrialKind::ExtremalNoise];

    pub fn name(self) -> &'static str {
        match self {
            TrialKind::Random => "random",
            TrialKind::ExtremalData => "extremal_data",
            TrialKind::ExtremalNoise => "extremal_noise",
        }
    }

    /// Kinds cycle through trials so every run mixes all three.
    pub fn for_trial(i: usize) -> TrialKind {
        Self::ALL[i % 3]
    }
}

/// A regime-specific simulator of estimation errors.
pub trait WorstCaseModel: Sync {
    /// Guaranteed mean-square error `σ²`.
    fn sigma_sq(&self) -> f64;

    /// Simulated error `l(φ̃) − l̂(φ̃)` of one trial.
    fn trial_error(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Result<C>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub kind: TrialKind,
    pub sq_error: f64,
    pub ratio_to_sigma2: f64,
}

/// Runs `trials` independent trials; trial `i` uses stream `i` of a ChaCha
/// generator seeded with `seed`, so results do not depend on scheduling.
pub fn monte_carlo(model: &dyn WorstCaseModel, trials: usize, seed: u64) -> Result<Vec<TrialRecord>> {
    let s2 = model.sigma_sq();
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let kind = TrialKind::for_trial(i);
            let e = model.trial_error(kind, &mut rng)?;
            let sq = e.norm_sqr();
            let ratio = if s2 > 0.0 { sq / s2 } else if sq == 0.0 { 0.0 } else { f64::INFINITY };
            Ok(TrialRecord { trial: i, kind, sq_error: sq, ratio_to_sigma2: ratio })
        })
        .collect()
}

/// Aggregates of a Monte Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub sigma_sq: f64,
    /// Empirical `E|l − l̂|²` over all trials.
    pub mean_sq_error: f64,
    /// Per-kind means of `|l − l̂|² / σ²`, in [`TrialKind::ALL`] order
    /// (`None` when a kind has no trials).
    pub kind_mean_ratio: [Option<f64>; 3],
}

impl MonteCarloSummary {
    pub fn new(records: &[TrialRecord], sigma_sq: f64) -> Self {
        let n = records.len();
        let mean_sq_error = if n == 0 { 0.0 } else { records.iter().map(|r| r.sq_error).sum::<f64>() / n as f64 };
        let kind_mean_ratio = TrialKind::ALL.map(|k| {
            let sel: Vec<f64> = records.iter().filter(|r| r.kind == k).map(|r| r.ratio_to_sigma2).collect();
            (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
        });
        MonteCarloSummary { trials: n, sigma_sq, mean_sq_error, kind_mean_ratio }
    }

    /// `E|l − l̂|² / σ²` over all trials.
    pub fn mean_ratio(&self) -> f64 {
        if self.sigma_sq > 0.0 { self.mean_sq_error / self.sigma_sq } else { 0.0 }
    }
}

pub(crate) fn gaussian(rng: &mut impl Rng) -> C {
    C::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub(crate) fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<C> {
    (0..n).map(|_| gaussian(rng)).collect()
}

pub(crate) fn unit_phase(rng: &mut impl Rng) -> C {
    C::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Zero-mean, unit-variance scalar for the noise extremizer.
pub(crate) fn rademacher(rng: &mut impl Rng) -> f64 {
    if rng.random::<bool>() { 1.0 } else { -1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed;
    impl WorstCaseModel for Fixed {
        fn sigma_sq(&self) -> f64 {
            2.0
        }
        fn trial_error(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Result<C> {
            Ok(match kind {
                TrialKind::Random => C::new(0.0, 0.0),
                _ => C::new(rademacher(rng), 1.0),
            })
        }
    }

    #[test]
    fn runs_are_deterministic_and_summarized_by_kind() {
        let a = monte_carlo(&Fixed, 30, 5).unwrap();
        let b = monte_carlo(&Fixed, 30, 5).unwrap();
        assert_eq!(a, b);
        let s = MonteCarloSummary::new(&a, 2.0);
        assert_eq!(s.kind_mean_ratio[0], Some(0.0));
        assert_eq!(s.kind_mean_ratio[2], Some(1.0));
        assert!((s.mean_ratio() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(MonteCarloSummary::new(&[], 1.0).kind_mean_ratio, [None, None, None]);
    }
}
