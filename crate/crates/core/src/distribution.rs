//! Normalized distributions over a finite value support, sampling, and the
//! expected-distortion utility functionals.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layers::LayerSequence;
use crate::metric::{MetricSpacePair, QueryFunction};
use crate::rng::SplitMix64;

/// Tie tolerance for utility comparisons.
pub const UTILITY_TOL: f64 = 1e-12;

/// Anything that assigns each dataset a probability vector over a finite support.
pub trait Mechanism: Sync {
    fn num_datasets(&self) -> usize;
    fn support_len(&self) -> usize;
    fn prob(&self, x: usize, r: usize) -> f64;

    fn probs(&self, x: usize) -> Vec<f64> {
        (0..self.support_len()).map(|r| self.prob(x, r)).collect()
    }
}

/// `q^x(r) = exp(-L^x(r) ε) / α^x` with `α^x = Σ_i exp(-iε) |R_i^x|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredDistribution {
    seq: LayerSequence,
    alpha: Vec<f64>,
}

impl LayeredDistribution {
    pub fn layers(&self) -> &LayerSequence {
        &self.seq
    }

    pub fn epsilon(&self) -> f64 {
        self.seq.epsilon()
    }

    pub fn alpha(&self, x: usize) -> f64 {
        self.alpha[x]
    }

    /// Unnormalized weight `exp(-L^x(r) ε)`.
    #[inline]
    pub fn raw_weight(&self, x: usize, r: usize) -> f64 {
        (-(self.seq.index(x, r) as f64) * self.seq.epsilon()).exp()
    }

    /// `P̄^x = Σ_i e^{-iε} Σ_{r ∈ R_i^x} d(f(x), r) / α^x`.
    pub fn expected_distortion(
        &self,
        spaces: &MetricSpacePair,
        f: &QueryFunction,
        x: usize,
    ) -> Result<f64> {
        spaces.datasets.check_index(x)?;
        self.check_shape(spaces)?;
        let num: f64 = (0..self.seq.support_len())
            .map(|r| self.raw_weight(x, r) * spaces.distortion(f, x, r))
            .sum();
        Ok(num / self.alpha[x])
    }

    /// `P̄^x` for every dataset in canonical order.
    pub fn distortions(&self, spaces: &MetricSpacePair, f: &QueryFunction) -> Result<Vec<f64>> {
        self.check_shape(spaces)?;
        (0..self.seq.num_datasets())
            .into_par_iter()
            .map(|x| self.expected_distortion(spaces, f, x))
            .collect()
    }

    fn check_shape(&self, spaces: &MetricSpacePair) -> Result<()> {
        if self.seq.num_datasets() != spaces.datasets.len()
            || self.seq.support_len() != spaces.values.len()
        {
            return Err(Error::MismatchedUniverse);
        }
        Ok(())
    }
}

impl Mechanism for LayeredDistribution {
    fn num_datasets(&self) -> usize {
        self.seq.num_datasets()
    }

    fn support_len(&self) -> usize {
        self.seq.support_len()
    }

    fn prob(&self, x: usize, r: usize) -> f64 {
        self.raw_weight(x, r) / self.alpha[x]
    }
}

pub fn to_distribution(seq: &LayerSequence) -> Result<LayeredDistribution> {
    if seq.support_len() == 0 {
        return Err(Error::InvalidSpace("empty support".into()));
    }
    let eps = seq.epsilon();
    let alpha = (0..seq.num_datasets())
        .map(|x| {
            seq.assignments(x)
                .iter()
                .map(|&i| (-(i as f64) * eps).exp())
                .sum()
        })
        .collect();
    Ok(LayeredDistribution {
        seq: seq.clone(),
        alpha,
    })
}

/// Explicit per-dataset probability vectors, normalized at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMechanism {
    probs: Vec<Vec<f64>>,
}

impl DenseMechanism {
    /// Normalizes each row of nonnegative weights to sum to one.
    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.first().map_or(0, Vec::len);
        if weights.is_empty() || m == 0 || weights.iter().any(|w| w.len() != m) {
            return Err(Error::InvalidDensity(
                "weights must form a nonempty rectangular table".into(),
            ));
        }
        let probs = weights
            .into_iter()
            .enumerate()
            .map(|(x, row)| {
                if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidDensity(format!("row {x} has invalid weights")));
                }
                let total: f64 = row.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidDensity(format!("row {x} has zero mass")));
                }
                Ok(row.into_iter().map(|w| w / total).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { probs })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn expected_distortion(
        &self,
        spaces: &MetricSpacePair,
        f: &QueryFunction,
        x: usize,
    ) -> Result<f64> {
        spaces.datasets.check_index(x)?;
        if self.support_len() != spaces.values.len() {
            return Err(Error::MismatchedUniverse);
        }
        Ok(self.probs[x]
            .iter()
            .enumerate()
            .map(|(r, p)| p * spaces.distortion(f, x, r))
            .sum())
    }

    pub fn distortions(&self, spaces: &MetricSpacePair, f: &QueryFunction) -> Result<Vec<f64>> {
        (0..self.num_datasets())
            .into_par_iter()
            .map(|x| self.expected_distortion(spaces, f, x))
            .collect()
    }
}

impl Mechanism for DenseMechanism {
    fn num_datasets(&self) -> usize {
        self.probs.len()
    }

    fn support_len(&self) -> usize {
        self.probs[0].len()
    }

    fn prob(&self, x: usize, r: usize) -> f64 {
        self.probs[x][r]
    }

    fn probs(&self, x: usize) -> Vec<f64> {
        self.probs[x].clone()
    }
}

/// Draws a value index from `q^x` by inverse CDF over the canonical value
/// order, using one SplitMix64 output from `seed`.
pub fn sample<M: Mechanism + ?Sized>(mech: &M, x: usize, seed: u64) -> Result<usize> {
    if x >= mech.num_datasets() {
        return Err(Error::DatasetIndex(x));
    }
    let mut rng = SplitMix64::new(seed);
    Ok(sample_with(mech, x, &mut rng))
}

/// Draws `n` values from one generator stream.
pub fn sample_many<M: Mechanism + ?Sized>(
    mech: &M,
    x: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if x >= mech.num_datasets() {
        return Err(Error::DatasetIndex(x));
    }
    let mut rng = SplitMix64::new(seed);
    Ok((0..n).map(|_| sample_with(mech, x, &mut rng)).collect())
}

fn sample_with<M: Mechanism + ?Sized>(mech: &M, x: usize, rng: &mut SplitMix64) -> usize {
    let probs = mech.probs(x);
    let total: f64 = probs.iter().sum();
    let u = rng.next_f64() * total;
    let mut acc = 0.0;
    for (r, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return r;
        }
    }
    // u landed on the rounding gap at the top; take the last point with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Probability weights over datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    weights: Vec<f64>,
}

impl Prior {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("prior weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "prior weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[x] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `P̄ = Σ_x p(x) P̄^x`, summed in canonical order.
pub fn expected_utility(
    dist: &LayeredDistribution,
    spaces: &MetricSpacePair,
    f: &QueryFunction,
    prior: &Prior,
) -> Result<f64> {
    if prior.weights.len() != spaces.datasets.len() {
        return Err(Error::MismatchedUniverse);
    }
    let per = dist.distortions(spaces, f)?;
    Ok(prior.weights.iter().zip(&per).map(|(p, u)| p * u).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pareto {
    Equal,
    /// The first map is no worse everywhere and strictly better somewhere.
    Dominates,
    Dominated,
    Incomparable,
}

/// Componentwise comparison of distortion maps (lower is better).
pub fn pareto_compare(u1: &[f64], u2: &[f64]) -> Result<Pareto> {
    if u1.len() != u2.len() {
        return Err(Error::MismatchedUniverse);
    }
    let mut better = false;
    let mut worse = false;
    for (a, b) in u1.iter().zip(u2) {
        if a < &(b - UTILITY_TOL) {
            better = true;
        } else if a > &(b + UTILITY_TOL) {
            worse = true;
        }
    }
    Ok(match (better, worse) {
        (false, false) => Pareto::Equal,
        (true, false) => Pareto::Dominates,
        (false, true) => Pareto::Dominated,
        (true, true) => Pareto::Incomparable,
    })
}
