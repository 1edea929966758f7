//! Reference mechanisms: Laplace-shaped and exponential densities on a
//! finite support, the ladder mechanism for triangle counting, and the
//! staircase noise utility.

use rayon::prelude::*;

use crate::distribution::DenseMechanism;
use crate::error::{Error, Result};
use crate::graphs::GraphUniverse;
use crate::layers::check_epsilon;
use crate::metric::{global_sensitivity, MetricSpacePair, QueryFunction};

/// `p^x(r) ∝ exp(−d(f(x), r) ε / Δf)` on the support.
///
/// Each row is normalized on its own, so the ratio between neighbors picks
/// up the normalizer quotient as well: the result is `2ε`-DP in general
/// and `ε`-DP only when normalizers agree (e.g. translation-invariant supports).
pub fn laplace_discrete(
    f: &QueryFunction,
    spaces: &MetricSpacePair,
    epsilon: f64,
) -> Result<DenseMechanism> {
    check_epsilon(epsilon)?;
    let df = global_sensitivity(f, spaces)?;
    if df <= 0.0 {
        return Err(Error::InvalidArgument("global sensitivity is zero".into()));
    }
    let rows = (0..spaces.datasets.len())
        .into_par_iter()
        .map(|x| {
            (0..spaces.values.len())
                .map(|r| (-spaces.distortion(f, x, r) * epsilon / df).exp())
                .collect()
        })
        .collect();
    DenseMechanism::from_weights(rows)
}

/// `Δs = max` over neighbors and support points of `|s^x(r) − s^y(r)|`.
pub fn score_sensitivity(scores: &[Vec<f64>], spaces: &MetricSpacePair) -> Result<f64> {
    check_scores(scores, spaces)?;
    let pairs = spaces.datasets.neighbor_pairs();
    if pairs.is_empty() {
        return Err(Error::IsolatedUniverse);
    }
    Ok(pairs
        .par_iter()
        .map(|&(x, y)| {
            scores[x]
                .iter()
                .zip(&scores[y])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

fn check_scores(scores: &[Vec<f64>], spaces: &MetricSpacePair) -> Result<()> {
    if scores.len() != spaces.datasets.len()
        || scores.iter().any(|s| s.len() != spaces.values.len())
    {
        return Err(Error::MismatchedUniverse);
    }
    if let Some(v) = scores.iter().flatten().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("score {v} is not finite")));
    }
    Ok(())
}

/// `p^x(r) ∝ exp(ε s^x(r) / (2Δs))`. A zero `Δs` (scores identical on
/// neighbors) gives the uniform distribution.
pub fn exponential_mech(
    scores: &[Vec<f64>],
    delta_s: f64,
    epsilon: f64,
    spaces: &MetricSpacePair,
) -> Result<DenseMechanism> {
    check_epsilon(epsilon)?;
    check_scores(scores, spaces)?;
    if !delta_s.is_finite() || delta_s < 0.0 {
        return Err(Error::InvalidArgument(format!("score sensitivity {delta_s}")));
    }
    let rows = scores
        .par_iter()
        .map(|s| {
            if delta_s == 0.0 {
                return vec![1.0; s.len()];
            }
            // shift by the row max so the largest weight is 1
            let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            s.iter()
                .map(|v| (epsilon * (v - top) / (2.0 * delta_s)).exp())
                .collect()
        })
        .collect();
    DenseMechanism::from_weights(rows)
}

/// Rung of `r` around `f(x)` for the ladder `I_0, I_1, …` (the last entry
/// repeats): 0 at `f(x)`, otherwise the smallest `t` with
/// `|r − f(x)| <= I_0 + … + I_{t−1}`.
pub fn rung(ladder: &[usize], gap: f64) -> usize {
    if gap <= 1e-12 {
        return 0;
    }
    let last = *ladder.last().unwrap_or(&0);
    let mut reach = 0.0;
    let mut t = 0;
    loop {
        let step = ladder.get(t).copied().unwrap_or(last);
        if step == 0 && t >= ladder.len() {
            // flat ladder never reaches further
            return usize::MAX;
        }
        reach += step as f64;
        t += 1;
        if gap <= reach + 1e-12 {
            return t;
        }
    }
}

/// Ladder mechanism for triangle counts over the distinct counts, with
/// quality `−rung` and weights `exp(−ε · rung)`, i.e. the `ε/2`-scaled
/// exponential mechanism run at `2ε`.
pub fn ladder_mech(
    universe: &GraphUniverse,
    spaces: &MetricSpacePair,
    f: &QueryFunction,
    epsilon: f64,
) -> Result<DenseMechanism> {
    check_epsilon(epsilon)?;
    if spaces.datasets.len() != universe.len() {
        return Err(Error::MismatchedUniverse);
    }
    let table = universe.ladder_table();
    let rows = (0..universe.len())
        .into_par_iter()
        .map(|x| {
            (0..spaces.values.len())
                .map(|r| match rung(&table[x], spaces.distortion(f, x, r)) {
                    usize::MAX => 0.0,
                    t => (-(t as f64) * epsilon).exp(),
                })
                .collect()
        })
        .collect();
    DenseMechanism::from_weights(rows)
}

/// Staircase density parameters and its expected absolute noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Staircase {
    pub gamma: f64,
    pub expected_abs: f64,
}

/// `E|X|` of the staircase density with width fraction `γ`.
pub fn staircase_expected_abs(delta_f: f64, epsilon: f64, gamma: f64) -> f64 {
    let b = (-epsilon).exp();
    let a = (1.0 - b) / (2.0 * delta_f * (gamma + b * (1.0 - gamma)));
    let s0 = 1.0 / (1.0 - b);
    let s1 = b / ((1.0 - b) * (1.0 - b));
    let g = gamma;
    a * delta_f
        * delta_f
        * (2.0 * g * s1 + g * g * s0 + b * (2.0 * (1.0 - g) * s1 + (1.0 - g * g) * s0))
}

/// Minimizes `E|X|` over `γ ∈ [0, 1]` by golden-section search.
pub fn staircase_utility(delta_f: f64, epsilon: f64) -> Result<Staircase> {
    check_epsilon(epsilon)?;
    if !delta_f.is_finite() || delta_f <= 0.0 {
        return Err(Error::InvalidArgument(format!("sensitivity {delta_f}")));
    }
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let cost = |g: f64| staircase_expected_abs(delta_f, epsilon, g);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while hi - lo > 1e-10 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = cost(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = cost(d);
        }
    }
    let gamma = (lo + hi) / 2.0;
    Ok(Staircase {
        gamma,
        expected_abs: cost(gamma),
    })
}
