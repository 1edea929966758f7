//! Exhaustive certificates for privacy and layer structure on concrete
//! instances.
//!
//! All densities handled here are constant on each support point (or each
//! interval piece), so the worst event ratio is attained by a singleton and
//! scanning singletons certifies the bound for every event.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::distribution::{DenseMechanism, LayeredDistribution, Mechanism};
use crate::error::{Error, Result};
use crate::layers::{extract_initial_values, DiscretizationContext, LayerSequence, Normalization};
use crate::metric::{band_index, DatasetSpace, MetricSpacePair, QueryFunction};

/// Slack allowed on every asserted privacy bound.
pub const PRIVACY_TOL: f64 = 1e-9;

/// Outcome of one check. `margin` is bound minus measured value, so a
/// negative margin means failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub check: String,
    pub pass: bool,
    pub epsilon_effective: Option<f64>,
    pub witness: Option<Value>,
    pub margin: Option<f64>,
}

impl AuditReport {
    pub fn new(check: &str) -> Self {
        Self {
            check: check.to_string(),
            pass: true,
            epsilon_effective: None,
            witness: None,
            margin: None,
        }
    }
}

/// Worst singleton log-ratio between two datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioWitness {
    pub x: usize,
    pub y: usize,
    pub value: usize,
    pub log_ratio: f64,
}

/// `max_r |ln q^x(r) − ln q^y(r)|`, first maximizer in value order.
/// Infinite when exactly one side vanishes.
pub fn max_log_ratio<M: Mechanism + ?Sized>(mech: &M, x: usize, y: usize) -> RatioWitness {
    let mut best = RatioWitness {
        x,
        y,
        value: 0,
        log_ratio: 0.0,
    };
    for r in 0..mech.support_len() {
        let (a, b) = (mech.prob(x, r), mech.prob(y, r));
        let lr = match (a > 0.0, b > 0.0) {
            (true, true) => (a.ln() - b.ln()).abs(),
            (false, false) => continue,
            _ => f64::INFINITY,
        };
        if lr > best.log_ratio {
            best = RatioWitness {
                value: r,
                log_ratio: lr,
                ..best
            };
        }
    }
    best
}

fn argmax(found: Vec<RatioWitness>) -> Option<RatioWitness> {
    found
        .into_iter()
        .reduce(|a, b| if b.log_ratio > a.log_ratio { b } else { a })
}

/// Smallest ε for which the mechanism is ε-DP on singleton events, with the
/// first pair attaining it. `None` witness when no pair differs at all.
pub fn effective_epsilon_witness<M: Mechanism + ?Sized>(
    mech: &M,
    datasets: &DatasetSpace,
) -> Result<(f64, Option<RatioWitness>)> {
    if mech.num_datasets() != datasets.len() {
        return Err(Error::MismatchedUniverse);
    }
    let found: Vec<RatioWitness> = datasets
        .neighbor_pairs()
        .into_par_iter()
        .map(|(x, y)| max_log_ratio(mech, x, y))
        .collect();
    let w = argmax(found).filter(|w| w.log_ratio > 0.0);
    Ok((w.map_or(0.0, |w| w.log_ratio), w))
}

pub fn effective_epsilon<M: Mechanism + ?Sized>(mech: &M, datasets: &DatasetSpace) -> Result<f64> {
    effective_epsilon_witness(mech, datasets).map(|(e, _)| e)
}

fn ratio_json(w: &RatioWitness, datasets: &DatasetSpace) -> Value {
    json!({
        "x": datasets.id(w.x),
        "y": datasets.id(w.y),
        "value": w.value,
        "log_ratio": finite_or_string(w.log_ratio),
    })
}

fn finite_or_string(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

fn expected_raw(p: &[f64], spaces: &MetricSpacePair, f: &QueryFunction, x: usize) -> f64 {
    let mass: f64 = p.iter().sum();
    let num: f64 = p
        .iter()
        .enumerate()
        .map(|(r, w)| w * spaces.distortion(f, x, r))
        .sum();
    num / mass
}

/// Checks a discretization against its input density: every point in the
/// band its layer claims, effective ε of the result at most `2ε`, and
/// `e^{−ε} P̄_q^x <= P_p^x <= e^{ε} P̄_q^x` for every dataset.
///
/// The input must itself be ε-DP; if it is not, the report fails with the
/// input's witness.
pub fn check_discretization_bounds(
    densities: &[Vec<f64>],
    seq: &LayerSequence,
    ctx: &DiscretizationContext,
    spaces: &MetricSpacePair,
    f: &QueryFunction,
) -> Result<AuditReport> {
    let eps = seq.epsilon();
    let mut rep = AuditReport::new("discretization-bounds");
    if densities.len() != seq.num_datasets()
        || densities.iter().any(|row| row.len() != seq.support_len())
    {
        return Err(Error::MismatchedUniverse);
    }
    let input = DenseMechanism::from_weights(densities.to_vec())?;
    let (eps_in, w_in) = effective_epsilon_witness(&input, &spaces.datasets)?;
    if eps_in > eps + PRIVACY_TOL {
        rep.pass = false;
        rep.margin = Some(eps - eps_in);
        rep.witness = Some(json!({
            "reason": "input-not-dp",
            "pair": w_in.map(|w| ratio_json(&w, &spaces.datasets)),
        }));
        return Ok(rep);
    }

    // band membership
    for (x, row) in densities.iter().enumerate() {
        let big_m = match ctx.normalization {
            Normalization::Global => ctx.max_density[0],
            Normalization::PerDataset => ctx.max_density[x],
        };
        for (r, &p) in row.iter().enumerate() {
            let i = seq.assignments(x)[r] as f64;
            let lr = (big_m / p).ln();
            let lo = i * eps - PRIVACY_TOL;
            let hi = (i + 1.0) * eps + PRIVACY_TOL;
            let inside = if i == 0.0 { lr < hi } else { lo <= lr && lr < hi };
            if !inside {
                rep.pass = false;
                rep.witness = Some(json!({
                    "reason": "layer-outside-band",
                    "x": spaces.datasets.id(x),
                    "value": r,
                    "layer": seq.assignments(x)[r],
                    "log_ratio_to_max": lr,
                }));
                return Ok(rep);
            }
        }
    }

    let q = crate::distribution::to_distribution(seq)?;
    let (eps_q, w_q) = effective_epsilon_witness(&q, &spaces.datasets)?;
    rep.epsilon_effective = Some(eps_q);
    let mut margin = 2.0 * eps - eps_q;
    if eps_q > 2.0 * eps + PRIVACY_TOL {
        rep.pass = false;
        rep.witness = w_q.map(|w| ratio_json(&w, &spaces.datasets));
        rep.margin = Some(margin);
        return Ok(rep);
    }

    let sandwich: Vec<(usize, f64)> = (0..seq.num_datasets())
        .into_par_iter()
        .map(|x| {
            let pp = expected_raw(&densities[x], spaces, f, x);
            let pq = q.expected_distortion(spaces, f, x).unwrap_or(f64::NAN);
            let gap = if pp == 0.0 && pq == 0.0 {
                0.0
            } else {
                (pp.ln() - pq.ln()).abs()
            };
            (x, gap)
        })
        .collect();
    if let Some(&(x, gap)) = sandwich
        .iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
    {
        margin = margin.min(eps - gap);
        if !(gap <= eps + PRIVACY_TOL) {
            rep.pass = false;
            rep.witness = Some(json!({
                "reason": "utility-sandwich",
                "x": spaces.datasets.id(x),
                "log_gap": finite_or_string(gap),
            }));
        }
    }
    rep.margin = Some(margin);
    Ok(rep)
}

/// Neighboring datasets place every point in layers at most one apart.
pub fn check_layer_adjacency(seq: &LayerSequence, datasets: &DatasetSpace) -> Result<AuditReport> {
    if seq.num_datasets() != datasets.len() {
        return Err(Error::MismatchedUniverse);
    }
    let mut rep = AuditReport::new("layer-adjacency");
    let jumps: Vec<(usize, usize, usize, usize)> = datasets
        .neighbor_pairs()
        .into_par_iter()
        .map(|(x, y)| {
            let (a, b) = (seq.assignments(x), seq.assignments(y));
            let mut best = (x, y, 0, 0);
            for r in 0..a.len() {
                let j = a[r].abs_diff(b[r]);
                if j > best.3 {
                    best = (x, y, r, j);
                }
            }
            best
        })
        .collect();
    let worst = jumps
        .into_iter()
        .reduce(|a, b| if b.3 > a.3 { b } else { a });
    let jump = worst.map_or(0, |w| w.3);
    rep.margin = Some(1.0 - jump as f64);
    if let Some((x, y, r, j)) = worst.filter(|w| w.3 > 1) {
        rep.pass = false;
        rep.witness = Some(json!({
            "x": datasets.id(x),
            "y": datasets.id(y),
            "value": r,
            "layer_x": seq.assignments(x)[r],
            "layer_y": seq.assignments(y)[r],
            "jump": j,
        }));
    }
    Ok(rep)
}

/// Whether the sequence is generated by its layer-0 sets alone.
pub fn check_basic(seq: &LayerSequence, spaces: &MetricSpacePair) -> Result<AuditReport> {
    let init = extract_initial_values(seq, spaces)?;
    let mut rep = AuditReport::new("basic");
    if let Some((x, e)) = init
        .sets
        .iter()
        .enumerate()
        .find_map(|(x, s)| s.extras.first().map(|e| (x, e)))
    {
        rep.pass = false;
        rep.witness = Some(json!({
            "x": spaces.datasets.id(x),
            "layer": e.index,
            "extra": e.set.iter().collect::<Vec<_>>(),
        }));
    }
    Ok(rep)
}

/// Datasets at band distance `i <= k` satisfy `ln ratio <= i · ε_eff`.
///
/// Refused on spaces without the geodesic property.
pub fn check_group_privacy<M: Mechanism + ?Sized>(
    mech: &M,
    datasets: &DatasetSpace,
    k: usize,
) -> Result<AuditReport> {
    if !datasets.is_geodesic() {
        return Err(Error::Refused(
            "group privacy needs integer distances realized by neighbor paths".into(),
        ));
    }
    let eps = effective_epsilon(mech, datasets)?;
    let n = datasets.len();
    let found: Vec<(RatioWitness, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|x| {
            ((x + 1)..n).filter_map(move |y| {
                let i = band_index(datasets.dist(x, y));
                (i <= k).then(|| {
                    let w = max_log_ratio(mech, x, y);
                    let slack = i as f64 * eps - w.log_ratio;
                    (w, slack)
                })
            })
        })
        .collect();
    let mut rep = AuditReport::new("group-privacy");
    rep.epsilon_effective = Some(eps);
    let worst = found
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a });
    if let Some((w, slack)) = worst {
        rep.margin = Some(slack);
        if !(slack >= -PRIVACY_TOL) {
            rep.pass = false;
            rep.witness = Some(ratio_json(&w, datasets));
        }
    }
    Ok(rep)
}

/// Exhaustive effective ε of a layered distribution together with the
/// `2ε` bound that holds for basic mechanisms.
pub fn check_two_epsilon(dist: &LayeredDistribution, datasets: &DatasetSpace) -> Result<AuditReport> {
    let (e, w) = effective_epsilon_witness(dist, datasets)?;
    let bound = 2.0 * dist.epsilon();
    let mut rep = AuditReport::new("two-epsilon");
    rep.epsilon_effective = Some(e);
    rep.margin = Some(bound - e);
    if e > bound + PRIVACY_TOL {
        rep.pass = false;
        rep.witness = w.map(|w| ratio_json(&w, datasets));
    }
    Ok(rep)
}
