//! Mechanism families built from initial values, the single-point migration
//! calculus, and composition.

use crate::distribution::{LayeredDistribution, Mechanism, UTILITY_TOL};
use crate::error::{Error, Result};
use crate::layers::{
    reconstruct, validate_membership_c, DatasetInit, Extra, InitialValues, LayerSequence,
    ValueSet, Verdict,
};
use crate::metric::{band_index, MetricSpacePair, QueryFunction};

/// `R_0^x = {f(x)}`, no extras.
pub fn build_purest(f: &QueryFunction, spaces: &MetricSpacePair, epsilon: f64) -> Result<InitialValues> {
    check_query(f, spaces)?;
    InitialValues::basic(
        epsilon,
        f.images().iter().map(|&r| ValueSet::from([r])).collect(),
    )
}

/// One arbitrary support point per dataset, no extras.
pub fn build_atomic(assign: &[usize], spaces: &MetricSpacePair, epsilon: f64) -> Result<InitialValues> {
    if assign.len() != spaces.datasets.len() {
        return Err(Error::MismatchedUniverse);
    }
    for &r in assign {
        spaces.values.check_index(r)?;
    }
    InitialValues::basic(epsilon, assign.iter().map(|&r| ValueSet::from([r])).collect())
}

/// `R_0^x = {r : d(f(x), r) <= δ(x)}`, no extras.
pub fn build_delta_neighborhood(
    f: &QueryFunction,
    delta: &[f64],
    spaces: &MetricSpacePair,
    epsilon: f64,
) -> Result<InitialValues> {
    check_query(f, spaces)?;
    if delta.len() != spaces.datasets.len() {
        return Err(Error::MismatchedUniverse);
    }
    if let Some(d) = delta.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(Error::InvalidArgument(format!("radius {d} is not a nonnegative real")));
    }
    let layer0 = (0..spaces.datasets.len())
        .map(|x| {
            (0..spaces.values.len())
                .filter(|&r| spaces.distortion(f, x, r) <= delta[x] + 1e-12)
                .collect()
        })
        .collect();
    InitialValues::basic(epsilon, layer0)
}

/// Purest initial values of `g`, used as a mechanism for another query `f`
/// on the same spaces.
pub fn approximate_via(g: &QueryFunction, spaces: &MetricSpacePair, epsilon: f64) -> Result<InitialValues> {
    build_purest(g, spaces, epsilon)
}

/// Datasets at which `init` is an approximation mechanism for `f`: on a
/// finite support every small neighborhood of `f(x)` is `{f(x)}`, so these
/// are the `x` with `f(x) ∉ R_0^x`.
pub fn approximation_points(init: &InitialValues, f: &QueryFunction) -> Vec<usize> {
    init.sets
        .iter()
        .enumerate()
        .filter(|(x, s)| !s.layer0.contains(&f.image(*x)))
        .map(|(x, _)| x)
        .collect()
}

fn check_query(f: &QueryFunction, spaces: &MetricSpacePair) -> Result<()> {
    if f.images().len() != spaces.datasets.len() {
        return Err(Error::MismatchedUniverse);
    }
    f.images().iter().try_for_each(|&r| spaces.values.check_index(r))
}

/// Result of adding one point to one dataset's initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct Migration {
    pub init: InitialValues,
    /// Layer of the migrated point at every dataset before the edit.
    pub previous: Vec<usize>,
    /// Predicted layer `min{⌈d̄(x0, x)⌉ + i0, previous}` at every dataset.
    pub predicted: Vec<usize>,
}

/// Adds `r0` to `R_0^{x0}` (`i0 = 0`) or to the extra set `R~_{i0}^{x0}`
/// and predicts the new layer of `r0` everywhere. Layers of all other
/// points are unchanged.
///
/// Refused when the edited values leave the feasible universe, and, for
/// `i0 >= 1`, when the edit would leave a neighbor `x` of `x0` with
/// `L^x(r0) > i0 + 1`: extra sets do not propagate to other datasets under
/// the construction rule, so the min-formula only holds for edits that keep
/// neighboring layers within one of each other.
pub fn migrate(
    init: &InitialValues,
    x0: usize,
    i0: usize,
    r0: usize,
    spaces: &MetricSpacePair,
) -> Result<Migration> {
    spaces.datasets.check_index(x0)?;
    spaces.values.check_index(r0)?;
    if init.sets.len() != spaces.datasets.len() {
        return Err(Error::MismatchedUniverse);
    }
    let current = &init.sets[x0];
    let present = if i0 == 0 {
        current.layer0.contains(&r0)
    } else {
        current
            .extras
            .iter()
            .any(|e| e.index == i0 && e.set.contains(&r0))
    };
    if present {
        return Err(Error::MigrationRefused(format!(
            "value #{r0} is already in set {i0} of dataset #{x0}"
        )));
    }

    let before = reconstruct(init, spaces)?;
    let previous: Vec<usize> = (0..spaces.datasets.len())
        .map(|x| before.layer_of(x, r0))
        .collect::<Result<_>>()?;

    let mut edited = init.clone();
    insert_point(&mut edited.sets[x0], i0, r0);
    if let Verdict::Reject(v) = validate_membership_c(&edited, spaces) {
        return Err(Error::MigrationRefused(format!(
            "edited initial values are infeasible: {v}"
        )));
    }
    if i0 > 0 {
        if let Some(x) = spaces
            .datasets
            .neighbors(x0)
            .find(|&x| previous[x] > i0 + 1)
        {
            return Err(Error::MigrationRefused(format!(
                "neighbor {} keeps value #{r0} at layer {} > {}",
                spaces.datasets.id(x),
                previous[x],
                i0 + 1
            )));
        }
    }

    let predicted = previous
        .iter()
        .enumerate()
        .map(|(x, &old)| (band_index(spaces.datasets.dist(x0, x)) + i0).min(old))
        .collect();
    Ok(Migration {
        init: edited,
        previous,
        predicted,
    })
}

fn insert_point(set: &mut DatasetInit, i0: usize, r0: usize) {
    if i0 == 0 {
        set.layer0.insert(r0);
        return;
    }
    match set.extras.binary_search_by_key(&i0, |e| e.index) {
        Ok(k) => {
            set.extras[k].set.insert(r0);
        }
        Err(k) => set.extras.insert(
            k,
            Extra {
                index: i0,
                set: ValueSet::from([r0]),
            },
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotone {
    Increasing,
    Decreasing,
}

/// Direction of `g(w) = (a0 + a1 w) / (b0 + b1 w)` for `w >= 0`.
pub fn mediant_monotone(a0: f64, b0: f64, a1: f64, b1: f64) -> Result<Monotone> {
    if b0 <= 0.0 || b1 <= 0.0 {
        return Err(Error::InvalidArgument("mediant denominators must be positive".into()));
    }
    if a0 < 0.0 || a1 < 0.0 {
        return Err(Error::InvalidArgument("mediant numerators must be nonnegative".into()));
    }
    Ok(if a0 / b0 < a1 / b1 {
        Monotone::Increasing
    } else {
        Monotone::Decreasing
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilityChange {
    /// Expected distortion at `x` goes down.
    Improves,
    Worsens,
    Unchanged,
}

/// Predicts how moving `r0` from its current layer to `new_layer` changes
/// `P̄^x`, by comparing the distortion-to-mass ratio of every other point
/// with `d(f(x), r0)`.
pub fn predict_utility_change(
    dist: &LayeredDistribution,
    spaces: &MetricSpacePair,
    f: &QueryFunction,
    x: usize,
    r0: usize,
    new_layer: usize,
) -> Result<UtilityChange> {
    let seq = dist.layers();
    let old = seq.layer_of(x, r0)?;
    if new_layer >= old {
        return Err(Error::InvalidArgument(format!(
            "new layer {new_layer} is not below the current layer {old}"
        )));
    }
    let eps = dist.epsilon();
    let m = seq.support_len();
    let num: f64 = (0..m)
        .map(|r| dist.raw_weight(x, r) * spaces.distortion(f, x, r))
        .sum();
    let mass: f64 = (0..m).map(|r| dist.raw_weight(x, r)).sum();
    let w0 = (-(old as f64) * eps).exp();
    let d0 = spaces.distortion(f, x, r0);
    let a0 = (num - w0 * d0).max(0.0);
    let b0 = mass - w0;
    if b0 <= 0.0 {
        // r0 is the only point, its weight cannot change the mean
        return Ok(UtilityChange::Unchanged);
    }
    if (a0 / b0 - d0).abs() <= UTILITY_TOL * (1.0 + d0) {
        return Ok(UtilityChange::Unchanged);
    }
    Ok(match mediant_monotone(a0, b0, d0, 1.0)? {
        Monotone::Increasing => UtilityChange::Worsens,
        Monotone::Decreasing => UtilityChange::Improves,
    })
}

/// Product of two mechanisms on the same dataset universe:
/// `q(r1, r2) = q1(r1) q2(r2)`, with support index `r1 * |R2| + r2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMechanism {
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

impl ProductMechanism {
    pub fn split(&self, r: usize) -> (usize, usize) {
        let m2 = self.right[0].len();
        (r / m2, r % m2)
    }

    /// Expected product distance `d1 + d2` to `(f1(x), f2(x))`.
    pub fn expected_distortion(
        &self,
        x: usize,
        left: (&MetricSpacePair, &QueryFunction),
        right: (&MetricSpacePair, &QueryFunction),
    ) -> f64 {
        let mut total = 0.0;
        for (r1, p1) in self.left[x].iter().enumerate() {
            for (r2, p2) in self.right[x].iter().enumerate() {
                let d = left.0.distortion(left.1, x, r1) + right.0.distortion(right.1, x, r2);
                total += p1 * p2 * d;
            }
        }
        total
    }
}

impl Mechanism for ProductMechanism {
    fn num_datasets(&self) -> usize {
        self.left.len()
    }

    fn support_len(&self) -> usize {
        self.left[0].len() * self.right[0].len()
    }

    fn prob(&self, x: usize, r: usize) -> f64 {
        let (r1, r2) = self.split(r);
        self.left[x][r1] * self.right[x][r2]
    }
}

pub fn compose<A: Mechanism, B: Mechanism>(a: &A, b: &B) -> Result<ProductMechanism> {
    if a.num_datasets() != b.num_datasets() {
        return Err(Error::MismatchedUniverse);
    }
    let n = a.num_datasets();
    Ok(ProductMechanism {
        left: (0..n).map(|x| a.probs(x)).collect(),
        right: (0..n).map(|x| b.probs(x)).collect(),
    })
}

/// Replays a basic mechanism from the atomic mechanism that keeps the
/// smallest point of every `R_0^x`, adding the remaining points one at a
/// time: datasets in canonical order, values in increasing order.
///
/// Returns the migration steps; each is checked for feasibility.
pub fn replay_from_atomic(target: &InitialValues, spaces: &MetricSpacePair) -> Result<Vec<Migration>> {
    if !target.is_basic() {
        return Err(Error::InvalidArgument("replay needs a basic mechanism".into()));
    }
    let mut seeds = Vec::with_capacity(target.sets.len());
    for (x, s) in target.sets.iter().enumerate() {
        let first = s.layer0.iter().next().copied().ok_or_else(|| {
            Error::InvalidArgument(format!("dataset #{x} has an empty layer 0"))
        })?;
        seeds.push(first);
    }
    let mut current = build_atomic(&seeds, spaces, target.epsilon)?;
    let mut steps = Vec::new();
    for (x, s) in target.sets.iter().enumerate() {
        for &r in s.layer0.iter().skip(1) {
            let step = migrate(&current, x, 0, r, spaces)?;
            current = step.init.clone();
            steps.push(step);
        }
    }
    Ok(steps)
}

/// Layer map of every point before/after an edit, for checking predictions.
pub fn layer_table(seq: &LayerSequence) -> Vec<Vec<usize>> {
    (0..seq.num_datasets())
        .map(|x| seq.assignments(x).to_vec())
        .collect()
}
