//! Layer sequences: discretization of mechanisms, minimal initial values, and
//! reconstruction through the construction rule
//!
//! ```text
//! R_i^x = R~_i^x  ∪  ( ∪_{y : i-1 < d̄(x,y) <= i} R_0^y  −  A_{i-1}^x )
//! ```
//!
//! where `A_i^x` is the union of layers `0..=i` at `x` and `R~_i^x` are the
//! extra sets carried by [`InitialValues`].

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::{DatasetSpace, MetricSpacePair};

/// A set of value points, by index into the value support.
pub type ValueSet = BTreeSet<usize>;

/// Tolerance applied to `ln(M / p) / ε` before taking the floor, so that
/// points sitting exactly on a band edge `p / M = e^{-iε}` land in layer `i`.
pub const DISCRETIZE_TOL: f64 = 1e-12;

/// Which maximum normalizes densities during discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Normalization {
    /// One `M` over all datasets and values.
    #[default]
    Global,
    /// `M` taken separately for each dataset. Not covered by any privacy claim.
    PerDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationContext {
    /// `max_{r,x} p^x(r)`, or the per-dataset maxima under [`Normalization::PerDataset`].
    pub max_density: Vec<f64>,
    pub epsilon: f64,
    pub normalization: Normalization,
}

/// Per-dataset partition of the value support into indexed layers.
///
/// Stored densely as the layer index of every `(x, r)`; only layers up to the
/// last nonempty one exist. Intermediate layers may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSequence {
    epsilon: f64,
    assign: Vec<Vec<usize>>,
    coverage_completed: bool,
}

pub fn check_epsilon(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(eps))
    }
}

impl LayerSequence {
    /// Builds a sequence from explicit layer indices `assign[x][r]`.
    pub fn from_assignments(epsilon: f64, assign: Vec<Vec<usize>>) -> Result<Self> {
        check_epsilon(epsilon)?;
        let m = assign.first().map_or(0, Vec::len);
        if assign.is_empty() || m == 0 || assign.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidSpace(
                "layer assignment must be a nonempty rectangular table".into(),
            ));
        }
        Ok(Self {
            epsilon,
            assign,
            coverage_completed: false,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same layers, different layer ratio.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            ..self.clone()
        })
    }

    pub fn num_datasets(&self) -> usize {
        self.assign.len()
    }

    pub fn support_len(&self) -> usize {
        self.assign[0].len()
    }

    /// True when reconstruction had to place uncovered points in a final layer.
    pub fn is_coverage_completed(&self) -> bool {
        self.coverage_completed
    }

    /// `L^x(r)`: the layer holding `r` at `x`.
    pub fn layer_of(&self, x: usize, r: usize) -> Result<usize> {
        let row = self.assign.get(x).ok_or(Error::DatasetIndex(x))?;
        row.get(r).copied().ok_or(Error::ValueIndex(r))
    }

    #[inline]
    pub(crate) fn index(&self, x: usize, r: usize) -> usize {
        self.assign[x][r]
    }

    /// Layer indices of every value point at `x`.
    pub fn assignments(&self, x: usize) -> &[usize] {
        &self.assign[x]
    }

    /// Number of stored layers at `x` (last nonempty index plus one).
    pub fn depth(&self, x: usize) -> usize {
        self.assign[x].iter().max().map_or(0, |&i| i + 1)
    }

    pub fn layer(&self, x: usize, i: usize) -> ValueSet {
        self.assign[x]
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == i)
            .map(|(r, _)| r)
            .collect()
    }

    pub fn layers(&self, x: usize) -> Vec<ValueSet> {
        let mut out = vec![ValueSet::new(); self.depth(x)];
        for (r, &l) in self.assign[x].iter().enumerate() {
            out[l].insert(r);
        }
        out
    }

    /// `A_i^x`: union of layers `0..=i`. Indices past the end give the full support.
    pub fn cumulative(&self, x: usize, i: usize) -> ValueSet {
        self.assign[x]
            .iter()
            .enumerate()
            .filter(|(_, &l)| l <= i)
            .map(|(r, _)| r)
            .collect()
    }

    fn check_shape(&self, spaces: &MetricSpacePair) -> Result<()> {
        if self.num_datasets() != spaces.datasets.len() || self.support_len() != spaces.values.len()
        {
            return Err(Error::MismatchedUniverse);
        }
        Ok(())
    }
}

/// Classifies every point by `exp(-(i+1)ε) < p^x(r)/M <= exp(-iε)`.
///
/// `densities[x][r]` must be strictly positive and finite. Under the default
/// global normalization a dataset whose peak is far below `M` can have an
/// empty layer 0.
pub fn discretize(
    densities: &[Vec<f64>],
    epsilon: f64,
    normalization: Normalization,
) -> Result<(LayerSequence, DiscretizationContext)> {
    check_epsilon(epsilon)?;
    let m = densities.first().map_or(0, Vec::len);
    if densities.is_empty() || m == 0 || densities.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidDensity(
            "densities must form a nonempty rectangular table".into(),
        ));
    }
    for (x, row) in densities.iter().enumerate() {
        for (r, &p) in row.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDensity(format!("p[{x}][{r}] = {p}")));
            }
            if p == 0.0 {
                return Err(Error::InvalidDensity(format!(
                    "p[{x}][{r}] = 0 falls in no layer"
                )));
            }
        }
    }
    let row_max: Vec<f64> = densities
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .collect();
    let max_density = match normalization {
        Normalization::Global => vec![row_max.iter().copied().fold(0.0, f64::max)],
        Normalization::PerDataset => row_max,
    };
    let assign = densities
        .iter()
        .enumerate()
        .map(|(x, row)| {
            let big_m = match normalization {
                Normalization::Global => max_density[0],
                Normalization::PerDataset => max_density[x],
            };
            row.iter()
                .map(|&p| layer_for_ratio(big_m / p, epsilon))
                .collect()
        })
        .collect();
    let seq = LayerSequence {
        epsilon,
        assign,
        coverage_completed: false,
    };
    let ctx = DiscretizationContext {
        max_density,
        epsilon,
        normalization,
    };
    Ok((seq, ctx))
}

/// `floor(ln(ratio) / ε)` with edge tolerance, clamped at 0.
pub(crate) fn layer_for_ratio(ratio: f64, epsilon: f64) -> usize {
    let t = ratio.ln() / epsilon + DISCRETIZE_TOL;
    if t <= 0.0 {
        0
    } else {
        t.floor() as usize
    }
}

/// One extra set `R~_i^x` with its index `i >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extra {
    pub index: usize,
    pub set: ValueSet,
}

/// Initial values of one dataset: `R_0^x` plus the indexed extra sets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetInit {
    pub layer0: ValueSet,
    pub extras: Vec<Extra>,
}

impl DatasetInit {
    pub fn basic(layer0: ValueSet) -> Self {
        Self {
            layer0,
            extras: Vec::new(),
        }
    }

    pub fn contains(&self, r: usize) -> bool {
        self.layer0.contains(&r) || self.extras.iter().any(|e| e.set.contains(&r))
    }
}

/// The minimal parameters from which the construction rule regenerates a
/// whole layer sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialValues {
    pub epsilon: f64,
    pub sets: Vec<DatasetInit>,
}

impl InitialValues {
    pub fn new(epsilon: f64, sets: Vec<DatasetInit>) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self { epsilon, sets })
    }

    pub fn basic(epsilon: f64, layer0: Vec<ValueSet>) -> Result<Self> {
        Self::new(epsilon, layer0.into_iter().map(DatasetInit::basic).collect())
    }

    /// Empty extras everywhere.
    pub fn is_basic(&self) -> bool {
        self.sets.iter().all(|s| s.extras.is_empty())
    }

    fn check_shape(&self, spaces: &MetricSpacePair) -> Result<()> {
        if self.sets.len() != spaces.datasets.len() {
            return Err(Error::MismatchedUniverse);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Extra indices must be `>= 1` and strictly increasing.
    ExtraIndexOrder,
    EmptyExtra,
    ValueOutOfRange,
    /// The point already sits in `A_{i-1}^x`.
    InEarlierLayer,
    /// The point is forced into layer `i` by the rule-generated part.
    InRulePart,
}

/// First place where initial values leave the feasible universe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub dataset: usize,
    pub index: usize,
    pub value: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at dataset #{} layer {}", self.kind, self.dataset, self.index)?;
        if let Some(r) = self.value {
            write!(f, " value #{r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(Violation),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Runs the construction rule for one dataset, checking every extra set
/// against the rule-generated part of its layer and all earlier layers.
/// Returns the (possibly partial) layer assignment.
fn construct(
    init: &InitialValues,
    datasets: &DatasetSpace,
    support_len: usize,
    x: usize,
) -> std::result::Result<Vec<Option<usize>>, Violation> {
    let violation = |index, value, kind| Violation {
        dataset: x,
        index,
        value,
        kind,
    };
    let own = &init.sets[x];
    let mut prev = 0;
    for e in &own.extras {
        if e.index <= prev {
            return Err(violation(e.index, None, ViolationKind::ExtraIndexOrder));
        }
        if e.set.is_empty() {
            return Err(violation(e.index, None, ViolationKind::EmptyExtra));
        }
        prev = e.index;
    }
    for set in init.sets.iter().flat_map(|s| {
        std::iter::once(&s.layer0).chain(s.extras.iter().map(|e| &e.set))
    }) {
        if let Some(&r) = set.iter().find(|&&r| r >= support_len) {
            return Err(violation(0, Some(r), ViolationKind::ValueOutOfRange));
        }
    }

    let bands = datasets.bands(x);
    let mut layer: Vec<Option<usize>> = vec![None; support_len];
    for &r in &own.layer0 {
        layer[r] = Some(0);
    }
    let last = (bands.len().saturating_sub(1)).max(own.extras.last().map_or(0, |e| e.index));
    let mut extras = own.extras.iter().peekable();
    for i in 1..=last {
        if let Some(band) = bands.get(i) {
            for &y in band {
                for &r in &init.sets[y].layer0 {
                    if layer[r].is_none() {
                        layer[r] = Some(i);
                    }
                }
            }
        }
        if let Some(e) = extras.next_if(|e| e.index == i) {
            for &r in &e.set {
                match layer[r] {
                    None => layer[r] = Some(i),
                    Some(j) if j == i => {
                        return Err(violation(i, Some(r), ViolationKind::InRulePart))
                    }
                    Some(_) => return Err(violation(i, Some(r), ViolationKind::InEarlierLayer)),
                }
            }
        }
    }
    Ok(layer)
}

/// Accepts iff every extra set is disjoint from the rule-generated part of
/// its layer and from all earlier cumulative sets.
pub fn validate_membership_c(init: &InitialValues, spaces: &MetricSpacePair) -> Verdict {
    if init.sets.len() != spaces.datasets.len() {
        return Verdict::Reject(Violation {
            dataset: init.sets.len().min(spaces.datasets.len()),
            index: 0,
            value: None,
            kind: ViolationKind::ValueOutOfRange,
        });
    }
    let m = spaces.values.len();
    (0..init.sets.len())
        .into_par_iter()
        .find_map_first(|x| construct(init, &spaces.datasets, m, x).err())
        .map_or(Verdict::Accept, Verdict::Reject)
}

/// Regenerates the full layer sequence from initial values.
///
/// Points never reached by the rule are placed in one final layer
/// (`max assigned index + 1`) per dataset and the result is flagged
/// [`LayerSequence::is_coverage_completed`].
pub fn reconstruct(init: &InitialValues, spaces: &MetricSpacePair) -> Result<LayerSequence> {
    init.check_shape(spaces)?;
    check_epsilon(init.epsilon)?;
    let m = spaces.values.len();
    let partial = (0..init.sets.len())
        .into_par_iter()
        .map(|x| construct(init, &spaces.datasets, m, x))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(Error::Membership)?;
    let mut coverage_completed = false;
    let assign = partial
        .into_iter()
        .map(|row| {
            let fill = row.iter().flatten().max().map_or(0, |&i| i + 1);
            row.into_iter()
                .map(|l| {
                    l.unwrap_or_else(|| {
                        coverage_completed = true;
                        fill
                    })
                })
                .collect()
        })
        .collect();
    Ok(LayerSequence {
        epsilon: init.epsilon,
        assign,
        coverage_completed,
    })
}

/// Reads off `R_0^x` and the nonempty sets
/// `R~_i^x = R_i^x − (∪_{y in band i} R_0^y − A_{i-1}^x)`.
pub fn extract_initial_values(
    seq: &LayerSequence,
    spaces: &MetricSpacePair,
) -> Result<InitialValues> {
    seq.check_shape(spaces)?;
    let n = seq.num_datasets();
    let layer0: Vec<ValueSet> = (0..n).map(|x| seq.layer(x, 0)).collect();
    let sets = (0..n)
        .into_par_iter()
        .map(|x| {
            let bands = spaces.datasets.bands(x);
            let mut extras = Vec::new();
            for (i, layer) in seq.layers(x).into_iter().enumerate().skip(1) {
                let mut rule = ValueSet::new();
                if let Some(band) = bands.get(i) {
                    for &y in band {
                        rule.extend(layer0[y].iter().filter(|&&r| seq.index(x, r) >= i));
                    }
                }
                let tilde: ValueSet = layer.difference(&rule).copied().collect();
                if !tilde.is_empty() {
                    extras.push(Extra {
                        index: i,
                        set: tilde,
                    });
                }
            }
            DatasetInit {
                layer0: layer0[x].clone(),
                extras,
            }
        })
        .collect();
    InitialValues::new(seq.epsilon, sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::DatasetSpace;

    fn toy_line() -> MetricSpacePair {
        MetricSpacePair::with_image_support(DatasetSpace::line(4), &[0.0, 1.0, 2.0, 3.0])
            .unwrap()
            .0
    }

    fn purest_line() -> InitialValues {
        InitialValues::basic(
            2f64.ln(),
            (0..4).map(|x| ValueSet::from([x])).collect(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_density_is_single_layer() {
        let p = vec![vec![0.25; 4]; 3];
        let (seq, ctx) = discretize(&p, 0.7, Normalization::Global).unwrap();
        assert_eq!(ctx.max_density, vec![0.25]);
        for x in 0..3 {
            assert_eq!(seq.depth(x), 1);
        }
    }

    #[test]
    fn exact_band_edges_stay_in_their_layer() {
        let eps = 0.9;
        let p: Vec<f64> = (0..3).map(|r| (-(r as f64) * eps).exp()).collect();
        let (seq, _) = discretize(&[p], eps, Normalization::Global).unwrap();
        assert_eq!(seq.assignments(0), &[0, 1, 2]);
    }

    #[test]
    fn discretize_rejects_bad_densities() {
        assert!(discretize(&[vec![0.0, 0.0]], 1.0, Normalization::Global).is_err());
        assert!(discretize(&[vec![f64::NAN, 1.0]], 1.0, Normalization::Global).is_err());
        assert!(discretize(&[vec![1.0]], 0.0, Normalization::Global).is_err());
    }

    #[test]
    fn per_dataset_normalization_fills_layer_zero() {
        let p = vec![vec![1.0, 0.5], vec![0.01, 0.01]];
        let (global, _) = discretize(&p, 1.0, Normalization::Global).unwrap();
        assert!(global.layer(1, 0).is_empty());
        let (local, _) = discretize(&p, 1.0, Normalization::PerDataset).unwrap();
        assert_eq!(local.layer(1, 0), ValueSet::from([0, 1]));
    }

    #[test]
    fn purest_toy_line_layers() {
        let s = toy_line();
        let seq = reconstruct(&purest_line(), &s).unwrap();
        assert!(!seq.is_coverage_completed());
        assert_eq!(seq.layer_of(0, 3).unwrap(), 3);
        assert_eq!(seq.layer_of(1, 0).unwrap(), 1);
        assert!(seq.layer_of(0, 9).is_err());
        assert_eq!(seq.cumulative(0, 1), ValueSet::from([0, 1]));
        assert_eq!(seq.cumulative(0, 0), seq.layer(0, 0));
        assert_eq!(seq.cumulative(0, 99).len(), 4);
        let layers = seq.layers(0);
        assert_eq!(
            layers,
            vec![
                ValueSet::from([0]),
                ValueSet::from([1]),
                ValueSet::from([2]),
                ValueSet::from([3])
            ]
        );
    }

    #[test]
    fn delta_neighborhood_by_hand() {
        let s = toy_line();
        let layer0 = vec![
            ValueSet::from([0, 1]),
            ValueSet::from([0, 1, 2]),
            ValueSet::from([1, 2, 3]),
            ValueSet::from([2, 3]),
        ];
        let seq = reconstruct(&InitialValues::basic(1.0, layer0).unwrap(), &s).unwrap();
        assert_eq!(
            seq.layers(0),
            vec![ValueSet::from([0, 1]), ValueSet::from([2]), ValueSet::from([3])]
        );
    }

    #[test]
    fn membership_rejections() {
        let s = toy_line();
        assert!(validate_membership_c(&purest_line(), &s).is_accept());

        let mut init = purest_line();
        init.sets[0].extras.push(Extra {
            index: 1,
            set: ValueSet::from([0]),
        });
        match validate_membership_c(&init, &s) {
            Verdict::Reject(v) => assert_eq!(v.kind, ViolationKind::InEarlierLayer),
            Verdict::Accept => panic!("extra overlapping layer 0 accepted"),
        }

        // value 1 = R_0 of dataset 1, a neighbor of 0: rule-forced into layer 1
        let mut init = purest_line();
        init.sets[0].extras.push(Extra {
            index: 2,
            set: ValueSet::from([1]),
        });
        assert!(!validate_membership_c(&init, &s).is_accept());
        assert!(matches!(reconstruct(&init, &s), Err(Error::Membership(_))));

        let mut init = purest_line();
        init.sets[0].extras.push(Extra {
            index: 0,
            set: ValueSet::from([3]),
        });
        match validate_membership_c(&init, &s) {
            Verdict::Reject(v) => assert_eq!(v.kind, ViolationKind::ExtraIndexOrder),
            Verdict::Accept => panic!(),
        }
    }

    #[test]
    fn valid_extra_moves_a_point_up() {
        let s = toy_line();
        let mut init = purest_line();
        init.sets[0].extras.push(Extra {
            index: 1,
            set: ValueSet::from([3]),
        });
        assert!(validate_membership_c(&init, &s).is_accept());
        let seq = reconstruct(&init, &s).unwrap();
        assert_eq!(seq.layer_of(0, 3).unwrap(), 1);
        assert_eq!(seq.layer_of(1, 3).unwrap(), 2);
        let back = extract_initial_values(&seq, &s).unwrap();
        assert_eq!(back, init);
    }

    #[test]
    fn coverage_completion_is_flagged() {
        let s = toy_line();
        let init = InitialValues::basic(1.0, vec![ValueSet::from([0]); 4]).unwrap();
        let seq = reconstruct(&init, &s).unwrap();
        assert!(seq.is_coverage_completed());
        for x in 0..4 {
            assert_eq!(seq.depth(x), 2);
            assert_eq!(seq.layer(x, 0), ValueSet::from([0]));
        }
    }

    #[test]
    fn purest_extracts_without_extras() {
        let s = toy_line();
        let seq = reconstruct(&purest_line(), &s).unwrap();
        let init = extract_initial_values(&seq, &s).unwrap();
        assert!(init.is_basic());
        assert_eq!(init, purest_line());
    }
}
