//! Dataset and value metric spaces, query functions and sensitivities.
//!
//! All iteration runs in the canonical element order fixed at construction.
//! Distances are stored as a dense row-major matrix.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Absolute tolerance used when classifying distances into bands.
pub const BAND_TOL: f64 = 1e-12;

/// Largest universe for which the triangle inequality is checked exhaustively.
pub const EXHAUSTIVE_VALIDATION_LIMIT: usize = 2000;

const SAMPLED_TRIPLES: usize = 1_000_000;

/// Band index of a distance: the unique `i` with `i - 1 < d <= i`, `0` for `d = 0`.
pub fn band_index(d: f64) -> usize {
    let i = (d - BAND_TOL).ceil();
    if i <= 0.0 {
        0
    } else {
        i as usize
    }
}

/// True when two datasets at distance `d` are neighbors (`0 < d <= 1`).
#[inline]
pub fn is_neighbor_distance(d: f64) -> bool {
    d > BAND_TOL && d <= 1.0 + BAND_TOL
}

#[derive(Debug, Clone)]
pub struct DatasetSpace {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    dist: Vec<f64>,
}

impl DatasetSpace {
    /// Builds a space from a row-major distance matrix and validates the metric axioms.
    pub fn new(ids: Vec<String>, matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n = ids.len();
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidMetric(format!(
                "distance matrix must be {n}x{n}"
            )));
        }
        let dist = matrix.into_iter().flatten().collect();
        Self::from_flat(ids, dist)
    }

    /// Builds a space whose identifiers are numbers, with `d(x, y) = |x - y|`.
    pub fn abs_diff(ids: Vec<String>) -> Result<Self> {
        let coords = ids
            .iter()
            .map(|id| {
                id.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidMetric(format!("identifier `{id}` is not numeric")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = ids.len();
        let mut dist = Vec::with_capacity(n * n);
        for a in &coords {
            for b in &coords {
                dist.push((a - b).abs());
            }
        }
        Self::from_flat(ids, dist)
    }

    /// The integer line `{0, 1, ..., n - 1}` with the absolute-difference metric.
    pub fn line(n: usize) -> Self {
        Self::abs_diff((0..n).map(|i| i.to_string()).collect()).expect("integer line is a metric")
    }

    pub(crate) fn from_flat(ids: Vec<String>, dist: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::InvalidSpace("dataset universe is empty".into()));
        }
        if dist.len() != n * n {
            return Err(Error::InvalidMetric(format!("expected {} distances", n * n)));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidSpace(format!("duplicate dataset identifier `{id}`")));
            }
        }
        let space = Self { ids, index, dist };
        space.validate()?;
        Ok(space)
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                let d = self.dist(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) = {d} is not a nonnegative real")));
                }
                if i == j && d != 0.0 {
                    return Err(Error::InvalidMetric(format!("d({i},{i}) = {d} is not zero")));
                }
                if i != j && d <= 0.0 {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) = 0 for distinct elements")));
                }
                if (d - self.dist(j, i)).abs() > BAND_TOL {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) != d({j},{i})")));
                }
            }
        }
        let violates = |i: usize, j: usize, k: usize| {
            self.dist(i, k) > self.dist(i, j) + self.dist(j, k) + 1e-9
        };
        let witness = if n <= EXHAUSTIVE_VALIDATION_LIMIT {
            (0..n).into_par_iter().find_map_first(|i| {
                for j in 0..n {
                    for k in (i + 1)..n {
                        if violates(i, j, k) {
                            return Some((i, j, k));
                        }
                    }
                }
                None
            })
        } else {
            let mut rng = SplitMix64::new(n as u64);
            (0..SAMPLED_TRIPLES).find_map(|_| {
                let (i, j, k) = (rng.below(n), rng.below(n), rng.below(n));
                violates(i, j, k).then_some((i, j, k))
            })
        };
        match witness {
            Some((i, j, k)) => Err(Error::InvalidMetric(format!(
                "triangle inequality fails for ({}, {}, {})",
                self.ids[i], self.ids[j], self.ids[k]
            ))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, x: usize) -> &str {
        &self.ids[x]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownDataset(id.to_string()))
    }

    pub(crate) fn check_index(&self, x: usize) -> Result<()> {
        if x < self.len() {
            Ok(())
        } else {
            Err(Error::DatasetIndex(x))
        }
    }

    #[inline]
    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.ids.len() + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.ids.len();
        &self.dist[x * n..(x + 1) * n]
    }

    /// Neighbors of `x`, excluding `x` itself.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(x)
            .iter()
            .enumerate()
            .filter(|(_, &d)| is_neighbor_distance(d))
            .map(|(y, _)| y)
    }

    /// All unordered neighbor pairs `(x, y)` with `x < y`.
    pub fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n)
            .flat_map(|x| ((x + 1)..n).map(move |y| (x, y)))
            .filter(|&(x, y)| is_neighbor_distance(self.dist(x, y)))
            .collect()
    }

    /// `{y : i - 1 < d(x, y) <= i}`.
    pub fn neighborhood_band(&self, x: usize, i: usize) -> Result<Vec<usize>> {
        self.check_index(x)?;
        Ok(self
            .row(x)
            .iter()
            .enumerate()
            .filter(|(_, &d)| band_index(d) == i)
            .map(|(y, _)| y)
            .collect())
    }

    /// `{y : d(x, y) <= i}`.
    pub fn closed_ball(&self, x: usize, i: usize) -> Result<Vec<usize>> {
        self.check_index(x)?;
        Ok(self
            .row(x)
            .iter()
            .enumerate()
            .filter(|(_, &d)| band_index(d) <= i)
            .map(|(y, _)| y)
            .collect())
    }

    /// Datasets grouped by band index around `x`; entry `i` holds band `i`.
    pub fn bands(&self, x: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for (y, &d) in self.row(x).iter().enumerate() {
            let i = band_index(d);
            if out.len() <= i {
                out.resize_with(i + 1, Vec::new);
            }
            out[i].push(y);
        }
        out
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Largest band index between any two datasets.
    pub fn band_diameter(&self) -> usize {
        band_index(self.diameter())
    }

    /// Whether every distance is a natural number and every pair at distance
    /// `i >= 1` has an intermediate neighbor `x'` of `x` with `d(x', y) = i - 1`.
    ///
    /// Group-privacy bounds are only asserted on spaces with this property.
    pub fn is_geodesic(&self) -> bool {
        let n = self.len();
        let integral = self
            .dist
            .iter()
            .all(|&d| (d - d.round()).abs() <= BAND_TOL);
        if !integral {
            return false;
        }
        (0..n).into_par_iter().all(|x| {
            let nbrs: Vec<usize> = self
                .neighbors(x)
                .filter(|&y| (self.dist(x, y) - 1.0).abs() <= BAND_TOL)
                .collect();
            (0..n).all(|y| {
                let d = self.dist(x, y).round();
                d < 1.0
                    || nbrs
                        .iter()
                        .any(|&m| (self.dist(m, y) - (d - 1.0)).abs() <= BAND_TOL)
            })
        })
    }
}

/// A finite, strictly increasing set of real value points with the
/// absolute-difference metric and counting measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSpace {
    points: Vec<f64>,
}

impl ValueSpace {
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpace("value support is empty".into()));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidSpace(format!("non-finite value point {p}")));
        }
        points.sort_by(f64::total_cmp);
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpace("duplicate value points".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn value(&self, r: usize) -> f64 {
        self.points[r]
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        (self.points[a] - self.points[b]).abs()
    }

    pub fn index_of(&self, v: f64) -> Result<usize> {
        let i = self.points.partition_point(|&p| p < v - 1e-9);
        match self.points.get(i) {
            Some(&p) if (p - v).abs() <= 1e-9 => Ok(i),
            _ => Err(Error::ValueOutsideSupport(v)),
        }
    }

    pub(crate) fn check_index(&self, r: usize) -> Result<()> {
        if r < self.len() {
            Ok(())
        } else {
            Err(Error::ValueIndex(r))
        }
    }
}

/// A total map from datasets to value points, stored as value indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryFunction {
    images: Vec<usize>,
}

impl QueryFunction {
    pub fn new(images: Vec<usize>, spaces: &MetricSpacePair) -> Result<Self> {
        if images.len() != spaces.datasets.len() {
            return Err(Error::InvalidSpace(format!(
                "query covers {} datasets, universe has {}",
                images.len(),
                spaces.datasets.len()
            )));
        }
        for &r in &images {
            spaces.values.check_index(r)?;
        }
        Ok(Self { images })
    }

    /// Maps raw values into the support of `spaces`.
    pub fn from_values(values: &[f64], spaces: &MetricSpacePair) -> Result<Self> {
        let images = values
            .iter()
            .map(|&v| spaces.values.index_of(v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(images, spaces)
    }

    #[inline]
    pub fn image(&self, x: usize) -> usize {
        self.images[x]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }
}

/// The stage every mechanism runs on: datasets with `d̄`, values with `d`.
#[derive(Debug, Clone)]
pub struct MetricSpacePair {
    pub datasets: DatasetSpace,
    pub values: ValueSpace,
}

impl MetricSpacePair {
    pub fn new(datasets: DatasetSpace, values: ValueSpace) -> Self {
        Self { datasets, values }
    }

    /// Support equal to the image of `values`, with the query mapping each dataset to its value.
    pub fn with_image_support(
        datasets: DatasetSpace,
        values: &[f64],
    ) -> Result<(Self, QueryFunction)> {
        let spaces = Self::new(datasets, ValueSpace::new(dedup(values))?);
        let f = QueryFunction::from_values(values, &spaces)?;
        Ok((spaces, f))
    }

    /// Distance between the query value at `x` and value point `r`.
    #[inline]
    pub fn distortion(&self, f: &QueryFunction, x: usize, r: usize) -> f64 {
        self.values.dist(f.image(x), r)
    }
}

fn dedup(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Maximum of `d(f(x), f(x'))` over neighbor pairs.
pub fn global_sensitivity(f: &QueryFunction, spaces: &MetricSpacePair) -> Result<f64> {
    let pairs = spaces.datasets.neighbor_pairs();
    if pairs.is_empty() {
        return Err(Error::IsolatedUniverse);
    }
    Ok(pairs
        .iter()
        .map(|&(x, y)| spaces.values.dist(f.image(x), f.image(y)))
        .fold(0.0, f64::max))
}

/// Maximum of `d(f(x), f(x'))` over `x'` with `d̄(x, x') <= 1`.
pub fn local_sensitivity(f: &QueryFunction, spaces: &MetricSpacePair, x: usize) -> Result<f64> {
    spaces.datasets.check_index(x)?;
    Ok(spaces
        .datasets
        .neighbors(x)
        .map(|y| spaces.values.dist(f.image(x), f.image(y)))
        .fold(0.0, f64::max))
}

/// First triple `(x, y, z)` with `d̄(x,y) > d̄(x,z)` but `d(f(x),f(y)) <= d(f(x),f(z))`.
pub fn monotonicity_violation(
    f: &QueryFunction,
    spaces: &MetricSpacePair,
) -> Option<(usize, usize, usize)> {
    let ds = &spaces.datasets;
    let n = ds.len();
    (0..n).into_par_iter().find_map_first(|x| {
        for y in 0..n {
            for z in 0..n {
                if ds.dist(x, y) > ds.dist(x, z) + BAND_TOL
                    && spaces.distortion(f, x, f.image(y)) <= spaces.distortion(f, x, f.image(z))
                {
                    return Some((x, y, z));
                }
            }
        }
        None
    })
}

pub fn is_strictly_monotonic(f: &QueryFunction, spaces: &MetricSpacePair) -> bool {
    monotonicity_violation(f, spaces).is_none()
}
