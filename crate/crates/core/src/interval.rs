//! One-dimensional linear queries described by their neighboring set `V`,
//! with exact interval-union arithmetic and layer construction under the
//! length measure.
//!
//! Sets are stored as sorted, disjoint closed intervals. A layer is the
//! closure of `A_i − A_{i−1}`; a point on a shared boundary belongs to the
//! inner layer, so bands read as `(i−1, i]` away from the center.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Endpoint tolerance, relative to `1 + |endpoint|`.
pub const ENDPOINT_TOL: f64 = 1e-12;

/// Default cap on the number of layers built before giving up.
pub const DEFAULT_LAYER_CAP: usize = 100_000;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ENDPOINT_TOL * (1.0 + a.abs().max(b.abs()))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct IntervalUnion {
    pieces: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for IntervalUnion {
    type Error = Error;

    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<IntervalUnion> for Vec<(f64, f64)> {
    fn from(u: IntervalUnion) -> Self {
        u.pieces
    }
}

impl IntervalUnion {
    /// Normalizes any list of closed intervals: sorts, merges overlapping
    /// or touching pieces.
    pub fn new(mut pieces: Vec<(f64, f64)>) -> Result<Self> {
        for &(a, b) in &pieces {
            if !a.is_finite() || !b.is_finite() || a > b {
                return Err(Error::InvalidInterval(format!("[{a}, {b}]")));
            }
        }
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
        for (a, b) in pieces {
            match out.last_mut() {
                Some(last) if a <= last.1 || close(a, last.1) => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        Ok(Self { pieces: out })
    }

    fn from_valid(pieces: Vec<(f64, f64)>) -> Self {
        Self::new(pieces).expect("finite ordered endpoints")
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn point(x: f64) -> Self {
        Self::from_valid(vec![(x, x)])
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)])
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.pieces.iter().map(|(a, b)| b - a).sum()
    }

    pub fn min(&self) -> Option<f64> {
        self.pieces.first().map(|p| p.0)
    }

    pub fn max(&self) -> Option<f64> {
        self.pieces.last().map(|p| p.1)
    }

    /// `∫ |r| dr` over the set.
    pub fn integral_abs(&self) -> f64 {
        self.pieces
            .iter()
            .map(|&(a, b)| {
                if a >= 0.0 {
                    (b * b - a * a) / 2.0
                } else if b <= 0.0 {
                    (a * a - b * b) / 2.0
                } else {
                    (a * a + b * b) / 2.0
                }
            })
            .sum()
    }

    pub fn contains(&self, r: f64) -> bool {
        let k = self.pieces.partition_point(|p| p.1 < r && !close(p.1, r));
        self.pieces
            .get(k)
            .is_some_and(|&(a, _)| a <= r || close(a, r))
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_valid([self.pieces.as_slice(), other.pieces.as_slice()].concat())
    }

    pub fn negate(&self) -> Self {
        Self::from_valid(self.pieces.iter().map(|&(a, b)| (-b, -a)).collect())
    }

    pub fn translate(&self, t: f64) -> Self {
        Self::from_valid(self.pieces.iter().map(|&(a, b)| (a + t, b + t)).collect())
    }

    /// `±S = S ∪ −S`.
    pub fn signed(&self) -> Self {
        self.union(&self.negate())
    }

    pub fn minkowski_sum(&self, other: &Self) -> Self {
        let mut v = Vec::with_capacity(self.pieces.len() * other.pieces.len());
        for &(a, b) in &self.pieces {
            for &(c, d) in &other.pieces {
                v.push((a + c, b + d));
            }
        }
        Self::from_valid(v)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.pieces.len() && j < other.pieces.len() {
            let (a, b) = self.pieces[i];
            let (c, d) = other.pieces[j];
            let lo = a.max(c);
            let hi = b.min(d);
            if lo <= hi {
                out.push((lo, hi));
            }
            if b < d {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_valid(out)
    }

    /// Closure of `self − other`, dropping pieces of zero length.
    pub fn difference(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let mut j = 0;
        for &(a, b) in &self.pieces {
            let mut lo = a;
            while j < other.pieces.len() && other.pieces[j].1 < lo {
                j += 1;
            }
            let mut k = j;
            while k < other.pieces.len() && other.pieces[k].0 <= b {
                let (c, d) = other.pieces[k];
                if c > lo && !close(c, lo) {
                    out.push((lo, c));
                }
                lo = lo.max(d);
                k += 1;
            }
            if b > lo && !close(b, lo) {
                out.push((lo, b));
            }
        }
        Self::from_valid(out)
    }

    /// Pieces of positive length only.
    pub fn solid(&self) -> Self {
        Self {
            pieces: self
                .pieces
                .iter()
                .copied()
                .filter(|&(a, b)| !close(a, b))
                .collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.approx_eq(&self.negate(), ENDPOINT_TOL)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.pieces.len() == other.pieces.len()
            && self.pieces.iter().zip(&other.pieces).all(|(p, q)| {
                (p.0 - q.0).abs() <= tol * (1.0 + p.0.abs())
                    && (p.1 - q.1).abs() <= tol * (1.0 + p.1.abs())
            })
    }
}

/// A linear query described by its one-sided neighboring set `V ⊆ [0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuerySpec {
    v: IntervalUnion,
    delta_f: f64,
}

impl LinearQuerySpec {
    pub fn new(v: IntervalUnion) -> Result<Self> {
        let (lo, hi) = match (v.min(), v.max()) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => return Err(Error::InvalidInterval("neighboring set is empty".into())),
        };
        if lo < 0.0 {
            return Err(Error::InvalidInterval(format!(
                "neighboring set must lie in [0, inf), starts at {lo}"
            )));
        }
        if hi <= 0.0 {
            return Err(Error::InvalidInterval("sensitivity must be positive".into()));
        }
        Ok(Self { v, delta_f: hi })
    }

    pub fn from_pieces(pieces: &[(f64, f64)]) -> Result<Self> {
        Self::new(IntervalUnion::new(pieces.to_vec())?)
    }

    pub fn v(&self) -> &IntervalUnion {
        &self.v
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// `Vol(V)`.
    pub fn volume(&self) -> f64 {
        self.v.measure()
    }

    /// One neighbor step `B = ±V ∪ {0}`.
    pub fn step(&self) -> IntervalUnion {
        self.v.signed().union(&IntervalUnion::point(0.0))
    }
}

/// The `i`-th band around the center with a point layer 0:
/// `closure(B^{⊕i} − B^{⊕(i−1)})`.
pub fn minkowski_band(spec: &LinearQuerySpec, i: usize) -> IntervalUnion {
    let b = spec.step();
    let mut prev = IntervalUnion::point(0.0);
    if i == 0 {
        return prev;
    }
    let mut cur = prev.minkowski_sum(&b);
    for _ in 1..i {
        prev = cur;
        cur = prev.minkowski_sum(&b);
    }
    cur.difference(&prev)
}

/// Start of the periodic tail: `R_n = ±[a, a+Δf]`, `R_{n+1} = ±[a+Δf, a+2Δf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub n: usize,
    pub a: f64,
}

fn ring(a: f64, b: f64) -> IntervalUnion {
    IntervalUnion::from_valid(vec![(-b, -a), (a, b)])
}

/// Tests layers `n` and `n + 1` (and that `A_{n+1}` has no gaps left).
fn converges_at(
    layers: &[IntervalUnion],
    cumulative: &[IntervalUnion],
    delta_f: f64,
    n: usize,
) -> Option<Convergence> {
    let (rn, rn1) = (layers.get(n)?, layers.get(n + 1)?);
    let a = rn.max()? - delta_f;
    if a < -ENDPOINT_TOL {
        return None;
    }
    let a = a.max(0.0);
    let tol = 1e-9;
    let ok = rn.approx_eq(&ring(a, a + delta_f), tol)
        && rn1.approx_eq(&ring(a + delta_f, a + 2.0 * delta_f), tol)
        && cumulative[n + 1].pieces().len() == 1;
    ok.then_some(Convergence { n, a })
}

/// Smallest `n >= 1` at which the built prefix has become periodic.
pub fn detect_convergence(
    layers: &[IntervalUnion],
    cumulative: &[IntervalUnion],
    delta_f: f64,
) -> Option<Convergence> {
    (1..layers.len().saturating_sub(1)).find_map(|n| converges_at(layers, cumulative, delta_f, n))
}

/// Layers centered at 0; every dataset uses the same sequence translated to
/// its query value. Layers `0..=n+1` are stored, later ones follow the tail.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayers {
    spec: LinearQuerySpec,
    delta: f64,
    layers: Vec<IntervalUnion>,
    cumulative: Vec<IntervalUnion>,
    convergence: Convergence,
}

/// Builds `A_0 = [−δ, δ]`, `A_{i+1} = A_i ⊕ B` until the tail is periodic.
pub fn layers_linear(spec: &LinearQuerySpec, delta: f64, cap: usize) -> Result<LinearLayers> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidArgument(format!("radius {delta} is not a nonnegative real")));
    }
    let b = spec.step();
    let a0 = IntervalUnion::interval(-delta, delta)?;
    let mut layers = vec![a0.clone()];
    let mut cumulative = vec![a0];
    while layers.len() <= cap {
        let next = cumulative.last().unwrap().minkowski_sum(&b);
        layers.push(next.difference(cumulative.last().unwrap()));
        cumulative.push(next);
        let n = layers.len() - 2;
        if n >= 1 {
            if let Some(c) = converges_at(&layers, &cumulative, spec.delta_f, n) {
                return Ok(LinearLayers {
                    spec: spec.clone(),
                    delta,
                    layers,
                    cumulative,
                    convergence: c,
                });
            }
        }
    }
    Err(Error::NotConvergent(cap))
}

/// Measure of a set difference or intersection that counts as empty.
fn negligible(m: f64, scale: f64) -> bool {
    m <= 1e-9 * (1.0 + scale)
}

impl LinearLayers {
    pub fn spec(&self) -> &LinearQuerySpec {
        &self.spec
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn convergence(&self) -> Convergence {
        self.convergence
    }

    /// Number of stored layers (`n + 2`).
    pub fn stored(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> IntervalUnion {
        match self.layers.get(i) {
            Some(l) => l.clone(),
            None => {
                let Convergence { n, a } = self.convergence;
                let k = (i - n) as f64;
                let df = self.spec.delta_f;
                ring(a + k * df, a + (k + 1.0) * df)
            }
        }
    }

    /// `A_i`.
    pub fn cumulative(&self, i: usize) -> IntervalUnion {
        match self.cumulative.get(i) {
            Some(c) => c.clone(),
            None => {
                let Convergence { n, a } = self.convergence;
                let r = a + ((i - n) as f64 + 1.0) * self.spec.delta_f;
                IntervalUnion::from_valid(vec![(-r, r)])
            }
        }
    }

    /// `L(r) = min{i : r ∈ A_i}` for a point relative to the center.
    pub fn layer_of(&self, r: f64) -> usize {
        let last = self.cumulative.len() - 1;
        if self.cumulative[last].contains(r) {
            return self.cumulative.partition_point(|c| !c.contains(r));
        }
        let Convergence { n, a } = self.convergence;
        let df = self.spec.delta_f;
        let beyond = (r.abs() - a) / df - 1.0 - ENDPOINT_TOL;
        n + beyond.ceil().max(1.0) as usize
    }

    /// `P̄ = Σ_i e^{−iε} ∫_{R_i} |r| dr / Σ_i e^{−iε} |R_i|`, with the
    /// periodic tail summed in closed form.
    pub fn utility(&self, epsilon: f64) -> Result<f64> {
        let (num, mass) = self.weighted_sums(epsilon)?;
        Ok(num / mass)
    }

    /// Numerator and normalizer of [`Self::utility`].
    pub fn weighted_sums(&self, epsilon: f64) -> Result<(f64, f64)> {
        crate::layers::check_epsilon(epsilon)?;
        let Convergence { n, a } = self.convergence;
        let t = (-epsilon).exp();
        let mut num = 0.0;
        let mut mass = 0.0;
        for (i, l) in self.layers.iter().enumerate().take(n) {
            let w = (-(i as f64) * epsilon).exp();
            num += w * l.integral_abs();
            mass += w * l.measure();
        }
        let df = self.spec.delta_f;
        let tn = (-(n as f64) * epsilon).exp();
        let s0 = 1.0 / (1.0 - t);
        let s1 = t / ((1.0 - t) * (1.0 - t));
        mass += 2.0 * df * tn * s0;
        num += df * tn * ((2.0 * a + df) * s0 + 2.0 * df * s1);
        Ok((num, mass))
    }

    /// Largest layer jump between the sequence at 0 and its translate by
    /// any `v ∈ ±V`, over sets of positive length. Every dataset has the
    /// same normalizer, so the effective ε is `ε` times this jump.
    pub fn max_layer_jump(&self) -> (usize, usize) {
        let b = self.spec.step();
        let scale = self.spec.delta_f + self.delta;
        let top = self.layers.len();
        (0..top)
            .into_par_iter()
            .map(|i| {
                let s = self.layers[i].solid().minkowski_sum(&b);
                if s.is_empty() {
                    return (0, i);
                }
                // first k with S ⊆ A_k
                let (mut lo, mut hi) = (i, i + 1);
                while !negligible(s.difference(&self.cumulative(hi)).measure(), scale) {
                    hi += 1;
                }
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if negligible(s.difference(&self.cumulative(mid)).measure(), scale) {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                let up = lo - i;
                // first k with |S ∩ A_k| > 0
                let (mut lo, mut hi) = (0, i);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if negligible(s.intersection(&self.cumulative(mid)).measure(), scale) {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                (up.max(i - lo), i)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0, 0), |best, c| if c.0 > best.0 { c } else { best })
    }

    pub fn effective_epsilon(&self, epsilon: f64) -> f64 {
        self.max_layer_jump().0 as f64 * epsilon
    }

    /// Draws `center + r` with density `∝ e^{−L(r) ε}`.
    pub fn sample(&self, center: f64, epsilon: f64, rng: &mut SplitMix64) -> Result<f64> {
        crate::layers::check_epsilon(epsilon)?;
        let Convergence { n, a } = self.convergence;
        let df = self.spec.delta_f;
        let weights: Vec<f64> = self
            .layers
            .iter()
            .take(n)
            .enumerate()
            .map(|(i, l)| (-(i as f64) * epsilon).exp() * l.measure())
            .collect();
        let tail = 2.0 * df * (-(n as f64) * epsilon).exp() / (1.0 - (-epsilon).exp());
        let total: f64 = weights.iter().sum::<f64>() + tail;
        let mut u = rng.next_f64() * total;
        let mut chosen = None;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                chosen = Some(i);
                break;
            }
            u -= w;
        }
        let set = match chosen {
            Some(i) => self.layers[i].clone(),
            None => {
                let k = ((1.0 - rng.next_f64()).ln() / -epsilon).floor() as usize;
                let k = k as f64;
                ring(a + k * df, a + (k + 1.0) * df)
            }
        };
        let mut v = rng.next_f64() * set.measure();
        for &(lo, hi) in set.pieces() {
            if v <= hi - lo {
                return Ok(center + lo + v);
            }
            v -= hi - lo;
        }
        Ok(center + set.max().unwrap_or(0.0))
    }

    /// First `count` layers for output.
    pub fn dump(&self, count: usize) -> Vec<LayerDump> {
        (0..count)
            .map(|i| LayerDump {
                layer: i,
                intervals: self.layer(i),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDump {
    pub layer: usize,
    pub intervals: IntervalUnion,
}

/// Discretized Laplace bands with scale `Δf`: `[−Δf, Δf]`, then
/// `±[iΔf, (i+1)Δf]`.
pub fn laplace_bands(delta_f: f64, count: usize) -> Vec<IntervalUnion> {
    (0..count)
        .map(|i| {
            let i = i as f64;
            if i == 0.0 {
                IntervalUnion::from_valid(vec![(-delta_f, delta_f)])
            } else {
                ring(i * delta_f, (i + 1.0) * delta_f)
            }
        })
        .collect()
}

/// Whether a finite prefix of centered layers is generated by its layer 0
/// alone: every `R_i − ((R_0 ⊕ B^{⊕i}) − A_{i−1})` has length zero.
/// Returns the first layer with a nonnull extra set.
pub fn first_extra_linear(layers: &[IntervalUnion], spec: &LinearQuerySpec) -> Option<usize> {
    let b = spec.step();
    let scale = spec.delta_f;
    let mut reach = layers.first()?.clone();
    let mut acc = reach.clone();
    for (i, l) in layers.iter().enumerate().skip(1) {
        reach = reach.minkowski_sum(&b);
        let rule = reach.difference(&acc);
        if !negligible(l.difference(&rule).measure(), scale) {
            return Some(i);
        }
        acc = acc.union(l);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iu(p: &[(f64, f64)]) -> IntervalUnion {
        IntervalUnion::new(p.to_vec()).unwrap()
    }

    #[test]
    fn normalization_and_ops() {
        let u = iu(&[(3.0, 4.0), (0.0, 1.0), (1.0, 2.0)]);
        assert_eq!(u.pieces(), &[(0.0, 2.0), (3.0, 4.0)]);
        assert_eq!(u.measure(), 3.0);
        assert!(u.contains(2.0) && !u.contains(2.5));
        assert_eq!(u.difference(&iu(&[(0.5, 3.5)])).pieces(), &[(0.0, 0.5), (3.5, 4.0)]);
        assert_eq!(u.intersection(&iu(&[(1.5, 3.5)])).pieces(), &[(1.5, 2.0), (3.0, 3.5)]);
        assert_eq!(
            iu(&[(0.0, 1.0)]).minkowski_sum(&iu(&[(0.0, 0.0), (10.0, 10.0)])).pieces(),
            &[(0.0, 1.0), (10.0, 11.0)]
        );
        assert!(IntervalUnion::new(vec![(1.0, 0.0)]).is_err());
        assert_eq!(iu(&[(-1.0, 2.0)]).integral_abs(), 2.5);
    }

    #[test]
    fn bands_for_convex_and_split_sets() {
        let unit = LinearQuerySpec::from_pieces(&[(0.0, 1.0)]).unwrap();
        assert!(minkowski_band(&unit, 2).approx_eq(&ring(1.0, 2.0), 1e-12));
        let split = LinearQuerySpec::from_pieces(&[(0.0, 1.0), (10.0, 11.0)]).unwrap();
        let b1 = minkowski_band(&split, 1);
        assert!((b1.measure() - 4.0).abs() < 1e-12);
        let b2 = minkowski_band(&split, 2);
        // ±((1,2] ∪ [9,10) ∪ (11,12] ∪ [20,22]); 10 + (−1) lands in [9,10)
        assert!((b2.measure() - 10.0).abs() < 1e-12);
        assert!(b2.is_symmetric());
    }

    #[test]
    fn unit_layers_and_shift() {
        let unit = LinearQuerySpec::from_pieces(&[(0.0, 1.0)]).unwrap();
        let l = layers_linear(&unit, 0.0, 100).unwrap();
        assert_eq!(l.convergence(), Convergence { n: 1, a: 0.0 });
        assert!(l.layer(3).approx_eq(&ring(2.0, 3.0), 1e-12));
        assert_eq!(l.layer_of(0.0), 0);
        assert_eq!(l.layer_of(1.0), 1);
        assert_eq!(l.layer_of(-1.5), 2);
        assert_eq!(l.layer_of(7.25), 8);
        let s = layers_linear(&unit, 5.0, 100).unwrap();
        assert!(s.layer(0).approx_eq(&iu(&[(-5.0, 5.0)]), 1e-12));
        assert!(s.layer(4).approx_eq(&ring(8.0, 9.0), 1e-12));
        assert_eq!(s.convergence(), Convergence { n: 1, a: 5.0 });
    }

    #[test]
    fn unit_utility_matches_series() {
        let unit = LinearQuerySpec::from_pieces(&[(0.0, 1.0)]).unwrap();
        let l = layers_linear(&unit, 0.0, 100).unwrap();
        for eps in [0.5f64, 1.0, 2.0, 4.0] {
            let want = 1.0 / (1.0 - (-eps).exp()) - 0.5;
            assert!((l.utility(eps).unwrap() - want).abs() < 1e-12);
        }
        assert!((l.utility(1.0).unwrap() - 1.0820).abs() < 1e-4);
        let wide = layers_linear(&unit, 1000.0, 100).unwrap();
        assert!((wide.utility(1.0).unwrap() / 500.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn split_set_converges_within_bound() {
        let split = LinearQuerySpec::from_pieces(&[(0.0, 1.0), (10.0, 11.0)]).unwrap();
        let l = layers_linear(&split, 0.0, 1000).unwrap();
        assert!(l.convergence().n <= 11);
        for i in 0..l.stored() + 3 {
            assert!(l.layer(i).is_symmetric());
        }
    }

    #[test]
    fn purest_jump_is_one() {
        let split = LinearQuerySpec::from_pieces(&[(0.0, 1.0), (10.0, 11.0)]).unwrap();
        for delta in [0.0, 2.0] {
            let l = layers_linear(&split, delta, 1000).unwrap();
            assert_eq!(l.max_layer_jump().0, 1);
            assert!(l.effective_epsilon(0.7) <= 0.7 + 1e-12);
        }
    }

    #[test]
    fn laplace_is_basic() {
        let unit = LinearQuerySpec::from_pieces(&[(0.0, 2.0)]).unwrap();
        let bands = laplace_bands(2.0, 8);
        assert_eq!(first_extra_linear(&bands, &unit), None);
        let l = layers_linear(&unit, 2.0, 100).unwrap();
        for (i, b) in bands.iter().enumerate() {
            assert!(l.layer(i).approx_eq(b, 1e-12));
        }
        let bad = vec![iu(&[(-1.0, 1.0)]), ring(1.0, 3.0)];
        let unit1 = LinearQuerySpec::from_pieces(&[(0.0, 1.0)]).unwrap();
        assert_eq!(first_extra_linear(&bad, &unit1), Some(1));
    }

    #[test]
    fn non_convergent_is_reported() {
        let points = LinearQuerySpec::from_pieces(&[(1.0, 1.0), (3.0, 3.0)]).unwrap();
        assert!(matches!(
            layers_linear(&points, 0.0, 50),
            Err(Error::NotConvergent(50))
        ));
        assert!(LinearQuerySpec::from_pieces(&[(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn sampling_stays_near_center() {
        let unit = LinearQuerySpec::from_pieces(&[(0.0, 1.0)]).unwrap();
        let l = layers_linear(&unit, 0.0, 100).unwrap();
        let mut rng = SplitMix64::new(5);
        let n = 20_000;
        let mean_abs: f64 = (0..n)
            .map(|_| (l.sample(10.0, 1.0, &mut rng).unwrap() - 10.0).abs())
            .sum::<f64>()
            / n as f64;
        let want = l.utility(1.0).unwrap();
        assert!((mean_abs - want).abs() < 0.05, "{mean_abs} vs {want}");
    }

    #[test]
    fn serde_round_trip() {
        let u = iu(&[(0.0, 1.0), (2.0, 3.0)]);
        let s = serde_json::to_string(&u).unwrap();
        assert_eq!(s, "[[0.0,1.0],[2.0,3.0]]");
        assert_eq!(serde_json::from_str::<IntervalUnion>(&s).unwrap(), u);
        assert!(serde_json::from_str::<IntervalUnion>("[[2.0,1.0]]").is_err());
    }
}
