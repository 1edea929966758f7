//! Random instance generators shared by integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use layerdp::baselines::{exponential_mech, score_sensitivity};
use layerdp::{DatasetInit, DatasetSpace, InitialValues, MetricSpacePair, QueryFunction, SplitMix64, ValueSet, ValueSpace};

/// Hop-count metric of a random connected graph on `n` vertices: a random
/// spanning tree plus each remaining edge with probability `extra`.
pub fn random_hop_metric(rng: &mut SplitMix64, n: usize, extra: f64) -> DatasetSpace {
    let mut adj = vec![Vec::new(); n];
    for v in 1..n {
        let u = rng.below(v);
        adj[u].push(v);
        adj[v].push(u);
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if !adj[u].contains(&v) && rng.next_f64() < extra {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    let matrix = (0..n)
        .map(|s| {
            let mut d = vec![usize::MAX; n];
            d[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if d[v] == usize::MAX {
                        d[v] = d[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            d.into_iter().map(|x| x as f64).collect()
        })
        .collect();
    DatasetSpace::new((0..n).map(|i| format!("d{i}")).collect(), matrix).unwrap()
}

/// A random instance: geodesic dataset metric, integer value support,
/// random query, and an exponential-mechanism density with random scores.
pub struct Instance {
    pub spaces: MetricSpacePair,
    pub f: QueryFunction,
    pub densities: Vec<Vec<f64>>,
    pub epsilon: f64,
}

pub fn random_instance(rng: &mut SplitMix64, max_n: usize, max_m: usize) -> Instance {
    let n = 2 + rng.below(max_n - 1);
    let m = 1 + rng.below(max_m);
    let datasets = random_hop_metric(rng, n, 0.2);
    let mut pts: Vec<f64> = Vec::new();
    while pts.len() < m {
        let v = rng.below(40) as f64;
        if !pts.contains(&v) {
            pts.push(v);
        }
    }
    let values = ValueSpace::new(pts).unwrap();
    let spaces = MetricSpacePair::new(datasets, values);
    let f = QueryFunction::new((0..n).map(|_| rng.below(m)).collect(), &spaces).unwrap();
    // s^x(r) = base_r − slope_r · d(x, anchor_r) + noise: Lipschitz in x, so
    // the density spreads over several layers instead of flattening out
    let base: Vec<f64> = (0..m).map(|_| 40.0 * rng.next_f64()).collect();
    let slope: Vec<f64> = (0..m).map(|_| 3.0 * rng.next_f64()).collect();
    let anchor: Vec<usize> = (0..m).map(|_| rng.below(n)).collect();
    let scores: Vec<Vec<f64>> = (0..n)
        .map(|x| {
            (0..m)
                .map(|r| base[r] - slope[r] * spaces.datasets.dist(x, anchor[r]) + rng.next_f64())
                .collect()
        })
        .collect();
    let ds = score_sensitivity(&scores, &spaces).unwrap();
    let epsilon = 0.2 + 1.8 * rng.next_f64();
    let mech = exponential_mech(&scores, ds, epsilon, &spaces).unwrap();
    Instance {
        densities: mech.rows().to_vec(),
        spaces,
        f,
        epsilon,
    }
}

/// Random basic initial values: each layer 0 a nonempty random subset, and
/// every support point in at least one layer 0 so that no point is left to
/// coverage completion.
pub fn random_basic(rng: &mut SplitMix64, spaces: &MetricSpacePair, epsilon: f64) -> InitialValues {
    let m = spaces.values.len();
    let n = spaces.datasets.len();
    let mut sets: Vec<ValueSet> = (0..n)
        .map(|_| {
            let mut s: ValueSet = (0..m).filter(|_| rng.next_f64() < 0.25).collect();
            if s.is_empty() {
                s.insert(rng.below(m));
            }
            s
        })
        .collect();
    for r in 0..m {
        if !sets.iter().any(|s| s.contains(&r)) {
            sets[rng.below(n)].insert(r);
        }
    }
    InitialValues::new(epsilon, sets.into_iter().map(DatasetInit::basic).collect()).unwrap()
}
