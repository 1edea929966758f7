//! Isomorphism classes of simple graphs on up to seven nodes, the edge-flip
//! metric between classes, and triangle counting.
//!
//! Edges of `K_n` are indexed in lexicographic order `(0,1), (0,2), …,
//! (n-2,n-1)`; a labeled graph is a bitmask with bit `e` set when edge `e`
//! is present. The canonical representative of a class is the labeled graph
//! whose sorted edge list is lexicographically smallest over all node
//! permutations.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{DatasetSpace, MetricSpacePair, QueryFunction, ValueSpace};

pub const MAX_NODES: usize = 7;

/// Edge list of `K_n` in index order.
pub fn edge_list(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .collect()
}

fn edge_index_table(n: usize) -> Vec<Vec<usize>> {
    let mut idx = vec![vec![usize::MAX; n]; n];
    for (e, (u, v)) in edge_list(n).into_iter().enumerate() {
        idx[u][v] = e;
        idx[v][u] = e;
    }
    idx
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

const CHUNK: usize = 7;

/// Canonicalizer for one node count. For every permutation it keeps lookup
/// tables mapping 7-bit chunks of an edge mask to the permuted graph's
/// MSB-first code; the canonical code is the maximum image code, which
/// belongs to the lexicographically smallest edge list.
struct Canonicalizer {
    edges: usize,
    chunks: usize,
    tables: Vec<u32>,
}

impl Canonicalizer {
    fn new(n: usize) -> Self {
        let edges = n * n.saturating_sub(1) / 2;
        let chunks = edges.div_ceil(CHUNK).max(1);
        let pairs = edge_list(n);
        let idx = edge_index_table(n);
        let perms = permutations(n);
        let mut tables = vec![0u32; perms.len() * chunks * (1 << CHUNK)];
        for (k, p) in perms.iter().enumerate() {
            let image: Vec<usize> = pairs.iter().map(|&(u, v)| idx[p[u]][p[v]]).collect();
            for c in 0..chunks {
                let base = (k * chunks + c) << CHUNK;
                for bits in 0..(1usize << CHUNK) {
                    let mut code = 0u32;
                    for b in 0..CHUNK {
                        let e = c * CHUNK + b;
                        if bits >> b & 1 == 1 && e < edges {
                            code |= 1 << (edges - 1 - image[e]);
                        }
                    }
                    tables[base + bits] = code;
                }
            }
        }
        Self {
            edges,
            chunks,
            tables,
        }
    }

    fn code(&self, mask: u32) -> u32 {
        let stride = self.chunks << CHUNK;
        self.tables
            .chunks_exact(stride)
            .map(|t| {
                (0..self.chunks)
                    .map(|c| t[(c << CHUNK) + ((mask >> (c * CHUNK)) as usize & 0x7f)])
                    .fold(0, |a, b| a | b)
            })
            .max()
            .unwrap_or(0)
    }

    fn mask_of_code(&self, code: u32) -> u32 {
        (0..self.edges)
            .filter(|e| code >> (self.edges - 1 - e) & 1 == 1)
            .fold(0, |m, e| m | 1 << e)
    }
}

/// One isomorphism class, stored by its canonical representative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphClass {
    pub nodes: usize,
    /// Canonical edge mask.
    pub mask: u32,
    pub triangles: usize,
}

impl GraphClass {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        edge_list(self.nodes)
            .into_iter()
            .enumerate()
            .filter(|(e, _)| self.mask >> e & 1 == 1)
            .map(|(_, p)| p)
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.mask.count_ones() as usize
    }
}

/// Number of 3-cliques of a labeled graph.
pub fn triangle_count(nodes: usize, mask: u32) -> usize {
    let idx = edge_index_table(nodes);
    let has = |u: usize, v: usize| mask >> idx[u][v] & 1 == 1;
    let mut t = 0;
    for a in 0..nodes {
        for b in (a + 1)..nodes {
            if !has(a, b) {
                continue;
            }
            for c in (b + 1)..nodes {
                if has(a, c) && has(b, c) {
                    t += 1;
                }
            }
        }
    }
    t
}

/// All classes on `nodes` nodes in canonical order, with the flip metric.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphUniverse {
    pub nodes: usize,
    pub classes: Vec<GraphClass>,
    /// Row-major BFS distances.
    pub dist: Vec<u32>,
}

/// Enumerates every isomorphism class by growing canonical forms one edge
/// at a time from the empty graph.
pub fn enumerate_graphs(nodes: usize) -> Result<GraphUniverse> {
    if nodes == 0 || nodes > MAX_NODES {
        return Err(Error::Capacity(format!(
            "graph enumeration supports 1..={MAX_NODES} nodes, got {nodes}"
        )));
    }
    let canon = Canonicalizer::new(nodes);
    let e = canon.edges;
    let mut levels: Vec<Vec<u32>> = vec![vec![0]];
    for _ in 0..e {
        let prev = levels.last().unwrap();
        let next: BTreeSet<u32> = prev
            .par_iter()
            .flat_map_iter(|&code| {
                let mask = canon.mask_of_code(code);
                let canon = &canon;
                (0..e)
                    .filter(move |b| mask >> b & 1 == 0)
                    .map(move |b| canon.code(mask | 1 << b))
            })
            .collect();
        // lexicographically smallest edge list first
        levels.push(next.into_iter().rev().collect());
    }
    let classes: Vec<GraphClass> = levels
        .into_iter()
        .flatten()
        .map(|code| {
            let mask = canon.mask_of_code(code);
            GraphClass {
                nodes,
                mask,
                triangles: triangle_count(nodes, mask),
            }
        })
        .collect();
    let dist = flip_distances(&canon, &classes);
    Ok(GraphUniverse {
        nodes,
        classes,
        dist,
    })
}

/// Canonical mask of any labeled graph on `nodes` nodes.
pub fn canonical_mask(nodes: usize, mask: u32) -> Result<u32> {
    if nodes == 0 || nodes > MAX_NODES {
        return Err(Error::Capacity(format!("{nodes} nodes")));
    }
    let c = Canonicalizer::new(nodes);
    Ok(c.mask_of_code(c.code(mask)))
}

fn flip_adjacency(canon: &Canonicalizer, classes: &[GraphClass]) -> Vec<Vec<usize>> {
    let pos: HashMap<u32, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.mask, i))
        .collect();
    classes
        .par_iter()
        .map(|c| {
            let set: BTreeSet<usize> = (0..canon.edges)
                .map(|b| pos[&canon.mask_of_code(canon.code(c.mask ^ 1 << b))])
                .collect();
            set.into_iter().collect()
        })
        .collect()
}

fn flip_distances(canon: &Canonicalizer, classes: &[GraphClass]) -> Vec<u32> {
    let adj = flip_adjacency(canon, classes);
    let n = classes.len();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut d = vec![u32::MAX; n];
            d[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if d[v] == u32::MAX {
                        d[v] = d[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            d
        })
        .collect();
    rows.concat()
}

impl GraphUniverse {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dist(&self, a: usize, b: usize) -> u32 {
        self.dist[a * self.len() + b]
    }

    pub fn diameter(&self) -> u32 {
        self.dist.iter().copied().max().unwrap_or(0)
    }

    pub fn neighbors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&b| self.dist(a, b) == 1)
    }

    /// Position of the class containing a labeled graph.
    pub fn find(&self, mask: u32) -> Result<usize> {
        let c = canonical_mask(self.nodes, mask)?;
        self.classes
            .iter()
            .position(|g| g.mask == c)
            .ok_or_else(|| Error::InvalidArgument(format!("mask {mask:#x} is not a graph on {} nodes", self.nodes)))
    }

    /// Largest change in triangle count over one edge flip.
    pub fn triangle_local_sensitivity(&self, a: usize) -> usize {
        let t = self.classes[a].triangles;
        self.neighbors(a)
            .map(|b| self.classes[b].triangles.abs_diff(t))
            .max()
            .unwrap_or(0)
    }

    /// `max_{d(x, y) <= t} LS(y)` by brute force.
    pub fn ladder_local_sensitivity(&self, x: usize, t: u32) -> usize {
        (0..self.len())
            .filter(|&y| self.dist(x, y) <= t)
            .map(|y| self.triangle_local_sensitivity(y))
            .max()
            .unwrap_or(0)
    }

    /// `I_t(x)` for every class and `t = 0..=diameter`, from one pass of
    /// local sensitivities.
    pub fn ladder_table(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let diam = self.diameter() as usize;
        let ls: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|y| self.triangle_local_sensitivity(y))
            .collect();
        (0..n)
            .into_par_iter()
            .map(|x| {
                let mut by_dist = vec![0usize; diam + 1];
                for y in 0..n {
                    let d = self.dist(x, y) as usize;
                    by_dist[d] = by_dist[d].max(ls[y]);
                }
                for t in 1..=diam {
                    by_dist[t] = by_dist[t].max(by_dist[t - 1]);
                }
                by_dist
            })
            .collect()
    }

    /// Dataset ids are class positions; values are the distinct triangle counts.
    pub fn spaces(&self) -> Result<(MetricSpacePair, QueryFunction)> {
        let ids = (0..self.len()).map(|i| i.to_string()).collect();
        let dist = self.dist.iter().map(|&d| d as f64).collect();
        let datasets = DatasetSpace::from_flat(ids, dist)?;
        let counts: BTreeSet<usize> = self.classes.iter().map(|c| c.triangles).collect();
        let values = ValueSpace::new(counts.into_iter().map(|t| t as f64).collect())?;
        let spaces = MetricSpacePair::new(datasets, values);
        let f = QueryFunction::from_values(
            &self.classes.iter().map(|c| c.triangles as f64).collect::<Vec<_>>(),
            &spaces,
        )?;
        Ok((spaces, f))
    }

    pub fn to_cache(&self) -> GraphCache {
        let n = self.len();
        GraphCache {
            n: self.nodes,
            classes: self
                .classes
                .iter()
                .map(|c| CachedClass {
                    edges: c.edges().into_iter().map(|(u, v)| [u, v]).collect(),
                    triangles: c.triangles,
                })
                .collect(),
            dist: (0..n)
                .map(|a| self.dist[a * n..(a + 1) * n].to_vec())
                .collect(),
        }
    }

    /// Rebuilds from a cache file, checking that every class is canonical
    /// and the matrix is square.
    pub fn from_cache(cache: &GraphCache) -> Result<Self> {
        if cache.n == 0 || cache.n > MAX_NODES {
            return Err(Error::Capacity(format!("{} nodes", cache.n)));
        }
        let canon = Canonicalizer::new(cache.n);
        let idx = edge_index_table(cache.n);
        let mut classes = Vec::with_capacity(cache.classes.len());
        for c in &cache.classes {
            let mut mask = 0u32;
            for &[u, v] in &c.edges {
                if u >= cache.n || v >= cache.n || u == v {
                    return Err(Error::Malformed(format!("edge ({u}, {v})")));
                }
                mask |= 1 << idx[u][v];
            }
            if canon.mask_of_code(canon.code(mask)) != mask {
                return Err(Error::Malformed(format!("class {:?} is not canonical", c.edges)));
            }
            if triangle_count(cache.n, mask) != c.triangles {
                return Err(Error::Malformed(format!("wrong triangle count for {:?}", c.edges)));
            }
            classes.push(GraphClass {
                nodes: cache.n,
                mask,
                triangles: c.triangles,
            });
        }
        let n = classes.len();
        if cache.dist.len() != n || cache.dist.iter().any(|r| r.len() != n) {
            return Err(Error::Malformed("distance matrix shape".into()));
        }
        Ok(Self {
            nodes: cache.n,
            classes,
            dist: cache.dist.concat(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedClass {
    pub edges: Vec<[usize; 2]>,
    pub triangles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphCache {
    pub n: usize,
    pub classes: Vec<CachedClass>,
    pub dist: Vec<Vec<u32>>,
}
