//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashSet;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::{random_basic, random_instance, Instance};
use layerdp::baselines::{ladder_mech, staircase_utility};
use layerdp::builders::layer_table;
use layerdp::interval::DEFAULT_LAYER_CAP;
use layerdp::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// 1. Graph enumeration against a permutation brute force.

fn edge_index(n: usize) -> Vec<Vec<usize>> {
    let mut idx = vec![vec![usize::MAX; n]; n];
    let mut e = 0;
    for u in 0..n {
        for v in (u + 1)..n {
            idx[u][v] = e;
            idx[v][u] = e;
            e += 1;
        }
    }
    idx
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    fn rec(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == p.len() {
            out.push(p.clone());
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            rec(k + 1, p, out);
            p.swap(k, i);
        }
    }
    rec(0, &mut p, &mut out);
    out
}

/// Smallest relabeled mask over all vertex permutations.
struct Oracle {
    pairs: Vec<(usize, usize)>,
    images: Vec<Vec<usize>>,
}

impl Oracle {
    fn new(n: usize) -> Self {
        let idx = edge_index(n);
        let mut pairs = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                pairs.push((u, v));
            }
        }
        let images = permutations(n)
            .into_iter()
            .map(|p| pairs.iter().map(|&(u, v)| idx[p[u]][p[v]]).collect())
            .collect();
        Self { pairs, images }
    }

    fn canon(&self, mask: u32) -> u32 {
        self.images
            .iter()
            .map(|img| {
                (0..self.pairs.len())
                    .filter(|e| mask >> e & 1 == 1)
                    .fold(0u32, |m, e| m | 1 << img[e])
            })
            .min()
            .unwrap()
    }

    fn mask_of(&self, edges: &[(usize, usize)]) -> u32 {
        edges
            .iter()
            .map(|&(u, v)| self.pairs.iter().position(|&p| p == (u.min(v), u.max(v))).unwrap())
            .fold(0, |m, e| m | 1 << e)
    }
}

fn triangles(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in edges {
        adj[u][v] = true;
        adj[v][u] = true;
    }
    let mut t = 0;
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                t += (adj[a][b] && adj[b][c] && adj[a][c]) as usize;
            }
        }
    }
    t
}

fn criterion_1() -> Outcome {
    let expected = [1usize, 2, 4, 11, 34, 156];
    let mut notes = Vec::new();
    let mut pass = true;
    for n in 1..=6 {
        let oracle = Oracle::new(n);
        let edges = n * (n - 1) / 2;
        let brute: HashSet<u32> = (0..1u32 << edges).map(|m| oracle.canon(m)).collect();
        let u = enumerate_graphs(n).unwrap();
        let ours: HashSet<u32> = u
            .classes
            .iter()
            .map(|c| oracle.canon(oracle.mask_of(&c.edges())))
            .collect();
        let ok = brute.len() == expected[n - 1] && u.len() == brute.len() && ours == brute;
        pass &= ok;
        notes.push(u.len().to_string());
    }
    let t = Instant::now();
    let u = enumerate_graphs(7).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let tri_ok = u.classes.iter().all(|c| c.triangles == triangles(7, &c.edges()));
    let counts: HashSet<usize> = u.classes.iter().map(|c| c.triangles).collect();
    pass &= u.len() == 1044 && counts.len() == 28 && tri_ok && secs < 60.0;
    outcome(
        pass,
        format!(
            "classes n=1..6 {} match brute force; n=7: {} classes, {} triangle counts, {:.2}s",
            notes.join(","),
            u.len(),
            counts.len(),
            secs
        ),
    )
}

// 2 and 3. Random discretized instances.

fn instances() -> Vec<Instance> {
    (0..200u64)
        .map(|s| random_instance(&mut SplitMix64::new(0x5eed_0000 + s), 12, 12))
        .collect()
}

fn criterion_2(all: &[Instance]) -> Outcome {
    let t = Instant::now();
    let mut mismatches = 0;
    for inst in all {
        let (seq, _) = discretize(&inst.densities, inst.epsilon, Normalization::Global).unwrap();
        let init = extract_initial_values(&seq, &inst.spaces).unwrap();
        let back = reconstruct(&init, &inst.spaces).unwrap();
        let (a, b) = (layer_table(&seq), layer_table(&back));
        mismatches += a
            .iter()
            .flatten()
            .zip(b.iter().flatten())
            .filter(|(p, q)| p != q)
            .count();
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 10.0,
        format!("200 instances, {mismatches} layer mismatches, {secs:.2}s"),
    )
}

fn criterion_3(all: &[Instance]) -> Outcome {
    let mut failed = 0;
    let mut min_margin = f64::INFINITY;
    for inst in all {
        let (seq, ctx) = discretize(&inst.densities, inst.epsilon, Normalization::Global).unwrap();
        let rep = check_discretization_bounds(&inst.densities, &seq, &ctx, &inst.spaces, &inst.f)
            .unwrap();
        if !rep.pass {
            failed += 1;
        }
        if let Some(m) = rep.margin {
            min_margin = min_margin.min(m);
        }
    }
    outcome(
        failed == 0,
        format!("200 instances, {failed} failures, smallest margin {min_margin:.3e}"),
    )
}

// 4. Migrations.

fn p_bar(init: &InitialValues, spaces: &MetricSpacePair, f: &QueryFunction) -> (LayerSequence, Vec<f64>) {
    let seq = reconstruct(init, spaces).unwrap();
    let u = to_distribution(&seq).unwrap().distortions(spaces, f).unwrap();
    (seq, u)
}

fn criterion_4() -> Outcome {
    let mut rng = SplitMix64::new(0xa11_9a7e);
    let (mut basic, mut general, mut refused) = (0, 0, 0);
    let (mut layer_errors, mut verdict_errors, mut verdicts) = (0, 0, 0);
    while basic < 250 || general < 250 {
        let inst = random_instance(&mut rng, 10, 10);
        let (spaces, f) = (&inst.spaces, &inst.f);
        let init = if basic < 250 {
            random_basic(&mut rng, spaces, inst.epsilon)
        } else {
            let (seq, _) = discretize(&inst.densities, inst.epsilon, Normalization::Global).unwrap();
            let init = extract_initial_values(&seq, spaces).unwrap();
            if init.is_basic() {
                continue;
            }
            init
        };
        let (before, u_before) = p_bar(&init, spaces, f);
        let dist_before = to_distribution(&before).unwrap();
        // candidate edits in random order, at most three accepted per instance
        let mut edits: Vec<(usize, usize, usize)> = (0..spaces.datasets.len())
            .flat_map(|x| (0..3).flat_map(move |i| (0..spaces.values.len()).map(move |r| (x, i, r))))
            .collect();
        for k in (1..edits.len()).rev() {
            edits.swap(k, rng.below(k + 1));
        }
        let mut taken = 0;
        for (x0, i0, r0) in edits {
            if taken == 3 {
                break;
            }
            let step = match migrate(&init, x0, i0, r0, spaces) {
                Ok(s) => s,
                Err(Error::MigrationRefused(_)) => {
                    refused += 1;
                    continue;
                }
                Err(e) => panic!("migration failed: {e}"),
            };
            taken += 1;
            if init.is_basic() {
                basic += 1;
            } else {
                general += 1;
            }
            let (after, u_after) = p_bar(&step.init, spaces, f);
            for x in 0..spaces.datasets.len() {
                for r in 0..spaces.values.len() {
                    let want = if r == r0 {
                        step.predicted[x]
                    } else {
                        before.layer_of(x, r).unwrap()
                    };
                    if after.layer_of(x, r).unwrap() != want {
                        layer_errors += 1;
                    }
                }
                if step.predicted[x] < step.previous[x] {
                    verdicts += 1;
                    let v = predict_utility_change(&dist_before, spaces, f, x, r0, step.predicted[x])
                        .unwrap();
                    let change = u_after[x] - u_before[x];
                    let ok = match v {
                        UtilityChange::Improves => change <= 1e-12,
                        UtilityChange::Worsens => change >= -1e-12,
                        UtilityChange::Unchanged => change.abs() <= 1e-9 * (1.0 + u_before[x]),
                    };
                    verdict_errors += (!ok) as usize;
                }
            }
        }
    }
    outcome(
        layer_errors == 0 && verdict_errors == 0,
        format!(
            "{} accepted ({basic} basic, {general} general, {refused} refused), \
             {layer_errors} layer errors, {verdict_errors}/{verdicts} verdict errors",
            basic + general
        ),
    )
}

// 5. Closed form for V = [0, 1].

fn criterion_5() -> Outcome {
    let spec = LinearQuerySpec::from_pieces(&[(0.0, 1.0)]).unwrap();
    let layers = layers_linear(&spec, 0.0, DEFAULT_LAYER_CAP).unwrap();
    let mut worst: f64 = 0.0;
    for eps in [0.5f64, 1.0, 2.0, 4.0] {
        let closed = 1.0 / (1.0 - (-eps).exp()) - 0.5;
        // layer i >= 1 is ±(i−1, i]: mass 2, first moment 2i − 1
        let (mut num, mut den) = (0.0, 0.0);
        for i in 1..20_000 {
            let w = (-(i as f64) * eps).exp();
            num += w * (2.0 * i as f64 - 1.0);
            den += w * 2.0;
        }
        let series = num / den;
        let ours = layers.utility(eps).unwrap();
        worst = worst.max((ours - closed).abs()).max((series - closed).abs());
    }
    outcome(worst <= 1e-6, format!("max deviation {worst:.2e} over 4 epsilons"))
}

// 6 and 8. Linear queries.

fn reference_sets() -> Vec<(&'static str, LinearQuerySpec)> {
    [
        ("V1", vec![(0.0, 1.0), (1000.0, 1001.0)]),
        ("V2", vec![(0.0, 100.0), (1000.0, 1001.0)]),
        ("V3", vec![(0.0, 500.0), (1000.0, 1001.0)]),
        ("V4", vec![(0.0, 1001.0)]),
    ]
    .into_iter()
    .map(|(n, p)| (n, LinearQuerySpec::from_pieces(&p).unwrap()))
    .collect()
}

fn uniform_in(v: &IntervalUnion, rng: &mut SplitMix64) -> f64 {
    let mut t = rng.next_f64() * v.measure();
    for &(a, b) in v.pieces() {
        if t <= b - a {
            return a + t;
        }
        t -= b - a;
    }
    v.max().unwrap()
}

fn criterion_6() -> Outcome {
    let eps = 1.0;
    let mut rng = SplitMix64::new(0xc0_5e);
    let mut worst: f64 = 0.0;
    let mut sampled_jump = 0;
    for (_, spec) in reference_sets() {
        for delta in [0.0, 5.0, 10.0, 50.0] {
            let layers = layers_linear(&spec, delta, DEFAULT_LAYER_CAP).unwrap();
            worst = worst.max(layers.effective_epsilon(eps));
            // independent check: random points and random neighbor shifts
            let reach = layers.convergence().a + 3.0 * spec.delta_f() + delta;
            for _ in 0..20_000 {
                let r = (2.0 * rng.next_f64() - 1.0) * reach;
                let mut v = uniform_in(spec.v(), &mut rng);
                if rng.below(2) == 0 {
                    v = -v;
                }
                sampled_jump = sampled_jump.max(layers.layer_of(r).abs_diff(layers.layer_of(r + v)));
            }
        }
    }
    outcome(
        worst <= eps + 1e-9 && sampled_jump <= 1,
        format!("max effective eps {worst} at eps {eps}; sampled max layer jump {sampled_jump}"),
    )
}

fn criterion_8() -> Outcome {
    let sets = reference_sets();
    let stair = staircase_utility(1001.0, 4.0).unwrap().expected_abs;
    let ratio = |spec: &LinearQuerySpec| {
        layers_linear(spec, 10.0, DEFAULT_LAYER_CAP).unwrap().utility(4.0).unwrap() / stair
    };
    let (r1, r4) = (ratio(&sets[0].1), ratio(&sets[3].1));
    let mut pass = r1 < r4;
    let mut latest = 0;
    for (_, spec) in &sets[..3] {
        // V = [0, a] ∪ [b, c]
        let &(b, c) = spec.v().pieces().last().unwrap();
        let bound = (spec.delta_f() / (c - b)).ceil() as usize;
        for delta in [0.0, 5.0, 10.0, 50.0] {
            let n = layers_linear(spec, delta, DEFAULT_LAYER_CAP).unwrap().convergence().n;
            latest = latest.max(n);
            pass &= n <= bound;
        }
    }
    outcome(
        pass,
        format!("ratio V1 {r1:.4} vs V4 {r4:.4} at eps 4, delta 10; latest convergence n={latest} (bound 1001)"),
    )
}

// 7. Triangle counts against the ladder mechanism.

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let u = enumerate_graphs(7).unwrap();
    let (spaces, f) = u.spaces().unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for eps in [0.5, 1.0, 2.0] {
        let ours = to_distribution(&reconstruct(&build_purest(&f, &spaces, eps).unwrap(), &spaces).unwrap())
            .unwrap()
            .distortions(&spaces, &f)
            .unwrap();
        let lad = ladder_mech(&u, &spaces, &f, eps).unwrap();
        let certified = effective_epsilon(&lad, &spaces.datasets).unwrap() <= 2.0 * eps + 1e-9;
        let theirs = lad.distortions(&spaces, &f).unwrap();
        let wins = ours.iter().zip(&theirs).filter(|(a, b)| a <= b).count();
        let share = wins as f64 / ours.len() as f64;
        pass &= certified && share > 0.5;
        notes.push(format!("eps {eps}: {wins}/{}", ours.len()));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    outcome(pass, format!("purest <= ladder on {} graphs, {secs:.2}s", notes.join(", ")))
}

// 9. Negative controls.

fn criterion_9() -> Outcome {
    let (spaces, f) =
        MetricSpacePair::with_image_support(DatasetSpace::line(4), &[0.0, 1.0, 2.0, 3.0]).unwrap();
    let seq = reconstruct(&build_purest(&f, &spaces, 2f64.ln()).unwrap(), &spaces).unwrap();
    let mut assign = layer_table(&seq);
    assign[0][3] = 0;
    let bad = LayerSequence::from_assignments(seq.epsilon(), assign).unwrap();
    let rep = check_layer_adjacency(&bad, &spaces.datasets).unwrap();
    let adjacency_ok = !rep.pass && rep.witness.is_some();

    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("space.json");
    let mech = dir.path().join("mech.json");
    std::fs::write(
        &space,
        r#"{"kind": "finite", "elements": ["0", "1", "2", "3"],
            "dataset_metric": {"type": "abs-diff"},
            "query": {"values": {"0": 0, "1": 1, "2": 2, "3": 3}}}"#,
    )
    .unwrap();
    // value 1 is already generated at layer 1 of dataset 0 by its neighbor
    std::fs::write(
        &mech,
        r#"{"epsilon": 0.6931471805599453, "initial": {
            "0": {"layer0": [0], "extras": [{"i": 1, "set": [1]}]},
            "1": {"layer0": [1]}, "2": {"layer0": [2]}, "3": {"layer0": [3]}}}"#,
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_layerdp"))
        .args(["mech", "verify", "--mech"])
        .arg(&mech)
        .arg("--space")
        .arg(&space)
        .arg("--report")
        .arg(dir.path().join("report.json"))
        .output()
        .unwrap()
        .status;
    let code = status.code();
    outcome(
        adjacency_ok && code == Some(3),
        format!(
            "corrupted sequence rejected with witness: {adjacency_ok}; infeasible extras exit code {code:?}"
        ),
    )
}

fn main() -> ExitCode {
    let all = instances();
    let runs: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("graph enumeration", Box::new(criterion_1)),
        ("round trip", Box::new(|| criterion_2(&all))),
        ("discretization bounds", Box::new(|| criterion_3(&all))),
        ("migration calculus", Box::new(criterion_4)),
        ("closed form", Box::new(criterion_5)),
        ("linear effective epsilon", Box::new(criterion_6)),
        ("triangle counts vs ladder", Box::new(criterion_7)),
        ("linear trend and convergence", Box::new(criterion_8)),
        ("negative controls", Box::new(criterion_9)),
    ];
    let mut failures = 0;
    for (k, (name, run)) in runs.iter().enumerate() {
        let o = run();
        failures += (!o.pass) as usize;
        println!(
            "{} criterion {} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
