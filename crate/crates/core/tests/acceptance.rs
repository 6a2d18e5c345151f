//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillbasin::cli;
use skillbasin::graph::rewire_null;
use skillbasin::growth::{
    cluster_employment, ols, related_employment, scan_at_gamma, FitOptions, GrowthSample, Regressor, ScanSettings,
    SeType, Subset,
};
use skillbasin::relatedness::{relatedness_from_tables, threshold, RelatednessConfig};
use skillbasin::stability::{stability, sweep, variation_of_information};
use skillbasin::synth::{evaluate_recovery, generate, SynthConfig};
use skillbasin::{Error, LabourNetwork, Partition, WalkOperators, WeightedGraph};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Connected random graph: a ring plus random chords, positive weights.
fn random_graph(rng: &mut ChaCha8Rng) -> WeightedGraph {
    let n = rng.random_range(3..=50);
    let mut edges = BTreeMap::new();
    for i in 0..n {
        edges.insert((i.min((i + 1) % n), i.max((i + 1) % n)), rng.random_range(0.05..3.0));
    }
    let p = rng.random_range(0.05..0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.insert((i, j), rng.random_range(0.05..3.0));
            }
        }
    }
    let list: Vec<(usize, usize, f64)> = edges.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    WeightedGraph::from_edges(n, &list)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let k = rng.random_range(1..=n);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn test_graphs() -> Vec<WeightedGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..20).map(|_| random_graph(&mut rng)).collect()
}

/// Newman modularity straight from the edge list.
fn newman_modularity(edges: &[(usize, usize, f64)], n: usize, labels: &[usize]) -> f64 {
    let m: f64 = edges.iter().map(|e| e.2).sum();
    let k = labels.iter().max().map_or(0, |&x| x + 1);
    let mut inside = vec![0.0; k];
    let mut degree = vec![0.0; k];
    let mut node_degree = vec![0.0; n];
    for &(i, j, w) in edges {
        node_degree[i] += w;
        node_degree[j] += w;
        if labels[i] == labels[j] {
            inside[labels[i]] += w;
        }
    }
    for i in 0..n {
        degree[labels[i]] += node_degree[i];
    }
    (0..k).map(|c| inside[c] / m - (degree[c] / (2.0 * m)).powi(2)).sum()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for g in test_graphs() {
        let w = WalkOperators::new(&g).map_err(fail)?;
        let edges: Vec<_> = g.edges().collect();
        for _ in 0..100 {
            let labels = random_labels(&mut rng, g.n());
            let h = Partition::canonical(&labels);
            let r = stability(&w, &h, 1).map_err(fail)?;
            worst = worst.max((r - newman_modularity(&edges, g.n(), &labels)).abs());
        }
    }
    check(worst <= 1e-10, format!("max |r(1,H) - Q| = {worst:.2e} over 2000 partitions"))
}

fn criterion_2() -> Outcome {
    let mut worst_r: f64 = 0.0;
    let mut worst_pi: f64 = 0.0;
    for g in test_graphs() {
        let w = WalkOperators::new(&g).map_err(fail)?;
        let one = Partition::single(g.n());
        for tau in 1..=15 {
            worst_r = worst_r.max(stability(&w, &one, tau).map_err(fail)?.abs());
        }
        let step = w.stationary_step();
        for (a, b) in step.iter().zip(w.stationary()) {
            worst_pi = worst_pi.max((a - b).abs());
        }
    }
    check(
        worst_r < 1e-12 && worst_pi < 1e-12,
        format!("max |r(tau)| = {worst_r:.2e}, max |piM - pi| = {worst_pi:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut problems = Vec::new();
    for _ in 0..500 {
        let n = rng.random_range(1..=40);
        let a = Partition::canonical(&random_labels(&mut rng, n));
        let b = Partition::canonical(&random_labels(&mut rng, n));
        let aa = variation_of_information(&a, &a).map_err(fail)?;
        let ab = variation_of_information(&a, &b).map_err(fail)?;
        let ba = variation_of_information(&b, &a).map_err(fail)?;
        if aa != 0.0 {
            problems.push(format!("VI(c,c) = {aa}"));
        }
        if ab != ba {
            problems.push(format!("asymmetric {ab} vs {ba}"));
        }
        if ab > (n as f64).ln() + 1e-12 || ab < 0.0 {
            problems.push(format!("VI {ab} outside [0, ln {n}]"));
        }
    }
    let x = Partition::canonical(&[0, 0, 1, 1]);
    let y = Partition::canonical(&[0, 1, 0, 1]);
    let cross = variation_of_information(&x, &y).map_err(fail)?;
    let err = (cross - 2.0 * 2f64.ln()).abs();
    check(
        problems.is_empty() && err < 1e-12,
        format!(
            "500 random pairs, {} violations; crossing example off by {err:.2e}{}",
            problems.len(),
            problems.first().map_or(String::new(), |p| format!(" ({p})"))
        ),
    )
}

fn criterion_4() -> Outcome {
    let grid: Vec<u32> = (1..=15).collect();
    let (mut recovered, mut tree_ok, mut both) = (0, 0, 0);
    for seed in 0..20 {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let h = generate(&cfg).map_err(fail)?;
        let rel = relatedness_from_tables(&h.transitions, None, None, &cfg.network_years(), &RelatednessConfig::default())
            .map_err(fail)?;
        let net = threshold(&rel, 0.0).map_err(fail)?;
        let walk = WalkOperators::new(net.graph()).map_err(fail)?;
        let sw = sweep(&walk, &grid, 100, seed).map_err(fail)?;
        let report = evaluate_recovery(&h, &sw, &[]).map_err(fail)?;
        let fine = report.levels[0].exact_taus.iter().any(|&t| t <= 5);
        let coarse = report.levels[1].exact_taus.iter().any(|&t| t <= 15);
        if fine && coarse {
            recovered += 1;
        }
        if !report.levels[0].exact_taus.is_empty() && !report.levels[1].exact_taus.is_empty() {
            both += 1;
            if report.tree_reproduced.iter().all(|&(_, ok)| ok) && !report.tree_reproduced.is_empty() {
                tree_ok += 1;
            }
        }
    }
    check(
        recovered >= 19 && tree_ok == both,
        format!("both levels recovered in {recovered}/20 seeds; tree reproduced in {tree_ok}/{both}"),
    )
}

fn synth_network(cfg: &SynthConfig) -> Result<(skillbasin::synth::PlantedHierarchy, LabourNetwork), Error> {
    let h = generate(cfg)?;
    let rel = relatedness_from_tables(
        &h.transitions,
        Some(&h.employment),
        Some(&h.sectors),
        &cfg.network_years(),
        &RelatednessConfig::default(),
    )?;
    let net = threshold(&rel, 0.0)?;
    Ok((h, net))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for g in test_graphs() {
        let n = g.n();
        let net = LabourNetwork::from_graph(g);
        let e0: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..1e5)).collect();
        let re = related_employment(&net, &e0);
        let ce = cluster_employment(&net, &Partition::single(n), &e0);
        for (a, b) in re.iter().zip(&ce) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    worst = worst.max((a - b).abs());
                    compared += 1;
                }
                (None, None) => {}
                _ => return Err(format!("definedness differs: RE {a:?} vs CE {b:?}")),
            }
        }
    }
    check(worst < 1e-12, format!("max |CE - RE| = {worst:.2e} over {compared} industries"))
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..k {
        let p = (c..k).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[k..].to_vec()).collect()
}

struct BruteFit {
    coef: Vec<f64>,
    se: Vec<f64>,
    se_hc1: Vec<f64>,
    r2: f64,
}

fn normal_equations(y: &[f64], x: &[Vec<f64>]) -> BruteFit {
    let (n, k) = (y.len(), x[0].len());
    let xtx: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| (0..n).map(|i| x[i][a] * x[i][b]).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..k).map(|a| (0..n).map(|i| x[i][a] * y[i]).sum()).collect();
    let inv = invert(&xtx);
    let coef: Vec<f64> = (0..k).map(|a| (0..k).map(|b| inv[a][b] * xty[b]).sum()).collect();
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..k).map(|a| x[i][a] * coef[a]).sum::<f64>())
        .collect();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let s2 = ssr / (n - k) as f64;
    let se = (0..k).map(|a| (s2 * inv[a][a]).sqrt()).collect();
    let meat: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| (0..n).map(|i| resid[i].powi(2) * x[i][a] * x[i][b]).sum()).collect())
        .collect();
    let se_hc1 = (0..k)
        .map(|a| {
            let v: f64 = (0..k)
                .flat_map(|b| (0..k).map(move |c| (b, c)))
                .map(|(b, c)| inv[a][b] * meat[b][c] * inv[c][a])
                .sum();
            (v * n as f64 / (n - k) as f64).sqrt()
        })
        .collect();
    BruteFit {
        coef,
        se,
        se_hc1,
        r2: 1.0 - ssr / sst,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let names: Vec<String> = ["const", "x1", "x2", "x3"].iter().map(|s| s.to_string()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 50;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![1.0, rng.random_range(-3.0..3.0), rng.random_range(0.0..10.0), rng.random_range(-1.0..1.0)])
            .collect();
        let beta = [rng.random_range(1.0..2.0), rng.random_range(0.5..1.5), -rng.random_range(0.2..0.8), rng.random_range(1.0..3.0)];
        let y: Vec<f64> = x
            .iter()
            .map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-1.0..1.0))
            .collect();
        let dm = DMatrix::from_fn(n, 4, |i, j| x[i][j]);
        let brute = normal_equations(&y, &x);
        let classical = ols(&y, &dm, &names, SeType::Classical).map_err(fail)?;
        let hc1 = ols(&y, &dm, &names, SeType::Hc1).map_err(fail)?;
        for j in 0..4 {
            worst = worst
                .max(rel_err(classical.coef[j], brute.coef[j]))
                .max(rel_err(classical.se[j], brute.se[j]))
                .max(rel_err(classical.t[j], brute.coef[j] / brute.se[j]))
                .max(rel_err(hc1.se[j], brute.se_hc1[j]))
                .max(rel_err(hc1.t[j], brute.coef[j] / brute.se_hc1[j]));
        }
        worst = worst.max(rel_err(classical.r2, brute.r2));
    }

    let n = 50;
    let collinear = DMatrix::from_fn(n, 4, |i, j| {
        let (a, b) = (i as f64, ((i * 7) % 11) as f64);
        match j {
            0 => 1.0,
            1 => a,
            2 => b,
            _ => 2.0 * a - b,
        }
    });
    let y: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let named = matches!(
        ols(&y, &collinear, &names, SeType::Classical),
        Err(Error::RankDeficient { ref columns }) if columns == &["x1", "x2", "x3"]
    );
    let constant = DMatrix::from_fn(n, 2, |_, _| 1.0);
    let dup = matches!(
        ols(&y, &constant, &names[..2], SeType::Classical),
        Err(Error::RankDeficient { ref columns }) if columns == &["const", "x1"]
    );
    let short = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
    let too_few = matches!(
        ols(&y[..3], &short, &names, SeType::Classical),
        Err(Error::InsufficientObservations { .. })
    );
    check(
        worst <= 1e-9 && named && dup && too_few,
        format!(
            "max relative error {worst:.2e} over 100 fits; collinear rejected: {named}, duplicate intercept rejected: {dup}, n < k rejected: {too_few}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let gammas = [0.0, 0.1, 0.2];
    let mut hits = 0;
    let mut stable = 0;
    let mut misses = Vec::new();
    for seed in 0..20 {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::three_level()
        };
        let h = generate(&cfg).map_err(fail)?;
        let rel = relatedness_from_tables(
            &h.transitions,
            Some(&h.employment),
            Some(&h.sectors),
            &cfg.network_years(),
            &RelatednessConfig::default(),
        )
        .map_err(fail)?;
        let settings = ScanSettings {
            grid: (1..=15).collect(),
            runs: 20,
            seed,
            t0: cfg.t0(),
            t1: cfg.t1(),
            subset: Subset::All,
            options: FitOptions::default(),
            references: vec![1, 15],
        };
        let mut within = true;
        let mut peaks = Vec::new();
        for &g in &gammas {
            let scan = scan_at_gamma(&rel, g, &h.employment, Some(&h.sectors), &settings).map_err(fail)?;
            let report = evaluate_recovery(&h, &scan.sweep, &scan.fixed_obs).map_err(fail)?;
            if report.scale.len() != 2 {
                within = false;
            }
            for s in &report.scale {
                if s.grid_distance.is_none_or(|d| d > 1) {
                    within = false;
                }
                peaks.push(s.argmax_tau);
            }
        }
        if within {
            hits += 1;
        } else {
            misses.push(seed);
        }
        let spread = peaks.iter().flatten().max().zip(peaks.iter().flatten().min()).map(|(a, b)| a - b);
        if within && spread.is_some_and(|s| s <= 2) {
            stable += 1;
        }
    }
    check(
        hits >= 18 && stable >= 18,
        format!(
            "argmax within one grid step of the planted scale for both references at every gamma in {hits}/20 replicates, peak stable across gamma in {stable}/20; misses {misses:?}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let (_, net) = synth_network(&SynthConfig::default()).map_err(fail)?;
    let reps = 100;
    let null = rewire_null(&net, reps, 8, 20).map_err(fail)?;
    let mut weights: Vec<f64> = net.graph().edges().map(|e| e.2).collect();
    weights.sort_by(f64::total_cmp);
    let total: f64 = weights.iter().sum();
    let edges = net.edge_count();
    let conserved = null.replicate_edges.len() == reps
        && null.replicate_edges.iter().all(|&e| e == edges)
        && null.replicate_weight.iter().all(|&w| w == total);
    let err = (null.strength_mass_null.total() - total).abs();
    let err_obs = (null.strength_mass_observed.total() - total).abs();
    check(
        conserved && err <= 1e-9 && err_obs <= 1e-9,
        format!(
            "{reps} replicates keep {edges} edges and weight {total:.6} exactly: {conserved}; averaged histogram total off by {err:.2e}"
        ),
    )
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Ok(bytes) = fs::read(&p) {
                out.insert(p.strip_prefix(root).unwrap_or(&p).to_path_buf(), bytes);
            }
        }
    }
    out
}

fn pipeline(root: &Path) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let data = p("synth/data");
    let steps: Vec<Vec<String>> = [
        vec!["synth", "--out", &p("synth"), "--seed", "9", "--runs", "10", "--gammas", "0,0.1"],
        vec!["build", "--input", &data, "--out", &p("build"), "--gamma", "0.1"],
        vec!["diagnose", "--input", &data, "--out", &p("diagnose"), "--null-reps", "200", "--seed", "9"],
        vec!["detect", "--input", &data, "--out", &p("detect"), "--runs", "10", "--seed", "9"],
        vec![
            "scan", "--input", &data, "--out", &p("scan"), "--runs", "10", "--seed", "9", "--t0", "2014", "--t1",
            "2016", "--gammas", "0,0.2",
        ],
    ]
    .iter()
    .map(|v| v.iter().map(|s| s.to_string()).collect())
    .collect();
    for args in steps {
        let code = cli::run(std::iter::once("skillbasin".to_string()).chain(args.iter().cloned()));
        if code != 0 {
            return Err(format!("{} exited with {code}", args[0]));
        }
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let root = tmp.path().join("run");
    pipeline(&root)?;
    let first = files(&root);
    fs::remove_dir_all(&root).map_err(fail)?;
    pipeline(&root)?;
    let second = files(&root);
    let differing: Vec<String> = first
        .keys()
        .chain(second.keys().filter(|k| !first.contains_key(*k)))
        .filter(|k| first.get(*k) != second.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let manifests = first.keys().filter(|k| k.ends_with(cli::MANIFEST_FILE)).count();
    check(
        differing.is_empty() && manifests == 5 && first.len() > 30,
        format!(
            "{} files across 5 commands ({manifests} manifests), {} differ {differing:?}",
            first.len(),
            differing.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let k = 3;
    let cfg = SynthConfig {
        isolated: k,
        seed: 10,
        ..SynthConfig::default()
    };
    let (h, net) = synth_network(&cfg).map_err(fail)?;
    if net.n() != cfg.planted_nodes() + k {
        return Err(format!("network has {} nodes, expected {}", net.n(), cfg.planted_nodes() + k));
    }
    let walk = WalkOperators::new(net.graph()).map_err(fail)?;
    let grid: Vec<u32> = (1..=5).collect();
    let sw = sweep(&walk, &grid, 20, 10).map_err(fail)?;
    let sample = GrowthSample::build(&net, &sw, &h.employment, Some(&h.sectors), cfg.t0(), cfg.t1()).map_err(fail)?;
    let defined = sample.growth.iter().flatten().count();
    let mut rows = Vec::new();
    let mut ok = true;
    for (r, &tau) in sw.results.iter().zip(&grid) {
        let singletons = r.partition.sizes().iter().filter(|&&s| s == 1).count();
        let fit = sample.fit(Regressor::Ce(tau), Subset::All, &FitOptions::default()).map_err(fail)?;
        ok &= singletons == k && fit.n == defined - k;
        rows.push(format!("tau {tau}: N {} singletons {singletons}", fit.n));
    }
    check(ok, format!("defined growth {defined}, k = {k}; {}", rows.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("modularity correspondence", criterion_1),
        ("trivial-partition identities", criterion_2),
        ("VI axioms and value", criterion_3),
        ("planted two-level recovery", criterion_4),
        ("CE/RE equivalence", criterion_5),
        ("OLS oracle", criterion_6),
        ("scale recovery", criterion_7),
        ("null model conservation", criterion_8),
        ("determinism", criterion_9),
        ("singleton accounting", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL  {:>2} {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
