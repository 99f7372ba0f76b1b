//! End-to-end acceptance checks. Each test prints one PASS/FAIL line on
//! stderr (visible even when output is captured) and then asserts.
//! Tests take a shared lock so their wall-clock budgets are not inflated by
//! each other.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use defect_fpp::clusters::find_clusters;
use defect_fpp::estimators::{
    cluster_tail, coupled_monotonicity, distortion_experiment, estimate_eta, estimate_volume_fraction,
    geodesic_deviation, measure_experiment, surjectivity_experiment, threshold_scan, ConvergenceSetup, EtaOptions,
    TestFunction,
};
use defect_fpp::limits::{conformal_distance, ConformalGrid, EtaEntry, EtaTable};
use defect_fpp::metric::{distance_graph_xi, distance_xi0, distances_xi0, segment_cost};
use defect_fpp::model::{BoxRegion, Domain, IntensityField, PointConfiguration, SimParams};
use defect_fpp::sampler::{sample_homogeneous, RngStream};
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());
const SEED: u64 = 20_240_917;

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, started: Instant, budget: Duration, pass: bool, detail: String) {
    let took = started.elapsed();
    let ok = pass && took <= budget;
    let line = format!(
        "[acceptance] {} {name}: {detail} ({:.1} s of {} s)",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        budget.as_secs()
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(pass, "{line}");
    assert!(took <= budget, "{line}");
}

fn d(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn random_points(rng: &mut impl Rng, n: usize, side: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| vec![rng.random::<f64>() * side, rng.random::<f64>() * side]).collect()
}

fn components(c: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = c.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            for b in 0..n {
                if !seen[b] && d(&c[comp[i]], &c[b]) <= 2.0 {
                    seen[b] = true;
                    comp.push(b);
                }
            }
            i += 1;
        }
        out.push(comp);
    }
    out
}

/// Minimum over every simple sequence of clusters of the summed free gaps.
fn enumerate_sequences(c: &[Vec<f64>], comps: &[Vec<usize>], x: &[f64], y: &[f64]) -> f64 {
    let to_point = |p: &[f64], k: &[usize]| k.iter().map(|&i| (d(p, &c[i]) - 1.0).max(0.0)).fold(f64::INFINITY, f64::min);
    let m = comps.len();
    let src: Vec<f64> = comps.iter().map(|k| to_point(x, k)).collect();
    let dst: Vec<f64> = comps.iter().map(|k| to_point(y, k)).collect();
    let mut gap = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..m {
            let mut best = f64::INFINITY;
            for &i in &comps[a] {
                for &j in &comps[b] {
                    best = best.min(d(&c[i], &c[j]));
                }
            }
            gap[a][b] = (best - 2.0).max(0.0);
        }
    }
    fn dfs(gap: &[Vec<f64>], dst: &[f64], last: usize, acc: f64, used: &mut [bool], best: &mut f64) {
        *best = best.min(acc + dst[last]);
        for n in 0..used.len() {
            if !used[n] {
                used[n] = true;
                dfs(gap, dst, n, acc + gap[last][n], used, best);
                used[n] = false;
            }
        }
    }
    let mut best = d(x, y);
    let mut used = vec![false; m];
    for f in 0..m {
        used[f] = true;
        dfs(&gap, &dst, f, src[f], &mut used, &mut best);
        used[f] = false;
    }
    best
}

#[test]
fn exact_distance_matches_sequence_enumeration() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = RngStream::new(SEED, 1).rng();
    let (mut cases, mut worst) = (0usize, 0.0f64);
    while cases < 1000 {
        let n = rng.random_range(0..16);
        let c = random_points(&mut rng, n, 18.0);
        let comps = components(&c);
        if comps.len() > 8 {
            continue;
        }
        let cs = find_clusters(&PointConfiguration::from_centers(2, 1.0, &c).unwrap());
        let q = random_points(&mut rng, 2, 18.0);
        let want = enumerate_sequences(&c, &comps, &q[0], &q[1]);
        let got = distance_xi0(&cs, &q[0], &q[1]).unwrap().value;
        worst = worst.max((got - want).abs());
        cases += 1;
    }
    report(
        "exact distance vs cluster-sequence enumeration",
        t,
        Duration::from_secs(30),
        worst <= 1e-12,
        format!("{cases} configurations, max abs error {worst:e}"),
    );
}

#[test]
fn metric_axioms_and_insertion_monotonicity() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = RngStream::new(SEED, 2).rng();
    let (mut asym, mut slack, mut grew) = (0.0f64, f64::INFINITY, 0usize);
    for _ in 0..500 {
        let n = rng.random_range(0..60);
        let mut c = random_points(&mut rng, n, 25.0);
        let q = random_points(&mut rng, 3, 25.0);
        let cs = find_clusters(&PointConfiguration::from_centers(2, 1.0, &c).unwrap());
        let f = |a: &[f64], b: &[f64]| distance_xi0(&cs, a, b).unwrap().value;
        let (xy, yx, yz, xz) = (f(&q[0], &q[1]), f(&q[1], &q[0]), f(&q[1], &q[2]), f(&q[0], &q[2]));
        asym = asym.max((xy - yx).abs());
        slack = slack.min(xy + yz - xz);
        c.push(random_points(&mut rng, 1, 25.0).remove(0));
        let more = find_clusters(&PointConfiguration::from_centers(2, 1.0, &c).unwrap());
        if distance_xi0(&more, &q[0], &q[1]).unwrap().value > xy {
            grew += 1;
        }
    }
    report(
        "metric axioms and monotonicity under insertion",
        t,
        Duration::from_secs(30),
        asym <= 1e-12 && slack >= -1e-9 && grew == 0,
        format!("max asymmetry {asym:e}, min triangle slack {slack:e}, {grew} insertions increased distance"),
    );
}

#[test]
fn vacant_volume_fraction_law() {
    let _g = serial();
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (xi, task) in [(0.0, 30), (0.5, 31)] {
        let rec = estimate_volume_fraction(0.2, 2, xi, 50.0, 100_000, 20, SEED, task).unwrap();
        let target = rec.diagnostics["target"].as_f64().unwrap();
        let ok = (rec.mean - target).abs() <= 3.0 * rec.stderr;
        pass &= ok;
        parts.push(format!("xi {xi}: {:.6} ± {:.6} vs {target:.6}", rec.mean, rec.stderr));
    }
    report("vacant volume fraction", t, Duration::from_secs(10), pass, parts.join("; "));
}

#[test]
fn eta_bound_and_length_volume_gap() {
    let _g = serial();
    let t = Instant::now();
    let p = SimParams::new(2, 0.0, 1.0).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, u) in [0.1, 0.2].into_iter().enumerate() {
        let est = estimate_eta(u, &p, &[200.0], 50, 0.35, SEED, 40 + i as u64, &EtaOptions::default()).unwrap();
        let r = est.largest();
        let ok = r.mean > 0.0 && r.mean <= est.bound + 3.0 * r.stderr && est.sigma - r.mean > 3.0 * r.stderr;
        pass &= ok;
        parts.push(format!(
            "u {u}: eta {:.4} ± {:.4}, bound {:.4}, sigma {:.4}",
            r.mean, r.stderr, est.bound, est.sigma
        ));
    }
    report("eta bound and positivity, gap to sigma", t, Duration::from_secs(300), pass, parts.join("; "));
}

#[test]
fn eta_is_exactly_one_without_defects() {
    let _g = serial();
    let t = Instant::now();
    let p = SimParams::new(2, 0.0, 1.0).unwrap();
    let est = estimate_eta(0.0, &p, &[200.0], 50, 0.35, SEED, 50, &EtaOptions::default()).unwrap();
    let r = est.largest();
    let values = r.per_replica.clone().unwrap();
    report(
        "eta at zero intensity",
        t,
        Duration::from_secs(1),
        est.entry.eta == 1.0 && r.stderr == 0.0 && values.iter().all(|&v| v == 1.0),
        format!("eta {} stderr {} over {} replicas", est.entry.eta, r.stderr, values.len()),
    );
}

#[test]
fn coupled_intensities_are_pathwise_ordered() {
    let _g = serial();
    let t = Instant::now();
    let p = SimParams::new(2, 0.0, 1.0).unwrap();
    let rep = coupled_monotonicity(0.1, 0.2, &p, 100.0, 100, 0.35, 16, SEED, 60);
    let (pass, detail) = match rep {
        Ok(r) => {
            let combined = (r.low.stderr.powi(2) + r.high.stderr.powi(2)).sqrt();
            let gap = r.low.mean - r.high.mean;
            (
                r.passes == r.replicas && r.replicas == 100 && gap > 3.0 * combined,
                format!(
                    "{}/{} pathwise, mean {:.3} at u=0.1 vs {:.3} at u=0.2, gap {:.3} vs 3·SE {:.3}",
                    r.passes,
                    r.replicas,
                    r.low.mean,
                    r.high.mean,
                    gap,
                    3.0 * combined
                ),
            )
        }
        Err(e) => (false, e.to_string()),
    };
    report("coupling monotonicity", t, Duration::from_secs(120), pass, detail);
}

#[test]
fn collinear_subadditivity() {
    let _g = serial();
    let t = Instant::now();
    let mut violations = 0;
    let mut triples = 0;
    let region = BoxRegion::new(vec![-20.0, -20.0], vec![120.0, 20.0]).unwrap();
    for i in 0..200u64 {
        let stream = RngStream::for_replica(SEED, 70, i);
        let mut rng = stream.rng();
        let cfg = sample_homogeneous(0.2, &region, &mut rng).unwrap();
        let cs = find_clusters(&cfg);
        let n = rng.random_range(10.0..100.0);
        let m = rng.random_range(0.0..n);
        let h = rng.random_range(-5.0..5.0);
        let from0 = distances_xi0(&cs, &[0.0, h], &[[m, h], [n, h]]).unwrap();
        let mn = distance_xi0(&cs, &[m, h], &[n, h]).unwrap().value;
        if from0[1] > from0[0] + mn + 1e-9 {
            violations += 1;
        }
        triples += 1;
    }
    report(
        "subadditivity along a line",
        t,
        Duration::from_secs(30),
        violations == 0,
        format!("{violations} violations in {triples} triples over 200 realizations"),
    );
}

#[test]
fn geodesics_concentrate_on_the_segment() {
    let _g = serial();
    let t = Instant::now();
    let p = SimParams::new(2, 0.0, 1.0).unwrap();
    let recs = geodesic_deviation(0.2, &p, &[50.0, 100.0, 200.0], 50, 0.35, SEED, 80, None).unwrap();
    let med: Vec<f64> = recs.iter().map(|r| r.median().unwrap()).collect();
    report(
        "geodesic concentration",
        t,
        Duration::from_secs(300),
        med.windows(2).all(|w| w[1] < w[0]),
        format!("median d_H/L at L = 50, 100, 200: {med:.4?}"),
    );
}

#[test]
fn cluster_diameters_have_exponential_tail() {
    let _g = serial();
    let t = Instant::now();
    let (_, fit, _) = cluster_tail(0.15, 2, 100.0, 50, 0.35, SEED, 90).unwrap();
    report(
        "cluster diameter tail",
        t,
        Duration::from_secs(60),
        fit.slope < 0.0 && fit.r2 >= 0.9,
        format!("slope {:.4}, R^2 {:.4}, {} band points from {} clusters", fit.slope, fit.r2, fit.band.len(), fit.clusters),
    );
}

#[test]
fn crossing_threshold_scan() {
    let _g = serial();
    let t = Instant::now();
    let grid: Vec<f64> = (1..=12).map(|i| i as f64 * 0.05).collect();
    let rep = threshold_scan(&grid, 2, &[40.0, 80.0], 500, SEED, 100).unwrap();
    let mut dips = 0;
    for side in [40.0, 80.0] {
        let rows: Vec<_> = rep.rows.iter().filter(|r| r.side == side).collect();
        for w in rows.windows(2) {
            let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            if w[1].probability < w[0].probability - 2.0 * se {
                dips += 1;
            }
        }
    }
    let stars: Vec<f64> = rep.u_star.iter().filter_map(|(_, u)| *u).collect();
    let stab = rep.stability.unwrap_or(f64::INFINITY);
    let pass = dips == 0 && stars.len() == 2 && stars.iter().all(|u| (0.30..=0.45).contains(u)) && stab <= 0.10;
    report(
        "crossing threshold scan",
        t,
        Duration::from_secs(600),
        pass,
        format!("{dips} monotonicity dips, u* {:?}, relative spread {:.4}", rep.u_star, stab),
    );
}

#[derive(PartialEq)]
struct Node(f64, usize);
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Dijkstra on a square lattice with the 80-neighbour stencil, every edge
/// charged its exact conformal cost.
fn lattice_distance(cs: &defect_fpp::clusters::ClusterSet, xi: f64, side: f64, h: f64, from: [usize; 2], to: [usize; 2]) -> f64 {
    let n = (side / h).round() as usize + 1;
    let mut steps = Vec::new();
    for i in -5i64..=5 {
        for j in -5i64..=5 {
            let (a, b) = (i.unsigned_abs(), j.unsigned_abs());
            let g = (1..=a.max(b)).rev().find(|g| a % g == 0 && b % g == 0).unwrap_or(1);
            if (i, j) != (0, 0) && g == 1 {
                steps.push((i, j));
            }
        }
    }
    let id = |p: [usize; 2]| p[0] * n + p[1];
    let mut dist = vec![f64::INFINITY; n * n];
    let mut heap = BinaryHeap::new();
    dist[id(from)] = 0.0;
    heap.push(Node(0.0, id(from)));
    while let Some(Node(dv, v)) = heap.pop() {
        if dv > dist[v] {
            continue;
        }
        if v == id(to) {
            return dv;
        }
        let (vi, vj) = ((v / n) as i64, (v % n) as i64);
        let a = [vi as f64 * h, vj as f64 * h];
        for &(si, sj) in &steps {
            let (wi, wj) = (vi + si, vj + sj);
            if wi < 0 || wj < 0 || wi >= n as i64 || wj >= n as i64 {
                continue;
            }
            let w = wi as usize * n + wj as usize;
            let b = [wi as f64 * h, wj as f64 * h];
            let nd = dv + segment_cost(cs, xi, &a, &b).unwrap();
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Node(nd, w));
            }
        }
    }
    dist[id(to)]
}

#[test]
fn positive_xi_graph_distance() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = RngStream::new(SEED, 110).rng();
    let (mut order_bad, mut bracket_bad) = (0, 0);
    for _ in 0..200 {
        let n = rng.random_range(0..40);
        let c = random_points(&mut rng, n, 30.0);
        let q = random_points(&mut rng, 2, 30.0);
        let xi = rng.random_range(0.05..0.95);
        let cs = find_clusters(&PointConfiguration::from_centers(2, 1.0, &c).unwrap());
        let v: Vec<f64> = [8, 16, 32].iter().map(|&k| distance_graph_xi(&cs, xi, &q[0], &q[1], k).unwrap().value).collect();
        if !(v[1] <= v[0] && v[2] <= v[1]) {
            order_bad += 1;
        }
        let e = d(&q[0], &q[1]);
        if v.iter().any(|&x| x < xi * e || x > e) {
            bracket_bad += 1;
        }
    }
    let (side, h) = (8.0, 1.0 / 16.0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..7);
        let c: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(1.5..6.5), rng.random_range(1.5..6.5)]).collect();
        let xi = rng.random_range(0.2..0.8);
        let cs = find_clusters(&PointConfiguration::from_centers(2, 1.0, &c).unwrap());
        let (fi, ti) = (rng.random_range(0..=128usize), rng.random_range(0..=128usize));
        let from = [0usize, fi];
        let to = [128usize, ti];
        let lat = lattice_distance(&cs, xi, side, h, from, to);
        let x = [0.0, fi as f64 * h];
        let y = [side, ti as f64 * h];
        let g = distance_graph_xi(&cs, xi, &x, &y, 32).unwrap().value;
        worst = worst.max((g - lat).abs() / lat);
    }
    report(
        "positive-xi graph distance",
        t,
        Duration::from_secs(300),
        order_bad == 0 && bracket_bad == 0 && worst <= 0.02,
        format!(
            "{order_bad} refinement-order and {bracket_bad} bracketing failures in 200; max relative gap to lattice {:.4}",
            worst
        ),
    );
}

#[test]
fn conformal_solver_accuracy_and_homogeneity() {
    let _g = serial();
    let t = Instant::now();
    let side = 10.0;
    let dom = Domain::from_box(BoxRegion::cube(2, 0.0, side).unwrap());
    let rho = 0.6;
    let g = ConformalGrid::new(&dom, side / 512.0, |_| rho).unwrap();
    let mut worst = 0.0f64;
    let pairs = [([0.3, 0.7], [9.6, 8.1]), ([0.0, 5.0], [10.0, 5.0]), ([1.1, 9.9], [8.3, 0.2]), ([2.0, 2.0], [2.5, 9.0])];
    for (x, y) in pairs {
        let v = conformal_distance(&g, &x, &y).unwrap();
        worst = worst.max((v / (rho * d(&x, &y)) - 1.0).abs());
    }
    let f = |p: &[f64]| 0.3 + 0.05 * p[0] + 0.02 * p[1] * p[1] / side;
    let g1 = ConformalGrid::new(&dom, side / 128.0, f).unwrap();
    let g2 = ConformalGrid::new(&dom, side / 128.0, |p| 2.0 * f(p)).unwrap();
    let homog = pairs.iter().all(|(x, y)| {
        2.0 * conformal_distance(&g1, x, y).unwrap() == conformal_distance(&g2, x, y).unwrap()
    });
    report(
        "conformal solver",
        t,
        Duration::from_secs(30),
        worst <= 0.01 && homog,
        format!("max relative error {worst:.5} at h = side/512; exact doubling {homog}"),
    );
}

fn convergence_setup(replicas: usize) -> ConvergenceSetup {
    let dom = Domain::from_box(BoxRegion::cube(2, 0.0, 1.6).unwrap());
    let field = IntensityField::linear(dom.bounding_box(), 0, 0.05, 0.2).unwrap();
    ConvergenceSetup { domain: dom, field, xi: 0.0, r_list: vec![25.0, 100.0], replicas, u_star: 0.35, k: 16 }
}

#[test]
fn metric_distortion_decreases_with_scale() {
    let _g = serial();
    let t = Instant::now();
    let p = SimParams::new(2, 0.0, 1.0).unwrap();
    let mut entries = vec![EtaEntry { u: 0.0, eta: 1.0, stderr: 0.0 }];
    for (i, u) in [0.05, 0.1, 0.15, 0.2].into_iter().enumerate() {
        let est = estimate_eta(u, &p, &[200.0], 10, 0.35, SEED, 120 + i as u64, &EtaOptions::default()).unwrap();
        entries.push(est.entry);
    }
    let table = EtaTable { d: 2, xi: 0.0, entries, scale: 200.0, replicas: 10 };
    table.validate().unwrap();
    let setup = convergence_setup(20);
    let rep = distortion_experiment(&setup, &table, 0.16, 1.6 / 128.0, 10_000, SEED, 130).unwrap();
    let frac = rep.decrease_fraction.unwrap();
    let means: Vec<f64> = rep.records.iter().map(|r| r.mean).collect();
    report(
        "metric distortion trend",
        t,
        Duration::from_secs(900),
        frac >= 0.8,
        format!("lower at R=100 in {:.0}% of 20 pairs; mean sup-distortion {means:.4?}", frac * 100.0),
    );
}

#[test]
fn measure_and_surjectivity_decrease_with_scale() {
    let _g = serial();
    let t = Instant::now();
    let setup = convergence_setup(20);
    let fs = vec![
        TestFunction::Constant { value: 1.0 },
        TestFunction::Ramp { axis: 0, offset: 0.8, slope: 1.0 },
        TestFunction::Ramp { axis: 1, offset: 0.8, slope: 1.0 },
        TestFunction::Bump { center: vec![0.8, 0.8], radius: 1.0, height: 1.0 },
    ];
    let (m, _) = measure_experiment(&setup, &fs, 200_000, 256, SEED, 140).unwrap();
    let s = surjectivity_experiment(&setup, 0.0025, SEED, 150).unwrap();
    let (fm, fs_) = (m.decrease_fraction.unwrap(), s.decrease_fraction.unwrap());
    report(
        "measure and surjectivity trends",
        t,
        Duration::from_secs(600),
        fm >= 0.8 && fs_ >= 0.8,
        format!("measure lower at R=100 in {:.0}% of pairs, surjectivity in {:.0}%", fm * 100.0, fs_ * 100.0),
    );
}

#[test]
fn cli_output_is_independent_of_jobs() {
    let _g = serial();
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("eta", r#"{"schema":1,"kind":"eta","d":2,"u":[0.1,0.2],"R":[20,40],"replicas":6}"#),
        ("threshold", r#"{"schema":1,"kind":"threshold","d":2,"u_grid":[0.2,0.3,0.4],"sides":[20],"replicas":30}"#),
        ("geodesic", r#"{"schema":1,"kind":"geodesic","d":2,"u":0.2,"lengths":[20,40],"replicas":5}"#),
    ];
    let mut identical = true;
    let mut notes = Vec::new();
    for (kind, text) in configs {
        let cfg = dir.path().join(format!("{kind}.json"));
        std::fs::write(&cfg, text).unwrap();
        let mut outputs = Vec::new();
        for jobs in [1, 2, 3] {
            let out = dir.path().join(format!("{kind}-{jobs}"));
            let status = Command::new(env!("CARGO_BIN_EXE_defect-fpp"))
                .args(["run", cfg.to_str().unwrap(), "--seed", "11", "--jobs", &jobs.to_string(), "--out-dir"])
                .arg(&out)
                .env_remove("DEFECT_FPP_SEED")
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            outputs.push(std::fs::read(out.join(format!("{kind}.csv"))).unwrap());
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        identical &= same;
        notes.push(format!("{kind}: {} bytes, identical {same}", outputs[0].len()));
    }
    report("determinism across --jobs", t, Duration::from_secs(60), identical, notes.join("; "));
}
