use defect_fpp::clusters::find_clusters;
use defect_fpp::metric::{distance_to_hyperplane, distance_xi0, distances_xi0, geodesic_xi0};
use defect_fpp::model::{BoxRegion, PointConfiguration};
use defect_fpp::sampler::{sample_homogeneous, RngStream};
use rand::Rng;

fn d(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Components of the overlap graph by breadth-first search.
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
            let a = comp[i];
            for b in 0..n {
                if !seen[b] && d(&c[a], &c[b]) <= 2.0 {
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

struct Gaps {
    src: Vec<f64>,
    dst: Vec<f64>,
    between: Vec<Vec<f64>>,
    direct: f64,
}

fn gaps(c: &[Vec<f64>], comps: &[Vec<usize>], x: &[f64], y: &[f64]) -> Gaps {
    let to_point = |p: &[f64], comp: &[usize]| {
        comp.iter().map(|&i| (d(p, &c[i]) - 1.0).max(0.0)).fold(f64::INFINITY, f64::min)
    };
    let m = comps.len();
    let mut between = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..m {
            if a != b {
                let mut best = f64::INFINITY;
                for &i in &comps[a] {
                    for &j in &comps[b] {
                        best = best.min(d(&c[i], &c[j]));
                    }
                }
                between[a][b] = (best - 2.0).max(0.0);
            }
        }
    }
    Gaps {
        src: comps.iter().map(|k| to_point(x, k)).collect(),
        dst: comps.iter().map(|k| to_point(y, k)).collect(),
        between,
        direct: d(x, y),
    }
}

/// Minimum over every simple sequence of clusters.
fn enumerate(g: &Gaps) -> f64 {
    fn dfs(g: &Gaps, last: usize, acc: f64, used: &mut Vec<bool>, best: &mut f64) {
        *best = best.min(acc + g.dst[last]);
        for n in 0..used.len() {
            if !used[n] {
                used[n] = true;
                dfs(g, n, acc + g.between[last][n], used, best);
                used[n] = false;
            }
        }
    }
    let mut best = g.direct;
    let mut used = vec![false; g.src.len()];
    for f in 0..used.len() {
        used[f] = true;
        dfs(g, f, g.src[f], &mut used, &mut best);
        used[f] = false;
    }
    best
}

/// Dense Dijkstra over the complete cluster graph.
fn dense(g: &Gaps) -> f64 {
    let m = g.src.len();
    let mut dist = g.src.clone();
    let mut done = vec![false; m];
    let mut best = g.direct;
    for _ in 0..m {
        let Some(v) = (0..m).filter(|&v| !done[v]).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else {
            break;
        };
        done[v] = true;
        best = best.min(dist[v] + g.dst[v]);
        for u in 0..m {
            if !done[u] {
                dist[u] = dist[u].min(dist[v] + g.between[v][u]);
            }
        }
    }
    best
}

fn random_points(rng: &mut impl Rng, n: usize, side: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| vec![rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect()
}

#[test]
fn matches_cluster_sequence_enumeration() {
    let mut rng = RngStream::new(2024, 1).rng();
    let mut checked = 0;
    while checked < 300 {
        let n = rng.random_range(0..14);
        let c = random_points(&mut rng, n, 16.0);
        let comps = components(&c);
        if comps.len() > 7 {
            continue;
        }
        let cfg = PointConfiguration::from_centers(2, 1.0, &c).unwrap();
        let cs = find_clusters(&cfg);
        assert_eq!(cs.len(), comps.len());
        let p = random_points(&mut rng, 2, 16.0);
        let want = enumerate(&gaps(&c, &comps, &p[0], &p[1]));
        let got = distance_xi0(&cs, &p[0], &p[1]).unwrap().value;
        assert!((got - want).abs() <= 1e-12, "got {got}, want {want}");
        checked += 1;
    }
}

#[test]
fn matches_dense_dijkstra_on_large_samples() {
    for rep in 0..12u64 {
        let u = [0.1, 0.2, 0.3][rep as usize % 3];
        let region = BoxRegion::cube(2, 0.0, 40.0).unwrap();
        let cfg = sample_homogeneous(u, &region, &mut RngStream::new(7, rep).rng()).unwrap();
        let c: Vec<Vec<f64>> = cfg.centers().map(|p| p.to_vec()).collect();
        let comps = components(&c);
        let cs = find_clusters(&cfg);
        let mut rng = RngStream::new(8, rep).rng();
        let pts = random_points(&mut rng, 6, 40.0);
        let got = distances_xi0(&cs, &pts[0], &pts[1..]).unwrap();
        for (k, y) in pts[1..].iter().enumerate() {
            let want = dense(&gaps(&c, &comps, &pts[0], y));
            assert!((got[k] - want).abs() <= 1e-9, "rep {rep}: got {}, want {want}", got[k]);
            let single = distance_xi0(&cs, &pts[0], y).unwrap().value;
            assert!((single - want).abs() <= 1e-9);
        }
    }
}

#[test]
fn polyline_free_length_equals_value() {
    for rep in 0..20u64 {
        let region = BoxRegion::new(vec![-10.0, -15.0], vec![70.0, 15.0]).unwrap();
        let cfg = sample_homogeneous(0.2, &region, &mut RngStream::new(9, rep).rng()).unwrap();
        let cs = find_clusters(&cfg);
        let g = geodesic_xi0(&cs, &[0.0, 0.0], &[60.0, 0.0]).unwrap();
        assert!((g.free_length() - g.value).abs() < 1e-9);
        assert_eq!(g.geodesic.first().unwrap().0, vec![0.0, 0.0]);
        assert_eq!(g.geodesic.last().unwrap().0, vec![60.0, 0.0]);
        assert_eq!(g.free.len() + 1, g.geodesic.len());
        // non-free pieces stay inside the defects
        for (w, f) in g.geodesic.windows(2).zip(&g.free) {
            if !f {
                for s in 0..=8 {
                    let t = s as f64 / 8.0;
                    let p = [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
                    assert!(cfg.centers().any(|c| d(c, &p) <= 1.0 + 1e-9));
                }
            }
        }
        let h = distance_to_hyperplane(&cs, &[0.0, 0.0], 0, 60.0).unwrap();
        assert!(h <= g.value + 1e-12);
    }
}

#[test]
fn cached_neighbor_lists_agree() {
    use defect_fpp::metric::{distances_xi0_cached, NeighborCache};
    for rep in 0..6u64 {
        let region = BoxRegion::cube(2, 0.0, 60.0).unwrap();
        let u = [0.05, 0.15, 0.25][rep as usize % 3];
        let cfg = sample_homogeneous(u, &region, &mut RngStream::new(31, rep).rng()).unwrap();
        let cs = find_clusters(&cfg);
        let cache = NeighborCache::new(&cs);
        let pts = random_points(&mut RngStream::new(32, rep).rng(), 12, 60.0);
        for x in &pts {
            let a = distances_xi0(&cs, x, &pts).unwrap();
            let b = distances_xi0_cached(&cs, &cache, x, &pts).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-9, "{p} vs {q}");
            }
        }
    }
}
