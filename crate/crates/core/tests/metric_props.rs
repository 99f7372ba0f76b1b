use defect_fpp::clusters::find_clusters;
use defect_fpp::metric::{distance_graph_xi, distance_to_hyperplane, distance_xi0, IntrinsicMetric};
use defect_fpp::model::{BoxRegion, Domain, PointConfiguration};
use proptest::prelude::*;

fn d(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn xi0(c: &[Vec<f64>], radius: f64, x: &[f64], y: &[f64]) -> f64 {
    let cfg = PointConfiguration::from_centers(x.len(), radius, c).unwrap();
    distance_xi0(&find_clusters(&cfg), x, y).unwrap().value
}

fn graph(c: &[Vec<f64>], xi: f64, x: &[f64], y: &[f64], k: usize) -> f64 {
    let cfg = PointConfiguration::from_centers(x.len(), 1.0, c).unwrap();
    distance_graph_xi(&find_clusters(&cfg), xi, x, y, k).unwrap().value
}

fn pts(n: std::ops::Range<usize>, side: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..side, 2), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn xi0_is_a_pseudometric(c in pts(0..40, 20.0), q in pts(3..4, 20.0)) {
        let (x, y, z) = (&q[0], &q[1], &q[2]);
        let cfg = PointConfiguration::from_centers(2, 1.0, &c).unwrap();
        let cs = find_clusters(&cfg);
        let f = |a: &[f64], b: &[f64]| distance_xi0(&cs, a, b).unwrap().value;
        let (xy, yx, yz, xz) = (f(x, y), f(y, x), f(y, z), f(x, z));
        prop_assert!((xy - yx).abs() <= 1e-12);
        prop_assert!(xz <= xy + yz + 1e-9);
        prop_assert!(xy >= 0.0 && xy <= d(x, y) + 1e-12);
        prop_assert_eq!(f(x, x), 0.0);
        let same = cs.balls_containing(x).iter().any(|&i| cs.balls_containing(y).iter().any(|&j| cs.cluster_of(i) == cs.cluster_of(j)));
        prop_assert_eq!(xy == 0.0, same || x == y);
    }

    #[test]
    fn inserting_a_ball_never_lengthens(c in pts(0..30, 20.0), extra in pts(1..2, 20.0), q in pts(2..3, 20.0)) {
        let before = xi0(&c, 1.0, &q[0], &q[1]);
        let mut more = c.clone();
        more.push(extra[0].clone());
        prop_assert!(xi0(&more, 1.0, &q[0], &q[1]) <= before + 1e-12);
        let gb = graph(&c, 0.4, &q[0], &q[1], 8);
        prop_assert!(graph(&more, 0.4, &q[0], &q[1], 8) <= gb + 1e-12);
    }

    #[test]
    fn rescaling_commutes(c in pts(0..30, 20.0), q in pts(2..3, 20.0), r in 1.5f64..300.0) {
        let rescaled = xi0(&c, 1.0, &q[0], &q[1]) / r;
        let shrink = |v: &Vec<f64>| v.iter().map(|t| t / r).collect::<Vec<f64>>();
        let small: Vec<Vec<f64>> = c.iter().map(shrink).collect();
        let unscaled = xi0(&small, 1.0 / r, &shrink(&q[0]), &shrink(&q[1]));
        prop_assert!((rescaled - unscaled).abs() <= 1e-12, "{} vs {}", rescaled, unscaled);
    }

    #[test]
    fn collinear_subadditivity(c in pts(0..60, 30.0), a in 0.0f64..30.0, m in 0.0f64..1.0, n in 0.0f64..1.0, h in 0.0f64..30.0) {
        let cfg = PointConfiguration::from_centers(2, 1.0, &c).unwrap();
        let cs = find_clusters(&cfg);
        let (lo, hi) = (a.min(a + 30.0 * n), a.max(a + 30.0 * n));
        let mid = lo + (hi - lo) * m;
        let p = |t: f64| vec![t, h];
        let f = |s: f64, t: f64| distance_xi0(&cs, &p(s), &p(t)).unwrap().value;
        prop_assert!(f(lo, hi) <= f(lo, mid) + f(mid, hi) + 1e-9);
    }

    #[test]
    fn hyperplane_is_a_lower_bound(c in pts(0..40, 20.0), x in pts(1..2, 20.0), level in 0.0f64..20.0) {
        let cfg = PointConfiguration::from_centers(2, 1.0, &c).unwrap();
        let cs = find_clusters(&cfg);
        let h = distance_to_hyperplane(&cs, &x[0], 0, level).unwrap();
        for k in 0..=20 {
            let y = [level, k as f64];
            prop_assert!(h <= distance_xi0(&cs, &x[0], &y).unwrap().value + 1e-12);
        }
    }

    #[test]
    fn graph_bracketing_and_refinement(c in pts(0..20, 15.0), q in pts(2..3, 15.0), xi in 0.05f64..0.95) {
        let e = d(&q[0], &q[1]);
        let v8 = graph(&c, xi, &q[0], &q[1], 8);
        let v16 = graph(&c, xi, &q[0], &q[1], 16);
        let v32 = graph(&c, xi, &q[0], &q[1], 32);
        prop_assert!(v16 <= v8 + 1e-12 && v32 <= v16 + 1e-12);
        prop_assert!(xi * e <= v32 + 1e-12 && v8 <= e + 1e-12);
        prop_assert!(xi0(&c, 1.0, &q[0], &q[1]) <= v32 + 1e-12);
    }

    #[test]
    fn restriction_only_lengthens(c in pts(0..25, 10.0), q in pts(2..3, 10.0)) {
        let cfg = PointConfiguration::from_centers(2, 1.0, &c).unwrap();
        let dom = Domain::from_box(BoxRegion::cube(2, 0.0, 10.0).unwrap());
        let m = IntrinsicMetric::new(&cfg, &dom).unwrap();
        let free = distance_xi0(&find_clusters(&cfg), &q[0], &q[1]).unwrap().value;
        prop_assert!(m.distance(&q[0], &q[1], 0.0, 16).unwrap().value >= free - 1e-12);
    }
}

#[test]
fn three_dimensional_chain() {
    let c: Vec<Vec<f64>> = (0..5).map(|i| vec![2.0 * i as f64, 0.0, 0.0]).collect();
    // chain covers [-1, 9] on the axis; from -3 to 12 only 5 free units remain
    let v = xi0(&c, 1.0, &[-3.0, 0.0, 0.0], &[12.0, 0.0, 0.0]);
    assert!((v - 5.0).abs() < 1e-12);
    let g = graph(&c, 0.5, &[-3.0, 0.0, 0.0], &[12.0, 0.0, 0.0], 8);
    assert!((g - 10.0).abs() < 1e-9, "{g}");
}
