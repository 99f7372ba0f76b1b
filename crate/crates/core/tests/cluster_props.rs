use defect_fpp::clusters::{cluster_diameter, cluster_set_distance, find_clusters, point_cluster_distance};
use defect_fpp::model::PointConfiguration;
use proptest::prelude::*;

fn d(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Labels by repeated relaxation over all pairs; O(n^3) but obviously right.
fn brute_labels(c: &[Vec<f64>]) -> Vec<usize> {
    let mut lab: Vec<usize> = (0..c.len()).collect();
    loop {
        let mut changed = false;
        for i in 0..c.len() {
            for j in 0..c.len() {
                if d(&c[i], &c[j]) <= 2.0 && lab[j] < lab[i] {
                    lab[i] = lab[j];
                    changed = true;
                }
            }
        }
        if !changed {
            return lab;
        }
    }
}

fn canonical(mut parts: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for p in &mut parts {
        p.sort_unstable();
    }
    parts.sort();
    parts
}

fn centers(d: usize, max: usize, side: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..side, d), 0..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_matches_brute_force(c in centers(2, 40, 14.0)) {
        let cfg = PointConfiguration::from_centers(2, 1.0, &c).unwrap();
        let cs = find_clusters(&cfg);
        let lab = brute_labels(&c);
        for i in 0..c.len() {
            for j in 0..c.len() {
                prop_assert_eq!(cs.cluster_of(i) == cs.cluster_of(j), lab[i] == lab[j]);
            }
        }
        for id in 0..cs.len() {
            let m = cs.members(id);
            let mut want = 2.0f64;
            for &a in m {
                for &b in m {
                    want = want.max(d(&c[a as usize], &c[b as usize]) + 2.0);
                }
            }
            prop_assert!((cluster_diameter(&cs, id).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_is_permutation_invariant(c in centers(3, 30, 8.0), seed in any::<u64>()) {
        let n = c.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| c[i].clone()).collect();
        let a = find_clusters(&PointConfiguration::from_centers(3, 1.0, &c).unwrap()).partition();
        let b = find_clusters(&PointConfiguration::from_centers(3, 1.0, &shuffled).unwrap()).partition();
        let b: Vec<Vec<usize>> = b.into_iter().map(|p| p.into_iter().map(|k| perm[k]).collect()).collect();
        prop_assert_eq!(canonical(a), canonical(b));
    }

    #[test]
    fn relaxed_triangle_through_a_cluster(c in centers(2, 30, 20.0), p in prop::collection::vec(0.0..20.0f64, 2)) {
        let cfg = PointConfiguration::from_centers(2, 1.0, &c).unwrap();
        let cs = find_clusters(&cfg);
        for a in 0..cs.len() {
            let pa = point_cluster_distance(&cs, &p, a).unwrap();
            let brute = cs.members(a).iter().map(|&i| (d(&p, &c[i as usize]) - 1.0).max(0.0)).fold(f64::INFINITY, f64::min);
            prop_assert!((pa - brute).abs() < 1e-12);
            for b in (0..cs.len()).filter(|&b| b != a) {
                let dab = cluster_set_distance(&cs, a, b).unwrap();
                prop_assert!((dab - cluster_set_distance(&cs, b, a).unwrap()).abs() < 1e-12);
                for k in (0..cs.len()).filter(|&k| k != a && k != b) {
                    let via = cluster_set_distance(&cs, a, k).unwrap()
                        + cluster_diameter(&cs, k).unwrap()
                        + cluster_set_distance(&cs, k, b).unwrap();
                    prop_assert!(dab <= via + 1e-9);
                }
            }
        }
    }
}

#[test]
fn tangent_balls_join() {
    let cs = find_clusters(&PointConfiguration::from_centers(2, 1.0, &[[0.0, 0.0], [2.0, 0.0], [4.0 + 1e-9, 0.0]]).unwrap());
    assert_eq!(cs.len(), 2);
    assert_eq!(cs.cluster_of(0), cs.cluster_of(1));
}
