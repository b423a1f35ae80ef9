//! High-gradient region detection on 1D profiles with DBSCAN.

use serde::Serialize;

use crate::error::{precondition, Result};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_MIN_PTS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientClusterResult {
    pub intervals: Vec<(f64, f64)>,
    pub n_clusters: usize,
    pub high_gradient_points: Vec<f64>,
}

/// Central differences inside, one-sided differences at the ends.
pub fn estimate_gradients(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return precondition(format!("need at least 3 matching samples, got {} and {}", n, ys.len()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return precondition("abscissae must be strictly increasing");
    }
    let mut g = Vec::with_capacity(n);
    g.push((ys[1] - ys[0]) / (xs[1] - xs[0]));
    for i in 1..n - 1 {
        g.push((ys[i + 1] - ys[i - 1]) / (xs[i + 1] - xs[i - 1]));
    }
    g.push((ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]));
    Ok(g)
}

/// Points whose gradient magnitude strictly exceeds the mean magnitude.
pub fn select_high_gradient(xs: &[f64], gradients: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let mean = gradients.iter().map(|g| g.abs()).sum::<f64>() / gradients.len() as f64;
    xs.iter()
        .zip(gradients)
        .filter(|(_, g)| g.abs() > mean)
        .map(|(x, _)| *x)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DbscanResult {
    /// Member indices per cluster, ordered by the smallest member coordinate.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// DBSCAN on the real line. A point is core when at least `min_pts` points
/// (itself included) lie within `epsilon`.
pub fn dbscan(points: &[f64], epsilon: f64, min_pts: usize) -> Result<DbscanResult> {
    if !(epsilon > 0.0) || min_pts == 0 {
        return precondition("epsilon must be positive and min_pts at least 1");
    }
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| points[i]).collect();

    // neighborhood of sorted index i is the contiguous range [lo[i], hi[i])
    let mut lo = vec![0; n];
    let mut hi = vec![0; n];
    let (mut a, mut b) = (0, 0);
    for i in 0..n {
        while sorted[i] - sorted[a] > epsilon {
            a += 1;
        }
        if b < i {
            b = i;
        }
        while b < n && sorted[b] - sorted[i] <= epsilon {
            b += 1;
        }
        lo[i] = a;
        hi[i] = b;
    }
    let core: Vec<bool> = (0..n).map(|i| hi[i] - lo[i] >= min_pts).collect();

    // Core points chain into one cluster when consecutive cores are within
    // epsilon; border points join the cluster of a core neighbour.
    let mut label = vec![usize::MAX; n];
    let mut n_clusters = 0;
    let mut prev_core: Option<usize> = None;
    for i in 0..n {
        if !core[i] {
            continue;
        }
        match prev_core {
            Some(p) if sorted[i] - sorted[p] <= epsilon => label[i] = label[p],
            _ => {
                label[i] = n_clusters;
                n_clusters += 1;
            }
        }
        prev_core = Some(i);
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        // nearest-left core neighbour wins, matching a left-to-right expansion
        if let Some(j) = (lo[i]..hi[i]).find(|&j| core[j]) {
            label[i] = label[j];
        }
    }

    let mut clusters = vec![Vec::new(); n_clusters];
    let mut noise = Vec::new();
    for i in 0..n {
        if label[i] == usize::MAX {
            noise.push(order[i]);
        } else {
            clusters[label[i]].push(order[i]);
        }
    }
    noise.sort_unstable();
    for c in &mut clusters {
        c.sort_unstable();
    }
    Ok(DbscanResult { clusters, noise })
}

/// Gradient estimate, thresholding and clustering in one call.
pub fn detect_gradient_clusters(xs: &[f64], ys: &[f64], epsilon: f64, min_pts: usize) -> Result<GradientClusterResult> {
    let g = estimate_gradients(xs, ys)?;
    let high = select_high_gradient(xs, &g);
    let db = dbscan(&high, epsilon, min_pts)?;
    let intervals: Vec<(f64, f64)> = db
        .clusters
        .iter()
        .map(|c| {
            c.iter()
                .map(|&i| high[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
        })
        .collect();
    Ok(GradientClusterResult {
        n_clusters: intervals.len(),
        intervals,
        high_gradient_points: high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    /// Textbook DBSCAN with explicit neighbourhood scans and queue expansion.
    fn brute_force(points: &[f64], eps: f64, min_pts: usize) -> (Vec<BTreeSet<usize>>, BTreeSet<usize>, Vec<bool>) {
        let n = points.len();
        let nbrs: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| (points[i] - points[j]).abs() <= eps).collect())
            .collect();
        let core: Vec<bool> = nbrs.iter().map(|v| v.len() >= min_pts).collect();
        let mut label: Vec<Option<usize>> = vec![None; n];
        let mut clusters: Vec<BTreeSet<usize>> = Vec::new();
        for i in 0..n {
            if !core[i] || label[i].is_some() {
                continue;
            }
            let id = clusters.len();
            let mut members = BTreeSet::new();
            let mut queue = vec![i];
            label[i] = Some(id);
            while let Some(p) = queue.pop() {
                members.insert(p);
                if !core[p] {
                    continue;
                }
                for &q in &nbrs[p] {
                    if label[q].is_none() {
                        label[q] = Some(id);
                        queue.push(q);
                    }
                }
            }
            clusters.push(members);
        }
        let noise = (0..n).filter(|&i| label[i].is_none()).collect();
        (clusters, noise, core)
    }

    /// Core-point partition and noise set, which DBSCAN fixes uniquely;
    /// border points may legitimately go to any adjacent cluster.
    fn core_partition(clusters: &[BTreeSet<usize>], core: &[bool]) -> BTreeSet<BTreeSet<usize>> {
        clusters
            .iter()
            .map(|c| c.iter().copied().filter(|&i| core[i]).collect())
            .collect()
    }

    fn check_against_oracle(points: &[f64], eps: f64, min_pts: usize) {
        let got = dbscan(points, eps, min_pts).unwrap();
        let (want, want_noise, core) = brute_force(points, eps, min_pts);
        let got_sets: Vec<BTreeSet<usize>> = got.clusters.iter().map(|c| c.iter().copied().collect()).collect();
        assert_eq!(got_sets.len(), want.len());
        assert_eq!(core_partition(&got_sets, &core), core_partition(&want, &core));
        assert_eq!(got.noise.iter().copied().collect::<BTreeSet<_>>(), want_noise);
        // every border point sits within epsilon of a core point of its cluster
        for c in &got_sets {
            for &i in c {
                assert!(c.iter().any(|&j| core[j] && (points[i] - points[j]).abs() <= eps));
            }
            // a cluster falls short of min_pts only when a neighbouring
            // cluster claimed one of its shared border points
            if min_pts >= 2 && c.len() < min_pts {
                let shared = c.iter().filter(|&&j| core[j]).any(|&j| {
                    (0..points.len()).any(|i| {
                        !c.contains(&i) && !core[i] && (points[i] - points[j]).abs() <= eps && !got.noise.contains(&i)
                    })
                });
                assert!(shared, "undersized cluster without contested borders");
            }
        }
    }

    #[test]
    fn gradient_spot_values() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let g = estimate_gradients(&xs, &[3.0; 11]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        assert!(estimate_gradients(&xs, &ys).unwrap().iter().all(|v| (v - 2.0).abs() < 1e-12));
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let g = estimate_gradients(&xs, &ys).unwrap();
        for i in 1..10 {
            assert!((g[i] - 2.0 * xs[i]).abs() < 1e-12);
        }
        assert!(estimate_gradients(&[0.0, 2.0, 1.0], &[0.0; 3]).is_err());
        assert!(estimate_gradients(&[0.0, 1.0], &[0.0; 2]).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        let xs = [0.0, 0.1, 0.2, 0.3];
        assert!(select_high_gradient(&xs, &[1.0; 4]).is_empty());
        assert_eq!(select_high_gradient(&xs, &[0.0, 0.0, 5.0, 0.0]), vec![0.2]);
        let xs: Vec<f64> = crate::problems::linspace(0.0, 1.0, 1000);
        let ys: Vec<f64> = xs.iter().map(|x| ((x - 0.5) / 0.01).tanh()).collect();
        let high = select_high_gradient(&xs, &estimate_gradients(&xs, &ys).unwrap());
        assert!(!high.is_empty() && high.iter().all(|x| (x - 0.5).abs() < 0.05));
    }

    #[test]
    fn dbscan_spot_cases() {
        let one: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        let r = dbscan(&one, 0.05, 5).unwrap();
        assert_eq!(r.clusters.len(), 1);
        assert!(r.noise.is_empty());
        let two: Vec<f64> = one.iter().copied().chain(one.iter().map(|x| x + 1.0)).collect();
        assert_eq!(dbscan(&two, 0.05, 5).unwrap().clusters.len(), 2);
        let sparse = [0.0, 1.0, 2.0];
        let r = dbscan(&sparse, 0.05, 5).unwrap();
        assert!(r.clusters.is_empty());
        assert_eq!(r.noise, vec![0, 1, 2]);
        assert!(dbscan(&sparse, 0.0, 5).is_err());
        assert!(dbscan(&sparse, 0.1, 0).is_err());
    }

    #[test]
    fn clusters_ordered_by_position() {
        let mut pts: Vec<f64> = (0..10).map(|i| 0.9 + i as f64 * 0.01).collect();
        pts.extend((0..10).map(|i| i as f64 * 0.01));
        let r = dbscan(&pts, 0.05, 5).unwrap();
        assert!(r.clusters[0].contains(&10));
        assert!(r.clusters[1].contains(&0));
    }

    #[test]
    fn detect_on_profiles() {
        let xs = crate::problems::linspace(0.0, 1.0, 500);
        assert_eq!(detect_gradient_clusters(&xs, &vec![1.0; 500], 0.05, 5).unwrap().n_clusters, 0);
        let ys: Vec<f64> = xs.iter().map(|x| crate::problems::exact_type1(*x, 0.05).unwrap()).collect();
        let r = detect_gradient_clusters(&xs, &ys, 0.05, 5).unwrap();
        assert_eq!(r.n_clusters, 1);
        assert!(r.intervals[0].0 > 0.8 && r.intervals[0].1 == 1.0);
        let ys: Vec<f64> = xs.iter().map(|x| crate::problems::exact_type2(*x, 0.05).unwrap()).collect();
        let r = detect_gradient_clusters(&xs, &ys, 0.05, 5).unwrap();
        assert_eq!(r.n_clusters, 2);
        assert!(r.intervals[0].1 < 0.2 && r.intervals[1].0 > 0.8);
    }

    #[test]
    fn dbscan_matches_brute_force_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(0..=200);
            let clumps: Vec<f64> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0.0..1.0)).collect();
            let pts: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.7) {
                        clumps[rng.random_range(0..clumps.len())] + rng.random_range(-0.05..0.05)
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect();
            let eps = rng.random_range(0.005..0.08);
            let min_pts = rng.random_range(1..8);
            check_against_oracle(&pts, eps, min_pts);
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(pts in prop::collection::vec(0.0f64..1.0, 0..120), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<f64> = perm.iter().map(|&i| pts[i]).collect();
            let a = dbscan(&pts, 0.02, 4).unwrap();
            let b = dbscan(&shuffled, 0.02, 4).unwrap();
            let (_, _, core) = brute_force(&pts, 0.02, 4);
            let to_sets = |r: &DbscanResult, map: &dyn Fn(usize) -> usize| -> BTreeSet<BTreeSet<usize>> {
                r.clusters.iter().map(|c| c.iter().map(|&i| map(i)).filter(|&i| core[i]).collect()).collect()
            };
            prop_assert_eq!(to_sets(&a, &|i| i), to_sets(&b, &|i| perm[i]));
            let na: BTreeSet<usize> = a.noise.iter().copied().collect();
            let nb: BTreeSet<usize> = b.noise.iter().map(|&i| perm[i]).collect();
            prop_assert_eq!(na, nb);
        }

        #[test]
        fn scale_invariant_detection(k in -4i32..8, c in 0.2f64..0.8, w in 0.005f64..0.05) {
            let amp = 2f64.powi(k);
            let xs = crate::problems::linspace(0.0, 1.0, 300);
            let ys: Vec<f64> = xs.iter().map(|x| ((x - c) / w).tanh()).collect();
            let scaled: Vec<f64> = ys.iter().map(|y| amp * y).collect();
            let a = detect_gradient_clusters(&xs, &ys, 0.05, 5).unwrap();
            let b = detect_gradient_clusters(&xs, &scaled, 0.05, 5).unwrap();
            prop_assert_eq!(a.intervals, b.intervals);
        }
    }
}
