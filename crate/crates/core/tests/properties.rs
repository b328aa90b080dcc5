mod common;

use proptest::prelude::*;

use roi_consistency::clustermetrics::{axis_variances, intra_inter, variance_rmse};
use roi_consistency::embed::{calibrate_affinities, kl_divergence};
use roi_consistency::ingest::{self, generate_synthetic, SyntheticSpec};
use roi_consistency::similarity::{enumerate_pairs, summarize, PairKind};
use roi_consistency::stats::{binned_entropy, entropy_summary, student_t_sf};
use roi_consistency::{AnalysisConfig, Dataset, RoiFlag};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rebuilding_reproduces_index(seed in any::<u64>()) {
        let ds = common::random_dataset(seed, 8, 6, 4);
        let rebuilt = Dataset::new(ds.records().to_vec()).unwrap();
        prop_assert_eq!(rebuilt.vehicle_index(), ds.vehicle_index());
        prop_assert_eq!(rebuilt.n_vehicles(), ds.n_vehicles());

        let total: usize = ds.vehicle_index().values().map(|v| v.len()).sum();
        prop_assert_eq!(total, ds.len());
        for (id, v) in ds.vehicle_index() {
            let count = ds.records().iter().filter(|r| &r.vehicle_id == id).count();
            prop_assert_eq!(v.inside.len() + v.outside.len(), count);
            for &i in &v.inside {
                prop_assert_eq!(ds.record(i).roi, RoiFlag::Inside);
            }
        }
    }

    #[test]
    fn pair_counts_follow_record_counts(seed in any::<u64>()) {
        let ds = common::random_dataset(seed, 6, 6, 3);
        let summary = summarize(&ds);
        for (id, v) in ds.vehicle_index() {
            let k = v.inside.len();
            let ii = enumerate_pairs(&ds, id, PairKind::InsideInside).unwrap();
            let io = enumerate_pairs(&ds, id, PairKind::InsideOutside).unwrap();
            prop_assert_eq!(ii.len(), k * k.saturating_sub(1) / 2);
            prop_assert_eq!(io.len(), k * v.outside.len());
            prop_assert!(ii.windows(2).all(|w| w[0] < w[1]));
            if let Ok(s) = &summary {
                let stats = s.per_vehicle.iter().find(|p| &p.vehicle_id == id).unwrap();
                prop_assert_eq!(stats.n_inside, ii.len());
                for m in stats.mean_inside.iter().chain(&stats.mean_cross) {
                    prop_assert!((-1.0..=1.0).contains(m));
                }
            }
        }
    }

    #[test]
    fn similarity_is_scale_and_order_invariant(seed in any::<u64>(), scale in 1e-3f64..1e3, rot in 1usize..50) {
        let ds = common::random_dataset(seed, 8, 6, 5);
        let Ok(base) = summarize(&ds) else { return Ok(()); };

        let mut scaled = ds.records().to_vec();
        for r in &mut scaled {
            for x in &mut r.feature {
                *x *= scale;
            }
        }
        let s = summarize(&Dataset::new(scaled).unwrap()).unwrap();
        prop_assert!((s.mu_inside - base.mu_inside).abs() < 1e-12);
        prop_assert!((s.sigma_inside - base.sigma_inside).abs() < 1e-12);
        prop_assert!((s.mu_cross - base.mu_cross).abs() < 1e-12);
        prop_assert!((s.sigma_cross - base.sigma_cross).abs() < 1e-12);

        let mut permuted = ds.records().to_vec();
        let len = permuted.len();
        permuted.rotate_left(rot % len);
        permuted.reverse();
        let p = summarize(&Dataset::new(permuted).unwrap()).unwrap();
        prop_assert_eq!(p.mu_inside, base.mu_inside);
        prop_assert_eq!(p.sigma_inside, base.sigma_inside);
        prop_assert_eq!(p.mu_cross, base.mu_cross);
        prop_assert_eq!(p.sigma_cross, base.sigma_cross);
    }

    #[test]
    fn t_tail_is_symmetric(t in -5.0f64..5.0, df_index in 0usize..5) {
        let df = [1.0, 2.0, 5.0, 30.0, 1000.0][df_index];
        let sum = student_t_sf(t, df).unwrap() + student_t_sf(-t, df).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn t_tail_decreases(a in -8.0f64..8.0, b in -8.0f64..8.0, df in 0.5f64..200.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(student_t_sf(lo, df).unwrap() >= student_t_sf(hi, df).unwrap());
    }

    #[test]
    fn entropy_is_affine_invariant(
        cells in prop::collection::vec((0u32..32, 0.25f64..0.75), 1..200),
        a in prop_oneof![0.01f64..100.0, -100.0f64..-0.01],
        b in -1e3f64..1e3,
    ) {
        // Bin width 1 over [0, 32] with every interior value at least 0.25
        // away from an edge, so rounding in the map cannot change a bin.
        let mut values: Vec<f64> = cells.iter().map(|&(m, f)| m as f64 + f).collect();
        values.push(0.0);
        values.push(32.0);
        let h = binned_entropy(&values, 32, 2.0);
        let mapped: Vec<f64> = values.iter().map(|x| a * x + b).collect();
        prop_assert!((binned_entropy(&mapped, 32, 2.0) - h).abs() < 1e-12);
        prop_assert!((0.0..=5.0 + 1e-12).contains(&h));
    }

    #[test]
    fn entropy_ignores_constant_offset(seed in any::<u64>(), shift in -10.0f64..10.0) {
        let ds = common::random_dataset(seed, 5, 6, 4);
        let config = AnalysisConfig { entropy_bins: 8, ..AnalysisConfig::default() };
        let Ok(base) = entropy_summary(&ds, RoiFlag::Inside, &config) else { return Ok(()); };
        // A power-of-two-sized shift keeps most additions exact; tolerate
        // an occasional edge flip by comparing per-vehicle within one count.
        let shift = (shift * 4.0).round() / 4.0;
        let mut shifted = ds.records().to_vec();
        for r in &mut shifted {
            for x in &mut r.feature {
                *x += shift;
            }
        }
        let Ok(moved) = Dataset::new(shifted) else { return Ok(()); };
        let after = entropy_summary(&moved, RoiFlag::Inside, &config).unwrap();
        for (id, h) in &base.per_vehicle_entropy {
            prop_assert!(*h <= 3.0 + 1e-12);
            let n = ds.vehicle(id).unwrap().inside.len() * ds.dim();
            // One value moving between bins changes H by at most this much.
            let slack = if n > 1 { 2.0 * (n as f64).log2() / n as f64 + 1e-12 } else { 1e-12 };
            prop_assert!((after.per_vehicle_entropy[id] - h).abs() <= slack);
        }
    }

    #[test]
    fn rmse_identity(a in 0.0f64..1e3, b in 0.0f64..1e3) {
        prop_assert!((variance_rmse((a, b)) - (a - b).abs() / 2.0).abs() <= 1e-12 * (1.0 + a.max(b)));
        prop_assert_eq!(variance_rmse((a, b)), variance_rmse((b, a)));
    }

    #[test]
    fn cluster_metrics_match_brute_force(
        points in prop::collection::vec(((-50.0f64..50.0), (-50.0f64..50.0), 0usize..4), 2..50),
        dx in -100.0f64..100.0,
        dy in -100.0f64..100.0,
        c in 0.1f64..10.0,
    ) {
        let z: Vec<[f64; 2]> = points.iter().map(|&(x, y, _)| [x, y]).collect();
        let labels: Vec<String> = points.iter().map(|p| format!("k{}", p.2)).collect();
        let mask = vec![true; z.len()];
        let (v1, v2) = axis_variances(&z, &mask).unwrap();
        let (n1, n2) = common::naive_axis_variances(&z);
        prop_assert!((v1 - n1).abs() < 1e-12 * (1.0 + n1));
        prop_assert!((v2 - n2).abs() < 1e-12 * (1.0 + n2));

        let moved: Vec<[f64; 2]> = z.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
        let (m1, m2) = axis_variances(&moved, &mask).unwrap();
        prop_assert!((m1 - v1).abs() < 1e-9 * (1.0 + v1));
        prop_assert!((m2 - v2).abs() < 1e-9 * (1.0 + v2));
        let scaled: Vec<[f64; 2]> = z.iter().map(|p| [p[0] * c, p[1] * c]).collect();
        let (s1, s2) = axis_variances(&scaled, &mask).unwrap();
        prop_assert!((s1 - c * c * v1).abs() < 1e-9 * (1.0 + s1));
        prop_assert!((s2 - c * c * v2).abs() < 1e-9 * (1.0 + s2));

        let distinct: std::collections::BTreeSet<&String> = labels.iter().collect();
        if distinct.len() >= 2 {
            let r = intra_inter(&z, &labels, "p").unwrap();
            // Brute force: group, take per-class total variance, centroid variance.
            let mut intra = 0.0;
            let mut centroids = Vec::new();
            for label in &distinct {
                let pts: Vec<[f64; 2]> = z.iter().zip(&labels).filter(|(_, l)| l == label).map(|(p, _)| *p).collect();
                let (a, b) = common::naive_axis_variances(&pts);
                intra += a + b;
                let n = pts.len() as f64;
                centroids.push([pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]);
            }
            intra /= distinct.len() as f64;
            let (a, b) = common::naive_axis_variances(&centroids);
            prop_assert!((r.intra_class - intra).abs() < 1e-12 * (1.0 + intra));
            prop_assert!((r.inter_class - (a + b)).abs() < 1e-12 * (1.0 + a + b));
            let rm = intra_inter(&moved, &labels, "p").unwrap();
            prop_assert!((rm.intra_class - r.intra_class).abs() < 1e-9 * (1.0 + intra));
            prop_assert!((rm.inter_class - r.inter_class).abs() < 1e-9 * (1.0 + a + b));
        }
    }

    #[test]
    fn kl_is_nonnegative_and_translation_invariant(seed in 0u64..1000, dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let pts = common::gaussian_points(10, 4, seed);
        let p = calibrate_affinities(&pts, 3.0).unwrap();
        let z: Vec<[f64; 2]> = common::gaussian_points(10, 2, seed + 1).into_iter().map(|v| [v[0], v[1]]).collect();
        let moved: Vec<[f64; 2]> = z.iter().map(|q| [q[0] + dx, q[1] + dy]).collect();
        let kl = kl_divergence(&p, &z).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert!((kl_divergence(&p, &moved).unwrap() - kl).abs() < 1e-10);
    }

    #[test]
    fn csv_and_binary_round_trip(seed in any::<u64>()) {
        let ds = common::random_dataset(seed, 5, 5, 6);
        let csv = ingest::to_csv(&ds).unwrap();
        prop_assert_eq!(&ingest::parse_csv(&csv).unwrap(), &ds);
        let bytes = ingest::encode_binary(&ds).unwrap();
        let decoded = ingest::decode_binary(&bytes).unwrap();
        prop_assert_eq!(&decoded, &ds);
        prop_assert_eq!(ingest::encode_binary(&decoded).unwrap(), bytes);
    }
}

#[test]
fn affinity_invariants_on_random_inputs() {
    for (n, perplexity) in [(10, 4.0), (50, 20.0), (200, 30.0)] {
        let pts = common::gaussian_points(n, 10, 31 + n as u64);
        let p = calibrate_affinities(&pts, perplexity).unwrap();
        let total: f64 = p.as_slice().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for i in 0..n {
            assert_eq!(p.get(i, i), 0.0);
            for j in 0..i {
                assert_eq!(p.get(i, j), p.get(j, i));
                assert!(p.get(i, j) >= 0.0);
            }
        }
        // Rebuild each conditional row from the chosen precision and the raw
        // distances, and check its perplexity independently.
        for i in 0..n {
            let beta = p.precisions[i];
            let d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum())
                .collect();
            let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = d.iter().map(|x| (-beta * (x - dmin)).exp()).collect();
            let z: f64 = w.iter().sum();
            let h: f64 = w.iter().map(|x| x / z).filter(|&q| q > 0.0).map(|q| -q * q.log2()).sum();
            assert!((2f64.powf(h) - perplexity).abs() < 1e-5, "row {i}: {}", 2f64.powf(h));
        }
    }
}

#[test]
fn lower_inside_noise_wins_across_seeds() {
    let mut wins = 0;
    for seed in 0..30 {
        let ds = generate_synthetic(&SyntheticSpec {
            n_vehicles: 10,
            images_inside_per_vehicle: 4,
            images_outside_per_vehicle: 4,
            dim: 16,
            sigma_inside: 0.1,
            sigma_outside: 0.2,
            seed,
            n_cameras: 1,
        })
        .unwrap();
        let s = summarize(&ds).unwrap();
        if s.mu_inside > s.mu_cross {
            wins += 1;
        }
    }
    assert_eq!(wins, 30);
}
