//! Property tests for the structural invariants of the engine.

use proptest::prelude::*;

use arealize::areal::area_shares;
use arealize::geom::{discretize_block, knn, polygon_area, AreaUnit, Point};
use arealize::gvf::blend;
use arealize::survey::rake_2d;
use arealize::variogram::{covariance, semivariance, Family, VariogramSpec};

fn family_strategy() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Spherical),
        Just(Family::Exponential),
        Just(Family::Gaussian),
        Just(Family::Matern { nu: 0.5 }),
        Just(Family::Matern { nu: 1.5 }),
        Just(Family::Matern { nu: 2.5 }),
    ]
}

proptest! {
    #[test]
    fn covariance_and_semivariance_sum_to_sill(
        family in family_strategy(),
        c0 in 0.0..2.0f64,
        c in 0.0..3.0f64,
        a in 0.1..5.0f64,
        h in 1e-9..50.0f64,
    ) {
        let spec = VariogramSpec::new(family, c0, c, a).unwrap();
        let total = covariance(&spec, h).unwrap() + semivariance(&spec, h).unwrap();
        prop_assert!((total - spec.sill()).abs() <= 1e-12 * spec.sill().max(1.0));
    }

    #[test]
    fn knn_result_is_prefix_of_larger_k(
        xs in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), 1..40),
        tx in 0.0..100.0f64,
        ty in 0.0..100.0f64,
        k in 1usize..12,
    ) {
        let pts: Vec<Point> = xs.iter().map(|(x, y)| Point::new(*x, *y)).collect();
        let target = Point::new(tx, ty);
        let small = knn(&pts, &target, k).unwrap();
        let large = knn(&pts, &target, k + 1).unwrap();
        prop_assert_eq!(&large[..small.len()], &small[..]);
    }

    #[test]
    fn polygon_area_is_rigid_motion_invariant(
        w in 0.5..20.0f64,
        h in 0.5..20.0f64,
        dx in -50.0..50.0f64,
        dy in -50.0..50.0f64,
        angle in 0.0..std::f64::consts::TAU,
    ) {
        let base = vec![
            Point::new(0.0, 0.0),
            Point::new(w, 0.0),
            Point::new(w, h),
            Point::new(0.3 * w, 0.8 * h),
        ];
        let moved: Vec<Point> = base
            .iter()
            .map(|p| {
                let (s, c) = angle.sin_cos();
                Point::new(c * p.x - s * p.y + dx, s * p.x + c * p.y + dy)
            })
            .collect();
        let a0 = polygon_area(&AreaUnit::from_outer("a", base).unwrap()).unwrap();
        let a1 = polygon_area(&AreaUnit::from_outer("b", moved).unwrap()).unwrap();
        prop_assert!((a1 - a0).abs() <= 1e-9 * a0);
    }

    #[test]
    fn discretization_count_monotone_in_spacing(
        w in 2.0..15.0f64,
        h in 2.0..15.0f64,
        s1 in 0.05..0.5f64,
        ratio in 1.0..4.0f64,
    ) {
        let unit = AreaUnit::from_outer(
            "r",
            vec![
                Point::new(0.0, 0.0),
                Point::new(w, 0.0),
                Point::new(w, h),
                Point::new(0.0, h),
            ],
        )
        .unwrap();
        let s2 = s1 * ratio;
        let fine = discretize_block(&unit, s1).unwrap();
        let coarse = discretize_block(&unit, s2).unwrap();
        // both spacings are far below the fallback threshold here
        prop_assert!(fine.len() >= coarse.len());
        prop_assert!(fine.iter().all(|p| unit.contains(p)));
    }

    #[test]
    fn shares_scale_invariant_and_bounded(
        counts in prop::collection::vec(0u64..40, 1..6),
        cell_area in 0.1..5.0f64,
    ) {
        let total_cells: u64 = counts.iter().sum();
        prop_assume!(total_cells > 0);
        let map: std::collections::BTreeMap<String, u64> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("c{i}"), *c))
            .collect();
        let area_total = total_cells as f64 * cell_area;
        let s1 = area_shares(&map, cell_area, area_total).unwrap();
        let s2 = area_shares(&map, cell_area * 7.0, area_total * 7.0).unwrap();
        let sum1: f64 = s1.values().sum();
        prop_assert!((sum1 - 100.0).abs() <= 1e-9);
        for (k, v) in &s1 {
            prop_assert!((s2[k] - v).abs() <= 1e-9);
        }
    }

    #[test]
    fn blended_variance_is_between_inputs(
        direct in 0.0..100.0f64,
        model in 0.0..100.0f64,
        n in 0u32..8,
    ) {
        let blended = blend(direct, model, n);
        let lo = direct.min(model);
        let hi = direct.max(model);
        prop_assert!(blended >= lo - 1e-12 && blended <= hi + 1e-12);
        if n >= 3 {
            prop_assert_eq!(blended, direct);
        }
    }

    #[test]
    fn raking_reproduces_margins_on_feasible_instances(
        latent in prop::collection::vec(0.5..20.0f64, 6),
        samples in prop::collection::vec(0u32..5, 6),
    ) {
        let mut n = [[0u32; 3]; 2];
        let mut rows = [0.0f64; 2];
        let mut cols = [0.0f64; 3];
        let mut sampled = 0;
        for s in 0..2 {
            for t in 0..3 {
                let k = s * 3 + t;
                n[s][t] = samples[k];
                if n[s][t] > 0 {
                    rows[s] += latent[k];
                    cols[t] += latent[k];
                    sampled += 1;
                }
            }
        }
        prop_assume!(sampled >= 1);
        let w = rake_2d(&n, &rows, &cols, 1e-10, 5000).unwrap();
        for s in 0..2 {
            let got: f64 = (0..3).map(|t| w[s][t].unwrap_or(0.0) * f64::from(n[s][t])).sum();
            prop_assert!((got - rows[s]).abs() <= 1e-8 * rows[s].max(1.0));
        }
        for t in 0..3 {
            let got: f64 = (0..2).map(|s| w[s][t].unwrap_or(0.0) * f64::from(n[s][t])).sum();
            prop_assert!((got - cols[t]).abs() <= 1e-8 * cols[t].max(1.0));
        }
    }
}
