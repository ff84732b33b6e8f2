use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use carotid::geometry::{
    cimt_mm, rasterize_mask, resample_arclength, thickness_profile, BoundarySide, Contour, Kappa,
};
use carotid::grid::Grid;
use carotid::hemodynamics::{
    carreau_yasuda_viscosity, osi, rrt, tawss, uniform_grid, FluidParams, Rrt, WssSeries,
};
use carotid::metrics::{boundary_distance, dice, iou, roc_auc};

fn contour(points: &[(f64, f64)], side: BoundarySide) -> Contour {
    Contour::from_xy(points, side).unwrap()
}

fn polyline() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 2..12).prop_filter("distinct neighbours", |v| {
        v.windows(2).all(|w| (w[0].0 - w[1].0).hypot(w[0].1 - w[1].1) > 1e-3)
    })
}

fn mask_pair() -> impl Strategy<Value = (Grid<bool>, Grid<bool>)> {
    (prop::collection::vec(any::<bool>(), 36), prop::collection::vec(any::<bool>(), 36)).prop_map(|(a, b)| {
        (Grid::from_vec(6, 6, a).unwrap(), Grid::from_vec(6, 6, b).unwrap())
    })
}

proptest! {
    #[test]
    fn resampling_collinear_polylines_is_idempotent(
        ts in prop::collection::vec(0.0f64..1.0, 2..10),
        (x0, y0, dx, dy) in (0.0f64..50.0, 25.0f64..50.0, 1.0f64..40.0, -20.0f64..40.0),
        s in 2usize..60,
    ) {
        let mut ts = ts;
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        prop_assume!(ts.len() >= 2);
        let pts: Vec<(f64, f64)> = ts.iter().map(|t| (x0 + t * dx, y0 + t * dy)).collect();
        let c = contour(&pts, BoundarySide::Li);
        let once = resample_arclength(&c, s).unwrap();
        let twice = resample_arclength(&once, s).unwrap();
        for (a, b) in once.points().iter().zip(twice.points()) {
            prop_assert!(a.distance(*b) <= 1e-9);
        }
        prop_assert_eq!(once.first(), c.first());
        prop_assert_eq!(once.last(), c.last());
    }

    #[test]
    fn equal_chord_polylines_are_fixed_points(angles in prop::collection::vec(0.0f64..std::f64::consts::TAU, 1..30), step in 0.5f64..3.0) {
        let mut pts = vec![(60.0, 60.0)];
        for a in &angles {
            let (x, y) = *pts.last().unwrap();
            pts.push((x + step * a.cos(), y + step * a.sin()));
        }
        let c = contour(&pts, BoundarySide::Ma);
        let again = resample_arclength(&c, pts.len()).unwrap();
        for (a, b) in c.points().iter().zip(again.points()) {
            prop_assert!(a.distance(*b) <= 1e-9);
        }
    }

    #[test]
    fn thickness_invariances(li in polyline(), ma in polyline(), dx in 0.0f64..50.0, dy in 0.0f64..50.0) {
        let li = contour(&li, BoundarySide::Li);
        let ma = contour(&ma, BoundarySide::Ma);
        let p = thickness_profile(&li, &ma, 50).unwrap();
        let moved = thickness_profile(&li.translated(dx, dy).unwrap(), &ma.translated(dx, dy).unwrap(), 50).unwrap();
        for (a, b) in p.samples().iter().zip(moved.samples()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let rev = thickness_profile(&li.reversed(), &ma.reversed(), 50).unwrap();
        prop_assert!((p.mean_px() - rev.mean_px()).abs() <= 1e-9);
    }

    #[test]
    fn cimt_is_linear_in_kappa(li in polyline(), ma in polyline(), k in 0.001f64..1.0, a in 0.1f64..10.0) {
        let p = thickness_profile(&contour(&li, BoundarySide::Li), &contour(&ma, BoundarySide::Ma), 40).unwrap();
        let base = cimt_mm(&p, Kappa::new(k).unwrap());
        let scaled = cimt_mm(&p, Kappa::new(a * k).unwrap());
        prop_assert!((scaled - a * base).abs() <= 1e-12 * scaled.abs().max(1.0));
    }

    #[test]
    fn overlap_identities((a, b) in mask_pair()) {
        let d = dice(&a, &b).unwrap();
        let j = iou(&a, &b).unwrap();
        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() <= 1e-15);
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert_eq!(j, iou(&b, &a).unwrap());
    }

    #[test]
    fn raster_count_ignores_li_ma_labelling(li in polyline(), ma in polyline()) {
        let a = contour(&li, BoundarySide::Li);
        let b = contour(&ma, BoundarySide::Ma);
        let m1 = rasterize_mask(&a, &b, 40, 40).mask;
        let m2 = rasterize_mask(&b, &a, 40, 40).mask;
        prop_assert_eq!(m1.count_foreground(), m2.count_foreground());
    }

    #[test]
    fn boundary_distance_is_symmetric(a in polyline(), b in polyline()) {
        let a = contour(&a, BoundarySide::Li);
        let b = contour(&b, BoundarySide::Ma);
        let ab = boundary_distance(&a, &b, None).unwrap();
        let ba = boundary_distance(&b, &a, None).unwrap();
        prop_assert!((ab.mean_symmetric_px - ba.mean_symmetric_px).abs() <= 1e-12);
        prop_assert_eq!(ab.hausdorff_px, ba.hausdorff_px);
        prop_assert!(ab.hausdorff_px >= ab.mean_symmetric_px - 1e-12);
    }

    #[test]
    fn auc_rank_properties(scores in prop::collection::vec(0.0f64..1.0, 4..40), seed in any::<u64>()) {
        let labels: Vec<u8> = (0..scores.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let auc = roc_auc(&scores, &labels).unwrap();
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        prop_assert!((auc + roc_auc(&scores, &flipped).unwrap() - 1.0).abs() <= 1e-12);
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(auc, roc_auc(&warped, &labels).unwrap());
    }

    #[test]
    fn biomarker_homogeneity(tau in prop::collection::vec(-5.0f64..5.0, 3..50), c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
        let t = uniform_grid(1.0, tau.len());
        let s = WssSeries::scalar(t, tau).unwrap();
        prop_assume!(tawss(&s) > 1e-9);
        let scaled = s.scaled(c);
        prop_assert!((tawss(&scaled) - c.abs() * tawss(&s)).abs() <= 1e-12 * tawss(&scaled).max(1.0));
        prop_assert!((osi(&scaled).unwrap() - osi(&s).unwrap()).abs() <= 1e-12);
        let o = osi(&s).unwrap();
        prop_assert!((0.0..=0.5).contains(&o));
    }
}

#[test]
fn unidirectional_rrt_is_reciprocal_tawss() {
    let t = uniform_grid(2.0, 11);
    let tau: Vec<[f64; 3]> = t.iter().map(|&x| [0.3 * (1.0 + x), 0.4 * (1.0 + x), 0.0]).collect();
    let s = WssSeries::new(t, tau, 2).unwrap();
    assert_eq!(osi(&s).unwrap(), 0.0);
    assert_eq!(rrt(&s), Rrt::Finite(1.0 / tawss(&s)));
}

#[test]
fn viscosity_is_monotone_on_log_sweep() {
    let f = FluidParams::default();
    let mut prev = f64::INFINITY;
    for k in 0..=120 {
        let g = 10f64.powf(-4.0 + k as f64 * 0.1);
        let mu = carreau_yasuda_viscosity(g, &f).unwrap();
        assert!(mu <= prev);
        assert!(mu >= f.carreau.mu_inf && mu <= f.carreau.mu0);
        prev = mu;
    }
}

#[test]
fn tilted_profile_and_rectangle_mask() {
    let li = contour(&[(0.0, 3.0), (10.0, 3.0)], BoundarySide::Li);
    let ma = contour(&[(0.0, 5.0), (10.0, 7.0)], BoundarySide::Ma);
    let p = thickness_profile(&li, &ma.reversed(), 3).unwrap();
    assert_abs_diff_eq!(p.samples()[0], 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(p.samples()[1], 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(p.samples()[2], 4.0, epsilon = 1e-12);

    let li = contour(&[(2.0, 3.0), (7.0, 3.0)], BoundarySide::Li);
    let ma = contour(&[(2.0, 6.0), (7.0, 6.0)], BoundarySide::Ma);
    let m = rasterize_mask(&li, &ma, 10, 10).mask;
    let expected = Grid::from_fn(10, 10, |y, x| (2..=6).contains(&x) && (3..=5).contains(&y));
    assert_eq!(m, expected);
}
