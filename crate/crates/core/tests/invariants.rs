//! Module invariants as property tests, plus the seed-averaged statistical
//! properties of the samplers and estimators.

use std::sync::Arc;

use grainsim::causal_cone::cone_measure;
use grainsim::estimators::{estimate_pass, estimate_vex, estimate_vv, DensityRequest};
use grainsim::growth::eikonal::{eikonal_residual, fast_marching};
use grainsim::nucleation::count_in;
use grainsim::simulate::{realize, realize_indexed, union_capture_time, union_indicator};
use grainsim::*;
use proptest::prelude::*;

const ALPHA: f64 = 0.5;

fn unit_speed() -> Arc<GrowthField> {
    Arc::new(GrowthField::constant(1.0, 10.0).unwrap())
}

fn kjma_model() -> NucleationModel {
    NucleationModel::homogeneous_poisson(ALPHA, Window::square(-1.5, 5.5)).unwrap()
}

fn staircase_model() -> NucleationModel {
    let w = Window::square(0.0, 4.0);
    NucleationModel::staircase(TemporalFn::exponential(1.0), MarkDensity::uniform(w), w).unwrap()
}

fn single_model() -> NucleationModel {
    let w = Window::square(0.0, 4.0);
    NucleationModel::single_nucleus(TemporalFn::exponential(1.0), MarkDensity::uniform(w), w).unwrap()
}

/// Smooth speed field with values in [1, 2].
fn bumpy_speed(h: f64, phase: f64) -> ScalarField {
    let grid = Grid::new(Window::square(0.0, 2.0), h).unwrap();
    ScalarField::from_fn(grid, |p| 1.5 + 0.5 * (3.0 * p.0[0] + phase).sin() * (2.0 * p.0[1]).cos())
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn same_points(a: &[MarkedPoint], b: &[MarkedPoint]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(p, q)| p.birth_time.to_bits() == q.birth_time.to_bits() && p.location == q.location)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn staircase_births_are_unit_spaced(seed in any::<u64>()) {
        let pts = realize(&staircase_model(), &unit_speed(), 6.0, seed).unwrap().accepted;
        for w in pts.windows(2) {
            // Exact up to rounding of T1 + k.
            prop_assert!((w[1].birth_time - w[0].birth_time - 1.0).abs() <= 4.0 * f64::EPSILON * w[1].birth_time);
        }
    }

    #[test]
    fn grains_are_nested_in_time(
        b in 0.0..1.0f64, x in 0.2..1.8f64, y in 0.2..1.8f64,
        t1 in 0.0..2.0f64, dt in 0.0..1.0f64, space in any::<bool>(),
    ) {
        let growth = if space {
            GrowthField::space_only(bumpy_speed(0.05, 0.3)).unwrap()
        } else {
            GrowthField::constant(1.0, 10.0).unwrap()
        };
        let grid = Grid::new(Window::square(0.0, 2.0), 0.05).unwrap();
        let p = MarkedPoint::new(b, Point::new2(x, y), 0);
        let a = grain_indicator(&growth, &p, t1, &grid).unwrap();
        let c = grain_indicator(&growth, &p, t1 + dt, &grid).unwrap();
        prop_assert!(a.values().iter().zip(c.values()).all(|(u, v)| u <= v));
    }

    #[test]
    fn capture_times_respect_speed_bounds(
        x in 0.2..1.8f64, y in 0.2..1.8f64, u in 0.0..2.0f64, v in 0.0..2.0f64, b in 0.0..1.0f64,
    ) {
        let h = 0.02;
        let growth = GrowthField::space_only(bumpy_speed(h, 0.0)).unwrap();
        let (g0, g1) = (growth.g_min(), growth.g_max());
        let p = MarkedPoint::new(b, Point::new2(x, y), 0);
        let q = Point::new2(u, v);
        let dt = grain_capture_time(&growth, &p, &q) - b;
        let d = p.location.dist(&q);
        let slack = 5.0 * h / g0;
        prop_assert!(dt >= d / g1 - slack && dt <= d / g0 + slack, "dt {} d {}", dt, d);

        let unit = GrowthField::constant(1.0, 10.0).unwrap();
        let exact = grain_capture_time(&unit, &p, &q) - b;
        prop_assert!((exact - d).abs() <= 1e-12);
    }

    #[test]
    fn fast_marching_satisfies_the_discrete_equation(x in 0.0..2.0f64, y in 0.0..2.0f64, phase in 0.0..6.0f64) {
        let speed = bumpy_speed(0.04, phase);
        let (times, sources) = fast_marching(&speed, &Point::new2(x, y), 0.1).unwrap();
        prop_assert!(eikonal_residual(&times, &speed, &sources) <= 1e-9);
    }

    #[test]
    fn travel_times_are_nearly_symmetric(a in 0.2..1.8f64, b in 0.2..1.8f64, c in 0.2..1.8f64, d in 0.2..1.8f64) {
        let h = 0.02;
        let growth = GrowthField::space_only(bumpy_speed(h, 1.0)).unwrap();
        let (p, q) = (Point::new2(a, b), Point::new2(c, d));
        let from_p = growth.arrival_field(&p).unwrap().interpolate(&q).unwrap();
        let from_q = growth.arrival_field(&q).unwrap().interpolate(&p).unwrap();
        prop_assert!((from_p - from_q).abs() <= 2.0 * 5.0 * h / growth.g_min());
    }

    #[test]
    fn cone_measure_grows_with_time(x in 0.5..3.5f64, y in 0.5..3.5f64, t in 0.05..2.0f64, dt in 0.01..0.5f64) {
        let growth = GrowthField::constant(1.0, 10.0).unwrap();
        for model in [kjma_model(), staircase_model(), single_model()] {
            let at = |s| cone_measure(&CausalCone::new(&growth, Point::new2(x, y), s).unwrap(), &model).unwrap();
            let (a, b) = (at(t), at(t + dt));
            prop_assert!(b >= a - 1e-9);
            if model.is_poisson() {
                prop_assert!(b > a);
            }
        }
    }

    #[test]
    fn sections_shrink_toward_the_apex(x in 0.5..3.5f64, y in 0.5..3.5f64, t in 0.1..2.0f64) {
        let growth = GrowthField::constant(1.0, 10.0).unwrap();
        let model = staircase_model();
        let cone = CausalCone::new(&growth, Point::new2(x, y), t).unwrap();
        let masses: Vec<f64> = (0..=20).map(|k| cone.section_mass(t * k as f64 / 20.0, model.marks())).collect();
        prop_assert!(masses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn coverage_is_monotone_and_below_the_grain_sum(seed in any::<u64>(), t in 0.1..1.4f64, dt in 0.0..0.3f64) {
        let growth = unit_speed();
        let real = realize(&kjma_model(), &growth, 1.7, seed).unwrap();
        let grid = Grid::new(Window::square(0.0, 4.0), 0.05).unwrap();
        let a = union_indicator(&real, t, &grid).unwrap();
        let b = union_indicator(&real, t + dt, &grid).unwrap();
        prop_assert!(a.values().iter().zip(b.values()).all(|(u, v)| u <= v));
        let mut sum = vec![0.0; grid.len()];
        for p in &real.accepted {
            let g = grain_indicator(&growth, p, t, &grid).unwrap();
            sum.iter_mut().zip(g.values()).for_each(|(s, v)| *s += v);
        }
        prop_assert!(a.values().iter().zip(&sum).all(|(u, s)| u <= s));
    }

    #[test]
    fn cone_membership_decides_coverage(seed in any::<u64>(), x in 0.0..4.0f64, y in 0.0..4.0f64, t in 0.1..1.5f64) {
        let growth = unit_speed();
        let real = realize(&kjma_model(), &growth, 1.5, seed).unwrap();
        let x = Point::new2(x, y);
        let cone = CausalCone::new(&growth, x, t).unwrap();
        let in_cone = real.accepted.iter().any(|p| cone.contains(p.birth_time, &p.location));
        let covered = union_capture_time(&real, &x).unwrap() <= t;
        prop_assert_eq!(in_cone, covered);
    }

    #[test]
    fn thinning_only_splits_the_base(seed in any::<u64>()) {
        let growth = unit_speed();
        let base = kjma_model();
        let thinned = NucleationModel::thinned(base.clone()).unwrap();
        let real = realize(&thinned, &growth, 1.5, seed).unwrap();
        let all = realize(&base, &growth, 1.5, seed).unwrap().accepted;
        let mut merged: Vec<MarkedPoint> = real.accepted.iter().chain(&real.rejected).cloned().collect();
        merged.sort_by(|a, b| a.birth_time.total_cmp(&b.birth_time).then(a.grain_id.cmp(&b.grain_id)));
        prop_assert!(same_points(&merged, &all));
    }

    #[test]
    fn free_space_nuclei_land_outside_earlier_grains(seed in any::<u64>()) {
        let growth = unit_speed();
        let region = Window::square(0.0, 4.0);
        let base = NucleationModel::homogeneous_poisson(ALPHA, region).unwrap();
        let model = NucleationModel::free_space(base, region).unwrap();
        let real = realize(&model, &growth, 1.5, seed).unwrap();
        for (j, p) in real.accepted.iter().enumerate() {
            let earlier = Realization::from_points(growth.clone(), 1.5, real.accepted[..j].to_vec());
            prop_assert!(union_capture_time(&earlier, &p.location).unwrap() > p.birth_time);
        }
    }
}

#[test]
fn ensembles_do_not_depend_on_the_thread_count() {
    let grid = Grid::new(Window::square(0.0, 4.0), 0.1).unwrap();
    let build = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| Ensemble::build(&NucleationModel::thinned(kjma_model()).unwrap(), unit_speed(), 1.5, 99, 40, grid.clone()).unwrap())
    };
    let (a, b) = (build(1), build(4));
    for (r, s) in a.realizations().iter().zip(b.realizations()) {
        assert!(same_points(&r.accepted, &s.accepted) && same_points(&r.rejected, &s.rejected));
    }
    let (va, vb) = (estimate_vv(&a, 1.0).unwrap(), estimate_vv(&b, 1.0).unwrap());
    assert_eq!(va.estimate.values(), vb.estimate.values());
    assert_eq!(va.stderr.values(), vb.stderr.values());
}

#[test]
fn poisson_counts_on_disjoint_intervals_are_uncorrelated() {
    let model = NucleationModel::homogeneous_poisson(ALPHA, Window::square(0.0, 2.0)).unwrap();
    let growth = unit_speed();
    let n = 10_000;
    let (a, b): (Vec<f64>, Vec<f64>) = (0..n as u64)
        .map(|i| {
            let pts = realize_indexed(&model, &growth, 2.0, 5, i).unwrap().accepted;
            (count_in(&pts, 0.0, 1.0) as f64, count_in(&pts, 1.0, 2.0) as f64)
        })
        .unzip();
    let (ma, mb) = (mean_se(&a).0, mean_se(&b).0);
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let (cov, se) = mean_se(&prod);
    assert!(cov.abs() <= 3.0 * se, "cov {cov} se {se}");
}

#[test]
fn mean_counts_match_the_cumulative_intensity() {
    let growth = unit_speed();
    for model in [kjma_model(), single_model(), staircase_model()] {
        for t in [0.5, 1.5, 2.5] {
            let counts: Vec<f64> = (0..4000u64)
                .map(|i| count_in(&realize_indexed(&model, &growth, 3.0, 17, i).unwrap().accepted, 0.0, t) as f64)
                .collect();
            let (m, se) = mean_se(&counts);
            let expect = model.marginal_cumulative_intensity(t).unwrap();
            assert!((m - expect).abs() <= 3.0 * se.max(1e-12), "{} t={t}: {m} +- {se} vs {expect}", model.kind_name());
        }
    }
}

#[test]
fn no_multiple_births_in_short_intervals() {
    let growth = unit_speed();
    for model in [staircase_model(), single_model()] {
        for i in 0..2000u64 {
            let pts = realize_indexed(&model, &growth, 5.0, 3, i).unwrap().accepted;
            for k in 0..50 {
                let t = 0.1 * k as f64;
                assert!(count_in(&pts, t, t + 0.99) <= 1);
            }
        }
    }
}

#[test]
fn staircase_marks_are_independent_of_the_first_birth() {
    let growth = unit_speed();
    let model = staircase_model();
    let first: Vec<(f64, f64, f64)> = (0..10_000u64)
        .filter_map(|i| realize_indexed(&model, &growth, 5.0, 23, i).unwrap().accepted.first().map(|p| (p.birth_time, p.location.0[0], p.location.0[1])))
        .collect();
    let t: Vec<f64> = first.iter().map(|p| p.0).collect();
    let mt = mean_se(&t).0;
    for coord in [1, 2] {
        let c: Vec<f64> = first.iter().map(|p| if coord == 1 { p.1 } else { p.2 }).collect();
        let mc = mean_se(&c).0;
        let prod: Vec<f64> = t.iter().zip(&c).map(|(a, b)| (a - mt) * (b - mc)).collect();
        let (cov, se) = mean_se(&prod);
        assert!(cov.abs() <= 3.0 * se, "coordinate {coord}: cov {cov} se {se}");
    }
}

fn small_kjma(n: usize, seed: u64) -> Ensemble {
    Ensemble::build(&kjma_model(), unit_speed(), 1.5, seed, n, Grid::new(Window::square(0.0, 4.0), 0.05).unwrap()).unwrap()
}

#[test]
fn extended_volume_dominates_and_both_grow() {
    let ens = small_kjma(60, 1);
    let times = [0.3, 0.6, 0.9, 1.2, 1.5];
    let vv: Vec<_> = times.iter().map(|&t| estimate_vv(&ens, t).unwrap()).collect();
    let vex: Vec<_> = times.iter().map(|&t| estimate_vex(&ens, t).unwrap()).collect();
    for k in 0..times.len() {
        assert!(vex[k].estimate.values().iter().zip(vv[k].estimate.values()).all(|(e, v)| e >= v));
        if k > 0 {
            assert!(vv[k].estimate.values().iter().zip(vv[k - 1].estimate.values()).all(|(a, b)| a >= b));
            assert!(vex[k].estimate.values().iter().zip(vex[k - 1].estimate.values()).all(|(a, b)| a >= b));
        }
    }
}

#[test]
fn single_nucleus_volumes_coincide() {
    let ens = Ensemble::build(&single_model(), unit_speed(), 2.0, 4, 80, Grid::new(Window::square(0.0, 4.0), 0.05).unwrap()).unwrap();
    for t in [0.5, 1.0, 2.0] {
        assert_eq!(estimate_vv(&ens, t).unwrap().estimate.values(), estimate_vex(&ens, t).unwrap().estimate.values());
    }
}

#[test]
fn standard_errors_shrink_like_root_n() {
    let grid = Grid::new(Window::square(1.0, 3.0), 0.05).unwrap();
    let median_se = |n| {
        let ens = Ensemble::build(&kjma_model(), unit_speed(), 1.5, 8, n, grid.clone()).unwrap();
        let mut se = estimate_vv(&ens, 1.0).unwrap().stderr.into_values();
        se.sort_by(f64::total_cmp);
        se[se.len() / 2]
    };
    let ratio = median_se(400) / median_se(800);
    assert!((ratio - 2.0_f64.sqrt()).abs() <= 0.1 * 2.0_f64.sqrt(), "ratio {ratio}");
}

#[test]
fn capture_times_reproduce_the_indicators() {
    let ens = small_kjma(20, 2);
    let grid = ens.grid().clone();
    for (i, real) in ens.realizations().iter().enumerate() {
        for t in [0.4, 0.8, 1.2] {
            let ind = union_indicator(real, t, &grid).unwrap();
            for idx in (0..grid.len()).step_by(7) {
                let covered = union_capture_time(real, &grid.point(idx)).unwrap() <= t;
                assert_eq!(covered, ind.get(idx) > 0.5, "realization {i} node {idx} t {t}");
            }
        }
    }
}

#[test]
fn pass_results_are_order_independent() {
    let ens = small_kjma(30, 6);
    let grid = ens.grid().clone();
    let boxes = [Window::square(1.0, 2.0)];
    let req = [DensityRequest::vv(1.0), DensityRequest::vex(1.0)];
    let a = estimate_pass(&ens, &grid, &req, &boxes).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| estimate_pass(&ens, &grid, &req, &boxes).unwrap());
    assert_eq!(a.box_samples, b.box_samples);
    for (x, y) in a.estimates.iter().zip(&b.estimates) {
        assert_eq!(x.estimate.values(), y.estimate.values());
    }
}
