use nonlocal_core::barrier::{barrier_grid, barrier_sweep, build_barrier, verify_barrier, BarrierParams};
use nonlocal_core::density::{
    check_doubling, check_la8, defect_profile, density_theorem_check, energy_growth_check, minimize_on_ball,
    phase_split_check, volume_profile, VolumeTable,
};
use nonlocal_core::error::Error;
use nonlocal_core::exterior::ExteriorData;
use nonlocal_core::geometry::{ball_volume, GridGeometry, ModelParams, Region};
use nonlocal_core::grid::GridFunction;
use nonlocal_core::kernel::NonlocalOperator;
use nonlocal_core::minimize::MinimizeOptions;
use nonlocal_core::potential::Potential;
use nonlocal_core::recursion::{
    check_hypothesis, geometric_grid, propagate_lower_bound, GrowthFunction, RecursionParams,
};
use proptest::prelude::*;

fn layer(r: f64, h: f64) -> (ModelParams, GridGeometry, Region, GridFunction) {
    let p = ModelParams::new(1, 0.25).unwrap();
    let ext = ExteriorData::half_space(&[1.0], 0.0).unwrap();
    let (g, omega, rep) =
        minimize_on_ball(&p, &Potential::quartic(), &ext, r, h, &MinimizeOptions::default()).unwrap();
    assert!(rep.converged);
    (p, g, omega, rep.solution)
}

#[test]
fn volume_of_pure_phases() {
    let g = GridGeometry::cube(2, 0.0, 4.0, 32).unwrap();
    let radii = [1.0, 2.0, 3.0, 4.0];
    let minus = GridFunction::constant(g.clone(), -1.0).unwrap();
    assert!(volume_profile(&minus, -0.5, &radii).unwrap().v.iter().all(|v| *v == 0.0));
    let plus = GridFunction::constant(g.clone(), 1.0).unwrap();
    let t = volume_profile(&plus, 0.0, &radii).unwrap();
    for ((r, v), err) in radii.iter().zip(&t.v).zip(&t.boundary_error) {
        assert!((v - ball_volume(2) * r * r).abs() <= *err);
    }
    assert!(t.v.windows(2).all(|w| w[0] <= w[1]));
    assert!(matches!(volume_profile(&plus, 0.0, &[5.0]), Err(Error::RadiusTooLarge { .. })));
}

#[test]
fn layer_occupies_half_of_each_ball() {
    let (p, g, omega, u) = layer(8.0, 0.25);
    let radii = [1.0, 2.0, 4.0, 8.0];
    let t = volume_profile(&u, 0.0, &radii).unwrap();
    for (r, v) in radii.iter().zip(&t.v) {
        let q = v / (2.0 * r);
        assert!((0.4..=0.6).contains(&q), "{q}");
    }
    let d = density_theorem_check(&p, &u, 0.0, 0.0, &radii, 0.1).unwrap();
    assert!(d.hypothesis && !d.skipped);
    assert!(d.min_ratio.unwrap() >= 0.3 * ball_volume(1));
    assert!(d.r_bar.is_none());
    // volume partition and the potential lower bound on the energy
    let op = NonlocalOperator::for_function(&p, &u).unwrap();
    for r in radii {
        let s = phase_split_check(&op, &u, &omega, &Potential::quartic(), 0.0, 0.5, r).unwrap();
        assert!(s.partition_exact && s.energy_bound_holds);
        assert_eq!(s.v, volume_profile(&u, 0.0, &[r]).unwrap().v[0]);
    }
    assert!(g.num_cells() == 64);
}

#[test]
fn density_check_on_constants() {
    let p = ModelParams::new(2, 0.25).unwrap();
    let g = GridGeometry::cube(2, 0.0, 8.0, 64).unwrap();
    let plus = GridFunction::constant(g.clone(), 1.0).unwrap();
    let radii = [2.0, 4.0, 8.0];
    let d = density_theorem_check(&p, &plus, 0.0, 0.0, &radii, 0.1).unwrap();
    let err = volume_profile(&plus, 0.0, &radii).unwrap().boundary_error;
    for ((q, r), e) in d.ratios.iter().zip(radii).zip(err) {
        assert!((q - std::f64::consts::PI).abs() <= e / (r * r));
    }
    let minus = GridFunction::constant(g, -1.0).unwrap();
    let d = density_theorem_check(&p, &minus, 0.0, 0.0, &[2.0], 0.1).unwrap();
    assert!(!d.hypothesis && d.skipped && d.ratios.is_empty());
}

#[test]
fn density_range_gate() {
    let p = ModelParams::new(2, 0.6).unwrap();
    let g = GridGeometry::cube(2, 0.0, 1.0, 4).unwrap();
    let u = GridFunction::constant(g, 1.0).unwrap();
    assert!(matches!(
        density_theorem_check(&p, &u, 0.0, 0.0, &[1.0], 0.1),
        Err(Error::DensityRange(_))
    ));
}

#[test]
fn defect_profile_arithmetic() {
    let g = GridGeometry::cube(1, 0.0, 4.0, 16).unwrap();
    let w = GridFunction::from_fn(g.clone(), ExteriorData::constant(1.0), |x| -0.8 + 0.1 * x[0].abs()).unwrap();
    let same = defect_profile(&w, &w, -0.2, 0.5, &[1.0, 4.0]).unwrap();
    assert_eq!(same, vec![0.0, 0.0]);
    let bumped: Vec<f64> = w.values().iter().map(|v| v + 0.1).collect();
    let u = GridFunction::with_auto_range(g.clone(), bumped, ExteriorData::constant(1.0)).unwrap();
    // u <= -0.2 exactly where |x| <= 5, i.e. on every cell of B_4
    let a = defect_profile(&u, &w, -0.2, 0.5, &[2.0, 4.0]).unwrap();
    assert!((a[0] - 0.5 * 0.01 * 4.0).abs() < 1e-12);
    assert!((a[1] - 0.5 * 0.01 * 8.0).abs() < 1e-12);
    let minus = GridFunction::constant(g, -1.0).unwrap();
    assert_eq!(defect_profile(&minus, &w, -0.2, 0.5, &[4.0]).unwrap(), vec![0.0]);
}

#[test]
fn doubling_closed_forms() {
    let radii: Vec<f64> = (0..10).map(|k| 2f64.powi(k)).collect();
    let disc: Vec<f64> = radii.iter().map(|r| std::f64::consts::PI * r * r).collect();
    let t = VolumeTable::synthetic(radii, disc).unwrap();
    let s = 0.3;
    let d = check_doubling(&t, 2, s).unwrap();
    // r^{2s} (pi r^2)^{1-s} / (4 pi r^2) = pi^{-s} / 4
    let expect = std::f64::consts::PI.powf(-s) / 4.0;
    for row in &d.rows {
        assert!((row.ratio.unwrap() - expect).abs() < 1e-12 * expect);
    }
    assert!(!check_la8(&t, 2, s, 1.0).unwrap().rows.is_empty());
}

#[test]
fn energy_growth_of_the_trivial_phase_is_degenerate() {
    let p = ModelParams::new(1, 0.25).unwrap();
    let rep = energy_growth_check(
        &p,
        &Potential::quartic(),
        &ExteriorData::constant(-1.0),
        &[1.0, 2.0, 4.0, 8.0],
        0.5,
        &MinimizeOptions::default(),
    )
    .unwrap();
    assert!(rep.degenerate && rep.slope.is_none());
    assert!(rep.energies.iter().all(|e| *e == 0.0));
}

#[test]
fn barrier_al2_holds_by_construction_at_every_resolution() {
    let p = ModelParams::new(1, 0.25).unwrap();
    let bp = BarrierParams::new(16.0, 0.05, 4.0).unwrap();
    let mut consts = Vec::new();
    for h in [1.0, 0.5, 0.25] {
        let g = barrier_grid(1, 16.0, h).unwrap();
        let w = build_barrier(&p, &bp, &g).unwrap();
        let rep = verify_barrier(&p, &w, &bp).unwrap();
        assert!((rep.al2_constant - rep.al2_expected).abs() < 1e-12);
        assert!(rep.al2_lower_exact && rep.admissible && !rep.degenerate);
        // nonincreasing toward the center until the clamp
        let vals: Vec<f64> = rep.margins.iter().map(|m| m.value).collect();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        consts.push(rep.al2_constant);
    }
    assert!((consts[0] - consts[2]).abs() < 0.1 * consts[0]);
}

#[test]
fn barrier_center_margin_improves_with_radius() {
    let p = ModelParams::new(1, 0.25).unwrap();
    let sweep = barrier_sweep(&p, &[16.0, 32.0, 64.0], 0.125, 4.0, |_| 0.5).unwrap();
    assert!(sweep.nonincreasing);
    for row in &sweep.rows {
        assert!(row.admissible && !row.degenerate);
    }
}

#[test]
fn barrier_lemma_holds_at_large_radius() {
    let p = ModelParams::new(1, 0.25).unwrap();
    let sweep = barrier_sweep(&p, &[2048.0, 8192.0, 32768.0], 0.125, 64.0, |r| r / 256.0).unwrap();
    assert_eq!(sweep.r0, Some(2048.0));
    assert!(sweep.rows.iter().all(|r| r.admissible && !r.degenerate && r.al1_pass));
}

#[test]
fn barrier_rejects_non_unit_exterior() {
    let p = ModelParams::new(1, 0.25).unwrap();
    let bp = BarrierParams::new(4.0, 0.05, 4.0).unwrap();
    let g = barrier_grid(1, 4.0, 0.5).unwrap();
    let w = GridFunction::constant(g, 0.0).unwrap();
    assert!(matches!(verify_barrier(&p, &w, &bp), Err(Error::Hypothesis(_))));
}

#[test]
fn power_law_chain_reaches_its_exponent() {
    let v = GrowthFunction::Power { scale: 1.0, exponent: 2.0 };
    let p = RecursionParams::new(0.5, 256.0, 2.0, 2.0, 16.0, 2.0).unwrap();
    assert!(check_hypothesis(&v, &p, &geometric_grid(16.0, 2.0, 40)).unwrap().pass);
    let chain = propagate_lower_bound(&v, &p, 40).unwrap();
    assert!((chain.exponent - 2.0).abs() < 0.05, "{}", chain.exponent);
    for (l, vr) in chain.lower.iter().zip(&chain.v) {
        assert!(*l <= vr.unwrap() * (1.0 + 1e-12));
    }
    assert!(chain.c_lower > 0.0);
}

#[test]
fn constant_growth_fails_at_a_finite_radius() {
    let v = GrowthFunction::Constant { value: 2.0 };
    let p = RecursionParams::new(0.5, 2.0, 2.0, 2.0, 10.0, 2.0).unwrap();
    let rep = check_hypothesis(&v, &p, &geometric_grid(10.0, 1.25, 80)).unwrap();
    let r = rep.first_violation.unwrap();
    assert!(!rep.pass && r.is_finite() && r > 10.0);
    assert!(propagate_lower_bound(&v, &p, 40).is_err());
}

proptest! {
    #[test]
    fn enlarging_c_never_creates_violations(
        exponent in 0.0f64..3.0,
        c in 1.01f64..4.0,
        extra in 0.0f64..4.0,
    ) {
        let v = GrowthFunction::Power { scale: 3.0, exponent };
        let grid = geometric_grid(2.0, 1.5, 30);
        let p = RecursionParams::new(0.5, 1.0, 2.0, 2.0, 2.0, c).unwrap();
        let q = RecursionParams { c: c + extra, ..p.clone() };
        let a = check_hypothesis(&v, &p, &grid).unwrap();
        let b = check_hypothesis(&v, &q, &grid).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!(!x.holds || y.holds);
        }
    }
}
