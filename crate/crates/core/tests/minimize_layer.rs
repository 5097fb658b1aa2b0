use nonlocal_core::exterior::ExteriorData;
use nonlocal_core::geometry::{GridGeometry, ModelParams, Region};
use nonlocal_core::grid::GridFunction;
use nonlocal_core::kernel::{self, NonlocalOperator};
use nonlocal_core::minimize::{el_residual, minimize, minimize_from, InitSpec, MinimizeOptions, StopReason};
use nonlocal_core::potential::Potential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn layer(m: usize) -> (ModelParams, GridGeometry, nonlocal_core::minimize::MinimizeReport) {
    let p = ModelParams::new(1, 0.25).unwrap();
    let g = GridGeometry::interval_box(1, -4.0, 4.0, m).unwrap();
    let ext = ExteriorData::half_space(&[1.0], 0.0).unwrap();
    let opts = MinimizeOptions::default();
    let r = minimize(&p, &g, &Region::whole(&g), &ext, &Potential::quartic(), &opts).unwrap();
    (p, g, r)
}

#[test]
fn pure_phases_are_returned_unchanged() {
    let p = ModelParams::new(2, 0.3).unwrap();
    let g = GridGeometry::cube(2, 0.0, 1.0, 8).unwrap();
    for v in [-1.0, 1.0] {
        let r = minimize(
            &p,
            &g,
            &Region::whole(&g),
            &ExteriorData::constant(v),
            &Potential::quartic(),
            &MinimizeOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.breakdown.total, 0.0);
        assert!(r.solution.values().iter().all(|x| *x == v));
        let res = el_residual(&p, &r.solution, &Potential::quartic()).unwrap();
        assert!(res.raw.iter().all(|x| *x == 0.0));
        assert_eq!(res.max_projected, 0.0);
    }
}

#[test]
fn half_space_layer_is_monotone_odd_and_converged() {
    let (p, g, r) = layer(128);
    assert!(r.converged, "stop {:?}, residual {}", r.stop, r.residual);
    assert!(r.energy_trace.windows(2).all(|w| w[1] <= w[0]));
    let u = r.solution.values();
    assert!(u.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    let m = u.len();
    for i in 0..m / 2 {
        assert!((u[i] + u[m - 1 - i]).abs() < 1e-3, "cell {i}: {} vs {}", u[i], u[m - 1 - i]);
    }
    assert!(u[m / 2].abs() < 0.5 && u[m / 2] > 0.0);
    let res = el_residual(&p, &r.solution, &Potential::quartic()).unwrap();
    assert!(res.max_projected <= MinimizeOptions::default().tolerance * 1.0001);

    // a coarser run describes the same layer
    let (_, gc, rc) = layer(64);
    for x in [-2.0, -0.5, 0.7, 1.9] {
        let a = r.solution.value(g.cell_containing(&[x]).unwrap());
        let b = rc.solution.value(gc.cell_containing(&[x]).unwrap());
        assert!((a - b).abs() < 0.1, "x = {x}: {a} vs {b}");
    }
}

#[test]
fn residual_is_energy_gradient_per_cell_volume() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (n, m) in [(1usize, 24usize), (2, 6)] {
        let p = ModelParams::new(n, 0.3).unwrap();
        let g = GridGeometry::cube(n, 0.0, 1.0, m).unwrap();
        let w = Potential::quartic();
        let vals: Vec<f64> = (0..g.num_cells()).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let u = GridFunction::new(g.clone(), vals.clone(), ExteriorData::constant(-0.5), (-1.0, 1.0)).unwrap();
        let op = NonlocalOperator::for_function(&p, &u).unwrap();
        let res = el_residual(&p, &u, &w).unwrap();
        let whole = Region::whole(&g);
        let hn = g.cell_volume();
        for i in [0, g.num_cells() / 2, g.num_cells() - 1] {
            let eps = 1e-4;
            let mut plus = vals.clone();
            plus[i] += eps;
            let mut minus = vals.clone();
            minus[i] -= eps;
            let ep = op.total_energy(&u.with_values_in_range(plus).unwrap(), &whole, &w).unwrap().total;
            let em = op.total_energy(&u.with_values_in_range(minus).unwrap(), &whole, &w).unwrap().total;
            let fd = (ep - em) / (2.0 * eps) / hn;
            assert!(((fd - res.raw[i]) / res.raw[i]).abs() < 1e-5, "n={n} cell {i}: {fd} vs {}", res.raw[i]);
        }
    }
}

#[test]
fn converged_minimizer_resists_perturbations() {
    let p = ModelParams::new(1, 0.25).unwrap();
    let g = GridGeometry::interval_box(1, -3.0, 3.0, 48).unwrap();
    let ext = ExteriorData::half_space(&[1.0], 0.0).unwrap();
    let w = Potential::quartic();
    let omega = Region::sub_box(&g, &[8], &[40]).unwrap();
    let opts = MinimizeOptions {
        tolerance: 1e-8,
        ..Default::default()
    };
    let r = minimize(&p, &g, &omega, &ext, &w, &opts).unwrap();
    assert!(r.converged);
    let op = NonlocalOperator::for_function(&p, &r.solution).unwrap();
    let base = r.breakdown.total;
    let u = r.solution.values().to_vec();
    // residual tolerance tau bounds the first-order change by tau * h * |dv|
    let slack = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let mut v = u.clone();
        if trial % 2 == 0 {
            let i = rng.gen_range(8..40);
            v[i] = (v[i] + rng.gen_range(-0.05..0.05)).clamp(-1.0, 1.0);
        } else {
            let c = rng.gen_range(-2.0..2.0);
            let a = rng.gen_range(-0.05..0.05);
            for i in 8..40 {
                let x = g.cell_center(i)[0];
                v[i] = (v[i] + a * (-(x - c) * (x - c)).exp()).clamp(-1.0, 1.0);
            }
        }
        let e = op.total_energy(&r.solution.with_values(v).unwrap(), &omega, &w).unwrap().total;
        assert!(e >= base - slack, "trial {trial}: {e} < {base}");
    }
}

#[test]
fn minimizer_beats_clamped_linear_competitor() {
    let p = ModelParams::new(2, 0.3).unwrap();
    let g = GridGeometry::cube(2, 0.0, 2.0, 16).unwrap();
    let ext = ExteriorData::half_space(&[1.0, 0.0], 0.0).unwrap();
    let w = Potential::quartic();
    let ball = Region::ball(&g, &[0.0, 0.0], 1.5);
    let init = GridFunction::extension_of(g.clone(), ext.clone()).unwrap();
    let op = NonlocalOperator::for_function(&p, &init).unwrap();
    let r = minimize_from(&op, &ball, &init, &w, &MinimizeOptions::default()).unwrap();
    let competitor: Vec<f64> = (0..g.num_cells())
        .map(|i| {
            if ball.contains(i) {
                g.cell_center(i)[0].clamp(-1.0, 1.0)
            } else {
                init.value(i)
            }
        })
        .collect();
    let ec = op.total_energy(&init.with_values(competitor).unwrap(), &ball, &w).unwrap().total;
    assert!(r.breakdown.total <= ec, "{} > {ec}", r.breakdown.total);
}

#[test]
fn energy_shortcut_matches_direct_evaluation() {
    let (p, g, r) = layer(64);
    let direct = kernel::total_energy(&p, &r.solution, &Region::whole(&g), &Potential::quartic()).unwrap();
    let last = *r.energy_trace.last().unwrap();
    assert!(((direct.total - last) / direct.total).abs() < 1e-10);
}

#[test]
fn checkpoint_and_resume() {
    let p = ModelParams::new(1, 0.25).unwrap();
    let g = GridGeometry::interval_box(1, -2.0, 2.0, 32).unwrap();
    let ext = ExteriorData::half_space(&[1.0], 0.0).unwrap();
    let w = Potential::quartic();
    let path = std::env::temp_dir().join(format!("ckpt-{}.json", std::process::id()));
    let opts = MinimizeOptions {
        max_iters: 4,
        checkpoint_every: 2,
        checkpoint_path: Some(path.clone()),
        ..Default::default()
    };
    let first = minimize(&p, &g, &Region::whole(&g), &ext, &w, &opts).unwrap();
    assert_eq!(first.stop, StopReason::MaxIters);
    let saved = GridFunction::load_json(&path).unwrap();
    assert_eq!(saved.values(), first.solution.values());
    let resume = MinimizeOptions {
        init: InitSpec::File {
            path: path.display().to_string(),
        },
        ..Default::default()
    };
    let second = minimize(&p, &g, &Region::whole(&g), &ext, &w, &resume).unwrap();
    std::fs::remove_file(&path).ok();
    assert!(second.converged);
    assert!(second.energy_trace[0] <= first.energy_trace[0]);
}
