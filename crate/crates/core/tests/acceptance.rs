//! Acceptance run: one line per criterion.
//!
//! Exits nonzero when a criterion outside `KNOWN_RED` fails, or when one
//! inside it starts passing (so the list cannot go stale).

mod common;

use std::time::Instant;

use nonlocal_core::barrier::{barrier_sweep, build_barrier, barrier_grid, c_b_ladder, verify_barrier, BarrierParams};
use nonlocal_core::density::{check_doubling, fit_line, minimize_on_ball, volume_profile, VolumeTable};
use nonlocal_core::exterior::ExteriorData;
use nonlocal_core::geometry::{GridGeometry, ModelParams, Region};
use nonlocal_core::grid::{make_indicator, GridFunction};
use nonlocal_core::kernel::{gagliardo_sq, NonlocalOperator};
use nonlocal_core::levelset::{complement_integral, set_sobolev, summation_lemma, DyadicProfile};
use nonlocal_core::minimize::{el_residual, minimize, MinimizeOptions};
use nonlocal_core::potential::{find_grow_constant, Potential};
use nonlocal_core::recursion::{
    check_hypothesis, geometric_grid, propagate_lower_bound, GrowthFunction, RecursionParams,
};
use nonlocal_core::sobolev::sobolev_chain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot be met as stated; see the README.
const KNOWN_RED: &[usize] = &[11];

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1() -> Outcome {
    let p = ModelParams::new(1, 0.25).unwrap();
    let g = GridGeometry::interval_box(1, 0.0, 1.0, 1024).unwrap();
    let f = make_indicator(&(0..1024).collect::<Vec<_>>(), &g).unwrap();
    let gs = gagliardo_sq(&p, &f).unwrap();
    let set = set_sobolev(&p, &g, &Region::whole(&g)).unwrap().lhs;
    let (e1, e2) = ((gs - 16.0).abs() / 16.0, (set - 8.0).abs() / 8.0);
    outcome(
        e1 <= 0.01 && e2 <= 0.01,
        format!("gagliardo = {gs:.6} (rel {e1:.1e}), set integral = {set:.6} (rel {e2:.1e})"),
    )
}

fn c2() -> Outcome {
    let mut ratios = Vec::new();
    let p1 = ModelParams::new(1, 0.25).unwrap();
    let g1 = GridGeometry::cube(1, 0.0, 1.0, 256).unwrap();
    let e1 = Region::ball(&g1, &[0.0], 0.6);
    let r = complement_integral(&p1, &g1, &e1, &[0.0]).unwrap();
    ratios.push(r.integral / r.bound);
    let p2 = ModelParams::new(2, 0.25).unwrap();
    let g2 = GridGeometry::cube(2, 0.0, 1.0, 128).unwrap();
    let e2 = Region::ball(&g2, &[0.0, 0.0], 0.7);
    let r = complement_integral(&p2, &g2, &e2, &[0.0, 0.0]).unwrap();
    ratios.push(r.integral / r.bound);
    let sharp = ratios.iter().all(|q| (0.99..=1.01).contains(q));

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    let cases = [(1usize, 0.25, 64usize), (1, 0.4, 64), (2, 0.25, 16), (2, 0.4, 16)];
    for k in 0..200 {
        let (n, s, m) = cases[k % cases.len()];
        let p = ModelParams::new(n, s).unwrap();
        let g = GridGeometry::cube(n, 0.0, 1.0, m).unwrap();
        let (e, x) = common::random_set_with_point(&g, &mut rng);
        let r = complement_integral(&p, &g, &e, &x).unwrap();
        violations += usize::from(!r.pass);
        min_ratio = min_ratio.min(r.integral / r.bound);
    }
    outcome(
        sharp && violations == 0,
        format!(
            "centered ratios {:.5} (1D), {:.5} (2D); random sets: {violations}/200 violations, min ratio {min_ratio:.4}",
            ratios[0], ratios[1]
        ),
    )
}

fn c3() -> Outcome {
    let prof = DyadicProfile::from_sequence(0, vec![1.0, 0.0]).unwrap();
    let fix = summation_lemma(&prof, 4.0, 1, 0.25).unwrap();
    let exact = fix.lhs == 4.0 / 3.0 && fix.rhs == 1.0 / 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let t = [2.0, 4.0, 8.0][k % 3];
        let (n, s) = [(1, 0.25), (2, 0.25), (2, 0.4)][(k / 3) % 3];
        let a = common::random_decreasing_sequence(&mut rng);
        let prof = DyadicProfile::from_sequence(rng.gen_range(-8..8), a).unwrap();
        let r = summation_lemma(&prof, t, n, s).unwrap();
        violations += usize::from(!r.pass);
        if let Some(q) = r.ratio {
            worst = worst.max(q / r.bound);
        }
    }
    outcome(
        exact && violations == 0,
        format!(
            "fixture lhs = {}, rhs = {}; {violations}/1000 violations, max ratio/bound {worst:.4}",
            fix.lhs, fix.rhs
        ),
    )
}

/// Chain reports as JSON, one per random function.
fn c4_data() -> (usize, usize, f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut json = String::new();
    let mut violations = 0;
    let mut count = 0;
    let mut worst_link: f64 = 0.0;
    for (n, s) in [(1usize, 0.1), (1, 0.25), (1, 0.4), (2, 0.25)] {
        let p = ModelParams::new(n, s).unwrap();
        let m = if n == 1 { 64 } else { 16 };
        let g = GridGeometry::cube(n, 0.0, 1.0, m).unwrap();
        for _ in 0..100 {
            let f = common::random_step_function(&g, &mut rng);
            let r = sobolev_chain(&p, &f).unwrap();
            violations += usize::from(!r.pass);
            count += 1;
            for k in 0..4 {
                if r.chain[k + 1] > 0.0 {
                    worst_link = worst_link.max(r.chain[k] / r.chain[k + 1]);
                }
            }
            json.push_str(&serde_json::to_string(&r).unwrap());
            json.push('\n');
        }
    }
    (violations, count, worst_link, json)
}

fn c4() -> Outcome {
    let (violations, count, worst, _) = c4_data();
    outcome(
        violations == 0,
        format!("{violations}/{count} chain violations, largest link ratio {worst:.4}"),
    )
}

fn c5() -> Outcome {
    let p = ModelParams::new(1, 0.25).unwrap();
    let g = GridGeometry::interval_box(1, -2.0, 2.0, 64).unwrap();
    let ext = ExteriorData::half_space(&[1.0], 0.0).unwrap();
    let w = Potential::quartic();
    let whole = Region::whole(&g);
    let hn = g.cell_volume();
    let op = NonlocalOperator::new(&p, &g, &ext).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(-0.95..0.95)).collect();
        let u = GridFunction::new(g.clone(), vals.clone(), ext.clone(), (-1.0, 1.0)).unwrap();
        let res = el_residual(&p, &u, &w).unwrap();
        let scale = res.raw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let eps = 1e-5;
        for i in 0..64 {
            let mut plus = vals.clone();
            plus[i] += eps;
            let mut minus = vals.clone();
            minus[i] -= eps;
            let ep = op.total_energy(&u.with_values(plus).unwrap(), &whole, &w).unwrap().total;
            let em = op.total_energy(&u.with_values(minus).unwrap(), &whole, &w).unwrap().total;
            let fd = (ep - em) / (2.0 * eps) / hn;
            worst = worst.max((fd - res.raw[i]).abs() / scale);
        }
    }
    outcome(worst <= 1e-5, format!("max relative gradient error {worst:.2e} over 20 x 64 cells"))
}

fn c6() -> Outcome {
    let p = ModelParams::new(1, 0.25).unwrap();
    let w = Potential::quartic();
    let opts = MinimizeOptions::default();
    let g = GridGeometry::interval_box(1, -8.0, 8.0, 512).unwrap();
    let whole = Region::whole(&g);
    let mut pure = true;
    for v in [-1.0, 1.0] {
        let r = minimize(&p, &g, &whole, &ExteriorData::constant(v), &w, &opts).unwrap();
        pure &= r.converged && r.breakdown.total == 0.0 && r.solution.values().iter().all(|x| *x == v);
    }
    let ext = ExteriorData::half_space(&[1.0], 0.0).unwrap();
    let r = minimize(&p, &g, &whole, &ext, &w, &opts).unwrap();
    let u = r.solution.values();
    let monotone = u.windows(2).all(|x| x[0] <= x[1]);
    let odd = (0..256).map(|i| (u[i] + u[511 - i]).abs()).fold(0.0, f64::max);
    let ok = pure && r.converged && r.residual <= 1e-6 && monotone && odd <= 1e-3;
    outcome(
        ok,
        format!(
            "pure phases exact: {pure}; layer residual {:.2e} after {} iterations, monotone {monotone}, odd defect {odd:.1e}",
            r.residual, r.iterations
        ),
    )
}

const RADII: [f64; 4] = [8.0, 16.0, 32.0, 64.0];
const H: f64 = 0.25;

struct LayerRun {
    r: f64,
    energy: f64,
    table: VolumeTable,
    converged: bool,
}

fn layer_runs(s: f64) -> Vec<LayerRun> {
    use rayon::prelude::*;
    let p = ModelParams::new(1, s).unwrap();
    let ext = ExteriorData::half_space(&[1.0], 0.0).unwrap();
    RADII
        .par_iter()
        .map(|&r| {
            let (_, _, rep) =
                minimize_on_ball(&p, &Potential::quartic(), &ext, r, H, &MinimizeOptions::default()).unwrap();
            let radii: Vec<f64> = (0..).map(|k| 2f64.powi(k)).take_while(|t| *t <= r).collect();
            LayerRun {
                r,
                energy: rep.breakdown.total,
                table: volume_profile(&rep.solution, 0.0, &radii).unwrap(),
                converged: rep.converged,
            }
        })
        .collect()
}

fn c7_data() -> String {
    layer_runs(0.25)
        .iter()
        .map(|l| {
            format!(
                "{} {} {}\n",
                l.r,
                serde_json::to_string(&l.energy).unwrap(),
                serde_json::to_string(&l.table).unwrap()
            )
        })
        .collect()
}

fn c7(runs: &[LayerRun]) -> Outcome {
    let q: Vec<f64> = runs.iter().map(|l| l.table.v.last().unwrap() / (2.0 * l.r)).collect();
    let conv = runs.iter().all(|l| l.converged);
    outcome(
        conv && q.iter().all(|x| (0.4..=0.6).contains(x)),
        format!("V(R)/(2R) = {q:.4?} at R = {RADII:?}, all converged: {conv}"),
    )
}

fn c8(runs: &[LayerRun], runs_04: &[LayerRun]) -> Outcome {
    let x: Vec<f64> = RADII.iter().map(|r| r.ln()).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (s, runs) in [(0.25, runs), (0.4, runs_04)] {
        let y: Vec<f64> = runs.iter().map(|l| l.energy.ln()).collect();
        let (slope, _, res) = fit_line(&x, &y);
        let target = 1.0 - 2.0 * s;
        ok &= (slope - target).abs() <= 0.3 && runs.iter().all(|l| l.converged);
        parts.push(format!("s = {s}: slope {slope:.4} (target {target:.2}), fit rms {res:.1e}"));
    }
    outcome(ok, parts.join("; "))
}

fn c9(runs: &[LayerRun]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for l in runs {
        let d = check_doubling(&l.table, 1, 0.25).unwrap();
        let (c, med) = (d.c, d.median);
        let stable = matches!((c, med), (Some(c), Some(m)) if c.is_finite() && c <= 2.0 * m);
        ok &= stable;
        parts.push(format!("R={}: C={:.4}", l.r, c.unwrap_or(f64::NAN)));
    }
    let radii: Vec<f64> = (0..12).map(|k| 2f64.powi(k)).collect();
    let syn = check_doubling(&VolumeTable::synthetic(radii.clone(), radii).unwrap(), 1, 0.25).unwrap();
    let exact = syn.rows.iter().all(|r| (r.ratio.unwrap() - 0.5).abs() <= 1e-6);
    outcome(ok && exact, format!("{}; synthetic V = r ratio 0.5 everywhere: {exact}", parts.join(", ")))
}

fn c10() -> Outcome {
    let v = GrowthFunction::Power { scale: 1.0, exponent: 2.0 };
    let p = RecursionParams::new(0.5, 256.0, 2.0, 2.0, 16.0, 2.0).unwrap();
    let hyp = check_hypothesis(&v, &p, &geometric_grid(16.0, 2.0, 41)).unwrap();
    let chain = propagate_lower_bound(&v, &p, 40).unwrap();
    let k = GrowthFunction::Constant { value: 2.0 };
    let q = RecursionParams::new(0.5, 2.0, 2.0, 2.0, 10.0, 2.0).unwrap();
    let fail = check_hypothesis(&k, &q, &geometric_grid(10.0, 1.25, 80)).unwrap();
    let ok = hyp.pass && (chain.exponent - 2.0).abs() <= 0.05 && !fail.pass && fail.first_violation.is_some();
    outcome(
        ok,
        format!(
            "power law: hypothesis {}, exponent {:.4} after 40 steps; constant V fails at r = {:?}",
            hyp.pass, chain.exponent, fail.first_violation
        ),
    )
}

fn c11() -> Outcome {
    let p = ModelParams::new(1, 0.25).unwrap();
    let c = find_grow_constant(&Potential::quartic()).unwrap();
    let tau = c / 4.0;
    let radii = [16.0, 32.0, 64.0, 128.0];
    // one C_b for the whole sweep, admissible at every radius
    let c_b = *c_b_ladder(radii[0], p.s, 2.0, 40).last().unwrap();
    let sweep = barrier_sweep(&p, &radii, tau, c_b, |_| 0.5).unwrap();
    let bp = BarrierParams::new(radii[0], tau, c_b).unwrap();
    let w = build_barrier(&p, &bp, &barrier_grid(1, radii[0], 0.5).unwrap()).unwrap();
    let al2 = verify_barrier(&p, &w, &bp).unwrap();
    let al2_exact = (al2.al2_constant - al2.al2_expected).abs() < 1e-12 && al2.al2_lower_exact;
    let passing: Vec<f64> = sweep
        .rows
        .iter()
        .filter(|r| r.al1_pass && r.admissible && !r.degenerate)
        .map(|r| r.radius)
        .collect();
    let worst: Vec<String> = sweep.rows.iter().map(|r| format!("{:.3}", r.worst_margin)).collect();
    let ext = barrier_sweep(&p, &[2048.0, 8192.0, 32768.0], tau, 64.0, |r| r / 256.0).unwrap();
    outcome(
        al2_exact && sweep.nonincreasing && !passing.is_empty(),
        format!(
            "tau = {tau}, C_b = {c_b}: al2 exact {al2_exact}; worst margins [{}] nonincreasing {}; passing radii {passing:?}; \
             extended sweep C_b = 64: R0 = {:?}",
            worst.join(", "),
            sweep.nonincreasing,
            ext.r0
        ),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn c12() -> Outcome {
    let mut c4s = Vec::new();
    let mut c7s = Vec::new();
    for t in [1, 4, 8] {
        c4s.push(in_pool(t, || c4_data().3));
        c7s.push(in_pool(t, c7_data));
    }
    let same4 = c4s.windows(2).all(|w| w[0] == w[1]);
    let same7 = c7s.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same4 && same7,
        format!(
            "criterion 4 output ({} bytes) identical: {same4}; criterion 7 output ({} bytes) identical: {same7}",
            c4s[0].len(),
            c7s[0].len()
        ),
    )
}

fn main() {
    let names = [
        "kernel anchor",
        "complement sharpness",
        "summation lemma",
        "Sobolev chain",
        "Euler-Lagrange consistency",
        "minimizer sanity",
        "density plateau",
        "energy growth",
        "doubling",
        "recursion engine",
        "barrier",
        "determinism",
    ];
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut run = |id: usize, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "[{}] {:>2} {}: {} ({secs:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            id,
            names[id - 1],
            o.detail
        );
        results.push((id, o, secs));
    };
    run(1, &mut c1);
    run(2, &mut c2);
    run(3, &mut c3);
    run(4, &mut c4);
    run(5, &mut c5);
    run(6, &mut c6);
    let t = Instant::now();
    let runs = layer_runs(0.25);
    let runs_04 = layer_runs(0.4);
    println!("       layer sweeps solved in {:.1} s", t.elapsed().as_secs_f64());
    run(7, &mut || c7(&runs));
    run(8, &mut || c8(&runs, &runs_04));
    run(9, &mut || c9(&runs));
    run(10, &mut c10);
    run(11, &mut c11);
    run(12, &mut c12);

    let mut unexpected = Vec::new();
    for (id, o, _) in &results {
        if o.pass == KNOWN_RED.contains(id) {
            unexpected.push(*id);
        }
    }
    let passed = results.iter().filter(|r| r.1.pass).count();
    println!("{passed}/12 criteria pass; known red: {KNOWN_RED:?}");
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
