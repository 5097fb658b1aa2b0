//! One function per subcommand. Each writes its files and returns the failed
//! assertions; errors are reserved for unusable input.

use std::path::Path;
use std::time::Instant;

use nonlocal_core::barrier::{barrier_grid, barrier_sweep, build_barrier, c_b_ladder, search_c_b, verify_barrier, BarrierParams};
use nonlocal_core::density::{
    check_doubling, check_la8, density_theorem_check, energy_growth_check, minimize_on_ball, volume_profile,
};
use nonlocal_core::error::Error;
use nonlocal_core::geometry::{GridGeometry, ModelParams, Region};
use nonlocal_core::grid::GridFunction;
use nonlocal_core::kernel::{gagliardo_sq, KernelTable, QuadratureErrorModel};
use nonlocal_core::levelset::{complement_integral, level_measures, os2_check, set_sobolev, summation_lemma, DyadicProfile};
use nonlocal_core::minimize::minimize;
use nonlocal_core::potential::{check_wcond, find_grow_constant, find_grow_constant_with, Potential};
use nonlocal_core::recursion::{check_hypothesis, geometric_grid, propagate_lower_bound};
use nonlocal_core::sobolev::{estimate_best_constant, sobolev_chain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{ExperimentConfig, SetSpec};
use crate::report::{num, Chart, Output, Reason};
use crate::CliError;

pub const DENSITY_GATE: &str = "density subcommands require s ∈ (0,1/2)";

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub hash: &'a str,
    /// Directory of the config file, for relative input paths.
    pub base: Option<&'a Path>,
    pub out: Output,
}

fn reason(check: &str, detail: impl Into<String>) -> Reason {
    Reason {
        check: check.into(),
        detail: detail.into(),
    }
}

fn params(cfg: &ExperimentConfig) -> Result<ModelParams, CliError> {
    Ok(ModelParams::new(cfg.model.n, cfg.model.s)?.with_quadrature(cfg.model.quadrature)?)
}

fn error_model(p: &ModelParams, g: &GridGeometry) -> Result<QuadratureErrorModel, CliError> {
    Ok(KernelTable::get(p, &g.cells_per_axis)?.error_model().clone())
}

/// Error model of a one-cell grid, for reports without a kernel evaluation.
fn nominal_error_model(cfg: &ExperimentConfig) -> Option<QuadratureErrorModel> {
    let p = params(cfg).ok()?;
    KernelTable::get(&p, &vec![1; p.n]).ok().map(|t| t.error_model().clone())
}

fn potential(cfg: &ExperimentConfig) -> Result<Potential, CliError> {
    Ok(Potential::from_spec(&cfg.potential)?)
}

pub fn minimize_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    let p = params(cfg)?;
    let g = cfg.grid()?;
    let w = potential(cfg)?;
    let omega = Region::whole(&g);
    let rep = minimize(&p, &g, &omega, &cfg.exterior, &w, &cfg.minimize)?;
    let mut reasons = Vec::new();
    if !rep.converged {
        reasons.push(reason(
            "converged",
            format!("stopped ({:?}) with residual {:e} after {} iterations", rep.stop, rep.residual, rep.iterations),
        ));
    }
    rep.solution.save_json(&ctx.out.dir().join("solution.json"))?;
    let rows: Vec<Vec<String>> = rep
        .energy_trace
        .iter()
        .enumerate()
        .map(|(k, e)| vec![k.to_string(), num(*e)])
        .collect();
    ctx.out.csv("energy_trace.csv", &["iteration", "energy"], &rows)?;
    let pts = rep.energy_trace.iter().enumerate().map(|(k, e)| (k as f64, *e)).collect();
    ctx.out.svg("energy_trace.svg", &Chart::new("Energy along the iteration", "iteration", "energy").line("E", pts))?;
    let body = json!({
        "converged": rep.converged,
        "stop": rep.stop,
        "residual": rep.residual,
        "iterations": rep.iterations,
        "energy": rep.breakdown,
        "label": rep.label,
    });
    ctx.out.summary("minimize", ctx.hash, Some(&error_model(&p, &g)?), &reasons, body)?;
    Ok(reasons)
}

pub fn density_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    if !(cfg.model.s > 0.0 && cfg.model.s < 0.5) {
        return Err(CliError::Config(DENSITY_GATE.into()));
    }
    let d = &cfg.density;
    let p = params(cfg)?;
    let w = potential(cfg)?;
    let r_max = d.radii.iter().copied().fold(f64::NAN, f64::max);
    if !(r_max > 0.0) {
        return Err(CliError::Config("density.radii must contain a positive radius".into()));
    }
    let (g, _, rep) = minimize_on_ball(&p, &w, &cfg.exterior, r_max, d.h, &cfg.minimize)?;
    let mut reasons = Vec::new();
    if !rep.converged {
        reasons.push(reason("converged", format!("R = {r_max}: residual {:e}", rep.residual)));
    }
    let u = &rep.solution;
    u.save_json(&ctx.out.dir().join("solution.json"))?;
    let n = p.n as i32;
    let mut radii: Vec<f64> = (0..).map(|k| 2f64.powi(k)).take_while(|r| *r <= r_max).collect();
    if radii.last() != Some(&r_max) {
        radii.push(r_max);
    }
    let table = volume_profile(u, d.theta2, &radii)?;
    let rows: Vec<Vec<String>> = (0..radii.len())
        .map(|i| {
            let r = table.radii[i];
            vec![num(r), num(table.v[i]), num(table.boundary_error[i]), num(table.v[i] / r.powi(n))]
        })
        .collect();
    ctx.out.csv("volume.csv", &["r", "v", "boundary_error", "v_over_rn"], &rows)?;
    let pts = table.radii.iter().zip(&table.v).map(|(r, v)| (*r, v / r.powi(n))).collect();
    ctx.out.svg("volume.svg", &Chart::new("Volume ratio V(R)/R^n", "R", "V(R)/R^n").line("V/R^n", pts))?;

    let doubling = check_doubling(&table, p.n, p.s)?;
    match (doubling.c, doubling.median) {
        (Some(c), Some(m)) if c.is_finite() && c <= 2.0 * m => {}
        (c, m) => reasons.push(reason("doubling", format!("C = {c:?} against twice the median {m:?}"))),
    }
    let rows: Vec<Vec<String>> = doubling
        .rows
        .iter()
        .map(|r| vec![num(r.r), r.ratio.map(num).unwrap_or_default(), r.flagged.to_string()])
        .collect();
    ctx.out.csv("doubling.csv", &["r", "ratio", "flagged"], &rows)?;

    let la8 = check_la8(&table, p.n, p.s, d.k)?;
    let rows: Vec<Vec<String>> = la8
        .rows
        .iter()
        .map(|r| vec![num(r.r), num(r.rhs), num(r.lhs_shape), r.ratio.map(num).unwrap_or_default()])
        .collect();
    ctx.out.csv("la8.csv", &["r", "rhs", "lhs_shape", "ratio"], &rows)?;

    let dens = density_theorem_check(&p, u, d.theta1, d.theta2, &radii, d.floor)?;
    if let Some(r) = dens.r_bar {
        reasons.push(reason("density", format!("V(R)/R^n below the floor {} up to R = {r}", d.floor)));
    }

    let growth = if d.radii.len() >= 4 {
        let gr = energy_growth_check(&p, &w, &cfg.exterior, &d.radii, d.h, &cfg.minimize)?;
        match gr.slope {
            Some(sl) if (sl - gr.target).abs() <= d.growth_tolerance => {}
            Some(sl) => reasons.push(reason(
                "energy_growth",
                format!("exponent {sl} differs from {} by more than {}", gr.target, d.growth_tolerance),
            )),
            None => reasons.push(reason("energy_growth", "zero energy at some radius: no exponent")),
        }
        let rows: Vec<Vec<String>> = (0..gr.radii.len())
            .map(|i| vec![num(gr.radii[i]), num(gr.energies[i]), gr.iterations[i].to_string()])
            .collect();
        ctx.out.csv("growth.csv", &["r", "energy", "iterations"], &rows)?;
        let pts = gr
            .radii
            .iter()
            .zip(&gr.energies)
            .map(|(r, e)| (r.ln(), e.ln()))
            .collect();
        ctx.out.svg("growth.svg", &Chart::new("Energy growth", "log R", "log E(R)").line("log E", pts))?;
        Some(gr)
    } else {
        None
    };
    let body = json!({
        "radius": r_max,
        "h": d.h,
        "converged": rep.converged,
        "residual": rep.residual,
        "volume": table,
        "doubling": doubling,
        "la8": la8,
        "density": dens,
        "growth": growth,
    });
    ctx.out.summary("density", ctx.hash, Some(&error_model(&p, &g)?), &reasons, body)?;
    Ok(reasons)
}

/// Compactly supported step function on a random sub-box, split into slabs
/// along the first axis.
fn random_step_function(g: &GridGeometry, rng: &mut ChaCha8Rng) -> Result<GridFunction, CliError> {
    let n = g.dim();
    let mut lo = vec![0; n];
    let mut hi = vec![0; n];
    for k in 0..n {
        let m = g.cells_per_axis[k];
        lo[k] = rng.gen_range(0..m);
        hi[k] = rng.gen_range(lo[k] + 1..=m);
    }
    let slabs = rng.gen_range(1..=4usize);
    let values: Vec<f64> = (0..slabs)
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                let mag = 2f64.powf(rng.gen_range(-3.0..3.0));
                if rng.gen_bool(0.5) { mag } else { -mag }
            }
        })
        .collect();
    let width = hi[0] - lo[0];
    let vals = (0..g.num_cells())
        .map(|c| {
            let idx = g.multi_index(c);
            if (0..n).all(|k| idx[k] >= lo[k] && idx[k] < hi[k]) {
                values[((idx[0] - lo[0]) * slabs / width).min(slabs - 1)]
            } else {
                0.0
            }
        })
        .collect();
    let range = values.iter().fold((0.0f64, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(GridFunction::new(g.clone(), vals, nonlocal_core::exterior::ExteriorData::Zero, range)?)
}

pub fn sobolev_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    let p = params(cfg)?;
    let f = cfg.input_function(ctx.base)?;
    let rep = sobolev_chain(&p, &f)?;
    let mut reasons = Vec::new();
    let rows: Vec<Vec<String>> = (0..4)
        .map(|k| vec![k.to_string(), num(rep.chain[k]), num(rep.chain[k + 1]), rep.links[k].to_string()])
        .collect();
    for k in (0..4).filter(|k| !rep.links[*k]) {
        reasons.push(reason("sobolev_chain", format!("link {k}: {} > {}", rep.chain[k], rep.chain[k + 1])));
    }
    ctx.out.csv("chain.csv", &["link", "lhs", "rhs", "holds"], &rows)?;
    let best = if cfg.sobolev.random_trials > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let g = f.geometry().clone();
        let b = estimate_best_constant(&p, cfg.sobolev.random_trials, |_| {
            random_step_function(&g, &mut rng).map_err(|e| Error::InvalidParam(e.to_string()))
        })?;
        if b.best > b.proof_constant {
            reasons.push(reason(
                "best_constant",
                format!("ratio {} exceeds the proof constant {}", b.best, b.proof_constant),
            ));
        }
        let rows: Vec<Vec<String>> = b.ratios.iter().enumerate().map(|(i, r)| vec![i.to_string(), num(*r)]).collect();
        ctx.out.csv("best_constant.csv", &["trial", "ratio"], &rows)?;
        Some(b)
    } else {
        None
    };
    let body = json!({ "chain": rep, "best_constant": best });
    ctx.out.summary("sobolev-check", ctx.hash, Some(&error_model(&p, f.geometry())?), &reasons, body)?;
    Ok(reasons)
}

/// Nonincreasing nonnegative sequence ending in zero.
fn random_decreasing_sequence(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = rng.gen_range(1..=12usize);
    let mut a = Vec::with_capacity(len + 1);
    let mut cur = 2f64.powf(rng.gen_range(-4.0..6.0));
    for _ in 0..len {
        a.push(cur);
        cur *= rng.gen_range(0.0..=1.0);
    }
    a.push(0.0);
    a
}

pub fn levelset_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    let p = params(cfg)?;
    let f = cfg.input_function(ctx.base)?;
    let profile = level_measures(&f, None)?;
    ctx.out.write_text("profile.csv", &profile.to_csv()?)?;
    let mut reasons = Vec::new();
    let os2 = os2_check(&p, &f)?;
    if !os2.pass {
        reasons.push(reason("os2", format!("gagliardo {} below {}", os2.gagliardo, os2.c_check * os2.dyadic_bound)));
    }
    let mut rows = Vec::new();
    let mut check = |source: String, prof: &DyadicProfile, t: f64, reasons: &mut Vec<Reason>| -> Result<(), CliError> {
        let r = summation_lemma(prof, t, p.n, p.s)?;
        if !r.pass {
            reasons.push(reason("summation", format!("{source}, T = {t}: {} > {} * {}", r.lhs, r.bound, r.rhs)));
        }
        rows.push(vec![source, num(t), num(r.lhs), num(r.rhs), num(r.bound), r.pass.to_string()]);
        Ok(())
    };
    for &t in &cfg.levelset.t_values {
        check("input".into(), &profile, t, &mut reasons)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for k in 0..cfg.levelset.random_sequences {
        let prof = DyadicProfile::from_sequence(rng.gen_range(-8..8), random_decreasing_sequence(&mut rng))?;
        for &t in &cfg.levelset.t_values {
            check(format!("random_{k}"), &prof, t, &mut reasons)?;
        }
    }
    ctx.out.csv("summation.csv", &["source", "t", "lhs", "rhs", "bound", "pass"], &rows)?;
    let body = json!({ "profile": profile, "os2": os2, "summation_checks": rows.len() });
    ctx.out.summary("levelset", ctx.hash, Some(&error_model(&p, f.geometry())?), &reasons, body)?;
    Ok(reasons)
}

fn region(spec: &SetSpec, f: &GridFunction) -> Result<Region, CliError> {
    let g = f.geometry();
    Ok(match spec {
        SetSpec::Support => f.support(),
        SetSpec::Ball { center, radius } => {
            if center.len() != g.dim() {
                return Err(CliError::Config("ball center has the wrong dimension".into()));
            }
            Region::ball(g, center, *radius)
        }
        SetSpec::Box { lo, hi } => {
            if lo.len() != g.dim() || hi.len() != g.dim() {
                return Err(CliError::Config("box bounds have the wrong dimension".into()));
            }
            Region::sub_box(g, lo, hi)?
        }
    })
}

pub fn set_sobolev_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    let p = params(cfg)?;
    let f = cfg.input_function(ctx.base)?;
    let g = f.geometry().clone();
    let e = region(&cfg.set_sobolev.set, &f)?;
    if e.is_empty() {
        return Err(CliError::Config("the configured set is empty".into()));
    }
    let mut reasons = Vec::new();
    let set = set_sobolev(&p, &g, &e)?;
    if !set.pass {
        reasons.push(reason("set_sobolev", format!("{} < {}", set.lhs, set.rhs)));
    }
    let point = match &cfg.set_sobolev.point {
        Some(x) => {
            let r = complement_integral(&p, &g, &e, x)?;
            if !r.pass {
                reasons.push(reason("complement", format!("{} < {} at {x:?}", r.integral, r.bound)));
            }
            Some(r)
        }
        None => None,
    };
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for k in 0..cfg.set_sobolev.random_sets {
        let n = g.dim();
        let mut lo = vec![0; n];
        let mut hi = vec![0; n];
        let mut x = vec![0.0; n];
        for a in 0..n {
            let m = g.cells_per_axis[a];
            lo[a] = rng.gen_range(0..m);
            hi[a] = rng.gen_range(lo[a] + 1..=m);
            let (l, h) = (g.lo(a) + lo[a] as f64 * g.h(), g.lo(a) + hi[a] as f64 * g.h());
            x[a] = l + (h - l) * rng.gen_range(0.05..0.95);
        }
        let e = Region::sub_box(&g, &lo, &hi)?;
        let r = complement_integral(&p, &g, &e, &x)?;
        if !r.pass {
            reasons.push(reason("complement", format!("random set {k}: {} < {}", r.integral, r.bound)));
        }
        rows.push(vec![k.to_string(), num(r.measure), num(r.integral), num(r.bound), r.pass.to_string()]);
    }
    if !rows.is_empty() {
        ctx.out.csv("random_sets.csv", &["set", "measure", "integral", "bound", "pass"], &rows)?;
    }
    let body = json!({ "set": set, "complement": point, "random_sets": rows.len() });
    ctx.out.summary("set-sobolev", ctx.hash, Some(&error_model(&p, &g)?), &reasons, body)?;
    Ok(reasons)
}

pub fn barrier_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    let b = &cfg.barrier;
    let p = params(cfg)?;
    p.require_density()?;
    let tau = match b.tau {
        Some(t) => t,
        None => find_grow_constant(&potential(cfg)?)? / 4.0,
    };
    let g = barrier_grid(p.n, b.radius, b.h)?;
    let mut reasons = Vec::new();
    let mut tried = Vec::new();
    let c_b = match b.c_b {
        Some(c) => c,
        None => match search_c_b(&p, &g, b.radius, tau, b.max_steps) {
            Ok(found) => {
                tried = found.tried;
                found.c_b
            }
            Err(Error::Solver(msg)) => {
                reasons.push(reason("c_b_search", msg));
                *c_b_ladder(b.radius, p.s, 2.0, b.max_steps)
                    .last()
                    .ok_or_else(|| CliError::Config(format!("no admissible C_b at R = {}", b.radius)))?
            }
            Err(e) => return Err(e.into()),
        },
    };
    let bp = BarrierParams::new(b.radius, tau, c_b)?;
    let w = build_barrier(&p, &bp, &g)?;
    let rep = verify_barrier(&p, &w, &bp)?;
    if !rep.al1_pass {
        reasons.push(reason("al1", format!("margin {} at |x| = {}", rep.worst_margin, rep.worst_radius)));
    }
    if !rep.admissible {
        reasons.push(reason("admissible", format!("C_b = {c_b} is not admissible at R = {}", b.radius)));
    }
    if rep.degenerate {
        reasons.push(reason("degenerate", "barrier is identically 1"));
    }
    let rows: Vec<Vec<String>> = rep
        .margins
        .iter()
        .map(|m| vec![num(m.radius), num(m.value), num(m.frac_laplacian), num(m.margin)])
        .collect();
    ctx.out.csv("margins.csv", &["radius", "w", "frac_laplacian", "margin"], &rows)?;
    let pts = rep.margins.iter().map(|m| (m.radius, m.margin)).collect();
    ctx.out.svg("margins.svg", &Chart::new("Barrier margin", "|x|", "margin").line("margin", pts))?;
    let sweep = if b.sweep_radii.is_empty() {
        None
    } else {
        let sw = barrier_sweep(&p, &b.sweep_radii, tau, c_b, |_| b.h)?;
        for r in sw.rows.iter().filter(|r| !(r.al1_pass && r.admissible && !r.degenerate)) {
            reasons.push(reason("sweep", format!("R = {}: worst margin {}", r.radius, r.worst_margin)));
        }
        let rows: Vec<Vec<String>> = sw
            .rows
            .iter()
            .map(|r| {
                vec![
                    num(r.radius),
                    num(r.worst_margin),
                    num(r.worst_radius),
                    r.al1_pass.to_string(),
                    r.admissible.to_string(),
                    r.degenerate.to_string(),
                ]
            })
            .collect();
        ctx.out.csv(
            "sweep.csv",
            &["radius", "worst_margin", "worst_radius", "al1_pass", "admissible", "degenerate"],
            &rows,
        )?;
        let pts = sw.rows.iter().map(|r| (r.radius, r.worst_margin)).collect();
        ctx.out.svg("sweep.svg", &Chart::new("Worst margin against R", "R", "worst margin").line("worst", pts))?;
        Some(sw)
    };
    let body = json!({ "tau": tau, "c_b": c_b, "tried": tried, "report": rep, "sweep": sweep });
    ctx.out.summary("barrier-verify", ctx.hash, Some(&error_model(&p, &g)?), &reasons, body)?;
    Ok(reasons)
}

pub fn recursion_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    let r = &cfg.recursion;
    if r.grid_count == 0 {
        return Err(CliError::Config("recursion.grid_count must be positive".into()));
    }
    let grid = geometric_grid(r.params.r_o, r.grid_ratio, r.grid_count);
    let hyp = check_hypothesis(&r.growth, &r.params, &grid)?;
    let mut reasons = Vec::new();
    if let Some(at) = hyp.first_violation {
        reasons.push(reason("hypothesis", format!("fails at r = {at}")));
    }
    let rows: Vec<Vec<String>> = hyp
        .rows
        .iter()
        .map(|h| vec![num(h.r), num(h.lhs), num(h.rhs), h.holds.to_string()])
        .collect();
    ctx.out.csv("hypothesis.csv", &["r", "lhs", "rhs", "holds"], &rows)?;
    let chain = match propagate_lower_bound(&r.growth, &r.params, r.steps) {
        Ok(c) => {
            let rows: Vec<Vec<String>> = (0..c.r.len())
                .map(|j| vec![j.to_string(), num(c.r[j]), num(c.lower[j]), c.v[j].map(num).unwrap_or_default()])
                .collect();
            ctx.out.csv("chain.csv", &["j", "r", "lower", "v"], &rows)?;
            let pts = c.r.iter().zip(&c.lower).map(|(r, l)| (r.ln(), l.ln())).collect();
            ctx.out.svg("chain.svg", &Chart::new("Lower bound chain", "log r", "log L").line("log L_j", pts))?;
            Some(c)
        }
        Err(Error::Hypothesis(msg)) => {
            reasons.push(reason("chain", msg));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let body = json!({ "hypothesis": hyp, "chain": chain });
    ctx.out.summary("recursion", ctx.hash, nominal_error_model(cfg).as_ref(), &reasons, body)?;
    Ok(reasons)
}

pub fn grow_constant_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    let w = potential(cfg)?;
    let mut reasons = Vec::new();
    let wc = check_wcond(&w, cfg.grow_constant.wcond_mesh)?;
    if let Some(v) = &wc.worst {
        reasons.push(reason("wcond", format!("{} violated at t = {} (value {})", v.condition, v.t, v.value)));
    }
    let rows: Vec<Vec<String>> = wc
        .violations
        .iter()
        .map(|v| vec![v.condition.clone(), num(v.t), num(v.value)])
        .collect();
    ctx.out.csv("wcond_violations.csv", &["condition", "t", "value"], &rows)?;
    let c = match find_grow_constant_with(&w, &cfg.grow_constant.search) {
        Ok(c) => Some(c),
        Err(Error::NoAdmissibleConstant(floor)) => {
            reasons.push(reason("grow", format!("no constant down to {floor:e}")));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let samples: Vec<(f64, f64)> = (0..=200).map(|k| -1.0 + k as f64 / 100.0).map(|t| (t, w.value(t))).collect();
    ctx.out.svg("potential.svg", &Chart::new(&w.describe(), "t", "W(t)").line("W", samples))?;
    let body = json!({
        "potential": w.describe(),
        "wcond": wc,
        "c_grow": c,
        "tau": c.map(|c| c / 4.0),
    });
    ctx.out.summary("grow-constant", ctx.hash, nominal_error_model(cfg).as_ref(), &reasons, body)?;
    Ok(reasons)
}

pub fn bench_cmd(ctx: &mut Context) -> Result<Vec<Reason>, CliError> {
    let cfg = ctx.cfg;
    let p = params(cfg)?;
    let b = &cfg.bench;
    if b.sizes.is_empty() || b.threads.is_empty() || b.repeats == 0 {
        return Err(CliError::Config("bench needs sizes, threads and repeats".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let mut reasons = Vec::new();
    let mut last_g = None;
    for &m in &b.sizes {
        let g = GridGeometry::cube(p.n, 0.0, 1.0, m)?;
        let vals: Vec<f64> = (0..g.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = GridFunction::new(g.clone(), vals, nonlocal_core::exterior::ExteriorData::Zero, (-1.0, 1.0))?;
        // warm the weight table cache outside the timings
        let reference = gagliardo_sq(&p, &f)?;
        for &t in &b.threads {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut times = Vec::new();
            let mut value = reference;
            for _ in 0..b.repeats {
                let start = Instant::now();
                value = pool.install(|| gagliardo_sq(&p, &f))?;
                times.push(start.elapsed().as_secs_f64());
            }
            if value != reference {
                reasons.push(reason("determinism", format!("{m} cells, {t} threads: {value} != {reference}")));
            }
            times.sort_by(f64::total_cmp);
            rows.push(vec![
                g.num_cells().to_string(),
                t.to_string(),
                num(times[0]),
                num(times[times.len() / 2]),
                num(value),
            ]);
        }
        last_g = Some(g);
    }
    ctx.out.csv("bench.csv", &["cells", "threads", "seconds_min", "seconds_median", "value"], &rows)?;
    let em = match &last_g {
        Some(g) => Some(error_model(&p, g)?),
        None => None,
    };
    let body = json!({ "runs": rows.len(), "note": "timings vary between runs; values must not" });
    ctx.out.summary("bench", ctx.hash, em.as_ref(), &reasons, body)?;
    Ok(reasons)
}
