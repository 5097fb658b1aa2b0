//! Independent reference computations for the integration tests.
#![allow(dead_code)]

/// Tanh-sinh (double exponential) quadrature on `[a, b]`; tolerates
/// integrable endpoint singularities.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let mut step = 0.5;
    let mut prev = f64::NAN;
    for _ in 0..10 {
        let mut acc = 0.0;
        let kmax = (6.0 / step) as i64;
        for k in -kmax..=kmax {
            let t = k as f64 * step;
            let u = pi2 * t.sinh();
            let x = u.tanh();
            let w = pi2 * t.cosh() / u.cosh().powi(2);
            // distance to the nearer endpoint, computed without cancellation
            let e = 1.0 / (u.abs().exp() * u.abs().cosh());
            if e * c == 0.0 {
                continue;
            }
            let y = if x < 0.0 { a + c * e } else if x > 0.0 { b - c * e } else { mid };
            let v = f(y);
            if v.is_finite() {
                acc += w * v;
            }
        }
        let cur = acc * c * step;
        if (cur - prev).abs() <= 1e-12 * cur.abs() {
            return cur;
        }
        prev = cur;
        step *= 0.5;
    }
    prev
}

/// `\int_a^\infty f` for `a > 0` through `r = a / v`, which keeps a
/// singularity of `f` near 0 at scale `a` resolved.
pub fn semi_infinite_scaled<F: Fn(f64) -> f64>(f: F, a: f64) -> f64 {
    tanh_sinh(|v| f(a / v) * a / (v * v), 0.0, 1.0)
}

/// `\int_a^\infty f`, mapped onto a finite interval.
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64) -> f64 {
    tanh_sinh(|t| {
        let one = 1.0 - t;
        f(a + t / one) / (one * one)
    }, 0.0, 1.0)
}

/// `\int_a^b \int_c^d |x - y|^{-1-2s} dy dx` for disjoint intervals with `b <= c`, closed form.
pub fn interval_pair(s: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let e = 1.0 - 2.0 * s;
    let g = |t: f64| if t > 0.0 { t.powf(e) } else { 0.0 };
    (g(c - a) - g(c - b) - g(d - a) + g(d - b)) / (2.0 * s * e)
}

/// `\int_a^b \int_c^\infty |x - y|^{-1-2s} dy dx`, `b <= c`.
pub fn interval_to_infinity(s: f64, a: f64, b: f64, c: f64) -> f64 {
    let e = 1.0 - 2.0 * s;
    ((c - a).powf(e) - (c - b).powf(e)) / (2.0 * s * e)
}

/// Composite Gauss-Legendre rule on `[a, b]`, geometrically graded toward the
/// chosen endpoints (for integrands with integrable endpoint singularities).
pub fn graded_rule(a: f64, b: f64, grade_a: bool, grade_b: bool) -> Vec<(f64, f64)> {
    let (x, w) = nonlocal_core::quadrature::gauss_legendre(6);
    let levels = 40;
    let mid = 0.5 * (a + b);
    let mut pieces = Vec::new();
    let mut half = |lo: f64, hi: f64, graded: bool, toward_lo: bool| {
        if !graded {
            pieces.push((lo, hi));
            return;
        }
        let len = hi - lo;
        let mut edge = 0.5f64.powi(levels);
        let first = if toward_lo { (lo, lo + len * edge) } else { (hi - len * edge, hi) };
        pieces.push(first);
        for _ in 0..levels {
            let next = 2.0 * edge;
            pieces.push(if toward_lo {
                (lo + len * edge, lo + len * next)
            } else {
                (hi - len * next, hi - len * edge)
            });
            edge = next;
        }
    };
    half(a, mid, grade_a, true);
    half(mid, b, grade_b, false);
    let mut out = Vec::new();
    for (lo, hi) in pieces {
        let c = 0.5 * (hi - lo);
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + c * (xi + 1.0), c * wi));
        }
    }
    out
}

use nonlocal_core::exterior::ExteriorData;
use nonlocal_core::geometry::{GridGeometry, Region};
use nonlocal_core::grid::GridFunction;
use rand::Rng;

/// Compactly supported step function: a random sub-box split into slabs
/// along the first axis, each slab carrying a random value (zero included).
pub fn random_step_function<R: Rng>(g: &GridGeometry, rng: &mut R) -> GridFunction {
    let n = g.dim();
    let m: Vec<usize> = (0..n).map(|k| ((g.hi(k) - g.lo(k)) / g.h()).round() as usize).collect();
    let mut lo = vec![0usize; n];
    let mut hi = vec![0usize; n];
    for k in 0..n {
        let a = rng.gen_range(0..m[k]);
        let b = rng.gen_range(a + 1..=m[k]);
        lo[k] = a;
        hi[k] = b;
    }
    let slabs = rng.gen_range(1..=4usize);
    let values: Vec<f64> = (0..slabs)
        .map(|_| {
            if rng.gen_bool(0.15) {
                0.0
            } else {
                let mag = 2f64.powf(rng.gen_range(-3.0..3.0));
                if rng.gen_bool(0.5) { mag } else { -mag }
            }
        })
        .collect();
    let mut vals = vec![0.0; g.num_cells()];
    for (i, v) in vals.iter_mut().enumerate() {
        let idx = g.multi_index(i);
        if (0..n).all(|k| idx[k] >= lo[k] && idx[k] < hi[k]) {
            let t = (idx[0] - lo[0]) * slabs / (hi[0] - lo[0]);
            *v = values[t];
        }
    }
    GridFunction::with_auto_range(g.clone(), vals, ExteriorData::Zero).unwrap()
}

/// Nonincreasing nonnegative sequence ending in zero.
pub fn random_decreasing_sequence<R: Rng>(rng: &mut R) -> Vec<f64> {
    let len = rng.gen_range(1..=12usize);
    let mut a = 2f64.powf(rng.gen_range(-4.0..6.0));
    let mut out = Vec::with_capacity(len + 1);
    for _ in 0..len {
        out.push(a);
        a *= match rng.gen_range(0..4) {
            0 => 1.0,
            1 => rng.gen_range(0.0..1.0),
            _ => rng.gen_range(0.3..1.0),
        };
    }
    out.push(0.0);
    out
}

/// Random union of boxes together with a point interior to it.
pub fn random_set_with_point<R: Rng>(g: &GridGeometry, rng: &mut R) -> (Region, Vec<f64>) {
    let n = g.dim();
    let m: Vec<usize> = (0..n).map(|k| ((g.hi(k) - g.lo(k)) / g.h()).round() as usize).collect();
    let mut mask = vec![false; g.num_cells()];
    let boxes = rng.gen_range(1..=3usize);
    let mut first = (vec![0usize; n], vec![0usize; n]);
    for b in 0..boxes {
        let mut lo = vec![0usize; n];
        let mut hi = vec![0usize; n];
        for k in 0..n {
            let a = rng.gen_range(0..m[k] - 2);
            lo[k] = a;
            hi[k] = rng.gen_range(a + 2..=m[k]);
        }
        for (i, f) in mask.iter_mut().enumerate() {
            let idx = g.multi_index(i);
            if (0..n).all(|k| idx[k] >= lo[k] && idx[k] < hi[k]) {
                *f = true;
            }
        }
        if b == 0 {
            first = (lo, hi);
        }
    }
    // a random point strictly inside the first box, off cell faces
    let x: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b) = (first.0[k] as f64, first.1[k] as f64);
            let t = rng.gen_range(a + 0.1..b - 0.1);
            g.lo(k) + t * g.h()
        })
        .collect();
    (Region::from_mask(mask), x)
}
