//! Gauss-Legendre rules and tensor-product helpers.

/// Gauss-Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        Self {
            nodes: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            weights: w.iter().map(|w| 0.5 * w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let len = b - a;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(a + len * x);
        }
        acc * len
    }
}

/// Nodes and weights on `[-1, 1]`, by Newton iteration on the Legendre polynomial.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    if order == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Visit every point of the tensor product of `rule` over `dim` axes of the
/// unit cube, passing the point and its weight.
pub fn for_each_tensor_point<F: FnMut(&[f64], f64)>(rule: &GaussRule, dim: usize, mut f: F) {
    let q = rule.len();
    let total = q.pow(dim as u32);
    let mut pt = vec![0.0; dim];
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for k in 0..dim {
            let i = rem % q;
            rem /= q;
            pt[k] = rule.nodes[i];
            w *= rule.weights[i];
        }
        f(&pt, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for order in 1..=8 {
            let r = GaussRule::new(order);
            let deg = 2 * order - 1;
            let got = r.integrate(0.0, 2.0, |x| x.powi(deg as i32));
            let want = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            assert!((got - want).abs() < 1e-12 * want, "order {order}");
            let total: f64 = r.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tensor_product_volume() {
        let r = GaussRule::new(3);
        let mut acc = 0.0;
        for_each_tensor_point(&r, 3, |p, w| acc += w * p[0] * p[1] * p[2]);
        assert!((acc - 0.125).abs() < 1e-14);
    }
}
