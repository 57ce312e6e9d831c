use crate::problem::NlpProblem;

/// Largest elementwise relative discrepancy between analytic derivatives and
/// central finite differences, `|fd − an| / max(1, |fd|, |an|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeReport {
    pub gradient: f64,
    pub jacobian: f64,
    /// Hessian of the Lagrangian with unit objective weight and multipliers
    /// `λ_i = 1 + i mod 3`, checked against differences of its gradient.
    pub hessian: f64,
}

impl DerivativeReport {
    /// Worst of the gradient and Jacobian errors.
    pub fn first_order(&self) -> f64 {
        self.gradient.max(self.jacobian)
    }

    pub fn max(&self) -> f64 {
        self.first_order().max(self.hessian)
    }
}

fn rel_err(fd: f64, an: f64) -> f64 {
    if !fd.is_finite() || !an.is_finite() {
        return f64::INFINITY;
    }
    (fd - an).abs() / 1f64.max(fd.abs()).max(an.abs())
}

fn dense_jacobian(p: &dyn NlpProblem, x: &[f64]) -> Vec<f64> {
    let n = p.num_vars();
    let m = p.num_cons();
    let s = p.jacobian_structure();
    let mut vals = vec![0.0; s.len()];
    p.jacobian_values(x, &mut vals);
    let mut dense = vec![0.0; m * n];
    for (k, &(r, c)) in s.iter().enumerate() {
        dense[r * n + c] += vals[k];
    }
    dense
}

fn lagrangian_gradient(p: &dyn NlpProblem, x: &[f64], lambda: &[f64]) -> Vec<f64> {
    let n = p.num_vars();
    let mut g = vec![0.0; n];
    p.gradient(x, &mut g);
    let jac = dense_jacobian(p, x);
    for (r, l) in lambda.iter().enumerate() {
        for c in 0..n {
            g[c] += l * jac[r * n + c];
        }
    }
    g
}

struct Central {
    obj: f64,
    cons: Vec<f64>,
    lag: Vec<f64>,
}

/// Central differences along coordinate `j`; `xp` equals `x` on entry and exit.
fn central(p: &dyn NlpProblem, xp: &mut [f64], j: usize, step: f64, lambda: &[f64]) -> Central {
    let m = p.num_cons();
    let x0 = xp[j];
    let mut cp = vec![0.0; m];
    let mut cm = vec![0.0; m];
    xp[j] = x0 + step;
    let fp = p.objective(xp);
    p.constraints(xp, &mut cp);
    let lp = lagrangian_gradient(p, xp, lambda);
    xp[j] = x0 - step;
    let fm = p.objective(xp);
    p.constraints(xp, &mut cm);
    let lm = lagrangian_gradient(p, xp, lambda);
    xp[j] = x0;
    let actual = 2.0 * step;
    Central {
        obj: (fp - fm) / actual,
        cons: cp.iter().zip(&cm).map(|(a, b)| (a - b) / actual).collect(),
        lag: lp.iter().zip(&lm).map(|(a, b)| (a - b) / actual).collect(),
    }
}

/// Compares analytic gradient, Jacobian and Lagrangian Hessian at `x`
/// against Richardson-extrapolated central differences with base step `h`
/// (scaled by `max(1, |x_i|)`).
pub fn check_derivatives(p: &dyn NlpProblem, x: &[f64], h: f64) -> DerivativeReport {
    let n = p.num_vars();
    let m = p.num_cons();
    assert_eq!(x.len(), n, "point has the wrong dimension");

    let mut grad = vec![0.0; n];
    p.gradient(x, &mut grad);
    let jac = dense_jacobian(p, x);
    let lambda: Vec<f64> = (0..m).map(|i| 1.0 + (i % 3) as f64).collect();
    let hs = p.hessian_structure();
    let mut hv = vec![0.0; hs.len()];
    p.hessian_values(x, 1.0, &lambda, &mut hv);
    let mut hess = vec![0.0; n * n];
    for (k, &(r, c)) in hs.iter().enumerate() {
        hess[r * n + c] += hv[k];
        if r != c {
            hess[c * n + r] += hv[k];
        }
    }

    let mut report = DerivativeReport {
        gradient: 0.0,
        jacobian: 0.0,
        hessian: 0.0,
    };
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = h * x[j].abs().max(1.0);
        let wide = central(p, &mut xp, j, step, &lambda);
        let narrow = central(p, &mut xp, j, 0.5 * step, &lambda);
        // Richardson extrapolation cancels the second-order truncation term
        let fd = |a: f64, b: f64| (4.0 * b - a) / 3.0;
        report.gradient = report.gradient.max(rel_err(fd(wide.obj, narrow.obj), grad[j]));
        for r in 0..m {
            report.jacobian = report.jacobian.max(rel_err(fd(wide.cons[r], narrow.cons[r]), jac[r * n + j]));
        }
        for r in 0..n {
            report.hessian = report.hessian.max(rel_err(fd(wide.lag[r], narrow.lag[r]), hess[r * n + j]));
        }
    }
    report
}

/// A point strictly inside the variable box near `p.initial_point()`.
/// Each coordinate is drawn from the part of its box within
/// `max(1, |x0_i|)/2` of the start (angles and other free variables
/// within ±0.3); `unit` supplies draws from `[0, 1)`.
pub fn sample_interior(p: &dyn NlpProblem, unit: &mut dyn FnMut() -> f64) -> Vec<f64> {
    let (lo, hi) = p.var_bounds();
    let x0 = p.initial_point();
    (0..x0.len())
        .map(|i| {
            let r = 0.5 * x0[i].abs().max(1.0);
            let (a, b) = match (lo[i].is_finite(), hi[i].is_finite()) {
                (false, false) => (x0[i] - 0.3, x0[i] + 0.3),
                _ => (lo[i].max(x0[i] - r), hi[i].min(x0[i] + r)),
            };
            if a >= b {
                return lo[i].max(x0[i].min(hi[i]));
            }
            a + (b - a) * (0.1 + 0.8 * unit())
        })
        .collect()
}
