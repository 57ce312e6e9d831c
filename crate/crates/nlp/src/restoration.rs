//! Feasibility restoration: a nested interior-point solve of
//!
//! ```text
//!   min  ρ Σ (p + n) + ζ/2 ‖D (x − x_R)‖²
//!   s.t. cl ≤ c(x) − p + n ≤ cu,   xl ≤ x ≤ xu,   p, n ≥ 0
//! ```
//!
//! started at the current iterate `x_R`. It stops as soon as the original
//! problem's filter accepts a point with sufficiently reduced infeasibility.

use crate::ipm::{InnerSettings, InnerStatus, Solver};
use crate::problem::NlpProblem;
use crate::scaled::ScaledProblem;
use crate::NlpError;

const RHO: f64 = 1000.0;
const KAPPA_RESTO: f64 = 0.9;

struct RestorationNlp<'a> {
    inner: &'a ScaledProblem<'a>,
    nx: usize,
    m: usize,
    xr: Vec<f64>,
    dr2: Vec<f64>,
    zeta: f64,
    x0: Vec<f64>,
}

impl NlpProblem for RestorationNlp<'_> {
    fn num_vars(&self) -> usize {
        self.nx + 2 * self.m
    }
    fn num_cons(&self) -> usize {
        self.m
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.inner.xl.clone();
        let mut hi = self.inner.xu.clone();
        lo.resize(self.nx + 2 * self.m, 0.0);
        hi.resize(self.nx + 2 * self.m, f64::INFINITY);
        (lo, hi)
    }
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.inner.cl.clone(), self.inner.cu.clone())
    }
    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        let pn: f64 = x[self.nx..].iter().sum();
        let prox: f64 = (0..self.nx)
            .map(|i| self.dr2[i] * (x[i] - self.xr[i]).powi(2))
            .sum();
        RHO * pn + 0.5 * self.zeta * prox
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for i in 0..self.nx {
            grad[i] = self.zeta * self.dr2[i] * (x[i] - self.xr[i]);
        }
        for g in &mut grad[self.nx..] {
            *g = RHO;
        }
    }
    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        self.inner.constraints(&x[..self.nx], c);
        for i in 0..self.m {
            c[i] += x[self.nx + self.m + i] - x[self.nx + i];
        }
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner.jac_entries.clone();
        s.extend((0..self.m).map(|i| (i, self.nx + i)));
        s.extend((0..self.m).map(|i| (i, self.nx + self.m + i)));
        s
    }
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let nj = self.inner.jac_entries.len();
        self.inner.jacobian(&x[..self.nx], &mut vals[..nj]);
        for v in &mut vals[nj..nj + self.m] {
            *v = -1.0;
        }
        for v in &mut vals[nj + self.m..] {
            *v = 1.0;
        }
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner.hess_entries.clone();
        s.extend((0..self.nx).map(|i| (i, i)));
        s
    }
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        let nh = self.inner.hess_entries.len();
        self.inner.hessian(&x[..self.nx], 0.0, lambda, &mut vals[..nh]);
        for i in 0..self.nx {
            vals[nh + i] = obj_factor * self.zeta * self.dr2[i];
        }
    }
}

pub(crate) struct RestorationOutcome {
    pub status: InnerStatus,
    /// final iterate of the nested solve, `(x, p, n, s)`
    pub w: Vec<f64>,
    pub iterations: usize,
}

impl RestorationOutcome {
    /// The original problem's `w = (x, s)` at the restored point.
    pub fn w_outer(&self, nx: usize, m: usize) -> Vec<f64> {
        let mut w = self.w[..nx].to_vec();
        w.extend_from_slice(&self.w[nx + 2 * m..]);
        w
    }
}

/// Nonnegative `(p, n)` with `p − n = d` balancing the barrier term.
fn split_residual(d: f64, mu: f64) -> (f64, f64) {
    let a = (mu - RHO * d) / (2.0 * RHO);
    let n = a + (a * a + mu * d / (2.0 * RHO)).sqrt();
    let n = n.max(mu / RHO * 1e-3);
    (d + n, n)
}

pub(crate) fn run(outer: &Solver<'_>) -> Result<RestorationOutcome, NlpError> {
    let nx = outer.nx;
    let m = outer.m;
    let xr = outer.w[..nx].to_vec();
    let dr2: Vec<f64> = xr.iter().map(|v| (1.0 / v.abs().max(1.0)).powi(2)).collect();
    let fmax = outer.fres.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mu = outer.mu.max(fmax);
    let mut x0 = xr.clone();
    let mut ps = Vec::with_capacity(m);
    let mut ns = Vec::with_capacity(m);
    for i in 0..m {
        let (p, n) = split_residual(outer.fres[i], mu);
        ps.push(p);
        ns.push(n);
    }
    x0.extend(ps);
    x0.extend(ns);
    let resto = RestorationNlp {
        inner: outer.sp,
        nx,
        m,
        xr,
        dr2,
        zeta: mu.sqrt(),
        x0,
    };
    let nsp = ScaledProblem::new(&resto)?;
    let mut opts = outer.settings.opts.clone();
    opts.mu_init = mu;
    opts.bound_push = 1e-10;
    opts.bound_frac = 1e-10;
    opts.scaling = false;
    opts.max_iter = opts.max_iter.saturating_sub(outer.iterations).max(1);
    let x0 = resto.initial_point();
    let mut nested = Solver::new(
        &nsp,
        &x0,
        InnerSettings {
            opts,
            allow_restoration: false,
        },
    )?;
    let theta_start = outer.theta();
    let mut stop = |w: &[f64]| -> bool {
        let mut wo = w[..nx].to_vec();
        wo.extend_from_slice(&w[nx + 2 * m..]);
        let Some((f, c)) = outer.eval_trial(&wo) else {
            return false;
        };
        let theta = outer.theta_of(&wo, &c);
        let phi = outer.barrier_of(&wo, f, outer.mu);
        theta <= KAPPA_RESTO * theta_start && outer.filter_acceptable(theta, phi)
    };
    let out = nested.run(Some(&mut stop))?;
    log::debug!(
        "restoration finished: {:?} after {} iterations",
        out.status,
        out.iterations
    );
    Ok(RestorationOutcome {
        status: out.status,
        w: out.w,
        iterations: out.iterations,
    })
}
