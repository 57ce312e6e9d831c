//! Primal-dual KKT system
//!
//! ```text
//!   [ W + Σ + δw I    Aᵀ   ] [dw]   [r_w]
//!   [ A             -δc I  ] [dy] = [r_y]
//! ```
//!
//! `w = (x, s)` stacks the free variables and the inequality slacks; `A` is
//! the Jacobian of the internal equality constraints `F(w) = 0`.

use crate::ldl::{sym_matvec, Inertia, LdlFactor};
use crate::NlpError;

const DELTA_C: f64 = 1e-8;
const DELTA_W_INIT: f64 = 1e-4;
const DELTA_W_MIN: f64 = 1e-20;
const DELTA_W_MAX: f64 = 1e40;
const KAPPA_W_MINUS: f64 = 1.0 / 3.0;
const KAPPA_W_PLUS: f64 = 8.0;
const KAPPA_W_PLUS_BAR: f64 = 100.0;
const ZERO_PIVOT_TOL: f64 = 1e-30;

pub(crate) struct Kkt {
    nw: usize,
    m: usize,
    entries: Vec<(usize, usize)>,
    values: Vec<f64>,
    n_hess: usize,
    diag_w_start: usize,
    jac_start: usize,
    n_jac: usize,
    slack_start: usize,
    diag_c_start: usize,
    factor: LdlFactor,
    delta_w_last: f64,
    pub delta_w: f64,
    scratch: Vec<f64>,
    resid: Vec<f64>,
}

impl Kkt {
    /// `hess`: lower-triangle entries over the free x; `jac`: (row, col) over
    /// free x; `slack_rows[k]`: constraint row of slack `k` (column `nx + k`).
    pub fn new(
        nx: usize,
        m: usize,
        hess: &[(usize, usize)],
        jac: &[(usize, usize)],
        slack_rows: &[usize],
    ) -> Result<Self, NlpError> {
        let nw = nx + slack_rows.len();
        let mut entries = Vec::with_capacity(hess.len() + nw + jac.len() + slack_rows.len() + m);
        entries.extend_from_slice(hess);
        let diag_w_start = entries.len();
        entries.extend((0..nw).map(|i| (i, i)));
        let jac_start = entries.len();
        entries.extend(jac.iter().map(|&(r, c)| (nw + r, c)));
        let slack_start = entries.len();
        entries.extend(
            slack_rows
                .iter()
                .enumerate()
                .map(|(k, &r)| (nw + r, nx + k)),
        );
        let diag_c_start = entries.len();
        entries.extend((0..m).map(|r| (nw + r, nw + r)));
        let factor = LdlFactor::analyse(nw + m, &entries)?;
        let len = entries.len();
        Ok(Self {
            nw,
            m,
            entries,
            values: vec![0.0; len],
            n_hess: hess.len(),
            diag_w_start,
            jac_start,
            n_jac: jac.len(),
            slack_start,
            diag_c_start,
            factor,
            delta_w_last: 0.0,
            delta_w: 0.0,
            scratch: vec![0.0; nw + m],
            resid: vec![0.0; nw + m],
        })
    }

    pub fn dim(&self) -> usize {
        self.nw + self.m
    }

    /// Loads the matrix values. `sigma` has length `nw`.
    pub fn load(&mut self, hess_vals: &[f64], sigma: &[f64], jac_vals: &[f64]) {
        self.values[..self.n_hess].copy_from_slice(hess_vals);
        self.values[self.diag_w_start..self.diag_w_start + self.nw].copy_from_slice(sigma);
        self.values[self.jac_start..self.jac_start + self.n_jac].copy_from_slice(jac_vals);
        for v in &mut self.values[self.slack_start..self.diag_c_start] {
            *v = -1.0;
        }
        for v in &mut self.values[self.diag_c_start..] {
            *v = 0.0;
        }
    }

    fn try_factor(&mut self, delta_w: f64, delta_c: f64) -> Result<Inertia, NlpError> {
        let mut vals = self.values.clone();
        for v in &mut vals[self.diag_w_start..self.diag_w_start + self.nw] {
            *v += delta_w;
        }
        for v in &mut vals[self.diag_c_start..] {
            *v -= delta_c;
        }
        self.factor.factor(&vals, ZERO_PIVOT_TOL)
    }

    fn inertia_ok(&self, inertia: Inertia) -> bool {
        inertia.zero == 0 && inertia.positive == self.nw && inertia.negative == self.m
    }

    /// Factorizes with inertia correction on the Hessian block. Returns the
    /// number of factorizations performed.
    pub fn factorize(&mut self) -> Result<usize, NlpError> {
        let mut count = 1;
        let mut delta_w = 0.0;
        let inertia = self.try_factor(delta_w, DELTA_C)?;
        if self.inertia_ok(inertia) {
            self.delta_w = 0.0;
            return Ok(count);
        }
        delta_w = if self.delta_w_last == 0.0 {
            DELTA_W_INIT
        } else {
            (KAPPA_W_MINUS * self.delta_w_last).max(DELTA_W_MIN)
        };
        loop {
            count += 1;
            let inertia = self.try_factor(delta_w, DELTA_C)?;
            if self.inertia_ok(inertia) {
                self.delta_w_last = delta_w;
                self.delta_w = delta_w;
                return Ok(count);
            }
            delta_w *= if self.delta_w_last == 0.0 {
                KAPPA_W_PLUS_BAR
            } else {
                KAPPA_W_PLUS
            };
            if delta_w > DELTA_W_MAX {
                return Err(NlpError::Factorization(
                    "inertia correction exceeded the maximum Hessian perturbation".into(),
                ));
            }
        }
    }

    /// Solves with the last factorization, refining against the matrix
    /// without the constraint-block regularization.
    pub fn solve(&mut self, rhs: &[f64], sol: &mut [f64]) {
        let n = self.dim();
        sol.copy_from_slice(rhs);
        self.factor.solve_in_place(sol);
        let rhs_norm = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let mut prev = f64::INFINITY;
        for _ in 0..5 {
            self.residual(rhs, sol);
            let rnorm = self.resid.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if rnorm <= 1e-14 * rhs_norm || rnorm >= 0.5 * prev {
                break;
            }
            prev = rnorm;
            self.scratch.copy_from_slice(&self.resid);
            let mut corr = std::mem::take(&mut self.scratch);
            self.factor.solve_in_place(&mut corr);
            for i in 0..n {
                sol[i] += corr[i];
            }
            self.scratch = corr;
        }
    }

    fn residual(&mut self, rhs: &[f64], sol: &[f64]) {
        let mut vals = self.values.clone();
        for v in &mut vals[self.diag_w_start..self.diag_w_start + self.nw] {
            *v += self.delta_w;
        }
        sym_matvec(&self.entries, &vals, sol, &mut self.resid);
        for i in 0..rhs.len() {
            self.resid[i] = rhs[i] - self.resid[i];
        }
    }
}
