use crate::kkt::Kkt;
use crate::problem::{NlpProblem, NlpResult, Status};
use crate::restoration;
use crate::scaled::ScaledProblem;
use crate::{NlpError, Options};

const KAPPA_D: f64 = 1e-5;
const MAX_SOFT_STEPS: usize = 5;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const DELTA_SW: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const ETA_PHI: f64 = 1e-8;
const GAMMA_ALPHA: f64 = 0.05;
const MAX_SOC: usize = 4;
const KAPPA_SOC: f64 = 0.99;
const Y_MAX_INIT: f64 = 1e3;
const MAX_RESTORATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InnerStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericFailure,
    UserStop,
    /// Line search failed and no restoration was available.
    Stalled,
}

pub(crate) struct InnerSettings {
    pub opts: Options,
    pub allow_restoration: bool,
}

pub(crate) struct Outcome {
    pub status: InnerStatus,
    /// primal iterate `w = (x, s)`
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    pub kkt_error: f64,
}

/// Primal-dual iterate state for one scaled problem.
pub(crate) struct Solver<'a> {
    pub sp: &'a ScaledProblem<'a>,
    pub nx: usize,
    pub m: usize,
    pub nw: usize,
    /// constraint row of each slack
    pub slack_row: Vec<usize>,
    /// slack index of each row, `None` for equality rows
    pub row_slack: Vec<Option<usize>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    kkt: Kkt,
    pub settings: InnerSettings,

    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub zl: Vec<f64>,
    pub zu: Vec<f64>,
    pub mu: f64,
    tau: f64,

    pub f: f64,
    grad: Vec<f64>,
    pub c: Vec<f64>,
    pub fres: Vec<f64>,
    jac: Vec<f64>,
    hess: Vec<f64>,

    pub filter: Vec<(f64, f64)>,
    theta_max: f64,
    theta_min: f64,
    pub iterations: usize,
    restorations: usize,
}

fn is_finite_all(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl<'a> Solver<'a> {
    /// `x0` in free coordinates; it is projected and pushed into the bounds.
    pub fn new(sp: &'a ScaledProblem<'a>, x0: &[f64], settings: InnerSettings) -> Result<Self, NlpError> {
        let nx = sp.nx();
        let m = sp.m;
        let mut row_slack = vec![None; m];
        let mut slack_row = Vec::new();
        for i in 0..m {
            if sp.cl[i] != sp.cu[i] {
                row_slack[i] = Some(slack_row.len());
                slack_row.push(i);
            }
        }
        let nw = nx + slack_row.len();
        let mut lo = sp.xl.clone();
        let mut hi = sp.xu.clone();
        for &r in &slack_row {
            lo.push(sp.cl[r]);
            hi.push(sp.cu[r]);
        }
        let kkt = Kkt::new(nx, m, &sp.hess_entries, &sp.jac_entries, &slack_row)?;
        let mu = settings.opts.mu_init;
        let mut s = Self {
            sp,
            nx,
            m,
            nw,
            slack_row,
            row_slack,
            lo,
            hi,
            kkt,
            settings,
            w: vec![0.0; nw],
            y: vec![0.0; m],
            zl: vec![0.0; nw],
            zu: vec![0.0; nw],
            mu,
            tau: TAU_MIN.max(1.0 - mu),
            f: 0.0,
            grad: vec![0.0; nw],
            c: vec![0.0; m],
            fres: vec![0.0; m],
            jac: vec![0.0; sp.jac_entries.len()],
            hess: vec![0.0; sp.hess_entries.len()],
            filter: Vec::new(),
            theta_max: f64::INFINITY,
            theta_min: 0.0,
            iterations: 0,
            restorations: 0,
        };
        for i in 0..nx {
            s.w[i] = s.push_into_bounds(i, x0[i]);
        }
        Ok(s)
    }

    fn push_into_bounds(&self, i: usize, v: f64) -> f64 {
        let (l, u) = (self.lo[i], self.hi[i]);
        let k1 = self.settings.opts.bound_push;
        let k2 = self.settings.opts.bound_frac;
        let mut v = v;
        if !v.is_finite() {
            v = 0.0;
        }
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                let pl = (k1 * l.abs().max(1.0)).min(k2 * (u - l));
                let pu = (k1 * u.abs().max(1.0)).min(k2 * (u - l));
                v.max(l + pl).min(u - pu)
            }
            (true, false) => v.max(l + k1 * l.abs().max(1.0)),
            (false, true) => v.min(u - k1 * u.abs().max(1.0)),
            (false, false) => v,
        }
    }

    fn has_lo(&self, i: usize) -> bool {
        self.lo[i].is_finite()
    }

    fn has_hi(&self, i: usize) -> bool {
        self.hi[i].is_finite()
    }

    fn n_bounds(&self) -> usize {
        (0..self.nw).filter(|&i| self.has_lo(i)).count() + (0..self.nw).filter(|&i| self.has_hi(i)).count()
    }

    /// `F(w) = c(x) - target`, the internal equality residual.
    fn residual(&self, w: &[f64], c: &[f64], out: &mut [f64]) {
        for i in 0..self.m {
            out[i] = match self.row_slack[i] {
                Some(k) => c[i] - w[self.nx + k],
                None => c[i] - self.sp.cl[i],
            };
        }
    }

    pub fn theta_of(&self, w: &[f64], c: &[f64]) -> f64 {
        let mut r = vec![0.0; self.m];
        self.residual(w, c, &mut r);
        r.iter().map(|v| v.abs()).sum()
    }

    pub fn barrier_of(&self, w: &[f64], f: f64, mu: f64) -> f64 {
        let mut phi = f;
        for i in 0..self.nw {
            let (hl, hu) = (self.has_lo(i), self.has_hi(i));
            if hl {
                phi -= mu * (w[i] - self.lo[i]).ln();
            }
            if hu {
                phi -= mu * (self.hi[i] - w[i]).ln();
            }
            if hl && !hu {
                phi += KAPPA_D * mu * (w[i] - self.lo[i]);
            }
            if hu && !hl {
                phi += KAPPA_D * mu * (self.hi[i] - w[i]);
            }
        }
        phi
    }

    fn barrier_grad(&self) -> Vec<f64> {
        let mu = self.mu;
        let mut g = self.grad.clone();
        for i in 0..self.nw {
            let (hl, hu) = (self.has_lo(i), self.has_hi(i));
            if hl {
                g[i] -= mu / (self.w[i] - self.lo[i]);
            }
            if hu {
                g[i] += mu / (self.hi[i] - self.w[i]);
            }
            if hl && !hu {
                g[i] += KAPPA_D * mu;
            }
            if hu && !hl {
                g[i] -= KAPPA_D * mu;
            }
        }
        g
    }

    fn jt_y(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nw];
        for (k, &(r, c)) in self.sp.jac_entries.iter().enumerate() {
            out[c] += self.jac[k] * y[r];
        }
        for (k, &r) in self.slack_row.iter().enumerate() {
            out[self.nx + k] -= y[r];
        }
        out
    }

    /// Objective and constraints at a trial point; `None` if not finite.
    pub fn eval_trial(&self, w: &[f64]) -> Option<(f64, Vec<f64>)> {
        let x = &w[..self.nx];
        let f = self.sp.objective(x);
        if !f.is_finite() {
            return None;
        }
        let mut c = vec![0.0; self.m];
        self.sp.constraints(x, &mut c);
        if !is_finite_all(&c) {
            return None;
        }
        Some((f, c))
    }

    /// Evaluates all functions and first derivatives at `self.w`.
    fn eval_current(&mut self) -> bool {
        let x = &self.w[..self.nx];
        self.f = self.sp.objective(x);
        let mut g = vec![0.0; self.nx];
        self.sp.gradient(x, &mut g);
        self.grad[..self.nx].copy_from_slice(&g);
        for v in &mut self.grad[self.nx..] {
            *v = 0.0;
        }
        self.sp.constraints(x, &mut self.c);
        self.sp.jacobian(x, &mut self.jac);
        let mut r = vec![0.0; self.m];
        self.residual(&self.w, &self.c, &mut r);
        self.fres = r;
        self.f.is_finite() && is_finite_all(&self.grad) && is_finite_all(&self.c) && is_finite_all(&self.jac)
    }

    pub fn theta(&self) -> f64 {
        self.fres.iter().map(|v| v.abs()).sum()
    }

    /// Scaled optimality error of the barrier problem with parameter `mu`.
    pub fn opt_error(&self, mu: f64) -> f64 {
        let nb = self.n_bounds();
        let zsum: f64 = self.zl.iter().chain(&self.zu).map(|v| v.abs()).sum();
        let ysum: f64 = self.y.iter().map(|v| v.abs()).sum();
        let s_d = if self.m + nb > 0 {
            S_MAX.max((ysum + zsum) / (self.m + nb) as f64) / S_MAX
        } else {
            1.0
        };
        let s_c = if nb > 0 { S_MAX.max(zsum / nb as f64) / S_MAX } else { 1.0 };
        let jty = self.jt_y(&self.y);
        let mut dual: f64 = 0.0;
        let mut comp: f64 = 0.0;
        for i in 0..self.nw {
            let d = self.grad[i] + jty[i] - self.zl[i] + self.zu[i];
            dual = dual.max(d.abs());
            if self.has_lo(i) {
                comp = comp.max(((self.w[i] - self.lo[i]) * self.zl[i] - mu).abs());
            }
            if self.has_hi(i) {
                comp = comp.max(((self.hi[i] - self.w[i]) * self.zu[i] - mu).abs());
            }
        }
        let primal = self.fres.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        (dual / s_d).max(primal).max(comp / s_c)
    }

    /// Largest constraint violation in the user's units.
    pub fn unscaled_violation(&self, c: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.m {
            let e = (self.sp.cl[i] - c[i]).max(c[i] - self.sp.cu[i]).max(0.0);
            v = v.max(e / self.sp.con_scale[i]);
        }
        v
    }

    fn init_multipliers(&mut self) -> Result<(), NlpError> {
        for i in 0..self.nw {
            self.zl[i] = if self.has_lo(i) { 1.0 } else { 0.0 };
            self.zu[i] = if self.has_hi(i) { 1.0 } else { 0.0 };
        }
        self.least_squares_y()
    }

    fn least_squares_y(&mut self) -> Result<(), NlpError> {
        if self.m == 0 {
            return Ok(());
        }
        let zeros = vec![0.0; self.hess.len()];
        let ones = vec![1.0; self.nw];
        self.kkt.load(&zeros, &ones, &self.jac);
        let n = self.kkt.dim();
        let mut rhs = vec![0.0; n];
        for i in 0..self.nw {
            rhs[i] = -(self.grad[i] - self.zl[i] + self.zu[i]);
        }
        let mut sol = vec![0.0; n];
        match self.kkt.factorize() {
            Ok(_) => {
                self.kkt.solve(&rhs, &mut sol);
                let y = &sol[self.nw..];
                let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if ymax.is_finite() && ymax <= Y_MAX_INIT {
                    self.y.copy_from_slice(y);
                } else {
                    self.y.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            Err(_) => self.y.iter_mut().for_each(|v| *v = 0.0),
        }
        Ok(())
    }

    /// Puts the slacks at `c(x)` pushed into their bounds.
    fn init_slacks(&mut self) {
        for (k, &r) in self.slack_row.iter().enumerate() {
            let i = self.nx + k;
            self.w[i] = self.push_into_bounds(i, self.c[r]);
        }
        let mut r = vec![0.0; self.m];
        self.residual(&self.w, &self.c, &mut r);
        self.fres = r;
    }

    fn fraction_to_boundary(&self, w: &[f64], dw: &[f64]) -> f64 {
        let mut alpha: f64 = 1.0;
        for i in 0..self.nw {
            if dw[i] < 0.0 && self.has_lo(i) {
                alpha = alpha.min(-self.tau * (w[i] - self.lo[i]) / dw[i]);
            }
            if dw[i] > 0.0 && self.has_hi(i) {
                alpha = alpha.min(self.tau * (self.hi[i] - w[i]) / dw[i]);
            }
        }
        alpha
    }

    fn fraction_to_boundary_z(&self, dzl: &[f64], dzu: &[f64]) -> f64 {
        let mut alpha: f64 = 1.0;
        for i in 0..self.nw {
            if self.has_lo(i) && dzl[i] < 0.0 {
                alpha = alpha.min(-self.tau * self.zl[i] / dzl[i]);
            }
            if self.has_hi(i) && dzu[i] < 0.0 {
                alpha = alpha.min(-self.tau * self.zu[i] / dzu[i]);
            }
        }
        alpha
    }

    fn bound_duals_step(&self, dw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dzl = vec![0.0; self.nw];
        let mut dzu = vec![0.0; self.nw];
        for i in 0..self.nw {
            if self.has_lo(i) {
                let gap = self.w[i] - self.lo[i];
                dzl[i] = (self.mu - gap * self.zl[i] - self.zl[i] * dw[i]) / gap;
            }
            if self.has_hi(i) {
                let gap = self.hi[i] - self.w[i];
                dzu[i] = (self.mu - gap * self.zu[i] + self.zu[i] * dw[i]) / gap;
            }
        }
        (dzl, dzu)
    }

    fn safeguard_z(&mut self) {
        for i in 0..self.nw {
            if self.has_lo(i) {
                let gap = self.w[i] - self.lo[i];
                self.zl[i] = self.zl[i]
                    .min(KAPPA_SIGMA * self.mu / gap)
                    .max(self.mu / (KAPPA_SIGMA * gap));
            }
            if self.has_hi(i) {
                let gap = self.hi[i] - self.w[i];
                self.zu[i] = self.zu[i]
                    .min(KAPPA_SIGMA * self.mu / gap)
                    .max(self.mu / (KAPPA_SIGMA * gap));
            }
        }
    }

    fn filter_rejects(&self, theta: f64, phi: f64) -> bool {
        self.filter.iter().any(|&(tf, pf)| theta >= tf && phi >= pf)
    }

    pub fn filter_acceptable(&self, theta: f64, phi: f64) -> bool {
        theta <= self.theta_max && !self.filter_rejects(theta, phi)
    }

    fn assemble_and_factor(&mut self) -> Result<(), NlpError> {
        let x = &self.w[..self.nx];
        self.sp.hessian(x, 1.0, &self.y, &mut self.hess);
        if !is_finite_all(&self.hess) {
            return Err(NlpError::Factorization("non-finite Hessian".into()));
        }
        let mut sigma = vec![0.0; self.nw];
        for i in 0..self.nw {
            if self.has_lo(i) {
                sigma[i] += self.zl[i] / (self.w[i] - self.lo[i]);
            }
            if self.has_hi(i) {
                sigma[i] += self.zu[i] / (self.hi[i] - self.w[i]);
            }
        }
        self.kkt.load(&self.hess, &sigma, &self.jac);
        self.kkt.factorize()?;
        Ok(())
    }

    fn outcome(&self, status: InnerStatus) -> Outcome {
        Outcome {
            status,
            w: self.w.clone(),
            y: self.y.clone(),
            iterations: self.iterations,
            kkt_error: self.opt_error(0.0),
        }
    }

    /// Runs the interior-point iteration. `callback` sees every accepted
    /// primal iterate `w` and stops the solve by returning `true`.
    pub fn run(&mut self, mut callback: Option<&mut dyn FnMut(&[f64]) -> bool>) -> Result<Outcome, NlpError> {
        if !self.eval_current() {
            return Ok(self.outcome(InnerStatus::NumericFailure));
        }
        self.init_slacks();
        self.init_multipliers()?;
        let theta0 = self.theta();
        self.theta_max = 1e4 * theta0.max(1.0);
        self.theta_min = 1e-4 * theta0.max(1.0);
        let opt_tol = self.settings.opts.opt_tol;
        let feas_tol = self.settings.opts.feas_tol;
        let mu_min = opt_tol / 10.0;
        let mut force_mu_update = false;
        let mut tiny_steps = 0usize;
        let mut soft_steps = 0usize;

        loop {
            if let Some(cb) = callback.as_mut() {
                if cb(&self.w) {
                    return Ok(self.outcome(InnerStatus::UserStop));
                }
            }
            let e0 = self.opt_error(0.0);
            if e0 <= opt_tol && self.unscaled_violation(&self.c) <= feas_tol {
                return Ok(self.outcome(InnerStatus::Optimal));
            }
            if self.iterations >= self.settings.opts.max_iter {
                return Ok(self.outcome(InnerStatus::IterationLimit));
            }
            loop {
                let emu = self.opt_error(self.mu);
                if self.mu > mu_min && (emu <= KAPPA_EPS * self.mu || force_mu_update) {
                    self.mu = mu_min.max((KAPPA_MU * self.mu).min(self.mu.powf(THETA_MU)));
                    self.tau = TAU_MIN.max(1.0 - self.mu);
                    self.filter.clear();
                    force_mu_update = false;
                    continue;
                }
                force_mu_update = false;
                break;
            }

            log::debug!(
                "iter {:4} obj {:+.8e} theta {:.3e} err {:.3e} mu {:.1e}",
                self.iterations,
                self.f,
                self.theta(),
                e0,
                self.mu
            );

            if let Err(e) = self.assemble_and_factor() {
                log::debug!("factorization failed: {e}");
                match self.restore()? {
                    Some(status) => return Ok(self.outcome(status)),
                    None => continue,
                }
            }

            let gphi = self.barrier_grad();
            let jty = self.jt_y(&self.y);
            let n = self.kkt.dim();
            let mut rhs = vec![0.0; n];
            for i in 0..self.nw {
                rhs[i] = -(gphi[i] + jty[i]);
            }
            for i in 0..self.m {
                rhs[self.nw + i] = -self.fres[i];
            }
            let mut sol = vec![0.0; n];
            self.kkt.solve(&rhs, &mut sol);
            if !is_finite_all(&sol) {
                log::debug!("non-finite search direction");
                return Ok(self.outcome(InnerStatus::NumericFailure));
            }
            let dw = sol[..self.nw].to_vec();
            let dy = sol[self.nw..].to_vec();
            let (dzl, dzu) = self.bound_duals_step(&dw);

            let rel_step = (0..self.nw)
                .map(|i| dw[i].abs() / (1.0 + self.w[i].abs()))
                .fold(0.0f64, f64::max);
            let theta = self.theta();
            if rel_step < 10.0 * f64::EPSILON && theta < 1e-8 {
                tiny_steps += 1;
                if tiny_steps >= 3 && self.mu <= mu_min {
                    log::debug!("stalled on tiny steps");
                    return Ok(self.outcome(InnerStatus::Stalled));
                }
                if !self.take_full_step(&dw, &dy, &dzl, &dzu) {
                    return Ok(self.outcome(InnerStatus::NumericFailure));
                }
                force_mu_update = true;
                continue;
            }
            tiny_steps = 0;

            let phi = self.barrier_of(&self.w, self.f, self.mu);
            let dphi: f64 = (0..self.nw).map(|i| gphi[i] * dw[i]).sum();
            let alpha_max = self.fraction_to_boundary(&self.w, &dw);
            let alpha_min = if dphi < 0.0 && theta <= self.theta_min {
                GAMMA_ALPHA
                    * GAMMA_THETA
                        .min(GAMMA_PHI * theta / -dphi)
                        .min(DELTA_SW * theta.powf(S_THETA) / (-dphi).powf(S_PHI))
            } else if dphi < 0.0 {
                GAMMA_ALPHA * GAMMA_THETA.min(GAMMA_PHI * theta / -dphi)
            } else {
                GAMMA_ALPHA * GAMMA_THETA
            };

            let accept = |s: &Self, th: f64, ph: f64, alpha: f64| -> Option<bool> {
                if !s.filter_acceptable(th, ph) {
                    return None;
                }
                let switching = dphi < 0.0
                    && alpha * (-dphi).powf(S_PHI) > DELTA_SW * theta.powf(S_THETA)
                    && theta <= s.theta_min;
                if switching {
                    let tol = 10.0 * f64::EPSILON * phi.abs();
                    if ph - phi - tol <= ETA_PHI * alpha * dphi {
                        Some(true)
                    } else {
                        None
                    }
                } else if th <= (1.0 - GAMMA_THETA) * theta || ph <= phi - GAMMA_PHI * theta {
                    Some(false)
                } else {
                    None
                }
            };

            let mut alpha = alpha_max;
            let mut first = true;
            let mut accepted: Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64, bool)> = None;
            while alpha >= alpha_min {
                let wt: Vec<f64> = (0..self.nw).map(|i| self.w[i] + alpha * dw[i]).collect();
                if let Some((ft, ct)) = self.eval_trial(&wt) {
                    let tht = self.theta_of(&wt, &ct);
                    let pht = self.barrier_of(&wt, ft, self.mu);
                    if let Some(ftype) = accept(self, tht, pht, alpha) {
                        accepted = Some((wt, dw.clone(), dy.clone(), alpha, ftype));
                        break;
                    }
                    if first && tht >= theta {
                        if let Some(found) = self.second_order_correction(
                            &rhs, alpha_max, &wt, &ct, theta, &accept,
                        ) {
                            accepted = Some(found);
                            break;
                        }
                    }
                }
                first = false;
                alpha *= 0.5;
            }

            let Some((wt, dw_acc, dy_acc, alpha, ftype)) = accepted else {
                log::debug!("line search failed at theta {theta:.3e}");
                if !self.settings.allow_restoration {
                    return Ok(self.outcome(InnerStatus::Stalled));
                }
                if theta <= 1e-2 * feas_tol {
                    // Practically feasible: a feasibility phase cannot help.
                    // Full steps still let the multipliers settle when the
                    // primal point is pinned down by the constraints.
                    soft_steps += 1;
                    if soft_steps > MAX_SOFT_STEPS || rel_step > 1e-8 {
                        return Ok(self.outcome(InnerStatus::Stalled));
                    }
                    if !self.take_full_step(&dw, &dy, &dzl, &dzu) {
                        return Ok(self.outcome(InnerStatus::NumericFailure));
                    }
                    force_mu_update = true;
                    continue;
                }
                match self.restore()? {
                    Some(status) => return Ok(self.outcome(status)),
                    None => continue,
                }
            };

            soft_steps = 0;
            if !ftype {
                self.filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
            }
            let (dzl, dzu) = self.bound_duals_step(&dw_acc);
            let alpha_z = self.fraction_to_boundary_z(&dzl, &dzu);
            self.w = wt;
            for i in 0..self.m {
                self.y[i] += alpha * dy_acc[i];
            }
            for i in 0..self.nw {
                self.zl[i] += alpha_z * dzl[i];
                self.zu[i] += alpha_z * dzu[i];
            }
            self.safeguard_z();
            self.iterations += 1;
            if !self.eval_current() {
                return Ok(self.outcome(InnerStatus::NumericFailure));
            }
        }
    }

    /// Applies a full primal-dual step without a line search.
    fn take_full_step(&mut self, dw: &[f64], dy: &[f64], dzl: &[f64], dzu: &[f64]) -> bool {
        let alpha_w = self.fraction_to_boundary(&self.w, dw);
        let alpha_z = self.fraction_to_boundary_z(dzl, dzu);
        for i in 0..self.nw {
            self.w[i] += alpha_w * dw[i];
            self.zl[i] += alpha_z * dzl[i];
            self.zu[i] += alpha_z * dzu[i];
        }
        for i in 0..self.m {
            self.y[i] += alpha_w * dy[i];
        }
        self.safeguard_z();
        self.iterations += 1;
        self.eval_current()
    }

    #[allow(clippy::type_complexity)]
    fn second_order_correction(
        &mut self,
        rhs: &[f64],
        alpha_max: f64,
        w_trial: &[f64],
        c_trial: &[f64],
        theta: f64,
        accept: &dyn Fn(&Self, f64, f64, f64) -> Option<bool>,
    ) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64, bool)> {
        let mut f_trial = vec![0.0; self.m];
        self.residual(w_trial, c_trial, &mut f_trial);
        let mut c_soc: Vec<f64> = (0..self.m).map(|i| alpha_max * self.fres[i] + f_trial[i]).collect();
        let mut theta_old = f_trial.iter().map(|v| v.abs()).sum::<f64>();
        let mut alpha_soc = alpha_max;
        let n = self.kkt.dim();
        let mut rhs_soc = rhs.to_vec();
        let mut sol = vec![0.0; n];
        for _ in 0..MAX_SOC {
            for i in 0..self.m {
                rhs_soc[self.nw + i] = -c_soc[i];
            }
            self.kkt.solve(&rhs_soc, &mut sol);
            if !is_finite_all(&sol) {
                return None;
            }
            let dw = sol[..self.nw].to_vec();
            let dy = sol[self.nw..].to_vec();
            alpha_soc = self.fraction_to_boundary(&self.w, &dw);
            let wt: Vec<f64> = (0..self.nw).map(|i| self.w[i] + alpha_soc * dw[i]).collect();
            let (ft, ct) = self.eval_trial(&wt)?;
            let mut fr = vec![0.0; self.m];
            self.residual(&wt, &ct, &mut fr);
            let tht: f64 = fr.iter().map(|v| v.abs()).sum();
            let pht = self.barrier_of(&wt, ft, self.mu);
            if let Some(ftype) = accept(self, tht, pht, alpha_soc) {
                return Some((wt, dw, dy, alpha_soc, ftype));
            }
            if tht > KAPPA_SOC * theta_old {
                return None;
            }
            theta_old = tht;
            for i in 0..self.m {
                c_soc[i] = alpha_soc * c_soc[i] + fr[i];
            }
        }
        let _ = (alpha_soc, theta);
        None
    }

    /// Feasibility restoration. `Ok(None)` means the iteration continues
    /// from the restored point; `Ok(Some(status))` terminates the solve.
    fn restore(&mut self) -> Result<Option<InnerStatus>, NlpError> {
        if !self.settings.allow_restoration {
            return Ok(Some(InnerStatus::Stalled));
        }
        self.restorations += 1;
        if self.restorations > MAX_RESTORATIONS {
            return Ok(Some(InnerStatus::NumericFailure));
        }
        let theta = self.theta();
        let phi = self.barrier_of(&self.w, self.f, self.mu);
        self.filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
        let res = restoration::run(self)?;
        let feas_tol = self.settings.opts.feas_tol;
        match res.status {
            InnerStatus::UserStop => {}
            InnerStatus::IterationLimit => {
                self.iterations += res.iterations;
                return Ok(Some(InnerStatus::IterationLimit));
            }
            InnerStatus::NumericFailure => {
                self.iterations += res.iterations;
                return Ok(Some(InnerStatus::NumericFailure));
            }
            _ => {
                let Some((_, c)) = self.eval_trial(&res.w_outer(self.nx, self.m)) else {
                    return Ok(Some(InnerStatus::NumericFailure));
                };
                self.iterations += res.iterations;
                if self.unscaled_violation(&c) > feas_tol {
                    log::debug!("restoration converged to an infeasible point");
                    return Ok(Some(InnerStatus::Infeasible));
                }
                self.filter.clear();
            }
        }
        if res.status == InnerStatus::UserStop {
            self.iterations += res.iterations;
        }
        let w_new = res.w_outer(self.nx, self.m);
        self.w = w_new;
        if !self.eval_current() {
            return Ok(Some(InnerStatus::NumericFailure));
        }
        for i in 0..self.nw {
            if self.has_lo(i) {
                self.zl[i] = (self.mu / (self.w[i] - self.lo[i])).min(Y_MAX_INIT);
            }
            if self.has_hi(i) {
                self.zu[i] = (self.mu / (self.hi[i] - self.w[i])).min(Y_MAX_INIT);
            }
        }
        self.least_squares_y()?;
        Ok(None)
    }
}

/// Public entry point: validation, scaling, solve, and unscaling.
pub(crate) fn solve(prob: &dyn NlpProblem, opts: &Options) -> Result<NlpResult, NlpError> {
    let mut sp = ScaledProblem::new(prob)?;
    let x0_full = prob.initial_point();
    if x0_full.len() != sp.n_full {
        return Err(NlpError::Dimension(format!(
            "initial point has length {}, expected {}",
            x0_full.len(),
            sp.n_full
        )));
    }
    let x0 = sp.to_free(&x0_full);
    let settings = InnerSettings {
        opts: opts.clone(),
        allow_restoration: true,
    };
    if sp.nx() == 0 {
        return Ok(finish_fixed(&sp, opts));
    }
    if opts.scaling {
        // Scale at the pushed starting point, as the iteration will see it.
        let probe = Solver::new(&sp, &x0, InnerSettings { opts: opts.clone(), allow_restoration: false })?;
        let xs = probe.w[..sp.nx()].to_vec();
        drop(probe);
        sp.compute_scaling(&xs);
    }
    let mut solver = Solver::new(&sp, &x0, settings)?;
    let out = solver.run(None)?;
    let x_free = &out.w[..sp.nx()];
    let x = sp.to_full(x_free);
    let obj = prob.objective(&x);
    let viol = crate::problem::constraint_violation(prob, &x);
    let lambda: Vec<f64> = (0..sp.m)
        .map(|i| out.y[i] * sp.con_scale[i] / sp.obj_scale)
        .collect();
    let status = match out.status {
        InnerStatus::Optimal => Status::Optimal,
        InnerStatus::Infeasible => Status::Infeasible,
        InnerStatus::IterationLimit => Status::IterationLimit,
        InnerStatus::UserStop => Status::UserStop,
        InnerStatus::NumericFailure | InnerStatus::Stalled => Status::NumericFailure,
    };
    log::debug!("solve finished: {status} after {} iterations", out.iterations);
    Ok(NlpResult {
        status,
        x,
        obj,
        kkt_residual: out.kkt_error,
        constraint_violation: viol,
        iterations: out.iterations,
        lambda,
    })
}

fn finish_fixed(sp: &ScaledProblem, opts: &Options) -> NlpResult {
    let x = sp.to_full(&[]);
    let obj = sp.prob.objective(&x);
    let mut c = vec![0.0; sp.m];
    sp.prob.constraints(&x, &mut c);
    let (cl, cu) = sp.prob.con_bounds();
    let viol = (0..sp.m)
        .map(|i| (cl[i] - c[i]).max(c[i] - cu[i]).max(0.0))
        .fold(0.0f64, f64::max);
    let status = if !obj.is_finite() || c.iter().any(|v| !v.is_finite()) {
        Status::NumericFailure
    } else if viol <= opts.feas_tol {
        Status::Optimal
    } else {
        Status::Infeasible
    };
    NlpResult {
        status,
        x,
        obj,
        kkt_residual: 0.0,
        constraint_violation: viol,
        iterations: 0,
        lambda: vec![0.0; sp.m],
    }
}
