//! Internal view of a user problem: fixed variables removed and
//! gradient-based scaling of objective and constraint rows applied.

use crate::problem::NlpProblem;

const SCALE_TARGET: f64 = 100.0;
const SCALE_MIN: f64 = 1e-8;

pub(crate) struct ScaledProblem<'a> {
    pub prob: &'a dyn NlpProblem,
    pub n_full: usize,
    pub m: usize,
    /// full index of each free variable
    pub free: Vec<usize>,
    full_template: Vec<f64>,
    pub xl: Vec<f64>,
    pub xu: Vec<f64>,
    /// scaled constraint bounds
    pub cl: Vec<f64>,
    pub cu: Vec<f64>,
    pub obj_scale: f64,
    pub con_scale: Vec<f64>,
    /// (row, free col) for every kept Jacobian entry
    pub jac_entries: Vec<(usize, usize)>,
    jac_keep: Vec<Option<usize>>,
    jac_full_buf: std::cell::RefCell<Vec<f64>>,
    /// (row, col) free indices, row >= col
    pub hess_entries: Vec<(usize, usize)>,
    hess_keep: Vec<Option<usize>>,
    hess_full_buf: std::cell::RefCell<Vec<f64>>,
    lam_buf: std::cell::RefCell<Vec<f64>>,
}

fn is_fixed(lo: f64, hi: f64) -> bool {
    lo.is_finite() && hi.is_finite() && (hi - lo).abs() <= 1e-14 * lo.abs().max(1.0)
}

impl<'a> ScaledProblem<'a> {
    pub fn new(prob: &'a dyn NlpProblem) -> Result<Self, crate::NlpError> {
        let n_full = prob.num_vars();
        let m = prob.num_cons();
        let (xl_full, xu_full) = prob.var_bounds();
        let (cl_raw, cu_raw) = prob.con_bounds();
        if xl_full.len() != n_full || xu_full.len() != n_full {
            return Err(crate::NlpError::Dimension("variable bound length mismatch".into()));
        }
        if cl_raw.len() != m || cu_raw.len() != m {
            return Err(crate::NlpError::Dimension("constraint bound length mismatch".into()));
        }
        for i in 0..n_full {
            if xl_full[i].is_nan() || xu_full[i].is_nan() || xl_full[i] > xu_full[i] {
                return Err(crate::NlpError::InvalidBounds(format!("variable {i}")));
            }
        }
        for i in 0..m {
            if cl_raw[i].is_nan() || cu_raw[i].is_nan() || cl_raw[i] > cu_raw[i] {
                return Err(crate::NlpError::InvalidBounds(format!("constraint {i}")));
            }
        }
        let mut full_template = vec![0.0; n_full];
        let mut free = Vec::new();
        let mut pos = vec![None; n_full];
        let (mut xl, mut xu) = (Vec::new(), Vec::new());
        for i in 0..n_full {
            if is_fixed(xl_full[i], xu_full[i]) {
                full_template[i] = xl_full[i];
            } else {
                pos[i] = Some(free.len());
                free.push(i);
                xl.push(xl_full[i]);
                xu.push(xu_full[i]);
            }
        }
        let jac_full = prob.jacobian_structure();
        let mut jac_entries = Vec::new();
        let mut jac_keep = Vec::with_capacity(jac_full.len());
        for &(r, c) in &jac_full {
            if r >= m || c >= n_full {
                return Err(crate::NlpError::Dimension(format!(
                    "Jacobian entry ({r}, {c}) outside {m}x{n_full}"
                )));
            }
            match pos[c] {
                Some(fc) => {
                    jac_keep.push(Some(jac_entries.len()));
                    jac_entries.push((r, fc));
                }
                None => jac_keep.push(None),
            }
        }
        let hess_full = prob.hessian_structure();
        let mut hess_entries = Vec::new();
        let mut hess_keep = Vec::with_capacity(hess_full.len());
        for &(r, c) in &hess_full {
            if r >= n_full || c >= n_full {
                return Err(crate::NlpError::Dimension(format!(
                    "Hessian entry ({r}, {c}) outside {n_full}x{n_full}"
                )));
            }
            match (pos[r], pos[c]) {
                (Some(a), Some(b)) => {
                    hess_keep.push(Some(hess_entries.len()));
                    hess_entries.push((a.max(b), a.min(b)));
                }
                _ => hess_keep.push(None),
            }
        }
        let njf = jac_full.len();
        let nhf = hess_full.len();
        Ok(Self {
            prob,
            n_full,
            m,
            free,
            full_template,
            xl,
            xu,
            cl: cl_raw,
            cu: cu_raw,
            obj_scale: 1.0,
            con_scale: vec![1.0; m],
            jac_entries,
            jac_keep,
            jac_full_buf: std::cell::RefCell::new(vec![0.0; njf]),
            hess_entries,
            hess_keep,
            hess_full_buf: std::cell::RefCell::new(vec![0.0; nhf]),
            lam_buf: std::cell::RefCell::new(vec![0.0; m]),
        })
    }

    pub fn nx(&self) -> usize {
        self.free.len()
    }

    pub fn to_full(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.full_template.clone();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }

    pub fn to_free(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// Sets gradient-based scaling factors from derivatives at `x` (free).
    pub fn compute_scaling(&mut self, x: &[f64]) {
        let full = self.to_full(x);
        let mut g = vec![0.0; self.n_full];
        self.prob.gradient(&full, &mut g);
        let gmax = self.free.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
        self.obj_scale = if gmax.is_finite() && gmax > SCALE_TARGET {
            (SCALE_TARGET / gmax).max(SCALE_MIN)
        } else {
            1.0
        };
        let mut vals = vec![0.0; self.jac_keep.len()];
        self.prob.jacobian_values(&full, &mut vals);
        let mut rowmax = vec![0.0f64; self.m];
        for (k, keep) in self.jac_keep.iter().enumerate() {
            if let Some(e) = keep {
                let r = self.jac_entries[*e].0;
                rowmax[r] = rowmax[r].max(vals[k].abs());
            }
        }
        for r in 0..self.m {
            let s = if rowmax[r].is_finite() && rowmax[r] > SCALE_TARGET {
                (SCALE_TARGET / rowmax[r]).max(SCALE_MIN)
            } else {
                1.0
            };
            self.con_scale[r] = s;
            self.cl[r] *= s;
            self.cu[r] *= s;
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.obj_scale * self.prob.objective(&self.to_full(x))
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let full = self.to_full(x);
        let mut g = vec![0.0; self.n_full];
        self.prob.gradient(&full, &mut g);
        for (k, &i) in self.free.iter().enumerate() {
            out[k] = self.obj_scale * g[i];
        }
    }

    pub fn constraints(&self, x: &[f64], out: &mut [f64]) {
        let full = self.to_full(x);
        self.prob.constraints(&full, out);
        for (v, s) in out.iter_mut().zip(&self.con_scale) {
            *v *= s;
        }
    }

    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let full = self.to_full(x);
        let mut buf = self.jac_full_buf.borrow_mut();
        self.prob.jacobian_values(&full, &mut buf);
        for (k, keep) in self.jac_keep.iter().enumerate() {
            if let Some(e) = keep {
                out[*e] = buf[k] * self.con_scale[self.jac_entries[*e].0];
            }
        }
    }

    /// Hessian of `obj_factor * f_s + Σ y_i c_s,i` in free coordinates.
    pub fn hessian(&self, x: &[f64], obj_factor: f64, y: &[f64], out: &mut [f64]) {
        let full = self.to_full(x);
        let mut lam = self.lam_buf.borrow_mut();
        for i in 0..self.m {
            lam[i] = y[i] * self.con_scale[i];
        }
        let mut buf = self.hess_full_buf.borrow_mut();
        self.prob
            .hessian_values(&full, obj_factor * self.obj_scale, &lam, &mut buf);
        for (k, keep) in self.hess_keep.iter().enumerate() {
            if let Some(e) = keep {
                out[*e] = buf[k];
            }
        }
    }
}

/// The scaled problem seen as a plain [`NlpProblem`] over the free variables.
/// Used to build the feasibility restoration problem.
impl NlpProblem for ScaledProblem<'_> {
    fn num_vars(&self) -> usize {
        self.nx()
    }
    fn num_cons(&self) -> usize {
        self.m
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.xl.clone(), self.xu.clone())
    }
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.cl.clone(), self.cu.clone())
    }
    fn initial_point(&self) -> Vec<f64> {
        self.to_free(&self.prob.initial_point())
    }
    fn objective(&self, x: &[f64]) -> f64 {
        ScaledProblem::objective(self, x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        ScaledProblem::gradient(self, x, grad)
    }
    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        ScaledProblem::constraints(self, x, c)
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.jac_entries.clone()
    }
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        self.jacobian(x, vals)
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_entries.clone()
    }
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        self.hessian(x, obj_factor, lambda, vals)
    }
}
