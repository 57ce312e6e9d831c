/// A smooth nonlinear program
///
/// ```text
///   min f(x)   s.t.  cl <= c(x) <= cu,   xl <= x <= xu
/// ```
///
/// Infinite bounds are allowed. Rows with `cl == cu` are equality
/// constraints and variables with `xl == xu` are treated as fixed.
/// Sparsity structures are queried once and must not change between calls;
/// repeated `(row, col)` pairs are summed.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_cons(&self) -> usize;

    /// Lower and upper variable bounds.
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Lower and upper constraint bounds.
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], c: &mut [f64]);

    /// `(row, col)` of every Jacobian value written by `jacobian_values`.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]);

    /// `(row, col)` with `row >= col` of every value written by `hessian_values`.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Lower triangle of `obj_factor * ∇²f(x) + Σ_i lambda_i ∇²c_i(x)`.
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]);
}

impl<P: NlpProblem + ?Sized> NlpProblem for &P {
    fn num_vars(&self) -> usize {
        (**self).num_vars()
    }
    fn num_cons(&self) -> usize {
        (**self).num_cons()
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (**self).var_bounds()
    }
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (**self).con_bounds()
    }
    fn initial_point(&self) -> Vec<f64> {
        (**self).initial_point()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (**self).objective(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (**self).gradient(x, grad)
    }
    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        (**self).constraints(x, c)
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        (**self).jacobian_structure()
    }
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        (**self).jacobian_values(x, vals)
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        (**self).hessian_structure()
    }
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        (**self).hessian_values(x, obj_factor, lambda, vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericFailure,
    /// Stopped by the intermediate callback.
    UserStop,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::IterationLimit => "iteration_limit",
            Status::NumericFailure => "numeric_failure",
            Status::UserStop => "user_stop",
        };
        f.write_str(s)
    }
}

/// Outcome of a solve, in the user's (unscaled) coordinates.
#[derive(Debug, Clone)]
pub struct NlpResult {
    pub status: Status,
    pub x: Vec<f64>,
    pub obj: f64,
    /// Scaled KKT error at the returned point.
    pub kkt_residual: f64,
    /// Largest violation of a constraint or variable bound.
    pub constraint_violation: f64,
    pub iterations: usize,
    /// Constraint multipliers (sign convention: L = f + λᵀc).
    pub lambda: Vec<f64>,
}

impl NlpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Largest violation of the variable and constraint bounds at `x`, in the
/// problem's units; infinite when a constraint cannot be evaluated.
pub fn constraint_violation(prob: &dyn NlpProblem, x: &[f64]) -> f64 {
    let mut c = vec![0.0; prob.num_cons()];
    prob.constraints(x, &mut c);
    if c.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let (cl, cu) = prob.con_bounds();
    let (xl, xu) = prob.var_bounds();
    let rows = c.iter().zip(cl.iter().zip(&cu)).map(|(&v, (&l, &u))| (l - v).max(v - u));
    let vars = x.iter().zip(xl.iter().zip(&xu)).map(|(&v, (&l, &u))| (l - v).max(v - u));
    rows.chain(vars).fold(0.0, f64::max)
}
