//! Polar AC power-flow model as a nonlinear program.
//!
//! One model type covers AC-OPF, the feasibility test, maximum load
//! restoration and the (multi-step) obfuscation post-processing; they differ
//! in objective, in whether line admittances are variables, in optional load
//! scaling variables and in an optional per-step cost band.

use plo_nlp::NlpProblem;

use crate::error::{CoreError, Result};
use crate::network::{admittance, Network};

/// One of the four arc power expressions of a line,
/// `K(g,b)·v_s² + v_f v_t (g·(cg cosδ + sg sinδ) + b·(cb cosδ + sb sinδ))`
/// with `K = ag·g + ab·b + a0`, `δ = θ_f − θ_t`, `v_s` the own-side voltage.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ArcExpr {
    from_side: bool,
    ag: f64,
    ab: f64,
    a0: f64,
    cg: f64,
    sg: f64,
    cb: f64,
    sb: f64,
}

/// Local variable order: `[v_f, v_t, θ_f, θ_t, g, b]`.
pub(crate) type Local = [f64; 6];

impl ArcExpr {
    /// `[P_ft, Q_ft, P_tf, Q_tf]` for a π-model branch with the given tap
    /// ratio, phase shift and total charging susceptance.
    pub fn branch(tap: f64, shift: f64, charging: f64) -> [ArcExpr; 4] {
        let (sn, cs) = shift.sin_cos();
        let t = tap;
        let t2 = t * t;
        let (k1, k2, k3, k4) = (-cs / t, sn / t, -sn / t, -cs / t);
        let (m1, m2, m3, m4) = (-cs / t, -sn / t, sn / t, -cs / t);
        [
            ArcExpr { from_side: true, ag: 1.0 / t2, ab: 0.0, a0: 0.0, cg: k1, sg: k3, cb: k2, sb: k4 },
            ArcExpr {
                from_side: true,
                ag: 0.0,
                ab: -1.0 / t2,
                a0: -charging / (2.0 * t2),
                cg: -k3,
                sg: k1,
                cb: -k4,
                sb: k2,
            },
            ArcExpr { from_side: false, ag: 1.0, ab: 0.0, a0: 0.0, cg: m1, sg: -m3, cb: m2, sb: -m4 },
            ArcExpr {
                from_side: false,
                ag: 0.0,
                ab: -1.0,
                a0: -charging / 2.0,
                cg: -m3,
                sg: -m1,
                cb: -m4,
                sb: -m2,
            },
        ]
    }

    pub fn value(&self, z: &Local) -> f64 {
        let [vf, vt, tf, tt, g, b] = *z;
        let (s, c) = (tf - tt).sin_cos();
        let d = g * (self.cg * c + self.sg * s) + b * (self.cb * c + self.sb * s);
        let k = self.ag * g + self.ab * b + self.a0;
        let vs = if self.from_side { vf } else { vt };
        k * vs * vs + vf * vt * d
    }

    /// Value, gradient and (full, symmetric) Hessian in local coordinates.
    pub fn eval(&self, z: &Local, grad: &mut [f64; 6], hess: &mut [[f64; 6]; 6]) -> f64 {
        let [vf, vt, tf, tt, g, b] = *z;
        let (s, c) = (tf - tt).sin_cos();
        let dg = self.cg * c + self.sg * s;
        let db = self.cb * c + self.sb * s;
        let dgd = -self.cg * s + self.sg * c;
        let dbd = -self.cb * s + self.sb * c;
        let d = g * dg + b * db;
        let dd = g * dgd + b * dbd;
        let k = self.ag * g + self.ab * b + self.a0;
        let (is, vs) = if self.from_side { (0, vf) } else { (1, vt) };
        let w = vf * vt;

        *grad = [vt * d, vf * d, w * dd, -w * dd, self.ag * vs * vs + w * dg, self.ab * vs * vs + w * db];
        grad[is] += 2.0 * k * vs;

        let mut h = [[0.0; 6]; 6];
        h[is][is] = 2.0 * k;
        h[0][1] = d;
        h[0][2] = vt * dd;
        h[0][3] = -vt * dd;
        h[1][2] = vf * dd;
        h[1][3] = -vf * dd;
        h[2][2] = -w * d;
        h[3][3] = -w * d;
        h[2][3] = w * d;
        h[0][4] = vt * dg;
        h[1][4] = vf * dg;
        h[is][4] += 2.0 * self.ag * vs;
        h[0][5] = vt * db;
        h[1][5] = vf * db;
        h[is][5] += 2.0 * self.ab * vs;
        h[2][4] = w * dgd;
        h[3][4] = -w * dgd;
        h[2][5] = w * dbd;
        h[3][5] = -w * dbd;
        for i in 0..6 {
            for j in 0..i {
                h[i][j] = h[j][i];
            }
        }
        *hess = h;
        k * vs * vs + w * d
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LineData {
    pub f: usize,
    pub t: usize,
    pub exprs: [ArcExpr; 4],
    pub s_max2: Option<f64>,
    pub angle: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct GenData {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// cost in $ as `a2·p² + a1·p + a0` with `p` in p.u.
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl GenData {
    pub fn cost(&self, p: f64) -> f64 {
        self.a2 * p * p + self.a1 * p + self.a0
    }

    pub fn cost_deriv(&self, p: f64) -> f64 {
        2.0 * self.a2 * p + self.a1
    }
}

#[derive(Debug, Clone)]
pub enum Objective {
    /// total generation cost (summed over steps)
    Cost,
    /// constant zero: pure feasibility
    Zero,
    /// maximize served active load (requires load variables)
    MaxLoad,
    /// `‖g − g_t‖² + ‖b − b_t‖²` (requires variable admittances)
    Distance { g: Vec<f64>, b: Vec<f64> },
}

#[derive(Debug, Clone)]
pub enum Admittance {
    Fixed { g: Vec<f64>, b: Vec<f64> },
    /// variables with bounds and starting values; equal bounds fix a value
    Variable {
        g_lo: Vec<f64>,
        g_hi: Vec<f64>,
        b_lo: Vec<f64>,
        b_hi: Vec<f64>,
        g0: Vec<f64>,
        b0: Vec<f64>,
    },
}

/// Loads for one operating step (p.u., per bus) and an optional band
/// `[lo, hi]` for the step's generation cost.
#[derive(Debug, Clone)]
pub struct Step {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
    pub cost_band: Option<(f64, f64)>,
}

/// Index layout of the model variables.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub nb: usize,
    pub ng: usize,
    pub nl: usize,
    /// number of load-scaling variables per step
    pub nload: usize,
    /// admittance variables present
    pub var_adm: bool,
    pub steps: usize,
}

impl Layout {
    pub fn n_adm(&self) -> usize {
        if self.var_adm {
            2 * self.nl
        } else {
            0
        }
    }
    pub fn step_len(&self) -> usize {
        2 * self.nb + 2 * self.ng + self.nload
    }
    pub fn n_vars(&self) -> usize {
        self.n_adm() + self.steps * self.step_len()
    }
    pub fn g(&self, k: usize) -> usize {
        k
    }
    pub fn b(&self, k: usize) -> usize {
        self.nl + k
    }
    fn base(&self, t: usize) -> usize {
        self.n_adm() + t * self.step_len()
    }
    pub fn v(&self, t: usize, i: usize) -> usize {
        self.base(t) + i
    }
    pub fn theta(&self, t: usize, i: usize) -> usize {
        self.base(t) + self.nb + i
    }
    pub fn pg(&self, t: usize, j: usize) -> usize {
        self.base(t) + 2 * self.nb + j
    }
    pub fn qg(&self, t: usize, j: usize) -> usize {
        self.base(t) + 2 * self.nb + self.ng + j
    }
    pub fn load(&self, t: usize, q: usize) -> usize {
        self.base(t) + 2 * self.nb + 2 * self.ng + q
    }
}

/// AC power-flow nonlinear program over one or more load steps.
#[derive(Debug, Clone)]
pub struct AcModel {
    pub layout: Layout,
    pub(crate) lines: Vec<LineData>,
    pub(crate) gens: Vec<GenData>,
    v_min: Vec<f64>,
    v_max: Vec<f64>,
    gs: Vec<f64>,
    bs: Vec<f64>,
    slack: usize,
    /// bus of each load variable
    pub load_bus: Vec<usize>,
    /// active load (p.u.) behind each load variable
    load_weight: Vec<f64>,
    adm: Admittance,
    objective: Objective,
    steps: Vec<Step>,
    /// rows per step and the offsets inside a step
    rows_per_step: usize,
    thermal_rows: Vec<[Option<usize>; 2]>,
    angle_rows: Vec<Option<usize>>,
    cost_row: Option<usize>,
    start: Vec<f64>,
    jac_len: usize,
    hess_len: usize,
}

pub(crate) struct BuildOptions {
    pub adm: Admittance,
    pub objective: Objective,
    pub steps: Vec<Step>,
    pub load_vars: bool,
}

/// Sink for sparse triplets; structure and values are produced by the same
/// traversal so they always line up.
trait Sink {
    fn put(&mut self, row: usize, col: usize, val: f64);
}

struct Pattern(Vec<(usize, usize)>);
impl Sink for Pattern {
    fn put(&mut self, row: usize, col: usize, _: f64) {
        self.0.push((row, col));
    }
}

struct Values<'a>(&'a mut [f64], usize);
impl Sink for Values<'_> {
    fn put(&mut self, _: usize, _: usize, val: f64) {
        self.0[self.1] = val;
        self.1 += 1;
    }
}

struct HessPattern(Vec<(usize, usize)>);
impl Sink for HessPattern {
    fn put(&mut self, row: usize, col: usize, _: f64) {
        self.0.push((row.max(col), row.min(col)));
    }
}

impl AcModel {
    pub(crate) fn new(net: &Network, opts: BuildOptions) -> Result<Self> {
        let idx = net.bus_index();
        let nb = net.buses.len();
        let nl = net.lines.len();
        let slack = net.slack_index().ok_or(CoreError::MissingSlack)?;
        let lines: Vec<LineData> = net
            .lines
            .iter()
            .map(|l| {
                let f = *idx.get(&l.from_bus).ok_or(CoreError::UnknownBus(l.from_bus))?;
                let t = *idx.get(&l.to_bus).ok_or(CoreError::UnknownBus(l.to_bus))?;
                Ok(LineData {
                    f,
                    t,
                    exprs: ArcExpr::branch(l.tap, l.shift, l.charging),
                    s_max2: l.has_thermal_limit().then_some(l.s_max * l.s_max),
                    angle: l.has_angle_limit().then_some(l.angle_max),
                })
            })
            .collect::<Result<_>>()?;
        let base = net.base_mva;
        let gens: Vec<GenData> = net
            .generators
            .iter()
            .map(|g| {
                Ok(GenData {
                    bus: *idx.get(&g.bus).ok_or(CoreError::UnknownBus(g.bus))?,
                    p_min: g.p_min,
                    p_max: g.p_max,
                    q_min: g.q_min,
                    q_max: g.q_max,
                    a2: g.c2 * base * base,
                    a1: g.c1 * base,
                    a0: g.c0,
                })
            })
            .collect::<Result<_>>()?;
        match &opts.adm {
            Admittance::Fixed { g, b } => {
                if g.len() != nl || b.len() != nl {
                    return Err(CoreError::Invalid("admittance vector length".into()));
                }
            }
            Admittance::Variable { g_lo, g_hi, b_lo, b_hi, g0, b0 } => {
                if [g_lo, g_hi, b_lo, b_hi, g0, b0].iter().any(|v| v.len() != nl) {
                    return Err(CoreError::Invalid("admittance bound length".into()));
                }
            }
        }
        if let Objective::Distance { g, b } = &opts.objective {
            if g.len() != nl || b.len() != nl {
                return Err(CoreError::Invalid("distance target length".into()));
            }
        }
        if opts.steps.is_empty() || opts.steps.iter().any(|s| s.pd.len() != nb || s.qd.len() != nb) {
            return Err(CoreError::Invalid("load step dimensions".into()));
        }
        let (load_bus, load_weight) = if opts.load_vars {
            let pd = &opts.steps[0].pd;
            let qd = &opts.steps[0].qd;
            let buses: Vec<usize> = (0..nb).filter(|&i| pd[i] != 0.0 || qd[i] != 0.0).collect();
            let w = buses.iter().map(|&i| pd[i].max(0.0)).collect();
            (buses, w)
        } else {
            (Vec::new(), Vec::new())
        };

        let mut row = 2 * nb;
        let mut thermal_rows = Vec::with_capacity(nl);
        for l in &lines {
            if l.s_max2.is_some() {
                thermal_rows.push([Some(row), Some(row + 1)]);
                row += 2;
            } else {
                thermal_rows.push([None, None]);
            }
        }
        let mut angle_rows = Vec::with_capacity(nl);
        for l in &lines {
            if l.angle.is_some() {
                angle_rows.push(Some(row));
                row += 1;
            } else {
                angle_rows.push(None);
            }
        }
        let has_band = opts.steps.iter().any(|s| s.cost_band.is_some());
        let cost_row = if has_band {
            row += 1;
            Some(row - 1)
        } else {
            None
        };

        let layout = Layout {
            nb,
            ng: gens.len(),
            nl,
            nload: load_bus.len(),
            var_adm: matches!(opts.adm, Admittance::Variable { .. }),
            steps: opts.steps.len(),
        };
        let mut model = AcModel {
            layout,
            lines,
            gens,
            v_min: net.buses.iter().map(|b| b.v_min).collect(),
            v_max: net.buses.iter().map(|b| b.v_max).collect(),
            gs: net.buses.iter().map(|b| b.gs).collect(),
            bs: net.buses.iter().map(|b| b.bs).collect(),
            slack,
            load_bus,
            load_weight,
            adm: opts.adm,
            objective: opts.objective,
            steps: opts.steps,
            rows_per_step: row,
            thermal_rows,
            angle_rows,
            cost_row,
            start: Vec::new(),
            jac_len: 0,
            hess_len: 0,
        };
        model.start = model.flat_start();
        let x = model.start.clone();
        let mut p = Pattern(Vec::new());
        model.jac_walk(&x, &mut p);
        model.jac_len = p.0.len();
        let mut h = HessPattern(Vec::new());
        let lam = vec![1.0; model.num_cons()];
        model.hess_walk(&x, 1.0, &lam, &mut h);
        model.hess_len = h.0.len();
        Ok(model)
    }

    /// `v = 1` (clipped to bounds), `θ = 0`, mid-range dispatch, full load.
    pub fn flat_start(&self) -> Vec<f64> {
        let lay = self.layout;
        let mut x = vec![0.0; lay.n_vars()];
        if let Admittance::Variable { g0, b0, .. } = &self.adm {
            for k in 0..lay.nl {
                x[lay.g(k)] = g0[k];
                x[lay.b(k)] = b0[k];
            }
        }
        let mid = |lo: f64, hi: f64| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        };
        for t in 0..lay.steps {
            for i in 0..lay.nb {
                x[lay.v(t, i)] = 1.0f64.clamp(self.v_min[i].min(self.v_max[i]), self.v_max[i].max(self.v_min[i]));
            }
            for (j, g) in self.gens.iter().enumerate() {
                x[lay.pg(t, j)] = mid(g.p_min, g.p_max);
                x[lay.qg(t, j)] = mid(g.q_min, g.q_max);
            }
            for q in 0..lay.nload {
                x[lay.load(t, q)] = 1.0;
            }
        }
        x
    }

    pub fn set_start(&mut self, x: Vec<f64>) {
        assert_eq!(x.len(), self.layout.n_vars());
        self.start = x;
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    /// Line admittances at point `x`.
    pub fn line_admittance(&self, x: &[f64], k: usize) -> (f64, f64) {
        match &self.adm {
            Admittance::Fixed { g, b } => (g[k], b[k]),
            Admittance::Variable { .. } => (x[self.layout.g(k)], x[self.layout.b(k)]),
        }
    }

    fn local(&self, x: &[f64], t: usize, k: usize) -> Local {
        let lay = &self.layout;
        let l = &self.lines[k];
        let (g, b) = self.line_admittance(x, k);
        [x[lay.v(t, l.f)], x[lay.v(t, l.t)], x[lay.theta(t, l.f)], x[lay.theta(t, l.t)], g, b]
    }

    /// Global indices of the local variables (admittances only when variable).
    fn local_index(&self, t: usize, k: usize) -> [Option<usize>; 6] {
        let lay = &self.layout;
        let l = &self.lines[k];
        let (gi, bi) = if lay.var_adm { (Some(lay.g(k)), Some(lay.b(k))) } else { (None, None) };
        [Some(lay.v(t, l.f)), Some(lay.v(t, l.t)), Some(lay.theta(t, l.f)), Some(lay.theta(t, l.t)), gi, bi]
    }

    /// `[P_ft, Q_ft, P_tf, Q_tf]` of line `k` at step `t`.
    pub fn arc_flows(&self, x: &[f64], t: usize, k: usize) -> [f64; 4] {
        let z = self.local(x, t, k);
        let e = &self.lines[k].exprs;
        [e[0].value(&z), e[1].value(&z), e[2].value(&z), e[3].value(&z)]
    }

    pub fn step_cost(&self, x: &[f64], t: usize) -> f64 {
        self.gens
            .iter()
            .enumerate()
            .map(|(j, g)| g.cost(x[self.layout.pg(t, j)]))
            .sum()
    }

    fn row(&self, t: usize, r: usize) -> usize {
        t * self.rows_per_step + r
    }

    fn jac_walk(&self, x: &[f64], sink: &mut impl Sink) {
        let lay = self.layout;
        let mut grad = [0.0; 6];
        let mut hess = [[0.0; 6]; 6];
        for t in 0..lay.steps {
            for (k, l) in self.lines.iter().enumerate() {
                let z = self.local(x, t, k);
                let ids = self.local_index(t, k);
                let rows = [l.f, lay.nb + l.f, l.t, lay.nb + l.t];
                let mut vals = [0.0; 4];
                let mut grads = [[0.0; 6]; 4];
                for e in 0..4 {
                    vals[e] = l.exprs[e].eval(&z, &mut grad, &mut hess);
                    grads[e] = grad;
                    for a in 0..6 {
                        if let Some(col) = ids[a] {
                            sink.put(self.row(t, rows[e]), col, -grad[a]);
                        }
                    }
                }
                for (d, r) in self.thermal_rows[k].iter().enumerate() {
                    if let Some(r) = r {
                        let (p, q) = (vals[2 * d], vals[2 * d + 1]);
                        for a in 0..6 {
                            if let Some(col) = ids[a] {
                                let v = 2.0 * p * grads[2 * d][a] + 2.0 * q * grads[2 * d + 1][a];
                                sink.put(self.row(t, *r), col, v);
                            }
                        }
                    }
                }
                if let Some(r) = self.angle_rows[k] {
                    sink.put(self.row(t, r), lay.theta(t, l.f), 1.0);
                    sink.put(self.row(t, r), lay.theta(t, l.t), -1.0);
                }
            }
            for (j, g) in self.gens.iter().enumerate() {
                sink.put(self.row(t, g.bus), lay.pg(t, j), 1.0);
                sink.put(self.row(t, lay.nb + g.bus), lay.qg(t, j), 1.0);
            }
            for i in 0..lay.nb {
                let v = x[lay.v(t, i)];
                if self.gs[i] != 0.0 {
                    sink.put(self.row(t, i), lay.v(t, i), -2.0 * self.gs[i] * v);
                }
                if self.bs[i] != 0.0 {
                    sink.put(self.row(t, lay.nb + i), lay.v(t, i), 2.0 * self.bs[i] * v);
                }
            }
            let step = &self.steps[t];
            for (q, &i) in self.load_bus.iter().enumerate() {
                sink.put(self.row(t, i), lay.load(t, q), -step.pd[i]);
                sink.put(self.row(t, lay.nb + i), lay.load(t, q), -step.qd[i]);
            }
            if let Some(r) = self.cost_row {
                for (j, g) in self.gens.iter().enumerate() {
                    sink.put(self.row(t, r), lay.pg(t, j), g.cost_deriv(x[lay.pg(t, j)]));
                }
            }
        }
    }

    fn hess_walk(&self, x: &[f64], obj_factor: f64, lambda: &[f64], sink: &mut impl Sink) {
        let lay = self.layout;
        let mut grad = [0.0; 6];
        let mut hess = [[0.0; 6]; 6];
        for t in 0..lay.steps {
            for (k, l) in self.lines.iter().enumerate() {
                let z = self.local(x, t, k);
                let ids = self.local_index(t, k);
                let rows = [l.f, lay.nb + l.f, l.t, lay.nb + l.t];
                let mut acc = [[0.0; 6]; 6];
                let mut vals = [0.0; 4];
                let mut grads = [[0.0; 6]; 4];
                let mut hs = [[[0.0; 6]; 6]; 4];
                for e in 0..4 {
                    vals[e] = l.exprs[e].eval(&z, &mut grad, &mut hess);
                    grads[e] = grad;
                    hs[e] = hess;
                    let w = -lambda[self.row(t, rows[e])];
                    for a in 0..6 {
                        for b in 0..6 {
                            acc[a][b] += w * hess[a][b];
                        }
                    }
                }
                for (d, r) in self.thermal_rows[k].iter().enumerate() {
                    if let Some(r) = r {
                        let w = lambda[self.row(t, *r)];
                        let (ip, iq) = (2 * d, 2 * d + 1);
                        for a in 0..6 {
                            for b in 0..6 {
                                acc[a][b] += 2.0
                                    * w
                                    * (grads[ip][a] * grads[ip][b]
                                        + vals[ip] * hs[ip][a][b]
                                        + grads[iq][a] * grads[iq][b]
                                        + vals[iq] * hs[iq][a][b]);
                            }
                        }
                    }
                }
                for a in 0..6 {
                    for b in 0..=a {
                        if let (Some(ca), Some(cb)) = (ids[a], ids[b]) {
                            sink.put(ca, cb, acc[a][b]);
                        }
                    }
                }
            }
            for i in 0..lay.nb {
                if self.gs[i] != 0.0 || self.bs[i] != 0.0 {
                    let v = -2.0 * self.gs[i] * lambda[self.row(t, i)] + 2.0 * self.bs[i] * lambda[self.row(t, lay.nb + i)];
                    sink.put(lay.v(t, i), lay.v(t, i), v);
                }
            }
            let band_w = self.cost_row.map_or(0.0, |r| lambda[self.row(t, r)]);
            let obj_w = if matches!(self.objective, Objective::Cost) { obj_factor } else { 0.0 };
            for (j, g) in self.gens.iter().enumerate() {
                if g.a2 != 0.0 && (self.cost_row.is_some() || matches!(self.objective, Objective::Cost)) {
                    sink.put(lay.pg(t, j), lay.pg(t, j), 2.0 * g.a2 * (obj_w + band_w));
                }
            }
        }
        if let Objective::Distance { .. } = self.objective {
            for k in 0..lay.nl {
                sink.put(lay.g(k), lay.g(k), 2.0 * obj_factor);
                sink.put(lay.b(k), lay.b(k), 2.0 * obj_factor);
            }
        }
    }
}

impl NlpProblem for AcModel {
    fn num_vars(&self) -> usize {
        self.layout.n_vars()
    }

    fn num_cons(&self) -> usize {
        self.layout.steps * self.rows_per_step
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lay = self.layout;
        let n = lay.n_vars();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        if let Admittance::Variable { g_lo, g_hi, b_lo, b_hi, .. } = &self.adm {
            for k in 0..lay.nl {
                lo[lay.g(k)] = g_lo[k];
                hi[lay.g(k)] = g_hi[k];
                lo[lay.b(k)] = b_lo[k];
                hi[lay.b(k)] = b_hi[k];
            }
        }
        for t in 0..lay.steps {
            for i in 0..lay.nb {
                lo[lay.v(t, i)] = self.v_min[i];
                hi[lay.v(t, i)] = self.v_max[i];
            }
            lo[lay.theta(t, self.slack)] = 0.0;
            hi[lay.theta(t, self.slack)] = 0.0;
            for (j, g) in self.gens.iter().enumerate() {
                lo[lay.pg(t, j)] = g.p_min;
                hi[lay.pg(t, j)] = g.p_max;
                lo[lay.qg(t, j)] = g.q_min;
                hi[lay.qg(t, j)] = g.q_max;
            }
            for q in 0..lay.nload {
                lo[lay.load(t, q)] = 0.0;
                hi[lay.load(t, q)] = 1.0;
            }
        }
        (lo, hi)
    }

    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lay = self.layout;
        let m = self.num_cons();
        let mut lo = vec![0.0; m];
        let mut hi = vec![0.0; m];
        for (t, step) in self.steps.iter().enumerate() {
            if self.load_bus.is_empty() {
                for i in 0..lay.nb {
                    lo[self.row(t, i)] = step.pd[i];
                    hi[self.row(t, i)] = step.pd[i];
                    lo[self.row(t, lay.nb + i)] = step.qd[i];
                    hi[self.row(t, lay.nb + i)] = step.qd[i];
                }
            }
            for (k, l) in self.lines.iter().enumerate() {
                for r in self.thermal_rows[k].iter().flatten() {
                    lo[self.row(t, *r)] = f64::NEG_INFINITY;
                    hi[self.row(t, *r)] = l.s_max2.unwrap_or(f64::INFINITY);
                }
                if let (Some(r), Some(a)) = (self.angle_rows[k], l.angle) {
                    lo[self.row(t, r)] = -a;
                    hi[self.row(t, r)] = a;
                }
            }
            if let Some(r) = self.cost_row {
                let (a, b) = step.cost_band.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                lo[self.row(t, r)] = a;
                hi[self.row(t, r)] = b;
            }
        }
        (lo, hi)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.start.clone()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let lay = self.layout;
        match &self.objective {
            Objective::Cost => (0..lay.steps).map(|t| self.step_cost(x, t)).sum(),
            Objective::Zero => 0.0,
            Objective::MaxLoad => -(0..lay.steps)
                .map(|t| {
                    (0..lay.nload)
                        .map(|q| self.load_weight[q] * x[lay.load(t, q)])
                        .sum::<f64>()
                })
                .sum::<f64>(),
            Objective::Distance { g, b } => (0..lay.nl)
                .map(|k| (x[lay.g(k)] - g[k]).powi(2) + (x[lay.b(k)] - b[k]).powi(2))
                .sum(),
        }
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let lay = self.layout;
        grad.iter_mut().for_each(|v| *v = 0.0);
        match &self.objective {
            Objective::Cost => {
                for t in 0..lay.steps {
                    for (j, g) in self.gens.iter().enumerate() {
                        grad[lay.pg(t, j)] = g.cost_deriv(x[lay.pg(t, j)]);
                    }
                }
            }
            Objective::Zero => {}
            Objective::MaxLoad => {
                for t in 0..lay.steps {
                    for q in 0..lay.nload {
                        grad[lay.load(t, q)] = -self.load_weight[q];
                    }
                }
            }
            Objective::Distance { g, b } => {
                for k in 0..lay.nl {
                    grad[lay.g(k)] = 2.0 * (x[lay.g(k)] - g[k]);
                    grad[lay.b(k)] = 2.0 * (x[lay.b(k)] - b[k]);
                }
            }
        }
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        let lay = self.layout;
        c.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..lay.steps {
            for (k, l) in self.lines.iter().enumerate() {
                let f = self.arc_flows(x, t, k);
                c[self.row(t, l.f)] -= f[0];
                c[self.row(t, lay.nb + l.f)] -= f[1];
                c[self.row(t, l.t)] -= f[2];
                c[self.row(t, lay.nb + l.t)] -= f[3];
                if let [Some(rf), Some(rt)] = self.thermal_rows[k] {
                    c[self.row(t, rf)] = f[0] * f[0] + f[1] * f[1];
                    c[self.row(t, rt)] = f[2] * f[2] + f[3] * f[3];
                }
                if let Some(r) = self.angle_rows[k] {
                    c[self.row(t, r)] = x[lay.theta(t, l.f)] - x[lay.theta(t, l.t)];
                }
            }
            for (j, g) in self.gens.iter().enumerate() {
                c[self.row(t, g.bus)] += x[lay.pg(t, j)];
                c[self.row(t, lay.nb + g.bus)] += x[lay.qg(t, j)];
            }
            for i in 0..lay.nb {
                let v = x[lay.v(t, i)];
                c[self.row(t, i)] -= self.gs[i] * v * v;
                c[self.row(t, lay.nb + i)] += self.bs[i] * v * v;
            }
            let step = &self.steps[t];
            for (q, &i) in self.load_bus.iter().enumerate() {
                let l = x[lay.load(t, q)];
                c[self.row(t, i)] -= step.pd[i] * l;
                c[self.row(t, lay.nb + i)] -= step.qd[i] * l;
            }
            if let Some(r) = self.cost_row {
                c[self.row(t, r)] = self.step_cost(x, t);
            }
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut p = Pattern(Vec::with_capacity(self.jac_len));
        self.jac_walk(&self.start, &mut p);
        p.0
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut s = Values(vals, 0);
        self.jac_walk(x, &mut s);
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut p = HessPattern(Vec::with_capacity(self.hess_len));
        let lam = vec![1.0; self.num_cons()];
        self.hess_walk(&self.start, 1.0, &lam, &mut p);
        p.0
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        let mut s = Values(vals, 0);
        self.hess_walk(x, obj_factor, lambda, &mut s);
    }
}

/// Series admittances of all lines of `net`.
pub(crate) fn fixed_admittance(net: &Network) -> Result<Admittance> {
    let (g, b) = net.admittances()?;
    Ok(Admittance::Fixed { g, b })
}

/// The base load step of `net`.
pub(crate) fn base_step(net: &Network) -> Step {
    Step {
        pd: net.buses.iter().map(|b| b.pd).collect(),
        qd: net.buses.iter().map(|b| b.qd).collect(),
        cost_band: None,
    }
}

#[allow(dead_code)]
pub(crate) fn line_admittance(net: &Network, k: usize) -> Result<(f64, f64)> {
    admittance(&net.lines[k])
}
