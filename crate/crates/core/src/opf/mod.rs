//! AC-OPF, feasibility checking and maximum load restoration.

mod model;

use plo_nlp::{NlpProblem, NlpResult, Options, Status};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::network::Network;

pub use model::{AcModel, Admittance, Layout, Objective, Step};
pub(crate) use model::{base_step, fixed_admittance, BuildOptions};

/// Complex power on both ends of a line (p.u.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl LineFlow {
    /// Larger directed active flow magnitude.
    pub fn max_active(&self) -> f64 {
        self.p_from.abs().max(self.p_to.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub flows: Vec<LineFlow>,
    pub cost: f64,
    pub iterations: usize,
}

impl OpfSolution {
    pub(crate) fn from_model(model: &AcModel, x: &[f64], step: usize, iterations: usize) -> Self {
        let lay = model.layout;
        OpfSolution {
            v: (0..lay.nb).map(|i| x[lay.v(step, i)]).collect(),
            theta: (0..lay.nb).map(|i| x[lay.theta(step, i)]).collect(),
            pg: (0..lay.ng).map(|j| x[lay.pg(step, j)]).collect(),
            qg: (0..lay.ng).map(|j| x[lay.qg(step, j)]).collect(),
            flows: (0..lay.nl)
                .map(|k| {
                    let [p_from, q_from, p_to, q_to] = model.arc_flows(x, step, k);
                    LineFlow { p_from, q_from, p_to, q_to }
                })
                .collect(),
            cost: model.step_cost(x, step),
            iterations,
        }
    }
}

/// Solver settings used by every model in the crate.
pub fn solver_options() -> Options {
    Options {
        max_iter: 1000,
        ..Options::default()
    }
}

/// Runs the interior-point solver on `p`, failing on anything but a
/// converged point.
pub(crate) fn solve_model(p: &dyn NlpProblem, context: &str) -> Result<NlpResult> {
    let res = plo_nlp::solve(p, &solver_options())?;
    if !res.is_optimal() {
        return Err(CoreError::NotSolved {
            status: res.status,
            context: context.to_string(),
        });
    }
    Ok(res)
}

/// Minimum-cost dispatch problem for `net`.
pub fn build_ac_opf(net: &Network) -> Result<AcModel> {
    AcModel::new(
        net,
        BuildOptions {
            adm: fixed_admittance(net)?,
            objective: Objective::Cost,
            steps: vec![base_step(net)],
            load_vars: false,
        },
    )
}

/// AC-OPF from a flat start.
pub fn solve_ac_opf(net: &Network) -> Result<OpfSolution> {
    let model = build_ac_opf(net)?;
    let res = solve_model(&model, &format!("AC-OPF of {}", net.name))?;
    Ok(OpfSolution::from_model(&model, &res.x, 0, res.iterations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
    /// the solver stopped without deciding
    Undetermined(Status),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Solves the AC power-flow constraints with a zero objective from a flat
/// start.
pub fn check_ac_feasibility(net: &Network) -> Result<Feasibility> {
    feasibility(net, None)
}

/// As [`check_ac_feasibility`], starting from a candidate operating point
/// such as one returned with an obfuscated network. A candidate within the
/// feasibility tolerance settles the question without a solve; if the solve
/// from the candidate stalls, a flat start is tried.
pub fn check_ac_feasibility_from(net: &Network, start: &OpfSolution) -> Result<Feasibility> {
    feasibility(net, Some(start))
}

fn feasibility(net: &Network, start: Option<&OpfSolution>) -> Result<Feasibility> {
    if net.buses.iter().any(|b| b.v_min > b.v_max)
        || net.generators.iter().any(|g| g.p_min > g.p_max || g.q_min > g.q_max)
    {
        return Ok(Feasibility::Infeasible);
    }
    let mut model = AcModel::new(
        net,
        BuildOptions {
            adm: fixed_admittance(net)?,
            objective: Objective::Zero,
            steps: vec![base_step(net)],
            load_vars: false,
        },
    )?;
    if let Some(sol) = start {
        if sol.v.len() != net.buses.len() || sol.pg.len() != net.generators.len() {
            return Err(CoreError::Invalid("starting point does not match the network".into()));
        }
        let lay = model.layout;
        let mut x = model.flat_start();
        for i in 0..lay.nb {
            x[lay.v(0, i)] = sol.v[i];
            x[lay.theta(0, i)] = sol.theta[i];
        }
        for j in 0..lay.ng {
            x[lay.pg(0, j)] = sol.pg[j];
            x[lay.qg(0, j)] = sol.qg[j];
        }
        let feas_tol = solver_options().feas_tol;
        if plo_nlp::constraint_violation(&model, &x) <= feas_tol {
            return Ok(Feasibility::Feasible);
        }
        model.set_start(x);
        match solve_feasibility(&model)? {
            Feasibility::Undetermined(_) => model.set_start(model.flat_start()),
            verdict => return Ok(verdict),
        }
    }
    solve_feasibility(&model)
}

fn solve_feasibility(model: &AcModel) -> Result<Feasibility> {
    let res = plo_nlp::solve(model, &solver_options())?;
    let feas_tol = solver_options().feas_tol;
    // with a zero objective only the returned point's violation matters
    Ok(match res.status {
        Status::Infeasible => Feasibility::Infeasible,
        _ if res.constraint_violation <= feas_tol => Feasibility::Feasible,
        s => Feasibility::Undetermined(s),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationSolution {
    /// per-bus served load factor; 1 at buses without load
    pub l: Vec<f64>,
    pub served_fraction: f64,
    /// operating point; zero on buses and lines outside energized islands
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub flows: Vec<LineFlow>,
    pub cost: f64,
    /// islands whose restoration problem the solver could not settle;
    /// their load is counted as lost
    pub unresolved_islands: usize,
}

/// One energized component of a damaged network.
#[derive(Debug, Clone)]
pub struct Island {
    /// indices into the original bus list
    pub buses: Vec<usize>,
    /// original line index of each island line
    pub lines: Vec<usize>,
    /// original generator index of each island generator
    pub generators: Vec<usize>,
    pub model: AcModel,
}

/// Maximum load restoration after removing `damaged` lines (ids). One
/// model per island that contains generation; other buses serve nothing.
pub fn build_restoration(net: &Network, damaged: &[usize]) -> Result<Vec<Island>> {
    let removed: Vec<usize> = net
        .lines
        .iter()
        .enumerate()
        .filter(|(_, l)| damaged.contains(&l.id))
        .map(|(k, _)| k)
        .collect();
    if removed.len() != damaged.len() {
        return Err(CoreError::Invalid(format!("damaged set {damaged:?} names unknown lines")));
    }
    let mut keep = vec![true; net.lines.len()];
    for &k in &removed {
        keep[k] = false;
    }
    let mut islands = Vec::new();
    for comp in net.components(&removed) {
        let Some(sub) = net.island(&comp, &keep) else { continue };
        let in_comp = |id: u64| comp.iter().any(|&i| net.buses[i].id == id);
        let lines = (0..net.lines.len())
            .filter(|&k| keep[k] && in_comp(net.lines[k].from_bus))
            .collect();
        let generators = (0..net.generators.len())
            .filter(|&j| in_comp(net.generators[j].bus))
            .collect();
        let model = AcModel::new(
            &sub,
            BuildOptions {
                adm: fixed_admittance(&sub)?,
                objective: Objective::MaxLoad,
                steps: vec![base_step(&sub)],
                load_vars: true,
            },
        )?;
        islands.push(Island {
            buses: comp,
            lines,
            generators,
            model,
        });
    }
    Ok(islands)
}

pub enum IslandOutcome {
    Solved(NlpResult),
    /// no operating point exists even with all load shed
    Infeasible,
    /// the solver stopped without a verdict
    Unresolved,
}

/// Solves one island model from its default start and, failing that, from
/// a start with all loads shed.
pub fn solve_island(model: &AcModel) -> Result<IslandOutcome> {
    let opts = solver_options();
    let res = plo_nlp::solve(model, &opts)?;
    if res.is_optimal() {
        return Ok(IslandOutcome::Solved(res));
    }
    let mut shed = model.clone();
    let mut x0 = model.flat_start();
    for q in 0..model.layout.nload {
        x0[model.layout.load(0, q)] = 0.0;
    }
    shed.set_start(x0);
    let again = plo_nlp::solve(&shed, &opts)?;
    if again.is_optimal() {
        return Ok(IslandOutcome::Solved(again));
    }
    if res.status == Status::Infeasible && again.status == Status::Infeasible {
        return Ok(IslandOutcome::Infeasible);
    }
    log::warn!("island restoration unresolved: {} then {}", res.status, again.status);
    Ok(IslandOutcome::Unresolved)
}

/// Maximum served load after removing the `damaged` line ids, island by
/// island. Islands that cannot operate at all serve nothing.
pub fn solve_restoration(net: &Network, damaged: &[usize]) -> Result<RestorationSolution> {
    let islands = build_restoration(net, damaged)?;
    let nb = net.buses.len();
    let mut sol = RestorationSolution {
        l: net.buses.iter().map(|b| if b.pd != 0.0 || b.qd != 0.0 { 0.0 } else { 1.0 }).collect(),
        served_fraction: 0.0,
        v: vec![0.0; nb],
        theta: vec![0.0; nb],
        pg: vec![0.0; net.generators.len()],
        qg: vec![0.0; net.generators.len()],
        flows: vec![
            LineFlow {
                p_from: 0.0,
                q_from: 0.0,
                p_to: 0.0,
                q_to: 0.0
            };
            net.lines.len()
        ],
        cost: 0.0,
        unresolved_islands: 0,
    };
    for island in &islands {
        let res = match solve_island(&island.model)? {
            IslandOutcome::Solved(res) => res,
            IslandOutcome::Infeasible => continue,
            IslandOutcome::Unresolved => {
                sol.unresolved_islands += 1;
                continue;
            }
        };
        let part = OpfSolution::from_model(&island.model, &res.x, 0, res.iterations);
        for (a, &i) in island.buses.iter().enumerate() {
            sol.v[i] = part.v[a];
            sol.theta[i] = part.theta[a];
        }
        for (a, &j) in island.generators.iter().enumerate() {
            sol.pg[j] = part.pg[a];
            sol.qg[j] = part.qg[a];
        }
        for (a, &k) in island.lines.iter().enumerate() {
            sol.flows[k] = part.flows[a];
        }
        sol.cost += part.cost;
        let lay = island.model.layout;
        for (q, &local) in island.model.load_bus.iter().enumerate() {
            sol.l[island.buses[local]] = res.x[lay.load(0, q)].clamp(0.0, 1.0);
        }
    }
    let total: f64 = net.buses.iter().map(|b| b.pd.max(0.0)).sum();
    let served: f64 = net
        .buses
        .iter()
        .zip(&sol.l)
        .map(|(b, l)| b.pd.max(0.0) * l)
        .sum();
    sol.served_fraction = if total > 0.0 { served / total } else { 1.0 };
    Ok(sol)
}
