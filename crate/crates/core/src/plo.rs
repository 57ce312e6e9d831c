//! Private line obfuscation: noisy queries followed by a feasibility and
//! faithfulness restoring post-processing, for one or several load steps.

use plo_nlp::Status;
use serde::{Deserialize, Serialize};

use crate::dp::{privatize_lines, LevelMean, NoisyLineData, PrivacyParams, SeededUniform, UniformSource};
use crate::error::{CoreError, Result};
use crate::network::Network;
use crate::opf::{self, AcModel, Admittance, BuildOptions, Objective, OpfSolution, Step};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    /// `‖ġ − g̃‖₂`
    pub noisy_g: f64,
    /// `‖ḃ − b̃‖₂`
    pub noisy_b: f64,
    /// `‖ġ − g‖₂`
    pub true_g: f64,
    /// `‖ḃ − b‖₂`
    pub true_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationResult {
    /// released network, impedances recomputed from `(ġ, ḃ)`
    pub network_out: Network,
    pub g_dot: Vec<f64>,
    pub b_dot: Vec<f64>,
    pub noisy: NoisyLineData,
    pub distances: Distances,
    /// dispatch cost found by the post-processing, per step
    pub costs_out: Vec<f64>,
    /// `costs_out[0]`
    pub cost_out: f64,
    /// cost bands `[lo, hi]` imposed per step
    pub cost_bands: Vec<(f64, f64)>,
    /// operating point found for each step on the released network
    pub dispatch: Vec<OpfSolution>,
    pub factor2_ok: bool,
    /// mean-deviation factor that produced the result
    pub lambda_used: f64,
    pub status: Status,
    pub iterations: usize,
}

/// `[min(μ/λ, λμ), max(μ/λ, λμ)]`
pub fn level_interval(mean: f64, lambda: f64) -> (f64, f64) {
    let (a, b) = (mean / lambda, mean * lambda);
    (a.min(b), a.max(b))
}

/// Band `[O* − β|O*|, O* + β|O*|]`.
pub fn cost_band(o_star: f64, beta: f64) -> (f64, f64) {
    (o_star - beta * o_star.abs(), o_star + beta * o_star.abs())
}

fn level_bounds(levels: &[LevelMean], n: usize, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for lvl in levels {
        let (a, b) = level_interval(lvl.mean, lambda);
        for &k in &lvl.lines {
            lo[k] = a;
            hi[k] = b;
        }
    }
    (lo, hi)
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Post-processing problem for the given noisy data, load steps and
/// mean-deviation factor. Also returns the clipped noisy admittances, which
/// are the model's starting admittances.
pub fn post_processing_model(
    net: &Network,
    noisy: &NoisyLineData,
    steps: Vec<Step>,
    lambda: f64,
) -> Result<(AcModel, Vec<f64>, Vec<f64>)> {
    let n = net.lines.len();
    let (mut g_lo, mut g_hi) = level_bounds(&noisy.mu_g, n, lambda);
    let (b_lo, b_hi) = level_bounds(&noisy.mu_b, n, lambda);
    for k in 0..n {
        if noisy.reactive_only(k) {
            g_lo[k] = 0.0;
            g_hi[k] = 0.0;
        }
    }
    let g0: Vec<f64> = (0..n).map(|k| noisy.g_tilde[k].clamp(g_lo[k], g_hi[k])).collect();
    let b0: Vec<f64> = (0..n).map(|k| noisy.b_tilde[k].clamp(b_lo[k], b_hi[k])).collect();
    let model = AcModel::new(
        net,
        BuildOptions {
            adm: Admittance::Variable {
                g_lo,
                g_hi,
                b_lo,
                b_hi,
                g0: g0.clone(),
                b0: b0.clone(),
            },
            objective: Objective::Distance {
                g: noisy.g_tilde.clone(),
                b: noisy.b_tilde.clone(),
            },
            steps,
            load_vars: false,
        },
    )?;
    Ok((model, g0, b0))
}

/// Starting point: clipped noisy admittances and, per step, the optimal
/// dispatch of the clipped noisy network when it exists.
fn warm_start(model: &AcModel, net: &Network, steps: &[Step], g0: &[f64], b0: &[f64]) -> Vec<f64> {
    let mut x = model.flat_start();
    let lay = model.layout;
    let clipped = net.with_admittances(g0, b0);
    for (t, step) in steps.iter().enumerate() {
        let mut scenario = clipped.clone();
        for (i, bus) in scenario.buses.iter_mut().enumerate() {
            bus.pd = step.pd[i];
            bus.qd = step.qd[i];
        }
        let Ok(sol) = opf::solve_ac_opf(&scenario) else { continue };
        for i in 0..lay.nb {
            x[lay.v(t, i)] = sol.v[i];
            x[lay.theta(t, i)] = sol.theta[i];
        }
        for j in 0..lay.ng {
            x[lay.pg(t, j)] = sol.pg[j];
            x[lay.qg(t, j)] = sol.qg[j];
        }
    }
    x
}

fn run_post_processing(
    net: &Network,
    noisy: NoisyLineData,
    steps: Vec<Step>,
    p: &PrivacyParams,
) -> Result<ObfuscationResult> {
    let (g, b) = net.admittances()?;
    let bands: Vec<(f64, f64)> = steps.iter().map(|s| s.cost_band.expect("band set")).collect();
    let mut last_status = Status::NumericFailure;
    for factor in [1.0, 2.0, 4.0] {
        let lambda = p.lambda_bound * factor;
        let (mut model, g0, b0) = post_processing_model(net, &noisy, steps.clone(), lambda)?;
        let x0 = warm_start(&model, net, &steps, &g0, &b0);
        model.set_start(x0);
        let res = plo_nlp::solve(&model, &opf::solver_options())?;
        if !res.is_optimal() {
            log::info!("post-processing with lambda {lambda}: {}", res.status);
            last_status = res.status;
            continue;
        }
        let n = net.lines.len();
        let g_dot: Vec<f64> = (0..n).map(|k| model.line_admittance(&res.x, k).0).collect();
        let b_dot: Vec<f64> = (0..n).map(|k| model.line_admittance(&res.x, k).1).collect();
        let dispatch: Vec<OpfSolution> = (0..steps.len())
            .map(|t| OpfSolution::from_model(&model, &res.x, t, res.iterations))
            .collect();
        let costs_out: Vec<f64> = dispatch.iter().map(|d| d.cost).collect();
        let distances = Distances {
            noisy_g: norm_diff(&g_dot, &noisy.g_tilde),
            noisy_b: norm_diff(&b_dot, &noisy.b_tilde),
            true_g: norm_diff(&g_dot, &g),
            true_b: norm_diff(&b_dot, &b),
        };
        let mut out = ObfuscationResult {
            network_out: net.with_admittances(&g_dot, &b_dot),
            g_dot,
            b_dot,
            noisy,
            distances,
            cost_out: costs_out[0],
            costs_out,
            cost_bands: bands,
            dispatch,
            factor2_ok: false,
            lambda_used: lambda,
            status: res.status,
            iterations: res.iterations,
        };
        out.factor2_ok = verify_factor2(&out, &g, &b);
        return Ok(out);
    }
    Err(CoreError::NotSolved {
        status: last_status,
        context: format!("post-processing of {} after relaxing the level bounds", net.name),
    })
}

/// Single-snapshot obfuscation of `net` with public optimal cost `o_star`.
pub fn plo_obfuscate(net: &Network, o_star: f64, p: &PrivacyParams, seed: u64) -> Result<ObfuscationResult> {
    plo_obfuscate_with(net, o_star, p, &mut SeededUniform::new(seed))
}

pub fn plo_obfuscate_with(
    net: &Network,
    o_star: f64,
    p: &PrivacyParams,
    src: &mut dyn UniformSource,
) -> Result<ObfuscationResult> {
    let noisy = privatize_lines(net, p, src)?;
    let mut step = opf::base_step(net);
    step.cost_band = Some(cost_band(o_star, p.beta));
    run_post_processing(net, noisy, vec![step], p)
}

/// Multi-step obfuscation: one noisy draw, one shared set of admittances
/// that must be feasible and faithful at every selected load step.
pub fn mplo_obfuscate(
    nets: &[Network],
    o_stars: &[f64],
    p: &PrivacyParams,
    steps: &[usize],
    seed: u64,
) -> Result<ObfuscationResult> {
    mplo_obfuscate_with(nets, o_stars, p, steps, &mut SeededUniform::new(seed))
}

pub fn mplo_obfuscate_with(
    nets: &[Network],
    o_stars: &[f64],
    p: &PrivacyParams,
    steps: &[usize],
    src: &mut dyn UniformSource,
) -> Result<ObfuscationResult> {
    let first = nets
        .first()
        .ok_or_else(|| CoreError::Invalid("no load steps given".into()))?;
    if nets.len() != o_stars.len() {
        return Err(CoreError::Invalid(format!(
            "{} networks but {} optimal costs",
            nets.len(),
            o_stars.len()
        )));
    }
    if steps.is_empty() || steps.iter().any(|&s| s >= nets.len()) {
        return Err(CoreError::Invalid(format!("step selection {steps:?} out of range")));
    }
    for n in &nets[1..] {
        let same = n.buses.len() == first.buses.len()
            && n.lines == first.lines
            && n.generators == first.generators
            && n.buses.iter().zip(&first.buses).all(|(a, b)| a.id == b.id && a.base_kv == b.base_kv);
        if !same {
            return Err(CoreError::Invalid("load steps do not share one network".into()));
        }
    }
    let noisy = privatize_lines(first, p, src)?;
    let selected = steps
        .iter()
        .map(|&s| {
            let mut step = opf::base_step(&nets[s]);
            step.cost_band = Some(cost_band(o_stars[s], p.beta));
            step
        })
        .collect();
    run_post_processing(first, noisy, selected, p)
}

/// `‖ġ−g‖ + ‖ḃ−b‖ ≤ 2‖g̃−g‖ + 2‖b̃−b‖` with `1e-8` slack.
pub fn verify_factor2(res: &ObfuscationResult, g: &[f64], b: &[f64]) -> bool {
    let lhs = norm_diff(&res.g_dot, g) + norm_diff(&res.b_dot, b);
    let rhs = 2.0 * norm_diff(&res.noisy.g_tilde, g) + 2.0 * norm_diff(&res.noisy.b_tilde, b);
    lhs <= rhs + 1e-8
}

/// The noisy network released by the Laplace mechanism alone.
pub fn laplace_network(net: &Network, noisy: &NoisyLineData) -> Network {
    net.with_admittances(&noisy.g_tilde, &noisy.b_tilde)
}

/// Load steps scaling `net` uniformly between `lo` and `hi` (inclusive).
pub fn load_profile(net: &Network, h: usize, lo: f64, hi: f64) -> Vec<Network> {
    (0..h)
        .map(|t| {
            let f = if h == 1 { lo } else { lo + (hi - lo) * t as f64 / (h - 1) as f64 };
            net.with_load_factor(f)
        })
        .collect()
}

/// `r` step indices spread evenly over `0..h`, first and last included.
pub fn equally_spaced(h: usize, r: usize) -> Vec<usize> {
    assert!(h >= 1 && r >= 1 && r <= h);
    if r == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..r)
        .map(|i| ((i as f64) * (h - 1) as f64 / (r - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_handle_negative_means() {
        assert_eq!(level_interval(4.0, 2.0), (2.0, 8.0));
        assert_eq!(level_interval(-4.0, 2.0), (-8.0, -2.0));
    }

    #[test]
    fn spaced_steps_cover_horizon() {
        assert_eq!(equally_spaced(31, 1), vec![0]);
        assert_eq!(equally_spaced(31, 4), vec![0, 10, 20, 30]);
        assert_eq!(equally_spaced(31, 31), (0..31).collect::<Vec<_>>());
    }
}
