//! Seeded experiment campaigns over instances and privacy parameters.

use std::path::Path;
use std::time::Instant;

use plo_core::attack::{attack_similarity, evaluate_attack, flow_attack, random_attack, Strategy};
use plo_core::dp::{budget_audit, PrivacyParams};
use plo_core::opf::Feasibility;
use plo_core::plo::{equally_spaced, laplace_network, load_profile, mplo_obfuscate, plo_obfuscate, Distances};
use plo_core::{check_ac_feasibility, check_ac_feasibility_from, parse_case, preprocess, solve_ac_opf, Network};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// A preprocessed test network with its optimal dispatch cost.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub net: Network,
    pub o_star: f64,
}

/// Reads, preprocesses and solves the case at `path`; the instance is named
/// after the file stem.
pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let case_err = |source| CliError::Case {
        path: path.to_path_buf(),
        source,
    };
    let net = preprocess(&parse_case(&text).map_err(case_err)?);
    let o_star = solve_ac_opf(&net).map_err(case_err)?.cost;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| net.name.clone());
    Ok(Instance { name, net, o_star })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub lambda_bound: f64,
    pub runs: usize,
    /// attack budgets, percent of lines
    pub budgets: Vec<f64>,
    pub strategies: Vec<Strategy>,
    /// number of load steps in the multi-step horizon
    pub horizon: usize,
    /// numbers of constrained steps compared in the similarity sweep
    pub steps: Vec<usize>,
    /// load factors of the first and last step of the horizon
    pub profile: (f64, f64),
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            epsilon: 1.0,
            alphas: vec![1e-3, 1e-2, 1e-1, 1.0],
            betas: vec![1e-2, 1e-1],
            lambda_bound: PrivacyParams::DEFAULT_LAMBDA,
            runs: 100,
            budgets: vec![5.0, 10.0, 15.0],
            strategies: vec![Strategy::Random, Strategy::ObfuscatedFlow, Strategy::RealFlow],
            horizon: 31,
            steps: vec![1, 4, 16, 31],
            profile: (0.8, 1.1),
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.alphas.is_empty() || self.betas.is_empty() || self.budgets.is_empty() {
            return bad("alpha, beta and budget grids must be nonempty");
        }
        if self.runs == 0 {
            return bad("at least one run per cell is required");
        }
        if self.strategies.is_empty() {
            return bad("no attack strategy selected");
        }
        if self.horizon == 0 || self.steps.is_empty() || self.steps.iter().any(|&r| r == 0 || r > self.horizon) {
            return bad("multi-step counts must lie in 1..=h");
        }
        if !(self.profile.0 > 0.0 && self.profile.0 <= self.profile.1) {
            return bad("load profile must be positive and increasing");
        }
        for &a in &self.alphas {
            for &b in &self.betas {
                self.params(a, b)?;
            }
        }
        Ok(())
    }

    pub fn params(&self, alpha: f64, beta: f64) -> Result<PrivacyParams> {
        Ok(PrivacyParams::new(self.epsilon, alpha, beta, self.lambda_bound)?)
    }

    fn cells(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &a in &self.alphas {
            for &b in &self.betas {
                out.push((a, b));
            }
        }
        out
    }
}

/// Seed of one run: the first eight bytes of a SHA-256 digest over the
/// master seed, instance name, `α`, `β` and run index.
pub fn run_seed(master: u64, instance: &str, alpha: f64, beta: f64, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((instance.len() as u64).to_le_bytes());
    h.update(instance.as_bytes());
    h.update(alpha.to_bits().to_le_bytes());
    h.update(beta.to_bits().to_le_bytes());
    h.update((run as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Undetermined,
}

impl From<Feasibility> for Verdict {
    fn from(f: Feasibility) -> Self {
        match f {
            Feasibility::Feasible => Verdict::Feasible,
            Feasibility::Infeasible => Verdict::Infeasible,
            Feasibility::Undetermined(_) => Verdict::Undetermined,
        }
    }
}

fn verdict(f: plo_core::Result<Feasibility>) -> Verdict {
    f.map(Verdict::from).unwrap_or(Verdict::Undetermined)
}

/// One Laplace-only release and one PLO release from the same seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationRecord {
    pub instance: String,
    pub alpha: f64,
    pub beta: f64,
    pub run: usize,
    pub seed: u64,
    pub laplace: Verdict,
    /// `optimal`, or the reason no release was produced
    pub plo_status: String,
    pub plo_feasible: Option<Verdict>,
    pub o_star: f64,
    pub cost_out: Option<f64>,
    /// optimal dispatch cost of the released network
    pub released_cost: Option<f64>,
    /// `100·(O* − O(released))/O*`
    pub cost_delta_pct: Option<f64>,
    pub faithful: Option<bool>,
    pub factor2: Option<bool>,
    pub budget_ok: Option<bool>,
    pub lambda_used: Option<f64>,
    pub distances: Option<Distances>,
}

impl ObfuscationRecord {
    pub fn solved(&self) -> bool {
        self.plo_status == "optimal"
    }
}

/// Wall-clock time of one PLO call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub instance: String,
    pub buses: usize,
    pub alpha: f64,
    pub beta: f64,
    pub run: usize,
    pub seed: u64,
    pub elapsed_ms: f64,
}

fn obfuscation_run(inst: &Instance, cfg: &ExperimentConfig, alpha: f64, beta: f64, run: usize) -> (ObfuscationRecord, TimingRecord) {
    let seed = run_seed(cfg.master_seed, &inst.name, alpha, beta, run);
    let p = cfg.params(alpha, beta).expect("validated parameters");
    let start = Instant::now();
    let res = plo_obfuscate(&inst.net, inst.o_star, &p, seed);
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let timing = TimingRecord {
        instance: inst.name.clone(),
        buses: inst.net.buses.len(),
        alpha,
        beta,
        run,
        seed,
        elapsed_ms,
    };
    let mut rec = ObfuscationRecord {
        instance: inst.name.clone(),
        alpha,
        beta,
        run,
        seed,
        laplace: Verdict::Undetermined,
        plo_status: String::new(),
        plo_feasible: None,
        o_star: inst.o_star,
        cost_out: None,
        released_cost: None,
        cost_delta_pct: None,
        faithful: None,
        factor2: None,
        budget_ok: None,
        lambda_used: None,
        distances: None,
    };
    match res {
        Ok(r) => {
            rec.laplace = verdict(check_ac_feasibility(&laplace_network(&inst.net, &r.noisy)));
            rec.plo_status = r.status.to_string();
            rec.plo_feasible = Some(verdict(check_ac_feasibility_from(&r.network_out, &r.dispatch[0])));
            rec.cost_out = Some(r.cost_out);
            rec.faithful = Some((r.cost_out - inst.o_star).abs() / inst.o_star.abs() <= beta + 1e-6);
            rec.factor2 = Some(r.factor2_ok);
            rec.budget_ok = Some(budget_audit(&r.noisy.ledger).is_ok());
            rec.lambda_used = Some(r.lambda_used);
            rec.distances = Some(r.distances);
            if let Ok(sol) = solve_ac_opf(&r.network_out) {
                rec.released_cost = Some(sol.cost);
                rec.cost_delta_pct = Some(100.0 * (inst.o_star - sol.cost) / inst.o_star);
            }
        }
        Err(e) => {
            // the noisy draw does not depend on the post-processing outcome
            let noisy = plo_core::dp::privatize_lines(&inst.net, &p, &mut plo_core::dp::SeededUniform::new(seed));
            if let Ok(noisy) = noisy {
                rec.laplace = verdict(check_ac_feasibility(&laplace_network(&inst.net, &noisy)));
            }
            rec.plo_status = e.to_string();
        }
    }
    (rec, timing)
}

/// Laplace-only versus PLO feasibility, faithfulness, cost deltas and
/// timing for every instance, `(α, β)` cell and run.
pub fn obfuscation_study(instances: &[Instance], cfg: &ExperimentConfig) -> (Vec<ObfuscationRecord>, Vec<TimingRecord>) {
    let mut jobs = Vec::new();
    for inst in instances {
        for (a, b) in cfg.cells() {
            for run in 0..cfg.runs {
                jobs.push((inst, a, b, run));
            }
        }
    }
    let mut out: Vec<(ObfuscationRecord, TimingRecord)> = jobs
        .par_iter()
        .map(|&(inst, a, b, run)| obfuscation_run(inst, cfg, a, b, run))
        .collect();
    out.sort_by(|x, y| {
        (x.0.instance.as_str(), x.0.alpha, x.0.beta, x.0.run)
            .partial_cmp(&(y.0.instance.as_str(), y.0.alpha, y.0.beta, y.0.run))
            .expect("finite keys")
    });
    out.into_iter().unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub instance: String,
    pub alpha: f64,
    pub beta: f64,
    pub runs: usize,
    pub laplace_feasible_pct: f64,
    pub plo_solved_pct: f64,
    pub plo_feasible_pct: f64,
    /// shares of solved runs
    pub faithful_pct: f64,
    pub factor2_pct: f64,
    pub budget_ok_pct: f64,
    pub mean_cost_delta_pct: Option<f64>,
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Per-cell aggregates of an obfuscation study, in record order.
pub fn summarize(records: &[ObfuscationRecord]) -> Vec<CellSummary> {
    let mut out: Vec<CellSummary> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let first = &records[start];
        let end = start
            + records[start..]
                .iter()
                .take_while(|r| r.instance == first.instance && r.alpha == first.alpha && r.beta == first.beta)
                .count();
        let cell = &records[start..end];
        let solved: Vec<&ObfuscationRecord> = cell.iter().filter(|r| r.solved()).collect();
        let count = |f: &dyn Fn(&ObfuscationRecord) -> bool| cell.iter().filter(|r| f(r)).count();
        let deltas: Vec<f64> = cell.iter().filter_map(|r| r.cost_delta_pct).collect();
        out.push(CellSummary {
            instance: first.instance.clone(),
            alpha: first.alpha,
            beta: first.beta,
            runs: cell.len(),
            laplace_feasible_pct: pct(count(&|r| r.laplace == Verdict::Feasible), cell.len()),
            plo_solved_pct: pct(solved.len(), cell.len()),
            plo_feasible_pct: pct(count(&|r| r.plo_feasible == Some(Verdict::Feasible)), cell.len()),
            faithful_pct: pct(count(&|r| r.faithful == Some(true)), solved.len()),
            factor2_pct: pct(count(&|r| r.factor2 == Some(true)), solved.len()),
            budget_ok_pct: pct(count(&|r| r.budget_ok == Some(true)), solved.len()),
            mean_cost_delta_pct: mean(&deltas),
        });
        start = end;
    }
    out
}

/// One attack on the real network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub instance: String,
    pub strategy: Strategy,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    /// empty when the attack or its evaluation could not be computed
    pub restored_pct: Option<f64>,
    /// overlap with the real-flow attack, percent
    pub similarity: Option<f64>,
}

struct RealAttacks {
    /// per budget: damaged lines and restored percentage
    by_budget: Vec<(Vec<usize>, Option<f64>)>,
}

fn real_attacks(inst: &Instance, budgets: &[f64]) -> Result<RealAttacks> {
    let mut by_budget = Vec::new();
    for &k in budgets {
        let ids = flow_attack(&inst.net, k)?;
        let restored = evaluate_attack(&inst.net, &ids).ok();
        by_budget.push((ids, restored));
    }
    Ok(RealAttacks { by_budget })
}

fn sort_rows<T, K: PartialOrd>(rows: &mut [T], key: impl Fn(&T) -> K) {
    rows.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite keys"));
}

/// Random, obfuscated-flow and real-flow attacks for every instance, cell,
/// run and budget, each evaluated by load restoration on the real network.
pub fn attack_study(instances: &[Instance], cfg: &ExperimentConfig) -> Result<Vec<AttackRow>> {
    let reals: Vec<RealAttacks> = instances
        .iter()
        .map(|inst| real_attacks(inst, &cfg.budgets))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        for (a, b) in cfg.cells() {
            for run in 0..cfg.runs {
                jobs.push((i, inst, a, b, run));
            }
        }
    }
    let want = |s: Strategy| cfg.strategies.contains(&s);
    let mut rows: Vec<AttackRow> = jobs
        .par_iter()
        .flat_map_iter(|&(i, inst, alpha, beta, run)| {
            let seed = run_seed(cfg.master_seed, &inst.name, alpha, beta, run);
            let p = cfg.params(alpha, beta).expect("validated parameters");
            let released = if want(Strategy::ObfuscatedFlow) {
                plo_obfuscate(&inst.net, inst.o_star, &p, seed).ok()
            } else {
                None
            };
            let row = |strategy, k, restored_pct, similarity| AttackRow {
                instance: inst.name.clone(),
                strategy,
                k,
                alpha,
                beta,
                seed,
                restored_pct,
                similarity,
            };
            let mut out = Vec::new();
            for (j, &k) in cfg.budgets.iter().enumerate() {
                let (real_ids, real_restored) = &reals[i].by_budget[j];
                if want(Strategy::Random) {
                    let ids = random_attack(&inst.net, k, seed).ok();
                    let restored = ids.as_ref().and_then(|ids| evaluate_attack(&inst.net, ids).ok());
                    let sim = ids.as_ref().and_then(|ids| attack_similarity(real_ids, ids).ok());
                    out.push(row(Strategy::Random, k, restored, sim));
                }
                if want(Strategy::ObfuscatedFlow) {
                    let ids = released.as_ref().and_then(|r| flow_attack(&r.network_out, k).ok());
                    let restored = ids.as_ref().and_then(|ids| evaluate_attack(&inst.net, ids).ok());
                    let sim = ids.as_ref().and_then(|ids| attack_similarity(real_ids, ids).ok());
                    out.push(row(Strategy::ObfuscatedFlow, k, restored, sim));
                }
                if want(Strategy::RealFlow) {
                    out.push(row(Strategy::RealFlow, k, *real_restored, Some(100.0)));
                }
            }
            out
        })
        .collect();
    sort_rows(&mut rows, |r| (r.instance.clone(), r.alpha, r.beta, r.k, r.strategy, r.seed));
    Ok(rows)
}

/// Obfuscated-flow attack on a multi-step release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub instance: String,
    /// constrained load steps
    pub r: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub restored_pct: Option<f64>,
    pub similarity: Option<f64>,
    pub budget_ok: Option<bool>,
    pub faithful: Option<bool>,
}

/// Multi-step releases over a load profile for each number of constrained
/// steps `r`, attacked at nominal load. All `r` of a run share one seed.
pub fn similarity_study(instances: &[Instance], cfg: &ExperimentConfig) -> Result<Vec<SimilarityRow>> {
    let mut profiles = Vec::new();
    for inst in instances {
        let nets = load_profile(&inst.net, cfg.horizon, cfg.profile.0, cfg.profile.1);
        let mut o_stars = Vec::with_capacity(nets.len());
        for (t, n) in nets.iter().enumerate() {
            let sol = solve_ac_opf(n).map_err(|e| {
                CliError::Usage(format!(
                    "{}: no optimal dispatch at load step {t} of the profile ({e})",
                    inst.name
                ))
            })?;
            o_stars.push(sol.cost);
        }
        profiles.push((nets, o_stars, real_attacks(inst, &cfg.budgets)?));
    }
    let mut jobs = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        for (a, b) in cfg.cells() {
            for run in 0..cfg.runs {
                for &r in &cfg.steps {
                    jobs.push((i, inst, a, b, run, r));
                }
            }
        }
    }
    let mut rows: Vec<SimilarityRow> = jobs
        .par_iter()
        .flat_map_iter(|&(i, inst, alpha, beta, run, r)| {
            let (nets, o_stars, real) = &profiles[i];
            let seed = run_seed(cfg.master_seed, &inst.name, alpha, beta, run);
            let p = cfg.params(alpha, beta).expect("validated parameters");
            let steps = equally_spaced(cfg.horizon, r);
            let res = mplo_obfuscate(nets, o_stars, &p, &steps, seed).ok();
            let released = res.as_ref().map(|res| inst.net.with_admittances(&res.g_dot, &res.b_dot));
            let budget_ok = res.as_ref().map(|res| budget_audit(&res.noisy.ledger).is_ok());
            let faithful = res.as_ref().map(|res| {
                steps
                    .iter()
                    .zip(&res.costs_out)
                    .all(|(&s, &c)| (c - o_stars[s]).abs() / o_stars[s].abs() <= beta + 1e-6)
            });
            cfg.budgets
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    let ids = released.as_ref().and_then(|n| flow_attack(n, k).ok());
                    SimilarityRow {
                        instance: inst.name.clone(),
                        r,
                        k,
                        alpha,
                        beta,
                        seed,
                        restored_pct: ids.as_ref().and_then(|ids| evaluate_attack(&inst.net, ids).ok()),
                        similarity: ids.as_ref().and_then(|ids| attack_similarity(&real.by_budget[j].0, ids).ok()),
                        budget_ok,
                        faithful,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    sort_rows(&mut rows, |r| (r.instance.clone(), r.alpha, r.beta, r.k, r.r, r.seed));
    Ok(rows)
}
