use std::io::Write;
use std::path::{Path, PathBuf};

use plo_core::dp::PrivacyParams;
use plo_core::plo::{equally_spaced, load_profile, mplo_obfuscate, plo_obfuscate, ObfuscationResult};
use plo_core::{solve_ac_opf, to_matrix_case, OpfSolution};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::experiment::{attack_study, load_instance, obfuscation_study, similarity_study, ExperimentConfig, Instance};
use crate::report::{write_json, write_outputs, StudyResults};

#[derive(Debug, Serialize)]
struct OpfReport<'a> {
    case: &'a str,
    buses: usize,
    lines: usize,
    generators: usize,
    solution: &'a OpfSolution,
}

/// Solves the AC-OPF of one case and prints a summary followed by the
/// solution as JSON.
pub fn cmd_opf(case: &Path, out: &mut dyn Write) -> Result<()> {
    let inst = load_instance(case)?;
    let sol = solve_ac_opf(&inst.net)?;
    let net = &inst.net;
    let io = |source| CliError::Write {
        path: PathBuf::from("<stdout>"),
        source,
    };
    writeln!(
        out,
        "{}: {} buses, {} lines, {} generators",
        inst.name,
        net.buses.len(),
        net.lines.len(),
        net.generators.len()
    )
    .map_err(io)?;
    writeln!(out, "optimal cost {:.4} after {} iterations", sol.cost, sol.iterations).map_err(io)?;
    let report = OpfReport {
        case: &inst.name,
        buses: net.buses.len(),
        lines: net.lines.len(),
        generators: net.generators.len(),
        solution: &sol,
    };
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out).map_err(io)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObfuscateArgs {
    pub params: PrivacyParams,
    pub seed: u64,
    /// horizon and number of constrained steps for a multi-step release
    pub multistep: Option<(usize, usize)>,
    pub profile: (f64, f64),
    pub out: PathBuf,
}

/// Obfuscates one case and writes `<name>_obfuscated.m` and
/// `<name>_obfuscation.json` into the output directory.
pub fn cmd_obfuscate(case: &Path, args: &ObfuscateArgs) -> Result<(PathBuf, PathBuf, ObfuscationResult)> {
    let inst = load_instance(case)?;
    let mut res = match args.multistep {
        None => plo_obfuscate(&inst.net, inst.o_star, &args.params, args.seed)?,
        Some((h, r)) => multistep(&inst, args, h, r)?,
    };
    res.network_out.name = format!("{}_obfuscated", inst.name);
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Write {
        path: args.out.clone(),
        source,
    })?;
    let case_path = args.out.join(format!("{}_obfuscated.m", inst.name));
    std::fs::write(&case_path, to_matrix_case(&res.network_out)).map_err(|source| CliError::Write {
        path: case_path.clone(),
        source,
    })?;
    let json_path = args.out.join(format!("{}_obfuscation.json", inst.name));
    write_json(&json_path, &res)?;
    Ok((case_path, json_path, res))
}

fn multistep(inst: &Instance, args: &ObfuscateArgs, h: usize, r: usize) -> Result<ObfuscationResult> {
    if h == 0 || r == 0 || r > h {
        return Err(CliError::Usage(format!("multi-step counts h={h} r={r} need 1 <= r <= h")));
    }
    let nets = load_profile(&inst.net, h, args.profile.0, args.profile.1);
    let o_stars = nets
        .iter()
        .map(|n| solve_ac_opf(n).map(|s| s.cost))
        .collect::<plo_core::Result<Vec<_>>>()?;
    let mut res = mplo_obfuscate(&nets, &o_stars, &args.params, &equally_spaced(h, r), args.seed)?;
    // release the nominal-load network with the shared admittances
    res.network_out = inst.net.with_admittances(&res.g_dot, &res.b_dot);
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    All,
    Obfuscation,
    Attack,
    Similarity,
}

impl std::str::FromStr for Study {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Study::All),
            "obfuscation" | "feasibility" => Ok(Study::Obfuscation),
            "attack" => Ok(Study::Attack),
            "similarity" => Ok(Study::Similarity),
            _ => Err(CliError::Usage(format!("unknown study '{s}'"))),
        }
    }
}

/// Runs the selected studies over `cases` and writes their tables to `out`.
pub fn cmd_experiment(cases: &[PathBuf], cfg: &ExperimentConfig, study: Study, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(CliError::Usage("no cases given".into()));
    }
    let instances = cases.iter().map(|c| load_instance(c)).collect::<Result<Vec<_>>>()?;
    let wants = |s: Study| study == Study::All || study == s;
    let mut results = StudyResults::default();
    if wants(Study::Obfuscation) {
        log::info!("obfuscation study");
        results.obfuscation = Some(obfuscation_study(&instances, cfg));
    }
    if wants(Study::Attack) {
        log::info!("attack study");
        results.attacks = Some(attack_study(&instances, cfg)?);
    }
    if wants(Study::Similarity) {
        log::info!("similarity study");
        results.similarity = Some(similarity_study(&instances, cfg)?);
    }
    write_outputs(out, cfg, &results)
}
