use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plo_cli::commands::{cmd_experiment, cmd_obfuscate, ObfuscateArgs, Study};
use plo_cli::{run_seed, ExperimentConfig};
use plo_core::attack::Strategy;
use plo_core::dp::PrivacyParams;
use plo_core::{check_ac_feasibility, parse_case, preprocess};

fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(format!("{name}.m"))
}

fn plo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plo")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn opf_prints_summary_and_json() {
    let out = plo(&["opf", path_str(&case_path("case14"))]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let json_start = text.find('{').unwrap();
    assert!(text[..json_start].contains("case14: 14 buses, 20 lines, 5 generators"));
    let v: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    let cost = v["solution"]["cost"].as_f64().unwrap();
    assert!((cost - 8081.525513).abs() / 8081.525513 < 5e-3, "{cost}");
    assert_eq!(v["solution"]["v"].as_array().unwrap().len(), 14);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let deficit = dir.path().join("deficit.m");
    let text = std::fs::read_to_string(case_path("case5")).unwrap();
    std::fs::write(&deficit, text.replace("\t4\t3\t400\t131.47", "\t4\t3\t2400\t131.47")).unwrap();
    assert_eq!(plo(&["opf", path_str(&deficit)]).status.code(), Some(2));

    let garbage = dir.path().join("garbage.m");
    std::fs::write(&garbage, "this is not a case file\n").unwrap();
    assert_eq!(plo(&["opf", path_str(&garbage)]).status.code(), Some(3));
    assert_eq!(plo(&["opf", path_str(&dir.path().join("missing.m"))]).status.code(), Some(3));

    assert_eq!(plo(&["opf"]).status.code(), Some(1));
    assert_eq!(plo(&["--help"]).status.code(), Some(0));
    let bad_alpha = plo(&["obfuscate", path_str(&case_path("case9")), "--alpha", "-1"]);
    assert_eq!(bad_alpha.status.code(), Some(1));
}

#[test]
fn obfuscate_writes_a_feasible_release() {
    let dir = tempfile::tempdir().unwrap();
    let out = plo(&[
        "obfuscate",
        path_str(&case_path("case39")),
        "--alpha",
        "0.01",
        "--beta",
        "0.01",
        "--seed",
        "4",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let released = std::fs::read_to_string(dir.path().join("case39_obfuscated.m")).unwrap();
    let net = preprocess(&parse_case(&released).unwrap());
    assert!(check_ac_feasibility(&net).unwrap().is_feasible());

    let json = std::fs::read_to_string(dir.path().join("case39_obfuscation.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["status"], "optimal");
    let (g, b) = net.admittances().unwrap();
    for (k, gd) in v["g_dot"].as_array().unwrap().iter().enumerate() {
        let gd = gd.as_f64().unwrap();
        let bd = v["b_dot"][k].as_f64().unwrap();
        assert!((g[k] - gd).abs() <= 1e-9 * gd.abs().max(1.0), "g[{k}]");
        assert!((b[k] - bd).abs() <= 1e-9 * bd.abs().max(1.0), "b[{k}]");
    }
}

#[test]
fn multistep_release_at_one_step_matches_single_step() {
    let dir = tempfile::tempdir().unwrap();
    let params = PrivacyParams::new(1.0, 0.01, 0.01, PrivacyParams::DEFAULT_LAMBDA).unwrap();
    let mut args = ObfuscateArgs {
        params,
        seed: 9,
        multistep: None,
        profile: (1.0, 1.0),
        out: dir.path().join("single"),
    };
    let (_, _, single) = cmd_obfuscate(&case_path("case14"), &args).unwrap();
    args.multistep = Some((1, 1));
    args.out = dir.path().join("multi");
    let (_, _, multi) = cmd_obfuscate(&case_path("case14"), &args).unwrap();
    assert_eq!(single.noisy, multi.noisy);
    for k in 0..single.g_dot.len() {
        assert!((single.g_dot[k] - multi.g_dot[k]).abs() <= 1e-6);
        assert!((single.b_dot[k] - multi.b_dot[k]).abs() <= 1e-6);
    }
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        alphas: vec![0.01, 1.0],
        betas: vec![0.01],
        runs: 3,
        budgets: vec![5.0, 10.0],
        horizon: 5,
        steps: vec![1, 5],
        profile: (0.8, 1.05),
        master_seed: 42,
        ..ExperimentConfig::default()
    }
}

#[test]
fn experiments_reproduce_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [case_path("case14")];
    let cfg = small_config();
    let a = cmd_experiment(&cases, &cfg, Study::All, &dir.path().join("a")).unwrap();
    let b = cmd_experiment(&cases, &cfg, Study::All, &dir.path().join("b")).unwrap();
    let names: Vec<String> = a.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for want in ["config.json", "runs.jsonl", "feasibility.csv", "timing.csv", "attacks.csv", "similarity.csv", "plot.json"] {
        assert!(names.iter().any(|n| n == want), "{want} missing");
    }
    for (pa, pb) in a.iter().zip(&b) {
        if pa.ends_with("timing.csv") {
            continue;
        }
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{}", pa.display());
    }

    let attacks = std::fs::read_to_string(dir.path().join("a/attacks.csv")).unwrap();
    let mut lines = attacks.lines();
    assert_eq!(lines.next(), Some("instance,strategy,k,alpha,beta,seed,restored_pct,similarity"));
    // 2 cells x 3 runs x 2 budgets x 3 strategies
    assert_eq!(lines.count(), 36);
    let seed = run_seed(42, "case14", 1.0, 0.01, 2);
    assert!(attacks.contains(&format!("case14,random,10.0,1.0,0.01,{seed},")));
}

#[test]
fn seeds_depend_on_every_key() {
    let base = run_seed(0, "case39", 0.01, 0.1, 3);
    assert_eq!(base, run_seed(0, "case39", 0.01, 0.1, 3));
    assert_ne!(base, run_seed(1, "case39", 0.01, 0.1, 3));
    assert_ne!(base, run_seed(0, "case30", 0.01, 0.1, 3));
    assert_ne!(base, run_seed(0, "case39", 0.1, 0.1, 3));
    assert_ne!(base, run_seed(0, "case39", 0.01, 0.01, 3));
    assert_ne!(base, run_seed(0, "case39", 0.01, 0.1, 4));
}

#[test]
fn invalid_configs_are_rejected() {
    let ok = ExperimentConfig::default();
    assert!(ok.validate().is_ok());
    let mut c = ok.clone();
    c.runs = 0;
    assert!(c.validate().is_err());
    let mut c = ok.clone();
    c.alphas.clear();
    assert!(c.validate().is_err());
    let mut c = ok.clone();
    c.steps = vec![32];
    assert!(c.validate().is_err());
    let mut c = ok.clone();
    c.strategies = vec![];
    assert!(c.validate().is_err());
    let mut c = ok;
    c.strategies = vec![Strategy::Random];
    c.epsilon = 0.0;
    assert!(c.validate().is_err());
}
