#![allow(dead_code)]

use std::path::PathBuf;

use plo_core::network::NO_ANGLE_LIMIT;
use plo_core::{parse_case, preprocess, Bus, Generator, Line, Network};
use plo_nlp::NlpProblem;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub fn case_text(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(format!("{name}.m"));
    std::fs::read_to_string(path).unwrap()
}

pub fn case(name: &str) -> Network {
    preprocess(&parse_case(&case_text(name)).unwrap())
}

/// Generator at bus 1 (slack), load `pd` at bus 2, one line with
/// resistance `r` and reactance 0.1.
pub fn two_bus(pd: f64, r: f64) -> Network {
    let bus = |id, pd, slack| Bus {
        id,
        v_min: 0.9,
        v_max: 1.1,
        base_kv: 100.0,
        is_slack: slack,
        pd,
        qd: 0.0,
        gs: 0.0,
        bs: 0.0,
    };
    Network {
        name: "two_bus".into(),
        base_mva: 100.0,
        buses: vec![bus(1, 0.0, true), bus(2, pd, false)],
        lines: vec![Line {
            id: 1,
            from_bus: 1,
            to_bus: 2,
            r,
            x: 0.1,
            charging: 0.0,
            tap: 1.0,
            shift: 0.0,
            s_max: f64::INFINITY,
            angle_max: NO_ANGLE_LIMIT,
        }],
        generators: vec![Generator {
            bus: 1,
            p_min: 0.0,
            p_max: 5.0,
            q_min: -5.0,
            q_max: 5.0,
            c0: 0.0,
            c1: 10.0,
            c2: 0.1,
        }],
    }
}

/// Slack pinned at 1 p.u., load `1 + 0.3j` at bus 2 with `|V|` in
/// `[0.9, 1.1]`, linear cost of 10 per MWh, line `0.05 + 0.1j`.
pub fn pinned_two_bus() -> Network {
    let mut net = two_bus(1.0, 0.05);
    net.name = "pinned_two_bus".into();
    net.buses[0].v_min = 1.0;
    net.buses[0].v_max = 1.0;
    net.buses[1].qd = 0.3;
    net.generators[0].c2 = 0.0;
    net
}

/// A random interior point near the model's starting point.
pub fn interior_point(p: &dyn NlpProblem, rng: &mut ChaCha20Rng) -> Vec<f64> {
    plo_nlp::sample_interior(p, &mut || rng.gen::<f64>())
}
