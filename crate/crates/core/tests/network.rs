mod common;

use approx::assert_relative_eq;
use plo_core::network::{admittance, impedance_from_admittance, series_admittance, voltage_levels, NO_ANGLE_LIMIT};
use plo_core::{parse_case, preprocess, to_json, to_matrix_case, CoreError, Network};
use proptest::prelude::*;

use common::{case, case_text, two_bus};

const MINIMAL: &str = "function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	50	10	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	200	0;
];
mpc.branch = [
	1	2	0.01	0.1	0.02	250	250	250	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.01	20	0;
];
";

#[test]
fn minimal_case_parses_in_per_unit() {
    let net = parse_case(MINIMAL).unwrap();
    assert_eq!((net.n_buses(), net.n_lines()), (2, 1));
    assert_eq!(net.name, "tiny");
    assert_eq!(net.buses[1].pd, 0.5);
    assert_eq!(net.lines[0].s_max, 2.5);
    assert_eq!(net.lines[0].angle_max, NO_ANGLE_LIMIT);
    assert_eq!(net.generators[0].p_max, 2.0);
    assert_eq!((net.generators[0].c2, net.generators[0].c1), (0.01, 20.0));
}

#[test]
fn reference_cases_have_published_sizes() {
    let sizes = [
        ("case14", 14, 20),
        ("case30", 30, 41),
        ("case39", 39, 46),
        ("case57", 57, 80),
        ("case118", 118, 186),
    ];
    for (name, m, n) in sizes {
        let net = case(name);
        assert_eq!((net.n_buses(), net.n_lines()), (m, n), "{name}");
    }
}

#[test]
fn structural_errors_are_distinct() {
    let two_slacks = MINIMAL.replace("\t2\t1\t50", "\t2\t3\t50");
    assert!(matches!(parse_case(&two_slacks), Err(CoreError::MultipleSlack(1, 2))));
    let no_slack = MINIMAL.replace("\t1\t3\t0", "\t1\t2\t0");
    assert!(matches!(parse_case(&no_slack), Err(CoreError::MissingSlack)));
    let zero_x = MINIMAL.replace("0.01\t0.1\t", "0.01\t0\t");
    assert!(matches!(parse_case(&zero_x), Err(CoreError::ZeroReactance(1))));
    let cut = MINIMAL.replace("\t1\t-360\t360", "\t0\t-360\t360");
    assert!(matches!(parse_case(&cut), Err(CoreError::Disconnected(2))));
    let ragged = MINIMAL.replace("\t1\t0\t0\t100", "\t1\t0");
    assert!(matches!(parse_case(&ragged), Err(CoreError::Malformed(_))));
    for e in [parse_case(&two_slacks), parse_case(&ragged)] {
        assert!(e.unwrap_err().is_parse_error());
    }
}

#[test]
fn admittance_examples() {
    let l = |r, x| {
        let mut net = two_bus(0.0, r);
        net.lines[0].x = x;
        net.lines.remove(0)
    };
    assert_eq!(admittance(&l(0.0, 1.0)).unwrap(), (0.0, -1.0));
    assert_eq!(admittance(&l(1.0, 0.0)).unwrap(), (1.0, 0.0));
    let (g, b) = admittance(&l(0.01938, 0.05917)).unwrap();
    assert_relative_eq!(g, 4.999131600798035, max_relative = 1e-12);
    assert_relative_eq!(b, -15.263086523179553, max_relative = 1e-12);
    assert!(admittance(&l(0.0, 0.0)).is_err());
}

#[test]
fn voltage_level_examples() {
    let net = case("case39");
    let levels = voltage_levels(&net);
    assert_eq!(levels.len(), 1);
    assert_eq!(levels[0].lines.len(), 46);

    let mut mixed = two_bus(0.0, 0.01);
    mixed.buses.push(mixed.buses[1].clone());
    mixed.buses[2].id = 3;
    mixed.buses[2].base_kv = 345.0;
    mixed.buses[1].base_kv = 138.0;
    mixed.buses[0].base_kv = 138.0;
    mixed.buses.push(mixed.buses[2].clone());
    mixed.buses[3].id = 4;
    for (id, (f, t)) in [(2, (2, 3)), (3, (3, 4))] {
        let mut l = mixed.lines[0].clone();
        l.id = id;
        l.from_bus = f;
        l.to_bus = t;
        mixed.lines.push(l);
    }
    let sizes: Vec<usize> = voltage_levels(&mixed).iter().map(|v| v.lines.len()).collect();
    assert_eq!(sizes, vec![1, 1, 1]);

    let total: usize = voltage_levels(&case("case118")).iter().map(|v| v.lines.len()).sum();
    assert_eq!(total, 186);
}

#[test]
fn preprocess_examples() {
    let mut net = two_bus(0.0, 0.01);
    let mut par = net.lines[0].clone();
    par.id = 2;
    par.from_bus = 2;
    par.to_bus = 1;
    par.r = 0.03;
    par.x = 0.3;
    net.lines.push(par);
    let out = preprocess(&net);
    for l in &out.lines {
        assert_relative_eq!(l.r, 0.02, max_relative = 1e-15);
        assert_relative_eq!(l.x, 0.2, max_relative = 1e-15);
    }

    let mut neg = two_bus(0.0, -0.005);
    neg = preprocess(&neg);
    assert_eq!(neg.lines[0].r, 0.0);

    let plain = two_bus(0.0, 0.01);
    assert_eq!(preprocess(&plain), plain);
}

#[test]
fn every_case_round_trips_through_both_formats() {
    for name in ["case5", "case9", "case14", "case30", "case_ieee30", "case39", "case57", "case118", "case89pegase"] {
        let net: Network = parse_case(&case_text(name)).unwrap();
        let via_json = parse_case(&to_json(&net)).unwrap();
        assert_eq!(via_json, net, "{name} json");
        let via_m = parse_case(&to_matrix_case(&net)).unwrap();
        assert_eq!(via_m, net, "{name} matrix");
        let pre = preprocess(&net);
        assert_eq!(preprocess(&pre), pre, "{name} idempotence");
        let levels = voltage_levels(&net);
        let mut seen = vec![0; net.n_lines()];
        for lvl in &levels {
            for &k in &lvl.lines {
                seen[k] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "{name} partition");
    }
}

proptest! {
    #[test]
    fn impedance_admittance_round_trip(r in 1e-4f64..10.0, x in 1e-4f64..10.0, neg in any::<bool>()) {
        let x = if neg { -x } else { x };
        let (g, b) = series_admittance(r, x).unwrap();
        let (r2, x2) = impedance_from_admittance(g, b).unwrap();
        prop_assert!(((r2 - r) / r).abs() < 1e-12);
        prop_assert!(((x2 - x) / x).abs() < 1e-12);
    }

    #[test]
    fn preprocess_is_idempotent(rs in proptest::collection::vec(-0.05f64..0.2, 1..6), xs in proptest::collection::vec(0.01f64..0.5, 6)) {
        let mut net = two_bus(0.0, 0.01);
        net.lines.clear();
        for (k, &r) in rs.iter().enumerate() {
            let mut l = two_bus(0.0, r).lines.remove(0);
            l.id = k + 1;
            l.x = xs[k];
            if k % 2 == 1 {
                std::mem::swap(&mut l.from_bus, &mut l.to_bus);
            }
            net.lines.push(l);
        }
        let once = preprocess(&net);
        prop_assert!(once.lines.iter().all(|l| l.r >= 0.0));
        prop_assert_eq!(preprocess(&once), once);
    }
}
