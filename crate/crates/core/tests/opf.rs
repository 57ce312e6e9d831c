mod common;

use std::time::Instant;

use num_complex::Complex64;
use plo_core::opf::{build_ac_opf, check_ac_feasibility, check_ac_feasibility_from, solve_ac_opf, Feasibility, OpfSolution};
use plo_core::{CoreError, Network};
use plo_nlp::{check_derivatives, Status};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use common::{case, interior_point, two_bus};

// objective values from an independent MATPOWER-compatible solver
const ORACLE: [(&str, f64); 9] = [
    ("case5", 17551.894163),
    ("case9", 5296.686524),
    ("case14", 8081.525513),
    ("case30", 576.892336),
    ("case_ieee30", 8906.143888),
    ("case39", 41864.177597),
    ("case57", 41737.786421),
    ("case118", 129660.694770),
    ("case89pegase", 5819.806220),
];

#[test]
fn opf_costs_match_reference_solver() {
    for (name, cost) in ORACLE {
        let net = case(name);
        let t = Instant::now();
        let sol = solve_ac_opf(&net).unwrap_or_else(|e| panic!("{name}: {e}"));
        let rel = (sol.cost - cost).abs() / cost;
        eprintln!("{name}: {:.6} vs {cost} ({rel:.2e}) in {:?}", sol.cost, t.elapsed());
        assert!(rel < 5e-3, "{name}: {} vs {cost}", sol.cost);
    }
}

#[test]
fn lossless_two_bus_dispatch_equals_load() {
    let sol = solve_ac_opf(&two_bus(1.0, 0.0)).unwrap();
    assert!((sol.pg[0] - 1.0).abs() < 1e-6, "pg = {}", sol.pg[0]);
    assert_eq!(sol.theta[0], 0.0);
}

#[test]
fn generation_deficit_is_infeasible() {
    let mut net = case("case14");
    let cap: f64 = net.generators.iter().map(|g| g.p_max).sum();
    let scale = 1.2 * cap / net.total_load();
    net = net.with_load_factor(scale);
    match solve_ac_opf(&net) {
        Err(CoreError::NotSolved { status, .. }) => assert_eq!(status, Status::Infeasible),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn feasibility_of_reference_and_broken_networks() {
    let net = case("case39");
    assert_eq!(check_ac_feasibility(&net).unwrap(), Feasibility::Feasible);

    let mut lossy = net.clone();
    for l in &mut lossy.lines {
        l.r *= 100.0;
    }
    assert_eq!(check_ac_feasibility(&lossy).unwrap(), Feasibility::Infeasible);

    let mut empty = two_bus(0.5, 0.01);
    empty.buses[1].v_min = 1.1;
    empty.buses[1].v_max = 0.9;
    assert_eq!(check_ac_feasibility(&empty).unwrap(), Feasibility::Infeasible);
}

/// Branch flows from the complex π-model, independent of the model code.
fn complex_flows(net: &Network, sol: &OpfSolution) -> Vec<(Complex64, Complex64)> {
    let idx = net.bus_index();
    net.lines
        .iter()
        .map(|l| {
            let f = idx[&l.from_bus];
            let t = idx[&l.to_bus];
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(l.r, l.x);
            let ch = Complex64::new(0.0, l.charging / 2.0);
            let a = Complex64::from_polar(l.tap, l.shift);
            let yff = (ys + ch) / (l.tap * l.tap);
            let yft = -ys / a.conj();
            let ytf = -ys / a;
            let ytt = ys + ch;
            let vf = Complex64::from_polar(sol.v[f], sol.theta[f]);
            let vt = Complex64::from_polar(sol.v[t], sol.theta[t]);
            let sf = vf * (yff * vf + yft * vt).conj();
            let st = vt * (ytf * vf + ytt * vt).conj();
            (sf, st)
        })
        .collect()
}

#[test]
fn solutions_balance_power_with_independent_flows() {
    for name in ["case9", "case14", "case30", "case39", "case57", "case118"] {
        let net = case(name);
        let sol = solve_ac_opf(&net).unwrap();
        let flows = complex_flows(&net, &sol);
        let idx = net.bus_index();
        let mut mismatch = vec![Complex64::new(0.0, 0.0); net.buses.len()];
        for (i, b) in net.buses.iter().enumerate() {
            let v2 = sol.v[i] * sol.v[i];
            mismatch[i] -= Complex64::new(b.pd, b.qd) + Complex64::new(b.gs, -b.bs) * v2;
        }
        for (j, g) in net.generators.iter().enumerate() {
            mismatch[idx[&g.bus]] += Complex64::new(sol.pg[j], sol.qg[j]);
        }
        for (k, l) in net.lines.iter().enumerate() {
            let (sf, st) = flows[k];
            mismatch[idx[&l.from_bus]] -= sf;
            mismatch[idx[&l.to_bus]] -= st;
            let fl = sol.flows[k];
            assert!((sf.re - fl.p_from).abs() < 1e-9 && (st.im - fl.q_to).abs() < 1e-9);
            if l.r >= 0.0 {
                assert!((sf + st).re >= -1e-9, "{name} line {} loses {}", l.id, (sf + st).re);
            }
        }
        let worst = mismatch.iter().map(|m| m.re.abs().max(m.im.abs())).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{name}: mismatch {worst:e}");
    }
}

#[test]
fn opf_derivatives_match_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for name in ["case5", "case14", "case30"] {
        let model = build_ac_opf(&case(name)).unwrap();
        for _ in 0..3 {
            let x = interior_point(&model, &mut rng);
            let rep = check_derivatives(&model, &x, 1e-2);
            assert!(rep.max() <= 1e-5, "{name}: {rep:?}");
        }
    }
}

#[test]
fn optimal_dispatch_certifies_feasibility() {
    let net = case("case118");
    let sol = solve_ac_opf(&net).unwrap();
    assert_eq!(check_ac_feasibility_from(&net, &sol).unwrap(), Feasibility::Feasible);

    let mut far = sol.clone();
    far.v.iter_mut().for_each(|v| *v = 2.0);
    assert_eq!(check_ac_feasibility_from(&net, &far).unwrap(), Feasibility::Feasible);

    let mut short = sol;
    short.pg.pop();
    assert!(check_ac_feasibility_from(&net, &short).is_err());
}
