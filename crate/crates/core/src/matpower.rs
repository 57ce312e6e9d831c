//! Matrix-based case files (`mpc.bus`, `mpc.gen`, `mpc.branch`,
//! `mpc.gencost`) and the JSON network schema.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{CoreError, Result};
use crate::network::{Bus, Generator, Line, Network, NO_ANGLE_LIMIT};

/// Parses a case in matrix format or, if the text starts with `{`, the JSON
/// schema. The result is validated.
pub fn parse_case(text: &str) -> Result<Network> {
    let net = if text.trim_start().starts_with('{') {
        serde_json::from_str::<Network>(text)?
    } else {
        parse_matrix_case(text)?
    };
    net.validate()?;
    Ok(net)
}

pub fn to_json(net: &Network) -> String {
    serde_json::to_string_pretty(net).expect("network serializes")
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| match l.find('%') {
            Some(p) => &l[..p],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn find_assignment<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("mpc.{name}");
    let mut from = 0;
    while let Some(p) = text[from..].find(&key) {
        let start = from + p + key.len();
        let rest = text[start..].trim_start();
        if let Some(rhs) = rest.strip_prefix('=') {
            return Some(rhs);
        }
        from = start;
    }
    None
}

fn parse_scalar(text: &str, name: &str) -> Result<f64> {
    let rhs = find_assignment(text, name).ok_or_else(|| CoreError::Malformed(format!("missing mpc.{name}")))?;
    let end = rhs.find(';').unwrap_or(rhs.len());
    rhs[..end]
        .trim()
        .parse()
        .map_err(|_| CoreError::Malformed(format!("mpc.{name} is not a number")))
}

fn parse_matrix(text: &str, name: &str, min_cols: usize, required: bool) -> Result<Vec<Vec<f64>>> {
    let Some(rhs) = find_assignment(text, name) else {
        if required {
            return Err(CoreError::Malformed(format!("missing table mpc.{name}")));
        }
        return Ok(Vec::new());
    };
    let rhs = rhs.trim_start();
    let body = rhs
        .strip_prefix('[')
        .ok_or_else(|| CoreError::Malformed(format!("mpc.{name} is not a matrix")))?;
    let end = body
        .find(']')
        .ok_or_else(|| CoreError::Malformed(format!("unterminated matrix mpc.{name}")))?;
    let mut rows = Vec::new();
    for (k, raw) in body[..end].split([';', '\n']).enumerate() {
        let fields: Vec<&str> = raw
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        let row: Vec<f64> = fields
            .iter()
            .map(|f| match *f {
                "Inf" | "inf" => Ok(f64::INFINITY),
                "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
                _ => f.parse::<f64>(),
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CoreError::Malformed(format!("non-numeric entry in mpc.{name} segment {k}")))?;
        if row.len() < min_cols {
            return Err(CoreError::Malformed(format!(
                "mpc.{name} row {} has {} columns, expected at least {min_cols}",
                rows.len() + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn as_id(v: f64, table: &str) -> Result<u64> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as u64)
    } else {
        Err(CoreError::Malformed(format!("invalid bus id {v} in {table}")))
    }
}

fn angle_limit(angmin: f64, angmax: f64) -> f64 {
    let lim = |d: f64| {
        if d == 0.0 || d.abs() >= 360.0 {
            f64::INFINITY
        } else {
            d.abs()
        }
    };
    let deg = lim(angmin).min(lim(angmax));
    if deg.is_finite() {
        deg.to_radians()
    } else {
        NO_ANGLE_LIMIT
    }
}

fn parse_matrix_case(text: &str) -> Result<Network> {
    let text = strip_comments(text);
    let base_mva = parse_scalar(&text, "baseMVA")?;
    if !(base_mva > 0.0) {
        return Err(CoreError::Malformed(format!("baseMVA {base_mva}")));
    }
    let bus_rows = parse_matrix(&text, "bus", 13, true)?;
    let gen_rows = parse_matrix(&text, "gen", 10, true)?;
    let branch_rows = parse_matrix(&text, "branch", 11, true)?;
    let cost_rows = parse_matrix(&text, "gencost", 4, true)?;
    let name = text
        .split_whitespace()
        .skip_while(|w| *w != "mpc")
        .nth(2)
        .unwrap_or("")
        .trim_end_matches(';')
        .to_string();

    let mut buses = Vec::new();
    let mut slack: Option<u64> = None;
    for row in &bus_rows {
        let id = as_id(row[0], "bus")?;
        let kind = row[1];
        if kind == 4.0 {
            continue;
        }
        let is_slack = kind == 3.0;
        if is_slack {
            if let Some(first) = slack {
                return Err(CoreError::MultipleSlack(first, id));
            }
            slack = Some(id);
        }
        buses.push(Bus {
            id,
            v_min: row[12],
            v_max: row[11],
            base_kv: row[9],
            is_slack,
            pd: row[2] / base_mva,
            qd: row[3] / base_mva,
            gs: row[4] / base_mva,
            bs: row[5] / base_mva,
        });
    }
    if slack.is_none() {
        return Err(CoreError::MissingSlack);
    }

    if cost_rows.len() < gen_rows.len() {
        return Err(CoreError::Malformed(format!(
            "{} generators but {} cost rows",
            gen_rows.len(),
            cost_rows.len()
        )));
    }
    let mut generators = Vec::new();
    for (k, row) in gen_rows.iter().enumerate() {
        if row[7] <= 0.0 {
            continue;
        }
        let cost = &cost_rows[k];
        if cost[0] != 2.0 {
            return Err(CoreError::Malformed(format!(
                "generator {} uses cost model {}, only polynomial costs are supported",
                k + 1,
                cost[0]
            )));
        }
        let n = cost[3] as usize;
        if cost.len() < 4 + n {
            return Err(CoreError::Malformed(format!("gencost row {} too short", k + 1)));
        }
        let coeffs = &cost[4..4 + n];
        if n > 3 && coeffs[..n - 3].iter().any(|&c| c != 0.0) {
            return Err(CoreError::Malformed(format!(
                "generator {} has a cost polynomial of degree {}",
                k + 1,
                n - 1
            )));
        }
        let coef = |p: usize| if p < n { coeffs[n - 1 - p] } else { 0.0 };
        generators.push(Generator {
            bus: as_id(row[0], "gen")?,
            p_min: row[9] / base_mva,
            p_max: row[8] / base_mva,
            q_min: row[4] / base_mva,
            q_max: row[3] / base_mva,
            c0: coef(0),
            c1: coef(1),
            c2: coef(2),
        });
    }

    let mut lines = Vec::new();
    for row in &branch_rows {
        if row[10] <= 0.0 {
            continue;
        }
        let (angmin, angmax) = if row.len() >= 13 { (row[11], row[12]) } else { (-360.0, 360.0) };
        let id = lines.len() + 1;
        lines.push(Line {
            id,
            from_bus: as_id(row[0], "branch")?,
            to_bus: as_id(row[1], "branch")?,
            r: row[2],
            x: row[3],
            charging: row[4],
            tap: if row[8] == 0.0 { 1.0 } else { row[8] },
            shift: row[9].to_radians(),
            s_max: if row[5] == 0.0 { f64::INFINITY } else { row[5] / base_mva },
            angle_max: angle_limit(angmin, angmax),
        });
    }

    Ok(Network {
        name,
        base_mva,
        buses,
        lines,
        generators,
    })
}

/// A value `w` with `forward(w) == v` bitwise, searched around `guess`.
fn exact_preimage(v: f64, guess: f64, forward: impl Fn(f64) -> f64) -> f64 {
    if !v.is_finite() || forward(guess) == v {
        return guess;
    }
    let mut up = guess;
    let mut down = guess;
    for _ in 0..64 {
        up = up.next_up();
        down = down.next_down();
        if forward(up) == v {
            return up;
        }
        if forward(down) == v {
            return down;
        }
    }
    guess
}

fn per_unit_out(v: f64, base: f64) -> f64 {
    exact_preimage(v, v * base, |w| w / base)
}

fn radians_out(v: f64) -> f64 {
    exact_preimage(v, v.to_degrees(), |w| w.to_radians())
}

/// Matrix-format text that parses back to an identical network.
pub fn to_matrix_case(net: &Network) -> String {
    let base = net.base_mva;
    let name = if net.name.is_empty() { "released_case" } else { &net.name };
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {name}");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {base};");
    let _ = writeln!(s, "\n%% bus data");
    let _ = writeln!(s, "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    let _ = writeln!(s, "mpc.bus = [");
    let gen_buses: HashMap<u64, ()> = net.generators.iter().map(|g| (g.bus, ())).collect();
    for b in &net.buses {
        let kind = if b.is_slack {
            3
        } else if gen_buses.contains_key(&b.id) {
            2
        } else {
            1
        };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t{}\t1\t{}\t{};",
            b.id,
            kind,
            per_unit_out(b.pd, base),
            per_unit_out(b.qd, base),
            per_unit_out(b.gs, base),
            per_unit_out(b.bs, base),
            b.base_kv,
            b.v_max,
            b.v_min
        );
    }
    let _ = writeln!(s, "];\n\n%% generator data");
    let _ = writeln!(s, "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &net.generators {
        let _ = writeln!(
            s,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t1\t{}\t{};",
            g.bus,
            per_unit_out(g.q_max, base),
            per_unit_out(g.q_min, base),
            base,
            per_unit_out(g.p_max, base),
            per_unit_out(g.p_min, base)
        );
    }
    let _ = writeln!(s, "];\n\n%% branch data");
    let _ = writeln!(s, "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax");
    let _ = writeln!(s, "mpc.branch = [");
    for l in &net.lines {
        let rate = if l.s_max.is_finite() { per_unit_out(l.s_max, base) } else { 0.0 };
        let ang = if l.angle_max == NO_ANGLE_LIMIT {
            360.0
        } else {
            radians_out(l.angle_max)
        };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{};",
            l.from_bus,
            l.to_bus,
            l.r,
            l.x,
            l.charging,
            rate,
            rate,
            rate,
            l.tap,
            radians_out(l.shift),
            -ang,
            ang
        );
    }
    let _ = writeln!(s, "];\n\n%% generator cost data");
    let _ = writeln!(s, "%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0");
    let _ = writeln!(s, "mpc.gencost = [");
    for g in &net.generators {
        let _ = writeln!(s, "\t2\t0\t0\t3\t{}\t{}\t{};", g.c2, g.c1, g.c0);
    }
    let _ = writeln!(s, "];");
    s
}
