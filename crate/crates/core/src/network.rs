//! Network data model, admittances, voltage levels and pre-processing.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Angle-difference limit meaning "unconstrained" (a full turn).
pub const NO_ANGLE_LIMIT: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u64,
    pub v_min: f64,
    pub v_max: f64,
    pub base_kv: f64,
    pub is_slack: bool,
    /// active load (p.u.)
    pub pd: f64,
    /// reactive load (p.u.)
    pub qd: f64,
    /// shunt conductance (p.u. at 1 p.u. voltage)
    #[serde(default)]
    pub gs: f64,
    /// shunt susceptance (p.u. at 1 p.u. voltage)
    #[serde(default)]
    pub bs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: u64,
    pub to_bus: u64,
    pub r: f64,
    pub x: f64,
    /// total line charging susceptance (p.u.)
    #[serde(default)]
    pub charging: f64,
    /// off-nominal turns ratio, 1 for lines
    #[serde(default = "one")]
    pub tap: f64,
    /// phase shift (rad)
    #[serde(default)]
    pub shift: f64,
    /// thermal limit (p.u.); infinite when unlimited, `null` in JSON
    #[serde(with = "inf_as_null")]
    pub s_max: f64,
    /// symmetric angle-difference limit (rad); `NO_ANGLE_LIMIT` when unlimited
    pub angle_max: f64,
}

fn one() -> f64 {
    1.0
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Line {
    pub fn has_thermal_limit(&self) -> bool {
        self.s_max.is_finite()
    }

    pub fn has_angle_limit(&self) -> bool {
        self.angle_max < std::f64::consts::PI
    }

    /// Unordered endpoint pair.
    pub fn endpoints(&self) -> (u64, u64) {
        (self.from_bus.min(self.to_bus), self.from_bus.max(self.to_bus))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// cost coefficients: `c2·P² + c1·P + c0` with `P` in MW
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
}

/// Series admittance `(g, b)` of a line.
pub fn admittance(line: &Line) -> Result<(f64, f64)> {
    series_admittance(line.r, line.x).ok_or(CoreError::ZeroImpedance { line: line.id })
}

/// `g = r/(r²+x²)`, `b = −x/(r²+x²)`; `None` for zero impedance.
pub fn series_admittance(r: f64, x: f64) -> Option<(f64, f64)> {
    let d = r * r + x * x;
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some((r / d, -x / d))
}

/// Inverse of [`series_admittance`]; `None` for zero admittance.
pub fn impedance_from_admittance(g: f64, b: f64) -> Option<(f64, f64)> {
    let d = g * g + b * b;
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some((g / d, -b / d))
}

/// Lines grouped by the unordered pair of endpoint base voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageLevel {
    /// `(low kV, high kV)`
    pub kv: (f64, f64),
    /// indices into `Network::lines`
    pub lines: Vec<usize>,
}

impl Network {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn bus_index(&self) -> HashMap<u64, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.is_slack)
    }

    /// Series `(g, b)` of every line.
    pub fn admittances(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Vec::with_capacity(self.lines.len());
        let mut b = Vec::with_capacity(self.lines.len());
        for l in &self.lines {
            let (gi, bi) = admittance(l)?;
            g.push(gi);
            b.push(bi);
        }
        Ok((g, b))
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.pd).sum()
    }

    /// Structural validation: ids, references, slack, reactance, connectivity.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for b in &self.buses {
            if seen.insert(b.id, ()).is_some() {
                return Err(CoreError::DuplicateBus(b.id));
            }
        }
        let slacks: Vec<u64> = self.buses.iter().filter(|b| b.is_slack).map(|b| b.id).collect();
        match slacks.len() {
            0 => return Err(CoreError::MissingSlack),
            1 => {}
            _ => return Err(CoreError::MultipleSlack(slacks[0], slacks[1])),
        }
        if !(self.base_mva > 0.0) {
            return Err(CoreError::Invalid(format!("base MVA {}", self.base_mva)));
        }
        for l in &self.lines {
            for id in [l.from_bus, l.to_bus] {
                if !seen.contains_key(&id) {
                    return Err(CoreError::UnknownBus(id));
                }
            }
            if l.from_bus == l.to_bus {
                return Err(CoreError::SelfLoop(l.id, l.from_bus));
            }
            if l.x == 0.0 {
                return Err(CoreError::ZeroReactance(l.id));
            }
            if !(l.tap > 0.0) {
                return Err(CoreError::Invalid(format!("line {} has tap ratio {}", l.id, l.tap)));
            }
        }
        for g in &self.generators {
            if !seen.contains_key(&g.bus) {
                return Err(CoreError::UnknownBus(g.bus));
            }
        }
        let comps = self.components(&[]);
        if comps.len() > 1 {
            return Err(CoreError::Disconnected(comps.len()));
        }
        Ok(())
    }

    /// Connected components (bus indices, ascending) of the graph without
    /// the lines whose indices are in `removed`.
    pub fn components(&self, removed: &[usize]) -> Vec<Vec<usize>> {
        let idx = self.bus_index();
        let nb = self.buses.len();
        let mut adj = vec![Vec::new(); nb];
        let mut gone = vec![false; self.lines.len()];
        for &k in removed {
            if k < gone.len() {
                gone[k] = true;
            }
        }
        for (k, l) in self.lines.iter().enumerate() {
            if gone[k] {
                continue;
            }
            if let (Some(&a), Some(&b)) = (idx.get(&l.from_bus), idx.get(&l.to_bus)) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut comp = vec![usize::MAX; nb];
        let mut out = Vec::new();
        for start in 0..nb {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        queue.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Subnetwork induced by the given bus indices, keeping only lines in
    /// `keep_line` with both ends inside. The slack is re-anchored at the
    /// bus of the largest generator (by `p_max`); `None` if the island has
    /// no generator.
    pub fn island(&self, buses: &[usize], keep_line: &[bool]) -> Option<Network> {
        let ids: HashMap<u64, ()> = buses.iter().map(|&i| (self.buses[i].id, ())).collect();
        let generators: Vec<Generator> = self
            .generators
            .iter()
            .filter(|g| ids.contains_key(&g.bus))
            .cloned()
            .collect();
        let best = generators.iter().fold(None::<&Generator>, |acc, g| match acc {
            Some(a) if a.p_max >= g.p_max => Some(a),
            _ => Some(g),
        })?;
        let slack_id = best.bus;
        let bus_list = buses
            .iter()
            .map(|&i| {
                let mut b = self.buses[i].clone();
                b.is_slack = b.id == slack_id;
                b
            })
            .collect();
        let lines = self
            .lines
            .iter()
            .enumerate()
            .filter(|(k, l)| keep_line[*k] && ids.contains_key(&l.from_bus) && ids.contains_key(&l.to_bus))
            .map(|(_, l)| l.clone())
            .collect();
        Some(Network {
            name: self.name.clone(),
            base_mva: self.base_mva,
            buses: bus_list,
            lines,
            generators,
        })
    }

    /// Copy with every load scaled by `factor`.
    pub fn with_load_factor(&self, factor: f64) -> Network {
        let mut n = self.clone();
        for b in &mut n.buses {
            b.pd *= factor;
            b.qd *= factor;
        }
        n
    }

    /// Copy whose line impedances are recomputed from admittances; lines
    /// with zero admittance keep their impedance.
    pub fn with_admittances(&self, g: &[f64], b: &[f64]) -> Network {
        let mut n = self.clone();
        for (k, l) in n.lines.iter_mut().enumerate() {
            if let Some((r, x)) = impedance_from_admittance(g[k], b[k]) {
                l.r = r;
                l.x = x;
            }
        }
        n
    }
}

/// Partition of the lines by endpoint base-voltage pair, sorted by key.
pub fn voltage_levels(net: &Network) -> Vec<VoltageLevel> {
    let kv: HashMap<u64, f64> = net.buses.iter().map(|b| (b.id, b.base_kv)).collect();
    let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (k, l) in net.lines.iter().enumerate() {
        let a = kv.get(&l.from_bus).copied().unwrap_or(0.0);
        let b = kv.get(&l.to_bus).copied().unwrap_or(0.0);
        let (lo, hi) = if a.total_cmp(&b).is_le() { (a, b) } else { (b, a) };
        groups.entry((order_key(lo), order_key(hi))).or_default().push(k);
    }
    groups
        .into_iter()
        .map(|((lo, hi), lines)| VoltageLevel {
            kv: (from_order_key(lo), from_order_key(hi)),
            lines,
        })
        .collect()
}

/// Monotone map from f64 (total order) to u64.
fn order_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

fn from_order_key(k: u64) -> f64 {
    if k >> 63 == 1 {
        f64::from_bits(k & !(1 << 63))
    } else {
        f64::from_bits(!k)
    }
}

/// Parallel lines get the mean `(r, x)` of their group; negative
/// resistances become zero.
pub fn preprocess(net: &Network) -> Network {
    let mut out = net.clone();
    let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (k, l) in net.lines.iter().enumerate() {
        groups.entry(l.endpoints()).or_default().push(k);
    }
    for members in groups.values() {
        if members.len() < 2 {
            continue;
        }
        let same = members
            .iter()
            .all(|&k| net.lines[k].r == net.lines[members[0]].r && net.lines[k].x == net.lines[members[0]].x);
        if same {
            continue;
        }
        let n = members.len() as f64;
        let r = members.iter().map(|&k| net.lines[k].r).sum::<f64>() / n;
        let x = members.iter().map(|&k| net.lines[k].x).sum::<f64>() / n;
        for &k in members {
            out.lines[k].r = r;
            out.lines[k].x = x;
        }
    }
    for l in &mut out.lines {
        if l.r < 0.0 {
            l.r = 0.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_key_round_trips_and_orders() {
        let vals = [-5.0, -0.0, 0.0, 1.5, 138.0, 345.0, f64::INFINITY];
        for w in vals.windows(2) {
            assert!(order_key(w[0]) <= order_key(w[1]));
        }
        for v in vals {
            assert_eq!(from_order_key(order_key(v)).to_bits(), v.to_bits());
        }
    }
}
