//! Line-removal attacks and their evaluation by load restoration.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::network::Network;
use crate::opf::{solve_ac_opf, solve_restoration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    ObfuscatedFlow,
    RealFlow,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::ObfuscatedFlow => "obfuscated_flow",
            Strategy::RealFlow => "real_flow",
        })
    }
}

impl FromStr for Strategy {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "obfuscated_flow" | "obfuscated" => Ok(Strategy::ObfuscatedFlow),
            "real_flow" | "real" => Ok(Strategy::RealFlow),
            _ => Err(CoreError::Invalid(format!("unknown attack strategy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub strategy: Strategy,
    pub budget_pct: f64,
    /// line ids, ascending
    pub damaged: Vec<usize>,
    pub restored_pct: f64,
    pub seed: u64,
}

/// Number of lines an attacker with budget `k` percent removes:
/// `round(k·n/100)` with halves rounded up, at least one.
pub fn attack_size(n_lines: usize, k: f64) -> Result<usize> {
    if !(k > 0.0 && k <= 100.0) {
        return Err(CoreError::Invalid(format!("attack budget {k}% outside (0, 100]")));
    }
    let exact = k * n_lines as f64 / 100.0;
    let count = (exact + 0.5).floor() as usize;
    Ok(count.clamp(1, n_lines.max(1)))
}

/// `round(k·n/100)` lines drawn uniformly without replacement: a prefix of
/// one seeded shuffle, so a larger budget with the same seed extends the
/// smaller attack.
pub fn random_attack(net: &Network, k: f64, seed: u64) -> Result<Vec<usize>> {
    let count = attack_size(net.lines.len(), k)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..net.lines.len()).collect();
    order.shuffle(&mut rng);
    let mut ids: Vec<usize> = order[..count].iter().map(|&i| net.lines[i].id).collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Top lines by a per-line score, ties broken by ascending line id.
pub fn top_lines(net: &Network, scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..net.lines.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(net.lines[a].id.cmp(&net.lines[b].id))
    });
    let mut ids: Vec<usize> = order[..count.min(order.len())].iter().map(|&k| net.lines[k].id).collect();
    ids.sort_unstable();
    ids
}

/// The lines carrying the largest active flows in the optimal dispatch of
/// `net`, by the larger of the two directed flows.
pub fn flow_attack(net: &Network, k: f64) -> Result<Vec<usize>> {
    let count = attack_size(net.lines.len(), k)?;
    let sol = solve_ac_opf(net)?;
    let scores: Vec<f64> = sol.flows.iter().map(|f| f.max_active()).collect();
    Ok(top_lines(net, &scores, count))
}

/// Percentage of the real network's load served after removing `damaged`.
pub fn evaluate_attack(real_net: &Network, damaged: &[usize]) -> Result<f64> {
    let sol = solve_restoration(real_net, damaged)?;
    Ok((100.0 * sol.served_fraction).clamp(0.0, 100.0))
}

/// `100·|real ∩ obf| / |real|`.
pub fn attack_similarity(e_real: &[usize], e_obf: &[usize]) -> Result<f64> {
    let real: BTreeSet<usize> = e_real.iter().copied().collect();
    if real.is_empty() {
        return Err(CoreError::Invalid("real attack set is empty".into()));
    }
    let obf: BTreeSet<usize> = e_obf.iter().copied().collect();
    Ok(100.0 * real.intersection(&obf).count() as f64 / real.len() as f64)
}
