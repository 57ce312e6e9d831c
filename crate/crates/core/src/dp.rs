//! Laplace mechanism, the three private line queries and budget accounting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{CoreError, Result};
use crate::network::{voltage_levels, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_bound: f64,
}

impl PrivacyParams {
    pub const DEFAULT_LAMBDA: f64 = 16.0;

    pub fn new(epsilon: f64, alpha: f64, beta: f64, lambda_bound: f64) -> Result<Self> {
        let p = PrivacyParams {
            epsilon,
            alpha,
            beta,
            lambda_bound,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.epsilon) || !ok(self.alpha) || !ok(self.beta) {
            return Err(CoreError::Invalid(format!(
                "epsilon, alpha and beta must be positive (got {}, {}, {})",
                self.epsilon, self.alpha, self.beta
            )));
        }
        if !(self.lambda_bound.is_finite() && self.lambda_bound > 1.0) {
            return Err(CoreError::Invalid(format!("lambda bound {} must exceed 1", self.lambda_bound)));
        }
        Ok(())
    }

    /// Scale of the identity-query noise.
    pub fn identity_scale(&self) -> f64 {
        3.0 * self.alpha / self.epsilon
    }

    /// Scale of the noise on a mean over `n` lines.
    pub fn mean_scale(&self, n: usize) -> f64 {
        3.0 * self.alpha / (n as f64 * self.epsilon)
    }
}

/// Source of uniform draws on the open interval `(-1/2, 1/2)`.
pub trait UniformSource {
    fn next_centered(&mut self) -> f64;
}

/// ChaCha20 stream seeded with a `u64`.
#[derive(Debug, Clone)]
pub struct SeededUniform(ChaCha20Rng);

impl SeededUniform {
    pub fn new(seed: u64) -> Self {
        SeededUniform(ChaCha20Rng::seed_from_u64(seed))
    }
}

impl UniformSource for SeededUniform {
    fn next_centered(&mut self) -> f64 {
        loop {
            let u: f64 = self.0.gen();
            if u > 0.0 {
                return u - 0.5;
            }
        }
    }
}

/// Always returns the median, so every Laplace draw is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroUniform;

impl UniformSource for ZeroUniform {
    fn next_centered(&mut self) -> f64 {
        0.0
    }
}

/// Inverse CDF of the zero-mean Laplace distribution at `u ∈ (-1/2, 1/2)`.
pub fn laplace_quantile(scale: f64, u: f64) -> f64 {
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn laplace_sample(scale: f64, src: &mut dyn UniformSource) -> f64 {
    debug_assert!(scale > 0.0);
    laplace_quantile(scale, src.next_centered())
}

/// Empirical privacy check of the scalar identity query: `samples` noisy
/// releases of the adjacent values `0` and `α`, histogrammed into `bins`
/// bins of equal mass under the first. Returns the largest absolute log
/// ratio of bin counts, which should not exceed `ε/3` by more than the
/// sampling error.
pub fn identity_log_ratio(p: &PrivacyParams, samples: usize, bins: usize, seed: u64) -> f64 {
    let mut src = SeededUniform::new(seed);
    let zeros = noisy_conductances(&vec![0.0; samples], p, &mut src);
    let shifted = noisy_conductances(&vec![p.alpha; samples], p, &mut src);
    let edges: Vec<f64> = (1..bins)
        .map(|k| laplace_quantile(p.identity_scale(), k as f64 / bins as f64 - 0.5))
        .collect();
    let hist = |xs: &[f64]| {
        let mut h = vec![0usize; bins];
        for &x in xs {
            h[edges.partition_point(|&e| e <= x)] += 1;
        }
        h
    };
    let (h0, h1) = (hist(&zeros), hist(&shifted));
    h0.iter()
        .zip(&h1)
        .map(|(&a, &b)| (a as f64 / b as f64).ln().abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    /// identity query on the line parameters
    IdentityG,
    /// per-level conductance means
    MeansG,
    /// per-level susceptance means
    MeansB,
    /// anything else that read the raw line data
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub query: Query,
    pub epsilon: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub epsilon: f64,
    pub entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(epsilon: f64) -> Self {
        BudgetLedger {
            epsilon,
            entries: Vec::new(),
        }
    }

    pub fn charge(&mut self, query: Query, epsilon: f64, note: impl Into<String>) {
        self.entries.push(LedgerEntry {
            query,
            epsilon,
            note: note.into(),
        });
    }

    pub fn spent(&self) -> f64 {
        self.entries.iter().map(|e| e.epsilon).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("privacy budget violation: {}", .0.join("; "))]
pub struct BudgetViolation(pub Vec<String>);

/// Accepts exactly one `ε/3` charge for each of the three line queries.
pub fn budget_audit(ledger: &BudgetLedger) -> std::result::Result<(), BudgetViolation> {
    let share = ledger.epsilon / 3.0;
    let mut problems = Vec::new();
    for q in [Query::IdentityG, Query::MeansG, Query::MeansB] {
        let hits: Vec<&LedgerEntry> = ledger.entries.iter().filter(|e| e.query == q).collect();
        match hits.as_slice() {
            [e] if e.epsilon == share => {}
            [e] => problems.push(format!("{q:?} charged {} instead of {share}", e.epsilon)),
            [] => problems.push(format!("{q:?} missing")),
            _ => problems.push(format!("{q:?} charged {} times", hits.len())),
        }
    }
    for e in ledger.entries.iter().filter(|e| e.query == Query::Other) {
        problems.push(format!("unexpected query '{}' charged {}", e.note, e.epsilon));
    }
    if (ledger.spent() - ledger.epsilon).abs() > 1e-12 * ledger.epsilon {
        problems.push(format!("spent {} of {}", ledger.spent(), ledger.epsilon));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(BudgetViolation(problems))
    }
}

/// `g + Lap(3α/ε)` entrywise.
pub fn noisy_conductances(g: &[f64], p: &PrivacyParams, src: &mut dyn UniformSource) -> Vec<f64> {
    let scale = p.identity_scale();
    g.iter().map(|&v| v + laplace_sample(scale, src)).collect()
}

/// `g̃ / r` entrywise, keeping each line's conductance-susceptance ratio.
pub fn noisy_susceptances(g_tilde: &[f64], ratios: &[f64]) -> Result<Vec<f64>> {
    g_tilde
        .iter()
        .zip(ratios)
        .enumerate()
        .map(|(k, (&g, &r))| {
            if r == 0.0 || !r.is_finite() {
                Err(CoreError::Invalid(format!("line index {k} has no usable g/b ratio")))
            } else {
                Ok(g / r)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMean {
    /// base voltages of the level's endpoints (kV)
    pub kv: (f64, f64),
    /// line indices of the level
    pub lines: Vec<usize>,
    /// number of lines averaged
    pub count: usize,
    pub mean: f64,
}

/// Noisy mean of `values` over the lines of each voltage level for which
/// `include` holds; noise scale `3α/(n_v ε)`. Levels with no included line
/// get mean 0 without touching the data.
pub fn noisy_level_means(
    net: &Network,
    values: &[f64],
    include: &dyn Fn(usize) -> bool,
    p: &PrivacyParams,
    src: &mut dyn UniformSource,
) -> Vec<LevelMean> {
    voltage_levels(net)
        .into_iter()
        .map(|lvl| {
            let used: Vec<usize> = lvl.lines.iter().copied().filter(|&k| include(k)).collect();
            let mean = if used.is_empty() {
                0.0
            } else {
                let n = used.len();
                used.iter().map(|&k| values[k]).sum::<f64>() / n as f64 + laplace_sample(p.mean_scale(n), src)
            };
            LevelMean {
                kv: lvl.kv,
                lines: lvl.lines,
                count: used.len(),
                mean,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyLineData {
    pub g_tilde: Vec<f64>,
    pub b_tilde: Vec<f64>,
    /// public `g/b` per line; 0 for purely reactive lines
    pub ratios: Vec<f64>,
    pub mu_g: Vec<LevelMean>,
    pub mu_b: Vec<LevelMean>,
    pub ledger: BudgetLedger,
}

impl NoisyLineData {
    /// Lines without conductance, whose susceptance is perturbed directly.
    pub fn reactive_only(&self, k: usize) -> bool {
        self.ratios[k] == 0.0
    }
}

/// The three private queries on the line admittances of `net`.
///
/// Lines with `g = 0` keep `g̃ = 0` and receive identity-query noise on `b`
/// instead; they form a disjoint part of the same query. Conductance means
/// only average lines with `g ≠ 0`.
pub fn privatize_lines(net: &Network, p: &PrivacyParams, src: &mut dyn UniformSource) -> Result<NoisyLineData> {
    p.validate()?;
    let (g, b) = net.admittances()?;
    let n = g.len();
    let ratios: Vec<f64> = (0..n).map(|k| if g[k] == 0.0 { 0.0 } else { g[k] / b[k] }).collect();
    let mut ledger = BudgetLedger::new(p.epsilon);
    let share = p.epsilon / 3.0;

    let scale = p.identity_scale();
    let mut g_tilde = vec![0.0; n];
    let mut b_tilde = vec![0.0; n];
    for k in 0..n {
        let noise = laplace_sample(scale, src);
        if g[k] == 0.0 {
            b_tilde[k] = b[k] + noise;
        } else {
            g_tilde[k] = g[k] + noise;
            b_tilde[k] = g_tilde[k] / ratios[k];
        }
    }
    ledger.charge(Query::IdentityG, share, "identity query on line conductances");

    let mu_g = noisy_level_means(net, &g, &|k| g[k] != 0.0, p, src);
    ledger.charge(Query::MeansG, share, "per-level conductance means");
    let mu_b = noisy_level_means(net, &b, &|_| true, p, src);
    ledger.charge(Query::MeansB, share, "per-level susceptance means");

    Ok(NoisyLineData {
        g_tilde,
        b_tilde,
        ratios,
        mu_g,
        mu_b,
        ledger,
    })
}
