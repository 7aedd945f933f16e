//! Analytic outage probabilities.
//!
//! Every model evaluates `P(A_max < √γ_th)` under an approximation of the port
//! correlation:
//!
//! * **BCMA** keeps the fitted block structure. In the CSI-based scheme each
//!   block is conditioned on its common component `h̃_b ~ CN(0, σ_b² I_M)`,
//!   ports become independent Normal envelopes, and the expectation over
//!   `h̃_b` is taken by inner Monte Carlo. In the CSI-free scheme the
//!   conditional port CDF is a Marcum-Q term and the expectation is a
//!   one-dimensional integral.
//! * **IAE** collapses each block to one independent port.
//! * **Constant** is BCMA with a single block over all `N` ports.

use crate::blockapprox::{approximate, BlockStructure};
use crate::channel::{jakes_correlation, LosGeometry, SystemConfig};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_laguerre, gauss_legendre, map_rule, Rule};
use crate::specfun::{laguerre_half_unchecked, marcum_pair, norm_cdf};
use crate::Scheme;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Coherence-interval length in slots used when none is given.
pub const DEFAULT_TOTAL_SLOTS: u64 = 1000;
pub const DEFAULT_INNER_SAMPLES: usize = 5000;
pub const DEFAULT_QUAD_NODES: usize = 64;

// Streams for inner Monte Carlo sit above any trial index.
const INNER_STREAM_BASE: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Simulation,
    Bcma,
    Iae,
    Constant,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Simulation => "simulation",
            Model::Bcma => "bcma",
            Model::Iae => "iae",
            Model::Constant => "constant",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulation" => Ok(Model::Simulation),
            "bcma" => Ok(Model::Bcma),
            "iae" => Ok(Model::Iae),
            "constant" => Ok(Model::Constant),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }
}

/// Which pilot cost is charged against the data phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverheadPolicy {
    /// `τ = 0`.
    None,
    /// `τ = N`: one pilot per FAS port.
    FasOnly,
    /// `τ = N·M`: one pilot per port and RIS on/off pattern.
    OnOffRis,
}

impl OverheadPolicy {
    pub fn slots(self, n: usize, m: usize) -> u64 {
        match self {
            OverheadPolicy::None => 0,
            OverheadPolicy::FasOnly => n as u64,
            OverheadPolicy::OnOffRis => (n * m) as u64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OverheadPolicy::None => "none",
            OverheadPolicy::FasOnly => "fas-only",
            OverheadPolicy::OnOffRis => "on-off-ris",
        }
    }
}

impl FromStr for OverheadPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(OverheadPolicy::None),
            "fas-only" => Ok(OverheadPolicy::FasOnly),
            "on-off-ris" => Ok(OverheadPolicy::OnOffRis),
            other => Err(Error::InvalidArgument(format!("unknown overhead policy '{other}'"))),
        }
    }
}

/// `R / (1 − τ/Ω)`.
pub fn effective_rate(r: f64, overhead_slots: u64, total_slots: u64) -> Result<f64> {
    if total_slots == 0 || overhead_slots >= total_slots {
        return Err(Error::InvalidArgument(format!(
            "overhead slots {overhead_slots} must be below total slots {total_slots}"
        )));
    }
    Ok(r / (1.0 - overhead_slots as f64 / total_slots as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageQuery {
    pub cfg: SystemConfig,
    pub structure: BlockStructure,
    #[serde(rename = "R")]
    pub r: f64,
    pub scheme: Scheme,
    pub model: Model,
    #[serde(default)]
    pub overhead_slots: u64,
    #[serde(default = "default_total_slots")]
    pub total_slots: u64,
}

fn default_total_slots() -> u64 {
    DEFAULT_TOTAL_SLOTS
}

impl OutageQuery {
    pub fn new(cfg: SystemConfig, structure: BlockStructure, r: f64, scheme: Scheme, model: Model) -> Self {
        Self {
            cfg,
            structure,
            r,
            scheme,
            model,
            overhead_slots: 0,
            total_slots: DEFAULT_TOTAL_SLOTS,
        }
    }

    /// Query whose block structure is fitted to the Jakes matrix of `cfg`.
    pub fn for_config(cfg: SystemConfig, r: f64, scheme: Scheme, model: Model) -> Result<Self> {
        cfg.validate()?;
        let corr = jakes_correlation(cfg.n, cfg.w)?;
        let structure = approximate(&corr, cfg.lambda_th, cfg.mu_b_sq)?;
        Ok(Self::new(cfg, structure, r, scheme, model))
    }

    pub fn effective_rate(&self) -> Result<f64> {
        effective_rate(self.r, self.overhead_slots, self.total_slots)
    }

    /// Threshold `(2^{R_eff} − 1)σ²/P`.
    pub fn gamma_th(&self) -> Result<f64> {
        let g = self.cfg.gamma_th(self.effective_rate()?);
        if !g.is_finite() {
            return Err(Error::InvalidArgument(format!("threshold for R={} is not finite", self.r)));
        }
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidArgument(format!("R must be finite and >= 0 (got {})", self.r)));
        }
        self.cfg.validate()?;
        if self.structure.n() != self.cfg.n {
            return Err(Error::InvalidArgument(format!(
                "block sizes cover {} ports but N = {}",
                self.structure.n(),
                self.cfg.n
            )));
        }
        Ok(())
    }
}

/// Charge the policy's pilot slots against the query.
pub fn apply_overhead(query: &OutageQuery, policy: OverheadPolicy) -> Result<OutageQuery> {
    let tau = policy.slots(query.cfg.n, query.cfg.m);
    let mut q = query.clone();
    q.overhead_slots = tau;
    q.effective_rate()?;
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageEstimate {
    pub p: f64,
    pub scheme: Scheme,
    pub model: Model,
    pub numeric_error: f64,
}

/// Tuning knobs for the two models that need numerical integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub inner_samples: usize,
    pub quad_nodes: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            inner_samples: DEFAULT_INNER_SAMPLES,
            quad_nodes: DEFAULT_QUAD_NODES,
        }
    }
}

/// Mean and variance of `|X|` for `X ~ CN(v, s0_sq)`.
pub fn rician_abs_moments(v: f64, s0_sq: f64) -> (f64, f64) {
    if s0_sq <= 0.0 {
        return (v, 0.0);
    }
    let l = laguerre_half_unchecked(-v * v / s0_sq);
    let mean = (PI * s0_sq).sqrt() / 2.0 * l;
    // written relative to s0² so the cancellation loses at most log10(v²/s0²) digits
    let var = s0_sq * (1.0 + v * v / s0_sq - PI / 4.0 * l * l);
    (mean, var.max(0.0))
}

/// Statistics shared by the CSI-based models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiBasedMoments {
    /// Mean of one collapsed block envelope.
    pub mu_bar: f64,
    pub sigma_bar_sq: f64,
    /// Conditional NLoS variance inside a block, `(1 − μ_b²)α/(K+1)`.
    pub sigma0_sq: f64,
    /// Variance of the block-common component, `α/(K+1)`.
    pub sigma_b_sq: f64,
    /// LoS amplitude `√(αK/(K+1))`.
    pub v: f64,
    pub beta: f64,
    pub m: usize,
}

impl CsiBasedMoments {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let pl = cfg.pathloss()?;
        let sigma_b_sq = pl.alpha / (cfg.k + 1.0);
        let v = (pl.alpha * cfg.k / (cfg.k + 1.0)).sqrt();
        let (mean1, var1) = rician_abs_moments(v, sigma_b_sq);
        let m = cfg.m as f64;
        Ok(Self {
            mu_bar: pl.beta.sqrt() * m * mean1,
            sigma_bar_sq: pl.beta * m * var1,
            sigma0_sq: (1.0 - cfg.mu_b_sq) * sigma_b_sq,
            sigma_b_sq,
            v,
            beta: pl.beta,
            m: cfg.m,
        })
    }

    /// `Φ((√γ − μ̄)/σ̄) − Φ(−μ̄/σ̄)`: CDF of one collapsed block at `√γ`.
    pub fn block_cdf(&self, gamma_th: f64) -> f64 {
        normal_bracket(gamma_th.sqrt(), self.mu_bar, self.sigma_bar_sq.sqrt())
    }
}

/// `P(0 ≤ X < x)` for `X ~ N(mu, sd²)`.
fn normal_bracket(x: f64, mu: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return if x > mu { 1.0 } else { 0.0 };
    }
    (norm_cdf((x - mu) / sd) - norm_cdf(-mu / sd)).max(0.0)
}

/// Statistics of the CSI-free models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiFreeMoments {
    pub sigma_hat_sq: f64,
    pub sigma_check_sq: f64,
    /// Rate of the exponential law of `|A_k|²`, `1/(Mαβ)`.
    pub lambda_a: f64,
}

impl CsiFreeMoments {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let pl = cfg.pathloss()?;
        let eta = cfg.m as f64 * pl.alpha * pl.beta;
        Ok(Self {
            sigma_hat_sq: (cfg.k + cfg.mu_b_sq) * eta / (cfg.k + 1.0),
            sigma_check_sq: (1.0 - cfg.mu_b_sq) * eta / (cfg.k + 1.0),
            lambda_a: 1.0 / eta,
        })
    }
}

fn expect(query: &OutageQuery, scheme: Scheme, models: &[Model]) -> Result<()> {
    if query.scheme != scheme || !models.contains(&query.model) {
        return Err(Error::InvalidArgument(format!(
            "query ({}, {}) does not match this evaluator",
            query.scheme, query.model
        )));
    }
    query.validate()
}

fn estimate(query: &OutageQuery, p: f64, numeric_error: f64) -> OutageEstimate {
    OutageEstimate {
        p: p.clamp(0.0, 1.0),
        scheme: query.scheme,
        model: query.model,
        numeric_error,
    }
}

/// CSI-based IAE: `[Φ((√γ − μ̄)/σ̄) − Φ(−μ̄/σ̄)]^B`.
pub fn csi_based_iae(query: &OutageQuery) -> Result<OutageEstimate> {
    expect(query, Scheme::CsiBased, &[Model::Iae])?;
    let mom = CsiBasedMoments::from_config(&query.cfg)?;
    let f = mom.block_cdf(query.gamma_th()?);
    Ok(estimate(query, f.powi(query.structure.b as i32), 0.0))
}

/// CSI-based BCMA with the block expectation taken over `inner_samples` draws.
pub fn csi_based_bcma(query: &OutageQuery, inner_samples: usize) -> Result<OutageEstimate> {
    expect(query, Scheme::CsiBased, &[Model::Bcma, Model::Constant])?;
    if inner_samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "inner_samples must be >= 100 (got {inner_samples})"
        )));
    }
    let gamma = query.gamma_th()?;
    if gamma == 0.0 {
        return Ok(estimate(query, 0.0, 0.0));
    }
    let cfg = &query.cfg;
    let structure = &query.structure;
    let mom = CsiBasedMoments::from_config(cfg)?;
    let geo = LosGeometry::from_seed(cfg.n, cfg.m, cfg.w, cfg.seed);
    let mu_b = structure.mu_sq.sqrt();
    let s0_sq = (1.0 - structure.mu_sq) * mom.sigma_b_sq;
    let sqrt_g = gamma.sqrt();
    let sqrt_beta = mom.beta.sqrt();
    let sd_b = (mom.sigma_b_sq / 2.0).sqrt();
    let m = cfg.m;

    let mut p = 1.0;
    let mut worst_se: f64 = 0.0;
    let mut hb = vec![Complex64::default(); m];
    for (bi, range) in structure.ranges().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(INNER_STREAM_BASE + bi as u64);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..inner_samples {
            for h in hb.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *h = Complex64::new(sd_b * re, sd_b * im);
            }
            let mut prod = 1.0;
            for k in range.clone() {
                let (mut mu_k, mut var_k) = (0.0, 0.0);
                for (i, h) in hb.iter().enumerate() {
                    let v = (h * mu_b + geo.hbar(k, i) * mom.v).norm();
                    let (a, b) = rician_abs_moments(v, s0_sq);
                    mu_k += a;
                    var_k += b;
                }
                prod *= normal_bracket(sqrt_g, sqrt_beta * mu_k, (mom.beta * var_k).sqrt());
                if prod == 0.0 {
                    break;
                }
            }
            sum += prod;
            sum_sq += prod * prod;
        }
        let n = inner_samples as f64;
        let mean = sum / n;
        let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
        worst_se = worst_se.max((var / n).sqrt());
        p *= mean;
    }
    Ok(estimate(query, p, worst_se))
}

/// CSI-free IAE: `(1 − e^{−λ_a γ})^B`.
pub fn csi_free_iae(query: &OutageQuery) -> Result<OutageEstimate> {
    expect(query, Scheme::CsiFree, &[Model::Iae])?;
    let mom = CsiFreeMoments::from_config(&query.cfg)?;
    let f = -(-mom.lambda_a * query.gamma_th()?).exp_m1();
    Ok(estimate(query, f.powi(query.structure.b as i32), 0.0))
}

/// CSI-free BCMA:
/// `Π_b ∫₀^∞ e^{−t} [1 − Q₁(c√t, √(2γ/č²))]^{L_b} dt` with `c² = 2σ̂²/č²`.
///
/// The integrand switches from one to zero over a unit-width window in
/// `a = c√t` around `a = √(2γ/č²)`; panels are aligned with that window so a
/// fixed-order Gauss–Legendre rule resolves it for any `č²`. `quad_nodes` is
/// the per-panel order and `numeric_error` the change from halving it.
pub fn csi_free_bcma(query: &OutageQuery, quad_nodes: usize) -> Result<OutageEstimate> {
    expect(query, Scheme::CsiFree, &[Model::Bcma, Model::Constant])?;
    if quad_nodes < 8 {
        return Err(Error::InvalidArgument(format!("quad_nodes must be >= 8 (got {quad_nodes})")));
    }
    let gamma = query.gamma_th()?;
    if gamma == 0.0 {
        return Ok(estimate(query, 0.0, 0.0));
    }
    let mut mom = CsiFreeMoments::from_config(&query.cfg)?;
    // recompute with the structure's μ² in case it differs from the config
    let eta = 1.0 / mom.lambda_a;
    let k = query.cfg.k;
    let mu_sq = query.structure.mu_sq;
    mom.sigma_hat_sq = (k + mu_sq) * eta / (k + 1.0);
    mom.sigma_check_sq = ((1.0 - mu_sq) * eta / (k + 1.0)).max(1e-12 * mom.sigma_hat_sq);

    let c = (2.0 * mom.sigma_hat_sq / mom.sigma_check_sq).sqrt();
    let b0 = (2.0 * gamma / mom.sigma_check_sq).sqrt();
    let panels = panels(c, b0);
    let fine = gauss_legendre(quad_nodes)?;
    let coarse = gauss_legendre(quad_nodes / 2)?;
    let tail = gauss_laguerre(16)?;
    let sizes = &query.structure.sizes;
    let p_fine = integrate_blocks(&panels, &fine, &tail, c, b0, sizes);
    let p_coarse = integrate_blocks(&panels, &coarse, &tail, c, b0, sizes);
    Ok(estimate(query, p_fine, (p_fine - p_coarse).abs()))
}

const T_CAP: f64 = 60.0;
const MAX_PANEL: f64 = 4.0;

fn panels(c: f64, b0: f64) -> Vec<(f64, f64)> {
    let to_t = |a: f64| (a / c) * (a / c);
    let mut cuts = vec![0.0];
    let a_lo = (b0 - 9.0).max(0.0);
    let steps = ((b0 + 9.0 - a_lo).ceil()) as usize;
    for j in 0..=steps {
        let t = to_t(a_lo + j as f64);
        if t > *cuts.last().unwrap() {
            cuts.push(t.min(T_CAP));
        }
        if t >= T_CAP {
            break;
        }
    }
    if *cuts.last().unwrap() < T_CAP {
        cuts.push(T_CAP);
    }
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let pieces = ((hi - lo) / MAX_PANEL).ceil().max(1.0) as usize;
        let h = (hi - lo) / pieces as f64;
        for i in 0..pieces {
            out.push((lo + i as f64 * h, if i + 1 == pieces { hi } else { lo + (i + 1) as f64 * h }));
        }
    }
    out
}

fn integrate_blocks(
    panels: &[(f64, f64)],
    rule: &Rule,
    tail: &Rule,
    c: f64,
    b0: f64,
    sizes: &[usize],
) -> f64 {
    // (weight·e^{−t}, conditional CDF) at every node
    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(panels.len() * rule.len() + tail.len());
    for &(lo, hi) in panels {
        map_rule(rule, lo, hi, |t, w| {
            nodes.push((w * (-t).exp(), cond_cdf(c, b0, t)));
        });
    }
    let tail_scale = (-T_CAP).exp();
    for (s, w) in tail.nodes.iter().zip(&tail.weights) {
        nodes.push((tail_scale * w, cond_cdf(c, b0, T_CAP + s)));
    }
    sizes
        .iter()
        .map(|&l| nodes.iter().map(|(w, f)| w * f.powi(l as i32)).sum::<f64>())
        .product()
}

fn cond_cdf(c: f64, b0: f64, t: f64) -> f64 {
    marcum_pair(c * t.max(0.0).sqrt(), b0).1.value
}

/// Constant-correlation baseline: BCMA with one block of all `N` ports.
pub fn constant_model(query: &OutageQuery, opts: &EvalOptions) -> Result<OutageEstimate> {
    expect(query, query.scheme, &[Model::Constant])?;
    let mut q = query.clone();
    q.structure = BlockStructure::single(query.cfg.n, query.cfg.mu_b_sq)?;
    match query.scheme {
        Scheme::CsiBased => csi_based_bcma(&q, opts.inner_samples),
        Scheme::CsiFree => csi_free_bcma(&q, opts.quad_nodes),
    }
}

/// Dispatch on the query's scheme and model.
pub fn evaluate(query: &OutageQuery, opts: &EvalOptions) -> Result<OutageEstimate> {
    match (query.scheme, query.model) {
        (_, Model::Simulation) => Err(Error::InvalidArgument(
            "simulation is not an analytic model; use the montecarlo module".into(),
        )),
        (Scheme::CsiBased, Model::Iae) => csi_based_iae(query),
        (Scheme::CsiBased, Model::Bcma) => csi_based_bcma(query, opts.inner_samples),
        (Scheme::CsiFree, Model::Iae) => csi_free_iae(query),
        (Scheme::CsiFree, Model::Bcma) => csi_free_bcma(query, opts.quad_nodes),
        (_, Model::Constant) => constant_model(query, opts),
    }
}

/// Batch record; `structure` is fitted from the configuration when omitted.
#[derive(Debug, Clone, Deserialize)]
pub struct QueryRecord {
    pub cfg: SystemConfig,
    #[serde(default)]
    pub structure: Option<BlockStructure>,
    #[serde(rename = "R")]
    pub r: f64,
    pub scheme: Scheme,
    pub model: Model,
    #[serde(default)]
    pub overhead_slots: u64,
    #[serde(default = "default_total_slots")]
    pub total_slots: u64,
}

impl QueryRecord {
    pub fn into_query(self) -> Result<OutageQuery> {
        let mut q = match self.structure {
            Some(s) => OutageQuery::new(self.cfg, s, self.r, self.scheme, self.model),
            None => OutageQuery::for_config(self.cfg, self.r, self.scheme, self.model)?,
        };
        q.overhead_slots = self.overhead_slots;
        q.total_slots = self.total_slots;
        Ok(q)
    }
}

/// Evaluate a JSON array of query records in parallel, preserving order.
pub fn evaluate_batch_json(text: &str, opts: &EvalOptions) -> Result<Vec<OutageEstimate>> {
    let records: Vec<QueryRecord> = serde_json::from_str(text)?;
    let queries: Vec<OutageQuery> = records
        .into_iter()
        .map(QueryRecord::into_query)
        .collect::<Result<_>>()?;
    queries.par_iter().map(|q| evaluate(q, opts)).collect()
}

/// Write estimates as CSV with header `p,scheme,model,numeric_error`.
pub fn write_estimates_csv<W: std::io::Write>(estimates: &[OutageEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in estimates {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(m: usize, p: f64) -> SystemConfig {
        SystemConfig::new(m, 100, p)
    }

    fn query(m: usize, p: f64, r: f64, scheme: Scheme, model: Model) -> OutageQuery {
        OutageQuery::for_config(cfg(m, p), r, scheme, model).unwrap()
    }

    fn eval(q: &OutageQuery) -> OutageEstimate {
        evaluate(q, &EvalOptions { inner_samples: 1000, quad_nodes: 32 }).unwrap()
    }

    #[test]
    fn zero_rate_gives_zero_outage_everywhere() {
        for scheme in [Scheme::CsiBased, Scheme::CsiFree] {
            for model in [Model::Bcma, Model::Iae, Model::Constant] {
                let e = eval(&query(4, 10.0, 0.0, scheme, model));
                assert_eq!(e.p, 0.0, "{scheme} {model}");
            }
        }
    }

    #[test]
    fn single_block_iae_is_the_bracket() {
        let mut q = query(4, 10.0, 2.0, Scheme::CsiBased, Model::Iae);
        q.structure = BlockStructure::single(100, 0.97).unwrap();
        let mom = CsiBasedMoments::from_config(&q.cfg).unwrap();
        let g = q.gamma_th().unwrap();
        let direct = 0.5 * libm::erf((g.sqrt() - mom.mu_bar) / (2.0 * mom.sigma_bar_sq).sqrt())
            - 0.5 * libm::erf(-mom.mu_bar / (2.0 * mom.sigma_bar_sq).sqrt());
        assert!((csi_based_iae(&q).unwrap().p - direct).abs() < 1e-14);

        let mut q = query(4, 10.0, 2.0, Scheme::CsiFree, Model::Iae);
        q.structure = BlockStructure::single(100, 0.97).unwrap();
        let lam = CsiFreeMoments::from_config(&q.cfg).unwrap().lambda_a;
        let g = q.gamma_th().unwrap();
        assert_relative_eq!(csi_free_iae(&q).unwrap().p, 1.0 - (-lam * g).exp(), max_relative = 1e-13);
    }

    #[test]
    fn rician_moments_against_direct_integration() {
        // E|X| for X ~ CN(v, s²) by 2-D midpoint quadrature in polar offsets
        let (v, s2) = (0.8, 0.5);
        let sd = (s2 / 2.0f64).sqrt();
        let n = 600;
        let lim = 7.0 * sd;
        let h = 2.0 * lim / n as f64;
        let (mut m1, mut m2, mut z) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let x = -lim + (i as f64 + 0.5) * h;
                let y = -lim + (j as f64 + 0.5) * h;
                let w = (-(x * x + y * y) / (2.0 * sd * sd)).exp();
                let r = ((v + x).powi(2) + y * y).sqrt();
                m1 += w * r;
                m2 += w * r * r;
                z += w;
            }
        }
        let (mean, var) = rician_abs_moments(v, s2);
        assert!((mean - m1 / z).abs() < 1e-6);
        assert!((var - (m2 / z - (m1 / z).powi(2))).abs() < 1e-6);
        assert_eq!(rician_abs_moments(0.3, 0.0), (0.3, 0.0));
    }

    #[test]
    fn constant_model_is_single_block_bcma() {
        let q = query(4, 10.0, 2.0, Scheme::CsiFree, Model::Constant);
        let mut b = q.clone();
        b.model = Model::Bcma;
        b.structure = BlockStructure::single(100, 0.97).unwrap();
        assert_eq!(eval(&q).p, eval(&b).p);
    }

    #[test]
    fn wrong_model_rejected() {
        let q = query(2, 10.0, 2.0, Scheme::CsiFree, Model::Bcma);
        assert!(csi_based_iae(&q).is_err());
        assert!(csi_free_iae(&q).is_err());
        let q = query(2, 10.0, 2.0, Scheme::CsiBased, Model::Bcma);
        assert!(csi_based_bcma(&q, 99).is_err());
        let q = query(2, 10.0, 2.0, Scheme::CsiFree, Model::Bcma);
        assert!(csi_free_bcma(&q, 7).is_err());
        let q = query(2, 10.0, 2.0, Scheme::CsiFree, Model::Simulation);
        assert!(evaluate(&q, &EvalOptions::default()).is_err());
    }

    #[test]
    fn overhead_arithmetic() {
        let q = query(2, 10.0, 1.0, Scheme::CsiFree, Model::Iae);
        let none = apply_overhead(&q, OverheadPolicy::None).unwrap();
        assert_eq!(none, q);
        let mut half = q.clone();
        half.overhead_slots = 500;
        assert_eq!(half.effective_rate().unwrap(), 2.0);
        assert_relative_eq!(
            half.gamma_th().unwrap(),
            3.0 * q.cfg.noise_w() / q.cfg.power_w(),
            max_relative = 1e-14
        );
        let ris = apply_overhead(&q, OverheadPolicy::OnOffRis).unwrap();
        assert_eq!(ris.overhead_slots, 200);
        assert_relative_eq!(ris.effective_rate().unwrap(), 1.0 / 0.8, max_relative = 1e-15);
        let mut big = query(20, 10.0, 1.0, Scheme::CsiFree, Model::Iae);
        big.cfg.n = 100;
        assert!(apply_overhead(&big, OverheadPolicy::OnOffRis).is_err());
    }

    #[test]
    fn csi_free_bcma_node_doubling_is_small() {
        for m in [2, 4, 8] {
            for p in [0.0, 10.0, 20.0] {
                let q = query(m, p, 2.0, Scheme::CsiFree, Model::Bcma);
                let e = csi_free_bcma(&q, 64).unwrap();
                assert!(e.numeric_error < 1e-6, "M={m} P={p} err={}", e.numeric_error);
            }
        }
    }

    #[test]
    fn csi_free_bcma_high_correlation_limit_is_iae() {
        let mut q = query(4, 10.0, 2.0, Scheme::CsiFree, Model::Bcma);
        q.structure.mu_sq = 1.0 - 1e-9;
        q.cfg.mu_b_sq = 1.0 - 1e-9;
        let bcma = csi_free_bcma(&q, 64).unwrap();
        let mut i = q.clone();
        i.model = Model::Iae;
        let iae = csi_free_iae(&i).unwrap();
        assert!((bcma.p - iae.p).abs() < 1e-4, "{} vs {}", bcma.p, iae.p);
    }

    #[test]
    fn csi_free_bcma_matches_laguerre_at_moderate_correlation() {
        // with μ² = 0.5 the integrand is smooth and plain Gauss–Laguerre converges
        let mut q = query(2, 10.0, 2.0, Scheme::CsiFree, Model::Bcma);
        q.structure = BlockStructure::from_sizes(vec![3, 2], 0.5).unwrap();
        q.cfg.n = 5;
        let e = csi_free_bcma(&q, 64).unwrap();
        let mom = CsiFreeMoments::from_config(&q.cfg).unwrap();
        let eta = 1.0 / mom.lambda_a;
        let sh = (1.0 + 0.5) * eta / 2.0;
        let sc = 0.5 * eta / 2.0;
        let g = q.gamma_th().unwrap();
        let rule = gauss_laguerre(120).unwrap();
        let f = |l: i32| -> f64 {
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(t, w)| {
                    let a = (2.0 * sh * t / sc).sqrt();
                    w * (1.0 - crate::specfun::marcum_q1(a, (2.0 * g / sc).sqrt()).unwrap()).powi(l)
                })
                .sum()
        };
        assert!((e.p - f(3) * f(2)).abs() < 1e-8);
    }

    #[test]
    fn remark_one_ordering_at_default_config() {
        for scheme in [Scheme::CsiBased, Scheme::CsiFree] {
            for p in [5.0, 10.0, 15.0] {
                let b = eval(&query(4, p, 2.0, scheme, Model::Bcma));
                let i = eval(&query(4, p, 2.0, scheme, Model::Iae));
                assert!(i.p >= b.p - 3.0 * b.numeric_error, "{scheme} P={p}: iae {} bcma {}", i.p, b.p);
            }
        }
    }

    #[test]
    fn monotone_in_rate_and_power() {
        for scheme in [Scheme::CsiBased, Scheme::CsiFree] {
            for model in [Model::Bcma, Model::Iae, Model::Constant] {
                let mut prev = 0.0;
                let base = query(2, 10.0, 0.0, scheme, model);
                for i in 0..100 {
                    let mut q = base.clone();
                    q.r = 0.1 * i as f64;
                    let p = evaluate(&q, &EvalOptions { inner_samples: 200, quad_nodes: 16 }).unwrap().p;
                    assert!(p >= prev - 1e-12, "{scheme} {model} R={}", q.r);
                    prev = p;
                }
                let mut prev = 1.0;
                for i in 0..=20 {
                    let mut q = base.clone();
                    q.r = 2.0;
                    q.cfg.p_dbm = i as f64;
                    let p = evaluate(&q, &EvalOptions { inner_samples: 200, quad_nodes: 16 }).unwrap().p;
                    assert!(p <= prev + 1e-12, "{scheme} {model} P={i}");
                    prev = p;
                }
            }
        }
    }

    #[test]
    fn batch_json_and_csv() {
        let text = r#"[
            {"cfg": {"M": 4, "N": 100, "P_dBm": 10.0}, "R": 2.0, "scheme": "csi-free", "model": "iae"},
            {"cfg": {"M": 8, "N": 100, "P_dBm": 10.0}, "R": 2.0, "scheme": "csi-free", "model": "iae",
             "overhead_slots": 100}
        ]"#;
        let out = evaluate_batch_json(text, &EvalOptions::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|e| (0.0..=1.0).contains(&e.p)));
        let mut buf = Vec::new();
        write_estimates_csv(&out, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "p,scheme,model,numeric_error");
        assert_eq!(s.lines().count(), 3);
    }
}
