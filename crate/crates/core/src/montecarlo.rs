//! Simulation oracle.
//!
//! Trial `t` draws from its own ChaCha8 stream keyed by `(seed, t)`, so results
//! do not depend on how trials are split across threads.

use crate::channel::{CorrKind, CorrelationMatrix, PortSampler, Scratch, SystemConfig};
use crate::error::{Error, Result};
use crate::Scheme;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TRIALS: usize = 100_000;
pub const MIN_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub p_hat: f64,
    pub trials: usize,
    pub half_width_95: f64,
    pub scheme: Scheme,
    pub corr_kind: CorrKind,
}

impl McResult {
    fn from_count(hits: usize, trials: usize, scheme: Scheme, corr_kind: CorrKind) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            p_hat: p,
            trials,
            half_width_95: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(),
            scheme,
            corr_kind,
        }
    }
}

/// RNG for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Strongest-port envelope `A_max` of each trial, in trial order.
pub fn sample_amax(
    cfg: &SystemConfig,
    corr: &CorrelationMatrix,
    scheme: Scheme,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = PortSampler::new(cfg, corr)?;
    Ok(sample_amax_with(&sampler, scheme, trials, seed))
}

pub fn sample_amax_with(sampler: &PortSampler, scheme: Scheme, trials: usize, seed: u64) -> Vec<f64> {
    (0..trials as u64)
        .into_par_iter()
        .map_init(Scratch::default, |scratch, t| {
            let mut rng = trial_rng(seed, t);
            sampler.sample_amax(scheme, &mut rng, scratch)
        })
        .collect()
}

/// Fraction of samples strictly below `√γ_th`.
pub fn outage_from_samples(samples: &[f64], gamma_th: f64, scheme: Scheme, corr_kind: CorrKind) -> McResult {
    let thr = gamma_th.sqrt();
    let hits = samples.iter().filter(|&&a| a < thr).count();
    McResult::from_count(hits, samples.len(), scheme, corr_kind)
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "trials must be >= {MIN_TRIALS} (got {trials})"
        )));
    }
    Ok(())
}

/// Estimate `P(A_max < √γ_th)` at rate `r`. The configuration seed fixes the
/// LoS geometry; `seed` keys the per-trial streams.
pub fn estimate_outage(
    cfg: &SystemConfig,
    corr: &CorrelationMatrix,
    scheme: Scheme,
    r: f64,
    trials: usize,
    seed: u64,
) -> Result<McResult> {
    check_trials(trials)?;
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidArgument(format!("R must be finite and >= 0 (got {r})")));
    }
    let samples = sample_amax(cfg, corr, scheme, trials, seed)?;
    Ok(outage_from_samples(&samples, cfg.gamma_th(r), scheme, corr.kind))
}

/// `R·(1 − p̂)`.
pub fn estimate_throughput(
    cfg: &SystemConfig,
    corr: &CorrelationMatrix,
    scheme: Scheme,
    r: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let res = estimate_outage(cfg, corr, scheme, r, trials, seed)?;
    Ok(r * (1.0 - res.p_hat))
}

/// Envelopes `A_k` of every port of every trial (length `trials·N`).
pub fn sample_port_envelopes(
    sampler: &PortSampler,
    scheme: Scheme,
    trials: usize,
    seed: u64,
) -> Vec<f64> {
    let chunks: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map_init(Scratch::default, |scratch, t| {
            let mut rng = trial_rng(seed, t);
            sampler.envelopes(scheme, &mut rng, scratch).to_vec()
        })
        .collect();
    chunks.concat()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPdf {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl EmpiricalPdf {
    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Two-column CSV `bin_center,density`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_center", "density"])?;
        for (c, d) in self.centers().iter().zip(&self.densities) {
            w.write_record([c.to_string(), d.to_string()])?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

pub const MIN_PDF_SAMPLES: usize = 10_000;

/// Normalized histogram over `[min, max]` with `bins` equal-width bins.
///
/// A degenerate sample range is widened to one unit centred on the value.
pub fn empirical_pdf(samples: &[f64], bins: usize) -> Result<EmpiricalPdf> {
    if samples.len() < MIN_PDF_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_PDF_SAMPLES} samples (got {})",
            samples.len()
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    let (mut lo, mut hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let total = samples.len() as f64;
    Ok(EmpiricalPdf {
        bin_edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        densities: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
    })
}

/// Kolmogorov–Smirnov statistic of `samples` against the continuous CDF `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
