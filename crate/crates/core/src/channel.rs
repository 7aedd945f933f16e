//! System configuration, spatial correlation, and channel realizations.
//!
//! The cascaded channel to port `k` through RIS element `i` is
//! `h_k^i = √(αK/(K+1))·h̄_k^i + ñ_k^i`, where the NLoS vector over ports for
//! each element is drawn as `L·z` with `L Lᵀ = Σ` and `z ~ CN(0, α/(K+1)·I)`.
//! The LoS phases follow a linear progression across the aperture with an
//! element offset and arrival angle fixed per configuration seed.

use crate::error::{Error, Result};
use crate::specfun::bessel_j0;
use crate::Scheme;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

/// Physical and statistical parameters of one FAS-RIS link.
///
/// Field names in serialized form are `M`, `N`, `W`, `K`, `P_dBm` and the
/// snake-case names of the remaining fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// RIS elements.
    #[serde(rename = "M")]
    pub m: usize,
    /// FAS ports.
    #[serde(rename = "N")]
    pub n: usize,
    /// Aperture length in wavelengths.
    #[serde(rename = "W", default = "default_w")]
    pub w: f64,
    /// Rician factor of the RIS-to-user link.
    #[serde(rename = "K", default = "default_k")]
    pub k: f64,
    #[serde(rename = "P_dBm")]
    pub p_dbm: f64,
    #[serde(default = "default_noise")]
    pub noise_dbm: f64,
    #[serde(default = "default_exponent")]
    pub pathloss_exponent: f64,
    /// Path gain at the 1 m reference distance, in dB.
    #[serde(default = "default_ref_db")]
    pub pathloss_ref_db: f64,
    #[serde(default = "default_pos_bs")]
    pub pos_bs: [f64; 3],
    #[serde(default = "default_pos_ris")]
    pub pos_ris: [f64; 3],
    #[serde(default = "default_pos_mu")]
    pub pos_mu: [f64; 3],
    #[serde(default = "default_mu_b_sq")]
    pub mu_b_sq: f64,
    #[serde(default = "default_lambda_th")]
    pub lambda_th: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_w() -> f64 {
    5.0
}
fn default_k() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    -104.0
}
fn default_exponent() -> f64 {
    2.2
}
fn default_ref_db() -> f64 {
    -30.0
}
fn default_pos_bs() -> [f64; 3] {
    [0.0, 0.0, 0.0]
}
fn default_pos_ris() -> [f64; 3] {
    [10.0, 10.0, 5.0]
}
fn default_pos_mu() -> [f64; 3] {
    [50.0, 0.0, 0.0]
}
fn default_mu_b_sq() -> f64 {
    0.97
}
fn default_lambda_th() -> f64 {
    0.5
}

/// Convert a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl SystemConfig {
    /// Configuration with every optional field at its default.
    pub fn new(m: usize, n: usize, p_dbm: f64) -> Self {
        Self {
            m,
            n,
            w: default_w(),
            k: default_k(),
            p_dbm,
            noise_dbm: default_noise(),
            pathloss_exponent: default_exponent(),
            pathloss_ref_db: default_ref_db(),
            pos_bs: default_pos_bs(),
            pos_ris: default_pos_ris(),
            pos_mu: default_pos_mu(),
            mu_b_sq: default_mu_b_sq(),
            lambda_th: default_lambda_th(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m < 1 {
            return bad(format!("M must be >= 1 (got {})", self.m));
        }
        if self.n < 2 {
            return bad(format!("N must be >= 2 (got {})", self.n));
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return bad(format!("W must be positive (got {})", self.w));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return bad(format!("K must be >= 0 (got {})", self.k));
        }
        if !(self.mu_b_sq > 0.0 && self.mu_b_sq < 1.0) {
            return bad(format!("mu_b_sq must lie in (0, 1) (got {})", self.mu_b_sq));
        }
        if !(self.lambda_th.is_finite() && self.lambda_th > 0.0) {
            return bad(format!("lambda_th must be positive (got {})", self.lambda_th));
        }
        for (name, v) in [
            ("P_dBm", self.p_dbm),
            ("noise_dbm", self.noise_dbm),
            ("pathloss_exponent", self.pathloss_exponent),
            ("pathloss_ref_db", self.pathloss_ref_db),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite (got {v})"));
            }
        }
        if self.power_w() <= 0.0 || self.noise_w() <= 0.0 {
            return bad("transmit and noise power must be strictly positive in watts".into());
        }
        self.pathloss()?;
        Ok(())
    }

    /// Transmit power `P` in watts.
    pub fn power_w(&self) -> f64 {
        dbm_to_watts(self.p_dbm)
    }

    /// Noise power `σ²` in watts.
    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    /// SNR threshold `(2^R − 1)σ²/P` for rate `r` in bits/s/Hz.
    pub fn gamma_th(&self, r: f64) -> f64 {
        (r * LN_2).exp_m1() * self.noise_w() / self.power_w()
    }

    pub fn pathloss(&self) -> Result<PathlossPair> {
        let gain = |from: [f64; 3], to: [f64; 3], what: &str| -> Result<f64> {
            let d = distance(from, to);
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!("{what} distance must be positive (got {d})")));
            }
            let g = 10f64.powf(self.pathloss_ref_db / 10.0) * d.powf(-self.pathloss_exponent);
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::Config(format!("{what} path gain {g} outside (0, 1]")));
            }
            Ok(g)
        };
        Ok(PathlossPair {
            beta: gain(self.pos_bs, self.pos_ris, "BS-RIS")?,
            alpha: gain(self.pos_ris, self.pos_mu, "RIS-MU")?,
        })
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Build a validated configuration from a JSON value (a key-value map).
pub fn build_config(raw: &serde_json::Value) -> Result<SystemConfig> {
    let cfg: SystemConfig =
        serde_json::from_value(raw.clone()).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Build a validated configuration from TOML text.
pub fn build_config_toml(text: &str) -> Result<SystemConfig> {
    let cfg: SystemConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Large-scale path gains of the two hops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossPair {
    /// BS to RIS.
    pub beta: f64,
    /// RIS to user.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrKind {
    ExactToeplitz,
    BlockDiagonal,
    Constant,
}

impl CorrKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrKind::ExactToeplitz => "exact-toeplitz",
            CorrKind::BlockDiagonal => "block-diagonal",
            CorrKind::Constant => "constant",
        }
    }
}

/// Port correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub entries: DMatrix<f64>,
    pub kind: CorrKind,
}

/// Jakes spatial correlation: entry `(i, j)` is `J₀(2π|i−j|W/(N−1))`.
pub fn jakes_correlation(n: usize, w: f64) -> Result<CorrelationMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("N must be >= 2 (got {n})")));
    }
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidArgument(format!("W must be positive (got {w})")));
    }
    let row: Vec<f64> = (0..n)
        .map(|d| bessel_j0(2.0 * PI * d as f64 * w / (n - 1) as f64))
        .collect::<Result<_>>()?;
    let entries = DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)]);
    Ok(CorrelationMatrix {
        entries,
        kind: CorrKind::ExactToeplitz,
    })
}

/// Ones on the diagonal and `mu_sq` elsewhere.
pub fn constant_correlation(n: usize, mu_sq: f64) -> Result<CorrelationMatrix> {
    if n < 1 {
        return Err(Error::InvalidArgument("N must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&mu_sq) {
        return Err(Error::InvalidArgument(format!("mu_sq must lie in [0, 1) (got {mu_sq})")));
    }
    let entries = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { mu_sq });
    Ok(CorrelationMatrix {
        entries,
        kind: CorrKind::Constant,
    })
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Factor `L` with `L Lᵀ ≈ Σ`, row-major.
    ///
    /// Cholesky is tried first, then up to three retries with `1e-10·I` added
    /// each time; if all fail the eigenvalues are clipped at `1e-12` and
    /// `V·diag(√λ)` is returned instead.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        if self.entries.ncols() != n {
            return Err(Error::InvalidArgument("correlation matrix must be square".into()));
        }
        let mut work = self.entries.clone();
        for attempt in 0..4 {
            if attempt > 0 {
                for i in 0..n {
                    work[(i, i)] += 1e-10;
                }
            }
            if let Some(ch) = work.clone().cholesky() {
                return Ok(ch.l());
            }
        }
        let eig = SymmetricEigen::try_new(self.entries.clone(), 1e-14, 10_000)
            .ok_or_else(|| Error::Numeric("eigendecomposition of correlation matrix failed".into()))?;
        let mut f = eig.eigenvectors;
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            let s = lam.max(1e-12).sqrt();
            f.column_mut(j).scale_mut(s);
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite correlation factor".into()));
        }
        Ok(f)
    }
}

/// Unit-modulus line-of-sight terms: `hbar` is `N×M` (port-major), `gbar` has `M` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LosGeometry {
    pub hbar: Vec<Complex64>,
    pub gbar: Vec<Complex64>,
    pub n: usize,
    pub m: usize,
}

impl LosGeometry {
    /// Draw element phase offsets, an arrival angle and the BS-RIS phases from `seed`.
    pub fn from_seed(n: usize, m: usize, w: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // trial streams count up from zero; keep geometry clear of them
        rng.set_stream(u64::MAX);
        let psi: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let gbar = (0..m)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect();
        let step = 2.0 * PI * w * phi.cos() / (n - 1).max(1) as f64;
        let mut hbar = Vec::with_capacity(n * m);
        for k in 0..n {
            for p in &psi {
                hbar.push(Complex64::from_polar(1.0, p + step * k as f64));
            }
        }
        Self { hbar, gbar, n, m }
    }

    /// Every LoS entry equal to one.
    pub fn aligned(n: usize, m: usize) -> Self {
        Self {
            hbar: vec![Complex64::new(1.0, 0.0); n * m],
            gbar: vec![Complex64::new(1.0, 0.0); m],
            n,
            m,
        }
    }

    pub fn hbar(&self, k: usize, i: usize) -> Complex64 {
        self.hbar[k * self.m + i]
    }
}

/// One realization of the per-port envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDraw {
    pub a: Vec<f64>,
    pub a_max: f64,
    pub scheme: Scheme,
}

impl ChannelDraw {
    fn from_envelopes(a: Vec<f64>, scheme: Scheme) -> Self {
        let a_max = a.iter().copied().fold(0.0, f64::max);
        Self { a, a_max, scheme }
    }
}

/// Reusable sampler holding the correlation factor and LoS geometry.
#[derive(Debug, Clone)]
pub struct PortSampler {
    n: usize,
    m: usize,
    sqrt_beta: f64,
    los_amp: f64,
    nlos_sd: f64,
    // lower triangle when Cholesky succeeded, otherwise dense
    factor: Vec<f64>,
    triangular: bool,
    geometry: LosGeometry,
}

/// Scratch buffers for [`PortSampler`]; one per worker thread.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    h: Vec<Complex64>,
    z: Vec<Complex64>,
    a: Vec<f64>,
}

impl PortSampler {
    /// Sampler for `cfg` with geometry drawn from `cfg.seed`.
    pub fn new(cfg: &SystemConfig, corr: &CorrelationMatrix) -> Result<Self> {
        cfg.validate()?;
        let geometry = LosGeometry::from_seed(cfg.n, cfg.m, cfg.w, cfg.seed);
        Self::from_parts(cfg.pathloss()?, cfg.k, corr, geometry)
    }

    pub fn from_parts(
        pathloss: PathlossPair,
        k: f64,
        corr: &CorrelationMatrix,
        geometry: LosGeometry,
    ) -> Result<Self> {
        let n = corr.n();
        if geometry.n != n {
            return Err(Error::InvalidArgument(format!(
                "geometry has {} ports, correlation matrix {n}",
                geometry.n
            )));
        }
        if !(pathloss.alpha >= 0.0 && pathloss.beta >= 0.0) || !(k >= 0.0) {
            return Err(Error::InvalidArgument("path gains and K must be non-negative".into()));
        }
        let f = corr.factor()?;
        let triangular = (0..n).all(|i| (i + 1..n).all(|j| f[(i, j)] == 0.0));
        let mut factor = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                factor.push(f[(i, j)]);
            }
        }
        // K = inf would make the NLoS share zero and the LoS share √α
        let (los_amp, nlos_sd) = if k.is_infinite() {
            (pathloss.alpha.sqrt(), 0.0)
        } else {
            ((pathloss.alpha * k / (k + 1.0)).sqrt(), (pathloss.alpha / (k + 1.0)).sqrt())
        };
        Ok(Self {
            n,
            m: geometry.m,
            sqrt_beta: pathloss.beta.sqrt(),
            los_amp,
            nlos_sd,
            factor,
            triangular,
            geometry,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn geometry(&self) -> &LosGeometry {
        &self.geometry
    }

    /// Fill `scratch.h` (port-major `N×M`) with one realization of the RIS-user channel.
    pub fn draw_cascade<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch) {
        let (n, m) = (self.n, self.m);
        scratch.h.clear();
        scratch.h.extend_from_slice(&self.geometry.hbar);
        for v in scratch.h.iter_mut() {
            *v *= self.los_amp;
        }
        scratch.z.resize(n, Complex64::default());
        let sd = self.nlos_sd * FRAC_1_SQRT_2;
        for i in 0..m {
            for z in scratch.z.iter_mut() {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *z = Complex64::new(sd * re, sd * im);
            }
            for k in 0..n {
                let row = &self.factor[k * n..(k + 1) * n];
                let len = if self.triangular { k + 1 } else { n };
                let mut acc = Complex64::default();
                for (l, z) in row[..len].iter().zip(&scratch.z[..len]) {
                    acc += z * *l;
                }
                scratch.h[k * m + i] += acc;
            }
        }
    }

    fn csi_based_envelopes(&self, scratch: &mut Scratch) {
        let m = self.m;
        scratch.a.clear();
        for k in 0..self.n {
            let s: f64 = scratch.h[k * m..(k + 1) * m].iter().map(|c| c.norm()).sum();
            scratch.a.push(self.sqrt_beta * s);
        }
    }

    fn csi_free_envelopes<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch) {
        let m = self.m;
        let weights: Vec<Complex64> = self
            .geometry
            .gbar
            .iter()
            .map(|g| Complex64::from_polar(self.sqrt_beta, rng.random_range(0.0..2.0 * PI)) * g.conj())
            .collect();
        scratch.a.clear();
        for k in 0..self.n {
            let s: Complex64 = scratch.h[k * m..(k + 1) * m]
                .iter()
                .zip(&weights)
                .map(|(h, w)| h * w)
                .sum();
            scratch.a.push(s.norm());
        }
    }

    /// Per-port envelopes for one realization, left in the scratch buffer.
    pub fn envelopes<'s, R: Rng + ?Sized>(
        &self,
        scheme: Scheme,
        rng: &mut R,
        scratch: &'s mut Scratch,
    ) -> &'s [f64] {
        self.draw_cascade(rng, scratch);
        match scheme {
            Scheme::CsiBased => self.csi_based_envelopes(scratch),
            Scheme::CsiFree => self.csi_free_envelopes(rng, scratch),
        }
        &scratch.a
    }

    /// Strongest port envelope of one realization.
    pub fn sample_amax<R: Rng + ?Sized>(&self, scheme: Scheme, rng: &mut R, scratch: &mut Scratch) -> f64 {
        self.envelopes(scheme, rng, scratch)
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn draw<R: Rng + ?Sized>(&self, scheme: Scheme, rng: &mut R) -> ChannelDraw {
        let mut scratch = Scratch::default();
        let a = self.envelopes(scheme, rng, &mut scratch).to_vec();
        ChannelDraw::from_envelopes(a, scheme)
    }

    /// Envelopes of both schemes computed from the same channel realization.
    pub fn draw_both<R: Rng + ?Sized>(&self, rng: &mut R) -> (ChannelDraw, ChannelDraw) {
        let mut scratch = Scratch::default();
        self.draw_cascade(rng, &mut scratch);
        self.csi_based_envelopes(&mut scratch);
        let based = scratch.a.clone();
        self.csi_free_envelopes(rng, &mut scratch);
        let free = scratch.a.clone();
        (
            ChannelDraw::from_envelopes(based, Scheme::CsiBased),
            ChannelDraw::from_envelopes(free, Scheme::CsiFree),
        )
    }
}

/// One CSI-based draw: `A_k = √β Σ_i |h_k^i|`.
pub fn sample_ports_csi_based<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    corr: &CorrelationMatrix,
    rng: &mut R,
) -> Result<ChannelDraw> {
    Ok(PortSampler::new(cfg, corr)?.draw(Scheme::CsiBased, rng))
}

/// One CSI-free draw with RIS phases redrawn uniformly.
pub fn sample_ports_csi_free<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    corr: &CorrelationMatrix,
    rng: &mut R,
) -> Result<ChannelDraw> {
    Ok(PortSampler::new(cfg, corr)?.draw(Scheme::CsiFree, rng))
}
