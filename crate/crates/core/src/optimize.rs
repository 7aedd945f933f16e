//! Rate selection maximizing throughput `R·(1 − P_out(R))` under the
//! independent-antenna outage models.
//!
//! CSI-based: gradient ascent on the exact objective (`gda`) and bisection on
//! the derivative of the surrogate `½BR·exp(−z²/2)` (`bsm`).
//! CSI-free: concave-segment bisection plus gradient ascent in `x = 2^R − 1`
//! (`pgda`) and the Lambert-W closed form (`closed-form`).
//! `exhaustive` grid search serves as the baseline for both.

use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::outage::{CsiBasedMoments, CsiFreeMoments};
use crate::specfun::{lambert_w0, norm_pdf, q_func};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub r_min: f64,
    pub r_max: f64,
}

impl RateBounds {
    pub fn new(r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min.is_finite() && r_max.is_finite() && r_min >= 0.0 && r_max > r_min) {
            return Err(Error::InvalidArgument(format!(
                "need finite 0 <= r_min < r_max (got {r_min}, {r_max})"
            )));
        }
        Ok(Self { r_min, r_max })
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.max(self.r_min).min(self.r_max)
    }
}

impl Default for RateBounds {
    fn default() -> Self {
        Self { r_min: 0.01, r_max: 15.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Gda,
    Bsm,
    Pgda,
    ClosedForm,
    Exhaustive,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Gda => "gda",
            Solver::Bsm => "bsm",
            Solver::Pgda => "pgda",
            Solver::ClosedForm => "closed-form",
            Solver::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gda" => Ok(Solver::Gda),
            "bsm" => Ok(Solver::Bsm),
            "pgda" => Ok(Solver::Pgda),
            "cf" | "closed-form" => Ok(Solver::ClosedForm),
            "es" | "exhaustive" => Ok(Solver::Exhaustive),
            other => Err(Error::InvalidArgument(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSolution {
    pub r_star: f64,
    pub t_star: f64,
    pub solver: Solver,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<(f64, f64)>>,
}

/// Hyperparameters of the gradient-ascent solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            step: 0.05,
            tol: 1e-6,
            max_iter: 10_000,
            record_trace: false,
        }
    }
}

pub const BISECTION_TOL: f64 = 1e-9;
pub const BISECTION_MAX_ITER: usize = 200;
pub const DEFAULT_GRID_POINTS: usize = 10_000;

/// CSI-based IAE throughput `T̄(R) = R·(1 − (1 − Q(z))^B)`, `z = (√γ − μ̄)/σ̄`,
/// and its surrogate. Unlike the IAE outage it neglects the Normal mass below
/// zero, `Φ(−μ̄/σ̄)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiBasedObjective {
    pub moments: CsiBasedMoments,
    pub b: usize,
    /// `σ²/P`.
    pub noise_over_power: f64,
}

impl CsiBasedObjective {
    pub fn new(cfg: &SystemConfig, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidArgument("B must be >= 1".into()));
        }
        Ok(Self {
            moments: CsiBasedMoments::from_config(cfg)?,
            b,
            noise_over_power: cfg.noise_w() / cfg.power_w(),
        })
    }

    fn sqrt_gamma(&self, r: f64) -> f64 {
        ((r * LN_2).exp_m1() * self.noise_over_power).sqrt()
    }

    /// `d√γ/dR = σ²2^R ln2 / (2√(σ²P(2^R − 1)))`, written in `σ²/P` units.
    fn dsqrt_gamma(&self, r: f64) -> f64 {
        self.noise_over_power * r.exp2() * LN_2 / (2.0 * self.sqrt_gamma(r))
    }

    fn z(&self, r: f64) -> f64 {
        (self.sqrt_gamma(r) - self.moments.mu_bar) / self.moments.sigma_bar_sq.sqrt()
    }

    /// `ln(1 − Q(z))`, accurate when `Q(z)` is tiny.
    fn ln_block_cdf(&self, r: f64) -> f64 {
        (-q_func(self.z(r))).ln_1p()
    }

    /// Objective `R·(1 − (1 − Q(z))^B)`.
    pub fn tbar(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        -r * (self.b as f64 * self.ln_block_cdf(r)).exp_m1()
    }

    /// `dT̄/dR`.
    pub fn gradient(&self, r: f64) -> f64 {
        let bf = self.b as f64;
        let ln_f = self.ln_block_cdf(r);
        let sd = self.moments.sigma_bar_sq.sqrt();
        let dfdr = norm_pdf(self.z(r)) / sd * self.dsqrt_gamma(r);
        -(bf * ln_f).exp_m1() - r * bf * ((bf - 1.0) * ln_f).exp() * dfdr
    }

    /// Surrogate `T̄ᵇ = ½BR·exp(−z²/2)`.
    pub fn tbar_b(&self, r: f64) -> f64 {
        let z = self.z(r);
        0.5 * self.b as f64 * r * (-0.5 * z * z).exp()
    }

    /// `dT̄ᵇ/dR = ½B·exp(−z²/2)·(1 − R·z·dz/dR)`.
    pub fn tbar_b_gradient(&self, r: f64) -> f64 {
        let z = self.z(r);
        0.5 * self.b as f64 * (-0.5 * z * z).exp() * self.tbar_b_sign_factor(r)
    }

    /// `1 − R·z·dz/dR`, which carries the sign of `dT̄ᵇ/dR` even where the
    /// exponential prefactor underflows.
    pub fn tbar_b_sign_factor(&self, r: f64) -> f64 {
        let dz = self.dsqrt_gamma(r) / self.moments.sigma_bar_sq.sqrt();
        1.0 - r * self.z(r) * dz
    }
}

/// Exact CSI-based throughput at rate `r`.
pub fn tbar(r: f64, moments: &CsiBasedMoments, b: usize, cfg: &SystemConfig) -> Result<f64> {
    let mut obj = CsiBasedObjective::new(cfg, b)?;
    obj.moments = *moments;
    Ok(obj.tbar(r))
}

/// CSI-free IAE throughput `Č(R) = R·(1 − (1 − e^{−Γx})^B)` with `x = 2^R − 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiFreeObjective {
    pub lambda_a: f64,
    pub b: usize,
    /// `Γ = λ_a σ²/P`.
    pub gamma_coef: f64,
}

impl CsiFreeObjective {
    pub fn new(lambda_a: f64, b: usize, cfg: &SystemConfig) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidArgument("B must be >= 1".into()));
        }
        if !(lambda_a.is_finite() && lambda_a > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda_a must be positive (got {lambda_a})")));
        }
        Ok(Self {
            lambda_a,
            b,
            gamma_coef: lambda_a * cfg.noise_w() / cfg.power_w(),
        })
    }

    pub fn from_config(cfg: &SystemConfig, b: usize) -> Result<Self> {
        Self::new(CsiFreeMoments::from_config(cfg)?.lambda_a, b, cfg)
    }

    /// `1 − (1 − e^{−Γx})^B`.
    fn success(&self, x: f64) -> f64 {
        -(self.b as f64 * (-(-self.gamma_coef * x).exp()).ln_1p()).exp_m1()
    }

    pub fn tcheck(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        r * self.success(r.exp2() - 1.0)
    }

    /// Objective in `x`: `log₂(1 + x)·(1 − (1 − e^{−Γx})^B)`.
    pub fn in_x(&self, x: f64) -> f64 {
        x.ln_1p() / LN_2 * self.success(x)
    }

    /// `∂Č/∂x`.
    pub fn dx(&self, x: f64) -> f64 {
        let e = (-self.gamma_coef * x).exp();
        let cdf = -(-self.gamma_coef * x).exp_m1();
        let bf = self.b as f64;
        self.success(x) / ((1.0 + x) * LN_2)
            - x.ln_1p() / LN_2 * bf * cdf.powi(self.b as i32 - 1) * self.gamma_coef * e
    }

    /// `∂²Č/∂x²`.
    pub fn dxx(&self, x: f64) -> f64 {
        let g = self.gamma_coef;
        let bf = self.b as f64;
        let e = (-g * x).exp();
        let cdf = -(-g * x).exp_m1();
        let s = self.success(x);
        // ds/dx and d²s/dx²
        let ds = -bf * cdf.powi(self.b as i32 - 1) * g * e;
        let dds = -bf * g * g * e * cdf.powi(self.b as i32 - 2) * ((bf - 1.0) * e - cdf);
        let l = x.ln_1p() / LN_2;
        let dl = 1.0 / ((1.0 + x) * LN_2);
        let ddl = -1.0 / ((1.0 + x) * (1.0 + x) * LN_2);
        ddl * s + 2.0 * dl * ds + l * dds
    }

    /// `x̌ = ln B / Γ`: end of the region where the objective is concave in `x`.
    pub fn x_check(&self) -> f64 {
        (self.b as f64).ln() / self.gamma_coef
    }

    /// Surrogate `Čᵃ = B·R·e^{−λ_a γ}`.
    pub fn tcheck_a(&self, r: f64) -> f64 {
        self.b as f64 * r * (-self.gamma_coef * (r.exp2() - 1.0)).exp()
    }

    /// `dČᵃ/dR = B·e^{−Γx}(1 − R·Γ·2^R·ln2)`.
    pub fn tcheck_a_gradient(&self, r: f64) -> f64 {
        let x = r.exp2() - 1.0;
        self.b as f64 * (-self.gamma_coef * x).exp() * (1.0 - r * self.gamma_coef * r.exp2() * LN_2)
    }
}

/// Exact CSI-free throughput at rate `r`.
pub fn tcheck(r: f64, lambda_a: f64, b: usize, cfg: &SystemConfig) -> Result<f64> {
    Ok(CsiFreeObjective::new(lambda_a, b, cfg)?.tcheck(r))
}

struct Ascent {
    x: f64,
    iterations: usize,
    converged: bool,
    trace: Option<Vec<(f64, f64)>>,
}

/// Projected gradient ascent with step halving whenever a step lowers `f`.
fn ascend(
    f: &dyn Fn(f64) -> f64,
    grad: &dyn Fn(f64) -> f64,
    start: f64,
    lo: f64,
    hi: f64,
    opts: &AscentOptions,
) -> Ascent {
    let mut x = start.clamp(lo, hi);
    let mut step = opts.step;
    let mut fx = f(x);
    let mut trace = opts.record_trace.then(Vec::new);
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        let mut g = grad(x);
        if !g.is_finite() {
            x = (lo + 1e-6).min(hi);
            fx = f(x);
            g = grad(x);
            if !g.is_finite() {
                break;
            }
        }
        if let Some(t) = trace.as_mut() {
            t.push((x, fx));
        }
        if g.abs() < opts.tol || (x >= hi && g > 0.0) || (x <= lo && g < 0.0) {
            converged = true;
            break;
        }
        it += 1;
        let mut next = (x + step * g).clamp(lo, hi);
        let mut fn_ = f(next);
        while fn_ < fx && step > 1e-300 {
            step *= 0.5;
            next = (x + step * g).clamp(lo, hi);
            fn_ = f(next);
        }
        if fn_ < fx {
            break;
        }
        x = next;
        fx = fn_;
    }
    Ascent {
        x,
        iterations: it,
        converged,
        trace,
    }
}

/// Bisection for a sign change of `g` on `[lo, hi]` (`g(lo) > 0 > g(hi)`).
fn bisect(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, usize) {
    let mut it = 0;
    while it < BISECTION_MAX_ITER && hi - lo > BISECTION_TOL {
        it += 1;
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), it)
}

/// Gradient ascent on the exact CSI-based objective, starting at `r_min`.
pub fn gda_csi_based(
    bounds: &RateBounds,
    obj: &CsiBasedObjective,
    opts: &AscentOptions,
) -> Result<ThroughputSolution> {
    check_step(opts)?;
    let a = ascend(
        &|r| obj.tbar(r),
        &|r| obj.gradient(r),
        bounds.r_min,
        bounds.r_min,
        bounds.r_max,
        opts,
    );
    let r = bounds.clamp(a.x);
    Ok(ThroughputSolution {
        r_star: r,
        t_star: obj.tbar(r),
        solver: Solver::Gda,
        iterations: a.iterations,
        converged: a.converged,
        trace: a.trace,
    })
}

fn check_step(opts: &AscentOptions) -> Result<()> {
    if !(opts.step.is_finite() && opts.step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive (got {})", opts.step)));
    }
    if !(opts.tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be >= 0 (got {})", opts.tol)));
    }
    Ok(())
}

/// Bisection on `dT̄ᵇ/dR`; `t_star` is the exact objective at the result.
pub fn bsm_csi_based(bounds: &RateBounds, obj: &CsiBasedObjective) -> Result<ThroughputSolution> {
    let g = |r: f64| obj.tbar_b_sign_factor(r);
    let (glo, ghi) = (g(bounds.r_min), g(bounds.r_max));
    let (r, iterations, converged) = if glo > 0.0 && ghi < 0.0 {
        let (r, it) = bisect(&g, bounds.r_min, bounds.r_max);
        (r, it, true)
    } else {
        let up = if glo <= 0.0 && ghi >= 0.0 {
            obj.tbar_b(bounds.r_max) >= obj.tbar_b(bounds.r_min)
        } else {
            ghi > 0.0
        };
        let better = if up { bounds.r_max } else { bounds.r_min };
        (better, 0, false)
    };
    let r = bounds.clamp(r);
    Ok(ThroughputSolution {
        r_star: r,
        t_star: obj.tbar(r),
        solver: Solver::Bsm,
        iterations,
        converged,
        trace: None,
    })
}

/// Concave-segment bisection followed by gradient ascent beyond `x̌`; the
/// better of the two candidates is returned.
pub fn pgda_csi_free(
    bounds: &RateBounds,
    obj: &CsiFreeObjective,
    opts: &AscentOptions,
) -> Result<ThroughputSolution> {
    check_step(opts)?;
    let x_lo = bounds.r_min.exp2() - 1.0;
    let x_hi = bounds.r_max.exp2() - 1.0;
    let x_check = obj.x_check().min(x_hi);
    let mut iterations = 0;
    let mut candidates: Vec<f64> = Vec::with_capacity(2);

    if obj.b > 1 && x_check > x_lo {
        let g = |x: f64| obj.dx(x);
        let x_dagger = if g(x_check) >= 0.0 {
            x_check
        } else if g(x_lo) <= 0.0 {
            x_lo
        } else {
            let (x, it) = bisect(&g, x_lo, x_check);
            iterations += it;
            x
        };
        candidates.push(x_dagger);
    }

    let mut converged = true;
    let start = x_check.max(x_lo);
    if start < x_hi || candidates.is_empty() {
        let a = ascend(&|x| obj.in_x(x), &|x| obj.dx(x), start, start, x_hi, opts);
        iterations += a.iterations;
        converged = a.converged;
        candidates.push(a.x);
    }

    let best = candidates
        .iter()
        .map(|&x| bounds.clamp(x.ln_1p() / LN_2))
        .fold(None, |acc: Option<f64>, r| match acc {
            Some(a) if obj.tcheck(a) >= obj.tcheck(r) => Some(a),
            _ => Some(r),
        })
        .expect("at least one candidate");
    Ok(ThroughputSolution {
        r_star: best,
        t_star: obj.tcheck(best),
        solver: Solver::Pgda,
        iterations,
        converged,
        trace: None,
    })
}

/// Lambert-W root of `dČᵃ/dR` and `log₂(1 + x̌)`, whichever has larger exact `Č`.
pub fn closed_form_csi_free(bounds: &RateBounds, obj: &CsiFreeObjective) -> Result<ThroughputSolution> {
    let r_w = lambert_w0(1.0 / obj.gamma_coef)? / LN_2;
    let r_bar = obj.x_check().ln_1p() / LN_2;
    let a = bounds.clamp(r_w);
    let b = bounds.clamp(r_bar);
    let r = if obj.tcheck(a) >= obj.tcheck(b) { a } else { b };
    Ok(ThroughputSolution {
        r_star: r,
        t_star: obj.tcheck(r),
        solver: Solver::ClosedForm,
        iterations: 0,
        converged: true,
        trace: None,
    })
}

/// Best point of a uniform grid of `grid_points` rates over the bounds.
pub fn exhaustive(
    bounds: &RateBounds,
    objective: impl Fn(f64) -> f64,
    grid_points: usize,
) -> Result<ThroughputSolution> {
    if grid_points < 2 {
        return Err(Error::InvalidArgument(format!("grid_points must be >= 2 (got {grid_points})")));
    }
    let h = (bounds.r_max - bounds.r_min) / (grid_points - 1) as f64;
    let (mut best_r, mut best_t) = (bounds.r_min, f64::NEG_INFINITY);
    for i in 0..grid_points {
        let r = if i + 1 == grid_points { bounds.r_max } else { bounds.r_min + i as f64 * h };
        let t = objective(r);
        if t > best_t {
            best_t = t;
            best_r = r;
        }
    }
    Ok(ThroughputSolution {
        r_star: best_r,
        t_star: best_t,
        solver: Solver::Exhaustive,
        iterations: grid_points,
        converged: true,
        trace: None,
    })
}

/// Rescale a solution found in effective-rate units to data-rate units when
/// `τ` of `Ω` slots go to channel estimation: both rate and throughput shrink
/// by `1 − τ/Ω`.
pub fn with_overhead(sol: &ThroughputSolution, overhead_slots: u64, total_slots: u64) -> Result<ThroughputSolution> {
    if total_slots == 0 || overhead_slots >= total_slots {
        return Err(Error::InvalidArgument(format!(
            "overhead slots {overhead_slots} must be below total slots {total_slots}"
        )));
    }
    let keep = 1.0 - overhead_slots as f64 / total_slots as f64;
    let mut out = sol.clone();
    out.r_star *= keep;
    out.t_star *= keep;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockapprox::approximate;
    use crate::channel::jakes_correlation;
    use crate::outage::{csi_based_iae, csi_free_iae, Model, OutageQuery};
    use crate::Scheme;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_b(cfg: &SystemConfig) -> usize {
        approximate(&jakes_correlation(cfg.n, cfg.w).unwrap(), cfg.lambda_th, cfg.mu_b_sq)
            .unwrap()
            .b
    }

    fn random_cfg(rng: &mut ChaCha8Rng) -> SystemConfig {
        let mut cfg = SystemConfig::new(rng.random_range(1..9), rng.random_range(20..120), rng.random_range(0.0..20.0));
        cfg.w = rng.random_range(1.0..6.0);
        cfg
    }

    #[test]
    fn tbar_identity_with_iae_outage() {
        let check = |cfg: SystemConfig, slack: &dyn Fn(f64, f64, usize) -> f64| {
            let q0 = OutageQuery::for_config(cfg.clone(), 0.0, Scheme::CsiBased, Model::Iae).unwrap();
            let b = q0.structure.b;
            let mom = CsiBasedMoments::from_config(&cfg).unwrap();
            assert_eq!(tbar(0.0, &mom, b, &cfg).unwrap(), 0.0);
            assert!(tbar(1e-6, &mom, b, &cfg).unwrap() >= 0.99e-6);
            let below_zero = crate::specfun::norm_cdf(-mom.mu_bar / mom.sigma_bar_sq.sqrt());
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..100 {
                let r = rng.random_range(0.0..8.0);
                let mut q = q0.clone();
                q.r = r;
                let p = csi_based_iae(&q).unwrap().p;
                let diff = (tbar(r, &mom, b, &cfg).unwrap() - r * (1.0 - p)).abs();
                assert!(diff <= slack(r, below_zero, b), "R={r} diff={diff}");
            }
        };
        // negligible mass below zero: exact identity
        let mut cfg = SystemConfig::new(4, 100, 10.0);
        cfg.k = 10.0;
        check(cfg, &|_, _, _| 1e-12);
        // otherwise the gap is bounded by the neglected mass
        check(SystemConfig::new(2, 100, 10.0), &|r, c, b| r * b as f64 * c + 1e-12);
    }

    #[test]
    fn tcheck_identity_with_iae_outage() {
        let cfg = SystemConfig::new(2, 100, 10.0);
        let q0 = OutageQuery::for_config(cfg.clone(), 0.0, Scheme::CsiFree, Model::Iae).unwrap();
        let lam = CsiFreeMoments::from_config(&cfg).unwrap().lambda_a;
        assert_eq!(tcheck(0.0, lam, q0.structure.b, &cfg).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let r = rng.random_range(0.0..8.0);
            let mut q = q0.clone();
            q.r = r;
            let p = csi_free_iae(&q).unwrap().p;
            assert!((tcheck(r, lam, q0.structure.b, &cfg).unwrap() - r * (1.0 - p)).abs() < 1e-12);
        }
        // B = 1 is a plain exponential CDF
        let obj = CsiFreeObjective::new(lam, 1, &cfg).unwrap();
        let r = 1.3;
        let g = cfg.gamma_th(r);
        assert!((obj.tcheck(r) - r * (-lam * g).exp()).abs() < 1e-14);
    }

    fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn csi_based_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SystemConfig::new(2, 100, 10.0);
        let obj = CsiBasedObjective::new(&cfg, default_b(&cfg)).unwrap();
        let mut checked = 0;
        for _ in 0..100 {
            let r = rng.random_range(0.05..2.8);
            let a = obj.gradient(r);
            let fd = central(|x| obj.tbar(x), r, 1e-6);
            if a.abs() > 1e-8 {
                assert!(((a - fd) / a).abs() < 1e-4, "R={r} analytic={a} fd={fd}");
                checked += 1;
            }
            let ab = obj.tbar_b_gradient(r);
            let fdb = central(|x| obj.tbar_b(x), r, 1e-6);
            if ab.abs() > 1e-8 {
                assert!(((ab - fdb) / ab).abs() < 1e-4, "R={r}");
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn csi_free_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let cfg = random_cfg(&mut rng);
            let obj = CsiFreeObjective::from_config(&cfg, rng.random_range(1..20)).unwrap();
            for _ in 0..20 {
                let x = rng.random_range(0.01..30.0);
                let a = obj.dx(x);
                let fd = central(|t| obj.in_x(t), x, 1e-6);
                if a.abs() > 1e-8 {
                    assert!(((a - fd) / a).abs() < 1e-4, "x={x} a={a} fd={fd} f={}", obj.in_x(x));
                }
                let a2 = obj.dxx(x);
                let fd2 = central(|t| obj.dx(t), x, 1e-6);
                if a2.abs() > 1e-6 {
                    assert!(((a2 - fd2) / a2).abs() < 1e-4, "x={x}");
                }
                let r = rng.random_range(0.05..8.0);
                let ga = obj.tcheck_a_gradient(r);
                let fda = central(|t| obj.tcheck_a(t), r, 1e-6);
                if ga.abs() > 1e-8 {
                    assert!(((ga - fda) / ga).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn derivative_at_origin_is_inverse_ln2() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let cfg = random_cfg(&mut rng);
            let obj = CsiFreeObjective::from_config(&cfg, rng.random_range(1..30)).unwrap();
            assert!((obj.dx(0.0) - 1.0 / LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn concave_below_x_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut checked = 0;
        while checked < 1000 {
            let cfg = random_cfg(&mut rng);
            let obj = CsiFreeObjective::from_config(&cfg, rng.random_range(2..30)).unwrap();
            for _ in 0..10 {
                let x = rng.random_range(0.0..obj.x_check());
                assert!(obj.dxx(x) <= 1e-12, "x={x} x_check={}", obj.x_check());
                checked += 1;
            }
        }
    }

    #[test]
    fn surrogate_quasiconcave_in_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let cfg = random_cfg(&mut rng);
            let obj = CsiBasedObjective::new(&cfg, rng.random_range(1..30)).unwrap();
            let x_max = 15f64.exp2() - 1.0;
            let mut sign_changes = 0;
            let mut prev: Option<bool> = None;
            for i in 1..=1000 {
                let x = x_max * i as f64 / 1000.0;
                let g = obj.tbar_b_gradient(x.ln_1p() / LN_2);
                if g == 0.0 {
                    continue;
                }
                let pos = g > 0.0;
                if prev.is_some_and(|p| p != pos) {
                    sign_changes += 1;
                }
                prev = Some(pos);
            }
            assert!(sign_changes <= 1);
        }
    }

    #[test]
    fn exhaustive_examples() {
        let b = RateBounds::new(0.0, 1.0).unwrap();
        let s = exhaustive(&b, |r| r, 11).unwrap();
        assert_eq!(s.r_star, 1.0);
        let peak = 0.3712;
        let s = exhaustive(&b, |r| -(r - peak) * (r - peak), 101).unwrap();
        assert!((s.r_star - peak).abs() <= 0.01);
        let scaled = exhaustive(&b, |r| 7.5 * -(r - peak) * (r - peak), 101).unwrap();
        assert_eq!(scaled.r_star, s.r_star);
        assert!(exhaustive(&b, |r| r, 1).is_err());
    }

    #[test]
    fn gda_plateau_does_not_move() {
        let cfg = SystemConfig::new(16, 100, -200.0);
        let obj = CsiBasedObjective::new(&cfg, default_b(&cfg)).unwrap();
        let bounds = RateBounds::default();
        let opts = AscentOptions { tol: 0.0, max_iter: 500, ..Default::default() };
        let s = gda_csi_based(&bounds, &obj, &opts).unwrap();
        assert!(!s.converged);
        assert!((s.r_star - bounds.r_min).abs() < 1e-12);
    }

    #[test]
    fn gda_nudges_off_zero() {
        let cfg = SystemConfig::new(2, 100, 10.0);
        let obj = CsiBasedObjective::new(&cfg, default_b(&cfg)).unwrap();
        let bounds = RateBounds::new(0.0, 15.0).unwrap();
        let s = gda_csi_based(&bounds, &obj, &AscentOptions::default()).unwrap();
        assert!(s.converged && s.r_star > 0.1);
        assert!(gda_csi_based(&bounds, &obj, &AscentOptions { step: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn bsm_monotone_case_picks_upper_bound() {
        let cfg = SystemConfig::new(2, 100, 10.0);
        let obj = CsiBasedObjective::new(&cfg, default_b(&cfg)).unwrap();
        let es = exhaustive(&RateBounds::default(), |r| obj.tbar_b(r), 10_000).unwrap();
        let bounds = RateBounds::new(0.01, es.r_star * 0.5).unwrap();
        assert!(obj.tbar_b_gradient(bounds.r_min) > 0.0 && obj.tbar_b_gradient(bounds.r_max) > 0.0);
        let s = bsm_csi_based(&bounds, &obj).unwrap();
        assert_eq!(s.r_star, bounds.r_max);
        // the surrogate underflows to zero at r_max, yet the root is interior
        let bounds = RateBounds::default();
        assert_eq!(obj.tbar_b(bounds.r_max), 0.0);
        let s = bsm_csi_based(&bounds, &obj).unwrap();
        assert!(s.converged && s.r_star > bounds.r_min && s.r_star < bounds.r_max);
    }

    #[test]
    fn pgda_single_block_uses_gradient_phase_only() {
        let cfg = SystemConfig::new(2, 100, 10.0);
        let obj = CsiFreeObjective::from_config(&cfg, 1).unwrap();
        assert_eq!(obj.x_check(), 0.0);
        let s = pgda_csi_free(&RateBounds::default(), &obj, &AscentOptions::default()).unwrap();
        let es = exhaustive(&RateBounds::default(), |r| obj.tcheck(r), 100_000).unwrap();
        assert!(s.t_star >= 0.999 * es.t_star);
    }

    #[test]
    fn lambert_closed_form_at_e() {
        let mut cfg = SystemConfig::new(2, 100, 10.0);
        // choose λ_a so that P/(λ_a σ²) = e
        let lam = cfg.power_w() / (cfg.noise_w() * std::f64::consts::E);
        cfg.p_dbm = 10.0;
        let obj = CsiFreeObjective::new(lam, 1, &cfg).unwrap();
        let r = lambert_w0(1.0 / obj.gamma_coef).unwrap() / LN_2;
        assert!((r - 1.0 / LN_2).abs() < 1e-12);
    }

    #[test]
    fn solver_dominance_and_clamping() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bounds = RateBounds::default();
        for _ in 0..50 {
            let cfg = random_cfg(&mut rng);
            let b = default_b(&cfg);
            let based = CsiBasedObjective::new(&cfg, b).unwrap();
            let es = exhaustive(&bounds, |r| based.tbar(r), 1_000_000).unwrap();
            let gda = gda_csi_based(&bounds, &based, &AscentOptions::default()).unwrap();
            let bsm = bsm_csi_based(&bounds, &based).unwrap();
            assert!(es.t_star >= gda.t_star - 1e-9, "es {} gda {}", es.t_star, gda.t_star);
            assert!(gda.t_star >= bsm.t_star - 1e-9, "gda {} bsm {}", gda.t_star, bsm.t_star);

            let free = CsiFreeObjective::from_config(&cfg, b).unwrap();
            let es = exhaustive(&bounds, |r| free.tcheck(r), 1_000_000).unwrap();
            let pgda = pgda_csi_free(&bounds, &free, &AscentOptions::default()).unwrap();
            let cf = closed_form_csi_free(&bounds, &free).unwrap();
            assert!(es.t_star >= pgda.t_star - 1e-9, "es {} pgda {}", es.t_star, pgda.t_star);
            assert!(pgda.t_star >= cf.t_star - 1e-9, "pgda {} cf {}", pgda.t_star, cf.t_star);
            for s in [&gda, &bsm, &pgda, &cf] {
                assert!((bounds.r_min..=bounds.r_max).contains(&s.r_star));
            }
        }
    }

    #[test]
    fn overhead_rescaling() {
        let s = ThroughputSolution {
            r_star: 2.0,
            t_star: 1.5,
            solver: Solver::Exhaustive,
            iterations: 1,
            converged: true,
            trace: None,
        };
        let o = with_overhead(&s, 200, 1000).unwrap();
        assert!((o.r_star - 1.6).abs() < 1e-15 && (o.t_star - 1.2).abs() < 1e-15);
        assert!(with_overhead(&s, 1000, 1000).is_err());
    }

    #[test]
    fn solver_names_roundtrip() {
        for s in [Solver::Gda, Solver::Bsm, Solver::Pgda, Solver::ClosedForm, Solver::Exhaustive] {
            assert_eq!(s.as_str().parse::<Solver>().unwrap(), s);
        }
        assert_eq!("cf".parse::<Solver>().unwrap(), Solver::ClosedForm);
        assert_eq!("es".parse::<Solver>().unwrap(), Solver::Exhaustive);
        assert!("nope".parse::<Solver>().is_err());
    }
}
