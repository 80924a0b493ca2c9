//! Shared model vocabulary: spread laws, derived constants, the dimensionless
//! parameter plane, run configuration, ensemble state, and tick series.

use crate::error::{Error, Result};
use crate::special::{gamma4_cdf, gamma4_pdf, gamma4_quantile, integrate_panels};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

/// Quote-interval sampling mode for the mean-field tick process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    /// Memoryless intervals with mean tau*.
    Plain,
    /// Short-interval-suppressed law with survival (1 - (1 - e^{-3 tau / 2 tau*})^2),
    /// same mean tau*. Realized as the max of two exponentials of mean 2 tau*/3.
    Improved,
}

/// Distribution the frozen per-trader spreads are drawn from.
///
/// `Gamma` is the order-4 law rho(L) = L^3 e^{-L/scale} / (6 scale^4) whose
/// mean is 4*scale; `lo`/`hi` optionally restrict it to a window (renormalized).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpreadLaw {
    PointMass {
        scale: f64,
    },
    Gamma {
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<f64>,
    },
}

impl SpreadLaw {
    pub fn point(scale: f64) -> Self {
        SpreadLaw::PointMass { scale }
    }

    pub fn gamma(scale: f64) -> Self {
        SpreadLaw::Gamma { scale, lo: None, hi: None }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            SpreadLaw::PointMass { scale } => scale,
            SpreadLaw::Gamma { scale, .. } => scale,
        }
    }

    /// Truncation window in units of `scale`, when one is active.
    fn window(&self) -> Option<(f64, f64)> {
        match *self {
            SpreadLaw::PointMass { .. } => None,
            SpreadLaw::Gamma { scale, lo, hi } => {
                if lo.is_none() && hi.is_none() {
                    None
                } else {
                    Some((
                        lo.unwrap_or(0.0).max(0.0) / scale,
                        hi.map(|h| h / scale).unwrap_or(f64::INFINITY),
                    ))
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale() > 0.0) || !self.scale().is_finite() {
            return Err(Error::InvalidConfig(format!(
                "spread scale must be positive and finite, got {}",
                self.scale()
            )));
        }
        if let Some((a, b)) = self.window() {
            if b <= a {
                return Err(Error::InvalidConfig(format!(
                    "empty spread window [{a}, {b}] (in units of scale)"
                )));
            }
            let mass = gamma4_cdf(b.min(1e6)) - gamma4_cdf(a);
            if mass < 1e-3 {
                return Err(Error::InvalidConfig(format!(
                    "spread window [{a}, {b}] holds {mass:.2e} probability; too thin to sample"
                )));
            }
        }
        Ok(())
    }

    /// Probability density at spread `l`.
    pub fn density(&self, l: f64) -> f64 {
        match *self {
            SpreadLaw::PointMass { .. } => {
                panic!("point-mass law has no density; branch on the variant")
            }
            SpreadLaw::Gamma { scale, .. } => {
                let u = l / scale;
                match self.window() {
                    None => gamma4_pdf(u) / scale,
                    Some((a, b)) => {
                        if u < a || u > b {
                            0.0
                        } else {
                            let z = gamma4_cdf(b.min(1e6)) - gamma4_cdf(a);
                            gamma4_pdf(u) / (scale * z)
                        }
                    }
                }
            }
        }
    }

    pub fn cdf(&self, l: f64) -> f64 {
        match *self {
            SpreadLaw::PointMass { scale } => {
                if l >= scale {
                    1.0
                } else {
                    0.0
                }
            }
            SpreadLaw::Gamma { scale, .. } => {
                let u = l / scale;
                match self.window() {
                    None => gamma4_cdf(u),
                    Some((a, b)) => {
                        let z = gamma4_cdf(b.min(1e6)) - gamma4_cdf(a);
                        ((gamma4_cdf(u.clamp(a, b)) - gamma4_cdf(a)) / z).clamp(0.0, 1.0)
                    }
                }
            }
        }
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        match *self {
            SpreadLaw::PointMass { scale } => Ok(scale),
            SpreadLaw::Gamma { scale, .. } => match self.window() {
                None => Ok(scale * gamma4_quantile(q)?),
                Some((a, b)) => {
                    let fa = gamma4_cdf(a);
                    let z = gamma4_cdf(b.min(1e6)) - fa;
                    Ok(scale * gamma4_quantile((fa + q * z).min(1.0 - 1e-16))?)
                }
            },
        }
    }

    /// Upper edge of the support (used for placement and grid extents).
    pub fn support_hi(&self) -> f64 {
        match self.window() {
            Some((_, b)) if b.is_finite() => b * self.scale(),
            // beyond ~60 scales the order-4 tail carries < 1e-20 mass
            _ => match self {
                SpreadLaw::PointMass { scale } => *scale,
                SpreadLaw::Gamma { scale, .. } => 60.0 * scale,
            },
        }
    }

    pub fn mean_spread(&self) -> f64 {
        match *self {
            SpreadLaw::PointMass { scale } => scale,
            SpreadLaw::Gamma { scale, .. } => match self.window() {
                None => 4.0 * scale,
                Some((a, b)) => {
                    let z = gamma4_cdf(b.min(1e6)) - gamma4_cdf(a);
                    scale * crate::special::gamma4_partial_mean(a, b) / z
                }
            },
        }
    }

    /// Harmonic spread scale: 1 / l_rho^2 = < 1/L^2 >.
    ///
    /// Point mass: 1/scale^2. Full order-4 law: 1/(6 scale^2). Windowed laws
    /// fall back to quadrature.
    pub fn inv_sq_mean(&self) -> f64 {
        match *self {
            SpreadLaw::PointMass { scale } => 1.0 / (scale * scale),
            SpreadLaw::Gamma { scale, .. } => match self.window() {
                None => 1.0 / (6.0 * scale * scale),
                Some((a, b)) => {
                    let b = b.min(60.0);
                    let z = gamma4_cdf(b) - gamma4_cdf(a);
                    let m =
                        integrate_panels(|u| gamma4_pdf(u) / (u * u), a.max(1e-12), b, 48, 1e-13);
                    m / (z * scale * scale)
                }
            },
        }
    }

    /// Second moment of the center-of-mass jump law (see the oracle module):
    /// Var[(A - B)/2] where A, B are spreads reweighted by 1/L^2.
    pub fn jump_second_moment(&self) -> f64 {
        match *self {
            SpreadLaw::PointMass { .. } => 0.0,
            SpreadLaw::Gamma { scale, .. } => match self.window() {
                // 1/L^2 reweighting turns the order-4 law into order-2;
                // its variance is 2 scale^2, halved by the /2 in the jump.
                None => scale * scale,
                Some((a, b)) => {
                    let b = b.min(60.0);
                    let a = a.max(1e-12);
                    let m0 = integrate_panels(|u| gamma4_pdf(u) / (u * u), a, b, 48, 1e-13);
                    let m1 = integrate_panels(|u| gamma4_pdf(u) / u, a, b, 48, 1e-13);
                    let m2 = gamma4_cdf(b) - gamma4_cdf(a);
                    let mean = m1 / m0;
                    let var = m2 / m0 - mean * mean;
                    0.5 * var * scale * scale
                }
            },
        }
    }

    /// Draw one spread.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SpreadLaw::PointMass { scale } => scale,
            SpreadLaw::Gamma { scale, .. } => {
                let window = self.window();
                for _ in 0..10_000_000u64 {
                    let u: f64 = {
                        let e: f64 = rng.sample(Exp1);
                        let e2: f64 = rng.sample(Exp1);
                        let e3: f64 = rng.sample(Exp1);
                        let e4: f64 = rng.sample(Exp1);
                        e + e2 + e3 + e4
                    };
                    match window {
                        None => return scale * u,
                        Some((a, b)) if u >= a && u <= b => return scale * u,
                        _ => continue,
                    }
                }
                panic!("spread window too thin to sample; validate() should have caught this")
            }
        }
    }
}

/// Draw the frozen spread vector for an ensemble of `n` traders.
pub fn sample_spreads<R: Rng + ?Sized>(law: &SpreadLaw, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| law.sample(rng)).collect()
}

/// Constants fixed by (law, n, sigma).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    /// Harmonic spread scale squared: l_rho^2 = 1 / < 1/L^2 >.
    pub l_rho_sq: f64,
    /// Mean interval between transactions: tau* = l_rho^2 / (2 n sigma^2).
    pub tau_star: f64,
    /// Second moment of the center-of-mass jump law.
    pub alpha2: f64,
    /// Long-time price diffusion coefficient D(n).
    pub diffusion: f64,
}

impl Derived {
    pub fn new(law: &SpreadLaw, n: usize, sigma: f64) -> Self {
        let l_rho_sq = 1.0 / law.inv_sq_mean();
        let alpha2 = law.jump_second_moment();
        let s2 = sigma * sigma;
        let nf = n as f64;
        Derived {
            l_rho_sq,
            tau_star: l_rho_sq / (2.0 * nf * s2),
            alpha2,
            diffusion: s2 / (2.0 * nf) * (1.0 + 2.0 * alpha2 / l_rho_sq),
        }
    }

    pub fn l_rho(&self) -> f64 {
        self.l_rho_sq.sqrt()
    }
}

/// Trend parameters on the dimensionless plane.
///
/// c_tilde compares the feedback strength to the noise floor; dp_star_tilde
/// compares the saturation threshold to the typical per-interval trend move.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimensionless {
    pub c_tilde: f64,
    pub dp_star_tilde: f64,
}

impl Dimensionless {
    /// Map back to bare (c, dp_star) for a given ensemble.
    pub fn to_bare(&self, derived: &Derived, n: usize, sigma: f64) -> (f64, f64) {
        let c = self.c_tilde * sigma * sigma * (2.0 * n as f64).sqrt() / derived.l_rho();
        let dp_star = self.dp_star_tilde * c * derived.tau_star;
        (c, dp_star)
    }

    pub fn from_bare(c: f64, dp_star: f64, derived: &Derived, n: usize, sigma: f64) -> Self {
        let c_tilde = c * derived.l_rho() / (sigma * sigma * (2.0 * n as f64).sqrt());
        let dp_star_tilde = if c == 0.0 { 0.0 } else { dp_star / (c * derived.tau_star) };
        Dimensionless { c_tilde, dp_star_tilde }
    }
}

fn default_replicas() -> usize {
    1
}

/// Full run configuration. `dt`, `warmup`, and `snapshot_interval` may be left
/// unset to take the scale-aware defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub law: SpreadLaw,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub dp_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    /// Transactions to record per replica.
    pub ticks: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Abort threshold: steps without any transaction. 0 = auto.
    #[serde(default)]
    pub max_steps_per_tick: u64,
}

fn one() -> f64 {
    1.0
}

impl SimConfig {
    pub fn new(n: usize, law: SpreadLaw, ticks: u64) -> Self {
        SimConfig {
            n,
            law,
            sigma: 1.0,
            c: 0.0,
            dp_star: 0.0,
            dt: None,
            warmup: None,
            ticks,
            snapshot_interval: None,
            seed: 0,
            replicas: 1,
            max_steps_per_tick: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replicas(mut self, replicas: usize) -> Self {
        self.replicas = replicas;
        self
    }

    /// Set (c, dp_star) from coordinates on the dimensionless plane.
    pub fn with_trend(mut self, c_tilde: f64, dp_star_tilde: f64) -> Self {
        let derived = self.derived();
        let (c, dp_star) =
            Dimensionless { c_tilde, dp_star_tilde }.to_bare(&derived, self.n, self.sigma);
        self.c = c;
        self.dp_star = dp_star;
        self
    }

    pub fn derived(&self) -> Derived {
        Derived::new(&self.law, self.n, self.sigma)
    }

    pub fn dimensionless(&self) -> Dimensionless {
        Dimensionless::from_bare(self.c, self.dp_star, &self.derived(), self.n, self.sigma)
    }

    /// Integration step. Default resolves the fastest microscopic scale:
    /// 0.01 scale^2 / (sigma^2 n).
    pub fn step_dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| {
            let l = self.law.scale();
            0.01 * l * l / (self.sigma * self.sigma * self.n as f64)
        })
    }

    /// Warm-up duration before the tick clock starts: 10 scale^2 / sigma^2.
    pub fn warmup_time(&self) -> f64 {
        self.warmup.unwrap_or_else(|| {
            let l = self.law.scale();
            10.0 * l * l / (self.sigma * self.sigma)
        })
    }

    /// Book snapshot cadence, default tau*/2.
    pub fn snapshot_dt(&self) -> f64 {
        self.snapshot_interval.unwrap_or_else(|| 0.5 * self.derived().tau_star)
    }

    pub fn starvation_budget(&self) -> u64 {
        if self.max_steps_per_tick > 0 {
            return self.max_steps_per_tick;
        }
        let per_tick = self.derived().tau_star / self.step_dt();
        (20_000.0 * per_tick.max(1.0)).max(1e6) as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("need n >= 2 traders, got {}", self.n)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.c != 0.0 && !(self.dp_star > 0.0) {
            return Err(Error::InvalidConfig(
                "trend feedback (c != 0) requires dp_star > 0".into(),
            ));
        }
        if self.c < 0.0 {
            return Err(Error::InvalidConfig(format!("c must be >= 0, got {}", self.c)));
        }
        for (name, v) in [("dt", self.dt), ("warmup", self.warmup)] {
            if let Some(v) = v {
                let lo = if name == "dt" { f64::MIN_POSITIVE } else { 0.0 };
                if !(v >= lo) || !v.is_finite() {
                    return Err(Error::InvalidConfig(format!("{name} = {v} out of range")));
                }
            }
        }
        if let Some(s) = self.snapshot_interval {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig(format!("snapshot_interval = {s} must be > 0")));
            }
        }
        if self.ticks == 0 {
            return Err(Error::InvalidConfig("ticks must be >= 1".into()));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("replicas must be >= 1".into()));
        }
        Ok(())
    }
}

/// Instantaneous ensemble state: one mid-quote and one frozen spread per
/// trader, plus the running transaction clock.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    pub z: Vec<f64>,
    pub spread: Vec<f64>,
    /// Running center of mass of `z` (kept incrementally, re-anchored
    /// periodically by the driver).
    pub z_cm: f64,
    /// Last transacted price.
    pub p: f64,
    /// Most recent price increment p_new - p_old.
    pub dp: f64,
    pub t: f64,
    pub tick: u64,
}

impl EnsembleState {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn bid(&self, i: usize) -> f64 {
        self.z[i] - 0.5 * self.spread[i]
    }

    pub fn ask(&self, i: usize) -> f64 {
        self.z[i] + 0.5 * self.spread[i]
    }

    pub fn mean_z(&self) -> f64 {
        self.z.iter().sum::<f64>() / self.z.len() as f64
    }

    pub fn reanchor_cm(&mut self) {
        self.z_cm = self.mean_z();
    }
}

/// Columnar transaction record. `buyer`/`seller` stay empty for processes
/// without counterparties (the mean-field tick process).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TickSeries {
    pub tick: Vec<u64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buyer: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seller: Vec<u32>,
}

impl TickSeries {
    pub fn with_capacity(cap: usize) -> Self {
        TickSeries {
            tick: Vec::with_capacity(cap),
            t: Vec::with_capacity(cap),
            p: Vec::with_capacity(cap),
            dp: Vec::with_capacity(cap),
            buyer: Vec::new(),
            seller: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, tick: u64, t: f64, p: f64, dp: f64) {
        self.tick.push(tick);
        self.t.push(t);
        self.p.push(p);
        self.dp.push(dp);
    }

    pub fn push_trade(&mut self, tick: u64, t: f64, p: f64, dp: f64, buyer: u32, seller: u32) {
        self.push(tick, t, p, dp);
        self.buyer.push(buyer);
        self.seller.push(seller);
    }

    /// Intervals between consecutive transactions, the first measured from
    /// the clock origin. Meaningful only for a single contiguous replica.
    pub fn wait_times(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.t
            .iter()
            .map(|&t| {
                let tau = t - prev;
                prev = t;
                tau
            })
            .collect()
    }

    pub fn append(&mut self, mut other: TickSeries) {
        self.tick.append(&mut other.tick);
        self.t.append(&mut other.t);
        self.p.append(&mut other.p);
        self.dp.append(&mut other.dp);
        self.buyer.append(&mut other.buyer);
        self.seller.append(&mut other.seller);
    }
}
