//! Tick-time simulator of the reduced price dynamics.
//!
//! One tick advances the clock by a random interval and moves the price by
//! four terms: a trend response to the previous increment, a zigzag
//! difference of carried Gaussians (the requote bounce), a diffusive
//! contribution of the idle quotes, and a requote-asymmetry jump. Runs feed
//! the same collectors as the event-driven engine so every estimator works
//! on both.

use crate::collect::{Collector, TickEvent};
use crate::error::{Error, Result};
use crate::model::{IntervalMode, SimConfig, SpreadLaw};
use crate::rng::stream;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Trend-coupling flavor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Saturating response to the last increment.
    Hyperbolic,
    /// Saturating response to an exponential moving average of increments;
    /// `tau_ema = 0` reduces exactly to `Hyperbolic`.
    Ema { tau_ema: f64 },
    /// Unsaturated response; the update rewrites as a random-friction
    /// recursion.
    Linear,
}

#[derive(Clone, Debug)]
pub struct LangevinParams {
    pub c: f64,
    pub dp_star: f64,
    pub sigma: f64,
    pub n: usize,
    pub law: SpreadLaw,
    pub tau_star: f64,
    pub l_rho_sq: f64,
    pub interval_mode: IntervalMode,
    pub variant: Variant,
}

impl LangevinParams {
    pub fn from_config(cfg: &SimConfig, variant: Variant, mode: IntervalMode) -> Result<Self> {
        cfg.validate()?;
        if let Variant::Ema { tau_ema } = variant {
            if !(tau_ema >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "ema decay time must be >= 0, got {tau_ema}"
                )));
            }
        }
        let der = cfg.derived();
        Ok(LangevinParams {
            c: cfg.c,
            dp_star: cfg.dp_star,
            sigma: cfg.sigma,
            n: cfg.n,
            law: cfg.law.clone(),
            tau_star: der.tau_star,
            l_rho_sq: der.l_rho_sq,
            interval_mode: mode,
            variant,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LangevinState {
    pub dp: f64,
    /// Carried Gaussian from the previous tick's requote bounce.
    pub xi_prev: f64,
    pub ema: f64,
    pub p: f64,
    pub t: f64,
    pub tick: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseDraw {
    pub tau: f64,
    pub xi: f64,
    pub mu: f64,
    pub nu: f64,
}

impl NoiseDraw {
    pub fn sample<R: Rng + ?Sized>(params: &LangevinParams, rng: &mut R) -> NoiseDraw {
        NoiseDraw {
            tau: sample_tau(params.tau_star, params.interval_mode, rng),
            xi: rng.sample(StandardNormal),
            mu: rng.sample(StandardNormal),
            nu: sample_nu(&params.law, rng),
        }
    }
}

/// Random transaction interval with mean `tau_star`.
///
/// `Improved` takes the larger of two exponentials with mean 2τ*/3, which
/// keeps the mean at τ* while suppressing short intervals and steepening the
/// tail decay to 3/(2τ*).
pub fn sample_tau<R: Rng + ?Sized>(tau_star: f64, mode: IntervalMode, rng: &mut R) -> f64 {
    match mode {
        IntervalMode::Plain => tau_star * rng.sample::<f64, _>(Exp1),
        IntervalMode::Improved => {
            let scale = 2.0 * tau_star / 3.0;
            let a: f64 = rng.sample(Exp1);
            let b: f64 = rng.sample(Exp1);
            scale * a.max(b)
        }
    }
}

/// Spread draw reweighted by 1/L² (narrow quotes transact more often). For
/// the order-4 gamma law this drops the order to 2.
fn sample_reweighted_spread<R: Rng + ?Sized>(law: &SpreadLaw, rng: &mut R) -> f64 {
    match law {
        SpreadLaw::PointMass { scale } => *scale,
        SpreadLaw::Gamma { scale, lo, hi } => {
            let lo = lo.unwrap_or(0.0);
            let hi = hi.unwrap_or(f64::INFINITY);
            for _ in 0..10_000_000u64 {
                let a: f64 = rng.sample(Exp1);
                let b: f64 = rng.sample(Exp1);
                let l = scale * (a + b);
                if l >= lo && l <= hi {
                    return l;
                }
            }
            panic!("window ({lo}, {hi}) rejected 1e7 transaction-weighted draws")
        }
    }
}

/// Requote-asymmetry jump: half the difference of the two settling parties'
/// spreads, each drawn from the transaction-weighted law. Equal spreads give
/// exactly zero, so the point-mass law never jumps.
pub fn sample_nu<R: Rng + ?Sized>(law: &SpreadLaw, rng: &mut R) -> f64 {
    let a = sample_reweighted_spread(law, rng);
    let b = sample_reweighted_spread(law, rng);
    0.5 * (a - b)
}

fn trend_arg(params: &LangevinParams, state: &LangevinState) -> f64 {
    match params.variant {
        Variant::Hyperbolic | Variant::Linear => state.dp,
        Variant::Ema { .. } => state.ema,
    }
}

/// Random frictional coefficient of the linear variant's recursion
/// Δ²p[T] = −γ[T]·Δp[T] + noise.
pub fn linear_friction(params: &LangevinParams, tau: f64) -> f64 {
    1.0 - params.c * tau / params.dp_star
}

/// One tick: returns the new increment and advances the state.
pub fn tick(params: &LangevinParams, state: &mut LangevinState, draw: &NoiseDraw) -> f64 {
    let trend = if params.c == 0.0 {
        0.0
    } else {
        let x = trend_arg(params, state);
        let response = match params.variant {
            Variant::Linear => x / params.dp_star,
            _ => (x / params.dp_star).tanh(),
        };
        params.c * draw.tau * response
    };
    let zigzag = (params.l_rho_sq / (4.0 * params.n as f64)).sqrt() * (draw.xi - state.xi_prev);
    let idle = (params.sigma * params.sigma * draw.tau / params.n as f64).sqrt() * draw.mu;
    let dp = trend + zigzag + idle + draw.nu / params.n as f64;
    state.xi_prev = draw.xi;
    state.dp = dp;
    if let Variant::Ema { tau_ema } = params.variant {
        let decay = (-1.0 / tau_ema).exp(); // tau_ema = 0 -> decay 0, z = 1
        let z = 1.0 / (1.0 - decay);
        state.ema = dp / z + decay * state.ema;
    }
    state.p += dp;
    state.t += draw.tau;
    state.tick += 1;
    dp
}

/// Run one replica for `ticks` recorded ticks. The carried Gaussian starts
/// fresh and the first tick is burned so statistics begin stationary.
pub fn run_replica<C: Collector>(
    params: &LangevinParams,
    ticks: u64,
    seed: u64,
    replica: u64,
    collector: &mut C,
) -> Result<()> {
    let mut rng = stream(seed, "meanfield", replica);
    let mut state = LangevinState {
        xi_prev: rng.sample(StandardNormal),
        ..LangevinState::default()
    };
    let burn = NoiseDraw::sample(params, &mut rng);
    tick(params, &mut state, &burn);
    state.t = 0.0;
    state.tick = 0;
    for _ in 0..ticks {
        let draw = NoiseDraw::sample(params, &mut rng);
        tick(params, &mut state, &draw);
        collector.on_tick(&TickEvent {
            tick: state.tick,
            t: state.t,
            p: state.p,
            dp: state.dp,
            parties: None,
        });
    }
    Ok(())
}

/// Replica-parallel driver; merge order is replica order regardless of
/// scheduling.
pub fn run_ensemble<C, F>(
    cfg: &SimConfig,
    variant: Variant,
    mode: IntervalMode,
    make: F,
) -> Result<C>
where
    C: Collector,
    F: Fn() -> C + Sync,
{
    let params = LangevinParams::from_config(cfg, variant, mode)?;
    let results: Vec<Result<C>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut c = make();
            run_replica(&params, cfg.ticks, cfg.seed, r, &mut c)?;
            Ok(c)
        })
        .collect();
    let mut merged: Option<C> = None;
    for res in results {
        let c = res?;
        match merged.as_mut() {
            None => merged = Some(c),
            Some(m) => m.merge(c)?,
        }
    }
    Ok(merged.expect("replicas >= 1 validated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collect::SeriesCollector;
    use crate::estimators::SignStats;
    use crate::oracle;

    fn gamma_params(n: usize) -> LangevinParams {
        let cfg = SimConfig::new(n, SpreadLaw::gamma(1.0), 100);
        LangevinParams::from_config(&cfg, Variant::Hyperbolic, IntervalMode::Plain).unwrap()
    }

    #[test]
    fn frozen_tick_value() {
        let params = gamma_params(100);
        let mut state = LangevinState::default();
        let draw = NoiseDraw { tau: 0.01, xi: 1.0, mu: 0.0, nu: 0.0 };
        let dp = tick(&params, &mut state, &draw);
        assert!((dp - 0.1224744871391589).abs() < 1e-15);
        assert_eq!(state.xi_prev, 1.0);
        // repeated carried Gaussian cancels the bounce term entirely
        let draw2 = NoiseDraw { tau: 0.01, xi: 1.0, mu: 0.0, nu: 0.0 };
        let dp2 = tick(&params, &mut state, &draw2);
        assert_eq!(dp2, 0.0);
    }

    #[test]
    fn interval_sampler_moments() {
        let mut rng = stream(5, "tau-test", 0);
        let tau_star = 0.7;
        for mode in [IntervalMode::Plain, IntervalMode::Improved] {
            let n = 1_000_000;
            let mut sum = 0.0;
            let mut beyond = 0u64;
            let mut tiny = 0u64;
            for _ in 0..n {
                let t = sample_tau(tau_star, mode, &mut rng);
                sum += t;
                if t > tau_star {
                    beyond += 1;
                }
                if t < 0.05 * tau_star {
                    tiny += 1;
                }
            }
            let mean = sum / n as f64;
            assert!((mean / tau_star - 1.0).abs() < 0.003, "{mode:?} mean {mean}");
            let ccdf = beyond as f64 / n as f64;
            let want = oracle::interval_ccdf(tau_star, tau_star, mode);
            assert!((ccdf - want).abs() < 0.005, "{mode:?} ccdf {ccdf} want {want}");
            let p_tiny = tiny as f64 / n as f64;
            match mode {
                // exponential: P(tau < 0.05 tau*) ~ 0.0488
                IntervalMode::Plain => assert!(p_tiny > 0.04),
                // vanishing density at zero suppresses short intervals ~20x
                IntervalMode::Improved => assert!(p_tiny < 0.006, "{p_tiny}"),
            }
        }
    }

    #[test]
    fn jump_sampler_matches_closed_law() {
        let mut rng = stream(6, "nu-test", 0);
        let law = SpreadLaw::gamma(1.0);
        let n = 10_000_000;
        let (mut sum, mut sum_sq, mut near0) = (0.0, 0.0, 0u64);
        let h = 0.01;
        for _ in 0..n {
            let y = sample_nu(&law, &mut rng);
            sum += y;
            sum_sq += y * y;
            if y.abs() < 0.5 * h {
                near0 += 1;
            }
        }
        let m2 = sum_sq / n as f64;
        assert!((sum / n as f64).abs() < 1e-3);
        // second moment is the squared scale for the order-4 law
        assert!((m2 - 1.0).abs() < 0.01, "m2 = {m2}");
        let density0 = near0 as f64 / (n as f64 * h);
        assert!((density0 - 0.5).abs() < 0.01, "w(0) = {density0}");
        // point mass: both parties quote the same spread, never a jump
        let pm = SpreadLaw::point(2.0);
        for _ in 0..1000 {
            assert_eq!(sample_nu(&pm, &mut rng), 0.0);
        }
    }

    #[test]
    fn ema_with_zero_decay_reproduces_hyperbolic() {
        let cfg = SimConfig::new(100, SpreadLaw::gamma(1.0), 2000)
            .with_seed(9)
            .with_trend(2.0, 0.1);
        let base = LangevinParams::from_config(&cfg, Variant::Hyperbolic, IntervalMode::Plain)
            .unwrap();
        let ema = LangevinParams::from_config(
            &cfg,
            Variant::Ema { tau_ema: 0.0 },
            IntervalMode::Plain,
        )
        .unwrap();
        let mut ca = SeriesCollector::new();
        let mut cb = SeriesCollector::new();
        run_replica(&base, cfg.ticks, cfg.seed, 0, &mut ca).unwrap();
        run_replica(&ema, cfg.ticks, cfg.seed, 0, &mut cb).unwrap();
        assert_eq!(ca.series, cb.series);
    }

    #[test]
    fn linear_variant_friction_identity() {
        let cfg = SimConfig::new(100, SpreadLaw::gamma(1.0), 1)
            .with_seed(1)
            .with_trend(0.5, 2.5);
        let params =
            LangevinParams::from_config(&cfg, Variant::Linear, IntervalMode::Plain).unwrap();
        let mut state = LangevinState { dp: 0.3, xi_prev: 0.2, ..Default::default() };
        let mut rng = stream(14, "friction", 0);
        for _ in 0..200 {
            let draw = NoiseDraw::sample(&params, &mut rng);
            let dp_prev = state.dp;
            let dp_next = tick(&params, &mut state, &draw);
            // reconstruct the noise and verify d2p = -gamma dp + noise
            let noise = dp_next - params.c * draw.tau * dp_prev / params.dp_star;
            let gamma = linear_friction(&params, draw.tau);
            let lhs = dp_next - dp_prev;
            let rhs = -gamma * dp_prev + noise;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn telescoping_without_idle_noise() {
        let params = gamma_params(50);
        let mut rng = stream(8, "telescope", 0);
        let xi0: f64 = rng.sample(StandardNormal);
        let mut state = LangevinState { xi_prev: xi0, ..Default::default() };
        let p0 = state.p;
        let mut last_xi = xi0;
        for _ in 0..500 {
            let draw = NoiseDraw {
                tau: sample_tau(params.tau_star, IntervalMode::Plain, &mut rng),
                xi: rng.sample(StandardNormal),
                mu: 0.0,
                nu: 0.0,
            };
            tick(&params, &mut state, &draw);
            last_xi = draw.xi;
        }
        let amp = (params.l_rho_sq / (4.0 * params.n as f64)).sqrt();
        let want = amp * (last_xi - xi0);
        assert!(
            ((state.p - p0) - want).abs() < 1e-12,
            "telescoped displacement {} vs {}",
            state.p - p0,
            want
        );
    }

    #[test]
    fn weak_trend_flip_and_variance() {
        let cfg = SimConfig::new(100, SpreadLaw::gamma(1.0), 200_000).with_seed(12);
        let col = run_ensemble(&cfg, Variant::Hyperbolic, IntervalMode::Plain, || {
            SeriesCollector::new()
        })
        .unwrap();
        let dps = &col.series.dp;
        let signs = SignStats::from_series(dps);
        assert!((signs.p_flip() - 2.0 / 3.0).abs() < 0.01, "flip {}", signs.p_flip());
        let m = dps.iter().sum::<f64>() / dps.len() as f64;
        let var = dps.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / dps.len() as f64;
        let der = cfg.derived();
        let factor = var * 2.0 * cfg.n as f64 / der.l_rho_sq;
        // idle-noise and jump terms add 1/N-size corrections above the
        // zigzag's exact 1
        assert!((factor - 1.01).abs() < 0.03, "variance factor {factor}");
    }

    #[test]
    fn ensemble_deterministic_and_merge_ordered() {
        let cfg = SimConfig::new(100, SpreadLaw::gamma(1.0), 300)
            .with_seed(4)
            .with_replicas(3);
        let a = run_ensemble(&cfg, Variant::Hyperbolic, IntervalMode::Improved, || {
            SeriesCollector::new()
        })
        .unwrap();
        let b = run_ensemble(&cfg, Variant::Hyperbolic, IntervalMode::Improved, || {
            SeriesCollector::new()
        })
        .unwrap();
        assert_eq!(a.series, b.series);
        let params =
            LangevinParams::from_config(&cfg, Variant::Hyperbolic, IntervalMode::Improved)
                .unwrap();
        let mut manual = SeriesCollector::new();
        for r in 0..3 {
            let mut c = SeriesCollector::new();
            run_replica(&params, cfg.ticks, cfg.seed, r, &mut c).unwrap();
            manual.merge(c).unwrap();
        }
        assert_eq!(manual.series, a.series);
    }
}
