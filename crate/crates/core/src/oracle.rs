//! Closed-form reference curves and constants the simulators are checked
//! against. Everything here is analytic (or reduced quadrature of an analytic
//! integrand); nothing depends on simulation output.

use crate::error::{Error, Result};
use crate::model::{Derived, IntervalMode, SpreadLaw};
use crate::special::{erfc, integrate, integrate_panels};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Stationary single-spread quote profile: a tent of base `l` centered on the
/// quote midpoint, density (4/l^2) max(l/2 - |r|, 0).
pub fn tent_profile(l: f64, r: f64) -> f64 {
    4.0 / (l * l) * (0.5 * l - r.abs()).max(0.0)
}

/// Ask-side pooled book density for the full order-4 spread law, unit scale:
/// psi(x) = (4/3) e^{-3x/2} [ (2 + x) sinh(x/2) - (x/2) e^{-x/2} ], x > 0.
fn gamma_book_unit(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (4.0 / 3.0)
        * (-1.5 * x).exp()
        * ((2.0 + x) * (0.5 * x).sinh() - 0.5 * x * (-0.5 * x).exp())
}

/// Ask-side pooled book density f_A(r): spread-law average of single-spread
/// tents re-centered on their own half-spread. Zero for r <= 0.
pub fn book_profile(law: &SpreadLaw, r: f64) -> f64 {
    match *law {
        SpreadLaw::PointMass { scale } => tent_profile(scale, r - 0.5 * scale),
        SpreadLaw::Gamma { scale, lo: None, hi: None } => gamma_book_unit(r / scale) / scale,
        _ => book_profile_quadrature(law, r),
    }
}

/// Generic quadrature path for `book_profile`; also the independent check of
/// the closed forms. The L-integrand kinks at L = 2r, so integrate piecewise.
pub fn book_profile_quadrature(law: &SpreadLaw, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if let SpreadLaw::PointMass { scale } = *law {
        return tent_profile(scale, r - 0.5 * scale);
    }
    let hi = law.support_hi();
    if r >= hi {
        return 0.0;
    }
    let f = |l: f64| law.density(l) * tent_profile(l, r - 0.5 * l);
    let knee = (2.0 * r).min(hi);
    integrate(&f, r, knee, 5e-12) + integrate_panels(&f, knee, hi, 32, 5e-12)
}

/// Single-spread profile with the finite-ensemble boundary layer of width
/// eps = l_rho / sqrt(2 n) around the tent edges:
///
/// phi(r) = (4/l^2) [ (eps / (2 sqrt(pi))) e^{-x^2 / (2 eps^2)}
///                    - (x/2) erfc(x / eps) ],   x = |r| - l/2.
pub fn nlo_profile(l: f64, r: f64, n: usize, l_rho_sq: f64) -> f64 {
    let eps = (l_rho_sq / (2.0 * n as f64)).sqrt();
    let x = r.abs() - 0.5 * l;
    let xi = x / eps;
    4.0 / (l * l) * (eps / (2.0 * SQRT_PI) * (-0.5 * xi * xi).exp() - 0.5 * x * erfc(xi))
}

/// Survival function of the transaction-interval law.
pub fn interval_ccdf(tau: f64, tau_star: f64, mode: IntervalMode) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    match mode {
        IntervalMode::Plain => (-tau / tau_star).exp(),
        IntervalMode::Improved => {
            let g = 1.0 - (-1.5 * tau / tau_star).exp();
            1.0 - g * g
        }
    }
}

/// Density of the transaction-interval law (derivative of `interval_ccdf`).
pub fn interval_pdf(tau: f64, tau_star: f64, mode: IntervalMode) -> f64 {
    if tau < 0.0 {
        return 0.0;
    }
    match mode {
        IntervalMode::Plain => (-tau / tau_star).exp() / tau_star,
        IntervalMode::Improved => {
            let e = (-1.5 * tau / tau_star).exp();
            3.0 / tau_star * (1.0 - e) * e
        }
    }
}

/// Long-time price diffusion coefficient.
pub fn diffusion_coefficient(law: &SpreadLaw, n: usize, sigma: f64) -> f64 {
    Derived::new(law, n, sigma).diffusion
}

/// Real-time mean-squared displacement of the transacted price.
pub fn msd_real_theory(diffusion: f64, t: f64) -> f64 {
    2.0 * diffusion * t
}

/// Tick-lag mean-squared displacement at zero trend: an immediate jump to the
/// single-tick variance l_rho^2/(2n) (the anticorrelated zigzag saturates in
/// one lag) plus the diffusive slope 2 D tau* per tick. `k = 0` returns the
/// intercept of that line, not the trivial MSD(0) = 0.
pub fn msd_tick_theory(derived: &Derived, n: usize, k: u64) -> f64 {
    derived.l_rho_sq / (2.0 * n as f64) + 2.0 * derived.diffusion * derived.tau_star * k as f64
}

/// Idealized tick-increment autocorrelation at zero trend: perfect zigzag.
pub fn zigzag_autocorr(k: u64) -> f64 {
    match k {
        0 => 1.0,
        1 => -0.5,
        _ => 0.0,
    }
}

/// P(consecutive increments keep their sign) for the ideal zigzag: 1/3.
pub fn zigzag_same_sign_prob() -> f64 {
    1.0 / 3.0
}

/// P(consecutive increments flip sign) for the ideal zigzag: 2/3.
pub fn zigzag_flip_prob() -> f64 {
    2.0 / 3.0
}

/// Center-of-mass jump density w~(y).
///
/// Construction: y = (A - B)/2 with A, B iid spreads reweighted by 1/L^2
/// (slow quoters trade less). For the full order-4 law the reweighting gives
/// an order-2 law and w~(y) = (scale + 2|y|)/(2 scale^2) e^{-2|y|/scale};
/// the point mass collapses to a delta at 0 and has no density.
pub fn cm_jump_density(law: &SpreadLaw, y: f64) -> Result<f64> {
    match *law {
        SpreadLaw::PointMass { .. } => Err(Error::Domain(
            "point-mass spreads give a degenerate (delta) jump law".into(),
        )),
        SpreadLaw::Gamma { scale, lo: None, hi: None } => {
            let a = y.abs() / scale;
            Ok((1.0 + 2.0 * a) / (2.0 * scale) * (-2.0 * a).exp())
        }
        SpreadLaw::Gamma { scale, .. } => {
            // windowed: 1D quadrature over the reweighted product law
            let (wlo, whi) = (
                law.quantile(0.0)?.max(1e-9 * scale),
                law.support_hi().min(60.0 * scale),
            );
            let m0 = integrate_panels(|l: f64| law.density(l) / (l * l), wlo, whi, 48, 1e-13);
            let u = 2.0 * y.abs();
            let f = |b: f64| {
                let a = b + u;
                if a < wlo || a > whi {
                    0.0
                } else {
                    law.density(a) / (a * a) * law.density(b) / (b * b)
                }
            };
            Ok(2.0 * integrate_panels(f, wlo, whi, 48, 1e-13) / (m0 * m0))
        }
    }
}

/// Gaussian bulk of the tick-increment distribution at zero trend, variance
/// l_rho^2 / (2 n).
pub fn dp_gaussian_pdf(dp: f64, l_rho_sq: f64, n: usize) -> f64 {
    let v = l_rho_sq / (2.0 * n as f64);
    (-0.5 * dp * dp / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// Two-sided exponential tail density with decay scale `kappa`.
pub fn dp_exponential_tail(dp: f64, kappa: f64) -> f64 {
    (-dp.abs() / kappa).exp() / (2.0 * kappa)
}

/// Shape (not normalized) of the interval-superposed increment survival
/// function in the marginal regime: |dp|^{-alpha}.
pub fn powerlaw_superposition_ccdf(dp: f64, alpha: f64) -> f64 {
    dp.powf(-alpha)
}

/// Saturated-trend prediction for the exponential tail scale.
pub fn kappa_theory(c: f64, tau_star: f64, mode: IntervalMode) -> f64 {
    match mode {
        IntervalMode::Plain => c * tau_star,
        IntervalMode::Improved => 2.0 / 3.0 * c * tau_star,
    }
}
