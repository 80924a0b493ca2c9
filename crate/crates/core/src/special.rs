//! Scalar numerics used across the crate: error functions, the unit-scale
//! order-4 gamma density family, and adaptive quadrature.

use crate::error::{Error, Result};

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_57;

/// erf by Maclaurin series, valid and fast for |x| <= 2.
///
/// erf(x) = (2/sqrt(pi)) e^{-x^2} sum_k (2x^2)^k x / (2k+1)!!
/// Terms decay factorially once 2x^2 < 2k+1; at x = 2 that is ~40 terms.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for k in 1..200 {
        term *= 2.0 * x2 / (2 * k + 1) as f64;
        let prev = sum;
        sum += term;
        if sum == prev {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// erfc by Lentz's continued fraction, for x > 2.
///
/// sqrt(pi) e^{x^2} erfc(x) = 1 / (x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..300 {
        let a = 0.5 * n as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
}

pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        -erf(-x)
    } else if x <= 2.0 {
        erf_series(x)
    } else {
        1.0 - erfc_cf(x)
    }
}

pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x <= 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

/// Unit-scale order-4 gamma density L^3 e^{-L} / 6.
pub fn gamma4_pdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x * x * (-x).exp() / 6.0
    }
}

/// CDF of the unit-scale order-4 gamma law.
pub fn gamma4_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-x).exp() * (1.0 + x + 0.5 * x * x + x * x * x / 6.0)
    }
}

/// Quantile of the unit-scale order-4 gamma law. Newton from the mean with a
/// bisection safeguard; the CDF is smooth and strictly increasing.
pub fn gamma4_quantile(q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile level {q} outside [0, 1)")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 4.0_f64);
    while gamma4_cdf(hi) < q {
        hi *= 2.0;
    }
    let mut x = 4.0_f64.min(hi);
    for _ in 0..200 {
        let f = gamma4_cdf(x) - q;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = gamma4_pdf(x);
        let step = if d > 0.0 { f / d } else { f64::INFINITY };
        x -= step;
        if !(lo..=hi).contains(&x) {
            x = 0.5 * (lo + hi);
        }
        if (hi - lo) < 1e-15 * (1.0 + hi) || step.abs() < 1e-15 * (1.0 + x) {
            break;
        }
    }
    Ok(x)
}

/// Partial first moment of the unit-scale order-4 gamma law:
/// int_a^b L pdf(L) dL = G(a) - G(b) with
/// G(x) = e^{-x} (x^4 + 4x^3 + 12x^2 + 24x + 24) / 6.
pub fn gamma4_partial_mean(a: f64, b: f64) -> f64 {
    fn g(x: f64) -> f64 {
        let x2 = x * x;
        (-x).exp() * (x2 * x2 + 4.0 * x2 * x + 12.0 * x2 + 24.0 * x + 24.0) / 6.0
    }
    let a = a.max(0.0);
    if b <= a {
        return 0.0;
    }
    if b.is_infinite() {
        g(a)
    } else {
        g(a) - g(b)
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    recurse(&f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Adaptive Simpson over `panels` uniform sub-intervals. Use when the
/// integrand has a feature far from both endpoints that the global adaptive
/// pass could step over.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let w = (b - a) / panels as f64;
    let per = tol / panels as f64;
    (0..panels)
        .map(|i| integrate(&f, a + i as f64 * w, a + (i + 1) as f64 * w, per))
        .sum()
}
