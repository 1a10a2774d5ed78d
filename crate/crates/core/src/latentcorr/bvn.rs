//! Standard bivariate normal CDF.
//!
//! Genz's reduction to a one-dimensional integral over the correlation
//! angle, evaluated with 6/12/20-point Gauss-Legendre rules depending on
//! |ρ|, and an asymptotic expansion for |ρ| ≥ 0.925. Absolute error is
//! around 1e-15.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, Rule};
use crate::stats::norm_cdf;

fn rules() -> &'static [Rule; 3] {
    static RULES: OnceLock<[Rule; 3]> = OnceLock::new();
    RULES.get_or_init(|| [gauss_legendre(6), gauss_legendre(12), gauss_legendre(20)])
}

/// P(X ≤ h, Y ≤ k) for a standard bivariate normal with correlation `rho`.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("correlation {rho} outside (-1, 1)")));
    }
    if h.is_nan() || k.is_nan() {
        return Err(Error::InvalidArgument("NaN bound".into()));
    }
    Ok(bvn_cdf_unchecked(h, k, rho))
}

pub(crate) fn bvn_cdf_unchecked(h: f64, k: f64, rho: f64) -> f64 {
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return norm_cdf(k);
    }
    if k == f64::INFINITY {
        return norm_cdf(h);
    }
    bvn_upper(-h, -k, rho).clamp(0.0, 1.0)
}

/// P(X > h, Y > k); finite bounds, |r| < 1.
pub(crate) fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let rule = &rules()[if r.abs() < 0.3 {
        0
    } else if r.abs() < 0.75 {
        1
    } else {
        2
    }];
    let mut hk = h * k;

    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let half = r.asin() / 2.0;
        let sum: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(t, w)| {
                let sn = (half * (1.0 + t)).sin();
                w * ((sn * hk - hs) / (1.0 - sn * sn)).exp()
            })
            .sum();
        return sum * half / two_pi + norm_cdf(-h) * norm_cdf(-k);
    }

    let k = if r < 0.0 {
        hk = -hk;
        -k
    } else {
        k
    };
    let one_minus = (1.0 - r) * (1.0 + r);
    let a = one_minus.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 80.0;
    let mut p = 0.0;
    let asr = -(bs / one_minus + hk) / 2.0;
    if asr > -100.0 {
        p = a * asr.exp() * (1.0 - c * (bs - one_minus) * (1.0 - d * bs) / 3.0 + c * d * one_minus * one_minus);
    }
    if hk > -100.0 {
        let b = bs.sqrt();
        let sp = two_pi.sqrt() * norm_cdf(-b / a);
        p -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    let half_a = a / 2.0;
    let sum: f64 = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .filter_map(|(t, w)| {
            let xs = (half_a * (1.0 + t)).powi(2);
            let asr = -(bs / xs + hk) / 2.0;
            (asr > -100.0).then(|| {
                let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                let rs = (1.0 - xs).sqrt();
                let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                w * asr.exp() * (sp - ep)
            })
        })
        .sum();
    p = (half_a * sum - p) / two_pi;

    if r > 0.0 {
        p + norm_cdf(-h.max(k))
    } else if h >= k {
        -p
    } else {
        let l = if h < 0.0 {
            norm_cdf(k) - norm_cdf(h)
        } else {
            norm_cdf(-h) - norm_cdf(-k)
        };
        l - p
    }
}

/// Standard bivariate normal density.
pub fn bvn_pdf(h: f64, k: f64, rho: f64) -> f64 {
    let om = 1.0 - rho * rho;
    (-(h * h - 2.0 * rho * h * k + k * k) / (2.0 * om)).exp() / (2.0 * PI * om.sqrt())
}
