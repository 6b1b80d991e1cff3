//! Special functions used by the Brownian kernels.
//!
//! Gamma and the regularized incomplete gamma come from `statrs`, erf from
//! `libm` (statrs' erf is only good to ~1e-11). The confluent
//! hypergeometric and modified Bessel series are summed here
//! under an explicit stopping rule so callers control truncation.

use crate::error::{Error, Result};

pub use statrs::function::gamma::{gamma, gamma_ur, ln_gamma};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Truncation control for power series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    pub max_terms: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl {
            max_terms: 2000,
            abs_tol: 1e-17,
            rel_tol: 1e-15,
        }
    }
}

impl SeriesControl {
    pub fn new(max_terms: usize, abs_tol: f64, rel_tol: f64) -> Result<Self> {
        if max_terms == 0 || !(abs_tol > 0.0) || !(rel_tol > 0.0) {
            return Err(Error::SeriesDomain(
                "series control needs max_terms >= 1 and positive tolerances".into(),
            ));
        }
        Ok(SeriesControl {
            max_terms,
            abs_tol,
            rel_tol,
        })
    }

    fn done(&self, term: f64, sum: f64) -> bool {
        term.abs() < self.abs_tol + self.rel_tol * sum.abs()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Confluent hypergeometric function 1F1(a; b; z) on |z| <= 50.
pub fn hyp1f1(a: f64, b: f64, z: f64, ctl: &SeriesControl) -> Result<f64> {
    if b <= 0.0 && b.fract() == 0.0 {
        return Err(Error::SeriesDomain(format!("b = {b} is a nonpositive integer")));
    }
    if !z.is_finite() || z.abs() > 50.0 {
        return Err(Error::SeriesDomain(format!("|z| = {} exceeds 50", z.abs())));
    }
    if z < -1.0 {
        // Kummer's transformation keeps the series free of cancellation.
        return Ok(z.exp() * hyp1f1_series(b - a, b, -z, ctl)?);
    }
    hyp1f1_series(a, b, z, ctl)
}

fn hyp1f1_series(a: f64, b: f64, z: f64, ctl: &SeriesControl) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..ctl.max_terms {
        let k = k as f64;
        let ratio = (a + k) * z / ((b + k) * (k + 1.0));
        term *= ratio;
        sum += term;
        // Terms may still be growing while z > k; only stop once they shrink.
        if ratio.abs() < 1.0 && ctl.done(term, sum) {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        terms: ctl.max_terms,
    })
}

/// Modified Bessel function of the first kind I_nu(x) for nu >= 0, 0 <= x <= 50.
pub fn bessel_i(nu: f64, x: f64, ctl: &SeriesControl) -> Result<f64> {
    if nu < 0.0 || !nu.is_finite() {
        return Err(Error::SeriesDomain(format!("order {nu} must be nonnegative")));
    }
    if !(0.0..=50.0).contains(&x) {
        return Err(Error::SeriesDomain(format!("argument {x} outside [0, 50]")));
    }
    if x == 0.0 {
        return Ok(if nu == 0.0 { 1.0 } else { 0.0 });
    }
    let half = 0.5 * x;
    let q = half * half;
    let mut term = (nu * half.ln() - ln_gamma(nu + 1.0)).exp();
    let mut sum = term;
    for m in 0..ctl.max_terms {
        let m = m as f64;
        let ratio = q / ((m + 1.0) * (m + nu + 1.0));
        term *= ratio;
        sum += term;
        if ratio < 1.0 && ctl.done(term, sum) {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        terms: ctl.max_terms,
    })
}
