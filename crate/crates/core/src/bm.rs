//! Brownian motion killed on leaving a cone: survival series, exit-free
//! transition density and the constants kappa, H0, rho.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cone::spectral::Model;
use crate::cone::{norm, spectral_data, ChamberKind, Cone, ConeKind, SpectralData};
use crate::error::{check_dim, Error, Result};
use crate::special::{bessel_i, erf, gamma, hyp1f1, SeriesControl};

/// Default bound on the number of eigenfunctions summed.
pub const DEFAULT_TRUNCATION: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmConstants {
    pub a_j: Vec<f64>,
    pub b_j: Vec<f64>,
    pub kappa: f64,
    pub h0_const: f64,
    pub rho_const: f64,
}

/// kappa = B_1 2^{-p/2} with B_1 = Gamma((p+d)/2) / Gamma(p+d/2) * int m_1.
pub fn kappa_from(p: f64, d: usize, m1_integral: f64) -> f64 {
    b_coefficient(p, d, m1_integral) * 2f64.powf(-p / 2.0)
}

/// H0 = 1 / int_K u e^{-|y|^2/2}, radial part done analytically.
pub fn h0_from(p: f64, d: usize, m1_integral: f64) -> f64 {
    let s = (p + d as f64) / 2.0;
    1.0 / (m1_integral * 2f64.powf(s - 1.0) * gamma(s))
}

/// rho = (2 pi)^{-d} int_K u^2 e^{-|w|^2/2} dw, using int m_1^2 = 1.
pub fn rho_from(p: f64, d: usize) -> f64 {
    let d = d as f64;
    (2.0 * PI).powf(-d) * 2f64.powf(p + d / 2.0 - 1.0) * gamma(p + d / 2.0)
}

/// Prefactor of the small-argument density asymptotics
/// b_t(x,z) ~ kappa0 u(x) u(z) e^{-|z|^2/2t} t^{-p-d/2}.
pub fn kappa0_from(p: f64, d: usize) -> f64 {
    let nu = p - 1.0 + d as f64 / 2.0;
    2f64.powf(-nu) / gamma(nu + 1.0)
}

fn b_coefficient(a: f64, d: usize, integral: f64) -> f64 {
    let d = d as f64;
    gamma((a + d) / 2.0) / gamma(a + d / 2.0) * integral
}

pub fn bm_constants(cone: &Cone, truncation: usize) -> Result<BmConstants> {
    let s = spectral_data(cone, truncation)?;
    Ok(BmConstants {
        a_j: s.eigen_list.iter().map(|e| e.a).collect(),
        b_j: s
            .eigen_list
            .iter()
            .map(|e| b_coefficient(e.a, s.dim, e.integral))
            .collect(),
        kappa: s.kappa,
        h0_const: s.h0_const,
        rho_const: s.rho_const,
    })
}

pub fn kappa(cone: &Cone) -> Result<f64> {
    Ok(spectral_data(cone, 1)?.kappa)
}

pub fn h0_constant(cone: &Cone) -> Result<f64> {
    Ok(spectral_data(cone, 1)?.h0_const)
}

pub fn rho_constant(cone: &Cone) -> Result<f64> {
    Ok(spectral_data(cone, 1)?.rho_const)
}

/// P(tau_x > t) for Brownian motion started at x.
pub fn bm_survival(cone: &Cone, x: &[f64], t: f64, ctl: &SeriesControl) -> Result<f64> {
    check_dim(cone.dim(), x.len())?;
    if !(t > 0.0) {
        return Err(Error::SeriesDomain(format!("time {t} must be positive")));
    }
    if !cone.contains_unchecked(x) {
        return Err(Error::NotInCone(x.to_vec()));
    }
    // Orthants factor exactly in every dimension, including d = 2 where the
    // spectral model is a right-angle wedge with a restricted series domain.
    if *cone.kind() == ConeKind::Orthant {
        return Ok(x.iter().map(|&v| erf(v / (2.0 * t).sqrt())).product());
    }
    let s = spectral_data(cone, ctl.max_terms.min(4096))?;
    survival_with(&s, x, t, ctl)
}

pub(crate) fn survival_with(s: &SpectralData, x: &[f64], t: f64, ctl: &SeriesControl) -> Result<f64> {
    match &s.model {
        Model::Line { sign } => Ok(erf(sign * x[0] / (2.0 * t).sqrt())),
        Model::Wedge { phi0, alpha, .. } => {
            let (r, theta) = polar_in_wedge(x, *phi0);
            wedge_survival(s, *alpha, r, theta, t, ctl)
        }
        Model::Chamber { kind, rot, .. } => {
            let y = unrotate(rot, x);
            match kind {
                ChamberKind::Orthant => Ok(y.iter().map(|&v| erf(v / (2.0 * t).sqrt())).product()),
                ChamberKind::WeylA if y.len() == 3 => {
                    let (w, _) = weyl_a3_plane(&y);
                    let (r, theta) = polar_in_wedge(&w, 0.0);
                    let planar = spectral_data(&Cone::wedge(PI / 3.0)?, ctl.max_terms.min(4096))?;
                    wedge_survival(&planar, PI / 3.0, r, theta, t, ctl)
                }
                _ => Err(Error::UnsupportedCone(format!(
                    "{kind:?}: no product or planar reduction for the survival series"
                ))),
            }
        }
    }
}

fn wedge_survival(s: &SpectralData, alpha: f64, r: f64, theta: f64, t: f64, ctl: &SeriesControl) -> Result<f64> {
    let z = r * r / (2.0 * t);
    if z > 0.5 * (1.0 + 1e-12) {
        return Err(Error::SeriesDomain(format!(
            "|x|^2 = {} exceeds t = {t}",
            r * r
        )));
    }
    let scale = (2.0 / alpha).sqrt();
    let mut sum = 0.0;
    let mut quiet = 0;
    for e in s.eigen_list.iter().filter(|e| e.integral != 0.0) {
        let b = b_coefficient(e.a, 2, e.integral);
        let radial = b * z.powf(e.a / 2.0) * hyp1f1(e.a / 2.0, e.a + 1.0, -z, ctl)?;
        let m = scale * (e.a * theta).sin();
        sum += radial * m;
        // |m_j| <= scale, so the radial factor bounds the term.
        if (radial * scale).abs() < ctl.abs_tol + ctl.rel_tol * sum.abs() {
            quiet += 1;
            if quiet >= 2 {
                return Ok(sum);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NonConvergence {
        terms: s.eigen_list.len(),
    })
}

/// Density of P(tau_x > t, x + B(t) in dz).
pub fn bm_exit_density(cone: &Cone, x: &[f64], z: &[f64], t: f64, ctl: &SeriesControl) -> Result<f64> {
    check_dim(cone.dim(), x.len())?;
    check_dim(cone.dim(), z.len())?;
    if !(t > 0.0) {
        return Err(Error::SeriesDomain(format!("time {t} must be positive")));
    }
    if !cone.contains_unchecked(x) || !cone.contains_unchecked(z) {
        return Ok(0.0);
    }
    let s = spectral_data(cone, ctl.max_terms.min(4096))?;
    density_with(&s, x, z, t, ctl)
}

fn density_with(s: &SpectralData, x: &[f64], z: &[f64], t: f64, ctl: &SeriesControl) -> Result<f64> {
    match &s.model {
        Model::Line { sign } => {
            let (a, b) = (sign * x[0], sign * z[0]);
            check_bessel_domain(a * b / t)?;
            // Single eigenfunction on the two-point sphere, order 1/2.
            let nu = 0.5;
            Ok((-(a * a + b * b) / (2.0 * t)).exp() * (a * b).sqrt() / t
                * bessel_i(nu, a * b / t, ctl)?)
        }
        Model::Wedge { phi0, alpha, .. } => {
            let (r, th) = polar_in_wedge(x, *phi0);
            let (q, ph) = polar_in_wedge(z, *phi0);
            wedge_density(s, *alpha, r, th, q, ph, t, ctl)
        }
        Model::Chamber { kind, rot, .. } => {
            let y = unrotate(rot, x);
            let w = unrotate(rot, z);
            match kind {
                ChamberKind::Orthant => {
                    let mut out = 1.0;
                    for (a, b) in y.iter().zip(&w) {
                        out *= gauss(b - a, t) - gauss(b + a, t);
                    }
                    Ok(out)
                }
                ChamberKind::WeylA if y.len() == 3 => {
                    let (py, ly) = weyl_a3_plane(&y);
                    let (pw, lw) = weyl_a3_plane(&w);
                    let planar = spectral_data(&Cone::wedge(PI / 3.0)?, ctl.max_terms.min(4096))?;
                    let (r, th) = polar_in_wedge(&py, 0.0);
                    let (q, ph) = polar_in_wedge(&pw, 0.0);
                    Ok(wedge_density(&planar, PI / 3.0, r, th, q, ph, t, ctl)? * gauss(lw - ly, t))
                }
                _ => Err(Error::UnsupportedCone(format!(
                    "{kind:?}: no product or planar reduction for the density series"
                ))),
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn wedge_density(
    s: &SpectralData,
    alpha: f64,
    r: f64,
    th: f64,
    q: f64,
    ph: f64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    let arg = r * q / t;
    check_bessel_domain(arg)?;
    let pref = (-(r * r + q * q) / (2.0 * t)).exp() / t;
    let scale2 = 2.0 / alpha;
    let mut sum = 0.0;
    let mut quiet = 0;
    for e in &s.eigen_list {
        let bes = bessel_i(e.a, arg, ctl)?;
        sum += bes * scale2 * (e.a * th).sin() * (e.a * ph).sin();
        if (bes * scale2).abs() < ctl.abs_tol + ctl.rel_tol * sum.abs() {
            quiet += 1;
            if quiet >= 2 {
                return Ok(pref * sum);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NonConvergence {
        terms: s.eigen_list.len(),
    })
}

fn check_bessel_domain(arg: f64) -> Result<()> {
    if arg > 10.0 {
        return Err(Error::SeriesDomain(format!("|x||z|/t = {arg} exceeds 10")));
    }
    Ok(())
}

fn gauss(x: f64, t: f64) -> f64 {
    (-(x * x) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

fn polar_in_wedge(x: &[f64], phi0: f64) -> (f64, f64) {
    let r = norm(x);
    let t = (x[1].atan2(x[0]) - phi0).rem_euclid(2.0 * PI);
    (r, t)
}

fn unrotate(rot: &Option<nalgebra::DMatrix<f64>>, x: &[f64]) -> Vec<f64> {
    match rot {
        Some(q) => (q.transpose() * DVector::from_column_slice(x)).as_slice().to_vec(),
        None => x.to_vec(),
    }
}

/// Coordinates of x in W_A(3) as (point of the planar wedge of opening
/// pi/3 starting at angle 0, coordinate along (1,1,1)/sqrt3).
pub(crate) fn weyl_a3_plane(x: &[f64]) -> ([f64; 2], f64) {
    let s2 = 2f64.sqrt();
    let s6 = 6f64.sqrt();
    let c1 = (x[2] - x[0]) / s2;
    let c2 = (x[0] - 2.0 * x[1] + x[2]) / s6;
    // The chamber spans angles (-pi/6, pi/6) in (c1, c2); rotate by pi/6.
    let (s, c) = (PI / 6.0).sin_cos();
    let w = [c * c1 - s * c2, s * c1 + c * c2];
    (w, (x[0] + x[1] + x[2]) / 3f64.sqrt())
}
