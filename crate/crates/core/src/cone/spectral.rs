//! Spectral data (p, m_1, u) of catalog cones and the extended function v.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::canonical::{canonical, chamber_normals, Canonical, ChamberKind, Shape};
use super::sphere::integrate_triangle;
use super::{norm, Cone};
use crate::bm;
use crate::error::{check_dim, Error, Result};
use crate::special::gamma;

/// Quadrature tolerance for chamber normalizations on S^2.
pub const SPHERE_TOL: f64 = 1e-8;

/// Extension margin used when u is a polynomial (harmonic on all of R^d):
/// any eps > 1 makes K^eps the whole punctured space.
const GLOBAL_EPS_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub j: usize,
    pub lambda: f64,
    /// Exponent a_j = sqrt(lambda_j + (d/2 - 1)^2) - (d/2 - 1).
    pub a: f64,
    /// Integral of m_j over Sigma.
    pub integral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Model {
    Line {
        sign: f64,
    },
    Wedge {
        phi0: f64,
        alpha: f64,
        scale: f64,
        integer_p: Option<u32>,
    },
    Chamber {
        kind: ChamberKind,
        scale: f64,
        rot: Option<DMatrix<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub dim: usize,
    pub p: f64,
    pub lambda1: f64,
    pub kappa: f64,
    pub h0_const: f64,
    pub rho_const: f64,
    /// Integral of m_1 over Sigma (counting measure when d = 1).
    pub m1_integral: f64,
    /// Largest admissible enlargement eps for the extension of u.
    pub eps_max: f64,
    pub eigen_list: Vec<Eigenpair>,
    pub shape: Shape,
    pub(crate) model: Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionParams {
    pub epsilon: f64,
    pub a: f64,
}

impl ExtensionParams {
    pub fn default_for(spec: &SpectralData) -> ExtensionParams {
        ExtensionParams {
            epsilon: 0.1 * spec.eps_max,
            a: 0.05,
        }
    }

    pub fn validate(&self, spec: &SpectralData) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < spec.eps_max) {
            return Err(Error::InvalidParams(format!(
                "epsilon {} outside (0, {})",
                self.epsilon, spec.eps_max
            )));
        }
        if !(self.a > 0.0 && self.a < spec.p.min(1.0)) {
            return Err(Error::InvalidParams(format!(
                "a {} outside (0, {})",
                self.a,
                spec.p.min(1.0)
            )));
        }
        Ok(())
    }
}

/// Spectral data of a catalog cone; `truncation` bounds the eigen list.
pub fn spectral_data(cone: &Cone, truncation: usize) -> Result<SpectralData> {
    let d = cone.dim();
    let truncation = truncation.max(1);
    let (p, m1_integral, model, eigen_list, shape) = match canonical(cone)? {
        Canonical::Line { sign } => {
            let list = vec![Eigenpair {
                j: 1,
                lambda: 0.0,
                a: 1.0,
                integral: 1.0,
            }];
            (1.0, 1.0, Model::Line { sign }, list, Shape::Line { sign })
        }
        Canonical::Wedge { phi0, alpha } => {
            let p = PI / alpha;
            let scale = (2.0 / alpha).sqrt();
            let list: Vec<Eigenpair> = (1..=truncation)
                .map(|j| {
                    let a = j as f64 * PI / alpha;
                    let integral = if j % 2 == 1 {
                        scale * 2.0 * alpha / (j as f64 * PI)
                    } else {
                        0.0
                    };
                    Eigenpair {
                        j,
                        lambda: a * a,
                        a,
                        integral,
                    }
                })
                .collect();
            let rounded = p.round();
            let integer_p = ((p - rounded).abs() < 1e-12 && rounded >= 1.0).then_some(rounded as u32);
            let model = Model::Wedge {
                phi0,
                alpha,
                scale,
                integer_p,
            };
            (p, list[0].integral, model, list, Shape::Wedge { phi0, alpha })
        }
        Canonical::Chamber { kind, d: _, rot } => {
            let p = chamber_degree(kind, d) as f64;
            let (i1, i2) = chamber_integrals(kind, d)?;
            let scale = 1.0 / i2.sqrt();
            let normals: Vec<Vec<f64>> = chamber_normals(kind, d)
                .into_iter()
                .map(|n| match &rot {
                    Some(q) => (q * DVector::from_column_slice(&n)).as_slice().to_vec(),
                    None => n,
                })
                .collect();
            let model = Model::Chamber { kind, scale, rot };
            let half = d as f64 / 2.0 - 1.0;
            let lambda = (p + half).powi(2) - half * half;
            let list = vec![Eigenpair {
                j: 1,
                lambda,
                a: p,
                integral: scale * i1,
            }];
            (p, scale * i1, model, list, Shape::Polyhedral { normals })
        }
    };
    let half = d as f64 / 2.0 - 1.0;
    let lambda1 = (p + half).powi(2) - half * half;
    let eps_max = match &model {
        Model::Wedge {
            alpha,
            integer_p: None,
            ..
        } => {
            let margin = ((2.0 * PI - alpha) / 4.0).min(PI / 4.0);
            margin.sin() / 4.0
        }
        _ => GLOBAL_EPS_MAX,
    };
    Ok(SpectralData {
        dim: d,
        p,
        lambda1,
        kappa: bm::kappa_from(p, d, m1_integral),
        h0_const: bm::h0_from(p, d, m1_integral),
        rho_const: bm::rho_from(p, d),
        m1_integral,
        eps_max,
        eigen_list,
        shape,
        model,
    })
}

fn chamber_degree(kind: ChamberKind, d: usize) -> usize {
    match kind {
        ChamberKind::Orthant => d,
        ChamberKind::WeylA => d * (d - 1) / 2,
        ChamberKind::WeylC => d * d,
        ChamberKind::WeylD => d * (d - 1),
    }
}

pub(crate) fn chamber_poly(kind: ChamberKind, y: &[f64]) -> f64 {
    let d = y.len();
    let mut v = 1.0;
    match kind {
        ChamberKind::Orthant => v = y.iter().product(),
        ChamberKind::WeylA => {
            for i in 0..d {
                for j in i + 1..d {
                    v *= y[j] - y[i];
                }
            }
        }
        ChamberKind::WeylC | ChamberKind::WeylD => {
            for i in 0..d {
                for j in i + 1..d {
                    v *= y[j] * y[j] - y[i] * y[i];
                }
            }
            if kind == ChamberKind::WeylC {
                v *= y.iter().product::<f64>();
            }
        }
    }
    v
}

/// (integral over Sigma of the chamber polynomial, integral of its square).
fn chamber_integrals(kind: ChamberKind, d: usize) -> Result<(f64, f64)> {
    if kind == ChamberKind::Orthant {
        let df = d as f64;
        let i1 = 1.0 / (2f64.powf(df - 1.0) * gamma(df));
        let i2 = (PI / 2.0).powf(df / 2.0) / (2f64.powf(1.5 * df - 1.0) * gamma(1.5 * df));
        return Ok((i1, i2));
    }
    if d != 3 {
        return Err(Error::UnsupportedCone(format!(
            "{kind:?} chamber in dimension {d}: spectral data needs d <= 3"
        )));
    }
    let f1 = |x: &[f64; 3]| chamber_poly(kind, x);
    let f2 = |x: &[f64; 3]| chamber_poly(kind, x).powi(2);
    let tris = chamber_triangles(kind);
    let i1: f64 = tris.iter().map(|t| integrate_triangle(t[0], t[1], t[2], &f1, SPHERE_TOL / 8.0)).sum();
    let i2: f64 = tris.iter().map(|t| integrate_triangle(t[0], t[1], t[2], &f2, SPHERE_TOL / 8.0)).sum();
    Ok((i1, i2))
}

/// Spherical triangles tiling Sigma for the three-dimensional chambers.
pub(crate) fn chamber_triangles(kind: ChamberKind) -> Vec<[[f64; 3]; 3]> {
    if kind == ChamberKind::WeylA {
        // Sigma is a lune with poles +-(1,1,1)/sqrt3 and opening pi/3.
        let s3 = 3f64.sqrt();
        let n = [1.0 / s3, 1.0 / s3, 1.0 / s3];
        let m = [-n[0], -n[1], -n[2]];
        let b1 = [-1.0, -1.0, 2.0];
        let b2 = [-2.0, 1.0, 1.0];
        let c = [-1.0, 0.0, 1.0];
        return vec![[n, b1, c], [n, c, b2], [m, b1, c], [m, c, b2]];
    }
    // Pointed chamber: vertices are the columns of the inverse normal matrix.
    let normals = chamber_normals(kind, 3);
    let nm = DMatrix::from_fn(3, 3, |r, c| normals[r][c]);
    let inv = nm.try_inverse().expect("chamber normals are independent");
    let col = |j: usize| [inv[(0, j)], inv[(1, j)], inv[(2, j)]];
    vec![[col(0), col(1), col(2)]]
}

impl SpectralData {
    /// The harmonic function u = |x|^p m_1(x/|x|) extended analytically
    /// beyond K; positive in K and zero on its boundary.
    pub fn u(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Line { sign } => sign * x[0],
            Model::Wedge {
                phi0,
                alpha,
                scale,
                integer_p,
            } => {
                let (re, im) = rotate(x[0], x[1], -phi0);
                if let Some(k) = integer_p {
                    // Im((re + i im)^k) by repeated complex multiplication.
                    let (mut a, mut b) = (1.0, 0.0);
                    for _ in 0..*k {
                        (a, b) = (a * re - b * im, a * im + b * re);
                    }
                    return scale * b;
                }
                let r = (re * re + im * im).sqrt();
                if r == 0.0 {
                    return 0.0;
                }
                let lo = -(2.0 * PI - alpha) / 2.0;
                let mut t = im.atan2(re);
                if t <= lo {
                    t += 2.0 * PI;
                } else if t > alpha - lo {
                    t -= 2.0 * PI;
                }
                scale * r.powf(self.p) * (self.p * t).sin()
            }
            Model::Chamber { kind, scale, rot } => match rot {
                Some(q) => {
                    let y = q.transpose() * DVector::from_column_slice(x);
                    scale * chamber_poly(*kind, y.as_slice())
                }
                None => scale * chamber_poly(*kind, x),
            },
        }
    }

    /// m_1 on the unit sphere.
    pub fn m1(&self, theta: &[f64]) -> f64 {
        self.u(theta)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.shape.contains(x)
    }

    /// The extended function: u on G = K^eps cap (K cup {dist <= |x|^(1-a)}),
    /// |x|^(p-a) elsewhere.
    pub fn v(&self, x: &[f64], params: &ExtensionParams) -> f64 {
        let r = norm(x);
        if r == 0.0 {
            return 0.0;
        }
        if self.shape.contains(x) {
            return self.u(x);
        }
        let dist = self.shape.boundary_distance(x);
        if dist < params.epsilon * r && dist <= r.powf(1.0 - params.a) {
            self.u(x)
        } else {
            r.powf(self.p - params.a)
        }
    }

    /// True when u is a polynomial, hence harmonic on all of R^d.
    pub fn globally_harmonic(&self) -> bool {
        !matches!(
            self.model,
            Model::Wedge {
                integer_p: None,
                ..
            }
        )
    }
}

fn rotate(x: f64, y: f64, t: f64) -> (f64, f64) {
    if t == 0.0 {
        return (x, y);
    }
    let (s, c) = t.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// u evaluated through freshly built spectral data.
pub fn u_value(cone: &Cone, x: &[f64]) -> Result<f64> {
    check_dim(cone.dim(), x.len())?;
    Ok(spectral_data(cone, 1)?.u(x))
}

/// v evaluated through freshly built spectral data.
pub fn v_value(cone: &Cone, x: &[f64], params: &ExtensionParams) -> Result<f64> {
    check_dim(cone.dim(), x.len())?;
    let spec = spectral_data(cone, 1)?;
    params.validate(&spec)?;
    Ok(spec.v(x, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;

    #[test]
    fn exponents() {
        assert_eq!(spectral_data(&Cone::half_line(), 8).unwrap().p, 1.0);
        assert!((spectral_data(&Cone::orthant(2).unwrap(), 8).unwrap().p - 2.0).abs() < 1e-15);
        assert_eq!(spectral_data(&Cone::weyl_a(3).unwrap(), 8).unwrap().p, 3.0);
        assert_eq!(spectral_data(&Cone::weyl_c(3).unwrap(), 8).unwrap().p, 9.0);
        assert_eq!(spectral_data(&Cone::weyl_d(3).unwrap(), 8).unwrap().p, 6.0);
        let w = spectral_data(&Cone::wedge(1.1).unwrap(), 8).unwrap();
        assert!((w.p - PI / 1.1).abs() < 1e-15);
        assert!(matches!(
            spectral_data(&Cone::weyl_a(4).unwrap(), 8),
            Err(Error::UnsupportedCone(_))
        ));
    }

    #[test]
    fn p_formula_consistency() {
        for cone in [
            Cone::half_line(),
            Cone::wedge(0.7).unwrap(),
            Cone::orthant(3).unwrap(),
            Cone::weyl_a(3).unwrap(),
            Cone::weyl_d(3).unwrap(),
        ] {
            let s = spectral_data(&cone, 4).unwrap();
            let h = s.dim as f64 / 2.0 - 1.0;
            assert!(((s.lambda1 + h * h).sqrt() - h - s.p).abs() < 1e-12);
        }
    }

    #[test]
    fn u_examples() {
        assert_eq!(u_value(&Cone::half_line(), &[5.0]).unwrap(), 5.0);
        let q = u_value(&Cone::orthant(2).unwrap(), &[1.0, 1.0]).unwrap();
        assert!((q - 4.0 / PI.sqrt()).abs() < 1e-14);
        for cone in [Cone::orthant(2).unwrap(), Cone::wedge(1.3).unwrap(), Cone::weyl_c(3).unwrap()] {
            let s = spectral_data(&cone, 1).unwrap();
            let b = match &s.shape {
                Shape::Wedge { phi0, alpha } => {
                    let t = phi0 + alpha;
                    vec![3.0 * t.cos(), 3.0 * t.sin()]
                }
                _ => vec![0.0, 1.0, 2.0],
            };
            assert!(s.u(&b).abs() < 1e-13, "{cone}");
        }
    }

    #[test]
    fn m1_is_normalized_on_the_arc() {
        let s = spectral_data(&Cone::wedge(2.0).unwrap(), 1).unwrap();
        let n = 20000;
        let h = 2.0 / n as f64;
        let sum: f64 = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                s.m1(&[t.cos(), t.sin()]).powi(2)
            })
            .sum::<f64>()
            * h;
        assert!((sum - 1.0).abs() < 1e-8);
    }

    #[test]
    fn weyl_a_normalization_matches_mehta() {
        // Int_{R^d} Vandermonde^2 e^{-|x|^2/2} = (2 pi)^{d/2} prod_{j<=d} j!,
        // one chamber carries 1/d! of it.
        let d = 3.0;
        let p = 3.0;
        let mehta = (2.0 * PI).powf(d / 2.0) * (1.0 * 2.0 * 6.0) / 6.0;
        let radial = 2f64.powf((2.0 * p + d) / 2.0 - 1.0) * gamma((2.0 * p + d) / 2.0);
        let (_, i2) = chamber_integrals(ChamberKind::WeylA, 3).unwrap();
        assert!((i2 * radial - mehta).abs() < 1e-7 * mehta);
    }

    #[test]
    fn orthant_closed_forms_match_quadrature() {
        let tri = chamber_triangles(ChamberKind::Orthant);
        let f1 = |x: &[f64; 3]| x[0] * x[1] * x[2];
        let f2 = |x: &[f64; 3]| (x[0] * x[1] * x[2]).powi(2);
        let q1 = integrate_triangle(tri[0][0], tri[0][1], tri[0][2], &f1, 1e-12);
        let q2 = integrate_triangle(tri[0][0], tri[0][1], tri[0][2], &f2, 1e-12);
        let (i1, i2) = chamber_integrals(ChamberKind::Orthant, 3).unwrap();
        assert!((q1 - i1).abs() < 1e-10);
        assert!((q2 - i2).abs() < 1e-10);
    }

    #[test]
    fn weyl_a_kappa_matches_planar_wedge() {
        // W_A(3) is the wedge of opening pi/3 times the line along (1,1,1).
        let a = spectral_data(&Cone::weyl_a(3).unwrap(), 1).unwrap();
        let w = spectral_data(&Cone::wedge(PI / 3.0).unwrap(), 1).unwrap();
        let x = [-0.4, 0.3, 1.9];
        // Orthonormal coordinates of the plane orthogonal to (1,1,1).
        let e1 = [-1.0 / 2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt()];
        let e2 = [1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt()];
        let (c1, c2) = (super::super::dot(&x, &e1), super::super::dot(&x, &e2));
        // Rotate so the chamber's wedge starts at angle 0.
        let t0 = -PI / 6.0;
        let (y1, y2) = rotate(c1, c2, -t0);
        let lhs = a.kappa * a.u(&x);
        let rhs = w.kappa * w.u(&[y1, y2]);
        assert!((lhs / rhs - 1.0).abs() < 1e-7, "{lhs} vs {rhs}");
    }

    #[test]
    fn v_examples() {
        let q = spectral_data(&Cone::orthant(2).unwrap(), 1).unwrap();
        let params = ExtensionParams { epsilon: 0.05, a: 0.1 };
        // Far outside K^eps: |x|^(p - a).
        let v = q.v(&[-2f64.sqrt(), -2f64.sqrt()], &params);
        assert!((v - 2f64.powf(1.9)).abs() < 1e-12);
        // Inside: u.
        assert_eq!(q.v(&[1.0, 2.0], &params), q.u(&[1.0, 2.0]));
        // Just outside, within the enlargement: the extended (negative) u.
        let t: f64 = -0.01;
        let x = [10.0 * t.cos(), 10.0 * t.sin()];
        let got = q.v(&x, &ExtensionParams::default_for(&q));
        let want = (4.0 / PI).sqrt() * 100.0 * (2.0 * t).sin();
        assert!(got < 0.0 && (got - want).abs() < 1e-10);
    }

    #[test]
    fn non_integer_wedge_extension_is_continuous() {
        let s = spectral_data(&Cone::wedge(2.0 * PI / 3.0).unwrap(), 1).unwrap();
        let params = ExtensionParams::default_for(&s);
        params.validate(&s).unwrap();
        assert!(!s.globally_harmonic());
        for t in [-0.05f64, -0.01, 2.0 * PI / 3.0 + 0.02] {
            let x = [t.cos(), t.sin()];
            assert!(s.u(&x) < 0.0);
            let y = [(t + 1e-9).cos(), (t + 1e-9).sin()];
            assert!((s.u(&x) - s.u(&y)).abs() < 1e-8);
        }
    }

    #[test]
    fn params_validation() {
        let s = spectral_data(&Cone::half_line(), 1).unwrap();
        assert!(ExtensionParams { epsilon: 0.1, a: 1.5 }.validate(&s).is_err());
        assert!(ExtensionParams { epsilon: 0.0, a: 0.1 }.validate(&s).is_err());
        assert!(ExtensionParams::default_for(&s).validate(&s).is_ok());
    }
}
