//! Cone catalog: membership, boundary distances, linear images and the
//! enlarged cone used by the extended function v.

mod canonical;
pub mod spectral;
pub mod sphere;

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

pub use canonical::{ChamberKind, Shape};
pub use spectral::{spectral_data, u_value, v_value, Eigenpair, ExtensionParams, SpectralData};

/// Determinant magnitude below which a linear map is treated as singular.
pub const MAP_DET_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ConeKind {
    HalfLine,
    Orthant,
    Wedge2D { alpha: f64 },
    WeylA,
    WeylC,
    WeylD,
    LinearImage { base: Box<Cone>, map: DMatrix<f64> },
}

/// An open cone in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    kind: ConeKind,
    dim: usize,
}

impl Cone {
    pub fn half_line() -> Cone {
        Cone {
            kind: ConeKind::HalfLine,
            dim: 1,
        }
    }

    pub fn orthant(d: usize) -> Result<Cone> {
        if d == 0 {
            return Err(Error::InvalidCone("orthant needs d >= 1".into()));
        }
        Ok(Cone {
            kind: ConeKind::Orthant,
            dim: d,
        })
    }

    /// The wedge {r (cos t, sin t): r > 0, 0 < t < alpha}.
    pub fn wedge(alpha: f64) -> Result<Cone> {
        if !(alpha > 0.0 && alpha < 2.0 * PI) {
            return Err(Error::InvalidCone(format!(
                "wedge angle {alpha} outside (0, 2pi)"
            )));
        }
        Ok(Cone {
            kind: ConeKind::Wedge2D { alpha },
            dim: 2,
        })
    }

    /// x_1 < x_2 < ... < x_d.
    pub fn weyl_a(d: usize) -> Result<Cone> {
        Self::weyl(ConeKind::WeylA, d)
    }

    /// 0 < x_1 < x_2 < ... < x_d.
    pub fn weyl_c(d: usize) -> Result<Cone> {
        Self::weyl(ConeKind::WeylC, d)
    }

    /// |x_1| < x_2 < ... < x_d.
    pub fn weyl_d(d: usize) -> Result<Cone> {
        Self::weyl(ConeKind::WeylD, d)
    }

    fn weyl(kind: ConeKind, d: usize) -> Result<Cone> {
        if d < 2 {
            return Err(Error::InvalidCone("Weyl chambers need d >= 2".into()));
        }
        Ok(Cone { kind, dim: d })
    }

    /// The image M K of `base` under an invertible matrix.
    pub fn image(base: Cone, map: DMatrix<f64>) -> Result<Cone> {
        let d = base.dim;
        if map.nrows() != d || map.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: map.nrows(),
            });
        }
        if map.determinant().abs() < MAP_DET_TOL {
            return Err(Error::InvalidCone("linear map is singular".into()));
        }
        Ok(Cone {
            kind: ConeKind::LinearImage {
                base: Box::new(base),
                map,
            },
            dim: d,
        })
    }

    pub fn kind(&self) -> &ConeKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Membership in the open cone.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        match &self.kind {
            ConeKind::HalfLine => x[0] > 0.0,
            ConeKind::Orthant => x.iter().all(|&v| v > 0.0),
            ConeKind::Wedge2D { alpha } => wedge_contains(0.0, *alpha, x),
            ConeKind::WeylA => x.windows(2).all(|w| w[0] < w[1]),
            ConeKind::WeylC => x[0] > 0.0 && x.windows(2).all(|w| w[0] < w[1]),
            ConeKind::WeylD => x[0].abs() < x[1] && x[1..].windows(2).all(|w| w[0] < w[1]),
            ConeKind::LinearImage { base, map } => {
                let y = nalgebra::DVector::from_column_slice(x);
                match map.clone().lu().solve(&y) {
                    Some(z) => base.contains_unchecked(z.as_slice()),
                    None => false,
                }
            }
        }
    }

    /// Membership for lattice points, exact for the integer-normal catalog cones.
    pub fn contains_lattice(&self, z: &[i64]) -> bool {
        match &self.kind {
            ConeKind::HalfLine => z[0] > 0,
            ConeKind::Orthant => z.iter().all(|&v| v > 0),
            ConeKind::WeylA => z.windows(2).all(|w| w[0] < w[1]),
            ConeKind::WeylC => z[0] > 0 && z.windows(2).all(|w| w[0] < w[1]),
            ConeKind::WeylD => z[0].abs() < z[1] && z[1..].windows(2).all(|w| w[0] < w[1]),
            _ => {
                let x: Vec<f64> = z.iter().map(|&v| v as f64).collect();
                self.contains_unchecked(&x)
            }
        }
    }

    /// Euclidean distance to the boundary for points of the open cone, 0 otherwise.
    pub fn dist_to_boundary(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        if !self.contains_unchecked(x) {
            return Ok(0.0);
        }
        Ok(self.shape()?.boundary_distance(x))
    }

    /// Distance from x to the closed cone (0 inside).
    pub fn dist_to_closure(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        if self.contains_unchecked(x) {
            return Ok(0.0);
        }
        Ok(self.shape()?.boundary_distance(x))
    }

    /// Membership in K^eps = {y : |y - x| < eps |x| for some x in K}.
    pub fn in_enlarged(&self, y: &[f64], eps: f64) -> Result<bool> {
        let r = norm(y);
        if r == 0.0 {
            return Ok(false);
        }
        Ok(self.dist_to_closure(y)? < eps * r)
    }

    /// Canonical geometric description (facet normals or wedge angles).
    pub fn shape(&self) -> Result<Shape> {
        canonical::shape(self)
    }

    /// Parse a cone spec string such as `orthant:d=2` or `image:halfline;m=2`.
    pub fn parse(spec: &str) -> Result<Cone> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("image:") {
            let (base, m) = rest
                .rsplit_once(";m=")
                .ok_or_else(|| Error::Parse(format!("image spec needs ';m=': {spec}")))?;
            let base = Cone::parse(base)?;
            let d = base.dim();
            let entries = m
                .split(',')
                .map(|t| parse_real(t.trim()))
                .collect::<Result<Vec<f64>>>()?;
            if entries.len() != d * d {
                return Err(Error::Parse(format!(
                    "image map needs {} entries, got {}",
                    d * d,
                    entries.len()
                )));
            }
            return Cone::image(base, DMatrix::from_row_slice(d, d, &entries));
        }
        let (name, args) = match spec.split_once(':') {
            Some((n, a)) => (n, a),
            None => (spec, ""),
        };
        let mut d = None;
        let mut alpha = None;
        for kv in args.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value in '{kv}'")))?;
            match k.trim() {
                "d" => {
                    d = Some(v.trim().parse::<usize>().map_err(|e| {
                        Error::Parse(format!("bad dimension '{v}': {e}"))
                    })?)
                }
                "alpha" => alpha = Some(parse_real(v.trim())?),
                other => return Err(Error::Parse(format!("unknown cone parameter '{other}'"))),
            }
        }
        let need_d = |d: Option<usize>| d.ok_or_else(|| Error::Parse(format!("'{spec}' needs d=")));
        match name {
            "halfline" => Ok(Cone::half_line()),
            "orthant" => Cone::orthant(need_d(d)?),
            "wedge" => Cone::wedge(alpha.ok_or_else(|| Error::Parse("wedge needs alpha=".into()))?),
            "weylA" => Cone::weyl_a(need_d(d)?),
            "weylC" => Cone::weyl_c(need_d(d)?),
            "weylD" => Cone::weyl_d(need_d(d)?),
            other => Err(Error::Parse(format!("unknown cone kind '{other}'"))),
        }
    }
}

impl fmt::Display for Cone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ConeKind::HalfLine => write!(f, "halfline"),
            ConeKind::Orthant => write!(f, "orthant:d={}", self.dim),
            ConeKind::Wedge2D { alpha } => write!(f, "wedge:alpha={alpha:?}"),
            ConeKind::WeylA => write!(f, "weylA:d={}", self.dim),
            ConeKind::WeylC => write!(f, "weylC:d={}", self.dim),
            ConeKind::WeylD => write!(f, "weylD:d={}", self.dim),
            ConeKind::LinearImage { base, map } => {
                let entries: Vec<String> = (0..self.dim)
                    .flat_map(|i| (0..self.dim).map(move |j| (i, j)))
                    .map(|(i, j)| format!("{:?}", map[(i, j)]))
                    .collect();
                write!(f, "image:{base};m={}", entries.join(","))
            }
        }
    }
}

/// Accepts plain numbers and the forms `pi`, `k*pi`, `pi/m`, `k*pi/m`.
fn parse_real(s: &str) -> Result<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let bad = || Error::Parse(format!("cannot parse number '{s}'"));
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a, b.trim().parse::<f64>().map_err(|_| bad())?),
        None => (s, 1.0),
    };
    let num = num.trim();
    let k = if num == "pi" {
        1.0
    } else if let Some(k) = num.strip_suffix("*pi") {
        k.trim().parse::<f64>().map_err(|_| bad())?
    } else {
        return Err(bad());
    };
    Ok(k * PI / den)
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// cos/sin with values within rounding of 0 or +-1 snapped, so wedges with
/// angles at multiples of pi/2 have exact boundary rays.
pub(crate) fn unit_ray(angle: f64) -> [f64; 2] {
    let snap = |v: f64| {
        if v.abs() < 1e-15 {
            0.0
        } else if (v.abs() - 1.0).abs() < 1e-15 {
            v.signum()
        } else {
            v
        }
    };
    [snap(angle.cos()), snap(angle.sin())]
}

fn cross2(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Open wedge swept counterclockwise from angle phi0 through alpha.
pub(crate) fn wedge_contains(phi0: f64, alpha: f64, x: &[f64]) -> bool {
    let r1 = unit_ray(phi0);
    let r2 = unit_ray(phi0 + alpha);
    let c1 = cross2(&r1, x);
    let c2 = cross2(x, &r2);
    if alpha < PI {
        c1 > 0.0 && c2 > 0.0
    } else if alpha == PI {
        c1 > 0.0
    } else {
        !(c1 <= 0.0 && c2 <= 0.0) && !(x[0] == 0.0 && x[1] == 0.0)
    }
}

/// Distance from x to the ray through the unit vector r.
pub(crate) fn ray_distance(r: &[f64], x: &[f64]) -> f64 {
    if dot(r, x) >= 0.0 {
        cross2(r, x).abs()
    } else {
        norm(x)
    }
}
