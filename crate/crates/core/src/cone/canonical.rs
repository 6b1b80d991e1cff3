use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{dot, norm, ray_distance, unit_ray, wedge_contains, Cone, ConeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChamberKind {
    Orthant,
    WeylA,
    WeylC,
    WeylD,
}

/// Geometric description used for distances.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// {sign * x > 0} in d = 1.
    Line { sign: f64 },
    /// Open wedge swept counterclockwise from phi0 through alpha.
    Wedge { phi0: f64, alpha: f64 },
    /// {x : n_i . x > 0 for all i}.
    Polyhedral { normals: Vec<Vec<f64>> },
}

impl Shape {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Line { sign } => sign * x[0] > 0.0,
            Shape::Wedge { phi0, alpha } => wedge_contains(*phi0, *alpha, x),
            Shape::Polyhedral { normals } => normals.iter().all(|n| dot(n, x) > 0.0),
        }
    }

    /// Distance to the boundary for interior points and to the closed cone
    /// for exterior points.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Line { .. } => x[0].abs(),
            Shape::Wedge { phi0, alpha } => {
                let r1 = unit_ray(*phi0);
                let r2 = unit_ray(phi0 + alpha);
                ray_distance(&r1, x).min(ray_distance(&r2, x))
            }
            Shape::Polyhedral { normals } => {
                if normals.iter().all(|n| dot(n, x) > 0.0) {
                    normals
                        .iter()
                        .map(|n| dot(n, x) / norm(n))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    distance_to_polyhedral(normals, x)
                }
            }
        }
    }
}

/// Distance to the closed polyhedral cone by enumerating active facet sets:
/// the projection is the orthogonal projection onto the span of some face.
fn distance_to_polyhedral(normals: &[Vec<f64>], x: &[f64]) -> f64 {
    let m = normals.len();
    let d = x.len();
    let xv = DVector::from_column_slice(x);
    let mut best = norm(x);
    for mask in 1u32..(1u32 << m) {
        let active: Vec<&Vec<f64>> = (0..m)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &normals[i])
            .collect();
        if active.len() > d {
            continue;
        }
        let n = DMatrix::from_fn(d, active.len(), |r, c| active[c][r]);
        let gram = n.transpose() * &n;
        let Some(inv) = gram.try_inverse() else {
            continue;
        };
        let y = &xv - &n * (inv * (n.transpose() * &xv));
        let feasible = normals
            .iter()
            .all(|nn| dot(nn, y.as_slice()) >= -1e-12 * norm(nn) * norm(x));
        if feasible {
            best = best.min((&xv - &y).norm());
        }
    }
    best
}

pub(crate) fn chamber_normals(kind: ChamberKind, d: usize) -> Vec<Vec<f64>> {
    let e = |i: usize| {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    };
    let diff = |i: usize, j: usize, sj: f64| {
        let mut v = vec![0.0; d];
        v[i] += 1.0;
        v[j] += sj;
        v
    };
    let mut out = Vec::new();
    match kind {
        ChamberKind::Orthant => out.extend((0..d).map(e)),
        ChamberKind::WeylA => out.extend((0..d - 1).map(|i| diff(i + 1, i, -1.0))),
        ChamberKind::WeylC => {
            out.push(e(0));
            out.extend((0..d - 1).map(|i| diff(i + 1, i, -1.0)));
        }
        ChamberKind::WeylD => {
            out.push(diff(1, 0, -1.0));
            out.push(diff(1, 0, 1.0));
            out.extend((1..d - 1).map(|i| diff(i + 1, i, -1.0)));
        }
    }
    out
}

pub(crate) fn shape(cone: &Cone) -> Result<Shape> {
    let d = cone.dim();
    Ok(match cone.kind() {
        ConeKind::HalfLine => Shape::Line { sign: 1.0 },
        ConeKind::Orthant if d == 1 => Shape::Line { sign: 1.0 },
        ConeKind::Orthant => Shape::Polyhedral {
            normals: chamber_normals(ChamberKind::Orthant, d),
        },
        ConeKind::Wedge2D { alpha } => Shape::Wedge {
            phi0: 0.0,
            alpha: *alpha,
        },
        ConeKind::WeylA => Shape::Polyhedral {
            normals: chamber_normals(ChamberKind::WeylA, d),
        },
        ConeKind::WeylC => Shape::Polyhedral {
            normals: chamber_normals(ChamberKind::WeylC, d),
        },
        ConeKind::WeylD => Shape::Polyhedral {
            normals: chamber_normals(ChamberKind::WeylD, d),
        },
        ConeKind::LinearImage { base, map } => map_shape(&shape(base)?, map)?,
    })
}

fn map_shape(s: &Shape, m: &DMatrix<f64>) -> Result<Shape> {
    Ok(match s {
        Shape::Line { sign } => Shape::Line {
            sign: sign * m[(0, 0)].signum(),
        },
        Shape::Wedge { phi0, alpha } => {
            let r1 = unit_ray(*phi0);
            let r2 = unit_ray(phi0 + alpha);
            let a = m * DVector::from_column_slice(&r1);
            let b = m * DVector::from_column_slice(&r2);
            let (from, to) = if m.determinant() > 0.0 { (a, b) } else { (b, a) };
            let t0 = from[1].atan2(from[0]);
            let t1 = to[1].atan2(to[0]);
            Shape::Wedge {
                phi0: t0.rem_euclid(2.0 * PI),
                alpha: wrap_angle(t1 - t0, *alpha),
            }
        }
        Shape::Polyhedral { normals } => {
            let inv_t = m
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::InvalidCone("singular map".into()))?
                .transpose();
            Shape::Polyhedral {
                normals: normals
                    .iter()
                    .map(|n| (&inv_t * DVector::from_column_slice(n)).as_slice().to_vec())
                    .collect(),
            }
        }
    })
}

/// Counterclockwise angle in (0, 2pi); `hint` resolves the degenerate
/// half-plane case where both rays are antipodal.
fn wrap_angle(t: f64, hint: f64) -> f64 {
    let a = t.rem_euclid(2.0 * PI);
    if (a - PI).abs() < 1e-14 && (hint - PI).abs() < 1e-14 {
        PI
    } else if a == 0.0 {
        2.0 * PI
    } else {
        a
    }
}

/// Form of a cone under which its spectral data are known.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Canonical {
    Line { sign: f64 },
    Wedge { phi0: f64, alpha: f64 },
    /// A rotated catalog chamber: K = Q K_kind, so u_K(y) = u_kind(Q^T y).
    Chamber {
        kind: ChamberKind,
        d: usize,
        rot: Option<DMatrix<f64>>,
    },
}

pub(crate) fn canonical(cone: &Cone) -> Result<Canonical> {
    let d = cone.dim();
    if d == 1 {
        let Shape::Line { sign } = shape(cone)? else {
            unreachable!("one-dimensional cones are lines");
        };
        return Ok(Canonical::Line { sign });
    }
    if d == 2 {
        return match shape(cone)? {
            Shape::Wedge { phi0, alpha } => Ok(Canonical::Wedge { phi0, alpha }),
            Shape::Polyhedral { normals } => polyhedral_to_wedge(&normals),
            Shape::Line { .. } => unreachable!("lines are one-dimensional"),
        };
    }
    match cone.kind() {
        ConeKind::Orthant => Ok(Canonical::Chamber {
            kind: ChamberKind::Orthant,
            d,
            rot: None,
        }),
        ConeKind::WeylA | ConeKind::WeylC | ConeKind::WeylD => {
            let kind = match cone.kind() {
                ConeKind::WeylA => ChamberKind::WeylA,
                ConeKind::WeylC => ChamberKind::WeylC,
                _ => ChamberKind::WeylD,
            };
            Ok(Canonical::Chamber { kind, d, rot: None })
        }
        ConeKind::LinearImage { base, map } => {
            let Canonical::Chamber { kind, rot, .. } = canonical(base)? else {
                return Err(Error::UnsupportedCone(format!("image of {base}")));
            };
            let cat = unit_normals(&chamber_normals(kind, d));
            let base_normals: Vec<Vec<f64>> = match &rot {
                Some(r) => cat
                    .iter()
                    .map(|n| (r * DVector::from_column_slice(n)).as_slice().to_vec())
                    .collect(),
                None => cat.clone(),
            };
            let Shape::Polyhedral { normals } =
                map_shape(&Shape::Polyhedral { normals: base_normals }, map)?
            else {
                unreachable!("polyhedral cones map to polyhedral cones");
            };
            let img = unit_normals(&normals);
            let q = match_rotation(&cat, &img).ok_or_else(|| {
                Error::UnsupportedCone(format!(
                    "{cone}: the image is not a rotated catalog chamber"
                ))
            })?;
            Ok(Canonical::Chamber {
                kind,
                d,
                rot: Some(q),
            })
        }
        _ => Err(Error::UnsupportedCone(cone.to_string())),
    }
}

fn unit_normals(ns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    ns.iter()
        .map(|n| {
            let r = norm(n);
            n.iter().map(|v| v / r).collect()
        })
        .collect()
}

fn polyhedral_to_wedge(normals: &[Vec<f64>]) -> Result<Canonical> {
    match normals.len() {
        1 => {
            let n = &normals[0];
            let phi0 = (n[1].atan2(n[0]) - PI / 2.0).rem_euclid(2.0 * PI);
            Ok(Canonical::Wedge { phi0, alpha: PI })
        }
        2 => {
            let (n1, n2) = (&normals[0], &normals[1]);
            // Boundary ray on facet i points into the other half-space.
            let mut ra = [-n1[1], n1[0]];
            if dot(&ra, n2) < 0.0 {
                ra = [n1[1], -n1[0]];
            }
            let mut rb = [-n2[1], n2[0]];
            if dot(&rb, n1) < 0.0 {
                rb = [n2[1], -n2[0]];
            }
            let (from, to) = if ra[0] * rb[1] - ra[1] * rb[0] > 0.0 {
                (ra, rb)
            } else {
                (rb, ra)
            };
            let t0 = from[1].atan2(from[0]);
            let t1 = to[1].atan2(to[0]);
            Ok(Canonical::Wedge {
                phi0: t0.rem_euclid(2.0 * PI),
                alpha: (t1 - t0).rem_euclid(2.0 * PI),
            })
        }
        k => Err(Error::UnsupportedCone(format!(
            "planar cone with {k} facets"
        ))),
    }
}

/// Find an orthogonal Q with Q cat_{pi(i)} = img_i for some permutation pi.
fn match_rotation(cat: &[Vec<f64>], img: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    if cat.len() != img.len() {
        return None;
    }
    let d = cat[0].len();
    let m = cat.len();
    for perm in permutations(m) {
        let ok = (0..m).all(|i| {
            (0..m).all(|j| (dot(&img[i], &img[j]) - dot(&cat[perm[i]], &cat[perm[j]])).abs() < 1e-9)
        });
        if !ok {
            continue;
        }
        let mut a: Vec<Vec<f64>> = perm.iter().map(|&p| cat[p].clone()).collect();
        let mut b: Vec<Vec<f64>> = img.to_vec();
        if m + 1 == d && d == 3 {
            a.push(cross3(&a[0], &a[1]));
            b.push(cross3(&b[0], &b[1]));
        }
        if a.len() != d {
            continue;
        }
        let am = DMatrix::from_fn(d, d, |r, c| a[c][r]);
        let bm = DMatrix::from_fn(d, d, |r, c| b[c][r]);
        let q = bm * am.try_inverse()?;
        let err = (&q.transpose() * &q - DMatrix::<f64>::identity(d, d)).abs().max();
        if err < 1e-8 {
            return Some(q);
        }
    }
    None
}

fn cross3(a: &[f64], b: &[f64]) -> Vec<f64> {
    let c = vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let r = norm(&c);
    c.into_iter().map(|v| v / r).collect()
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wedge_of(c: &Cone) -> (f64, f64) {
        match canonical(c).unwrap() {
            Canonical::Wedge { phi0, alpha } => (phi0, alpha),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn planar_catalog_cones_are_wedges() {
        let (p, a) = wedge_of(&Cone::orthant(2).unwrap());
        assert!(p.abs() < 1e-15 && (a - PI / 2.0).abs() < 1e-15);
        let (p, a) = wedge_of(&Cone::weyl_a(2).unwrap());
        assert!((p - PI / 4.0).abs() < 1e-15 && (a - PI).abs() < 1e-15);
        let (p, a) = wedge_of(&Cone::weyl_c(2).unwrap());
        assert!((p - PI / 4.0).abs() < 1e-15 && (a - PI / 4.0).abs() < 1e-15);
        let (p, a) = wedge_of(&Cone::weyl_d(2).unwrap());
        assert!((p - PI / 4.0).abs() < 1e-15 && (a - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn correlated_image_has_arccos_angle() {
        // Unit variances with correlation rho; the whitened quadrant has
        // opening arccos(-rho).
        let rho: f64 = 0.5;
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let eig = cov.symmetric_eigen();
        let m = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        let img = Cone::image(Cone::orthant(2).unwrap(), m).unwrap();
        let (_, a) = wedge_of(&img);
        assert!((a - (-rho).acos()).abs() < 1e-12);
    }

    #[test]
    fn rotated_chamber_is_recognised() {
        let s = 2.0;
        let (c, sn) = (0.3f64.cos(), 0.3f64.sin());
        let m = DMatrix::from_row_slice(3, 3, &[s * c, -s * sn, 0.0, s * sn, s * c, 0.0, 0.0, 0.0, s]);
        for base in [Cone::weyl_a(3).unwrap(), Cone::weyl_c(3).unwrap(), Cone::orthant(3).unwrap()] {
            match canonical(&Cone::image(base, m.clone()).unwrap()).unwrap() {
                Canonical::Chamber { rot: Some(q), .. } => {
                    assert!((q[(0, 0)] - c).abs() < 1e-12 || base_is_symmetric(&q));
                }
                other => panic!("{other:?}"),
            }
        }
        // A shear does not preserve the chamber angles.
        let shear = DMatrix::from_row_slice(3, 3, &[1.0, 0.7, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(canonical(&Cone::image(Cone::weyl_c(3).unwrap(), shear).unwrap()).is_err());
        // Any positive diagonal map sends the orthant to itself.
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 0.5]));
        assert!(canonical(&Cone::image(Cone::orthant(3).unwrap(), diag).unwrap()).is_ok());
    }

    fn base_is_symmetric(q: &DMatrix<f64>) -> bool {
        (q.transpose() * q - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-9
    }

    #[test]
    fn reflected_half_line() {
        let img = Cone::image(Cone::half_line(), DMatrix::from_element(1, 1, -2.0)).unwrap();
        assert_eq!(canonical(&img).unwrap(), Canonical::Line { sign: -1.0 });
        assert!(img.contains(&[-1.0]).unwrap());
    }
}
