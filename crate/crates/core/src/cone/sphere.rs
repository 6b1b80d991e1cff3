//! Adaptive quadrature over spherical triangles on S^2.
//!
//! A spherical triangle with vertices A, B, C is the central projection of
//! the flat triangle ABC; with P on the flat triangle the solid-angle element
//! is h / |P|^3 dArea, h being the distance from the origin to its plane.

use super::{dot, norm};

// Degree-5 seven-point rule on a triangle (barycentric coordinates, weights).
const RULE: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

const MAX_DEPTH: u32 = 18;

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn mid(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

fn unit(v: &[f64; 3]) -> [f64; 3] {
    let r = norm(v);
    [v[0] / r, v[1] / r, v[2] / r]
}

/// Integral of f over the spherical triangle with vertices a, b, c
/// (any nonzero vectors spanning a proper triangle).
pub fn integrate_triangle<F>(a: [f64; 3], b: [f64; 3], c: [f64; 3], f: &F, tol: f64) -> f64
where
    F: Fn(&[f64; 3]) -> f64,
{
    let (a, b, c) = (unit(&a), unit(&b), unit(&c));
    let n = cross(&sub(&b, &a), &sub(&c, &a));
    let h = dot(&unit(&n), &a).abs();
    let rule = |p0: &[f64; 3], p1: &[f64; 3], p2: &[f64; 3]| {
        let area = 0.5 * norm(&cross(&sub(p1, p0), &sub(p2, p0)));
        let mut s = 0.0;
        for (w, wt) in RULE.iter() {
            let p = [
                w[0] * p0[0] + w[1] * p1[0] + w[2] * p2[0],
                w[0] * p0[1] + w[1] * p1[1] + w[2] * p2[1],
                w[0] * p0[2] + w[1] * p1[2] + w[2] * p2[2],
            ];
            let r = norm(&p);
            s += wt * f(&[p[0] / r, p[1] / r, p[2] / r]) * h / (r * r * r);
        }
        s * area
    };
    let whole = rule(&a, &b, &c);
    refine(&rule, a, b, c, whole, tol, 0)
}

fn refine<R>(rule: &R, a: [f64; 3], b: [f64; 3], c: [f64; 3], whole: f64, tol: f64, depth: u32) -> f64
where
    R: Fn(&[f64; 3], &[f64; 3], &[f64; 3]) -> f64,
{
    let (ab, bc, ca) = (mid(&a, &b), mid(&b, &c), mid(&c, &a));
    let kids = [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)];
    let vals: Vec<f64> = kids.iter().map(|(p, q, r)| rule(p, q, r)).collect();
    let sum: f64 = vals.iter().sum();
    if (sum - whole).abs() < tol || depth >= MAX_DEPTH {
        return sum;
    }
    kids.iter()
        .zip(&vals)
        .map(|((p, q, r), &v)| refine(rule, *p, *q, *r, v, tol / 4.0, depth + 1))
        .sum()
}
