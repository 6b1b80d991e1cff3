//! Layered dynamic programs over the lattice points of a cone inside a box.
//!
//! Cells are the points z of the box with z in K. Each cell keeps, per
//! step, the index of z + s or a code saying the walk was killed (left K)
//! or escaped (still in K but outside the box). Weights are generic so the
//! same kernels run in floating point, exact rationals and big integers.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};

use serde::{Deserialize, Serialize};

use crate::cone::Cone;
use crate::error::{check_dim, Error, Result};

pub const KILLED: u32 = u32::MAX;
pub const ESCAPED: u32 = u32::MAX - 1;

/// Default cap on box cells (and on table cells for layered tables).
pub const DEFAULT_BUDGET: usize = 200_000_000;

pub trait Weight: Clone + Send + Sync + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    /// self += a * b
    fn add_mul(&mut self, a: &Self, b: &Self);
    fn add(&mut self, a: &Self);
    fn to_f64(&self) -> f64;
}

/// Weights that can be divided (probabilities, not counts).
pub trait FieldWeight: Weight {
    fn div(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
}

impl Weight for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn add(&mut self, a: &Self) {
        *self += a;
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl FieldWeight for f64 {
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
}

impl Weight for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn add(&mut self, a: &Self) {
        *self += a;
    }
    fn to_f64(&self) -> f64 {
        crate::walk::rational_to_f64(self)
    }
}

impl FieldWeight for BigRational {
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
}

impl Weight for BigUint {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        if b.is_one() {
            *self += a;
        } else {
            *self += a * b;
        }
    }
    fn add(&mut self, a: &Self) {
        *self += a;
    }
    fn to_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::INFINITY)
    }
}

/// Lattice points of K inside the box [lo, hi] with their step neighbours.
#[derive(Debug, Clone)]
pub struct LatticeDomain {
    dim: usize,
    lo: Vec<i64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    /// Box index -> cell index, or KILLED for box points outside K.
    cell_of: Vec<u32>,
    /// Coordinates of cells, flattened.
    points: Vec<i64>,
    steps: Vec<Vec<i64>>,
    /// cells x steps neighbour table.
    nbr: Vec<u32>,
}

impl LatticeDomain {
    pub fn new(cone: &Cone, steps: &[Vec<i64>], lo: Vec<i64>, hi: Vec<i64>, budget: usize) -> Result<LatticeDomain> {
        let d = cone.dim();
        check_dim(d, lo.len())?;
        check_dim(d, hi.len())?;
        for s in steps {
            check_dim(d, s.len())?;
        }
        if steps.is_empty() {
            return Err(Error::InvalidSteps("empty step set".into()));
        }
        let mut shape = Vec::with_capacity(d);
        let mut total: usize = 1;
        for i in 0..d {
            if hi[i] < lo[i] {
                return Err(Error::InvalidParams(format!("empty box along axis {i}")));
            }
            let w = (hi[i] - lo[i] + 1) as usize;
            shape.push(w);
            total = total
                .checked_mul(w)
                .filter(|&t| t <= budget)
                .ok_or_else(|| Error::BudgetExceeded(format!("box exceeds {budget} cells")))?;
        }
        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        let mut cell_of = vec![KILLED; total];
        let mut points = Vec::new();
        let mut z = lo.clone();
        let mut ncells: usize = 0;
        for (b, slot) in cell_of.iter_mut().enumerate() {
            if b > 0 {
                // Odometer increment in row-major order.
                let mut i = d - 1;
                loop {
                    z[i] += 1;
                    if z[i] <= hi[i] {
                        break;
                    }
                    z[i] = lo[i];
                    i -= 1;
                }
            }
            if cone.contains_lattice(&z) {
                if ncells >= ESCAPED as usize {
                    return Err(Error::BudgetExceeded("too many cells".into()));
                }
                *slot = ncells as u32;
                points.extend_from_slice(&z);
                ncells += 1;
            }
        }
        let m = steps.len();
        let mut dom = LatticeDomain {
            dim: d,
            lo,
            shape,
            strides,
            cell_of,
            points,
            steps: steps.to_vec(),
            nbr: Vec::new(),
        };
        let mut nbr = vec![KILLED; ncells * m];
        let mut t = vec![0i64; d];
        for c in 0..ncells {
            for (k, s) in steps.iter().enumerate() {
                for i in 0..d {
                    t[i] = dom.points[c * d + i] + s[i];
                }
                nbr[c * m + k] = match dom.box_index(&t) {
                    Some(b) => dom.cell_of[b],
                    None if cone.contains_lattice(&t) => ESCAPED,
                    None => KILLED,
                };
            }
        }
        dom.nbr = nbr;
        Ok(dom)
    }

    /// The cube [-radius, radius]^d.
    pub fn centered(cone: &Cone, steps: &[Vec<i64>], radius: i64, budget: usize) -> Result<LatticeDomain> {
        let d = cone.dim();
        Self::new(cone, steps, vec![-radius; d], vec![radius; d], budget)
    }

    /// Box covering every point reachable from x in n steps.
    pub fn full_reach(cone: &Cone, steps: &[Vec<i64>], x: &[i64], n: usize, budget: usize) -> Result<LatticeDomain> {
        let d = cone.dim();
        check_dim(d, x.len())?;
        let mut lo = x.to_vec();
        let mut hi = x.to_vec();
        for i in 0..d {
            let up = steps.iter().map(|s| s[i]).max().unwrap_or(0).max(0);
            let down = steps.iter().map(|s| s[i]).min().unwrap_or(0).min(0);
            hi[i] += up * n as i64;
            lo[i] += down * n as i64;
        }
        Self::new(cone, steps, lo, hi, budget)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.points.len() / self.dim.max(1)
    }

    pub fn steps(&self) -> &[Vec<i64>] {
        &self.steps
    }

    pub fn point(&self, c: usize) -> &[i64] {
        &self.points[c * self.dim..(c + 1) * self.dim]
    }

    pub fn neighbors(&self, c: usize) -> &[u32] {
        let m = self.steps.len();
        &self.nbr[c * m..(c + 1) * m]
    }

    fn box_index(&self, z: &[i64]) -> Option<usize> {
        let mut b = 0usize;
        for i in 0..self.dim {
            let off = z[i] - self.lo[i];
            if off < 0 || off as usize >= self.shape[i] {
                return None;
            }
            b += off as usize * self.strides[i];
        }
        Some(b)
    }

    /// Cell index of z, None when z is outside the box or outside K.
    pub fn cell(&self, z: &[i64]) -> Option<usize> {
        let b = self.box_index(z)?;
        let c = self.cell_of[b];
        (c != KILLED).then_some(c as usize)
    }

    pub fn in_box(&self, z: &[i64]) -> bool {
        self.box_index(z).is_some()
    }

    /// Is the box wide enough that every cell within `margin` steps of x
    /// keeps all its neighbours inside?
    pub fn covers(&self, x: &[i64], n: usize) -> bool {
        let max_abs: i64 = self.steps.iter().flatten().map(|v| v.abs()).max().unwrap_or(0);
        (0..self.dim).all(|i| {
            let r = max_abs * n as i64;
            x[i] - r >= self.lo[i] && x[i] + r < self.lo[i] + self.shape[i] as i64
        })
    }
}

/// Radius of the default domain: |x| + factor * max|s| * sqrt(n).
pub fn default_radius(x: &[i64], max_norm: f64, n: usize, factor: f64) -> i64 {
    let xn = x.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
    (xn + factor * max_norm * (n as f64).sqrt()).ceil() as i64 + 1
}

/// How large a box to use for an n-step program started at x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radius {
    /// |x| + 4 max|s| sqrt(n), centered at the origin.
    Default,
    /// |x| + factor max|s| sqrt(n), centered at the origin.
    Factor(f64),
    /// The cube [-L, L]^d.
    Explicit(i64),
    /// Everything reachable in n steps: no truncation at all.
    Full,
}

impl Radius {
    pub fn domain(&self, cone: &Cone, steps: &[Vec<i64>], x: &[i64], n: usize, budget: usize) -> Result<LatticeDomain> {
        let max_norm = steps
            .iter()
            .map(|s| s.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        match *self {
            Radius::Default => LatticeDomain::centered(cone, steps, default_radius(x, max_norm, n, 4.0), budget),
            Radius::Factor(f) => LatticeDomain::centered(cone, steps, default_radius(x, max_norm, n, f), budget),
            Radius::Explicit(l) => LatticeDomain::centered(cone, steps, l, budget),
            Radius::Full => LatticeDomain::full_reach(cone, steps, x, n, budget),
        }
    }
}

/// Mass distribution of the killed walk, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct ForwardDp<'a, T: Weight> {
    dom: &'a LatticeDomain,
    weights: Vec<T>,
    mass: Vec<T>,
    scratch: Vec<T>,
    /// Mass that left the box while still in K, cumulated.
    pub escaped: T,
    pub time: usize,
}

impl<'a, T: Weight> ForwardDp<'a, T> {
    pub fn new(dom: &'a LatticeDomain, weights: Vec<T>, x: &[i64]) -> Result<Self> {
        if weights.len() != dom.steps.len() {
            return Err(Error::InvalidSteps("weights do not match the step list".into()));
        }
        let c = dom.cell(x).ok_or_else(|| Error::NotInCone(x.iter().map(|&v| v as f64).collect()))?;
        let mut mass = vec![T::zero(); dom.cells()];
        mass[c] = T::one();
        Ok(ForwardDp {
            dom,
            weights,
            scratch: vec![T::zero(); mass.len()],
            mass,
            escaped: T::zero(),
            time: 0,
        })
    }

    pub fn step(&mut self) {
        let m = self.weights.len();
        for v in self.scratch.iter_mut() {
            *v = T::zero();
        }
        for (c, mc) in self.mass.iter().enumerate() {
            if mc.is_zero() {
                continue;
            }
            for (k, &t) in self.dom.nbr[c * m..(c + 1) * m].iter().enumerate() {
                if t < ESCAPED {
                    self.scratch[t as usize].add_mul(mc, &self.weights[k]);
                } else if t == ESCAPED {
                    self.escaped.add_mul(mc, &self.weights[k]);
                }
            }
        }
        std::mem::swap(&mut self.mass, &mut self.scratch);
        self.time += 1;
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn total(&self) -> T {
        let mut s = T::zero();
        for v in &self.mass {
            s.add(v);
        }
        s
    }

    pub fn at(&self, z: &[i64]) -> T {
        self.dom.cell(z).map(|c| self.mass[c].clone()).unwrap_or_else(T::zero)
    }

    pub fn domain(&self) -> &LatticeDomain {
        self.dom
    }
}

/// Layered survival probabilities q_k(z) = P(tau_z > k), k = 0..=n, with
/// escape from the box counted as killing (a lower bound when the box
/// does not cover the reachable set).
#[derive(Debug, Clone)]
pub struct SurvivalTable<T: Weight = f64> {
    dom: LatticeDomain,
    weights: Vec<T>,
    layers: Vec<Vec<T>>,
}

impl<T: Weight> SurvivalTable<T> {
    pub fn build(dom: LatticeDomain, weights: Vec<T>, horizon: usize, budget: usize) -> Result<Self> {
        if weights.len() != dom.steps.len() {
            return Err(Error::InvalidSteps("weights do not match the step list".into()));
        }
        let cells = dom.cells();
        if cells.saturating_mul(horizon + 1) > budget {
            return Err(Error::BudgetExceeded(format!(
                "survival table needs {} cells, budget {budget}",
                cells.saturating_mul(horizon + 1)
            )));
        }
        let m = weights.len();
        let mut layers = Vec::with_capacity(horizon + 1);
        layers.push(vec![T::one(); cells]);
        for k in 0..horizon {
            let prev: &Vec<T> = &layers[k];
            let mut next = vec![T::zero(); cells];
            for (c, out) in next.iter_mut().enumerate() {
                for (j, &t) in dom.nbr[c * m..(c + 1) * m].iter().enumerate() {
                    if t < ESCAPED {
                        out.add_mul(&prev[t as usize], &weights[j]);
                    }
                }
            }
            layers.push(next);
        }
        Ok(SurvivalTable { dom, weights, layers })
    }

    pub fn horizon(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn domain(&self) -> &LatticeDomain {
        &self.dom
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// q_k(z); zero outside K, None for points of K outside the box.
    pub fn q(&self, k: usize, z: &[i64]) -> Option<T> {
        match self.dom.cell(z) {
            Some(c) => self.layers.get(k).map(|l| l[c].clone()),
            None if self.dom.in_box(z) => Some(T::zero()),
            None => None,
        }
    }

    pub fn layer(&self, k: usize) -> &[T] {
        &self.layers[k]
    }
}

impl SurvivalTable<f64> {
    /// One step of the conditioned walk from cell c with `remaining` steps
    /// still to survive, driven by a uniform u in [0, 1). Returns the next
    /// cell, or None when q_remaining(c) = 0.
    pub fn draw(&self, remaining: usize, c: usize, u: f64) -> Option<usize> {
        let m = self.weights.len();
        let prev = &self.layers[remaining - 1];
        let target = u * self.layers[remaining][c];
        let mut acc = 0.0;
        let mut last = None;
        for (j, &t) in self.dom.nbr[c * m..(c + 1) * m].iter().enumerate() {
            if t < ESCAPED {
                let w = self.weights[j] * prev[t as usize];
                if w > 0.0 {
                    acc += w;
                    last = Some(t as usize);
                    if acc > target {
                        return last;
                    }
                }
            }
        }
        // Rounding can leave target a hair above the accumulated sum.
        last
    }
}

impl<T: FieldWeight> SurvivalTable<T> {
    /// Transition law of the walk conditioned on surviving `remaining`
    /// more steps from z: (step index, p_s q_{r-1}(z+s) / q_r(z)).
    pub fn transition(&self, remaining: usize, z: &[i64]) -> Result<Vec<(usize, T)>> {
        let c = self
            .dom
            .cell(z)
            .ok_or_else(|| Error::NotInCone(z.iter().map(|&v| v as f64).collect()))?;
        if remaining == 0 || remaining > self.horizon() {
            return Err(Error::InvalidParams(format!("remaining {remaining} outside 1..={}", self.horizon())));
        }
        let qz = &self.layers[remaining][c];
        if qz.is_zero() {
            return Err(Error::ZeroSurvival);
        }
        let m = self.weights.len();
        let prev = &self.layers[remaining - 1];
        let mut out = Vec::new();
        for (j, &t) in self.dom.nbr[c * m..(c + 1) * m].iter().enumerate() {
            if t < ESCAPED {
                let mut w = T::zero();
                w.add_mul(&self.weights[j], &prev[t as usize]);
                if !w.is_zero() {
                    out.push((j, w.div(qz)));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn srw() -> Vec<Vec<i64>> {
        vec![vec![1], vec![-1]]
    }

    #[test]
    fn domain_codes() {
        let cone = Cone::half_line();
        let dom = LatticeDomain::new(&cone, &srw(), vec![-2], vec![3], 1000).unwrap();
        assert_eq!(dom.cells(), 3);
        let c1 = dom.cell(&[1]).unwrap();
        assert_eq!(dom.neighbors(c1)[1], KILLED);
        let c3 = dom.cell(&[3]).unwrap();
        assert_eq!(dom.neighbors(c3)[0], ESCAPED);
        assert!(dom.cell(&[0]).is_none());
        assert!(matches!(
            LatticeDomain::new(&cone, &srw(), vec![0], vec![100], 10),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn forward_matches_brute_force() {
        let cone = Cone::half_line();
        let dom = LatticeDomain::full_reach(&cone, &srw(), &[1], 2, 1000).unwrap();
        let mut f = ForwardDp::new(&dom, vec![0.5, 0.5], &[1]).unwrap();
        f.step();
        f.step();
        assert_eq!(f.total(), 0.5);
        assert_eq!(f.at(&[1]), 0.25);
        assert_eq!(f.escaped, 0.0);
    }

    #[test]
    fn table_recurrence_and_monotone() {
        let cone = Cone::half_line();
        let dom = LatticeDomain::full_reach(&cone, &srw(), &[1], 8, 1000).unwrap();
        let half = BigRational::new(1.into(), 2.into());
        let t = SurvivalTable::build(dom, vec![half.clone(), half], 8, 1_000_000).unwrap();
        assert_eq!(t.q(2, &[1]).unwrap(), BigRational::new(1.into(), 2.into()));
        assert!(Weight::is_zero(&t.q(3, &[0]).unwrap()));
        for k in 0..8 {
            assert!(t.q(k + 1, &[2]).unwrap() <= t.q(k, &[2]).unwrap());
        }
        let tr = t.transition(1, &[1]).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(One::is_one(&tr[0].1));
    }

    #[test]
    fn counts_in_big_integers() {
        let cone = Cone::half_line();
        let dom = LatticeDomain::full_reach(&cone, &srw(), &[1], 6, 1000).unwrap();
        let one = <BigUint as One>::one();
        let mut f = ForwardDp::new(&dom, vec![one.clone(), one], &[1]).unwrap();
        for _ in 0..6 {
            f.step();
        }
        assert_eq!(f.at(&[1]), BigUint::from(5u32));
    }
}
