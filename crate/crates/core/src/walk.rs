//! Lattice step laws, their moments and whitening, the cone transported by
//! the whitening map, lattice assumptions, Cramér tilting and path sampling.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::cone::{spectral_data, Cone, ExtensionParams, SpectralData};
use crate::error::{check_dim, Error, Result};
use crate::lattice::{normal_of, IntLattice};

/// Tolerance for the sum of probabilities and for zero-mean checks.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance for "covariance is the identity".
pub const NORMALIZED_TOL: f64 = 1e-10;
/// delta in the moment requirement alpha = max(p, 2 + delta).
pub const MOMENT_DELTA: f64 = 0.1;

/// A finitely supported law on Z^d.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    dim: usize,
    support: Vec<Vec<i64>>,
    probs: Vec<f64>,
    exact: Vec<BigRational>,
}

impl StepDistribution {
    /// Law with floating-point probabilities. Exact weights are the binary
    /// expansions of the floats, renormalized.
    pub fn new(support: Vec<Vec<i64>>, probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidSteps("non-finite probability".into()));
        }
        let exact = probs
            .iter()
            .map(|&p| BigRational::from_float(p).unwrap_or_else(BigRational::zero))
            .collect();
        Self::build(support, exact, Some(probs))
    }

    pub fn from_rationals(support: Vec<Vec<i64>>, probs: Vec<BigRational>) -> Result<Self> {
        Self::build(support, probs, None)
    }

    /// Uniform law on a multiset: a step listed k times gets weight k/N.
    pub fn from_multiset(steps: &[Vec<i64>]) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidSteps("empty step set".into()));
        }
        let n = BigInt::from(steps.len());
        let mut merged: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        let mut order = Vec::new();
        for s in steps {
            let c = merged.entry(s.clone()).or_insert(0);
            if *c == 0 {
                order.push(s.clone());
            }
            *c += 1;
        }
        let probs = order
            .iter()
            .map(|s| BigRational::new(BigInt::from(merged[s]), n.clone()))
            .collect();
        Self::build(order, probs, None)
    }

    fn build(support: Vec<Vec<i64>>, exact: Vec<BigRational>, floats: Option<Vec<f64>>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidSteps("empty support".into()));
        }
        if support.len() != exact.len() {
            return Err(Error::InvalidSteps(format!(
                "{} steps but {} probabilities",
                support.len(),
                exact.len()
            )));
        }
        let dim = support[0].len();
        if dim == 0 {
            return Err(Error::InvalidSteps("zero-dimensional steps".into()));
        }
        for s in &support {
            check_dim(dim, s.len())?;
        }
        let mut seen = std::collections::HashSet::new();
        for s in &support {
            if !seen.insert(s) {
                return Err(Error::InvalidSteps(format!("duplicate step {s:?}")));
            }
        }
        if exact.iter().any(|p| !p.is_positive()) {
            return Err(Error::InvalidSteps("probabilities must be positive".into()));
        }
        let probs: Vec<f64> = match floats {
            Some(f) => f,
            None => exact.iter().map(rational_to_f64).collect(),
        };
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidSteps(format!("probabilities sum to {total}")));
        }
        let exact_total = exact.iter().fold(BigRational::zero(), |a, b| a + b);
        let exact = if exact_total.is_one() {
            exact
        } else {
            exact.into_iter().map(|p| p / &exact_total).collect()
        };
        Ok(StepDistribution {
            dim,
            support,
            probs,
            exact,
        })
    }

    /// Parse a step file: one step per line, `dx_1 .. dx_d [prob]`, `#`
    /// comments. Without probabilities each line has weight 1/lines, so
    /// repeated lines add multiplicity.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let rows = parse_rows(text, dim)?;
        let with_prob = rows.iter().filter(|r| r.1.is_some()).count();
        if with_prob == 0 {
            let steps: Vec<Vec<i64>> = rows.into_iter().map(|r| r.0).collect();
            return Self::from_multiset(&steps);
        }
        if with_prob != rows.len() {
            return Err(Error::Parse("either every step has a probability or none does".into()));
        }
        let mut merged: BTreeMap<Vec<i64>, BigRational> = BTreeMap::new();
        let mut order = Vec::new();
        for (s, p) in rows {
            let p = p.unwrap();
            match merged.get_mut(&s) {
                Some(q) => *q += p,
                None => {
                    order.push(s.clone());
                    merged.insert(s, p);
                }
            }
        }
        let probs = order.iter().map(|s| merged[s].clone()).collect();
        Self::from_rationals(order, probs)
    }

    pub fn from_file(path: &std::path::Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::IoFailure(format!("{}: {e}", path.display())))?;
        Self::parse(&text, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[Vec<i64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn exact_probs(&self) -> &[BigRational] {
        &self.exact
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Law of -X.
    pub fn negated(&self) -> StepDistribution {
        StepDistribution {
            dim: self.dim,
            support: self.support.iter().map(|s| s.iter().map(|v| -v).collect()).collect(),
            probs: self.probs.clone(),
            exact: self.exact.clone(),
        }
    }

    /// Largest Euclidean step length.
    pub fn max_norm(&self) -> f64 {
        self.support
            .iter()
            .map(|s| s.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest coordinate magnitude of any step.
    pub fn max_abs(&self) -> i64 {
        self.support.iter().flatten().map(|v| v.abs()).max().unwrap_or(0)
    }
}

impl fmt::Display for StepDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, p) in self.support.iter().zip(&self.exact) {
            let coords: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{} {}", coords.join(" "), p)?;
        }
        Ok(())
    }
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fall back to scaled integer division for huge numerators/denominators.
        let shift = r.denom().bits().max(r.numer().bits()) as i64 - 60;
        let n = (r.numer() >> shift.max(0) as usize).to_f64().unwrap_or(0.0);
        let d = (r.denom() >> shift.max(0) as usize).to_f64().unwrap_or(1.0);
        n / d
    })
}

type Row = (Vec<i64>, Option<BigRational>);

fn parse_rows(text: &str, dim: usize) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != dim && toks.len() != dim + 1 {
            return Err(Error::Parse(format!(
                "line {}: expected {dim} coordinates and an optional probability, got {} fields",
                ln + 1,
                toks.len()
            )));
        }
        let step = toks[..dim]
            .iter()
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad coordinate {t:?}", ln + 1)))
            })
            .collect::<Result<Vec<i64>>>()?;
        let prob = match toks.get(dim) {
            Some(t) => Some(
                parse_prob(t).ok_or_else(|| Error::Parse(format!("line {}: bad probability {t:?}", ln + 1)))?,
            ),
            None => None,
        };
        rows.push((step, prob));
    }
    if rows.is_empty() {
        return Err(Error::Parse("no steps found".into()));
    }
    Ok(rows)
}

/// Exact parse of `a/b`, plain decimals, or (inexactly) scientific notation.
fn parse_prob(t: &str) -> Option<BigRational> {
    if let Some((a, b)) = t.split_once('/') {
        let a: BigInt = a.trim().parse().ok()?;
        let b: BigInt = b.trim().parse().ok()?;
        if b.is_zero() {
            return None;
        }
        return Some(BigRational::new(a, b));
    }
    if t.contains(['e', 'E']) {
        return BigRational::from_float(t.parse::<f64>().ok()?);
    }
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if frac.chars().any(|c| !c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().ok()?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(num, den))
}

/// Parse a step multiset (no probabilities) for path counting.
pub fn parse_multiset(text: &str, dim: usize) -> Result<Vec<Vec<i64>>> {
    let rows = parse_rows(text, dim)?;
    if rows.iter().any(|r| r.1.is_some()) {
        return Err(Error::Parse("step multisets take no probabilities".into()));
    }
    Ok(rows.into_iter().map(|r| r.0).collect())
}

/// Mean vector and covariance matrix.
pub fn moments(dist: &StepDistribution) -> (Vec<f64>, DMatrix<f64>) {
    let d = dist.dim;
    let mut mean = vec![0.0; d];
    for (s, &p) in dist.support.iter().zip(&dist.probs) {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += p * v as f64;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (s, &p) in dist.support.iter().zip(&dist.probs) {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += p * (s[i] as f64 - mean[i]) * (s[j] as f64 - mean[j]);
            }
        }
    }
    (mean, cov)
}

/// Symmetric positive-definite inverse square root of a covariance matrix.
pub fn whitening_matrix(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = cov.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if eig.eigenvalues.iter().any(|&l| l <= 1e-12 * top.max(1.0)) {
        return Err(Error::SingularCovariance);
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let m = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    // Symmetrize away rounding and snap near-integers (e.g. sqrt 2 I stays exact-ish).
    let m = (&m + m.transpose()) * 0.5;
    Ok(m.map(|v| if (v - v.round()).abs() < 1e-15 { v.round() } else { v }))
}

/// Whitening map M with M X of identity covariance.
pub fn whiten(dist: &StepDistribution) -> Result<DMatrix<f64>> {
    let (mean, cov) = moments(dist);
    if mean.iter().any(|m| m.abs() > PROB_TOL) {
        return Err(Error::NonzeroMean);
    }
    whitening_matrix(&cov)
}

/// A step law together with its cone and the whitened picture.
#[derive(Debug, Clone)]
pub struct WalkSpec {
    pub cone: Cone,
    pub dist: StepDistribution,
    pub whitening: DMatrix<f64>,
    pub image_cone: Cone,
    pub spectral: SpectralData,
}

impl WalkSpec {
    pub fn new(cone: Cone, dist: StepDistribution) -> Result<WalkSpec> {
        check_dim(cone.dim(), dist.dim())?;
        let whitening = whiten(&dist)?;
        let d = cone.dim();
        let image_cone = if whitening == DMatrix::identity(d, d) {
            cone.clone()
        } else {
            Cone::image(cone.clone(), whitening.clone())?
        };
        let spectral = spectral_data(&image_cone, crate::bm::DEFAULT_TRUNCATION)?;
        Ok(WalkSpec {
            cone,
            dist,
            whitening,
            image_cone,
            spectral,
        })
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    pub fn p(&self) -> f64 {
        self.spectral.p
    }

    /// M z.
    pub fn map(&self, z: &[f64]) -> Vec<f64> {
        if self.image_cone == self.cone {
            return z.to_vec();
        }
        (&self.whitening * DVector::from_column_slice(z)).as_slice().to_vec()
    }

    pub fn map_lattice(&self, z: &[i64]) -> Vec<f64> {
        let zf: Vec<f64> = z.iter().map(|&v| v as f64).collect();
        self.map(&zf)
    }

    /// u of the image cone evaluated at M z.
    pub fn u(&self, z: &[i64]) -> f64 {
        self.spectral.u(&self.map_lattice(z))
    }

    pub fn u_real(&self, z: &[f64]) -> f64 {
        self.spectral.u(&self.map(z))
    }

    /// The extended function v of the image cone evaluated at M z.
    pub fn v(&self, z: &[i64], params: &ExtensionParams) -> f64 {
        self.spectral.v(&self.map_lattice(z), params)
    }

    pub fn contains(&self, z: &[i64]) -> bool {
        self.cone.contains_lattice(z)
    }

    pub fn det_whitening(&self) -> f64 {
        self.whitening.determinant().abs()
    }

    /// The walk driven by -X in the same cone.
    pub fn reflected(&self) -> Result<WalkSpec> {
        WalkSpec::new(self.cone.clone(), self.dist.negated())
    }

    pub fn default_params(&self) -> ExtensionParams {
        ExtensionParams::default_for(&self.spectral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aperiodicity {
    Yes,
    No,
    Unknown,
}

impl fmt::Display for Aperiodicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Aperiodicity::Yes => "true",
            Aperiodicity::No => "false",
            Aperiodicity::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub normalized: bool,
    pub moment_ok: bool,
    pub strongly_aperiodic: Aperiodicity,
    pub alpha_required: f64,
    /// Index in Z^d of the lattice generated by the support.
    pub support_index: Option<i64>,
    /// Index in Z^d of the lattice generated by support differences.
    pub difference_index: Option<i64>,
}

/// Lattice facts about a step law.
#[derive(Debug, Clone)]
pub struct LatticeInfo {
    /// Lattice generated by the support.
    pub generated: Option<IntLattice>,
    /// Lattice generated by differences s - s_0.
    pub differences: Option<IntLattice>,
    pub base_step: Vec<i64>,
}

impl LatticeInfo {
    pub fn of(dist: &StepDistribution) -> LatticeInfo {
        let d = dist.dim();
        let s0 = dist.support()[0].clone();
        let diffs: Vec<Vec<i64>> = dist
            .support()
            .iter()
            .map(|s| s.iter().zip(&s0).map(|(a, b)| a - b).collect())
            .collect();
        LatticeInfo {
            generated: IntLattice::generated_by(dist.support(), d),
            differences: IntLattice::generated_by(&diffs, d),
            base_step: s0,
        }
    }

    /// Strong aperiodicity: every translate x + supp generates the same
    /// group as supp, i.e. the difference lattice equals the generated one.
    pub fn aperiodicity(&self) -> Aperiodicity {
        match (&self.generated, &self.differences) {
            (Some(g), Some(l)) if g.index() == l.index() => Aperiodicity::Yes,
            _ => Aperiodicity::No,
        }
    }

    /// Can x + S(n) = y happen for lattice reasons (ignoring the cone)?
    pub fn reachable(&self, x: &[i64], y: &[i64], n: usize) -> bool {
        let Some(l) = &self.differences else {
            return true;
        };
        let v: Vec<i64> = y
            .iter()
            .zip(x)
            .zip(&self.base_step)
            .map(|((a, b), s)| a - b - n as i64 * s)
            .collect();
        l.contains(&v)
    }

    /// Covolume of the difference lattice (points per unit volume is 1/covolume).
    pub fn covolume(&self) -> Option<f64> {
        self.differences.as_ref().map(|l| l.index() as f64)
    }
}

pub fn check_assumptions(spec: &WalkSpec) -> AssumptionReport {
    let (mean, cov) = moments(&spec.dist);
    let d = spec.dim();
    let normalized = mean.iter().all(|m| m.abs() <= NORMALIZED_TOL)
        && (0..d).all(|i| {
            (0..d).all(|j| {
                let want = if i == j { 1.0 } else { 0.0 };
                (cov[(i, j)] - want).abs() <= NORMALIZED_TOL
            })
        });
    let info = LatticeInfo::of(&spec.dist);
    AssumptionReport {
        normalized,
        moment_ok: true,
        strongly_aperiodic: info.aperiodicity(),
        alpha_required: spec.p().max(2.0 + MOMENT_DELTA),
        support_index: info.generated.as_ref().map(|l| l.index() as i64),
        difference_index: info.differences.as_ref().map(|l| l.index() as i64),
    }
}

#[derive(Debug, Clone)]
pub struct TiltResult {
    pub h0: Vec<f64>,
    pub r_h0: f64,
    pub tilted: StepDistribution,
    /// N, the size of the step multiset.
    pub n_steps: usize,
}

fn laplace(steps: &[Vec<f64>], h: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
    let d = h.len();
    let n = steps.len() as f64;
    let mut r = 0.0;
    let mut g = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    for s in steps {
        let w = s.iter().zip(h).map(|(a, b)| a * b).sum::<f64>().exp() / n;
        r += w;
        for i in 0..d {
            g[i] += w * s[i];
            for j in 0..d {
                hess[(i, j)] += w * s[i] * s[j];
            }
        }
    }
    (r, g, hess)
}

/// True when all steps lie in some closed half-space through 0.
fn in_half_space(steps: &[Vec<i64>], d: usize) -> bool {
    let mut distinct: Vec<Vec<i64>> = steps.iter().filter(|s| s.iter().any(|&v| v != 0)).cloned().collect();
    distinct.sort();
    distinct.dedup();
    if IntLattice::generated_by(&distinct, d).is_none() {
        // Rank deficient: contained in a hyperplane.
        return true;
    }
    let k = d - 1;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let chosen: Vec<Vec<i64>> = idx.iter().map(|&i| distinct[i].clone()).collect();
        if let Some(nrm) = normal_of(&chosen, d) {
            let dots: Vec<i128> = steps
                .iter()
                .map(|s| s.iter().zip(&nrm).map(|(&a, &b)| a as i128 * b as i128).sum())
                .collect();
            if dots.iter().all(|&v| v >= 0) || dots.iter().all(|&v| v <= 0) {
                return true;
            }
        }
        // Next k-combination of distinct.len().
        let m = distinct.len();
        let mut i = k;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            if idx[i] < m - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Minimize R(h) = N^-1 sum e^{(h, s_i)} by damped Newton from h = 0 and
/// return the tilted law e^{(h0, s)}/(N R(h0)).
pub fn cramer_tilt(steps: &[Vec<i64>]) -> Result<TiltResult> {
    if steps.is_empty() {
        return Err(Error::InvalidSteps("empty step set".into()));
    }
    let d = steps[0].len();
    for s in steps {
        check_dim(d, s.len())?;
    }
    if in_half_space(steps, d) {
        return Err(Error::NoInteriorMinimum);
    }
    let sf: Vec<Vec<f64>> = steps.iter().map(|s| s.iter().map(|&v| v as f64).collect()).collect();
    let mut h = vec![0.0; d];
    let (mut r, mut g, mut hess) = laplace(&sf, &h);
    for _ in 0..200 {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn <= 1e-13 {
            break;
        }
        let step = hess
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(&g))
            .ok_or(Error::SingularCovariance)?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = h.iter().zip(step.iter()).map(|(a, b)| a - t * b).collect();
            let (rc, gc, hc) = laplace(&sf, &cand);
            let gcn = gc.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rc < r || (rc <= r && gcn < gn) {
                h = cand;
                (r, g, hess) = (rc, gc, hc);
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(gn <= 1e-12) {
        return Err(Error::NoInteriorMinimum);
    }
    let n = steps.len() as f64;
    let mut merged: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for s in steps {
        *merged.entry(s.clone()).or_insert(0) += 1;
    }
    let support: Vec<Vec<i64>> = merged.keys().cloned().collect();
    let probs: Vec<f64> = support
        .iter()
        .map(|s| {
            let e: f64 = s.iter().zip(&h).map(|(&a, b)| a as f64 * b).sum();
            merged[s] as f64 * e.exp() / (n * r)
        })
        .collect();
    let total: f64 = probs.iter().sum();
    let probs = probs.into_iter().map(|p| p / total).collect();
    Ok(TiltResult {
        h0: h,
        r_h0: r,
        tilted: StepDistribution::new(support, probs)?,
        n_steps: steps.len(),
    })
}

/// Alias-table sampler for one step law.
#[derive(Debug, Clone)]
pub struct StepSampler {
    support: Vec<Vec<i64>>,
    alias: WeightedAliasIndex<f64>,
}

impl StepSampler {
    pub fn new(dist: &StepDistribution) -> StepSampler {
        StepSampler {
            support: dist.support.clone(),
            alias: WeightedAliasIndex::new(dist.probs.clone()).expect("validated probabilities"),
        }
    }

    pub fn index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> &[i64] {
        &self.support[self.alias.sample(rng)]
    }

    pub fn path<R: Rng + ?Sized>(&self, x: &[i64], n: usize, rng: &mut R) -> Vec<Vec<i64>> {
        let mut out = Vec::with_capacity(n + 1);
        let mut z = x.to_vec();
        out.push(z.clone());
        for _ in 0..n {
            for (a, b) in z.iter_mut().zip(self.step(rng)) {
                *a += b;
            }
            out.push(z.clone());
        }
        out
    }
}

/// Positions x, x + S(1), ..., x + S(n).
pub fn sample_path<R: Rng + ?Sized>(dist: &StepDistribution, x: &[i64], n: usize, rng: &mut R) -> Result<Vec<Vec<i64>>> {
    check_dim(dist.dim(), x.len())?;
    Ok(StepSampler::new(dist).path(x, n, rng))
}

/// counts[i][j] = #{paths: |S(ns[i])| > levels[i][j]} (Euclidean norm)
/// among `samples` free walks from the origin.
pub fn norm_exceedances(
    dist: &StepDistribution,
    ns: &[usize],
    levels: &[Vec<f64>],
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Vec<u64>>> {
    if levels.len() != ns.len() {
        return Err(Error::InvalidParams("one level list per n".into()));
    }
    let sampler = StepSampler::new(dist);
    let mut order: Vec<usize> = (0..ns.len()).collect();
    order.sort_by_key(|&i| ns[i]);
    let d = dist.dim();
    let chunks = crate::par::chunked(samples, crate::par::CHUNK, seed, workers, |_, len, rng| {
        let mut c: Vec<Vec<u64>> = levels.iter().map(|l| vec![0u64; l.len()]).collect();
        let mut z = vec![0i64; d];
        for _ in 0..len {
            z.iter_mut().for_each(|v| *v = 0);
            let mut t = 0;
            for &i in &order {
                while t < ns[i] {
                    for (a, b) in z.iter_mut().zip(sampler.step(rng)) {
                        *a += b;
                    }
                    t += 1;
                }
                let r = z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
                for (j, &x) in levels[i].iter().enumerate() {
                    if r > x {
                        c[i][j] += 1;
                    }
                }
            }
        }
        c
    })?;
    let mut out: Vec<Vec<u64>> = levels.iter().map(|l| vec![0u64; l.len()]).collect();
    for c in chunks {
        for (row, cr) in out.iter_mut().zip(c) {
            for (a, b) in row.iter_mut().zip(cr) {
                *a += b;
            }
        }
    }
    Ok(out)
}
