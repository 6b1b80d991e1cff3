//! Survival and point-mass dynamic programs, walks conditioned to stay in
//! the cone (exact finite-horizon and Doob h-transform), and verifiers for
//! the integral, local and bridge limit laws.

use num_rational::BigRational;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::cone::Cone;
use crate::dp::{FieldWeight, ForwardDp, LatticeDomain, Radius, SurvivalTable, Weight, DEFAULT_BUDGET};
use crate::error::{check_dim, Error, Result};
use crate::harmonic::HarmonicTable;
use crate::par;
use crate::special::gamma;
use crate::stats::{gof_chi2, Chi2, PolarPartition};
use crate::walk::{Aperiodicity, LatticeInfo, StepDistribution, StepSampler, WalkSpec};

/// Scaled radius beyond which target atoms are not enumerated.
pub const ATOM_RADIUS: f64 = 6.0;
/// Fewest endpoints accepted by the distributional verifiers.
pub const MIN_CLT_SAMPLES: usize = 10_000;

/// A probability computed on a truncated domain: `lower` counts escaped
/// mass as killed, `upper` as surviving (or as able to reach y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub escaped: f64,
}

impl Bracket {
    pub fn value(&self) -> f64 {
        self.lower
    }

    pub fn exact(&self) -> bool {
        self.escaped == 0.0
    }
}

fn check_start(cone: &Cone, dist: &StepDistribution, x: &[i64]) -> Result<()> {
    check_dim(cone.dim(), dist.dim())?;
    check_dim(cone.dim(), x.len())?;
    if !cone.contains_lattice(x) {
        return Err(Error::NotInCone(x.iter().map(|&v| v as f64).collect()));
    }
    Ok(())
}

/// q_n(x) = P(tau_x > n).
pub fn survival_dp(cone: &Cone, dist: &StepDistribution, x: &[i64], n: usize, radius: Radius) -> Result<Bracket> {
    Ok(survival_series(cone, dist, x, &[n], radius)?[0].1)
}

/// q_k(x) at each checkpoint k from a single forward pass.
pub fn survival_series(
    cone: &Cone,
    dist: &StepDistribution,
    x: &[i64],
    checkpoints: &[usize],
    radius: Radius,
) -> Result<Vec<(usize, Bracket)>> {
    check_start(cone, dist, x)?;
    let n_max = checkpoints.iter().copied().max().unwrap_or(0);
    let dom = radius.domain(cone, dist.support(), x, n_max, DEFAULT_BUDGET)?;
    let mut f = ForwardDp::new(&dom, dist.probs().to_vec(), x)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut sorted: Vec<usize> = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for k in sorted {
        while f.time < k {
            f.step();
        }
        let lower = f.total();
        out.push((
            k,
            Bracket {
                lower,
                upper: lower + f.escaped,
                escaped: f.escaped,
            },
        ));
    }
    // Report in the caller's order.
    Ok(checkpoints
        .iter()
        .map(|k| *out.iter().find(|(j, _)| j == k).unwrap())
        .collect())
}

/// q_n(x) in exact rational arithmetic on the full reachable box.
pub fn survival_exact(cone: &Cone, dist: &StepDistribution, x: &[i64], n: usize) -> Result<BigRational> {
    check_start(cone, dist, x)?;
    let dom = LatticeDomain::full_reach(cone, dist.support(), x, n, DEFAULT_BUDGET)?;
    let mut f = ForwardDp::new(&dom, dist.exact_probs().to_vec(), x)?;
    for _ in 0..n {
        f.step();
    }
    Ok(f.total())
}

/// P(x + S(n) = y, tau_x > n).
pub fn pointmass_dp(cone: &Cone, dist: &StepDistribution, x: &[i64], y: &[i64], n: usize, radius: Radius) -> Result<Bracket> {
    Ok(pointmass_series(cone, dist, x, y, &[n], radius)?[0].1)
}

pub fn pointmass_series(
    cone: &Cone,
    dist: &StepDistribution,
    x: &[i64],
    y: &[i64],
    checkpoints: &[usize],
    radius: Radius,
) -> Result<Vec<(usize, Bracket)>> {
    check_start(cone, dist, x)?;
    check_dim(cone.dim(), y.len())?;
    let n_max = checkpoints.iter().copied().max().unwrap_or(0);
    let dom = radius.domain(cone, dist.support(), x, n_max, DEFAULT_BUDGET)?;
    let mut f = ForwardDp::new(&dom, dist.probs().to_vec(), x)?;
    let mut sorted: Vec<usize> = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut vals = Vec::new();
    for k in sorted {
        while f.time < k {
            f.step();
        }
        let lower = f.at(y);
        vals.push((
            k,
            Bracket {
                lower,
                upper: lower + f.escaped,
                escaped: f.escaped,
            },
        ));
    }
    Ok(checkpoints
        .iter()
        .map(|k| *vals.iter().find(|(j, _)| j == k).unwrap())
        .collect())
}

/// The same probability through the reversed walk -X started at y.
pub fn pointmass_reversed(cone: &Cone, dist: &StepDistribution, x: &[i64], y: &[i64], n: usize, radius: Radius) -> Result<Bracket> {
    pointmass_dp(cone, &dist.negated(), y, x, n, radius)
}

pub fn pointmass_exact(cone: &Cone, dist: &StepDistribution, x: &[i64], y: &[i64], n: usize) -> Result<BigRational> {
    check_start(cone, dist, x)?;
    let dom = LatticeDomain::full_reach(cone, dist.support(), x, n, DEFAULT_BUDGET)?;
    let mut f = ForwardDp::new(&dom, dist.exact_probs().to_vec(), x)?;
    for _ in 0..n {
        f.step();
    }
    Ok(f.at(y))
}

/// Layered table q_k(z), k <= n, on the box chosen by `radius` around x.
pub fn survival_table(cone: &Cone, dist: &StepDistribution, x: &[i64], n: usize, radius: Radius) -> Result<SurvivalTable<f64>> {
    check_start(cone, dist, x)?;
    let dom = radius.domain(cone, dist.support(), x, n, DEFAULT_BUDGET)?;
    SurvivalTable::build(dom, dist.probs().to_vec(), n, DEFAULT_BUDGET)
}

pub fn survival_table_exact(cone: &Cone, dist: &StepDistribution, x: &[i64], n: usize) -> Result<SurvivalTable<BigRational>> {
    check_start(cone, dist, x)?;
    let dom = LatticeDomain::full_reach(cone, dist.support(), x, n, DEFAULT_BUDGET)?;
    SurvivalTable::build(dom, dist.exact_probs().to_vec(), n, DEFAULT_BUDGET)
}

/// A path of the walk conditioned on tau_x > n: from z with r steps left
/// the step s has weight p_s q_{r-1}(z+s) / q_r(z).
pub fn exact_conditioned_sampler<R: Rng + ?Sized>(
    table: &SurvivalTable<f64>,
    x: &[i64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<i64>>> {
    let dom = table.domain();
    let mut c = start_cell(table, x, n)?;
    let mut path = vec![x.to_vec()];
    for k in 0..n {
        c = table.draw(n - k, c, rng.random::<f64>()).ok_or(Error::ZeroSurvival)?;
        path.push(dom.point(c).to_vec());
    }
    Ok(path)
}

fn start_cell<T: Weight>(table: &SurvivalTable<T>, x: &[i64], n: usize) -> Result<usize> {
    if n > table.horizon() {
        return Err(Error::InvalidParams(format!("horizon {} below {n}", table.horizon())));
    }
    let c = table
        .domain()
        .cell(x)
        .ok_or_else(|| Error::NotInCone(x.iter().map(|&v| v as f64).collect()))?;
    if table.layer(n)[c].is_zero() {
        return Err(Error::ZeroSurvival);
    }
    Ok(c)
}

/// Endpoints x + S(n) of `samples` conditioned paths, chunked over
/// seeded substreams.
pub fn conditioned_endpoints(
    table: &SurvivalTable<f64>,
    x: &[i64],
    n: usize,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Vec<i64>>> {
    let c0 = start_cell(table, x, n)?;
    let chunks = par::chunked(samples, par::CHUNK, seed, workers, |_, len, rng| {
        (0..len)
            .map(|_| {
                let mut c = c0;
                for k in 0..n {
                    c = table.draw(n - k, c, rng.random::<f64>())?;
                }
                Some(table.domain().point(c).to_vec())
            })
            .collect::<Option<Vec<_>>>()
    })?;
    let mut out = Vec::with_capacity(samples);
    for ch in chunks {
        out.extend(ch.ok_or(Error::ZeroSurvival)?);
    }
    Ok(out)
}

/// Endpoints of unconditioned paths that survive n steps, until `samples`
/// survivors are collected. Returns the survivors and the number of paths tried.
pub fn rejection_endpoints(
    cone: &Cone,
    dist: &StepDistribution,
    x: &[i64],
    n: usize,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<(Vec<Vec<i64>>, u64)> {
    check_start(cone, dist, x)?;
    let sampler = StepSampler::new(dist);
    // Each chunk draws until it has its quota of survivors.
    let chunks = par::chunked(samples, par::CHUNK, seed, workers, |_, len, rng| {
        let mut got = Vec::with_capacity(len);
        let mut tried = 0u64;
        let mut z = x.to_vec();
        while got.len() < len {
            tried += 1;
            z.copy_from_slice(x);
            let mut alive = true;
            for _ in 0..n {
                for (a, b) in z.iter_mut().zip(sampler.step(rng)) {
                    *a += b;
                }
                if !cone.contains_lattice(&z) {
                    alive = false;
                    break;
                }
            }
            if alive {
                got.push(z.clone());
            }
        }
        (got, tried)
    })?;
    let mut out = Vec::with_capacity(samples);
    let mut tried = 0;
    for (g, t) in chunks {
        out.extend(g);
        tried += t;
    }
    Ok((out, tried))
}

/// Probability that the exact conditioned sampler produces `path`,
/// multiplied out step by step.
pub fn sampler_path_probability<T: FieldWeight>(table: &SurvivalTable<T>, path: &[Vec<i64>]) -> Result<T> {
    let n = path.len().saturating_sub(1);
    let steps = table.domain().steps();
    let mut prob = T::one();
    for k in 0..n {
        let z = &path[k];
        let s: Vec<i64> = path[k + 1].iter().zip(z).map(|(a, b)| a - b).collect();
        let j = steps
            .iter()
            .position(|t| *t == s)
            .ok_or_else(|| Error::InvalidSteps(format!("{s:?} is not a step")))?;
        let row = table.transition(n - k, z)?;
        let p = row.iter().find(|(i, _)| *i == j).map(|(_, p)| p.clone()).unwrap_or_else(T::zero);
        let mut next = T::zero();
        next.add_mul(&prob, &p);
        prob = next;
    }
    Ok(prob)
}

/// Every n-step path from x that stays in K, with its probability.
pub fn surviving_paths(cone: &Cone, dist: &StepDistribution, x: &[i64], n: usize) -> Result<Vec<(Vec<Vec<i64>>, BigRational)>> {
    check_start(cone, dist, x)?;
    let mut out = Vec::new();
    let mut path = vec![x.to_vec()];
    fn rec(
        cone: &Cone,
        dist: &StepDistribution,
        n: usize,
        path: &mut Vec<Vec<i64>>,
        prob: BigRational,
        out: &mut Vec<(Vec<Vec<i64>>, BigRational)>,
    ) {
        if path.len() == n + 1 {
            out.push((path.clone(), prob));
            return;
        }
        let z = path.last().unwrap().clone();
        for (s, p) in dist.support().iter().zip(dist.exact_probs()) {
            let t: Vec<i64> = z.iter().zip(s).map(|(a, b)| a + b).collect();
            if cone.contains_lattice(&t) {
                path.push(t);
                rec(cone, dist, n, path, &prob * p, out);
                path.pop();
            }
        }
    }
    rec(cone, dist, n, &mut path, BigRational::from_integer(1.into()), &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTransformPath {
    pub path: Vec<Vec<i64>>,
    /// Largest |sum_s p_s V(z+s)/V(z) - 1| over visited states, i.e. the
    /// relative harmonicity residual removed by renormalizing rows.
    pub max_defect: f64,
}

/// Markov chain with kernel p_{z'-z} V(z')/V(z) on K, rows renormalized.
pub fn htransform_sampler<R: Rng + ?Sized>(
    table: &HarmonicTable,
    spec: &WalkSpec,
    x: &[i64],
    n: usize,
    rng: &mut R,
) -> Result<HTransformPath> {
    check_dim(spec.dim(), x.len())?;
    let mut z = x.to_vec();
    let mut path = vec![z.clone()];
    let mut max_defect: f64 = 0.0;
    let mut w = Vec::with_capacity(spec.dist.len());
    for _ in 0..n {
        let (row, defect) = htransform_row(table, spec, &z)?;
        max_defect = max_defect.max(defect);
        w.clear();
        w.extend(row.iter().map(|(_, p)| *p));
        let u: f64 = rng.random::<f64>();
        let mut acc = 0.0;
        let mut pick = row.len() - 1;
        for (i, p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        z = row[pick].0.clone();
        path.push(z.clone());
    }
    Ok(HTransformPath { path, max_defect })
}

/// Renormalized h-transform row at z and its defect.
pub fn htransform_row(table: &HarmonicTable, spec: &WalkSpec, z: &[i64]) -> Result<(Vec<(Vec<i64>, f64)>, f64)> {
    let vz = table.value(z).ok_or_else(|| Error::MissingNeighbor(z.to_vec()))?;
    if !(vz > 0.0) {
        return Err(Error::NonpositiveV(z.to_vec()));
    }
    let mut row = Vec::new();
    let mut total = 0.0;
    for (s, &p) in spec.dist.support().iter().zip(spec.dist.probs()) {
        let t: Vec<i64> = z.iter().zip(s).map(|(a, b)| a + b).collect();
        if spec.contains(&t) {
            let vt = table.value(&t).ok_or_else(|| Error::MissingNeighbor(t.clone()))?;
            let w = p * vt / vz;
            total += w;
            row.push((t, w));
        }
    }
    if row.is_empty() || !(total > 0.0) {
        return Err(Error::NonpositiveV(z.to_vec()));
    }
    for r in row.iter_mut() {
        r.1 /= total;
    }
    Ok((row, (total - 1.0).abs()))
}

/// Survivors at each checkpoint among `samples` independent paths.
pub fn mc_survival(
    cone: &Cone,
    dist: &StepDistribution,
    x: &[i64],
    checkpoints: &[usize],
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<(usize, u64)>> {
    check_start(cone, dist, x)?;
    let mut cps: Vec<usize> = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    let n_max = cps.last().copied().unwrap_or(0);
    let sampler = StepSampler::new(dist);
    let chunks = par::chunked(samples, 1 << 16, seed, workers, |_, len, rng| {
        let mut counts = vec![0u64; cps.len()];
        let mut z = x.to_vec();
        for _ in 0..len {
            z.copy_from_slice(x);
            let mut next = 0;
            let mut t = 0;
            loop {
                while next < cps.len() && cps[next] == t {
                    counts[next] += 1;
                    next += 1;
                }
                if t == n_max {
                    break;
                }
                for (a, b) in z.iter_mut().zip(sampler.step(rng)) {
                    *a += b;
                }
                t += 1;
                if !cone.contains_lattice(&z) {
                    break;
                }
            }
        }
        counts
    })?;
    let mut tot = vec![0u64; cps.len()];
    for c in chunks {
        for (a, b) in tot.iter_mut().zip(c) {
            *a += b;
        }
    }
    let out: Vec<(usize, u64)> = cps.into_iter().zip(tot).collect();
    Ok(checkpoints
        .iter()
        .map(|k| *out.iter().find(|(j, _)| j == k).unwrap())
        .collect())
}

/// Law of the gaps (x_2 - x_1, ..., x_d - x_{d-1}) of a walk in W_A(d):
/// the walk stays in W_A(d) exactly when its gap walk stays in the
/// positive orthant of dimension d - 1.
pub fn weyl_a_gaps(dist: &StepDistribution) -> Result<StepDistribution> {
    if dist.dim() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: dist.dim(),
        });
    }
    let mut support: Vec<Vec<i64>> = Vec::new();
    let mut probs: Vec<BigRational> = Vec::new();
    for (s, p) in dist.support().iter().zip(dist.exact_probs()) {
        let g = gaps(s);
        match support.iter().position(|t| *t == g) {
            Some(i) => probs[i] += p,
            None => {
                support.push(g);
                probs.push(p.clone());
            }
        }
    }
    StepDistribution::from_rationals(support, probs)
}

pub fn gaps(x: &[i64]) -> Vec<i64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CltTarget {
    /// H_0 u(y) e^{-|y|^2/2} on K.
    Meander,
    /// e^{-|y|^2/2} restricted to K: the wrong-density control.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub n: usize,
    pub samples: usize,
    pub chi2: Chi2,
    pub mean_radius: f64,
    pub mean_radius_se: f64,
    pub target_mean_radius: f64,
}

/// Lattice points z reachable from x in n steps, inside K, with scaled
/// whitened position w = M z / sqrt(n) of norm at most ATOM_RADIUS, and
/// weights from `weight(w)`.
fn atoms(
    spec: &WalkSpec,
    reachable: impl Fn(&[i64]) -> bool,
    n: usize,
    weight: impl Fn(&[f64]) -> f64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let d = spec.dim();
    let sq = (n as f64).sqrt();
    let inv = spec
        .whitening
        .clone()
        .try_inverse()
        .ok_or(Error::SingularCovariance)?;
    let half = (ATOM_RADIUS * sq * inv.norm()).ceil() as i64 + 1;
    let mut total: usize = 1;
    for _ in 0..d {
        total = total.saturating_mul((2 * half + 1) as usize);
    }
    if total > DEFAULT_BUDGET {
        return Err(Error::BudgetExceeded(format!("{total} candidate atoms")));
    }
    let mut out = Vec::new();
    let mut z = vec![-half; d];
    loop {
        if spec.contains(&z) && reachable(&z) {
            let w: Vec<f64> = spec.map_lattice(&z).iter().map(|v| v / sq).collect();
            if w.iter().map(|v| v * v).sum::<f64>().sqrt() <= ATOM_RADIUS {
                let m = weight(&w);
                if m > 0.0 {
                    out.push((w, m));
                }
            }
        }
        let mut i = d;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            z[i] += 1;
            if z[i] <= half {
                break;
            }
            z[i] = -half;
        }
    }
}

fn chi2_against(samples: &[Vec<f64>], atoms: &[(Vec<f64>, f64)], cells: (usize, usize)) -> Result<Chi2> {
    let part = PolarPartition::from_atoms(atoms, cells.0, cells.1);
    let probs = part.masses(atoms);
    let mut counts = vec![0u64; part.n_cells()];
    for w in samples {
        counts[part.cell(w)] += 1;
    }
    gof_chi2(&counts, &probs)
}

fn scaled(spec: &WalkSpec, zs: &[Vec<i64>], n: usize) -> Vec<Vec<f64>> {
    let sq = (n as f64).sqrt();
    zs.iter()
        .map(|z| spec.map_lattice(z).iter().map(|v| v / sq).collect())
        .collect()
}

fn norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Chi-square of scaled endpoints (M(x + S(n)))/sqrt(n) against the target
/// law on equal-mass polar cells, plus a first-moment comparison. Target
/// cell masses are lattice sums of the density over the reachable coset.
pub fn clt_verify(
    spec: &WalkSpec,
    x: &[i64],
    endpoints: &[Vec<i64>],
    n: usize,
    target: CltTarget,
    cells: (usize, usize),
) -> Result<CltReport> {
    if endpoints.len() < MIN_CLT_SAMPLES {
        return Err(Error::TooFewSamples {
            got: endpoints.len(),
            needed: MIN_CLT_SAMPLES,
        });
    }
    let info = LatticeInfo::of(&spec.dist);
    let reach = |z: &[i64]| info.reachable(x, z, n);
    let at = match target {
        CltTarget::Meander => atoms(spec, reach, n, |w| spec.spectral.u(w) * (-0.5 * w.iter().map(|v| v * v).sum::<f64>()).exp())?,
        CltTarget::Gaussian => atoms(spec, reach, n, |w| (-0.5 * w.iter().map(|v| v * v).sum::<f64>()).exp())?,
    };
    let ws = scaled(spec, endpoints, n);
    let chi2 = chi2_against(&ws, &at, cells)?;
    let mass: f64 = at.iter().map(|a| a.1).sum();
    let target_mean_radius = at.iter().map(|(w, m)| norm(w) * m).sum::<f64>() / mass;
    let radii: Vec<f64> = ws.iter().map(|w| norm(w)).collect();
    let (mean_radius, mean_radius_se) = crate::stats::mean_stderr(&radii);
    Ok(CltReport {
        n,
        samples: endpoints.len(),
        chi2,
        mean_radius,
        mean_radius_se,
        target_mean_radius,
    })
}

fn require_aperiodic(spec: &WalkSpec) -> Result<LatticeInfo> {
    let info = LatticeInfo::of(&spec.dist);
    match info.aperiodicity() {
        Aperiodicity::No => Err(Error::PeriodicWalk),
        _ => Ok(info),
    }
}

/// Points per unit volume of the whitened walk: |det M| times the
/// covolume of the lattice the walk lives on.
pub fn lattice_factor(spec: &WalkSpec, info: &LatticeInfo) -> f64 {
    spec.det_whitening() * info.covolume().unwrap_or(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LltUniformRow {
    pub n: usize,
    /// sup_y |n^{p/2+d/2} P(x+S(n)=y, tau>n)/c - kappa V(x) H_0 u(y/sqrt n) e^{-|y|^2/2n}|
    pub sup_error: f64,
    /// sup_y of the prediction, for scale.
    pub sup_prediction: f64,
    pub escaped: f64,
}

/// Uniform local limit check along a grid of n. `v_x` is V(x).
pub fn llt_uniform_verify(spec: &WalkSpec, x: &[i64], ns: &[usize], v_x: f64, radius: Radius) -> Result<Vec<LltUniformRow>> {
    let info = require_aperiodic(spec)?;
    check_start(&spec.cone, &spec.dist, x)?;
    let c = lattice_factor(spec, &info);
    let (p, d) = (spec.p(), spec.dim() as f64);
    let s = &spec.spectral;
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let dom = radius.domain(&spec.cone, spec.dist.support(), x, n_max, DEFAULT_BUDGET)?;
    let mut f = ForwardDp::new(&dom, spec.dist.probs().to_vec(), x)?;
    let mut sorted = ns.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut rows = Vec::new();
    for n in sorted {
        while f.time < n {
            f.step();
        }
        let nf = n as f64;
        let scale = nf.powf(p / 2.0 + d / 2.0) / c;
        let sq = nf.sqrt();
        let mut sup_err: f64 = 0.0;
        let mut sup_pred: f64 = 0.0;
        for (cell, m) in f.mass().iter().enumerate() {
            let z = dom.point(cell);
            if !info.reachable(x, z, n) {
                continue;
            }
            let w: Vec<f64> = spec.map_lattice(z).iter().map(|v| v / sq).collect();
            let pred = s.kappa * v_x * s.h0_const * s.u(&w) * (-0.5 * w.iter().map(|v| v * v).sum::<f64>()).exp();
            sup_err = sup_err.max((scale * m - pred).abs());
            sup_pred = sup_pred.max(pred);
        }
        rows.push(LltUniformRow {
            n,
            sup_error: sup_err,
            sup_prediction: sup_pred,
            escaped: f.escaped,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LltFixedRow {
    pub n: usize,
    pub probability: f64,
    /// rho H_0^2 V(x) V'(y) n^{-p-d/2}.
    pub predicted: f64,
    pub ratio: f64,
    /// kappa^2 (int_K u^2 e^{-|w|^2/2} dw) c V(x) V'(y) n^{-p-d/2}, the
    /// constant obtained by gluing the integral law at time n/2 to its
    /// time reversal, with c the lattice factor.
    pub glued: f64,
    pub glued_ratio: f64,
}

/// int_K u^2 e^{-|w|^2/2} dw for u normalized by int_Sigma m_1^2 = 1.
pub fn u2_gauss_integral(p: f64, d: usize) -> f64 {
    let d = d as f64;
    2f64.powf(p + d / 2.0 - 1.0) * gamma(p + d / 2.0)
}

/// Fixed-endpoint local limit: P(x+S(n)=y, tau>n) against
/// rho H_0^2 V(x) V'(y) n^{-p-d/2}.
pub fn llt_fixed_verify(
    spec: &WalkSpec,
    x: &[i64],
    y: &[i64],
    ns: &[usize],
    v_x: f64,
    v_prime_y: f64,
    radius: Radius,
) -> Result<Vec<LltFixedRow>> {
    let info = require_aperiodic(spec)?;
    let c = lattice_factor(spec, &info);
    let s = &spec.spectral;
    let (p, d) = (s.p, spec.dim());
    let series = pointmass_series(&spec.cone, &spec.dist, x, y, ns, radius)?;
    Ok(series
        .into_iter()
        .map(|(n, b)| {
            let decay = (n as f64).powf(-p - d as f64 / 2.0);
            let predicted = s.rho_const * s.h0_const * s.h0_const * v_x * v_prime_y * decay;
            let glued = s.kappa * s.kappa * u2_gauss_integral(p, d) * c * v_x * v_prime_y * decay;
            LltFixedRow {
                n,
                probability: b.value(),
                predicted,
                ratio: b.value() / predicted,
                glued,
                glued_ratio: b.value() / glued,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    /// P(x + S(n) = y, tau > n), the normalizing mass of the bridge.
    pub bridge_mass: f64,
    pub chi2: Chi2,
    /// For d = 2: (#{w_1 > w_2} - #{w_1 < w_2}) / sqrt(#{w_1 != w_2}).
    pub swap_z: Option<f64>,
    #[serde(skip)]
    pub midpoints: Vec<Vec<i64>>,
}

/// Exact bridge midpoints: the law of x + S(m), m = round(t n), given
/// x + S(n) = y and tau > n, is proportional to the forward mass from x
/// at time m times the reversed-walk mass from y at time n - m. Samples
/// from it are tested against u(w)^2 e^{-|w|^2 / 2t(1-t)}.
#[allow(clippy::too_many_arguments)]
pub fn bridge_midpoint_verify(
    spec: &WalkSpec,
    x: &[i64],
    y: &[i64],
    n: usize,
    t: f64,
    samples: usize,
    cells: (usize, usize),
    seed: u64,
    workers: usize,
) -> Result<BridgeReport> {
    check_start(&spec.cone, &spec.dist, x)?;
    check_start(&spec.cone, &spec.dist, y)?;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidParams(format!("t = {t} outside (0, 1)")));
    }
    let m = ((t * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let far: Vec<i64> = x.iter().zip(y).map(|(a, b)| a.abs().max(b.abs())).collect();
    let dom_f = Radius::Default.domain(&spec.cone, spec.dist.support(), &far, n, DEFAULT_BUDGET)?;
    let back = spec.dist.negated();
    let dom_b = Radius::Default.domain(&spec.cone, back.support(), &far, n, DEFAULT_BUDGET)?;
    let mut f = ForwardDp::new(&dom_f, spec.dist.probs().to_vec(), x)?;
    let mut g = ForwardDp::new(&dom_b, back.probs().to_vec(), y)?;
    for _ in 0..m {
        f.step();
    }
    for _ in 0..n - m {
        g.step();
    }
    let prod: Vec<f64> = f.mass().iter().zip(g.mass()).map(|(a, b)| a * b).collect();
    let bridge_mass: f64 = prod.iter().sum();
    if !(bridge_mass > 0.0) {
        return Err(Error::ZeroBridgeMass);
    }
    let support: Vec<usize> = (0..prod.len()).filter(|&c| prod[c] > 0.0).collect();
    let alias = WeightedAliasIndex::new(support.iter().map(|&c| prod[c]).collect::<Vec<f64>>())
        .map_err(|e| Error::InvalidParams(format!("bridge weights: {e}")))?;
    let chunks = par::chunked(samples, par::CHUNK, seed, workers, |_, len, rng| {
        (0..len)
            .map(|_| dom_f.point(support[alias.sample(rng)]).to_vec())
            .collect::<Vec<_>>()
    })?;
    let midpoints: Vec<Vec<i64>> = chunks.into_iter().flatten().collect();
    let info = LatticeInfo::of(&spec.dist);
    let s2 = 2.0 * t * (1.0 - t);
    let reach = |z: &[i64]| info.reachable(x, z, m) && info.reachable(z, y, n - m);
    let at = atoms(spec, reach, n, |w| {
        let u = spec.spectral.u(w);
        u * u * (-w.iter().map(|v| v * v).sum::<f64>() / s2).exp()
    })?;
    let ws = scaled(spec, &midpoints, n);
    let chi2 = chi2_against(&ws, &at, cells)?;
    let swap_z = (spec.dim() == 2).then(|| {
        let (mut a, mut b) = (0f64, 0f64);
        for w in &ws {
            if w[0] > w[1] {
                a += 1.0;
            } else if w[0] < w[1] {
                b += 1.0;
            }
        }
        (a - b) / (a + b).sqrt().max(1.0)
    });
    Ok(BridgeReport {
        n,
        m,
        samples,
        bridge_mass,
        chi2,
        swap_z,
        midpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn srw() -> StepDistribution {
        StepDistribution::from_multiset(&[vec![1], vec![-1]]).unwrap()
    }

    fn nsew() -> StepDistribution {
        StepDistribution::from_multiset(&[vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]]).unwrap()
    }

    fn rz() -> BigRational {
        r(0, 1)
    }

    fn ro() -> BigRational {
        r(1, 1)
    }

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    /// Brute force over all |supp|^n step sequences.
    fn brute_survival(cone: &Cone, dist: &StepDistribution, x: &[i64], n: usize) -> BigRational {
        let m = dist.len();
        let mut total = rz();
        for code in 0..m.pow(n as u32) {
            let mut z = x.to_vec();
            let mut c = code;
            let mut p = ro();
            let mut alive = true;
            for _ in 0..n {
                let k = c % m;
                c /= m;
                for (a, b) in z.iter_mut().zip(&dist.support()[k]) {
                    *a += b;
                }
                p *= &dist.exact_probs()[k];
                if !cone.contains_lattice(&z) {
                    alive = false;
                    break;
                }
            }
            if alive {
                total += p;
            }
        }
        total
    }

    #[test]
    fn survival_examples() {
        let hl = Cone::half_line();
        assert_eq!(survival_exact(&hl, &srw(), &[1], 2).unwrap(), r(1, 2));
        assert_eq!(survival_exact(&hl, &srw(), &[1], 0).unwrap(), r(1, 1));
        let q = Cone::orthant(2).unwrap();
        let got = survival_exact(&q, &nsew(), &[1, 1], 2).unwrap();
        assert_eq!(got, brute_survival(&q, &nsew(), &[1, 1], 2));
        assert_eq!(got, r(3, 8));
        let b = survival_dp(&hl, &srw(), &[1], 2, Radius::Full).unwrap();
        assert_eq!(b.lower, 0.5);
        assert!(b.exact());
    }

    #[test]
    fn brackets_enclose_truth() {
        let hl = Cone::half_line();
        let truth = survival_dp(&hl, &srw(), &[3], 400, Radius::Full).unwrap().lower;
        let b = survival_dp(&hl, &srw(), &[3], 400, Radius::Explicit(30)).unwrap();
        assert!(b.lower <= truth && truth <= b.upper);
        assert!(b.escaped > 0.0);
    }

    #[test]
    fn pointmass_examples() {
        let hl = Cone::half_line();
        assert_eq!(pointmass_exact(&hl, &srw(), &[1], &[1], 2).unwrap(), r(1, 4));
        assert_eq!(pointmass_exact(&hl, &srw(), &[2], &[2], 0).unwrap(), r(1, 1));
        assert!(pointmass_exact(&hl, &srw(), &[2], &[3], 0).unwrap() == rz());
        let d = StepDistribution::from_multiset(&[vec![1, 0], vec![0, 1], vec![-1, -1]]).unwrap();
        let q = Cone::orthant(2).unwrap();
        let a = pointmass_dp(&q, &d, &[2, 1], &[1, 3], 31, Radius::Full).unwrap();
        let b = pointmass_reversed(&q, &d, &[2, 1], &[1, 3], 31, Radius::Full).unwrap();
        assert!(a.lower > 0.0);
        assert!((a.lower - b.lower).abs() <= 1e-12 * a.lower);
    }

    #[test]
    fn sampler_forced_step() {
        let hl = Cone::half_line();
        let t = survival_table(&hl, &srw(), &[1], 1, Radius::Full).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(exact_conditioned_sampler(&t, &[1], 1, &mut rng).unwrap(), vec![vec![1], vec![2]]);
        }
    }

    #[test]
    fn sampler_path_probabilities_exact() {
        let hl = Cone::half_line();
        let n = 10;
        let table = survival_table_exact(&hl, &srw(), &[1], n).unwrap();
        let q = table.q(n, &[1]).unwrap();
        let paths = surviving_paths(&hl, &srw(), &[1], n).unwrap();
        let mut total = rz();
        for (path, p) in &paths {
            let s = sampler_path_probability(&table, path).unwrap();
            assert_eq!(s, p / &q);
            total += s;
        }
        assert_eq!(total, ro());
    }

    #[test]
    fn htransform_rows_half_line() {
        let spec = WalkSpec::new(Cone::half_line(), srw()).unwrap();
        let t = HarmonicTable::from_fn(1, (1..40).map(|x| vec![x]).collect(), |z| z[0] as f64, crate::harmonic::HarmonicMethod::ClosedForm1d).unwrap();
        for x in 1..10i64 {
            let (row, defect) = htransform_row(&t, &spec, &[x]).unwrap();
            assert_eq!(defect, 0.0);
            let up = row.iter().find(|(z, _)| z[0] == x + 1).unwrap().1;
            assert!((up - (x + 1) as f64 / (2 * x) as f64).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = htransform_sampler(&t, &spec, &[1], 20, &mut rng).unwrap();
        assert_eq!(p.max_defect, 0.0);
        assert!(p.path.iter().all(|z| z[0] >= 1));
        let bad = HarmonicTable::from_fn(1, vec![vec![1], vec![2]], |_| 0.0, crate::harmonic::HarmonicMethod::ClosedForm1d).unwrap();
        assert!(matches!(htransform_row(&bad, &spec, &[1]), Err(Error::NonpositiveV(_))));
    }

    #[test]
    fn gap_walk() {
        let pm = StepDistribution::parse(
            "1 1 1\n1 1 -1\n1 -1 1\n1 -1 -1\n-1 1 1\n-1 1 -1\n-1 -1 1\n-1 -1 -1\n",
            3,
        )
        .unwrap();
        let g = weyl_a_gaps(&pm).unwrap();
        assert_eq!(g.len(), 7);
        let zero = g.support().iter().position(|s| *s == vec![0, 0]).unwrap();
        assert_eq!(g.exact_probs()[zero], r(1, 4));
        let (_, cov) = crate::walk::moments(&g);
        assert_eq!(cov[(0, 0)], 2.0);
        assert_eq!(cov[(0, 1)], -1.0);
        // Survival agrees with the three-dimensional walk.
        let w = Cone::weyl_a(3).unwrap();
        let q3 = survival_dp(&w, &pm, &[-2, 0, 2], 12, Radius::Full).unwrap().lower;
        let q2 = survival_dp(&Cone::orthant(2).unwrap(), &g, &gaps(&[-2, 0, 2]), 12, Radius::Full).unwrap().lower;
        assert!((q3 - q2).abs() < 1e-14);
    }

    #[test]
    fn mc_survival_matches_dp() {
        let hl = Cone::half_line();
        let c = mc_survival(&hl, &srw(), &[2], &[0, 4, 16], 100_000, 4, 1).unwrap();
        assert_eq!(c[0], (0, 100_000));
        let q = survival_dp(&hl, &srw(), &[2], 16, Radius::Full).unwrap().lower;
        let phat = c[2].1 as f64 / 1e5;
        assert!((phat - q).abs() < 4.0 * (q * (1.0 - q) / 1e5).sqrt());
    }

    #[test]
    fn clt_guard_and_llt_periodic() {
        let spec = WalkSpec::new(Cone::half_line(), srw()).unwrap();
        assert!(matches!(
            clt_verify(&spec, &[1], &vec![vec![1]; 10], 10, CltTarget::Meander, (10, 1)),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            llt_uniform_verify(&spec, &[1], &[16], 1.0, Radius::Default),
            Err(Error::PeriodicWalk)
        ));
    }

    #[test]
    fn u2_integral_half_line() {
        let want = (std::f64::consts::PI / 2.0).sqrt();
        assert!((u2_gauss_integral(1.0, 1) - want).abs() < 1e-14);
    }
}
