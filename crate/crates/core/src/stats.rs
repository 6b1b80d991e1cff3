//! Fuk–Nagaev bounds and the statistical toolkit: log-log slopes with
//! jackknife intervals, chi-square tests and equal-mass cell partitions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::special::gamma_ur;

/// Smallest expected count allowed in a chi-square cell.
pub const MIN_EXPECTED: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnParams {
    pub n: u64,
    pub x_level: f64,
    pub y_level: f64,
    /// Per-coordinate step variance.
    pub variance: f64,
    /// P(|X| > y).
    pub tail_prob_at_y: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FnForm {
    /// One-dimensional, truncated jumps.
    NF1,
    /// One-dimensional with the single-jump term.
    NF2,
    /// d-dimensional, truncated jumps.
    NF3,
    /// d-dimensional with the single-jump term.
    NF4,
}

impl FnParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n > 0
            && self.x_level > 0.0
            && self.y_level > 0.0
            && self.variance > 0.0
            && (0.0..=1.0).contains(&self.tail_prob_at_y)
            && self.dim > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad Fuk-Nagaev parameters {self:?}")))
        }
    }
}

/// e^{x/y} (n sigma^2 / (x y))^{x/y} and its d-dimensional and
/// single-jump variants.
pub fn fn_bound(p: &FnParams, which: FnForm) -> Result<f64> {
    p.validate()?;
    let n = p.n as f64;
    let (x, y) = (p.x_level, p.y_level);
    let power = |d: f64| {
        let r = x / (d * y);
        // Evaluated in logs so huge exponents underflow to 0 cleanly.
        (r + r * (d * n * p.variance / (x * y)).ln()).exp()
    };
    let jump = n * p.tail_prob_at_y;
    let d = p.dim as f64;
    Ok(match which {
        FnForm::NF1 => power(1.0),
        FnForm::NF2 => power(1.0) + jump,
        FnForm::NF3 => 2.0 * d * power(d),
        FnForm::NF4 => 2.0 * d * power(d) + jump,
    })
}

/// NF4 minimized over a logarithmic grid of truncation levels y in
/// [x / 100, x]; `tail(y)` is P(|X| > y). Returns (y, bound).
pub fn fn_bound_best_y(n: u64, x: f64, variance: f64, dim: usize, tail: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let mut best = (x, f64::INFINITY);
    for k in 0..=200 {
        let y = x * 10f64.powf(-2.0 + k as f64 / 100.0);
        let p = FnParams {
            n,
            x_level: x,
            y_level: y,
            variance,
            tail_prob_at_y: tail(y),
            dim,
        };
        let b = fn_bound(&p, FnForm::NF4)?;
        if b < best.1 {
            best = (y, b);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% jackknife interval for the slope.
    pub ci: f64,
    pub points: usize,
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

/// Least-squares slope of log value against log n over the points with
/// n in [lo, hi] (inclusive), with a jackknife 95% interval.
pub fn loglog_slope(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(n, _)| window.is_none_or(|(lo, hi)| *n >= lo && *n <= hi))
        .map(|&(n, v)| {
            if n > 0.0 && v > 0.0 {
                Ok((n.ln(), v.ln()))
            } else {
                Err(Error::DegenerateWindow(format!("non-positive point ({n}, {v})")))
            }
        })
        .collect::<Result<_>>()?;
    let m = pts.len();
    if m < 4 {
        return Err(Error::DegenerateWindow(format!("{m} points, need 4")));
    }
    let spread = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)
        - pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    if !(spread > 0.0) {
        return Err(Error::DegenerateWindow("all n equal".into()));
    }
    let (slope, intercept) = least_squares(&pts);
    let loo: Vec<f64> = (0..m)
        .map(|i| {
            let rest: Vec<(f64, f64)> = pts.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &p)| p).collect();
            least_squares(&rest).0
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / m as f64;
    let var = (m as f64 - 1.0) / m as f64 * loo.iter().map(|s| (s - mean).powi(2)).sum::<f64>();
    let t = StudentsT::new(0.0, 1.0, (m - 1) as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    Ok(SlopeFit {
        slope,
        intercept,
        ci: t * var.sqrt(),
        points: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2 {
    pub statistic: f64,
    pub p_value: f64,
    pub cells: usize,
    pub dof: usize,
}

fn chi2_pvalue(stat: f64, dof: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, stat / 2.0)
}

/// Pearson goodness of fit of counts against cell probabilities (rescaled
/// to sum to one).
pub fn gof_chi2(observed: &[u64], probs: &[f64]) -> Result<Chi2> {
    if observed.len() != probs.len() {
        return Err(Error::CellsTooSmall("observed and expected lengths differ".into()));
    }
    if observed.len() < 2 {
        return Err(Error::CellsTooSmall("need at least two cells".into()));
    }
    let total: u64 = observed.iter().sum();
    let mass: f64 = probs.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = total as f64 * p / mass;
        if !(e >= MIN_EXPECTED) {
            return Err(Error::CellsTooSmall(format!("expected count {e:.3} below {MIN_EXPECTED}")));
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    let dof = observed.len() - 1;
    Ok(Chi2 {
        statistic: stat,
        p_value: chi2_pvalue(stat, dof),
        cells: observed.len(),
        dof,
    })
}

/// Chi-square test that two count vectors come from the same law.
pub fn two_sample_chi2(a: &[u64], b: &[u64]) -> Result<Chi2> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::CellsTooSmall("need two equal-length count vectors with >= 2 cells".into()));
    }
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut stat = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let pooled = (x + y) as f64;
        // Expected count of the smaller sample under the pooled law.
        if pooled * na.min(nb) / (na + nb) < MIN_EXPECTED {
            return Err(Error::CellsTooSmall(format!("pooled count {pooled} too small")));
        }
        stat += (ka * x as f64 - kb * y as f64).powi(2) / pooled;
    }
    let dof = a.len() - 1;
    Ok(Chi2 {
        statistic: stat,
        p_value: chi2_pvalue(stat, dof),
        cells: a.len(),
        dof,
    })
}

/// Merge adjacent cells (in the given order) until each expected count
/// reaches `min_expected`. Returns the new cell of every old cell.
pub fn merge_small_cells(probs: &[f64], total: f64, min_expected: f64) -> Vec<usize> {
    let mass: f64 = probs.iter().sum();
    let mut map = vec![0usize; probs.len()];
    let mut cell = 0;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        map[i] = cell;
        acc += total * p / mass;
        if acc >= min_expected && i + 1 < probs.len() {
            cell += 1;
            acc = 0.0;
        }
    }
    // A short last cell joins its predecessor.
    if acc < min_expected && cell > 0 {
        for m in map.iter_mut() {
            if *m == cell {
                *m = cell - 1;
            }
        }
    }
    map
}

/// Cells bounded by radii, then by polar angle within each radial shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPartition {
    /// Upper radius of each shell; the last is +inf.
    pub radial: Vec<f64>,
    /// Per shell, upper angles of its sectors; the last is +inf.
    pub angular: Vec<Vec<f64>>,
}

fn polar(w: &[f64]) -> (f64, f64) {
    let r = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a = if w.len() >= 2 { w[1].atan2(w[0]) } else { 0.0 };
    (r, a)
}

/// Split sorted keys into `k` groups of nearly equal mass; returns the
/// upper boundaries (midpoints between atoms, last = +inf).
fn equal_mass_cuts(keyed: &[(f64, f64)], k: usize) -> Vec<f64> {
    let total: f64 = keyed.iter().map(|p| p.1).sum();
    let mut cuts = Vec::new();
    let mut acc = 0.0;
    let mut next = 1;
    for i in 0..keyed.len() {
        acc += keyed[i].1;
        if next < k && acc >= total * next as f64 / k as f64 && i + 1 < keyed.len() && keyed[i + 1].0 > keyed[i].0 {
            cuts.push(0.5 * (keyed[i].0 + keyed[i + 1].0));
            next += 1;
        }
    }
    cuts.push(f64::INFINITY);
    cuts
}

impl PolarPartition {
    /// Equal-mass cells for weighted atoms (point, mass).
    pub fn from_atoms(atoms: &[(Vec<f64>, f64)], n_radial: usize, n_angular: usize) -> PolarPartition {
        let mut by_r: Vec<(f64, f64)> = atoms.iter().map(|(w, m)| (polar(w).0, *m)).collect();
        by_r.sort_by(|a, b| a.0.total_cmp(&b.0));
        let radial = equal_mass_cuts(&by_r, n_radial.max(1));
        let dim = atoms.first().map(|a| a.0.len()).unwrap_or(1);
        let angular = (0..radial.len())
            .map(|s| {
                if dim < 2 || n_angular <= 1 {
                    return vec![f64::INFINITY];
                }
                let lo = if s == 0 { f64::NEG_INFINITY } else { radial[s - 1] };
                let mut by_a: Vec<(f64, f64)> = atoms
                    .iter()
                    .map(|(w, m)| (polar(w), *m))
                    .filter(|((r, _), _)| *r > lo && *r <= radial[s])
                    .map(|((_, a), m)| (a, m))
                    .collect();
                by_a.sort_by(|a, b| a.0.total_cmp(&b.0));
                equal_mass_cuts(&by_a, n_angular)
            })
            .collect();
        PolarPartition { radial, angular }
    }

    pub fn n_cells(&self) -> usize {
        self.angular.iter().map(|a| a.len()).sum()
    }

    pub fn cell(&self, w: &[f64]) -> usize {
        let (r, a) = polar(w);
        let s = self.radial.partition_point(|&b| b < r).min(self.radial.len() - 1);
        let offset: usize = self.angular[..s].iter().map(|v| v.len()).sum();
        let sec = &self.angular[s];
        offset + sec.partition_point(|&b| b < a).min(sec.len() - 1)
    }

    pub fn masses(&self, atoms: &[(Vec<f64>, f64)]) -> Vec<f64> {
        let mut m = vec![0.0; self.n_cells()];
        for (w, p) in atoms {
            m[self.cell(w)] += p;
        }
        m
    }
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(x: f64) -> FnParams {
        FnParams {
            n: 100,
            x_level: x,
            y_level: 10.0,
            variance: 1.0,
            tail_prob_at_y: 0.0,
            dim: 1,
        }
    }

    #[test]
    fn fn_examples() {
        let b = fn_bound(&params(30.0), FnForm::NF2).unwrap();
        let want = 3f64.exp() * (100.0f64 / 300.0).powi(3);
        assert!((b - want).abs() < 1e-12);
        assert!((b - 0.7439087749).abs() < 1e-9);
        assert!(fn_bound(&params(1e4), FnForm::NF1).unwrap() < 1e-100);
        let mut p = params(30.0);
        p.dim = 2;
        p.tail_prob_at_y = 0.01;
        assert!(fn_bound(&p, FnForm::NF4).unwrap() >= fn_bound(&p, FnForm::NF3).unwrap());
        p.n = 0;
        assert!(fn_bound(&p, FnForm::NF1).is_err());
    }

    #[test]
    fn slope_examples() {
        let s: Vec<(f64, f64)> = (4..12).map(|k| {
            let n = (1u64 << k) as f64;
            (n, 3.0 * n.powf(-1.5))
        }).collect();
        let f = loglog_slope(&s, None).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-12);
        assert!(f.ci < 1e-10);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(loglog_slope(&s[..3], None).is_err());
        assert!(loglog_slope(&s, Some((1e6, 1e7))).is_err());
    }

    #[test]
    fn slope_ci_covers_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        let reps = 200;
        for _ in 0..reps {
            let s: Vec<(f64, f64)> = (0..12)
                .map(|k| {
                    let n = 10.0 * 1.5f64.powi(k);
                    let noise: f64 = 1.0 + 0.01 * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt();
                    (n, n.powf(-0.5) * noise)
                })
                .collect();
            let f = loglog_slope(&s, None).unwrap();
            if (f.slope + 0.5).abs() <= f.ci {
                hits += 1;
            }
        }
        assert!(hits as f64 / reps as f64 > 0.85, "{hits}");
    }

    #[test]
    fn chi2_calibration_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probs = [0.1, 0.2, 0.3, 0.4];
        let mut small_p = 0;
        for _ in 0..100 {
            let mut c = [0u64; 4];
            for _ in 0..2000 {
                let u: f64 = rng.random();
                let k = if u < 0.1 { 0 } else if u < 0.3 { 1 } else if u < 0.6 { 2 } else { 3 };
                c[k] += 1;
            }
            if gof_chi2(&c, &probs).unwrap().p_value < 0.05 {
                small_p += 1;
            }
        }
        assert!((1..=12).contains(&small_p), "{small_p}");
        let shifted = [400u64, 400, 600, 600];
        assert!(gof_chi2(&shifted, &probs).unwrap().p_value < 1e-6);
        assert!(gof_chi2(&[100], &[1.0]).is_err());
        assert!(gof_chi2(&[5, 5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn chi2_pvalue_known() {
        // Upper 5% point of chi-square with 3 dof is 7.814728.
        assert!((chi2_pvalue(7.814728, 3) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn two_sample() {
        let a = [100u64, 200, 300];
        let r = two_sample_chi2(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(two_sample_chi2(&[300, 100, 200], &[100, 300, 200]).unwrap().p_value < 1e-6);
    }

    #[test]
    fn partitions() {
        let atoms: Vec<(Vec<f64>, f64)> = (0..40)
            .flat_map(|i| (0..40).map(move |j| (vec![i as f64 * 0.1 + 0.05, j as f64 * 0.1 + 0.05], 1.0)))
            .collect();
        let part = PolarPartition::from_atoms(&atoms, 4, 3);
        assert_eq!(part.n_cells(), 12);
        let m = part.masses(&atoms);
        assert!(m.iter().all(|&v| v > 80.0 && v < 180.0), "{m:?}");
        assert!(part.cell(&[100.0, 100.0]) < 12);
        let map = merge_small_cells(&[0.5, 0.001, 0.001, 0.498], 1000.0, 20.0);
        assert_eq!(map, vec![0, 1, 1, 1]);
    }
}
