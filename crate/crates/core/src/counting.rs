//! Exact counts of lattice paths confined to a cone and their
//! exponential-times-polynomial asymptotics.

use num_bigint::BigUint;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::cone::Cone;
use crate::dp::{ForwardDp, LatticeDomain, Radius, DEFAULT_BUDGET};
use crate::error::{check_dim, Error, Result};
use crate::conditioned::pointmass_dp;
use crate::stats::loglog_slope;
use crate::walk::{cramer_tilt, TiltResult, WalkSpec};

/// Collapse a step multiset into distinct steps with multiplicities.
pub fn multiplicities(steps: &[Vec<i64>]) -> Result<(Vec<Vec<i64>>, Vec<BigUint>)> {
    let d = steps.first().ok_or_else(|| Error::InvalidSteps("empty step set".into()))?.len();
    let mut support: Vec<Vec<i64>> = Vec::new();
    let mut mult: Vec<u64> = Vec::new();
    for s in steps {
        check_dim(d, s.len())?;
        match support.iter().position(|t| t == s) {
            Some(i) => mult[i] += 1,
            None => {
                support.push(s.clone());
                mult.push(1);
            }
        }
    }
    Ok((support, mult.into_iter().map(BigUint::from).collect()))
}

/// N_k(x, y) for k = 0..=n: paths x -> y with steps from the multiset
/// that stay in K at times 1..k.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCountTable {
    pub steps: Vec<Vec<i64>>,
    pub multiplicity: Vec<BigUint>,
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub counts: Vec<BigUint>,
}

impl PathCountTable {
    pub fn build(steps: &[Vec<i64>], cone: &Cone, x: &[i64], y: &[i64], n: usize) -> Result<PathCountTable> {
        let (support, mult) = multiplicities(steps)?;
        check_dim(cone.dim(), support[0].len())?;
        check_dim(cone.dim(), x.len())?;
        check_dim(cone.dim(), y.len())?;
        let mut counts = Vec::with_capacity(n + 1);
        if !cone.contains_lattice(x) {
            counts.resize(n + 1, BigUint::default());
        } else {
            let dom = LatticeDomain::full_reach(cone, &support, x, n, DEFAULT_BUDGET)?;
            let mut f = ForwardDp::new(&dom, mult.clone(), x)?;
            counts.push(f.at(y));
            for _ in 0..n {
                f.step();
                counts.push(f.at(y));
            }
        }
        Ok(PathCountTable {
            steps: support,
            multiplicity: mult,
            x: x.to_vec(),
            y: y.to_vec(),
            counts,
        })
    }

    pub fn horizon(&self) -> usize {
        self.counts.len() - 1
    }

    /// gcd of the times with a nonzero count, or 0 if there are none
    /// beyond time 0.
    pub fn period(&self) -> usize {
        let nz: Vec<usize> = (0..self.counts.len()).filter(|&k| self.counts[k] != BigUint::default()).collect();
        let mut g = 0usize;
        for w in nz.windows(2) {
            g = g.gcd(&(w[1] - w[0]));
        }
        g
    }

    /// `n count` lines in decimal.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{k} {c}\n"));
        }
        out
    }
}

pub fn count_paths(steps: &[Vec<i64>], cone: &Cone, x: &[i64], y: &[i64], n: usize) -> Result<BigUint> {
    Ok(PathCountTable::build(steps, cone, x, y, n)?.counts.pop().unwrap())
}

/// Natural log of a positive big integer without overflow.
pub fn ln_big(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        return num_traits::ToPrimitive::to_f64(v).unwrap().ln();
    }
    let shift = bits - 64;
    let top = num_traits::ToPrimitive::to_f64(&(v >> shift)).unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    /// N R(h_0).
    pub growth: f64,
    pub poly_exponent: f64,
    /// Half-width of the 95% jackknife interval.
    pub exponent_ci: f64,
    /// p + d/2 of the tilted, whitened walk when its cone is in the catalog.
    pub theory_exponent: Option<f64>,
    /// Limit of N_n growth^{-n} n^{e} along the residue class, with e the
    /// theoretical exponent if known and the fitted one otherwise.
    pub c_estimate: f64,
    /// The prefactor at the last admissible n before extrapolation.
    pub c_last: f64,
    pub residue_class: usize,
    pub points: usize,
    /// Extrapolated prefactors from the two halves of the window agree
    /// to 1%.
    pub converged: bool,
}

/// Tilt the multiset, then fit the exact counts along their residue class.
pub fn asymptotic_predict(steps: &[Vec<i64>], cone: &Cone, x: &[i64], y: &[i64], n_max: usize) -> Result<AsymptoticFit> {
    let tilt = cramer_tilt(steps)?;
    let table = PathCountTable::build(steps, cone, x, y, n_max)?;
    let theory_exponent = WalkSpec::new(cone.clone(), tilt.tilted.clone())
        .ok()
        .map(|s| s.p() + s.dim() as f64 / 2.0);
    fit_counts(&table, &tilt, theory_exponent)
}

pub fn fit_counts(table: &PathCountTable, tilt: &TiltResult, theory_exponent: Option<f64>) -> Result<AsymptoticFit> {
    let growth = tilt.n_steps as f64 * tilt.r_h0;
    let period = table.period();
    let n_max = table.horizon();
    let zero = BigUint::default();
    let last = (0..=n_max).rev().find(|&k| table.counts[k] != zero);
    let last = match (last, period) {
        (Some(l), g) if g > 0 => l,
        _ => return Err(Error::DegenerateWindow("fewer than two nonzero counts".into())),
    };
    let lg = growth.ln();
    // log of N_k growth^{-k} on the residue class over the last half.
    let series: Vec<(f64, f64)> = (n_max / 2..=last)
        .filter(|&k| k >= 1 && (last - k) % period == 0 && table.counts[k] != zero)
        .map(|k| (k as f64, (ln_big(&table.counts[k]) - k as f64 * lg).exp()))
        .collect();
    if series.len() < 4 {
        return Err(Error::DegenerateWindow(format!("{} points in the fitting window", series.len())));
    }
    let fit = loglog_slope(&series, None)?;
    let e = theory_exponent.unwrap_or(-fit.slope);
    let pref = |k: usize| (ln_big(&table.counts[k]) - k as f64 * lg + e * (k as f64).ln()).exp();
    let class = |k: usize| {
        let mut k = k;
        while k > 0 && ((last - k) % period != 0 || table.counts[k] == zero) {
            k -= 1;
        }
        k
    };
    // Prefactors carry a 1/n correction; Richardson on (n/2, n).
    let rich = |k: usize| {
        let h = class(k / 2);
        if h == 0 {
            return pref(k);
        }
        let (a, b) = (k as f64, h as f64);
        (a * pref(k) - b * pref(h)) / (a - b)
    };
    let c_last = pref(last);
    let c_estimate = rich(last);
    let c_half = rich(class(last / 2));
    let converged = ((c_estimate - c_half) / c_estimate).abs() < 0.01;
    Ok(AsymptoticFit {
        growth,
        poly_exponent: -fit.slope,
        exponent_ci: fit.ci,
        theory_exponent,
        c_estimate,
        c_last,
        residue_class: period,
        points: series.len(),
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaropoulosRow {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub c_estimate: f64,
    /// u(x + x0) u(y + x0).
    pub u_product: f64,
    pub ratio: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaropoulosReport {
    pub rows: Vec<VaropoulosRow>,
    /// Smallest C with C_estimate <= C u(x+x0) u(y+x0) on every converged row.
    pub constant: f64,
    /// All fits converged; otherwise `constant` is only indicative.
    pub converged: bool,
}

/// Upper bound of fitted prefactors by products of u at shifted points.
pub fn varopoulos_upper_check(
    fits: &[(Vec<i64>, Vec<i64>, AsymptoticFit)],
    u: impl Fn(&[f64]) -> f64,
    x0: &[f64],
) -> VaropoulosReport {
    let shift = |z: &[i64]| -> Vec<f64> { z.iter().zip(x0).map(|(a, b)| *a as f64 + b).collect() };
    let rows: Vec<VaropoulosRow> = fits
        .iter()
        .map(|(x, y, f)| {
            let up = u(&shift(x)) * u(&shift(y));
            VaropoulosRow {
                x: x.clone(),
                y: y.clone(),
                c_estimate: f.c_estimate,
                u_product: up,
                ratio: f.c_estimate / up,
                converged: f.converged,
            }
        })
        .collect();
    let constant = rows
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.ratio)
        .fold(0.0, f64::max);
    let converged = !rows.is_empty() && rows.iter().all(|r| r.converged);
    VaropoulosReport { rows, constant, converged }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltIdentityRow {
    pub n: usize,
    pub count: String,
    /// N^n R(h0)^n e^{(h0, x - y)} P_tilted(x + S(n) = y, tau > n).
    pub from_tilt: f64,
    pub rel_error: f64,
}

/// Ties exact counts to tilted point masses for n = 0..=n_max.
pub fn tilt_identity(steps: &[Vec<i64>], cone: &Cone, x: &[i64], y: &[i64], n_max: usize) -> Result<Vec<TiltIdentityRow>> {
    let tilt = cramer_tilt(steps)?;
    let table = PathCountTable::build(steps, cone, x, y, n_max)?;
    let lg = (tilt.n_steps as f64 * tilt.r_h0).ln();
    let hx: f64 = tilt.h0.iter().zip(x.iter().zip(y)).map(|(h, (a, b))| h * (a - b) as f64).sum();
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let p = pointmass_dp(cone, &tilt.tilted, x, y, n, Radius::Full)?.value();
        let from_tilt = (n as f64 * lg + hx).exp() * p;
        let c = num_traits::ToPrimitive::to_f64(&table.counts[n]).unwrap();
        let rel_error = if c == 0.0 { from_tilt } else { ((from_tilt - c) / c).abs() };
        rows.push(TiltIdentityRow {
            n,
            count: table.counts[n].to_string(),
            from_tilt,
            rel_error,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm() -> Vec<Vec<i64>> {
        vec![vec![1], vec![-1]]
    }

    fn nsew() -> Vec<Vec<i64>> {
        vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]]
    }

    fn catalan(m: u64) -> BigUint {
        // C_m = binom(2m, m) / (m + 1)
        let mut c = BigUint::from(1u32);
        for k in 0..m {
            c = c * BigUint::from(2 * (2 * k + 1)) / BigUint::from(k + 2);
        }
        c
    }

    /// Brute force over every step sequence.
    fn brute(steps: &[Vec<i64>], cone: &Cone, x: &[i64], y: &[i64], n: usize) -> u64 {
        let m = steps.len();
        let mut total = 0;
        for code in 0..m.pow(n as u32) {
            let mut z = x.to_vec();
            let mut c = code;
            let mut ok = true;
            for _ in 0..n {
                for (a, b) in z.iter_mut().zip(&steps[c % m]) {
                    *a += b;
                }
                c /= m;
                ok &= cone.contains_lattice(&z);
            }
            if ok && z == y {
                total += 1;
            }
        }
        total
    }

    #[test]
    fn small_counts() {
        let hl = Cone::half_line();
        assert_eq!(count_paths(&pm(), &hl, &[1], &[1], 6).unwrap(), BigUint::from(5u32));
        assert_eq!(count_paths(&pm(), &hl, &[1], &[1], 2).unwrap(), BigUint::from(1u32));
        let q = Cone::orthant(2).unwrap();
        assert_eq!(count_paths(&nsew(), &q, &[1, 1], &[1, 1], 2).unwrap(), BigUint::from(2u32));
        for n in 0..=6 {
            let got = count_paths(&nsew(), &q, &[1, 2], &[2, 1], n).unwrap();
            assert_eq!(got, BigUint::from(brute(&nsew(), &q, &[1, 2], &[2, 1], n)));
        }
        let drift = vec![vec![1], vec![1], vec![-1]];
        for n in 0..=8 {
            assert_eq!(
                count_paths(&drift, &hl, &[2], &[3], n).unwrap(),
                BigUint::from(brute(&drift, &hl, &[2], &[3], n))
            );
        }
    }

    #[test]
    fn catalan_numbers() {
        let t = PathCountTable::build(&pm(), &Cone::half_line(), &[1], &[1], 32).unwrap();
        for m in 0..=16 {
            assert_eq!(t.counts[2 * m as usize], catalan(m));
        }
        assert!((0..16).all(|m| t.counts[2 * m + 1] == BigUint::default()));
        assert_eq!(t.period(), 2);
        assert!(t.to_lines().starts_with("0 1\n1 0\n2 1\n3 0\n4 2\n"));
    }

    #[test]
    fn dyck_fit() {
        let f = asymptotic_predict(&pm(), &Cone::half_line(), &[1], &[1], 600).unwrap();
        assert!((f.growth - 2.0).abs() < 1e-12);
        assert_eq!(f.residue_class, 2);
        assert_eq!(f.theory_exponent, Some(1.5));
        assert!((f.poly_exponent - 1.5).abs() < 0.05);
        let want = 2.0 * 2f64.sqrt() / std::f64::consts::PI.sqrt();
        assert!((f.c_estimate / want - 1.0).abs() < 1e-3, "{}", f.c_estimate);
    }

    #[test]
    fn drift_growth() {
        let drift = vec![vec![1], vec![1], vec![-1]];
        let f = asymptotic_predict(&drift, &Cone::half_line(), &[1], &[1], 400).unwrap();
        assert!((f.growth - 2.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((f.poly_exponent - 1.5).abs() < 0.05);
    }

    #[test]
    fn tilt_identity_small_n() {
        let drift = vec![vec![1], vec![1], vec![-1]];
        for row in tilt_identity(&drift, &Cone::half_line(), &[1], &[2], 10).unwrap() {
            assert!(row.rel_error < 1e-10, "{row:?}");
        }
        let q = Cone::orthant(2).unwrap();
        let steps = vec![vec![1, 0], vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]];
        for row in tilt_identity(&steps, &q, &[1, 1], &[2, 1], 10).unwrap() {
            assert!(row.rel_error < 1e-10, "{row:?}");
        }
    }

    #[test]
    fn varopoulos_report() {
        let hl = Cone::half_line();
        let fits: Vec<_> = (1..=3)
            .map(|x| (vec![x], vec![x], asymptotic_predict(&pm(), &hl, &[x], &[x], 400).unwrap()))
            .collect();
        let r = varopoulos_upper_check(&fits, |w| w[0], &[1.0]);
        assert!(r.converged);
        assert!(r.rows.iter().all(|row| row.ratio <= r.constant));
        // C(x, x) grows like x^2 so the ratio stays bounded.
        assert!(r.constant < 1.0);
        let short = vec![(vec![1], vec![1], asymptotic_predict(&pm(), &hl, &[1], &[1], 12).unwrap())];
        assert!(!varopoulos_upper_check(&short, |w| w[0], &[1.0]).converged);
    }
}
