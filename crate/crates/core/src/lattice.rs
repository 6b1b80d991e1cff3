//! Integer lattices generated by step vectors: Hermite-style triangular
//! bases, indices and coset membership.

/// Full-rank sublattice of Z^d with an upper-triangular basis
/// (row i has a positive pivot in column i and zeros before it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntLattice {
    basis: Vec<Vec<i128>>,
}

impl IntLattice {
    /// Lattice generated by the given vectors; None when they do not span R^d.
    pub fn generated_by(gens: &[Vec<i64>], d: usize) -> Option<IntLattice> {
        let mut rows: Vec<Vec<i128>> = gens
            .iter()
            .map(|g| g.iter().map(|&v| v as i128).collect())
            .filter(|r: &Vec<i128>| r.iter().any(|&v| v != 0))
            .collect();
        let mut basis = Vec::with_capacity(d);
        for col in 0..d {
            // Euclid on column `col` across the remaining rows.
            loop {
                let nz: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][col] != 0).collect();
                if nz.len() <= 1 {
                    break;
                }
                let piv = *nz.iter().min_by_key(|&&i| rows[i][col].abs()).unwrap();
                let prow = rows[piv].clone();
                for &i in &nz {
                    if i != piv {
                        let q = rows[i][col] / prow[col];
                        for (a, b) in rows[i].iter_mut().zip(&prow) {
                            *a -= q * b;
                        }
                    }
                }
            }
            let pos = (0..rows.len()).find(|&i| rows[i][col] != 0)?;
            let mut row = rows.swap_remove(pos);
            if row[col] < 0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            rows.retain(|r| r.iter().any(|&v| v != 0));
            basis.push(row);
        }
        Some(IntLattice { basis })
    }

    /// Index [Z^d : L], the product of the pivots.
    pub fn index(&self) -> i128 {
        self.basis.iter().enumerate().map(|(i, r)| r[i]).product()
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        let mut w: Vec<i128> = v.iter().map(|&x| x as i128).collect();
        for (i, row) in self.basis.iter().enumerate() {
            if w[i] % row[i] != 0 {
                return false;
            }
            let q = w[i] / row[i];
            for (a, b) in w.iter_mut().zip(row) {
                *a -= q * b;
            }
        }
        w.iter().all(|&x| x == 0)
    }
}

/// Determinant of a small integer matrix by cofactor expansion.
pub(crate) fn int_det(m: &[Vec<i128>]) -> i128 {
    let n = m.len();
    match n {
        0 => 1,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => (0..n)
            .map(|j| {
                let minor: Vec<Vec<i128>> = m[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &v)| v).collect())
                    .collect();
                let s = if j % 2 == 0 { 1 } else { -1 };
                s * m[0][j] * int_det(&minor)
            })
            .sum(),
    }
}

/// A nonzero integer vector orthogonal to the d-1 given vectors
/// (generalized cross product), or None when they are dependent.
pub(crate) fn normal_of(vs: &[Vec<i64>], d: usize) -> Option<Vec<i64>> {
    if d == 1 {
        return Some(vec![1]);
    }
    let mut out = vec![0i128; d];
    for (j, o) in out.iter_mut().enumerate() {
        let minor: Vec<Vec<i128>> = vs
            .iter()
            .map(|r| r.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &v)| v as i128).collect())
            .collect();
        let s = if j % 2 == 0 { 1 } else { -1 };
        *o = s * int_det(&minor);
    }
    if out.iter().all(|&v| v == 0) {
        return None;
    }
    Some(out.into_iter().map(|v| v as i64).collect())
}
