//! Banded LU factorization with partial pivoting (LAPACK `gbtrf`/`gbtrs`
//! layout), used for the collocation Newton systems.

use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored
/// column-major with `kl` extra rows reserved for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` at `(i, j)`. Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.ab[s] = v;
    }

    /// In-place factorization; consumes the matrix.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku, ld) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        let ab = &mut self.ab;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld;
            let mut jp = 0;
            let mut best = ab[col + kv].abs();
            for t in 1..=km {
                let v = ab[col + kv + t].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(j));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = c * ld + kv + j - c;
                    let b = c * ld + kv + j + jp - c;
                    ab.swap(a, b);
                }
            }
            if km > 0 {
                let piv = ab[col + kv];
                for t in 1..=km {
                    ab[col + kv + t] /= piv;
                }
                for c in j + 1..=ju {
                    let a = ab[c * ld + kv + j - c];
                    if a != 0.0 {
                        for t in 1..=km {
                            let l = ab[col + kv + t];
                            ab[c * ld + kv + j + t - c] -= l * a;
                        }
                    }
                }
            }
        }
        Ok(BandLu { m: self, ipiv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let BandMatrix {
            n, kl, ku, ldab, ref ab, ..
        } = self.m;
        let kv = kl + ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(p, j);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for t in 1..=km {
                    b[j + t] -= ab[j * ldab + kv + t] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= ab[j * ldab + kv];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= ab[j * ldab + kv + i - j] * bj;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (12, 3, 2), (40, 7, 11), (30, 0, 4), (30, 5, 0)] {
            let mut band = BandMatrix::zeros(n, kl, ku);
            let mut dense = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if band.in_band(i, j) {
                        // diagonal often smaller than the subdiagonal, so rows get swapped
                        let v = if i == j {
                            rng.random_range(0.5..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }
                        } else {
                            rng.random_range(-1.5..1.5)
                        };
                        band.set(i, j, v);
                        dense[(i, j)] = v;
                    }
                }
            }
            let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let expected = dense.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            let lu = band.factor().unwrap();
            let mut x = rhs.clone();
            lu.solve_in_place(&mut x);
            for i in 0..n {
                assert!((x[i] - expected[i]).abs() < 1e-8 * (1.0 + expected.amax()));
            }
            let xv = DVector::from_vec(x);
            let r = &dense * &xv - DVector::from_vec(rhs);
            assert!(r.amax() < 1e-12 * n as f64 * (1.0 + xv.amax()));
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.set(0, 0, 1.0);
        m.set(1, 1, 1.0);
        assert!(matches!(m.factor(), Err(Error::Singular(2))));
    }
}
