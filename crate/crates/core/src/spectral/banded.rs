use super::operator::Csr;
use crate::error::{domain_err, Result};

/// LU factorisation with partial pivoting of a banded matrix.
///
/// Row `r` stores columns `r - kl ..= r + kl + ku`; pivoting can widen the
/// upper band of `U` to `kl + ku`, which the window covers.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Factorises `matrix - shift * I`.
    pub fn factor(matrix: &Csr, shift: f64) -> Result<Self> {
        let n = matrix.n;
        let (kl, ku) = matrix.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, width, data: vec![0.0; n * width], mult: vec![0.0; n * kl.max(1)], piv: vec![0; n] };
        for r in 0..n {
            for (c, v) in matrix.row(r) {
                *lu.at(r, c) += v;
            }
            *lu.at(r, r) -= shift;
        }
        for i in 0..n {
            let last = (i + kl).min(n - 1);
            let (mut best, mut p) = (lu.at_ref(i, i).abs(), i);
            for r in i + 1..=last {
                let v = lu.at_ref(r, i).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return domain_err(format!("singular banded matrix at pivot {i}"));
            }
            lu.piv[i] = p;
            let cmax = (i + kl + ku).min(n - 1);
            if p != i {
                for c in i..=cmax {
                    let a = *lu.at(i, c);
                    let b = *lu.at(p, c);
                    *lu.at(i, c) = b;
                    *lu.at(p, c) = a;
                }
            }
            let pivot = lu.at_ref(i, i);
            for r in i + 1..=last {
                let m = lu.at_ref(r, i) / pivot;
                lu.mult[i * kl + (r - i - 1)] = m;
                if m == 0.0 {
                    continue;
                }
                *lu.at(r, i) = 0.0;
                let wi = i * width + kl - i;
                let wr = r * width + kl - r;
                for c in i + 1..=cmax {
                    lu.data[wr + c] -= m * lu.data[wi + c];
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.width + c + self.kl - r]
    }

    #[inline]
    fn at_ref(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c + self.kl - r]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            if bi != 0.0 {
                for r in i + 1..=(i + kl).min(n - 1) {
                    b[r] -= self.mult[i * kl + (r - i - 1)] * bi;
                }
            }
        }
        for i in (0..n).rev() {
            let cmax = (i + self.kl + self.ku).min(n - 1);
            let row = i * self.width + self.kl - i;
            let mut s = b[i];
            for c in i + 1..=cmax {
                s -= self.data[row + c] * b[c];
            }
            b[i] = s / self.data[row + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_random_banded_system() {
        let n = 40;
        let mut rows = vec![Vec::new(); n];
        let mut seed = 12345u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for (r, row) in rows.iter_mut().enumerate() {
            for c in r.saturating_sub(3)..(r + 5).min(n) {
                row.push((c, rnd()));
            }
        }
        let a = Csr::from_rows(rows);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let shift = 0.3;
        let mut b = a.matvec(&x);
        for i in 0..n {
            b[i] -= shift * x[i];
        }
        let lu = BandedLu::factor(&a, shift).unwrap();
        lu.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-9, "{i}: {} vs {}", b[i], x[i]);
        }
    }
}
