//! Small dense complex linear algebra: LU with partial pivoting and a
//! shifted-QR eigenvalue routine. Network matrices are tens of rows at most.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
use num_traits::Zero;
#[allow(unused_imports)] // needed when std is absent from the graph
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for r in 0..self.rows {
            self.data.swap(r * self.cols + a, r * self.cols + b);
        }
    }

    pub fn sub_matrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out[(i, j)] = self[(r, c)];
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `PA = LU` factorisation with row pivoting.
#[derive(Debug, Clone)]
pub(crate) struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    det: Complex64,
}

impl Lu {
    /// Returns `None` when a pivot is exactly zero or non-finite.
    pub fn new(mut a: CMatrix) -> Option<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut det = Complex64::new(1.0, 0.0);
        for k in 0..n {
            let (p, mag) = (k..n)
                .map(|r| (r, a[(r, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(mag > 0.0) || !mag.is_finite() {
                return None;
            }
            if p != k {
                a.swap_rows(p, k);
                perm.swap(p, k);
                det = -det;
            }
            let pivot = a[(k, k)];
            det *= pivot;
            for r in k + 1..n {
                let f = a[(r, k)] / pivot;
                if f.is_zero() {
                    continue;
                }
                a[(r, k)] = f;
                for c in k + 1..n {
                    let v = a[(k, c)];
                    a[(r, c)] -= f * v;
                }
            }
        }
        Some(Self { lu: a, perm, det })
    }

    pub fn det(&self) -> Complex64 {
        self.det
    }

    /// Solves `A X = B` for every column of `b`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let n = self.lu.rows;
        assert_eq!(b.rows, n);
        let mut x = CMatrix::zeros(n, b.cols);
        for (i, &p) in self.perm.iter().enumerate() {
            for c in 0..b.cols {
                x[(i, c)] = b[(p, c)];
            }
        }
        for c in 0..b.cols {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        x
    }
}

/// Reduces `a` to upper Hessenberg form by stabilised elementary similarity
/// transforms (eigenvalues are preserved).
fn hessenberg(a: &mut CMatrix) {
    let n = a.rows;
    for m in 1..n.saturating_sub(1) {
        let (piv, mag) = (m..n)
            .map(|r| (r, a[(r, m - 1)].norm()))
            .fold((m, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if mag <= 0.0 {
            continue;
        }
        a.swap_rows(piv, m);
        a.swap_cols(piv, m);
        let pivot = a[(m, m - 1)];
        for i in m + 1..n {
            let y = a[(i, m - 1)] / pivot;
            if y.is_zero() {
                continue;
            }
            for j in 0..n {
                let v = a[(m, j)];
                a[(i, j)] -= y * v;
            }
            for j in 0..n {
                let v = a[(j, i)];
                a[(j, m)] += y * v;
            }
        }
    }
}

/// Unitary rotation `[[c, s], [−s̄, c]]` mapping `(a, b)` to `(r, 0)`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    let na = a.norm();
    let r = na.hypot(b.norm());
    if r == 0.0 {
        return (1.0, Complex64::zero());
    }
    if na == 0.0 {
        return (0.0, Complex64::new(1.0, 0.0));
    }
    (na / r, (a / na) * b.conj() / r)
}

/// All eigenvalues of a square matrix, or `None` if QR iteration stalls.
pub(crate) fn eigenvalues(m: &CMatrix) -> Option<Vec<Complex64>> {
    assert_eq!(m.rows, m.cols);
    let n = m.rows;
    let mut h = m.clone();
    hessenberg(&mut h);
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            h[(i, j)] = Complex64::zero();
        }
    }
    let mut eig = vec![Complex64::zero(); n];
    if n == 0 {
        return Some(eig);
    }
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut rots: Vec<(f64, Complex64)> = Vec::with_capacity(n);
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        let mut lo = hi;
        while lo > 0 {
            let scale = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let tiny = if scale == 0.0 { f64::MIN_POSITIVE } else { eps * scale };
            if h[(lo, lo - 1)].norm() <= tiny {
                h[(lo, lo - 1)] = Complex64::zero();
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > 60 * n.max(4) {
            return None;
        }
        let a = h[(hi - 1, hi - 1)];
        let b = h[(hi - 1, hi)];
        let c = h[(hi, hi - 1)];
        let d = h[(hi, hi)];
        let mu = if iter % 11 == 0 {
            // exceptional shift to break cycles
            d + Complex64::new(c.norm(), 0.0)
        } else {
            let half = (a - d) * 0.5;
            let disc = (half * half + b * c).sqrt();
            let m1 = (a + d) * 0.5 + disc;
            let m2 = (a + d) * 0.5 - disc;
            if (m1 - d).norm() < (m2 - d).norm() { m1 } else { m2 }
        };
        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        rots.clear();
        for k in lo..hi {
            let (cs, sn) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..=hi {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * cs + sn * y;
                h[(k + 1, j)] = -sn.conj() * x + y * cs;
            }
            rots.push((cs, sn));
        }
        for (idx, &(cs, sn)) in rots.iter().enumerate() {
            let k = lo + idx;
            for i in lo..=(k + 1).min(hi) {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * cs + y * sn.conj();
                h[(i, k + 1)] = -x * sn + y * cs;
            }
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }
    Some(eig)
}

pub(crate) fn spectral_radius(m: &CMatrix) -> Option<f64> {
    eigenvalues(m).map(|e| e.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn from_rows(rows: &[&[Complex64]]) -> CMatrix {
        let mut m = CMatrix::zeros(rows.len(), rows[0].len());
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    // xorshift; keeps the unit tests free of RNG crates
    fn lcg(state: &mut u64) -> f64 {
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        (*state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    #[test]
    fn lu_solves_and_reports_determinant() {
        let a = from_rows(&[
            &[c(2.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)],
            &[c(0.5, 0.0), c(3.0, 0.0), c(0.0, 2.0)],
            &[c(1.0, 1.0), c(1.0, -1.0), c(4.0, 0.0)],
        ]);
        let lu = Lu::new(a.clone()).unwrap();
        let b = from_rows(&[&[c(1.0, 0.0)], &[c(0.0, 1.0)], &[c(-2.0, 0.5)]]);
        let x = lu.solve(&b);
        let ax = a.mul(&x);
        for i in 0..3 {
            assert!((ax[(i, 0)] - b[(i, 0)]).norm() < 1e-14);
        }
        // cofactor expansion
        let m = |i: usize, j: usize| a[(i, j)];
        let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
            - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
            + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
        assert!((lu.det() - det).norm() < 1e-13);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = from_rows(&[&[c(1.0, 0.0), c(2.0, 0.0)], &[c(2.0, 0.0), c(4.0, 0.0)]]);
        assert!(Lu::new(a).is_none());
    }

    #[test]
    fn cycle_eigenvalues_are_roots_of_loop_product() {
        // 4-cycle with round-trip product p: λ⁴ = p
        let p = c(-0.3, 0.4);
        let mut m = CMatrix::zeros(4, 4);
        m[(1, 0)] = c(1.0, 0.0);
        m[(2, 1)] = c(0.5, 0.0);
        m[(3, 2)] = c(2.0, 0.0);
        m[(0, 3)] = p;
        let eig = eigenvalues(&m).unwrap();
        for z in &eig {
            assert!((z.powu(4) - p).norm() < 1e-12, "{z}");
        }
        assert!((spectral_radius(&m).unwrap() - p.norm().powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn random_matrices_match_trace_and_det() {
        let mut s = 0x9e3779b97f4a7c15u64;
        for n in 1..12 {
            let mut m = CMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = c(lcg(&mut s), lcg(&mut s));
                }
            }
            let eig = eigenvalues(&m).unwrap();
            let tr: Complex64 = (0..n).map(|i| m[(i, i)]).sum();
            let sum: Complex64 = eig.iter().sum();
            assert!((tr - sum).norm() < 1e-10 * n as f64, "n={n}");
            let prod: Complex64 = eig.iter().product();
            let det = Lu::new(m.clone()).unwrap().det();
            assert!((prod - det).norm() < 1e-9 * det.norm().max(1.0), "n={n}");
        }
    }

    #[test]
    fn diagonal_and_nilpotent() {
        let m = from_rows(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]]);
        assert_eq!(spectral_radius(&m), Some(0.0));
        let d = from_rows(&[&[c(3.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, -2.0)]]);
        assert!((spectral_radius(&d).unwrap() - 3.0).abs() < 1e-15);
    }
}
