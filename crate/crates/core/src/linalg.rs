//! Small dense kernels used pointwise: Householder least squares for the
//! stacked contact systems, and the Pfaffian for wedge-power densities.

use nalgebra::DMatrix;

/// Householder QR of a tall `m x n` matrix (`m >= n`), kept for repeated
/// least-squares solves against different right-hand sides.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    m: usize,
    n: usize,
    // Row-major; the upper triangle holds R after factorization.
    r: Vec<f64>,
    vs: Vec<Vec<f64>>,
    betas: Vec<f64>,
}

impl HouseholderQr {
    pub fn new(mut a: Vec<f64>, m: usize, n: usize) -> Self {
        assert!(m >= n && a.len() == m * n);
        let mut vs = Vec::with_capacity(n);
        let mut betas = Vec::with_capacity(n);
        for j in 0..n {
            let mut v: Vec<f64> = (j..m).map(|i| a[i * n + j]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                vs.push(v);
                betas.push(0.0);
                continue;
            }
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|x| x * x).sum();
            let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
            for c in j..n {
                let dot: f64 = (j..m).map(|i| v[i - j] * a[i * n + c]).sum();
                let s = beta * dot;
                for i in j..m {
                    a[i * n + c] -= s * v[i - j];
                }
            }
            vs.push(v);
            betas.push(beta);
        }
        HouseholderQr { m, n, r: a, vs, betas }
    }

    /// Numerical rank from the diagonal of R, relative to its largest entry.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let diag: Vec<f64> = (0..self.n).map(|j| self.r[j * self.n + j].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return 0;
        }
        diag.iter().filter(|d| **d > rel_tol * max).count()
    }

    /// Least-squares solution of `A x = b`. Assumes full column rank.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let mut y = b.to_vec();
        for j in 0..n {
            let v = &self.vs[j];
            let dot: f64 = (j..m).map(|i| v[i - j] * y[i]).sum();
            let s = self.betas[j] * dot;
            for i in j..m {
                y[i] -= s * v[i - j];
            }
        }
        let mut x = vec![0.0; n];
        for j in (0..n).rev() {
            let mut acc = y[j];
            for c in j + 1..n {
                acc -= self.r[j * n + c] * x[c];
            }
            x[j] = acc / self.r[j * n + j];
        }
        x
    }
}

/// Pfaffian of an antisymmetric matrix by skew-symmetric Gaussian elimination
/// with partial pivoting. Odd dimensions give zero.
pub fn pfaffian(a: &DMatrix<f64>) -> f64 {
    let m = a.nrows();
    assert_eq!(m, a.ncols());
    if m % 2 == 1 {
        return 0.0;
    }
    let mut a = a.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < m {
        let mut kp = k + 1;
        let mut best = a[(k, k + 1)].abs();
        for j in k + 2..m {
            if a[(k, j)].abs() > best {
                best = a[(k, j)].abs();
                kp = j;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        let pivot = a[(k, k + 1)];
        if pivot == 0.0 {
            return 0.0;
        }
        pf *= pivot;
        if k + 2 < m {
            let tau: Vec<f64> = (k + 2..m).map(|j| a[(k, j)] / pivot).collect();
            let col: Vec<f64> = (k + 2..m).map(|i| a[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..m).enumerate() {
                for (jj, j) in (k + 2..m).enumerate() {
                    a[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    pf
}

/// `n!` as a float; the wedge-power densities carry this factor.
pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic pairwise (fixed binary tree) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if v.len() <= LEAF {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_antisym(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i + 1..m {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = -v;
            }
        }
        a
    }

    // Expansion along the first row; exponential cost, test-only oracle.
    fn pfaffian_expand(a: &DMatrix<f64>) -> f64 {
        let m = a.nrows();
        if m == 0 {
            return 1.0;
        }
        let mut s = 0.0;
        for j in 1..m {
            let idx: Vec<usize> = (0..m).filter(|&k| k != 0 && k != j).collect();
            let sub = DMatrix::from_fn(m - 2, m - 2, |r, c| a[(idx[r], idx[c])]);
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * a[(0, j)] * pfaffian_expand(&sub);
        }
        s
    }

    #[test]
    fn pfaffian_matches_expansion_and_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [2usize, 4, 6] {
            for _ in 0..20 {
                let a = random_antisym(m, &mut rng);
                let p = pfaffian(&a);
                assert!((p - pfaffian_expand(&a)).abs() < 1e-12);
                assert!((p * p - a.determinant()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pfaffian_of_standard_block() {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -1.0;
        a[(2, 3)] = 1.0;
        a[(3, 2)] = -1.0;
        assert_eq!(pfaffian(&a), 1.0);
        assert_eq!(pfaffian(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn least_squares_consistent_system() {
        // 4x3 consistent system with known solution.
        let a = vec![1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 3.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let x = [0.5, -1.0, 2.0];
        let b: Vec<f64> = (0..4).map(|i| (0..3).map(|j| a[i * 3 + j] * x[j]).sum()).collect();
        let qr = HouseholderQr::new(a, 4, 3);
        assert_eq!(qr.rank(1e-12), 3);
        let sol = qr.solve(&b);
        for j in 0..3 {
            assert!((sol[j] - x[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let a = vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        let qr = HouseholderQr::new(a, 3, 2);
        assert_eq!(qr.rank(1e-12), 1);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: Vec<f64> = (0..10_000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&v), 49_995_000.0);
    }
}
