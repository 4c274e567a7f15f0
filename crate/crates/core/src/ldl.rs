//! Dense symmetric-indefinite factorization with Bunch-Kaufman pivoting.
//!
//! Factors P A P^T = L D L^T with D block diagonal (1x1 and 2x2 blocks).
//! The representer system is symmetric but indefinite, so Cholesky is
//! unavailable and plain LDL^T without pivoting can break down.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

pub struct LdlFactor {
    /// Lower triangle holds L multipliers and D blocks; upper triangle is junk.
    a: DMatrix<f64>,
    /// LAPACK-style 1-based pivot indices; negative entries mark 2x2 blocks.
    ipiv: Vec<i64>,
}

/// Factor a symmetric matrix (only the lower triangle is referenced).
pub fn factor(m: &DMatrix<f64>) -> Result<LdlFactor> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Factorization("matrix not square".into()));
    }
    let mut a = m.clone();
    let mut ipiv = vec![0i64; n];

    let mut k = 0usize;
    while k < n {
        let mut kstep = 1usize;
        let absakk = a[(k, k)].abs();

        let (imax, colmax) = if k + 1 < n {
            let mut im = k + 1;
            let mut cm = a[(k + 1, k)].abs();
            for i in k + 2..n {
                let v = a[(i, k)].abs();
                if v > cm {
                    cm = v;
                    im = i;
                }
            }
            (im, cm)
        } else {
            (k, 0.0)
        };

        if absakk.max(colmax) == 0.0 {
            return Err(Error::Factorization(format!(
                "zero pivot column at index {k}"
            )));
        }

        let kp = if absakk >= ALPHA * colmax {
            k
        } else {
            // rowmax over row imax of the trailing submatrix
            let mut rowmax = 0.0f64;
            for j in k..imax {
                rowmax = rowmax.max(a[(imax, j)].abs());
            }
            for i in imax + 1..n {
                rowmax = rowmax.max(a[(i, imax)].abs());
            }
            if absakk >= ALPHA * colmax * (colmax / rowmax) {
                k
            } else if a[(imax, imax)].abs() >= ALPHA * rowmax {
                imax
            } else {
                kstep = 2;
                imax
            }
        };

        let kk = k + kstep - 1;
        if kp != kk {
            // interchange rows/columns kk and kp in the trailing lower triangle
            for i in kp + 1..n {
                a.swap((i, kk), (i, kp));
            }
            for j in kk + 1..kp {
                a.swap((j, kk), (kp, j));
            }
            a.swap((kk, kk), (kp, kp));
            if kstep == 2 {
                a.swap((k + 1, k), (kp, k));
            }
        }

        if kstep == 1 {
            let d11 = 1.0 / a[(k, k)];
            for j in k + 1..n {
                let w = a[(j, k)] * d11;
                for i in j..n {
                    let upd = a[(i, k)] * w;
                    a[(i, j)] -= upd;
                }
            }
            for i in k + 1..n {
                a[(i, k)] *= d11;
            }
            ipiv[k] = (kp + 1) as i64;
        } else {
            if k + 2 < n {
                let d21 = a[(k + 1, k)];
                let d11 = a[(k + 1, k + 1)] / d21;
                let d22 = a[(k, k)] / d21;
                let t = 1.0 / (d11 * d22 - 1.0);
                let d21 = t / d21;
                for j in k + 2..n {
                    let wk = d21 * (d11 * a[(j, k)] - a[(j, k + 1)]);
                    let wkp1 = d21 * (d22 * a[(j, k + 1)] - a[(j, k)]);
                    for i in j..n {
                        let upd = a[(i, k)] * wk + a[(i, k + 1)] * wkp1;
                        a[(i, j)] -= upd;
                    }
                    a[(j, k)] = wk;
                    a[(j, k + 1)] = wkp1;
                }
            }
            ipiv[k] = -((kp + 1) as i64);
            ipiv[k + 1] = -((kp + 1) as i64);
        }
        k += kstep;
    }

    Ok(LdlFactor { a, ipiv })
}

impl LdlFactor {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.a.nrows();
        let a = &self.a;
        let mut x = b.clone();

        // Solve L * D * y = P b
        let mut k = 0usize;
        while k < n {
            if self.ipiv[k] > 0 {
                let kp = (self.ipiv[k] - 1) as usize;
                if kp != k {
                    x.swap_rows(k, kp);
                }
                for i in k + 1..n {
                    let upd = a[(i, k)] * x[k];
                    x[i] -= upd;
                }
                x[k] /= a[(k, k)];
                k += 1;
            } else {
                let kp = (-self.ipiv[k] - 1) as usize;
                if kp != k + 1 {
                    x.swap_rows(k + 1, kp);
                }
                for i in k + 2..n {
                    let upd = a[(i, k)] * x[k] + a[(i, k + 1)] * x[k + 1];
                    x[i] -= upd;
                }
                let akm1k = a[(k + 1, k)];
                let akm1 = a[(k, k)] / akm1k;
                let ak = a[(k + 1, k + 1)] / akm1k;
                let denom = akm1 * ak - 1.0;
                let bkm1 = x[k] / akm1k;
                let bk = x[k + 1] / akm1k;
                x[k] = (ak * bkm1 - bk) / denom;
                x[k + 1] = (akm1 * bk - bkm1) / denom;
                k += 2;
            }
        }

        // Solve L^T * P x = y
        let mut k = n as i64 - 1;
        while k >= 0 {
            let ku = k as usize;
            if self.ipiv[ku] > 0 {
                for i in ku + 1..n {
                    let upd = a[(i, ku)] * x[i];
                    x[ku] -= upd;
                }
                let kp = (self.ipiv[ku] - 1) as usize;
                if kp != ku {
                    x.swap_rows(ku, kp);
                }
                k -= 1;
            } else {
                // 2x2 block occupies columns ku-1, ku
                for i in ku + 1..n {
                    let upd = a[(i, ku)] * x[i];
                    x[ku] -= upd;
                    let upd = a[(i, ku - 1)] * x[i];
                    x[ku - 1] -= upd;
                }
                let kp = (-self.ipiv[ku] - 1) as usize;
                if kp != ku {
                    x.swap_rows(ku, kp);
                }
                k -= 2;
            }
        }
        x
    }
}

pub fn one_norm(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        let s: f64 = m.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Hager-style 1-norm condition estimate using the factorization for solves.
pub fn condest_1(m: &DMatrix<f64>, factor: &LdlFactor) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0f64;
    for _ in 0..5 {
        let y = factor.solve(&x);
        est = y.iter().map(|v| v.abs()).sum();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        // A symmetric: A^-T = A^-1
        let z = factor.solve(&xi);
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bj, bv), (j, &v)| {
                if v.abs() > bv {
                    (j, v.abs())
                } else {
                    (bj, bv)
                }
            });
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[jmax] = 1.0;
    }
    one_norm(m) * est
}
