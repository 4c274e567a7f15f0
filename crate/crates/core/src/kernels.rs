//! Kernel families with analytic derivatives up to mixed order (2,2) and
//! Taylor expansion of kernel sections at the origin.
//!
//! Three families are provided:
//!  - polynomial: k(x,y) = (1 + gamma x^T y)^p
//!  - gaussian:   k(x,y) = exp(-eps ||x-y||^2)
//!  - wendland (p_d = 1, p_k = 1, support radius 1):
//!    k(x,y) = (1 - r)_+^3 (1 + 3r),  r = ||x-y||
//!
//! All derivatives are closed forms; finite differences appear only in tests.

use crate::error::{Error, Result};
use crate::taylor::{MultiIndex, TruncPoly};
use nalgebra::DMatrix;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    Polynomial { gamma: f64, degree: u32 },
    Gaussian { eps: f64 },
    Wendland,
}

impl KernelSpec {
    pub fn polynomial(gamma: f64, degree: u32) -> Result<Self> {
        if gamma <= 0.0 || degree < 1 {
            return Err(Error::InvalidConfig(format!(
                "polynomial kernel needs gamma > 0 and degree >= 1, got gamma={gamma}, degree={degree}"
            )));
        }
        Ok(KernelSpec::Polynomial { gamma, degree })
    }

    pub fn gaussian(eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gaussian kernel needs eps > 0, got {eps}"
            )));
        }
        Ok(KernelSpec::Gaussian { eps })
    }

    pub fn name(&self) -> String {
        match self {
            KernelSpec::Polynomial { gamma, degree } => format!("poly(gamma={gamma},p={degree})"),
            KernelSpec::Gaussian { eps } => format!("gauss(eps={eps})"),
            KernelSpec::Wendland => "wendland".into(),
        }
    }

    fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Self::check_dims(x, y)?;
        Ok(match *self {
            KernelSpec::Polynomial { gamma, degree } => {
                (1.0 + gamma * dot(x, y)).powi(degree as i32)
            }
            KernelSpec::Gaussian { eps } => (-eps * dist2(x, y)).exp(),
            KernelSpec::Wendland => {
                let r = dist2(x, y).sqrt();
                if r >= 1.0 {
                    0.0
                } else {
                    (1.0 - r).powi(3) * (1.0 + 3.0 * r)
                }
            }
        })
    }

    /// Gradient of y |-> k(x, y).
    pub fn grad2(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Self::check_dims(x, y)?;
        Ok(match *self {
            KernelSpec::Polynomial { gamma, degree } => {
                let p = degree as f64;
                let u = (1.0 + gamma * dot(x, y)).powi(degree as i32 - 1);
                x.iter().map(|&xi| p * gamma * xi * u).collect()
            }
            KernelSpec::Gaussian { eps } => {
                let k = (-eps * dist2(x, y)).exp();
                x.iter()
                    .zip(y)
                    .map(|(&xi, &yi)| 2.0 * eps * (xi - yi) * k)
                    .collect()
            }
            KernelSpec::Wendland => {
                let r = dist2(x, y).sqrt();
                if r >= 1.0 {
                    // value and first derivative vanish at the support edge
                    vec![0.0; x.len()]
                } else {
                    // phi(r) = 1 - 6r^2 + 8r^3 - 3r^4, phi'(r) = -12 r (1-r)^2
                    let c = 12.0 * (1.0 - r).powi(2);
                    x.iter().zip(y).map(|(&xi, &yi)| c * (xi - yi)).collect()
                }
            }
        })
    }

    /// Gradient of x |-> k(x, y). Equals grad2 with arguments swapped.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.grad2(y, x)
    }

    /// Mixed second derivatives (d/dx_i d/dy_j) k(x, y), as a d x d matrix.
    pub fn grad1_grad2(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        Self::check_dims(x, y)?;
        let d = x.len();
        Ok(match *self {
            KernelSpec::Polynomial { gamma, degree } => {
                let p = degree as f64;
                let base = 1.0 + gamma * dot(x, y);
                let u1 = base.powi(degree as i32 - 1);
                let u2 = if degree >= 2 {
                    base.powi(degree as i32 - 2)
                } else {
                    0.0
                };
                DMatrix::from_fn(d, d, |i, j| {
                    let mut v = p * (p - 1.0) * gamma * gamma * y[i] * x[j] * u2;
                    if i == j {
                        v += p * gamma * u1;
                    }
                    v
                })
            }
            KernelSpec::Gaussian { eps } => {
                let k = (-eps * dist2(x, y)).exp();
                DMatrix::from_fn(d, d, |i, j| {
                    let ti = x[i] - y[i];
                    let tj = x[j] - y[j];
                    let mut v = -4.0 * eps * eps * ti * tj * k;
                    if i == j {
                        v += 2.0 * eps * k;
                    }
                    v
                })
            }
            KernelSpec::Wendland => {
                let r = dist2(x, y).sqrt();
                if r >= 1.0 {
                    DMatrix::zeros(d, d)
                } else {
                    // k = g(s), s = ||x-y||^2, g'(s) = -6(1-r)^2, g''(s) = 6(1/r - 1)
                    // d/dx_i d/dy_j = -4 t_i t_j g''(s) - 2 delta_ij g'(s)
                    DMatrix::from_fn(d, d, |i, j| {
                        let ti = x[i] - y[i];
                        let tj = x[j] - y[j];
                        let mut v = if r > 0.0 {
                            -24.0 * ti * tj * (1.0 - r) / r
                        } else {
                            0.0
                        };
                        if i == j {
                            v += 12.0 * (1.0 - r).powi(2);
                        }
                        v
                    })
                }
            }
        })
    }

    /// First-argument gradient of each grad2-section entry at y = 0, i.e. the
    /// d x d matrix (d/dx_i) (d/dy_j k)(x, 0).
    pub fn grad1_of_grad2_section(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let zero = vec![0.0; x.len()];
        self.grad1_grad2(x, &zero)
    }

    /// Taylor coefficients of the section x |-> k(x, center) at x = 0, up to
    /// total degree `order` (coefficient convention: partial^a / a!).
    pub fn taylor_coeffs_of_section(
        &self,
        center: &[f64],
        order: u32,
    ) -> Result<Vec<(MultiIndex, f64)>> {
        Ok(self.section_poly(center, order)?.table())
    }

    /// Same, for the grad2-section x |-> (d/dy_j k)(x, 0).
    pub fn taylor_coeffs_of_grad2_section(
        &self,
        j: usize,
        dim: usize,
        order: u32,
    ) -> Result<Vec<(MultiIndex, f64)>> {
        Ok(self.grad2_section_poly(j, dim, order)?.table())
    }

    pub(crate) fn section_poly(&self, center: &[f64], order: u32) -> Result<TruncPoly> {
        let d = center.len();
        match *self {
            KernelSpec::Polynomial { gamma, degree } => {
                // (1 + gamma c.x)^p, binomially expanded
                let lin: Vec<f64> = center.iter().map(|&c| gamma * c).collect();
                let u = TruncPoly::linear(d, order, 0.0, &lin);
                let mut out = TruncPoly::zero(d, order);
                let mut binom = 1.0f64;
                let mut upow = TruncPoly::constant(d, order, 1.0);
                for j in 0..=order.min(degree) {
                    if j > 0 {
                        binom *= (degree - j + 1) as f64 / j as f64;
                        upow = upow.mul(&u);
                    }
                    out = out.add(&upow.scale(binom));
                }
                Ok(out)
            }
            KernelSpec::Gaussian { eps } => {
                // exp(-eps ||x-c||^2) = exp(-eps||c||^2) exp(2 eps c.x - eps ||x||^2)
                let c2: f64 = center.iter().map(|c| c * c).sum();
                let mut w = TruncPoly::zero(d, order);
                for i in 0..d {
                    let mut idx = vec![0u32; d];
                    idx[i] = 1;
                    w.add_term(&idx, 2.0 * eps * center[i]);
                    idx[i] = 2;
                    w.add_term(&idx, -eps);
                }
                Ok(w.exp_no_const().scale((-eps * c2).exp()))
            }
            KernelSpec::Wendland => {
                if d != 1 {
                    return Err(Error::TaylorDomain(
                        "wendland Taylor sections implemented for d = 1 only".into(),
                    ));
                }
                let c = center[0];
                if c.abs() >= 1.0 {
                    return Err(Error::TaylorDomain(format!(
                        "wendland section center |{c}| >= 1 crosses the support boundary"
                    )));
                }
                // Inner polynomial piece with the branch sign of |x - c| at x = 0
                // (the x > c branch is taken when c = 0).
                let s = if c > 0.0 { -1.0 } else { 1.0 };
                let q = TruncPoly::linear(1, order, -c, &[1.0]); // x - c
                let q2 = q.mul(&q);
                let q3 = q2.mul(&q);
                let q4 = q2.mul(&q2);
                let mut out = TruncPoly::constant(1, order, 1.0);
                out = out.add(&q2.scale(-6.0));
                out = out.add(&q3.scale(8.0 * s));
                out = out.add(&q4.scale(-3.0));
                Ok(out)
            }
        }
    }

    pub(crate) fn grad2_section_poly(&self, j: usize, dim: usize, order: u32) -> Result<TruncPoly> {
        match *self {
            KernelSpec::Polynomial { gamma, degree } => {
                // d/dy_j (1 + gamma x.y)^p at y = 0 is p gamma x_j
                let mut out = TruncPoly::zero(dim, order);
                let mut idx = vec![0u32; dim];
                idx[j] = 1;
                out.add_term(&idx, degree as f64 * gamma);
                Ok(out)
            }
            KernelSpec::Gaussian { eps } => {
                // 2 eps x_j exp(-eps ||x||^2)
                let mut w = TruncPoly::zero(dim, order);
                for i in 0..dim {
                    let mut idx = vec![0u32; dim];
                    idx[i] = 2;
                    w.add_term(&idx, -eps);
                }
                let mut xj = TruncPoly::zero(dim, order);
                let mut idx = vec![0u32; dim];
                idx[j] = 1;
                xj.add_term(&idx, 2.0 * eps);
                Ok(w.exp_no_const().mul(&xj))
            }
            KernelSpec::Wendland => {
                if dim != 1 {
                    return Err(Error::TaylorDomain(
                        "wendland Taylor sections implemented for d = 1 only".into(),
                    ));
                }
                // 12 (1 - |x|)^2 x on the x > 0 branch: 12x - 24x^2 + 12x^3
                let mut out = TruncPoly::zero(1, order);
                out.add_term(&[1], 12.0);
                out.add_term(&[2], -24.0);
                out.add_term(&[3], 12.0);
                Ok(out)
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
