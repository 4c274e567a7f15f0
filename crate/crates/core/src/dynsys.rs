//! Dynamical systems in split center/stable form, and the registry of the
//! three built-in example systems with their reference manifolds.

use crate::error::{Error, Result};
use crate::taylor::{multi_indices, MultiIndex};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

pub type VecF = DVector<f64>;
pub type MatF = DMatrix<f64>;

type RhsFn = Arc<dyn Fn(&VecF, &VecF) -> VecF + Send + Sync>;
type JacFn = Arc<dyn Fn(&VecF, &VecF) -> MatF + Send + Sync>;

/// A system split into a center block (dimension d, spectrum on the imaginary
/// axis) and a stable block (dimension m, spectrum in the left half plane):
///
///   x' = L1 x + N1(x, y)
///   y' = L2 y + N2(x, y)
#[derive(Clone)]
pub struct SplitSystem {
    pub d: usize,
    pub m: usize,
    pub l1: MatF,
    pub l2: MatF,
    n1: RhsFn,
    n2: RhsFn,
    /// d x (d+m) Jacobian of N1 w.r.t. (x, y), if analytic.
    jac_n1: Option<JacFn>,
    /// m x (d+m) Jacobian of N2 w.r.t. (x, y), if analytic.
    jac_n2: Option<JacFn>,
}

const FD_STEP: f64 = 1e-7;

impl SplitSystem {
    pub fn new(
        l1: MatF,
        l2: MatF,
        n1: RhsFn,
        n2: RhsFn,
        jac_n1: Option<JacFn>,
        jac_n2: Option<JacFn>,
    ) -> Result<Self> {
        let d = l1.nrows();
        let m = l2.nrows();
        if !l1.is_square() || !l2.is_square() {
            return Err(Error::InvalidSystem("L1 and L2 must be square".into()));
        }
        let sys = SplitSystem { d, m, l1, l2, n1, n2, jac_n1, jac_n2 };

        let x0 = VecF::zeros(d);
        let y0 = VecF::zeros(m);
        if sys.n1(&x0, &y0).amax() > 1e-14 || sys.n2(&x0, &y0).amax() > 1e-14 {
            return Err(Error::InvalidSystem("N1(0,0) and N2(0,0) must vanish".into()));
        }
        for ev in sys.l1.complex_eigenvalues().iter() {
            if ev.re.abs() > 1e-10 {
                return Err(Error::InvalidSystem(format!(
                    "L1 eigenvalue {ev} has nonzero real part"
                )));
            }
        }
        for ev in sys.l2.complex_eigenvalues().iter() {
            if ev.re > -1e-10 {
                return Err(Error::InvalidSystem(format!(
                    "L2 eigenvalue {ev} is not strictly stable"
                )));
            }
        }
        Ok(sys)
    }

    pub fn n1(&self, x: &VecF, y: &VecF) -> VecF {
        (self.n1)(x, y)
    }

    pub fn n2(&self, x: &VecF, y: &VecF) -> VecF {
        (self.n2)(x, y)
    }

    pub fn dim(&self) -> usize {
        self.d + self.m
    }

    fn split<'a>(&self, state: &'a VecF) -> (VecF, VecF) {
        let x = VecF::from_iterator(self.d, state.iter().take(self.d).cloned());
        let y = VecF::from_iterator(self.m, state.iter().skip(self.d).cloned());
        (x, y)
    }

    /// Right-hand side of the full system at a concatenated state (x, y).
    pub fn full_rhs(&self, state: &VecF) -> Result<VecF> {
        let (x, y) = self.split(state);
        let fx = &self.l1 * &x + self.n1(&x, &y);
        let fy = &self.l2 * &y + self.n2(&x, &y);
        let mut out = VecF::zeros(self.dim());
        out.rows_mut(0, self.d).copy_from(&fx);
        out.rows_mut(self.d, self.m).copy_from(&fy);
        for (i, v) in out.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("full_rhs component {i} at state {state:?}"),
                });
            }
        }
        Ok(out)
    }

    /// d x (d+m) Jacobian of N1 with respect to (x, y); analytic when
    /// registered, central finite differences otherwise.
    pub fn jac_n1_at(&self, x: &VecF, y: &VecF) -> MatF {
        if let Some(j1) = &self.jac_n1 {
            return j1(x, y);
        }
        let n = self.dim();
        let mut jac = MatF::zeros(self.d, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            let mut yp = y.clone();
            let mut ym = y.clone();
            if j < self.d {
                xp[j] += FD_STEP;
                xm[j] -= FD_STEP;
            } else {
                yp[j - self.d] += FD_STEP;
                ym[j - self.d] -= FD_STEP;
            }
            let dn1 = (self.n1(&xp, &yp) - self.n1(&xm, &ym)) / (2.0 * FD_STEP);
            for i in 0..self.d {
                jac[(i, j)] = dn1[i];
            }
        }
        jac
    }

    /// Full (d+m) x (d+m) Jacobian of the right-hand side; analytic when the
    /// nonlinear Jacobians were registered, central finite differences
    /// otherwise.
    pub fn full_jacobian(&self, state: &VecF) -> MatF {
        let (x, y) = self.split(state);
        let n = self.dim();
        let mut jac = MatF::zeros(n, n);
        jac.view_mut((0, 0), (self.d, self.d)).copy_from(&self.l1);
        jac.view_mut((self.d, self.d), (self.m, self.m)).copy_from(&self.l2);
        match (&self.jac_n1, &self.jac_n2) {
            (Some(j1), Some(j2)) => {
                let a = j1(&x, &y);
                let b = j2(&x, &y);
                for i in 0..self.d {
                    for j in 0..n {
                        jac[(i, j)] += a[(i, j)];
                    }
                }
                for i in 0..self.m {
                    for j in 0..n {
                        jac[(self.d + i, j)] += b[(i, j)];
                    }
                }
            }
            _ => {
                for j in 0..n {
                    let mut sp = state.clone();
                    let mut sm = state.clone();
                    sp[j] += FD_STEP;
                    sm[j] -= FD_STEP;
                    let (xp, yp) = self.split(&sp);
                    let (xm, ym) = self.split(&sm);
                    let dn1 = (self.n1(&xp, &yp) - self.n1(&xm, &ym)) / (2.0 * FD_STEP);
                    let dn2 = (self.n2(&xp, &yp) - self.n2(&xm, &ym)) / (2.0 * FD_STEP);
                    for i in 0..self.d {
                        jac[(i, j)] += dn1[i];
                    }
                    for i in 0..self.m {
                        jac[(self.d + i, j)] += dn2[i];
                    }
                }
            }
        }
        jac
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldKind {
    Exact,
    AlgebraicOrder4,
}

/// A closed-form manifold y = h(x) used as reference data: either exact or an
/// order-4 algebraic expansion.
#[derive(Clone)]
pub struct ReferenceManifold {
    expr: Arc<dyn Fn(&VecF) -> f64 + Send + Sync>,
    grad: Arc<dyn Fn(&VecF) -> VecF + Send + Sync>,
    pub taylor: Vec<(MultiIndex, f64)>,
    pub kind: ManifoldKind,
}

impl ReferenceManifold {
    pub fn value(&self, x: &VecF) -> f64 {
        (self.expr)(x)
    }

    pub fn gradient(&self, x: &VecF) -> VecF {
        (self.grad)(x)
    }
}

/// The three example systems, in split form.
pub fn register_example(id: u32) -> Result<SplitSystem> {
    match id {
        1 => SplitSystem::new(
            MatF::zeros(1, 1),
            MatF::from_element(1, 1, -1.0),
            Arc::new(|x: &VecF, y: &VecF| VecF::from_vec(vec![x[0] * y[0]])),
            Arc::new(|x: &VecF, _y: &VecF| VecF::from_vec(vec![-x[0] * x[0]])),
            Some(Arc::new(|x: &VecF, y: &VecF| {
                MatF::from_row_slice(1, 2, &[y[0], x[0]])
            })),
            Some(Arc::new(|x: &VecF, _y: &VecF| {
                MatF::from_row_slice(1, 2, &[-2.0 * x[0], 0.0])
            })),
        ),
        2 => SplitSystem::new(
            MatF::zeros(1, 1),
            MatF::from_element(1, 1, -1.0),
            Arc::new(|x: &VecF, y: &VecF| VecF::from_vec(vec![-x[0] * y[0]])),
            Arc::new(|x: &VecF, y: &VecF| {
                VecF::from_vec(vec![x[0] * x[0] - 2.0 * y[0] * y[0]])
            }),
            Some(Arc::new(|x: &VecF, y: &VecF| {
                MatF::from_row_slice(1, 2, &[-y[0], -x[0]])
            })),
            Some(Arc::new(|x: &VecF, y: &VecF| {
                MatF::from_row_slice(1, 2, &[2.0 * x[0], -4.0 * y[0]])
            })),
        ),
        3 => SplitSystem::new(
            MatF::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
            MatF::from_element(1, 1, -1.0),
            Arc::new(|x: &VecF, y: &VecF| VecF::from_vec(vec![y[0] * x[0], y[0] * x[1]])),
            Arc::new(|x: &VecF, y: &VecF| {
                VecF::from_vec(vec![-x[0] * x[0] - x[1] * x[1] + y[0] * y[0]])
            }),
            Some(Arc::new(|x: &VecF, y: &VecF| {
                MatF::from_row_slice(2, 3, &[y[0], 0.0, x[0], 0.0, y[0], x[1]])
            })),
            Some(Arc::new(|x: &VecF, y: &VecF| {
                MatF::from_row_slice(1, 3, &[-2.0 * x[0], -2.0 * x[1], 2.0 * y[0]])
            })),
        ),
        other => Err(Error::UnknownExample(other)),
    }
}

/// Reference manifolds for the examples: the exact h for example 2, the
/// order-4 algebraic expansions for examples 1 and 3.
pub fn reference_manifold(id: u32) -> Result<ReferenceManifold> {
    match id {
        1 => {
            // h_alg(x) = -x^2 - 2x^4
            let mut taylor: Vec<(MultiIndex, f64)> =
                multi_indices(1, 4).into_iter().map(|i| (i, 0.0)).collect();
            taylor[2].1 = -1.0;
            taylor[4].1 = -2.0;
            Ok(ReferenceManifold {
                expr: Arc::new(|x: &VecF| -x[0].powi(2) - 2.0 * x[0].powi(4)),
                grad: Arc::new(|x: &VecF| {
                    VecF::from_vec(vec![-2.0 * x[0] - 8.0 * x[0].powi(3)])
                }),
                taylor,
                kind: ManifoldKind::AlgebraicOrder4,
            })
        }
        2 => {
            // exact center manifold h(x) = x^2
            let mut taylor: Vec<(MultiIndex, f64)> =
                multi_indices(1, 4).into_iter().map(|i| (i, 0.0)).collect();
            taylor[2].1 = 1.0;
            Ok(ReferenceManifold {
                expr: Arc::new(|x: &VecF| x[0] * x[0]),
                grad: Arc::new(|x: &VecF| VecF::from_vec(vec![2.0 * x[0]])),
                taylor,
                kind: ManifoldKind::Exact,
            })
        }
        3 => {
            // h_alg(x) = -(x1^2 + x2^2) - 3 (x1^2 + x2^2)^2
            let mut taylor: Vec<(MultiIndex, f64)> =
                multi_indices(2, 4).into_iter().map(|i| (i, 0.0)).collect();
            for (idx, c) in taylor.iter_mut() {
                match idx.as_slice() {
                    [2, 0] | [0, 2] => *c = -1.0,
                    [4, 0] | [0, 4] => *c = -3.0,
                    [2, 2] => *c = -6.0,
                    _ => {}
                }
            }
            Ok(ReferenceManifold {
                expr: Arc::new(|x: &VecF| {
                    let r2 = x[0] * x[0] + x[1] * x[1];
                    -r2 - 3.0 * r2 * r2
                }),
                grad: Arc::new(|x: &VecF| {
                    let r2 = x[0] * x[0] + x[1] * x[1];
                    let c = -2.0 - 12.0 * r2;
                    VecF::from_vec(vec![c * x[0], c * x[1]])
                }),
                taylor,
                kind: ManifoldKind::AlgebraicOrder4,
            })
        }
        other => Err(Error::UnknownExample(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn registry_rejects_unknown_ids() {
        assert!(register_example(0).is_err());
        assert!(register_example(4).is_err());
        assert!(reference_manifold(7).is_err());
    }

    #[test]
    fn example_definitions() {
        let s1 = register_example(1).unwrap();
        assert_eq!((s1.d, s1.m), (1, 1));
        let n2 = s1.n2(&VecF::from_vec(vec![0.1]), &VecF::from_vec(vec![0.0]));
        assert_relative_eq!(n2[0], -0.01);

        let s2 = register_example(2).unwrap();
        let rhs = s2.full_rhs(&VecF::zeros(2)).unwrap();
        assert_abs_diff_eq!(rhs.amax(), 0.0);
        let rhs = s2.full_rhs(&VecF::from_vec(vec![0.0, 1.0])).unwrap();
        assert_relative_eq!(rhs[1], -3.0);

        let s3 = register_example(3).unwrap();
        let evs = s3.l1.complex_eigenvalues();
        let mut ims: Vec<f64> = evs.iter().map(|e| e.im).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(ims[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ims[1], 1.0, epsilon = 1e-12);
        for ev in evs.iter() {
            assert_abs_diff_eq!(ev.re, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn equilibrium_at_origin_for_all_examples() {
        for id in 1..=3 {
            let sys = register_example(id).unwrap();
            let z = VecF::zeros(sys.dim());
            assert_eq!(sys.full_rhs(&z).unwrap().amax(), 0.0);
        }
    }

    #[test]
    fn example1_rhs_on_algebraic_leading_term() {
        let sys = register_example(1).unwrap();
        let rhs = sys.full_rhs(&VecF::from_vec(vec![0.1, -0.01])).unwrap();
        assert_relative_eq!(rhs[0], -0.001);
        assert_abs_diff_eq!(rhs[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn reference_manifold_values() {
        let h2 = reference_manifold(2).unwrap();
        assert_relative_eq!(h2.value(&VecF::from_vec(vec![0.1])), 0.01);
        let h1 = reference_manifold(1).unwrap();
        assert_abs_diff_eq!(h1.value(&VecF::from_vec(vec![0.0])), 0.0);
        let h3 = reference_manifold(3).unwrap();
        assert_relative_eq!(h3.value(&VecF::from_vec(vec![0.1, 0.0])), -0.0103);
    }

    #[test]
    fn reference_manifolds_are_tangent_at_origin() {
        for id in 1..=3 {
            let h = reference_manifold(id).unwrap();
            let d = if id == 3 { 2 } else { 1 };
            let zero = VecF::zeros(d);
            assert_abs_diff_eq!(h.value(&zero), 0.0);
            // central finite-difference gradient at the origin
            let mut g = VecF::zeros(d);
            for j in 0..d {
                let mut xp = zero.clone();
                let mut xm = zero.clone();
                xp[j] += 1e-6;
                xm[j] -= 1e-6;
                g[j] = (h.value(&xp) - h.value(&xm)) / 2e-6;
            }
            assert!(g.norm() <= 1e-9);
            assert!(h.gradient(&zero).norm() <= 1e-12);
        }
    }

    #[test]
    fn exact_manifold_solves_invariance_pde() {
        // for example 2, h(x) = x^2 satisfies
        // N2(x,h) + L2 h - Dh (L1 x + N1(x,h)) = 0
        let sys = register_example(2).unwrap();
        let h = reference_manifold(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let x = VecF::from_vec(vec![rng.gen_range(-0.1..0.1)]);
            let hx = VecF::from_vec(vec![h.value(&x)]);
            let lhs = sys.n2(&x, &hx) + &sys.l2 * &hx;
            let rhs_inner = &sys.l1 * &x + sys.n1(&x, &hx);
            let defect = lhs[0] - h.gradient(&x).dot(&rhs_inner);
            assert_abs_diff_eq!(defect, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn registration_rejects_bad_splittings() {
        // L1 with nonzero real part
        let bad = SplitSystem::new(
            MatF::from_element(1, 1, -0.5),
            MatF::from_element(1, 1, -1.0),
            Arc::new(|_: &VecF, _: &VecF| VecF::zeros(1)),
            Arc::new(|_: &VecF, _: &VecF| VecF::zeros(1)),
            None,
            None,
        );
        assert!(bad.is_err());
        // N1(0,0) != 0
        let bad = SplitSystem::new(
            MatF::zeros(1, 1),
            MatF::from_element(1, 1, -1.0),
            Arc::new(|_: &VecF, _: &VecF| VecF::from_vec(vec![0.5])),
            Arc::new(|_: &VecF, _: &VecF| VecF::zeros(1)),
            None,
            None,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn fd_jacobian_fallback_matches_analytic() {
        let sys = register_example(3).unwrap();
        let fd_sys = SplitSystem::new(
            sys.l1.clone(),
            sys.l2.clone(),
            Arc::new(|x: &VecF, y: &VecF| VecF::from_vec(vec![y[0] * x[0], y[0] * x[1]])),
            Arc::new(|x: &VecF, y: &VecF| {
                VecF::from_vec(vec![-x[0] * x[0] - x[1] * x[1] + y[0] * y[0]])
            }),
            None,
            None,
        )
        .unwrap();
        let state = VecF::from_vec(vec![0.05, -0.03, 0.02]);
        let ja = sys.full_jacobian(&state);
        let jf = fd_sys.full_jacobian(&state);
        assert!((ja - jf).amax() < 1e-7);
    }
}
