//! P-greedy center selection with incremental Newton-basis power updates.

use crate::dynsys::VecF;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use std::io::Write;

/// Squared power values below this are treated as Gram rank exhaustion
/// (e.g. the finite-dimensional feature space of the polynomial kernel):
/// beyond it the incremental updates only chase rounding noise.
const DEGENERACY_TOL: f64 = 1e-15;
const NEG_POWER_TOL: f64 = 1e-12;

pub const DEFAULT_MAX_POINTS: usize = 200;

#[derive(Clone, Debug)]
pub struct GreedyResult {
    /// Selected candidate indices, in selection order.
    pub indices: Vec<usize>,
    /// Max power-function value (un-squared) after each selection.
    pub power_history: Vec<f64>,
    pub eps_tol: f64,
    /// Fill distance of the selected set over the full candidate set.
    pub fill_distance: f64,
}

impl GreedyResult {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "step,index,power")?;
        for (step, (idx, p)) in self.indices.iter().zip(&self.power_history).enumerate() {
            writeln!(w, "{step},{idx},{p}")?;
        }
        Ok(())
    }
}

fn clamp_power_sq(p: f64, index: usize) -> Result<f64> {
    if p < -NEG_POWER_TOL {
        Err(Error::NegativePower { index, value: p })
    } else {
        Ok(p.max(0.0))
    }
}

/// Select centers by the P-greedy rule: repeatedly take the candidate
/// maximizing the power function of the current set, updating the squared
/// power incrementally through a Newton basis (one kernel column per step,
/// no Gram inversion). Stops when the max power drops to `eps_tol`, when
/// `max_points` are selected, or when the kernel's finite-dimensional
/// feature space is exhausted.
pub fn p_greedy(
    x: &[VecF],
    kernel: &KernelSpec,
    eps_tol: f64,
    max_points: usize,
) -> Result<GreedyResult> {
    p_greedy_with_degeneracy(x, kernel, eps_tol, max_points, DEGENERACY_TOL)
}

pub fn p_greedy_with_degeneracy(
    x: &[VecF],
    kernel: &KernelSpec,
    eps_tol: f64,
    max_points: usize,
    degeneracy_tol: f64,
) -> Result<GreedyResult> {
    let eval = |a: &[f64], b: &[f64]| kernel.eval(a, b);
    p_greedy_inner(x, &eval, eps_tol, max_points, degeneracy_tol)
}

/// P-greedy selection in the constrained approximation space: the power
/// function is conditioned on the value and gradient functionals at the
/// origin, which every fitted model matches exactly. Selection therefore
/// skips information the constraints already provide, which matters when the
/// candidates cluster near the origin.
pub fn p_greedy_constrained(
    x: &[VecF],
    kernel: &KernelSpec,
    eps_tol: f64,
    max_points: usize,
) -> Result<GreedyResult> {
    if x.is_empty() {
        return Err(Error::InvalidConfig("no greedy candidates".into()));
    }
    let ck = ConditionedKernel::new(kernel, x[0].len())?;
    let eval = |a: &[f64], b: &[f64]| ck.eval(a, b);
    p_greedy_inner(x, &eval, eps_tol, max_points, DEGENERACY_TOL)
}

/// Base kernel minus its projection onto the span of the origin value and
/// gradient representers: k0(x,y) = k(x,y) − f(x)ᵀ M⁻¹ f(y) with
/// f(x) = (k(x,0), ∂k(x,0)) and M the Gram matrix of those functionals.
struct ConditionedKernel<'a> {
    kernel: &'a KernelSpec,
    minv: nalgebra::DMatrix<f64>,
    dim: usize,
}

impl<'a> ConditionedKernel<'a> {
    fn new(kernel: &'a KernelSpec, dim: usize) -> Result<Self> {
        let zero = vec![0.0; dim];
        let n = 1 + dim;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        m[(0, 0)] = kernel.eval(&zero, &zero)?;
        let g = kernel.grad2(&zero, &zero)?;
        for j in 0..dim {
            m[(0, 1 + j)] = g[j];
            m[(1 + j, 0)] = g[j];
        }
        let gg = kernel.grad1_grad2(&zero, &zero)?;
        for i in 0..dim {
            for j in 0..dim {
                m[(1 + i, 1 + j)] = gg[(i, j)];
            }
        }
        let minv = m
            .try_inverse()
            .ok_or_else(|| Error::Factorization("singular constraint Gram matrix".into()))?;
        Ok(Self { kernel, minv, dim })
    }

    fn feat(&self, x: &[f64]) -> Result<Vec<f64>> {
        let zero = vec![0.0; self.dim];
        let mut v = Vec::with_capacity(1 + self.dim);
        v.push(self.kernel.eval(x, &zero)?);
        v.extend(self.kernel.grad2(x, &zero)?);
        Ok(v)
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let fx = self.feat(x)?;
        let fy = self.feat(y)?;
        let mut corr = 0.0;
        for (i, fxi) in fx.iter().enumerate() {
            for (j, fyj) in fy.iter().enumerate() {
                corr += fxi * self.minv[(i, j)] * fyj;
            }
        }
        Ok(self.kernel.eval(x, y)? - corr)
    }
}

fn p_greedy_inner(
    x: &[VecF],
    eval: &dyn Fn(&[f64], &[f64]) -> Result<f64>,
    eps_tol: f64,
    max_points: usize,
    degeneracy_tol: f64,
) -> Result<GreedyResult> {
    if x.is_empty() {
        return Err(Error::InvalidConfig("no greedy candidates".into()));
    }
    if eps_tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "eps_tol must be positive, got {eps_tol}"
        )));
    }
    let n = x.len();
    // squared power, initialized to the kernel diagonal
    let mut p = Vec::with_capacity(n);
    for xi in x {
        p.push(eval(xi.as_slice(), xi.as_slice())?);
    }
    // Newton basis values at all candidates, one row per selected center
    let mut v: Vec<Vec<f64>> = Vec::new();
    let mut indices: Vec<usize> = Vec::new();
    let mut power_history: Vec<f64> = Vec::new();

    loop {
        // ties resolved by lowest candidate index (strict > keeps the first)
        let mut best = usize::MAX;
        let mut best_p = f64::NEG_INFINITY;
        for (i, &pi) in p.iter().enumerate() {
            if indices.contains(&i) {
                continue;
            }
            if pi > best_p {
                best_p = pi;
                best = i;
            }
        }
        if best == usize::MAX {
            break; // candidates exhausted
        }
        let best_p = clamp_power_sq(best_p, best)?;
        if best_p.sqrt() <= eps_tol || best_p < degeneracy_tol {
            break;
        }

        // Newton basis column for the new center
        let xc = &x[best];
        let denom = best_p.sqrt();
        let mut col = vec![0.0f64; n];
        for i in 0..n {
            let mut val = eval(x[i].as_slice(), xc.as_slice())?;
            for row in &v {
                val -= row[i] * row[best];
            }
            col[i] = val / denom;
        }
        for i in 0..n {
            p[i] -= col[i] * col[i];
            p[i] = clamp_power_sq(p[i], i)?;
        }
        v.push(col);
        indices.push(best);

        let max_p = p
            .iter()
            .enumerate()
            .filter(|(i, _)| !indices.contains(i))
            .map(|(_, &pi)| pi)
            .fold(0.0f64, f64::max);
        power_history.push(max_p.sqrt());

        if indices.len() >= max_points {
            break;
        }
    }

    let selected: Vec<VecF> = indices.iter().map(|&i| x[i].clone()).collect();
    let fill = if selected.is_empty() {
        f64::INFINITY
    } else {
        fill_distance(&selected, x)
    };
    Ok(GreedyResult {
        indices,
        power_history,
        eps_tol,
        fill_distance: fill,
    })
}

/// Power function of a fixed center set by the dense formula
/// P(x)^2 = k(x,x) − k(x,X) Gram(X)^{-1} k(X,x).
pub fn power_function(centers: &[VecF], kernel: &KernelSpec, query: &VecF) -> Result<f64> {
    let kqq = kernel.eval(query.as_slice(), query.as_slice())?;
    if centers.is_empty() {
        return Ok(kqq.max(0.0).sqrt());
    }
    let n = centers.len();
    let gram = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        kernel
            .eval(centers[i].as_slice(), centers[j].as_slice())
            .unwrap_or(f64::NAN)
    });
    let kx = nalgebra::DVector::from_fn(n, |i, _| {
        kernel
            .eval(centers[i].as_slice(), query.as_slice())
            .unwrap_or(f64::NAN)
    });
    let sol = gram
        .lu()
        .solve(&kx)
        .ok_or_else(|| Error::Factorization("singular Gram matrix".into()))?;
    let p2 = clamp_power_sq(kqq - kx.dot(&sol), 0)?;
    Ok(p2.sqrt())
}

/// Discrete fill distance: max over reference points of the min Euclidean
/// distance to the selected set.
pub fn fill_distance(selected: &[VecF], reference: &[VecF]) -> f64 {
    reference
        .iter()
        .map(|r| {
            selected
                .iter()
                .map(|s| (r - s).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::register_example;
    use crate::integrate::{generate_dataset, IntegratorConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<VecF> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| VecF::from_fn(d, |_, _| rng.gen_range(-0.1..0.1)))
            .collect()
    }

    #[test]
    fn single_candidate_selected_immediately() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = vec![VecF::from_vec(vec![0.05])];
        let r = p_greedy(&x, &k, 1e-12, 10).unwrap();
        assert_eq!(r.indices, vec![0]);
        assert_eq!(r.power_history.len(), 1);
        assert_eq!(r.fill_distance, 0.0);
    }

    #[test]
    fn incremental_power_matches_dense_oracle() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = random_points(120, 2, 3);
        // stop well above the degeneracy floor: past numerical Gram rank both
        // the dense formula and the incremental update are rounding noise
        let r = p_greedy(&x, &k, 1e-5, 50).unwrap();
        assert!(r.indices.len() > 5);
        // after the full selection, compare incremental max-power history is
        // hard to reconstruct per step cheaply; instead compare the final
        // dense power at many queries against prefix selections
        for prefix in [1usize, 3, 10, r.indices.len()] {
            let centers: Vec<VecF> = r.indices[..prefix].iter().map(|&i| x[i].clone()).collect();
            // dense max over remaining candidates
            let mut dense_max = 0.0f64;
            for (i, xi) in x.iter().enumerate() {
                if r.indices[..prefix].contains(&i) {
                    continue;
                }
                dense_max = dense_max.max(power_function(&centers, &k, xi).unwrap());
            }
            let inc = r.power_history[prefix - 1];
            assert!(
                (dense_max - inc).abs() < 1e-9,
                "prefix {prefix}: dense {dense_max:e} vs incremental {inc:e}"
            );
        }
    }

    #[test]
    fn power_vanishes_on_selected_points() {
        let k = KernelSpec::polynomial(0.5, 4).unwrap();
        let x = random_points(60, 1, 9);
        let r = p_greedy(&x, &k, 1e-15, 50).unwrap();
        let centers: Vec<VecF> = r.indices.iter().map(|&i| x[i].clone()).collect();
        for c in &centers {
            assert!(power_function(&centers, &k, c).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn power_history_non_increasing_and_indices_distinct() {
        let k = KernelSpec::Wendland;
        let x = random_points(200, 1, 21);
        let r = p_greedy(&x, &k, 1e-10, 80).unwrap();
        for w in r.power_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let mut sorted = r.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), r.indices.len());
    }

    #[test]
    fn first_point_maximizes_diagonal() {
        let k = KernelSpec::gaussian(5.0).unwrap();
        // gaussian diagonal is constant 1 -> tie resolved at index 0
        let x = random_points(30, 1, 5);
        let r = p_greedy(&x, &k, 1e-10, 5).unwrap();
        assert_eq!(r.indices[0], 0);
        // polynomial diagonal grows with |x| -> picks the largest point
        let k = KernelSpec::polynomial(0.5, 4).unwrap();
        let r = p_greedy(&x, &k, 1e-15, 5).unwrap();
        let arg = x
            .iter()
            .enumerate()
            .max_by(|a, b| {
                k.eval(a.1.as_slice(), a.1.as_slice())
                    .unwrap()
                    .partial_cmp(&k.eval(b.1.as_slice(), b.1.as_slice()).unwrap())
                    .unwrap()
            })
            .unwrap()
            .0;
        assert_eq!(r.indices[0], arg);
    }

    #[test]
    fn empty_center_set_power_is_sqrt_diag() {
        let k = KernelSpec::polynomial(0.5, 4).unwrap();
        let q = VecF::from_vec(vec![0.1]);
        let p = power_function(&[], &k, &q).unwrap();
        assert!((p - k.eval(q.as_slice(), q.as_slice()).unwrap().sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fill_distance_geometry() {
        let sel = vec![VecF::from_vec(vec![-0.1]), VecF::from_vec(vec![0.1])];
        let grid: Vec<VecF> = (0..=1000)
            .map(|i| VecF::from_vec(vec![-0.1 + 0.2 * i as f64 / 1000.0]))
            .collect();
        let f = fill_distance(&sel, &grid);
        assert!((f - 0.1).abs() < 1e-12);
        assert_eq!(fill_distance(&grid, &grid), 0.0);
    }

    #[test]
    fn polynomial_kernel_selection_saturates() {
        // p=4 in one dimension spans at most 5 monomials, so the selection
        // must stop at or just past 5 points regardless of eps_tol
        let k = KernelSpec::polynomial(0.5, 4).unwrap();
        let x = random_points(100, 1, 13);
        let r = p_greedy(&x, &k, 1e-300, 100).unwrap();
        assert!(r.indices.len() <= 8, "selected {}", r.indices.len());
        assert!(r.indices.len() >= 4);
    }

    #[test]
    fn fill_distance_of_prefixes_decays_on_trajectory_data() {
        let sys = register_example(2).unwrap();
        let cfg = IntegratorConfig {
            t_final: 150.0,
            ..IntegratorConfig::default()
        };
        let ds = generate_dataset(&sys, &cfg).unwrap();
        // subsample to keep the quadratic fill-distance scans fast
        let xs: Vec<VecF> = ds.x.iter().step_by(17).cloned().collect();
        let k = KernelSpec::Wendland;
        let r = p_greedy(&xs, &k, 1e-12, 200).unwrap();
        assert!(r.indices.len() >= 100, "selected {}", r.indices.len());
        for kk in 1..=r.indices.len() / 2 {
            let half: Vec<VecF> = r.indices[..kk].iter().map(|&i| xs[i].clone()).collect();
            let full: Vec<VecF> = r.indices[..2 * kk].iter().map(|&i| xs[i].clone()).collect();
            let fh = fill_distance(&half, &xs);
            let ff = fill_distance(&full, &xs);
            assert!(ff <= fh + 1e-15, "k={kk}: {ff} > {fh}");
        }
    }

    #[test]
    fn conditioned_kernel_vanishes_on_origin_functionals() {
        for k in [
            KernelSpec::polynomial(0.5, 4).unwrap(),
            KernelSpec::gaussian(1.0).unwrap(),
            KernelSpec::Wendland,
        ] {
            let ck = ConditionedKernel::new(&k, 2).unwrap();
            let y = [0.03, -0.07];
            // conditioning zeroes the kernel section through the origin
            assert!(ck.eval(&[0.0, 0.0], &y).unwrap().abs() < 1e-12);
            // and the conditioned power never exceeds the plain diagonal
            assert!(ck.eval(&y, &y).unwrap() <= k.eval(&y, &y).unwrap() + 1e-12);
        }
    }

    #[test]
    fn constrained_selection_is_valid_and_smaller_near_origin() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = random_points(150, 2, 11);
        let plain = p_greedy(&x, &k, 1e-5, 100).unwrap();
        let cons = p_greedy_constrained(&x, &k, 1e-5, 100).unwrap();
        let mut seen = std::collections::HashSet::new();
        assert!(cons.indices.iter().all(|i| seen.insert(*i)));
        for w in cons.power_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // near-origin candidates carry less conditioned power, so the
        // constrained run needs no more points for the same tolerance
        assert!(cons.indices.len() <= plain.indices.len());
    }
}
