//! Constrained regularized kernel regression for the manifold map h.
//!
//! The fitted model is
//!     hhat(x) = sum_i k(x, x_i) alpha_i + sum_j (d/dy_j k)(x, 0) beta_j
//! with the origin appended as the last center, solving the symmetric block
//! system [[A + W, B], [B^T, C]] (alpha, beta) = (Y, 0). The zero row of W on
//! the origin center and the derivative block enforce hhat(0) = 0 and
//! Dhhat(0) = 0 exactly (up to solver residual).

use crate::dynsys::{MatF, VecF};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::ldl;
use crate::taylor::{MultiIndex, TruncPoly};
use crate::ManifoldModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, Write};

const CENTER_COINCIDENCE_TOL: f64 = 1e-14;
const CONSTRAINT_RESIDUAL_TOL: f64 = 1e-8;
const REFINEMENT_TRIGGER: f64 = 1e-10;
const COND_DIAGNOSTIC: f64 = 1e16;

#[derive(Clone, Debug)]
pub struct FitConfig {
    /// Diagonal regularization added to the data rows of the Gram block.
    pub lambda: f64,
    pub kernel: KernelSpec,
}

impl FitConfig {
    pub fn new(lambda: f64, kernel: KernelSpec) -> Result<Self> {
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(FitConfig { lambda, kernel })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FitDiagnostics {
    pub cond_estimate: f64,
    pub residual: f64,
    /// whether one step of iterative refinement was applied
    pub refined: bool,
    pub ill_conditioned: bool,
}

/// Fitted manifold model. `centers` holds the data centers with the origin
/// appended last; `alpha` matches `centers`, `beta` has one entry per input
/// dimension.
#[derive(Clone, Debug)]
pub struct Approximant {
    pub centers: Vec<VecF>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub fit_diag: FitDiagnostics,
}

fn coincident(a: &VecF, b: &VecF) -> bool {
    a.iter()
        .zip(b.iter())
        .all(|(p, q)| (p - q).abs() <= CENTER_COINCIDENCE_TOL)
}

/// Assemble the symmetric ((N+1)+d)-square block system for centers X
/// (origin excluded) and scalar targets Y.
pub fn assemble_system(x: &[VecF], y: &[f64], config: &FitConfig) -> Result<(MatF, VecF)> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidConfig(format!(
            "need matching nonempty centers/targets, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    let zero = VecF::zeros(d);
    for (i, xi) in x.iter().enumerate() {
        if xi.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: xi.len(),
            });
        }
        if coincident(xi, &zero) {
            return Err(Error::DuplicateCenter(i));
        }
        for xj in &x[..i] {
            if coincident(xi, xj) {
                return Err(Error::DuplicateCenter(i));
            }
        }
    }
    let n = x.len(); // data centers; origin appended as index n
    let size = n + 1 + d;
    let mut m = MatF::zeros(size, size);
    let mut rhs = VecF::zeros(size);
    let k = &config.kernel;
    let origin = vec![0.0f64; d];

    let center_slice = |i: usize| -> &[f64] {
        if i < n {
            x[i].as_slice()
        } else {
            &origin
        }
    };
    for i in 0..=n {
        for j in 0..=i {
            let v = k.eval(center_slice(i), center_slice(j))?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    // regularization on data rows only; the origin row stays exact
    for i in 0..n {
        m[(i, i)] += config.lambda;
        rhs[i] = y[i];
    }
    // derivative block B and constraint block C
    for i in 0..=n {
        let g = k.grad2(center_slice(i), &origin)?;
        for (j, gv) in g.iter().enumerate() {
            m[(i, n + 1 + j)] = *gv;
            m[(n + 1 + j, i)] = *gv;
        }
    }
    let c = k.grad1_grad2(&origin, &origin)?;
    for i in 0..d {
        for j in 0..d {
            m[(n + 1 + i, n + 1 + j)] = c[(i, j)];
        }
    }
    Ok((m, rhs))
}

/// Solve the block system and build the model, with one step of iterative
/// refinement on poor residuals and a condition-estimate diagnostic.
pub fn fit(x: &[VecF], y: &[f64], config: &FitConfig) -> Result<Approximant> {
    let (m, rhs) = assemble_system(x, y, config)?;
    let d = x[0].len();
    let n = x.len();
    let factor = ldl::factor(&m)?;
    let mut sol = factor.solve(&rhs);

    let rhs_norm = rhs.norm().max(1.0);
    let mut residual = (&m * &sol - &rhs).norm() / rhs_norm;
    let mut refined = false;
    if residual > REFINEMENT_TRIGGER {
        let corr = factor.solve(&(&rhs - &m * &sol));
        let cand = &sol + &corr;
        let cand_res = (&m * &cand - &rhs).norm() / rhs_norm;
        if cand_res < residual {
            sol = cand;
            residual = cand_res;
            refined = true;
        }
    }
    let cond = ldl::condest_1(&m, &factor);
    let ill = cond > COND_DIAGNOSTIC;
    if ill && residual > CONSTRAINT_RESIDUAL_TOL {
        return Err(Error::IllConditioned { cond, residual });
    }

    let mut centers: Vec<VecF> = x.to_vec();
    centers.push(VecF::zeros(d));
    let model = Approximant {
        centers,
        alpha: sol.iter().take(n + 1).cloned().collect(),
        beta: sol.iter().skip(n + 1).cloned().collect(),
        kernel: config.kernel.clone(),
        lambda: config.lambda,
        fit_diag: FitDiagnostics {
            cond_estimate: cond,
            residual,
            refined,
            ill_conditioned: ill,
        },
    };
    let origin = VecF::zeros(d);
    let v0 = model.value(&origin).abs();
    let g0 = model.gradient(&origin).norm();
    if v0 > CONSTRAINT_RESIDUAL_TOL || g0 > CONSTRAINT_RESIDUAL_TOL {
        return Err(Error::IllConditioned {
            cond,
            residual: v0.max(g0),
        });
    }
    Ok(model)
}

impl Approximant {
    fn d(&self) -> usize {
        self.centers[0].len()
    }

    /// Taylor table of hhat around the origin up to total degree `order`,
    /// in graded-lex multi-index order.
    pub fn taylor(&self, order: u32) -> Result<Vec<(MultiIndex, f64)>> {
        let d = self.d();
        let mut acc = TruncPoly::zero(d, order);
        for (c, &a) in self.centers.iter().zip(&self.alpha) {
            if a != 0.0 {
                acc = acc.add(&self.kernel.section_poly(c.as_slice(), order)?.scale(a));
            }
        }
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                acc = acc.add(&self.kernel.grad2_section_poly(j, d, order)?.scale(b));
            }
        }
        Ok(acc.table())
    }

    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        match self.kernel {
            KernelSpec::Polynomial { gamma, degree } => {
                writeln!(w, "kernel polynomial {gamma} {degree}")?
            }
            KernelSpec::Gaussian { eps } => writeln!(w, "kernel gaussian {eps}")?,
            KernelSpec::Wendland => writeln!(w, "kernel wendland")?,
        }
        writeln!(w, "lambda {}", self.lambda)?;
        writeln!(w, "dim {}", self.d())?;
        writeln!(w, "centers {}", self.centers.len())?;
        for c in &self.centers {
            let row: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        let a: Vec<String> = self.alpha.iter().map(|v| v.to_string()).collect();
        writeln!(w, "alpha {}", a.join(" "))?;
        let b: Vec<String> = self.beta.iter().map(|v| v.to_string()).collect();
        writeln!(w, "beta {}", b.join(" "))?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut lines = Vec::new();
        for line in r.lines() {
            lines.push(line?);
        }
        let mut it = lines.iter();
        let bad = |what: &str| Error::Parse(format!("model file: {what}"));
        let kline = it.next().ok_or_else(|| bad("missing kernel line"))?;
        let kparts: Vec<&str> = kline.split_whitespace().collect();
        let kernel = match kparts.as_slice() {
            ["kernel", "polynomial", g, p] => KernelSpec::polynomial(
                g.parse().map_err(|_| bad("gamma"))?,
                p.parse().map_err(|_| bad("degree"))?,
            )?,
            ["kernel", "gaussian", e] => KernelSpec::gaussian(e.parse().map_err(|_| bad("eps"))?)?,
            ["kernel", "wendland"] => KernelSpec::Wendland,
            _ => return Err(bad("kernel line")),
        };
        let parse_kv = |line: Option<&String>, key: &str| -> Result<String> {
            let line = line.ok_or_else(|| bad(&format!("missing {key}")))?;
            line.strip_prefix(&format!("{key} "))
                .map(str::to_owned)
                .ok_or_else(|| bad(&format!("expected {key}")))
        };
        let lambda: f64 = parse_kv(it.next(), "lambda")?
            .parse()
            .map_err(|_| bad("lambda"))?;
        let d: usize = parse_kv(it.next(), "dim")?
            .parse()
            .map_err(|_| bad("dim"))?;
        let nc: usize = parse_kv(it.next(), "centers")?
            .parse()
            .map_err(|_| bad("centers"))?;
        let mut centers = Vec::with_capacity(nc);
        for _ in 0..nc {
            let line = it.next().ok_or_else(|| bad("missing center row"))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("center value")))
                .collect::<Result<_>>()?;
            if vals.len() != d {
                return Err(bad("center row length"));
            }
            centers.push(VecF::from_vec(vals));
        }
        let parse_vec = |s: String| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("coefficient")))
                .collect()
        };
        let alpha = parse_vec(parse_kv(it.next(), "alpha")?)?;
        let beta = parse_vec(parse_kv(it.next(), "beta")?)?;
        if alpha.len() != nc || beta.len() != d {
            return Err(bad("coefficient counts"));
        }
        Ok(Approximant {
            centers,
            alpha,
            beta,
            kernel,
            lambda,
            fit_diag: FitDiagnostics::default(),
        })
    }
}

impl ManifoldModel for Approximant {
    fn dim_in(&self) -> usize {
        self.d()
    }

    fn value(&self, x: &VecF) -> f64 {
        let d = self.d();
        let origin = vec![0.0f64; d];
        let mut v = 0.0;
        for (c, &a) in self.centers.iter().zip(&self.alpha) {
            if a != 0.0 {
                v += a * self.kernel.eval(x.as_slice(), c.as_slice()).unwrap();
            }
        }
        if self.beta.iter().any(|&b| b != 0.0) {
            let g = self.kernel.grad2(x.as_slice(), &origin).unwrap();
            for (gv, &b) in g.iter().zip(&self.beta) {
                v += b * gv;
            }
        }
        v
    }

    fn gradient(&self, x: &VecF) -> VecF {
        let d = self.d();
        let mut g = VecF::zeros(d);
        for (c, &a) in self.centers.iter().zip(&self.alpha) {
            if a != 0.0 {
                let gi = self.kernel.grad1(x.as_slice(), c.as_slice()).unwrap();
                for (r, gv) in gi.iter().enumerate() {
                    g[r] += a * gv;
                }
            }
        }
        if self.beta.iter().any(|&b| b != 0.0) {
            let mix = self.kernel.grad1_of_grad2_section(x.as_slice()).unwrap();
            for (j, &b) in self.beta.iter().enumerate() {
                for r in 0..d {
                    g[r] += b * mix[(r, j)];
                }
            }
        }
        g
    }
}

#[derive(Clone, Debug)]
pub struct CertificateReport {
    pub j_base: f64,
    pub trials: usize,
    /// smallest observed J(h+g) - J(h) over all trials
    pub min_delta: f64,
    /// log-log slope of delta vs scale over t in {1e-2, 1e-1, 1}
    pub scaling_slope: f64,
}

/// Objective J(s) = |s|_H^2 + lambda^{-1} sum_i (s(x_i) - y_i)^2 evaluated
/// exactly in the finite span of function and derivative sections.
///
/// `fun_centers`/`fun_coeffs` weight sections k(., c); `der_coeffs` weight
/// the origin derivative sections (d/dy_j k)(., 0).
fn objective(
    kernel: &KernelSpec,
    fun_centers: &[VecF],
    fun_coeffs: &[f64],
    der_coeffs: &[f64],
    x: &[VecF],
    y: &[f64],
    lambda: f64,
) -> Result<f64> {
    let d = der_coeffs.len();
    let origin = vec![0.0f64; d];
    // RKHS norm via the augmented Gram quadratic form
    let mut norm2 = 0.0;
    for (i, (ci, &ai)) in fun_centers.iter().zip(fun_coeffs).enumerate() {
        for (cj, &aj) in fun_centers.iter().zip(fun_coeffs).take(i) {
            norm2 += 2.0 * ai * aj * kernel.eval(ci.as_slice(), cj.as_slice())?;
        }
        norm2 += ai * ai * kernel.eval(ci.as_slice(), ci.as_slice())?;
        let g = kernel.grad2(ci.as_slice(), &origin)?;
        for (gv, &b) in g.iter().zip(der_coeffs) {
            norm2 += 2.0 * ai * b * gv;
        }
    }
    let c = kernel.grad1_grad2(&origin, &origin)?;
    for i in 0..d {
        for j in 0..d {
            norm2 += der_coeffs[i] * der_coeffs[j] * c[(i, j)];
        }
    }
    // data misfit
    let value_at = |q: &VecF| -> Result<f64> {
        let mut v = 0.0;
        for (ci, &ai) in fun_centers.iter().zip(fun_coeffs) {
            v += ai * kernel.eval(q.as_slice(), ci.as_slice())?;
        }
        let g = kernel.grad2(q.as_slice(), &origin)?;
        for (gv, &b) in g.iter().zip(der_coeffs) {
            v += b * gv;
        }
        Ok(v)
    };
    let mut misfit = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let r = value_at(xi)? - yi;
        misfit += r * r;
    }
    Ok(norm2 + misfit / lambda)
}

/// Verify that the fitted model minimizes the regularized objective over the
/// constraint set: random feasible perturbations must not decrease J, and
/// the increase must scale quadratically in the perturbation size.
pub fn minimizer_certificate(
    model: &Approximant,
    x: &[VecF],
    y: &[f64],
    config: &FitConfig,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("certificate needs trials >= 1".into()));
    }
    let d = model.d();
    let kernel = &config.kernel;
    let origin_vec = VecF::zeros(d);
    let origin = vec![0.0f64; d];
    let k00 = kernel.eval(&origin, &origin)?;
    let c = kernel.grad1_grad2(&origin, &origin)?;
    let c_inv = c
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("singular constraint block".into()))?;

    let j_base = objective(
        kernel,
        &model.centers,
        &model.alpha,
        &model.beta,
        x,
        y,
        config.lambda,
    )?;

    let mut min_delta = f64::INFINITY;
    let mut slope_sum = 0.0;
    for trial in 0..trials {
        let trial_seed = seed.wrapping_add(trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        // raw perturbation: kernel expansion over random auxiliary centers
        let n_aux = rng.gen_range(2..=6);
        let mut aux: Vec<VecF> = (0..n_aux)
            .map(|_| VecF::from_fn(d, |_, _| rng.gen_range(-0.1..0.1)))
            .collect();
        let mut coeffs: Vec<f64> = (0..n_aux).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // project to the constraint set g(0) = 0, Dg(0) = 0 by subtracting
        // a correction in span{k(., 0), (d/dy_j k)(., 0)}
        let mut g0 = 0.0;
        let mut dg0 = VecF::zeros(d);
        for (a, &w) in aux.iter().zip(&coeffs) {
            g0 += w * kernel.eval(&origin, a.as_slice())?;
            let gr = kernel.grad1(origin_vec.as_slice(), a.as_slice())?;
            for (r, gv) in gr.iter().enumerate() {
                dg0[r] += w * gv;
            }
        }
        let a0 = -g0 / k00;
        let b_corr = -(&c_inv * &dg0);
        aux.push(origin_vec.clone());
        coeffs.push(a0);
        let der: Vec<f64> = b_corr.iter().cloned().collect();

        // J(hhat + t g) - J(hhat) = 2t L(g) + t^2 Q(g), evaluated directly to
        // avoid cancellation between two large objective values. L uses the
        // reproducing property <hhat, g> = sum_i alpha_i g(x_i) + beta . Dg(0)
        // and the data misfit cross term; Q involves only g's coefficients.
        let g_value = |q: &VecF| -> Result<f64> {
            let mut v = 0.0;
            for (a, &w) in aux.iter().zip(&coeffs) {
                v += w * kernel.eval(q.as_slice(), a.as_slice())?;
            }
            let gr = kernel.grad2(q.as_slice(), &origin)?;
            for (gv, &b) in gr.iter().zip(&der) {
                v += b * gv;
            }
            Ok(v)
        };
        let g_grad0: VecF = {
            let mut gr = VecF::zeros(d);
            for (a, &w) in aux.iter().zip(&coeffs) {
                let gg = kernel.grad1(origin_vec.as_slice(), a.as_slice())?;
                for (r, gv) in gg.iter().enumerate() {
                    gr[r] += w * gv;
                }
            }
            gr += &c * &VecF::from_vec(der.clone());
            gr
        };
        let mut l = 0.0;
        for (i, (ci, &ai)) in model.centers.iter().zip(&model.alpha).enumerate() {
            let gi = g_value(ci)?;
            let mut w = ai;
            if i < x.len() {
                // data center: misfit cross term (hhat(x_i) - y_i)/lambda
                w += (model.value(ci) - y[i]) / config.lambda;
            }
            l += w * gi;
        }
        for (b, gg) in model.beta.iter().zip(g_grad0.iter()) {
            l += b * gg;
        }
        let q_g = objective(kernel, &aux, &coeffs, &der, x, &vec![0.0; y.len()], config.lambda)?;

        let mut deltas = Vec::new();
        for &t in &[1e-2, 1e-1, 1.0] {
            let delta = 2.0 * t * l + t * t * q_g;
            if delta < -1e-9 * (1.0 + j_base) {
                return Err(Error::CertificateViolation {
                    seed: trial_seed,
                    delta,
                });
            }
            deltas.push(delta.max(f64::MIN_POSITIVE));
        }
        min_delta = min_delta.min(deltas[2]);
        // two-point log-log slope over two decades of t
        slope_sum += (deltas[2] / deltas[0]).log10() / 2.0;
    }
    Ok(CertificateReport {
        j_base,
        trials,
        min_delta,
        scaling_slope: slope_sum / trials as f64,
    })
}
