//! Diagnostics on fitted manifold models: invariance-equation residuals,
//! stability scans, convergence and error-order studies, and full-versus-
//! reduced trajectory comparison with a perturbation bound check.

use crate::dynsys::{SplitSystem, VecF};
use crate::error::{Error, Result};
use crate::greedy::GreedyResult;
use crate::integrate::{integrate_full, simulate_reduced, IntegratorConfig};
use crate::kernels::KernelSpec;
use crate::manifold::{fit, FitConfig};
use crate::ManifoldModel;
use std::io::Write;

const DOMAIN_HALF_WIDTH: f64 = 0.1;

/// Equispaced symmetric grid over [-0.1, 0.1]^d, row-major in the last axis.
#[derive(Clone, Debug)]
pub struct TestGrid {
    pub points: Vec<VecF>,
    pub d: usize,
    pub per_axis: usize,
}

impl TestGrid {
    /// Default resolutions: 1001 points for d=1, 101 per axis for d=2.
    pub fn standard(d: usize) -> Result<Self> {
        match d {
            1 => Self::with_resolution(1, 1001),
            2 => Self::with_resolution(2, 101),
            _ => Err(Error::InvalidConfig(format!(
                "no standard test grid for dimension {d}"
            ))),
        }
    }

    pub fn with_resolution(d: usize, per_axis: usize) -> Result<Self> {
        if per_axis < 2 || d == 0 {
            return Err(Error::InvalidConfig(format!(
                "grid needs d >= 1 and at least 2 points per axis, got d={d}, {per_axis}"
            )));
        }
        let axis: Vec<f64> = (0..per_axis)
            .map(|i| -DOMAIN_HALF_WIDTH + 2.0 * DOMAIN_HALF_WIDTH * i as f64 / (per_axis - 1) as f64)
            .collect();
        let mut points = Vec::with_capacity(per_axis.pow(d as u32));
        let mut idx = vec![0usize; d];
        loop {
            points.push(VecF::from_fn(d, |r, _| axis[idx[r]]));
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(TestGrid { points, d, per_axis });
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Residual of the invariance equation at x:
/// r(x) = Dh(x) (L1 x + N1(x, h(x))) - (L2 h(x) + N2(x, h(x))).
pub fn residual(sys: &SplitSystem, h: &dyn ManifoldModel, x: &VecF) -> f64 {
    let hx = VecF::from_element(1, h.value(x));
    let grad = h.gradient(x);
    let xdot = &sys.l1 * x + sys.n1(x, &hx);
    let ydot = &sys.l2 * &hx + sys.n2(x, &hx);
    grad.dot(&xdot) - ydot[0]
}

pub fn max_residual(sys: &SplitSystem, h: &dyn ManifoldModel, grid: &TestGrid) -> f64 {
    grid.points
        .iter()
        .map(|p| residual(sys, h, p).abs())
        .fold(0.0, f64::max)
}

pub fn write_residual_csv<W: Write>(
    w: &mut W,
    sys: &SplitSystem,
    h: &dyn ManifoldModel,
    grid: &TestGrid,
) -> Result<()> {
    writeln!(w, "input,residual")?;
    for p in &grid.points {
        let coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{}", coords.join(";"), residual(sys, h, p))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabilityVerdict {
    StableConsistent,
    Inconclusive,
}

#[derive(Clone, Copy, Debug)]
pub struct StabilityScan {
    pub h_at_0: f64,
    pub max_off_origin: f64,
    pub verdict: StabilityVerdict,
}

/// Sign scan of h over the grid: the example systems have reduced dynamics
/// whose origin is asymptotically stable when h is negative away from 0.
pub fn stability_scan(h: &dyn ManifoldModel, grid: &TestGrid) -> StabilityScan {
    let h0 = h.value(&VecF::zeros(grid.d));
    let max_off = grid
        .points
        .iter()
        .filter(|p| p.iter().any(|&v| v != 0.0))
        .map(|p| h.value(p))
        .fold(f64::NEG_INFINITY, f64::max);
    let verdict = if max_off < 0.0 && h0 <= 0.0 {
        StabilityVerdict::StableConsistent
    } else {
        StabilityVerdict::Inconclusive
    };
    StabilityScan {
        h_at_0: h0,
        max_off_origin: max_off,
        verdict,
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceCurve {
    /// (prefix size, max grid error); failed prefix fits are skipped
    pub errors: Vec<(usize, f64)>,
    /// log-log slope fitted over prefix sizes in [20, 200]
    pub slope: f64,
}

impl ConvergenceCurve {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "N,e_N")?;
        for (n, e) in &self.errors {
            writeln!(w, "{n},{e}")?;
        }
        Ok(())
    }

    pub fn error_at(&self, n: usize) -> Option<f64> {
        self.errors.iter().find(|(m, _)| *m == n).map(|(_, e)| *e)
    }
}

/// Least-squares slope of v against u.
fn ls_slope(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let cov: f64 = u.iter().zip(v).map(|(a, b)| (a - mu) * (b - mv)).sum();
    let var: f64 = u.iter().map(|a| (a - mu) * (a - mu)).sum();
    cov / var
}

/// Fit approximants on greedy prefixes X_1..X_N and track the max grid error
/// against the exact solution.
pub fn convergence_study(
    x: &[VecF],
    y: &[f64],
    kernel: &KernelSpec,
    lambda: f64,
    greedy: &GreedyResult,
    grid: &TestGrid,
    h_exact: &dyn ManifoldModel,
) -> Result<ConvergenceCurve> {
    let config = FitConfig::new(lambda, kernel.clone())?;
    let mut errors = Vec::new();
    for n in 1..=greedy.indices.len() {
        let xs: Vec<VecF> = greedy.indices[..n].iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<f64> = greedy.indices[..n].iter().map(|&i| y[i]).collect();
        let model = match fit(&xs, &ys, &config) {
            Ok(m) => m,
            Err(_) => continue, // recorded as a missing point
        };
        let e = grid
            .points
            .iter()
            .map(|p| (h_exact.value(p) - model.value(p)).abs())
            .fold(0.0, f64::max);
        errors.push((n, e));
    }
    let (mut lu, mut lv) = (Vec::new(), Vec::new());
    for (n, e) in &errors {
        if (20..=200).contains(n) && *e > 0.0 {
            lu.push((*n as f64).ln());
            lv.push(e.ln());
        }
    }
    if lu.len() < 2 {
        return Err(Error::InvalidConfig(
            "convergence study needs at least two prefix errors in [20, 200]".into(),
        ));
    }
    Ok(ConvergenceCurve {
        errors,
        slope: ls_slope(&lu, &lv),
    })
}

#[derive(Clone, Copy, Debug)]
pub enum ProbeOutcome {
    /// fitted exponent q of |h - hhat| ~ c |x|^q near the origin
    Exponent(f64),
    /// errors at machine-zero level; no meaningful exponent
    Inconclusive,
}

/// Fit the near-origin decay order of the model error on a symmetric grid of
/// half-width `half_width` (points with |x| < 1e-4 excluded).
pub fn local_order_probe(
    hhat: &dyn ManifoldModel,
    h_exact: &dyn ManifoldModel,
    half_width: f64,
) -> Result<ProbeOutcome> {
    let d = hhat.dim_in();
    let grid = TestGrid::standard(d)?;
    let scale = half_width / DOMAIN_HALF_WIDTH;
    let (mut lu, mut lv) = (Vec::new(), Vec::new());
    let mut max_err = 0.0f64;
    for p in &grid.points {
        let q = p * scale;
        let r = q.norm();
        let err = (h_exact.value(&q) - hhat.value(&q)).abs();
        max_err = max_err.max(err);
        if r >= 1e-4 && err > 1e-15 {
            lu.push(r.ln());
            lv.push(err.ln());
        }
    }
    if max_err < 1e-15 || lu.len() < grid.points.len() / 4 {
        return Ok(ProbeOutcome::Inconclusive);
    }
    Ok(ProbeOutcome::Exponent(ls_slope(&lu, &lv)))
}

#[derive(Clone, Debug)]
pub struct TrajectoryComparison {
    pub times: Vec<f64>,
    pub abs_err: Vec<f64>,
    /// truncated after the first time ||x(t)|| drops to 1e-12
    pub rel_err: Vec<f64>,
    /// exponent of the exponential fit to abs_err over t in [50, 350]
    pub decay_rate: f64,
    /// mean rel_err over t in [100, 350]
    pub plateau: f64,
    /// reduced-trajectory final state norm
    pub final_reduced_norm: f64,
}

impl TrajectoryComparison {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,err_abs,err_rel")?;
        for (i, t) in self.times.iter().enumerate() {
            let rel = self
                .rel_err
                .get(i)
                .map_or(String::new(), |r| r.to_string());
            writeln!(w, "{t},{},{rel}", self.abs_err[i])?;
        }
        Ok(())
    }
}

/// Integrate the full system and the reduced system from a shared initial
/// condition and compare the center coordinates x(t) against z(t).
pub fn trajectory_compare(
    sys: &SplitSystem,
    hhat: &dyn ManifoldModel,
    x0_full: &VecF,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryComparison> {
    if x0_full.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: x0_full.len(),
        });
    }
    let d = sys.d;
    let full = integrate_full(sys, x0_full, cfg)?;
    let z0 = VecF::from_iterator(d, x0_full.iter().take(d).cloned());
    let reduced = simulate_reduced(sys, hhat, &z0, cfg)?;

    let mut abs_err = Vec::with_capacity(full.times.len());
    let mut rel_err = Vec::new();
    let mut rel_open = true;
    for (sf, sr) in full.states.iter().zip(&reduced.states) {
        let xf = VecF::from_iterator(d, sf.iter().take(d).cloned());
        let e = (&xf - sr).norm();
        abs_err.push(e);
        let nx = xf.norm();
        if rel_open && nx > 1e-12 {
            rel_err.push(e / nx);
        } else {
            rel_open = false;
        }
    }

    let (mut fu, mut fv) = (Vec::new(), Vec::new());
    for (t, e) in full.times.iter().zip(&abs_err) {
        if (50.0..=350.0).contains(t) && *e > 0.0 {
            fu.push(*t);
            fv.push(e.ln());
        }
    }
    let decay_rate = if fu.len() >= 2 {
        ls_slope(&fu, &fv)
    } else {
        f64::NAN
    };

    let mut plateau_sum = 0.0;
    let mut plateau_n = 0usize;
    for (i, t) in full.times.iter().enumerate() {
        if (100.0..=350.0).contains(t) {
            if let Some(r) = rel_err.get(i) {
                plateau_sum += r;
                plateau_n += 1;
            }
        }
    }
    let plateau = if plateau_n > 0 {
        plateau_sum / plateau_n as f64
    } else {
        f64::NAN
    };

    Ok(TrajectoryComparison {
        times: full.times,
        abs_err,
        rel_err,
        decay_rate,
        plateau,
        final_reduced_norm: reduced.states.last().map_or(f64::NAN, |s| s.norm()),
    })
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    /// sampled lower bounds of the Lipschitz suprema (not certified)
    pub l1: f64,
    pub l2: f64,
    pub eps: f64,
    pub q: f64,
    /// min over recorded times of bound(t) - measured(t)
    pub margin: f64,
}

/// Check the perturbation bound
/// ||x(t) - z(t)|| <= eps (l2/l1) diam(B)^q (e^(l1 t) - 1)
/// for the reference-manifold reduced flow x(t) against the fitted-model
/// reduced flow z(t). The Lipschitz constants are sampled on a 50^d grid and
/// are therefore lower bounds of the true suprema.
pub fn perturbation_bound_check(
    sys: &SplitSystem,
    hhat: &dyn ManifoldModel,
    h_ref: &dyn ManifoldModel,
    x0: &VecF,
    t_max: f64,
) -> Result<BoundReport> {
    let d = sys.d;
    let sample = TestGrid::with_resolution(d, 50)?;
    let mut l1 = 0.0f64;
    let mut l2 = 0.0f64;
    for p in &sample.points {
        let hp = VecF::from_element(1, h_ref.value(p));
        let jn1 = sys.jac_n1_at(p, &hp); // d x (d + m)
        let ghp = h_ref.gradient(p);
        // D_x (L1 x + N1(x, h(x))) = L1 + d_x N1 + d_y N1 * Dh
        let mut jx = sys.l1.clone();
        for r in 0..d {
            for c in 0..d {
                jx[(r, c)] += jn1[(r, c)] + jn1[(r, d)] * ghp[c];
            }
        }
        l1 = l1.max(jx.norm()); // Frobenius upper-bounds the spectral norm
        let dy: f64 = (0..d).map(|r| jn1[(r, d)] * jn1[(r, d)]).sum::<f64>().sqrt();
        l2 = l2.max(dy);
    }

    // eps and q from the near-origin error law |h - hhat| <= eps |x|^q
    let q = match local_order_probe(hhat, h_ref, DOMAIN_HALF_WIDTH)? {
        ProbeOutcome::Exponent(q) => q.max(0.0),
        ProbeOutcome::Inconclusive => 0.0,
    };
    let mut eps = 0.0f64;
    for p in &sample.points {
        let r = p.norm();
        if r >= 1e-4 {
            let err = (h_ref.value(p) - hhat.value(p)).abs();
            eps = eps.max(err / r.powf(q));
        }
    }

    let cfg = IntegratorConfig {
        t_final: t_max,
        ..IntegratorConfig::default()
    };
    let xref = simulate_reduced(sys, h_ref, x0, &cfg)?;
    let zfit = simulate_reduced(sys, hhat, x0, &cfg)?;
    let diam = 2.0 * DOMAIN_HALF_WIDTH * (d as f64).sqrt();
    let mut margin = f64::INFINITY;
    for ((t, sx), sz) in xref.times.iter().zip(&xref.states).zip(&zfit.states).skip(1) {
        let measured = (sx - sz).norm();
        let bound = eps * (l2 / l1) * diam.powf(q) * ((l1 * t).exp() - 1.0);
        if measured > bound {
            return Err(Error::BoundViolation {
                t: *t,
                measured,
                bound,
            });
        }
        margin = margin.min(bound - measured);
    }
    Ok(BoundReport {
        l1,
        l2,
        eps,
        q,
        margin,
    })
}

pub fn write_surface_csv<W: Write>(
    w: &mut W,
    grid: &TestGrid,
    values: &[f64],
) -> Result<()> {
    if grid.d != 2 || values.len() != grid.points.len() {
        return Err(Error::InvalidConfig(
            "surface export needs a 2-D grid with matching values".into(),
        ));
    }
    writeln!(w, "x1,x2,value")?;
    for (p, v) in grid.points.iter().zip(values) {
        writeln!(w, "{},{},{v}", p[0], p[1])?;
    }
    Ok(())
}
