//! Implicit Euler integration of full and reduced systems, and generation of
//! the filtered near-origin training dataset.

use crate::dynsys::{MatF, SplitSystem, VecF};
use crate::error::{Error, Result};
use crate::ManifoldModel;
use rayon::prelude::*;
use std::io::Write;

#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig {
    pub t0: f64,
    pub t_final: f64,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            t0: 0.0,
            t_final: 1000.0,
            dt: 0.1,
            newton_tol: 1e-12,
            newton_max_iter: 50,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || self.t_final <= self.t0 || self.newton_tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "integrator config requires dt > 0, T > t0, newton_tol > 0; got dt={}, t0={}, T={}, tol={}",
                self.dt, self.t0, self.t_final, self.newton_tol
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_final - self.t0) / self.dt).round() as usize
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<VecF>,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        // trajectory schema is t,x1..xd,y1..ym; the caller knows the split,
        // here we only know the total dimension
        write!(w, "t")?;
        for i in 0..n {
            write!(w, ",c{}", i + 1)?;
        }
        writeln!(w)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in s.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// CSV with explicit x/y column split: `t,x1..xd,y1..ym`.
    pub fn write_csv_split<W: Write>(&self, w: &mut W, d: usize) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        write!(w, "t")?;
        for i in 0..d {
            write!(w, ",x{}", i + 1)?;
        }
        for i in 0..n.saturating_sub(d) {
            write!(w, ",y{}", i + 1)?;
        }
        writeln!(w)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in s.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Training pairs (x_i, y_i) harvested from filtered trajectories.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Vec<VecF>,
    pub y: Vec<VecF>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.x.first().map_or(0, |v| v.len());
        let m = self.y.first().map_or(0, |v| v.len());
        let mut header = Vec::new();
        for i in 0..d {
            header.push(format!("x{}", i + 1));
        }
        for i in 0..m {
            header.push(format!("y{}", i + 1));
        }
        writeln!(w, "{}", header.join(","))?;
        for (x, y) in self.x.iter().zip(&self.y) {
            let row: Vec<String> = x.iter().chain(y.iter()).map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// One implicit Euler step: solve z = state + dt f(z) by Newton iteration,
/// warm-started at z0 = state. On non-convergence the step is retried once
/// with 10 damped (step-halving) Newton iterations before failing.
pub fn implicit_euler_step_with(
    rhs: &dyn Fn(&VecF) -> Result<VecF>,
    jac: &dyn Fn(&VecF) -> MatF,
    state: &VecF,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<VecF> {
    match newton_solve(rhs, jac, state, dt, cfg, false) {
        Ok(z) => Ok(z),
        Err(_) => newton_solve(rhs, jac, state, dt, cfg, true),
    }
}

fn newton_solve(
    rhs: &dyn Fn(&VecF) -> Result<VecF>,
    jac: &dyn Fn(&VecF) -> MatF,
    state: &VecF,
    dt: f64,
    cfg: &IntegratorConfig,
    damped: bool,
) -> Result<VecF> {
    let n = state.len();
    let mut z = state.clone();
    let max_iter = if damped { 10 } else { cfg.newton_max_iter };
    let mut res_norm = f64::INFINITY;
    for iter in 0..max_iter {
        let f = rhs(&z)?;
        let residual = &z - state - dt * &f;
        res_norm = residual.norm();
        // always apply at least one correction so slow trajectories keep
        // moving instead of freezing at the warm start
        if iter > 0 && res_norm <= cfg.newton_tol {
            return Ok(z);
        }
        let j = MatF::identity(n, n) - dt * jac(&z);
        let delta = j
            .lu()
            .solve(&residual)
            .ok_or_else(|| Error::Factorization("singular Newton matrix".into()))?;
        if damped {
            // backtracking on the residual norm
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..10 {
                let cand = &z - step * &delta;
                let f = rhs(&cand)?;
                let r = (&cand - state - dt * &f).norm();
                if r < res_norm {
                    z = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        } else {
            z -= delta;
        }
    }
    // final residual check
    let f = rhs(&z)?;
    let r = (&z - state - dt * &f).norm();
    if r <= cfg.newton_tol {
        Ok(z)
    } else {
        Err(Error::NewtonDiverged {
            iters: max_iter,
            residual: res_norm.min(r),
        })
    }
}

/// Implicit Euler step of the full split system.
pub fn implicit_euler_step(
    sys: &SplitSystem,
    state: &VecF,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<VecF> {
    implicit_euler_step_with(
        &|z| sys.full_rhs(z),
        &|z| sys.full_jacobian(z),
        state,
        dt,
        cfg,
    )
}

/// Implicit Euler trajectory of the full system over [t0, T].
pub fn integrate_full(sys: &SplitSystem, state0: &VecF, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    integrate_with(&|z| sys.full_rhs(z), &|z| sys.full_jacobian(z), state0, cfg)
}

fn integrate_with(
    rhs: &dyn Fn(&VecF) -> Result<VecF>,
    jac: &dyn Fn(&VecF) -> MatF,
    state0: &VecF,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let steps = cfg.n_steps();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(cfg.t0);
    states.push(state0.clone());
    let mut z = state0.clone();
    for k in 1..=steps {
        z = implicit_euler_step_with(rhs, jac, &z, cfg.dt, cfg)?;
        times.push(cfg.t0 + k as f64 * cfg.dt);
        states.push(z.clone());
    }
    Ok(Trajectory { times, states })
}

/// Implicit Euler trajectory of the reduced system x' = L1 x + N1(x, h(x)).
///
/// Newton uses a central finite-difference Jacobian (step 1e-7) of the map
/// x -> N1(x, h(x)), since fitted models carry no second derivatives.
pub fn simulate_reduced(
    sys: &SplitSystem,
    h: &dyn ManifoldModel,
    x0: &VecF,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let d = sys.d;
    let rhs = |x: &VecF| -> Result<VecF> {
        let hx = VecF::from_element(1, h.value(x));
        let out = &sys.l1 * x + sys.n1(x, &hx);
        for (i, v) in out.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("reduced rhs component {i}"),
                });
            }
        }
        Ok(out)
    };
    let jac = |x: &VecF| -> MatF {
        let mut j = sys.l1.clone();
        let step = 1e-7;
        for c in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += step;
            xm[c] -= step;
            let hp = VecF::from_element(1, h.value(&xp));
            let hm = VecF::from_element(1, h.value(&xm));
            let dn = (sys.n1(&xp, &hp) - sys.n1(&xm, &hm)) / (2.0 * step);
            for r in 0..d {
                j[(r, c)] += dn[r];
            }
        }
        j
    };
    integrate_with(&rhs, &jac, x0, cfg)
}

const CUBE_HALF_WIDTH: f64 = 0.1;
const CORNER_COORD: f64 = 0.8;

/// Run the 2^n sign-corner IVPs, keep the in-cube states, split them into
/// (x, y) pairs and drop exact duplicates in x (first occurrence wins).
/// Coincident x locations would make a kernel interpolation system singular;
/// near-duplicates are harmless because center selection is power-guarded.
///
/// Corners are ordered lexicographically over sign bits (minus before plus),
/// and per-corner results are merged in that order, so the output is
/// deterministic regardless of scheduling.
pub fn generate_dataset(sys: &SplitSystem, cfg: &IntegratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = sys.dim();
    if n > 20 {
        return Err(Error::InvalidConfig(format!(
            "2^{n} initial-value problems exceed the corner budget (n <= 20)"
        )));
    }
    let corners: Vec<VecF> = (0..(1usize << n))
        .map(|bits| {
            VecF::from_fn(n, |i, _| {
                if bits >> (n - 1 - i) & 1 == 0 {
                    -CORNER_COORD
                } else {
                    CORNER_COORD
                }
            })
        })
        .collect();

    let per_corner: Vec<Result<Vec<VecF>>> = corners
        .par_iter()
        .map(|corner| {
            let traj = integrate_full(sys, corner, cfg).map_err(|e| Error::DatasetCorner {
                corner: corner.iter().cloned().collect(),
                source: Box::new(e),
            })?;
            Ok(traj
                .states
                .into_iter()
                .filter(|s| s.amax() <= CUBE_HALF_WIDTH)
                .collect())
        })
        .collect();

    let mut xs: Vec<VecF> = Vec::new();
    let mut ys: Vec<VecF> = Vec::new();
    let mut seen = DedupIndex::new(sys.d);
    for res in per_corner {
        for s in res? {
            let x = VecF::from_iterator(sys.d, s.iter().take(sys.d).cloned());
            if seen.insert(&x) {
                let y = VecF::from_iterator(sys.m, s.iter().skip(sys.d).cloned());
                xs.push(x);
                ys.push(y);
            }
        }
    }
    Ok(Dataset { x: xs, y: ys })
}

/// Bit-pattern index for exact deduplication in x.
struct DedupIndex {
    seen: std::collections::HashSet<Vec<u64>>,
}

impl DedupIndex {
    fn new(_d: usize) -> Self {
        DedupIndex {
            seen: std::collections::HashSet::new(),
        }
    }

    /// true if x was new (and is now recorded)
    fn insert(&mut self, x: &VecF) -> bool {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        self.seen.insert(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::register_example;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn scalar_decay() -> SplitSystem {
        // x' = 0 (d = 1 dummy center), y' = -y; used for linear closed forms
        SplitSystem::new(
            MatF::zeros(1, 1),
            MatF::from_element(1, 1, -1.0),
            Arc::new(|_: &VecF, _: &VecF| VecF::zeros(1)),
            Arc::new(|_: &VecF, _: &VecF| VecF::zeros(1)),
            Some(Arc::new(|_: &VecF, _: &VecF| MatF::zeros(1, 2))),
            Some(Arc::new(|_: &VecF, _: &VecF| MatF::zeros(1, 2))),
        )
        .unwrap()
    }

    #[test]
    fn linear_step_matches_closed_form() {
        let sys = scalar_decay();
        let cfg = IntegratorConfig::default();
        let z = implicit_euler_step(&sys, &VecF::from_vec(vec![0.0, 1.0]), 0.1, &cfg).unwrap();
        assert_relative_eq!(z[1], 1.0 / 1.1, epsilon = 1e-12);
    }

    #[test]
    fn linear_decay_matches_closed_form_over_100_steps() {
        // y_k = y_0 / (1 - dt*lambda)^k with lambda = -1
        let sys = scalar_decay();
        let cfg = IntegratorConfig {
            t_final: 10.0,
            ..IntegratorConfig::default()
        };
        let traj = integrate_full(&sys, &VecF::from_vec(vec![0.0, 1.0]), &cfg).unwrap();
        assert_eq!(traj.states.len(), 101);
        for (k, s) in traj.states.iter().enumerate() {
            let exact = 1.0 / 1.1f64.powi(k as i32);
            assert_relative_eq!(s[1], exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        for id in 1..=3 {
            let sys = register_example(id).unwrap();
            let z0 = VecF::zeros(sys.dim());
            let cfg = IntegratorConfig::default();
            let z = implicit_euler_step(&sys, &z0, 0.1, &cfg).unwrap();
            assert_eq!(z.amax(), 0.0);
        }
    }

    #[test]
    fn step_stays_near_exact_manifold() {
        // example 2 starting on h(x) = x^2; compare against a fine RK4 oracle
        let sys = register_example(2).unwrap();
        let cfg = IntegratorConfig::default();
        let z = implicit_euler_step(&sys, &VecF::from_vec(vec![0.05, 0.0025]), 0.1, &cfg).unwrap();
        assert!((z[1] - z[0] * z[0]).abs() <= 5e-4);

        // RK4 oracle with dt = 1e-4
        let mut s = VecF::from_vec(vec![0.05, 0.0025]);
        let h = 1e-4;
        for _ in 0..1000 {
            let k1 = sys.full_rhs(&s).unwrap();
            let k2 = sys.full_rhs(&(&s + 0.5 * h * &k1)).unwrap();
            let k3 = sys.full_rhs(&(&s + 0.5 * h * &k2)).unwrap();
            let k4 = sys.full_rhs(&(&s + h * &k3)).unwrap();
            s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((z[0] - s[0]).abs() < 5e-4);
        assert!((z[1] - s[1]).abs() < 5e-4);
    }

    #[test]
    fn reduced_sim_from_origin_is_constant_zero() {
        let sys = register_example(1).unwrap();
        let h = crate::dynsys::reference_manifold(1).unwrap();
        let cfg = IntegratorConfig {
            t_final: 5.0,
            ..IntegratorConfig::default()
        };
        let traj = simulate_reduced(&sys, &h, &VecF::zeros(1), &cfg).unwrap();
        for s in &traj.states {
            assert_eq!(s.amax(), 0.0);
        }
    }

    #[test]
    fn reduced_sim_example1_decays_monotonically() {
        // x h_alg(x) < 0 for x != 0, so |x| must decrease
        let sys = register_example(1).unwrap();
        let h = crate::dynsys::reference_manifold(1).unwrap();
        let cfg = IntegratorConfig {
            t_final: 50.0,
            ..IntegratorConfig::default()
        };
        let traj = simulate_reduced(&sys, &h, &VecF::from_vec(vec![0.05]), &cfg).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1][0].abs() < w[0][0].abs());
        }
    }

    #[test]
    fn cube_filter_and_dedup() {
        let mut idx = DedupIndex::new(2);
        assert!(idx.insert(&VecF::from_vec(vec![0.05, 0.01])));
        assert!(!idx.insert(&VecF::from_vec(vec![0.05, 0.01])));
        assert!(idx.insert(&VecF::from_vec(vec![0.05 + 5e-15, 0.01])));
    }

    #[test]
    fn dataset_respects_cube_and_is_deterministic() {
        // short horizon keeps this fast; full-length counts are checked in
        // the acceptance suite
        let sys = register_example(1).unwrap();
        let cfg = IntegratorConfig {
            t_final: 120.0,
            ..IntegratorConfig::default()
        };
        let a = generate_dataset(&sys, &cfg).unwrap();
        assert!(!a.is_empty());
        for (x, y) in a.x.iter().zip(&a.y) {
            assert!(x.amax() <= 0.1 && y.amax() <= 0.1);
        }
        let b = generate_dataset(&sys, &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (xa, xb) in a.x.iter().zip(&b.x) {
            assert_eq!(xa, xb);
        }
    }

    #[test]
    fn trajectories_settle_toward_origin() {
        // final state norm <= first in-cube state norm (1% overshoot slack)
        for id in [1u32, 2] {
            let sys = register_example(id).unwrap();
            let cfg = IntegratorConfig {
                t_final: 200.0,
                ..IntegratorConfig::default()
            };
            let corner = VecF::from_element(sys.dim(), -0.8);
            let traj = integrate_full(&sys, &corner, &cfg).unwrap();
            let in_cube: Vec<&VecF> = traj.states.iter().filter(|s| s.amax() <= 0.1).collect();
            let first = in_cube.first().unwrap().norm();
            let last = in_cube.last().unwrap().norm();
            assert!(last <= first * 1.01, "example {id}: {last} vs {first}");
        }
    }
}
