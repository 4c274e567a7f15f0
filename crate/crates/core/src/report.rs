//! End-to-end experiment runners with pass/fail summary checks, shared by
//! the command-line runner and the integration tests. Expected values and
//! tolerances are pinned here in one place.

use crate::analysis::{
    convergence_study, max_residual, residual, stability_scan, trajectory_compare,
    ConvergenceCurve, TestGrid, TrajectoryComparison,
};
use crate::dynsys::{register_example, reference_manifold, SplitSystem, VecF};
use crate::error::Result;
use crate::integrate::{generate_dataset, Dataset, IntegratorConfig};
use crate::kernels::KernelSpec;
use crate::pipeline::{
    example1_kernels, example3_kernels, fit_greedy, ExperimentKernel, FittedExperiment,
    EX1_EPS_TOL, EX2_EPS_TOL, EX2_LAMBDA, EX3_EPS_TOL,
};
use crate::ManifoldModel;
use std::io::Write;

pub const EX1_DATASET_N: usize = 38248;
pub const EX3_DATASET_N: usize = 78796;
pub const DATASET_REL_TOL: f64 = 0.02;
/// Selected-set sizes for the five Example 1 kernel setups.
pub const EX1_COUNTS: [usize; 5] = [14, 15, 15, 7, 8];
pub const EX3_COUNT: usize = 10;
pub const COUNT_TOL: usize = 2;
/// Training residuals max_i |h(x_i) - y_i| for the Example 1 setups.
pub const EX1_TRAIN: [f64; 5] = [4.72e-7, 5.95e-7, 5.89e-7, 5.17e-6, 1.52e-6];
pub const TRAIN_FACTOR: f64 = 10.0;
pub const CONSTRAINT_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub measured: String,
    pub tolerance: String,
    pub pass: bool,
}

impl Check {
    /// measured must lie in [lo, hi]
    pub fn range(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            expected: format!("[{lo:e}, {hi:e}]"),
            measured: format!("{measured:e}"),
            tolerance: "interval".into(),
            pass: measured >= lo && measured <= hi && measured.is_finite(),
        }
    }

    /// |measured - expected| <= tol
    pub fn near(name: impl Into<String>, measured: f64, expected: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            expected: format!("{expected:e}"),
            measured: format!("{measured:e}"),
            tolerance: format!("{tol:e}"),
            pass: (measured - expected).abs() <= tol && measured.is_finite(),
        }
    }

    /// measured <= bound
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            expected: format!("<= {bound:e}"),
            measured: format!("{measured:e}"),
            tolerance: format!("{bound:e}"),
            pass: measured <= bound && measured.is_finite(),
        }
    }

    pub fn count(name: impl Into<String>, measured: usize, expected: usize, tol: usize) -> Self {
        Check {
            name: name.into(),
            expected: expected.to_string(),
            measured: measured.to_string(),
            tolerance: format!("+-{tol}"),
            pass: measured.abs_diff(expected) <= tol,
        }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

pub fn write_summary_csv<W: Write>(w: &mut W, checks: &[Check]) -> Result<()> {
    writeln!(w, "check,expected,measured,tolerance,pass")?;
    for c in checks {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.name, c.expected, c.measured, c.tolerance, c.pass
        )?;
    }
    Ok(())
}

pub fn write_summary_text<W: Write>(w: &mut W, checks: &[Check]) -> Result<()> {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in checks {
        writeln!(
            w,
            "{} {:width$}  expected {} (tol {}), measured {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.expected,
            c.tolerance,
            c.measured,
        )?;
    }
    let n_fail = checks.iter().filter(|c| !c.pass).count();
    writeln!(
        w,
        "{}/{} checks passed{}",
        checks.len() - n_fail,
        checks.len(),
        if n_fail == 0 { "" } else { " -- FAILURES ABOVE" },
    )?;
    Ok(())
}

pub struct Example1Run {
    pub sys: SplitSystem,
    pub dataset: Dataset,
    pub fits: Vec<FittedExperiment>,
    pub grid: TestGrid,
    pub checks: Vec<Check>,
}

fn constraint_checks(label: &str, fit: &FittedExperiment, d: usize, checks: &mut Vec<Check>) {
    let origin = VecF::zeros(d);
    checks.push(Check::at_most(
        format!("{label}.h_at_origin"),
        fit.model.value(&origin).abs(),
        CONSTRAINT_TOL,
    ));
    checks.push(Check::at_most(
        format!("{label}.grad_at_origin"),
        fit.model.gradient(&origin).norm(),
        CONSTRAINT_TOL,
    ));
}

pub fn run_example1() -> Result<Example1Run> {
    let sys = register_example(1)?;
    let dataset = generate_dataset(&sys, &IntegratorConfig::default())?;
    let grid = TestGrid::standard(1)?;
    let mut checks = Vec::new();
    checks.push(Check::near(
        "ex1.dataset_size",
        dataset.x.len() as f64,
        EX1_DATASET_N as f64,
        EX1_DATASET_N as f64 * DATASET_REL_TOL,
    ));

    let mut fits = Vec::new();
    for (i, setup) in example1_kernels().into_iter().enumerate() {
        let fit = fit_greedy(&dataset, &setup, EX1_EPS_TOL, 200)?;
        let label = format!("ex1.{}", fit.label);
        checks.push(Check::count(
            format!("{label}.selected"),
            fit.greedy.indices.len(),
            EX1_COUNTS[i],
            COUNT_TOL,
        ));
        constraint_checks(&label, &fit, 1, &mut checks);
        checks.push(Check::at_most(
            format!("{label}.train_residual"),
            fit.train_residual,
            TRAIN_FACTOR * EX1_TRAIN[i],
        ));
        let scan = stability_scan(&fit.model, &grid);
        checks.push(Check::range(
            format!("{label}.max_off_origin"),
            scan.max_off_origin,
            -1e-6,
            -f64::MIN_POSITIVE,
        ));
        let taylor = fit.model.taylor(4)?;
        let x2 = taylor.iter().find(|(m, _)| m[0] == 2).map_or(f64::NAN, |t| t.1);
        let x4 = taylor.iter().find(|(m, _)| m[0] == 4).map_or(f64::NAN, |t| t.1);
        checks.push(Check::near(format!("{label}.taylor_x2"), x2, -1.0, 0.02));
        let x4_tol = if setup.label.starts_with("poly") { 0.5 } else { 0.7 };
        checks.push(Check::near(format!("{label}.taylor_x4"), x4, -2.0, x4_tol));
        let maxres = max_residual(&sys, &fit.model, &grid);
        // the magnitude window is pinned only for the two kernels whose
        // residuals the source experiments display; the rest get the cap
        if setup.label == "poly4" || setup.label == "gauss1" {
            checks.push(Check::range(
                format!("{label}.residual_magnitude"),
                maxres,
                1e-6,
                1e-4,
            ));
        } else {
            checks.push(Check::at_most(
                format!("{label}.residual_magnitude"),
                maxres,
                1e-4,
            ));
        }
        fits.push(fit);
    }

    // invariance defect of the degree-4 algebraic reference: 12x^6 + 16x^8
    let h_alg = reference_manifold(1)?;
    let alg_dev = grid
        .points
        .iter()
        .map(|p| {
            let x = p[0];
            (residual(&sys, &h_alg, p).abs() - (12.0 * x.powi(6) + 16.0 * x.powi(8)).abs()).abs()
        })
        .fold(0.0, f64::max);
    checks.push(Check::at_most("ex1.algebraic_residual_identity", alg_dev, 1e-12));

    Ok(Example1Run {
        sys,
        dataset,
        fits,
        grid,
        checks,
    })
}

pub struct Example2Run {
    pub sys: SplitSystem,
    pub dataset: Dataset,
    pub fit: FittedExperiment,
    pub curve: ConvergenceCurve,
    pub grid: TestGrid,
    pub checks: Vec<Check>,
}

pub fn example2_kernel() -> ExperimentKernel {
    ExperimentKernel {
        label: "wendland",
        kernel: KernelSpec::Wendland,
        lambda: EX2_LAMBDA,
    }
}

pub fn run_example2() -> Result<Example2Run> {
    let sys = register_example(2)?;
    let dataset = generate_dataset(&sys, &IntegratorConfig::default())?;
    let grid = TestGrid::standard(1)?;
    let h_exact = reference_manifold(2)?;
    let fit = fit_greedy(&dataset, &example2_kernel(), EX2_EPS_TOL, 200)?;
    let ys: Vec<f64> = dataset.y.iter().map(|v| v[0]).collect();
    let curve = convergence_study(
        &dataset.x,
        &ys,
        &KernelSpec::Wendland,
        EX2_LAMBDA,
        &fit.greedy,
        &grid,
        &h_exact,
    )?;

    let mut checks = Vec::new();
    checks.push(Check::count(
        "ex2.selected",
        fit.greedy.indices.len(),
        200,
        0,
    ));
    checks.push(Check::at_most("ex2.convergence_slope", curve.slope, -1.6));
    checks.push(Check::at_most(
        "ex2.slope_beats_theory",
        curve.slope,
        -0.5,
    ));
    checks.push(Check::at_most(
        "ex2.error_at_200",
        curve.error_at(200).unwrap_or(f64::NAN),
        2e-7,
    ));
    // h(x) = x^2 solves the invariance equation exactly
    checks.push(Check::at_most(
        "ex2.exact_solution_residual",
        max_residual(&sys, &h_exact, &grid),
        1e-14,
    ));
    constraint_checks("ex2.wendland", &fit, 1, &mut checks);

    Ok(Example2Run {
        sys,
        dataset,
        fit,
        curve,
        grid,
        checks,
    })
}

pub struct Example3Run {
    pub sys: SplitSystem,
    pub dataset: Dataset,
    pub fits: Vec<FittedExperiment>,
    pub grid: TestGrid,
    /// (initial condition, comparison) for the poly4 model
    pub comparisons: Vec<(VecF, TrajectoryComparison)>,
    pub checks: Vec<Check>,
}

pub const EX3_X0_REPRODUCTION: [f64; 3] = [-0.8, -0.8, -0.8];
pub const EX3_X0_GENERALIZATION: [f64; 3] = [-0.4, 0.0, -0.8];

pub fn run_example3() -> Result<Example3Run> {
    let sys = register_example(3)?;
    let dataset = generate_dataset(&sys, &IntegratorConfig::default())?;
    let grid = TestGrid::standard(2)?;
    let mut checks = Vec::new();
    checks.push(Check::near(
        "ex3.dataset_size",
        dataset.x.len() as f64,
        EX3_DATASET_N as f64,
        EX3_DATASET_N as f64 * DATASET_REL_TOL,
    ));

    let mut fits = Vec::new();
    for setup in example3_kernels() {
        let fit = fit_greedy(&dataset, &setup, EX3_EPS_TOL, 200)?;
        let label = format!("ex3.{}", fit.label);
        checks.push(Check::count(
            format!("{label}.selected"),
            fit.greedy.indices.len(),
            EX3_COUNT,
            COUNT_TOL,
        ));
        constraint_checks(&label, &fit, 2, &mut checks);
        fits.push(fit);
    }

    // Taylor structure of the polynomial model
    let poly = &fits[0];
    let taylor = poly.model.taylor(2)?;
    let coeff = |m: &[u32]| {
        taylor
            .iter()
            .find(|(mi, _)| mi.as_slice() == m)
            .map_or(f64::NAN, |t| t.1)
    };
    checks.push(Check::near("ex3.poly4.taylor_x1sq", coeff(&[2, 0]), -1.13, 0.2));
    checks.push(Check::near("ex3.poly4.taylor_x2sq", coeff(&[0, 2]), -1.13, 0.2));
    checks.push(Check::at_most(
        "ex3.poly4.taylor_cross_term",
        coeff(&[1, 1]).abs(),
        1e-6,
    ));

    let mut comparisons = Vec::new();
    for (x0, plateau_lo, plateau_hi, tag) in [
        (EX3_X0_REPRODUCTION, 0.01, 0.06, "reproduction"),
        (EX3_X0_GENERALIZATION, 0.10, 0.35, "generalization"),
    ] {
        let x0 = VecF::from_vec(x0.to_vec());
        let tc = trajectory_compare(&sys, &poly.model, &x0, &IntegratorConfig::default())?;
        checks.push(Check::range(
            format!("ex3.{tag}.plateau"),
            tc.plateau,
            plateau_lo,
            plateau_hi,
        ));
        checks.push(Check::near(
            format!("ex3.{tag}.decay_rate"),
            tc.decay_rate,
            -0.05,
            0.02,
        ));
        checks.push(Check::at_most(
            format!("ex3.{tag}.final_reduced_norm"),
            tc.final_reduced_norm,
            1e-3,
        ));
        comparisons.push((x0, tc));
    }

    Ok(Example3Run {
        sys,
        dataset,
        fits,
        grid,
        comparisons,
        checks,
    })
}
