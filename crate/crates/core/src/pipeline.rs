//! End-to-end experiment settings and runners for the three example systems:
//! dataset generation, greedy center selection, constrained fit, and the
//! standard diagnostics bundle.

use crate::dynsys::VecF;
use crate::error::Result;
use crate::greedy::{p_greedy_constrained, GreedyResult, DEFAULT_MAX_POINTS};
use crate::integrate::Dataset;
use crate::kernels::KernelSpec;
use crate::manifold::{fit, Approximant, FitConfig};
use crate::ManifoldModel;

/// Greedy target accuracies for the three experiments, on the squared power
/// scale (`fit_greedy` takes the square root before calling `p_greedy`).
pub const EX1_EPS_TOL: f64 = 1e-15;
pub const EX2_EPS_TOL: f64 = 1e-10;
pub const EX3_EPS_TOL: f64 = 1e-10;
pub const EX2_LAMBDA: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct ExperimentKernel {
    pub label: &'static str,
    pub kernel: KernelSpec,
    pub lambda: f64,
}

/// The five kernel setups of the one-dimensional example: polynomial degrees
/// 4-6 with lambda 1e-13 and Gaussian widths 1, 5 with lambda 1e-10.
pub fn example1_kernels() -> Vec<ExperimentKernel> {
    vec![
        ExperimentKernel {
            label: "poly4",
            kernel: KernelSpec::polynomial(0.5, 4).unwrap(),
            lambda: 1e-13,
        },
        ExperimentKernel {
            label: "poly5",
            kernel: KernelSpec::polynomial(0.5, 5).unwrap(),
            lambda: 1e-13,
        },
        ExperimentKernel {
            label: "poly6",
            kernel: KernelSpec::polynomial(0.5, 6).unwrap(),
            lambda: 1e-13,
        },
        ExperimentKernel {
            label: "gauss1",
            kernel: KernelSpec::gaussian(1.0).unwrap(),
            lambda: 1e-10,
        },
        ExperimentKernel {
            label: "gauss5",
            kernel: KernelSpec::gaussian(5.0).unwrap(),
            lambda: 1e-10,
        },
    ]
}

/// The two kernel setups of the two-dimensional oscillator example.
pub fn example3_kernels() -> Vec<ExperimentKernel> {
    vec![
        ExperimentKernel {
            label: "poly4",
            kernel: KernelSpec::polynomial(0.5, 4).unwrap(),
            lambda: 1e-10,
        },
        ExperimentKernel {
            label: "gauss0.5",
            kernel: KernelSpec::gaussian(0.5).unwrap(),
            lambda: 1e-10,
        },
    ]
}

#[derive(Clone, Debug)]
pub struct FittedExperiment {
    pub label: String,
    pub greedy: GreedyResult,
    pub model: Approximant,
    /// max |hhat(x_i) - y_i| over the greedy-selected training centers
    pub train_residual: f64,
}

/// Greedy-select centers from the dataset and fit the constrained model.
/// Selection uses the constraint-conditioned power function, matching the
/// space the fit searches.
///
/// `eps_tol_sq` is the stopping tolerance on the squared power scale; the
/// equivalent un-squared tolerance sqrt(eps_tol_sq) is handed to the greedy
/// routine.
pub fn fit_greedy(
    ds: &Dataset,
    setup: &ExperimentKernel,
    eps_tol_sq: f64,
    max_points: usize,
) -> Result<FittedExperiment> {
    let greedy = p_greedy_constrained(&ds.x, &setup.kernel, eps_tol_sq.sqrt(), max_points)?;
    let xs: Vec<VecF> = greedy.indices.iter().map(|&i| ds.x[i].clone()).collect();
    let ys: Vec<f64> = greedy.indices.iter().map(|&i| ds.y[i][0]).collect();
    let config = FitConfig::new(setup.lambda, setup.kernel.clone())?;
    let model = fit(&xs, &ys, &config)?;
    let train_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (model.value(x) - y).abs())
        .fold(0.0, f64::max);
    Ok(FittedExperiment {
        label: setup.label.to_string(),
        greedy,
        model,
        train_residual,
    })
}

pub fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}
