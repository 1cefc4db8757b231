//! Central finite-difference gradient verification.
//!
//! The numeric gradient is produced purely by forward re-evaluation inside
//! `no_grad`, so it is independent of the reverse-mode path it checks.
//! Verification runs in double precision with the perturbation fixed at 1e-5.

use crate::numeric::tensor::{no_grad, Scalar, Tensor};

/// Perturbation used by the verification suites.
pub const EPSILON: f64 = 1e-5;

/// Relative tolerance the analytic gradients must meet.
pub const TOLERANCE: f64 = 1e-4;

/// Central finite differences on one parameter tensor. `forward` must
/// re-run the forward pass against the parameter's current contents and
/// return the scalar loss.
pub fn finite_diff_grad<F: Scalar>(
    param: &Tensor<F>,
    eps: f64,
    mut forward: impl FnMut() -> Tensor<F>,
) -> Vec<f64> {
    let original = param.to_vec();
    let mut grad = vec![0.0; original.len()];
    let mut work = original.clone();
    for i in 0..original.len() {
        let base = original[i].as_f64();
        work[i] = F::from_f64(base + eps);
        param.set_data(&work);
        let plus = no_grad(&mut forward).item().expect("scalar loss").as_f64();
        work[i] = F::from_f64(base - eps);
        param.set_data(&work);
        let minus = no_grad(&mut forward).item().expect("scalar loss").as_f64();
        work[i] = original[i];
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    param.set_data(&original);
    grad
}

/// Worst relative error between analytic and numeric gradients. The
/// denominator is floored at 1e-4 so that agreeing near-zero gradients
/// (absolute difference below 1e-8) pass the 1e-4 relative bound.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Result of verifying one parameter against finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

/// Checks every named parameter against central finite differences.
/// `forward` rebuilds the graph from the parameters' current contents and
/// returns the scalar loss tensor.
pub fn check_parameters<F: Scalar>(
    params: &[(String, Tensor<F>)],
    eps: f64,
    mut forward: impl FnMut() -> Tensor<F>,
) -> Vec<GradCheckReport> {
    for (_, p) in params {
        p.zero_grad();
    }
    let loss = forward();
    loss.backward().expect("backward on scalar loss");
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(name, p)| {
            p.grad()
                .unwrap_or_else(|| panic!("no gradient accumulated for {name}"))
                .iter()
                .map(|&g| g.as_f64())
                .collect()
        })
        .collect();
    params
        .iter()
        .zip(analytic)
        .map(|((name, p), a)| {
            let numeric = finite_diff_grad(p, eps, &mut forward);
            GradCheckReport {
                name: name.clone(),
                elements: a.len(),
                max_rel_error: max_rel_error(&a, &numeric),
            }
        })
        .collect()
}
