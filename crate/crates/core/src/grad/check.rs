//! Central finite-difference verification of analytic gradients.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub epsilon: f64,
    /// Coordinates probed; all of them when the vector is shorter.
    pub probes: usize,
    pub seed: u64,
    /// Denominator floor for the relative error, so that coordinates whose
    /// true gradient is zero are judged on absolute error.
    pub rel_floor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            epsilon: 1e-5,
            probes: 200,
            seed: 0,
            rel_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub op: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub num_probes: usize,
    pub epsilon: f64,
    /// Probes rejected because the perturbation crossed a non-smooth point.
    #[serde(default)]
    pub rejected_probes: usize,
}

/// Compares `analytic` against `(f(theta + eps e_i) - f(theta - eps e_i)) / 2 eps`
/// on a random subset of coordinates.
pub fn finite_diff_check(
    op: &str,
    objective: impl Fn(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    options: &CheckOptions,
) -> CheckReport {
    finite_diff_check_guarded(
        op,
        objective,
        |_: &[f64]| Vec::new(),
        theta,
        analytic,
        options,
    )
}

/// Like [`finite_diff_check`], but a probe is discarded (and another drawn)
/// whenever `cell(theta +- eps e_i)` differs from `cell(theta)`; `cell` should
/// return the integer cell of every non-smooth coordinate in the model.
pub fn finite_diff_check_guarded(
    op: &str,
    objective: impl Fn(&[f64]) -> f64,
    cell: impl Fn(&[f64]) -> Vec<i64>,
    theta: &[f64],
    analytic: &[f64],
    options: &CheckOptions,
) -> CheckReport {
    finite_diff_check_terms(
        op,
        |t: &[f64]| vec![objective(t)],
        cell,
        theta,
        analytic,
        options,
    )
}

/// Guarded check for an objective given as a sum of terms. The two
/// perturbed evaluations are differenced term by term before summing, which
/// keeps cancellation error proportional to the terms rather than the total.
pub fn finite_diff_check_terms(
    op: &str,
    terms: impl Fn(&[f64]) -> Vec<f64>,
    cell: impl Fn(&[f64]) -> Vec<i64>,
    theta: &[f64],
    analytic: &[f64],
    options: &CheckOptions,
) -> CheckReport {
    assert_eq!(
        theta.len(),
        analytic.len(),
        "parameter/gradient length mismatch"
    );
    let eps = options.epsilon;
    let mut rng = Rng::new(options.seed);
    let mut order: Vec<usize> = (0..theta.len()).collect();
    // Fisher-Yates so every coordinate is probed at most once
    for i in (1..order.len()).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
    let home = cell(theta);
    let mut work = theta.to_vec();
    let mut report = CheckReport {
        op: op.to_string(),
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        num_probes: 0,
        epsilon: eps,
        rejected_probes: 0,
    };
    for &i in &order {
        if report.num_probes >= options.probes {
            break;
        }
        let orig = work[i];
        work[i] = orig + eps;
        let plus_cell = cell(&work);
        let plus = terms(&work);
        work[i] = orig - eps;
        let minus_cell = cell(&work);
        let minus = terms(&work);
        work[i] = orig;
        if plus_cell != home || minus_cell != home {
            report.rejected_probes += 1;
            continue;
        }
        let delta: f64 = plus.iter().zip(&minus).map(|(p, m)| p - m).sum();
        let numeric = delta / (2.0 * eps);
        let abs = (numeric - analytic[i]).abs();
        let rel = abs / numeric.abs().max(analytic[i].abs()).max(options.rel_floor);
        report.max_abs_err = report.max_abs_err.max(abs);
        report.max_rel_err = report.max_rel_err.max(rel);
        report.num_probes += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_nearly_exact() {
        let a = [3.0, -1.0, 0.5, 2.0];
        let f = |t: &[f64]| t.iter().zip(&a).map(|(x, a)| a * x * x + x).sum::<f64>();
        let theta = [0.3, -1.2, 2.0, 0.7];
        let grad: Vec<f64> = theta
            .iter()
            .zip(&a)
            .map(|(x, a)| 2.0 * a * x + 1.0)
            .collect();
        let r = finite_diff_check("quadratic", f, &theta, &grad, &CheckOptions::default());
        assert_eq!(r.num_probes, 4);
        assert!(r.max_rel_err < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |t: &[f64]| t[0] * t[0];
        let r = finite_diff_check("sq", f, &[1.0], &[-2.0], &CheckOptions::default());
        assert!(r.max_rel_err > 1.0);
    }

    #[test]
    fn guard_rejects_kink_crossings() {
        let f = |t: &[f64]| t[0].floor() + t[1];
        let cell = |t: &[f64]| vec![t[0].floor() as i64];
        let r = finite_diff_check_guarded(
            "floor",
            f,
            cell,
            &[2.0 - 1e-7, 0.0],
            &[0.0, 1.0],
            &CheckOptions::default(),
        );
        assert_eq!(r.rejected_probes, 1);
        assert_eq!(r.num_probes, 1);
        assert!(r.max_rel_err < 1e-9);
    }
}
