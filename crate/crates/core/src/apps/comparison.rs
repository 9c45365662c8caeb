//! Sinc operator versus the scaled periodic operator,
//! `e(S) = ‖(-Δ)^s_N u - S^{-2s} (-Δ̃)^s_{S,N} u‖_∞`.

use std::sync::Arc;

use crate::error::Result;
use crate::grid::{check_ball, norm_linf_slice, GridFunction, ProblemParams};
use crate::kernel::{build_kernel_fast, QuadratureRule};
use crate::operator::{apply_scaled_periodic, OperatorHandle};

/// Unnormalized bump `exp(-1/(1-ρ²))`, `ρ = |x-c|/r < 1`, zero elsewhere.
pub fn mollifier(params: &ProblemParams, center: &[f64], radius: f64) -> Result<GridFunction> {
    check_ball(params.d(), center, radius)?;
    Ok(GridFunction::from_fn(*params, |x| {
        let r2: f64 = x
            .iter()
            .zip(center)
            .map(|(a, c)| (a - c).powi(2))
            .sum::<f64>()
            / (radius * radius);
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub rule: String,
    pub scale: usize,
    pub error: f64,
}

/// [`operator_comparison_with`] for the bump of radius 1/2 centred in the cube.
pub fn operator_comparison(
    params: &ProblemParams,
    rules: &[QuadratureRule],
    scales: &[usize],
) -> Result<Vec<ComparisonRow>> {
    let u = mollifier(params, &vec![0.5; params.d()], 0.5)?;
    operator_comparison_with(params, &u, rules, scales)
}

/// `e(S)` for every rule and scale factor, rules outermost.
pub fn operator_comparison_with(
    params: &ProblemParams,
    u: &GridFunction,
    rules: &[QuadratureRule],
    scales: &[usize],
) -> Result<Vec<ComparisonRow>> {
    let s = params.s();
    let periodic: Vec<Vec<f64>> = scales
        .iter()
        .map(|&sc| {
            let f = (sc as f64).powf(-2.0 * s);
            apply_scaled_periodic(params, sc, u).map(|g| g.values().iter().map(|v| f * v).collect())
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rule in rules {
        let mut op = OperatorHandle::new(Arc::new(build_kernel_fast(params, rule)?));
        let sinc = op.apply_sinc(u)?;
        for (&sc, per) in scales.iter().zip(&periodic) {
            let diff: Vec<f64> = sinc.values().iter().zip(per).map(|(a, b)| a - b).collect();
            rows.push(ComparisonRow {
                rule: rule.id(),
                scale: sc,
                error: norm_linf_slice(&diff),
            });
        }
    }
    Ok(rows)
}
