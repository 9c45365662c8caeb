//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use fraclap::{build_kernel_fast, make_mask, DomainMask, GridFunction, MaskShape, OperatorHandle, ProblemParams, QuadratureRule};

/// Operator with the default quadrature for `d`, `N`, `s`.
pub fn operator(d: usize, n: usize, s: f64) -> OperatorHandle {
    let p = ProblemParams::new(d, n, s).expect("valid parameters");
    let k = build_kernel_fast(&p, &QuadratureRule::default_for(d)).expect("kernel");
    OperatorHandle::new(Arc::new(k))
}

/// Centred ball of radius 0.45 and a unit right-hand side.
pub fn disc_problem(p: &ProblemParams) -> (DomainMask, GridFunction) {
    let mask = make_mask(
        p,
        &MaskShape::Disc {
            center: vec![0.5; p.d()],
            radius: 0.45,
        },
    )
    .expect("disc fits");
    (mask, GridFunction::constant(*p, 1.0))
}

/// Smooth deterministic input.
pub fn smooth_input(p: &ProblemParams) -> Vec<f64> {
    GridFunction::from_fn(*p, |x| x.iter().map(|c| (std::f64::consts::TAU * c).sin()).product())
        .into_values()
}
