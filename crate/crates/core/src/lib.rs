//! Sinc-basis discretization of the integral fractional Laplacian on `[0,1)^d`.
//!
//! Grid samples `u_k = u(k/N)` are interpolated by tensor sinc functions; the
//! fractional Laplacian of the interpolant, evaluated on the lattice, is a
//! discrete convolution with a kernel `Φ^N`. The kernel's DFT `Φ̂` on the
//! `(2N)^d` padded lattice is assembled once by quadrature ([`kernel`]) and
//! applied by zero-padded FFT convolution ([`operator`]). Dirichlet problems
//! on masked domains are solved with conjugate gradients ([`solver`]).
//!
//! ```
//! use fraclap::{gauss_legendre_rule, build_kernel_fast, OperatorHandle, ProblemParams};
//!
//! let params = ProblemParams::new(1, 16, 0.5).unwrap();
//! let rule = gauss_legendre_rule(7, 1);
//! let kernel = build_kernel_fast(&params, &rule).unwrap();
//! let mut op = OperatorHandle::new(kernel.into());
//! let u = vec![1.0; 16];
//! let mut out = vec![0.0; 16];
//! op.apply(&u, &mut out);
//! assert!(out.iter().all(|v| v.is_finite()));
//! ```

pub mod apps;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod operator;
pub mod solver;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{
    linear_index, make_mask, multi_index, norm_l2, norm_linf, shift_to_signed, DomainMask,
    GridFunction, MaskShape, MultiIndex, ProblemParams,
};
pub use kernel::{
    build_kernel, build_kernel_fast, gauss_legendre_rule, periodic_symbol, uniform_rule, y, y_d,
    ConvolutionKernel, FracConstants, QuadKind, QuadratureRule,
};
pub use operator::{apply_scaled_periodic, OperatorHandle};
pub use solver::{cg_in_place, cg_solve, solve_dirichlet, solve_dirichlet_with, CgConfig, SolveReport, StopRule};
pub use transform::{dft_forward, dft_inverse, FftNd, SpectralBuffer};
