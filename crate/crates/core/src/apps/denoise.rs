//! Denoising by minimizing `½⟨u, (-Δ)^s u⟩ + (α/2)‖u - g‖²`.
//!
//! The Euler-Lagrange equation `(αI + (-Δ)^s) u = α g` is solved for the
//! mean-free part of `g`; the mean is added back and the result clamped to
//! `[0,1]` for output.

use std::sync::Arc;

use super::{Backend, PeriodicMultiplier};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, ProblemParams};
use crate::kernel::{build_kernel_fast, periodic_symbol, ConvolutionKernel, QuadratureRule};
use crate::operator::OperatorHandle;
use crate::solver::{cg_in_place, CgConfig};

#[derive(Clone, Debug)]
pub struct DenoiseConfig {
    pub s: f64,
    pub alpha: f64,
    /// Gray values in `[0,1]` on a square lattice.
    pub image: GridFunction,
    pub cg: CgConfig,
}

impl DenoiseConfig {
    pub fn new(image: GridFunction, s: f64, alpha: f64) -> Self {
        Self {
            s,
            alpha,
            image,
            cg: CgConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Domain(format!("s must lie in (0, 1), got {}", self.s)));
        }
        if self.image.params().d() != 2 {
            return Err(Error::Shape("denoising expects a two-dimensional image".into()));
        }
        Ok(())
    }

    fn params(&self) -> Result<ProblemParams> {
        self.image.params().with_s(self.s)
    }
}

#[derive(Clone, Debug)]
pub struct DenoiseResult {
    /// Output clamped to `[0,1]`.
    pub image: GridFunction,
    /// Solution before clamping.
    pub raw: GridFunction,
    /// `(α/2) N^{-d} Σ (u - g)²`.
    pub fidelity: f64,
    /// `½ N^{-d} ⟨u - ḡ, A(u - ḡ)⟩` with the backend's operator.
    pub regularizer: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn denoise(cfg: &DenoiseConfig, backend: Backend, kernel: Option<Arc<ConvolutionKernel>>) -> Result<DenoiseResult> {
    cfg.validate()?;
    let p = cfg.params()?;
    let g = cfg.image.values();
    let len = g.len();
    let gm = if g.iter().all(|&v| v == g[0]) {
        g[0]
    } else {
        g.iter().sum::<f64>() / len as f64
    };
    let b: Vec<f64> = g.iter().map(|v| cfg.alpha * (v - gm)).collect();
    let mut w = vec![0.0; len];
    let mut aw = vec![0.0; len];
    let (iterations, converged) = match backend {
        Backend::Periodic => {
            let zeta = periodic_symbol(&p, 1);
            let mut pm = PeriodicMultiplier::new(&p);
            let a = cfg.alpha;
            pm.apply(&b, &mut w, |k| 1.0 / (a + zeta[k]));
            pm.apply(&w, &mut aw, |k| zeta[k]);
            (0, true)
        }
        Backend::Dirichlet => {
            let k = match kernel {
                Some(k) => k,
                None => Arc::new(build_kernel_fast(&p, &QuadratureRule::default_for(2))?),
            };
            if k.params() != &p {
                return Err(Error::Config("kernel parameters differ from the image problem".into()));
            }
            let mut op = OperatorHandle::new(k);
            let mut tmp = vec![0.0; len];
            let a = cfg.alpha;
            let st = cg_in_place(
                |v, out| {
                    op.apply(v, &mut tmp);
                    for ((o, &x), &y) in out.iter_mut().zip(v).zip(&tmp) {
                        *o = a * x + y;
                    }
                },
                &b,
                &mut w,
                None,
                &cfg.cg,
            )?;
            op.apply(&w, &mut aw);
            (st.iterations, st.converged)
        }
    };
    let raw: Vec<f64> = w.iter().map(|v| v + gm).collect();
    let fidelity = 0.5 * cfg.alpha * raw.iter().zip(g).map(|(u, g)| (u - g).powi(2)).sum::<f64>() / len as f64;
    let regularizer = 0.5 * w.iter().zip(&aw).map(|(x, y)| x * y).sum::<f64>() / len as f64;
    let clamped: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(DenoiseResult {
        image: GridFunction::new(p, clamped)?,
        raw: GridFunction::new(p, raw)?,
        fidelity,
        regularizer,
        iterations,
        converged,
    })
}
