//! Implicit Euler for `∂_t u + (-Δ)^s u + ε^{-1} W'(u) = 0` with the double
//! well `W(u) = u²(u-1)²/4`; the reaction term is treated explicitly:
//! `(1 + τA) u^{t+1} = u^t - (τ/ε) W'(u^t)`.

use std::sync::Arc;

use super::{Backend, PeriodicMultiplier};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, ProblemParams};
use crate::kernel::{build_kernel_fast, periodic_symbol, ConvolutionKernel, QuadratureRule};
use crate::operator::OperatorHandle;
use crate::solver::{cg_in_place, CgConfig};

/// `W'(u) = u(u-1)(2u-1)/2`.
pub fn double_well_prime(u: f64) -> f64 {
    0.5 * u * (u - 1.0) * (2.0 * u - 1.0)
}

/// Indicator of `[1/4, 3/4)` along every axis. The half-open interval puts
/// exactly half of the lattice points in the initial phase.
pub fn half_open_indicator(params: &ProblemParams) -> GridFunction {
    GridFunction::from_fn(*params, |x| {
        if x.iter().all(|&c| (0.25..0.75).contains(&c)) {
            1.0
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug)]
pub struct AllenCahnConfig {
    pub params: ProblemParams,
    pub eps: f64,
    pub tau: f64,
    pub t_end: f64,
    pub backend: Backend,
    pub initial: GridFunction,
    /// Solver settings of the Dirichlet backend, warm-started each step.
    pub cg: CgConfig,
    /// Record mass and kink every this many steps.
    pub sample_every: usize,
    /// Times at which full grids are kept.
    pub snapshot_times: Vec<f64>,
}

impl AllenCahnConfig {
    /// `d=1, N=1024, s=1/2, ε=2e-3, τ=1e-3, t_end=40`, indicator start.
    pub fn standard(backend: Backend) -> Self {
        let params = ProblemParams::new(1, 1024, 0.5).expect("valid defaults");
        Self {
            params,
            eps: 2e-3,
            tau: 1e-3,
            t_end: 40.0,
            backend,
            initial: half_open_indicator(&params),
            cg: CgConfig {
                tol: 1e-10,
                ..CgConfig::default()
            },
            sample_every: 10,
            snapshot_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "eps and tau must be positive, got eps={} tau={}",
                self.eps, self.tau
            )));
        }
        if !(self.t_end >= self.tau) {
            return Err(Error::Config(format!(
                "t_end must be at least tau, got t_end={} tau={}",
                self.t_end, self.tau
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        let ip = self.initial.params();
        if ip.d() != self.params.d() || ip.n() != self.params.n() {
            return Err(Error::Shape("initial state does not match parameters".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcSample {
    pub t: f64,
    pub mass: f64,
    pub kink: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AllenCahnRun {
    pub samples: Vec<AcSample>,
    pub snapshots: Vec<(f64, GridFunction)>,
    pub final_state: GridFunction,
    pub steps: usize,
    /// Total CG iterations of the Dirichlet backend.
    pub cg_iterations: usize,
}

/// Leftmost upward crossing of 1/2 along the first axis row, by linear
/// interpolation between neighbouring lattice values. Defined for `d = 1`.
pub fn kink_position(u: &GridFunction) -> Option<f64> {
    let p = u.params();
    if p.d() != 1 {
        return None;
    }
    let v = u.values();
    let n = p.n() as f64;
    v.windows(2).enumerate().find_map(|(i, w)| {
        (w[0] < 0.5 && w[1] >= 0.5).then(|| (i as f64 + (0.5 - w[0]) / (w[1] - w[0])) / n)
    })
}

fn mass(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn allen_cahn_run(cfg: &AllenCahnConfig, kernel: Option<Arc<ConvolutionKernel>>) -> Result<AllenCahnRun> {
    cfg.validate()?;
    let p = cfg.params;
    let steps = (cfg.t_end / cfg.tau).round() as usize;
    let react = cfg.tau / cfg.eps;
    let mut u = cfg.initial.values().to_vec();
    let mut rhs = vec![0.0; u.len()];
    let mut samples = vec![AcSample {
        t: 0.0,
        mass: mass(&u),
        kink: kink_position(&cfg.initial),
    }];
    let mut snaps: Vec<f64> = cfg.snapshot_times.clone();
    snaps.sort_by(|a, b| a.total_cmp(b));
    let mut snapshots = Vec::new();
    let mut next_snap = 0;
    while next_snap < snaps.len() && snaps[next_snap] <= 0.0 {
        snapshots.push((0.0, cfg.initial.clone()));
        next_snap += 1;
    }

    enum Stepper {
        Periodic(PeriodicMultiplier, Vec<f64>),
        Dirichlet(OperatorHandle),
    }
    let mut stepper = match cfg.backend {
        Backend::Periodic => {
            let zeta = periodic_symbol(&p, 1);
            let inv: Vec<f64> = zeta.iter().map(|z| 1.0 / (1.0 + cfg.tau * z)).collect();
            Stepper::Periodic(PeriodicMultiplier::new(&p), inv)
        }
        Backend::Dirichlet => {
            let k = match kernel {
                Some(k) => k,
                None => Arc::new(build_kernel_fast(&p, &QuadratureRule::default_for(p.d()))?),
            };
            if k.params() != &p {
                return Err(Error::Config("kernel parameters differ from the run".into()));
            }
            Stepper::Dirichlet(OperatorHandle::new(k))
        }
    };

    let mut cg_iterations = 0;
    let mut tmp = vec![0.0; u.len()];
    for step in 1..=steps {
        for (r, &v) in rhs.iter_mut().zip(&u) {
            *r = v - react * double_well_prime(v);
        }
        match &mut stepper {
            Stepper::Periodic(pm, inv) => pm.apply(&rhs, &mut u, |k| inv[k]),
            Stepper::Dirichlet(op) => {
                let tau = cfg.tau;
                let st = cg_in_place(
                    |v, out| {
                        op.apply(v, &mut tmp);
                        for ((o, &a), &b) in out.iter_mut().zip(v).zip(&tmp) {
                            *o = a + tau * b;
                        }
                    },
                    &rhs,
                    &mut u,
                    None,
                    &cfg.cg,
                )?;
                if !st.converged {
                    return Err(Error::Numerical(format!(
                        "CG did not converge in time step {step} (residual {:.3e})",
                        st.final_residual
                    )));
                }
                cg_iterations += st.iterations;
            }
        }
        let t = step as f64 * cfg.tau;
        let sample_now = step % cfg.sample_every == 0 || step == steps;
        let snap_now = next_snap < snaps.len() && t + 0.5 * cfg.tau >= snaps[next_snap];
        if sample_now || snap_now {
            let g = GridFunction::new(p, u.clone())?;
            if sample_now {
                samples.push(AcSample {
                    t,
                    mass: mass(&u),
                    kink: kink_position(&g),
                });
            }
            while next_snap < snaps.len() && t + 0.5 * cfg.tau >= snaps[next_snap] {
                snapshots.push((t, g.clone()));
                next_snap += 1;
            }
        }
    }
    Ok(AllenCahnRun {
        samples,
        snapshots,
        final_state: GridFunction::new(p, u)?,
        steps,
        cg_iterations,
    })
}

/// Fits `mass(t) = a (t₀ - t)^{1/2}` by linear regression of `mass²` on `t`
/// over samples with `lo < mass < hi`. Returns `(a, t₀)`.
pub fn fit_annihilation(samples: &[AcSample], lo: f64, hi: f64) -> Option<(f64, f64)> {
    let sel: Vec<&AcSample> = samples.iter().filter(|s| s.mass > lo && s.mass < hi).collect();
    if sel.len() < 3 {
        return None;
    }
    let n = sel.len() as f64;
    let mt = sel.iter().map(|s| s.t).sum::<f64>() / n;
    let my = sel.iter().map(|s| s.mass * s.mass).sum::<f64>() / n;
    let sxy: f64 = sel.iter().map(|s| (s.t - mt) * (s.mass * s.mass - my)).sum();
    let sxx: f64 = sel.iter().map(|s| (s.t - mt).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return None;
    }
    let a2 = -slope;
    let t0 = (my - slope * mt) / a2;
    Some((a2.sqrt(), t0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_values() {
        assert_eq!(double_well_prime(0.0), 0.0);
        assert_eq!(double_well_prime(1.0), 0.0);
        assert_eq!(double_well_prime(0.5), 0.0);
        assert_eq!(double_well_prime(2.0), 3.0);
        assert_eq!(double_well_prime(-1.0), -3.0);
    }

    #[test]
    fn kink_interpolates() {
        let p = ProblemParams::new(1, 8, 0.5).unwrap();
        let u = GridFunction::new(p, vec![0.0, 0.0, 0.25, 0.75, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((kink_position(&u).unwrap() - 2.5 / 8.0).abs() < 1e-15);
        assert_eq!(kink_position(&GridFunction::zeros(p)), None);
    }

    #[test]
    fn indicator_has_half_mass() {
        let p = ProblemParams::new(1, 1024, 0.5).unwrap();
        let u = half_open_indicator(&p);
        assert_eq!(u.values().iter().sum::<f64>(), 512.0);
    }

    #[test]
    fn fit_recovers_parameters() {
        let samples: Vec<AcSample> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.1;
                AcSample {
                    t,
                    mass: 0.2 * (5.0f64 - t).max(0.0).sqrt(),
                    kink: None,
                }
            })
            .collect();
        let (a, t0) = fit_annihilation(&samples, 0.05, 0.6).unwrap();
        assert!((a - 0.2).abs() < 1e-10 && (t0 - 5.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = AllenCahnConfig::standard(Backend::Periodic);
        cfg.t_end = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = AllenCahnConfig::standard(Backend::Periodic);
        cfg.eps = -1.0;
        assert!(cfg.validate().is_err());
    }
}
