//! Conjugate gradients on the masked system `S_Ω Φ^N S_Ω^T u = S_Ω f`,
//! the Dirichlet driver, the ball benchmark and convergence studies.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{check_ball, make_mask, DomainMask, GridFunction, MaskShape, ProblemParams};
use crate::kernel::{build_kernel_fast, ConvolutionKernel, FracConstants, QuadratureRule};
use crate::operator::OperatorHandle;

/// Residual functional compared against [`CgConfig::tol`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    /// `‖r‖₂ = (Σ r_k²)^{1/2}`.
    Euclidean,
    /// `N^{-d} Σ r_k²`.
    ScaledSquared,
}

impl StopRule {
    pub fn name(self) -> &'static str {
        match self {
            StopRule::Euclidean => "euclidean",
            StopRule::ScaledSquared => "scaled-squared",
        }
    }

    fn eval(self, rr: f64, len: usize) -> f64 {
        match self {
            StopRule::Euclidean => rr.sqrt(),
            StopRule::ScaledSquared => rr / len as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub record_history: bool,
    pub stop: StopRule,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            record_history: false,
            stop: StopRule::Euclidean,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config(format!(
                "CG needs tol > 0 and max_iter >= 1, got tol={} max_iter={}",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Both residual functionals after one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualSample {
    pub euclidean: f64,
    pub scaled_squared: f64,
}

impl ResidualSample {
    fn new(rr: f64, len: usize) -> Self {
        Self {
            euclidean: rr.sqrt(),
            scaled_squared: rr / len as f64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub iterations: usize,
    /// Value of the configured stopping functional at exit.
    pub final_residual: f64,
    pub residual: ResidualSample,
    pub converged: bool,
    /// Residuals after each iteration, starting with the initial one.
    pub history: Option<Vec<ResidualSample>>,
}

/// Outcome of [`cg_in_place`].
#[derive(Clone, Debug)]
pub struct CgStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub residual: ResidualSample,
    pub converged: bool,
    pub history: Option<Vec<ResidualSample>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hestenes-Stiefel CG starting from the content of `x`. When `mask` is
/// given, every vector is kept at zero outside it.
pub fn cg_in_place(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    mask: Option<&[bool]>,
    cfg: &CgConfig,
) -> Result<CgStats> {
    cfg.validate()?;
    let len = b.len();
    assert_eq!(x.len(), len, "initial guess length");
    let restrict = |v: &mut [f64]| {
        if let Some(m) = mask {
            v.iter_mut().zip(m).for_each(|(x, &keep)| {
                if !keep {
                    *x = 0.0;
                }
            });
        }
    };
    restrict(x);
    let mut r = b.to_vec();
    restrict(&mut r);
    let mut ap = vec![0.0; len];
    if x.iter().any(|&v| v != 0.0) {
        apply(x, &mut ap);
        restrict(&mut ap);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= a);
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut history = cfg.record_history.then(|| vec![ResidualSample::new(rr, len)]);
    let mut iterations = 0;
    let mut converged = cfg.stop.eval(rr, len) < cfg.tol;
    while !converged && iterations < cfg.max_iter {
        apply(&p, &mut ap);
        restrict(&mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::Numerical(format!("non-finite curvature at iteration {iterations}")));
        }
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        let rr_new = dot(&r, &r);
        iterations += 1;
        if !rr_new.is_finite() {
            return Err(Error::Numerical(format!("non-finite residual at iteration {iterations}")));
        }
        if let Some(h) = history.as_mut() {
            h.push(ResidualSample::new(rr_new, len));
        }
        converged = cfg.stop.eval(rr_new, len) < cfg.tol;
        let beta = rr_new / rr;
        rr = rr_new;
        if !converged {
            p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
        }
    }
    Ok(CgStats {
        iterations,
        final_residual: cfg.stop.eval(rr, len),
        residual: ResidualSample::new(rr, len),
        converged,
        history,
    })
}

/// CG from a zero initial guess on the masked subspace.
pub fn cg_solve(
    apply: impl FnMut(&[f64], &mut [f64]),
    b: &GridFunction,
    mask: &DomainMask,
    cfg: &CgConfig,
) -> Result<SolveReport> {
    if mask.selected().len() != b.values().len() {
        return Err(Error::Shape("mask and right-hand side differ in size".into()));
    }
    let mut x = vec![0.0; b.values().len()];
    let st = cg_in_place(apply, b.values(), &mut x, Some(mask.selected()), cfg)?;
    Ok(SolveReport {
        solution: GridFunction::new(*b.params(), x)?,
        iterations: st.iterations,
        final_residual: st.final_residual,
        residual: st.residual,
        converged: st.converged,
        history: st.history,
    })
}

/// Solves `S_Ω Φ^N S_Ω^T u = S_Ω f` with an existing operator.
pub fn solve_dirichlet_with(
    op: &mut OperatorHandle,
    mask: &DomainMask,
    f: &GridFunction,
    cfg: &CgConfig,
) -> Result<SolveReport> {
    if mask.count() == 0 {
        return Err(Error::Config("domain mask selects no lattice points".into()));
    }
    let p = op.params();
    if f.params().n() != p.n() || f.params().d() != p.d() {
        return Err(Error::Shape("right-hand side does not match the operator".into()));
    }
    let mut b = f.clone();
    mask.restrict(b.values_mut());
    let full = mask.is_full();
    if full {
        cg_solve(|u, out| op.apply(u, out), &b, mask, cfg)
    } else {
        cg_solve(|u, out| op.apply_masked(mask, u, out), &b, mask, cfg)
    }
}

/// Builds the kernel for `params` with `rule` and solves the masked system.
pub fn solve_dirichlet(
    params: &ProblemParams,
    mask: &DomainMask,
    f: &GridFunction,
    rule: &QuadratureRule,
    cfg: &CgConfig,
) -> Result<SolveReport> {
    if mask.count() == 0 {
        return Err(Error::Config("domain mask selects no lattice points".into()));
    }
    let kernel = build_kernel_fast(params, rule)?;
    let mut op = OperatorHandle::new(Arc::new(kernel));
    solve_dirichlet_with(&mut op, mask, f, cfg)
}

/// `r^{2s} C_ball(d,s) (1 - |x-c|²/r²)^s` inside the open ball, zero outside:
/// the solution of `(-Δ)^s u = 1` on the ball with zero exterior data.
pub fn exact_ball_solution(params: &ProblemParams, center: &[f64], radius: f64) -> Result<GridFunction> {
    let d = params.d();
    check_ball(d, center, radius)?;
    let s = params.s();
    let amp = radius.powf(2.0 * s) * FracConstants::new(d, s).c_ball;
    Ok(GridFunction::from_fn(*params, |x| {
        let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
        let t = r2 / (radius * radius);
        if r2.sqrt() < radius {
            amp * (1.0 - t).powf(s)
        } else {
            0.0
        }
    }))
}

/// Least-squares slope of `log₂ y` against `log₂ x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log2()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Negated least-squares log-log slope of error against `N` over all grids.
pub fn fit_rate(ns: &[usize], errors: &[f64]) -> Option<f64> {
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    loglog_slope(&xs, errors).map(|v| -v)
}

#[derive(Clone, Debug, PartialEq)]
pub enum StudyGeometry {
    /// Unit right-hand side on the ball of this radius around `0.5·1`,
    /// compared with the exact solution.
    Disc { radius: f64 },
    /// Unit right-hand side on the L-shape, compared with the finest grid.
    LShape,
}

impl StudyGeometry {
    pub fn describe(&self) -> String {
        match self {
            StudyGeometry::Disc { radius } => format!("disc:{radius}"),
            StudyGeometry::LShape => "lshape".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudySeries {
    pub s: f64,
    pub rows: Vec<StudyRow>,
    pub rate: Option<f64>,
    /// Grid used as reference in self-convergence mode.
    pub reference_n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub d: usize,
    pub geometry: StudyGeometry,
    pub series: Vec<StudySeries>,
}

/// Source of kernels for a study; lets callers cache or reuse them.
pub type KernelSource<'a> = dyn FnMut(&ProblemParams) -> Result<Arc<ConvolutionKernel>> + 'a;

/// Discrete L² error per grid and fitted rate for each `s`.
pub fn convergence_study(
    d: usize,
    s_list: &[f64],
    n_list: &[usize],
    geometry: &StudyGeometry,
    cfg: &CgConfig,
    kernels: &mut KernelSource<'_>,
) -> Result<StudyResult> {
    if n_list.is_empty() {
        return Err(Error::Config("empty N list".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) || n_list.iter().any(|n| !n.is_power_of_two()) {
        return Err(Error::Config("N list must be ascending powers of two".into()));
    }
    if matches!(geometry, StudyGeometry::LShape) && d != 2 {
        return Err(Error::Config(format!("the L-shape study is two-dimensional, got d = {d}")));
    }
    let mut series = Vec::new();
    for &s in s_list {
        let mut rows = Vec::new();
        let mut solutions = Vec::new();
        for &n in n_list {
            let params = ProblemParams::new(d, n, s)?;
            let (shape, exact) = match geometry {
                StudyGeometry::Disc { radius } => {
                    let c = vec![0.5; d];
                    let ex = exact_ball_solution(&params, &c, *radius)?;
                    (
                        MaskShape::Disc {
                            center: c,
                            radius: *radius,
                        },
                        Some(ex),
                    )
                }
                StudyGeometry::LShape => (MaskShape::LShape, None),
            };
            let mask = make_mask(&params, &shape)?;
            let f = GridFunction::constant(params, 1.0);
            let mut op = OperatorHandle::new(kernels(&params)?);
            let rep = solve_dirichlet_with(&mut op, &mask, &f, cfg)?;
            let error = match &exact {
                Some(ex) => l2_diff(rep.solution.values(), ex.values()),
                None => f64::NAN,
            };
            rows.push(StudyRow {
                n,
                error,
                iterations: rep.iterations,
                converged: rep.converged,
            });
            if exact.is_none() {
                solutions.push(rep.solution);
            }
        }
        let mut reference_n = None;
        if matches!(geometry, StudyGeometry::LShape) {
            let fine = solutions.last().expect("at least one grid");
            let nf = fine.params().n();
            reference_n = Some(nf);
            for (row, sol) in rows.iter_mut().zip(&solutions) {
                if row.n < nf {
                    row.error = restricted_l2_diff(sol, fine);
                }
            }
            rows.pop();
        }
        let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
        let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
        series.push(StudySeries {
            s,
            rate: fit_rate(&ns, &errs),
            rows,
            reference_n,
        });
    }
    Ok(StudyResult {
        d,
        geometry: geometry.clone(),
        series,
    })
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Error of a coarse solution against the fine one sampled on the coarse
/// sublattice.
fn restricted_l2_diff(coarse: &GridFunction, fine: &GridFunction) -> f64 {
    let p = coarse.params();
    let (d, n) = (p.d(), p.n());
    let nf = fine.params().n();
    let r = nf / n;
    let mut sum = 0.0;
    for (i, &v) in coarse.values().iter().enumerate() {
        let mut rem = i;
        let mut idx = 0;
        let mut mul = 1;
        for _ in 0..d {
            idx += (rem % n) * r * mul;
            rem /= n;
            mul *= nf;
        }
        sum += (v - fine.values()[idx]).powi(2);
    }
    (sum / coarse.values().len() as f64).sqrt()
}

/// `{:.16e}` formatting: 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with one `N,error,rate` block per exponent. Comment lines carry the
/// exponent and iteration counts; the fitted rate is repeated on each row
/// and left empty when fewer than two grids are available.
pub fn study_csv(result: &StudyResult, cfg: &CgConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# d={} geometry={} stop={} tol={}",
        result.d,
        result.geometry.describe(),
        cfg.stop.name(),
        cfg.tol
    );
    for ser in &result.series {
        let _ = writeln!(out, "# s={}", ser.s);
        if let Some(nf) = ser.reference_n {
            let _ = writeln!(out, "# reference_N={nf}");
        }
        let its: Vec<String> = ser.rows.iter().map(|r| r.iterations.to_string()).collect();
        let _ = writeln!(out, "# iterations={}", its.join(";"));
        let _ = writeln!(out, "N,error,rate");
        let rate = ser.rate.map(fmt17).unwrap_or_default();
        for row in &ser.rows {
            let _ = writeln!(out, "{},{},{}", row.n, fmt17(row.error), rate);
        }
    }
    out
}
