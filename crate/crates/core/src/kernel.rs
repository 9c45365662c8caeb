//! Convolution kernel `Φ̂` of the sinc-fractional Laplacian.
//!
//! In lag space the kernel is
//!
//! ```text
//! Φ^N(K) = π^{2s} (2N)^{-d} Σ_i α_i Σ_{j ∈ I'_{2N}^d} |j + x_i|^{2s} e^{iπ K·(j + x_i)/N}
//! ```
//!
//! for a quadrature rule `(x_i, α_i)` on `[0,1]^d`. [`build_kernel`] follows
//! the published assembly (three transforms per node through the `Y`
//! geometric sums); [`build_kernel_fast`] evaluates the same sum directly
//! with one transform per pair of nodes. Both return the DFT of the lag
//! array laid out for the zero-padded convolution of [`crate::operator`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{signed, ProblemParams};
use crate::transform::FftNd;

pub use crate::io::{load_kernel, save_kernel};

/// Half-width of the window around multiples of `2π` where `Y` takes its
/// limit value `2N`.
pub const Y_SINGULAR_WINDOW: f64 = 1e-9;

/// `Y(x, N) = Σ_{j=-N}^{N-1} e^{ijx}`.
pub fn y(x: f64, n: usize) -> Complex64 {
    let xm = x - 2.0 * PI * (x / (2.0 * PI)).round();
    if xm.abs() < Y_SINGULAR_WINDOW {
        return Complex64::new(2.0 * n as f64, 0.0);
    }
    // e^{-iNx}(e^{2iNx} - 1)/(e^{ix} - 1) = e^{-ix/2} sin(Nx)/sin(x/2)
    let amp = (n as f64 * xm).sin() / (0.5 * xm).sin();
    Complex64::from_polar(1.0, -0.5 * xm) * amp
}

/// Product of [`y`] over the coordinates of `x`.
pub fn y_d(x: &[f64], n: usize) -> Complex64 {
    x.iter().fold(Complex64::new(1.0, 0.0), |acc, &xi| acc * y(xi, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuadKind {
    Uniform,
    GaussLegendre,
}

impl QuadKind {
    pub fn code(self) -> u8 {
        match self {
            QuadKind::Uniform => 0,
            QuadKind::GaussLegendre => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(QuadKind::Uniform),
            1 => Some(QuadKind::GaussLegendre),
            _ => None,
        }
    }
}

/// Tensor-product rule on `[0,1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    kind: QuadKind,
    order: usize,
    dim: usize,
    axis_nodes: Vec<f64>,
    axis_weights: Vec<f64>,
}

impl QuadratureRule {
    fn tensor(kind: QuadKind, dim: usize, axis_nodes: Vec<f64>, axis_weights: Vec<f64>) -> Self {
        Self {
            kind,
            order: axis_nodes.len(),
            dim,
            axis_nodes,
            axis_weights,
        }
    }

    /// Builds a rule from `gl<n>` or `uniform:<n>`.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let bad = || Error::Config(format!("unknown quadrature '{spec}', expected gl<n> or uniform:<n>"));
        if let Some(n) = spec.strip_prefix("gl") {
            let n: usize = n.parse().map_err(|_| bad())?;
            if !(1..=32).contains(&n) {
                return Err(Error::Config(format!("Gauss-Legendre order must be in 1..=32, got {n}")));
            }
            Ok(gauss_legendre_rule(n, dim))
        } else if let Some(n) = spec.strip_prefix("uniform:") {
            let n: usize = n.parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(Error::Config("uniform rule needs at least one node".into()));
            }
            Ok(uniform_rule(n, dim))
        } else {
            Err(bad())
        }
    }

    pub fn from_kind(kind: QuadKind, order: usize, dim: usize) -> Result<Self> {
        match kind {
            QuadKind::Uniform if order >= 1 => Ok(uniform_rule(order, dim)),
            QuadKind::GaussLegendre if (1..=32).contains(&order) => Ok(gauss_legendre_rule(order, dim)),
            _ => Err(Error::Config(format!("invalid quadrature order {order} for {kind:?}"))),
        }
    }

    /// Default rule for a dimension: GL7 for d ≤ 2, GL5 for d = 3.
    pub fn default_for(dim: usize) -> Self {
        gauss_legendre_rule(if dim <= 2 { 7 } else { 5 }, dim)
    }

    pub fn id(&self) -> String {
        match self.kind {
            QuadKind::Uniform => format!("uniform:{}", self.order),
            QuadKind::GaussLegendre => format!("gl{}", self.order),
        }
    }

    pub fn kind(&self) -> QuadKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.pow(self.dim as u32)
    }

    pub fn axis_nodes(&self) -> &[f64] {
        &self.axis_nodes
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.axis_weights
    }

    /// Node `i` (row-major over per-axis node indices) padded to three
    /// coordinates, with its weight.
    pub fn node(&self, i: usize) -> ([f64; 3], f64) {
        let mut x = [0.0; 3];
        let mut w = 1.0;
        let mut rem = i;
        for a in (0..self.dim).rev() {
            let q = rem % self.order;
            rem /= self.order;
            x[a] = self.axis_nodes[q];
            w *= self.axis_weights[q];
        }
        (x, w)
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.node(i).0[..self.dim].to_vec())
            .collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i).1).collect()
    }
}

/// Nodes `i/N_Q`, weights `N_Q^{-d}`.
pub fn uniform_rule(nq: usize, dim: usize) -> QuadratureRule {
    assert!(nq >= 1, "uniform rule needs at least one node");
    let nodes = (0..nq).map(|i| i as f64 / nq as f64).collect();
    QuadratureRule::tensor(QuadKind::Uniform, dim, nodes, vec![1.0 / nq as f64; nq])
}

/// `n`-point Gauss-Legendre rule mapped to `[0,1]`, tensorized to `d` axes.
pub fn gauss_legendre_rule(n: usize, dim: usize) -> QuadratureRule {
    assert!((1..=32).contains(&n), "Gauss-Legendre order must be in 1..=32");
    let (x, w) = gauss_legendre_1d(n);
    let nodes = x.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights = w.iter().map(|&v| 0.5 * v).collect();
    QuadratureRule::tensor(QuadKind::GaussLegendre, dim, nodes, weights)
}

/// Legendre `P_n(x)` and `P_n'(x)`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes (ascending) and weights on `[-1,1]` by Newton iteration.
pub fn gauss_legendre_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n / 2 {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        let (_, dp) = legendre(n, 0.0);
        x[n / 2] = 0.0;
        w[n / 2] = 2.0 / (dp * dp);
    }
    (x, w)
}

/// `Φ̂` on the `(2N)^d` lattice with the rule it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolutionKernel {
    params: ProblemParams,
    quad_kind: QuadKind,
    quad_order: usize,
    phi_hat: Vec<Complex64>,
}

impl ConvolutionKernel {
    pub fn new(
        params: ProblemParams,
        quad_kind: QuadKind,
        quad_order: usize,
        phi_hat: Vec<Complex64>,
    ) -> Result<Self> {
        if phi_hat.len() != params.padded_len() {
            return Err(Error::Shape(format!(
                "kernel needs {} coefficients, got {}",
                params.padded_len(),
                phi_hat.len()
            )));
        }
        Ok(Self {
            params,
            quad_kind,
            quad_order,
            phi_hat,
        })
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn quad_kind(&self) -> QuadKind {
        self.quad_kind
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn quadrature_id(&self) -> String {
        match self.quad_kind {
            QuadKind::Uniform => format!("uniform:{}", self.quad_order),
            QuadKind::GaussLegendre => format!("gl{}", self.quad_order),
        }
    }

    pub fn phi_hat(&self) -> &[Complex64] {
        &self.phi_hat
    }

    /// FNV-1a over the payload bits; identifies a kernel in logs.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in &self.phi_hat {
            for b in v.re.to_le_bytes().into_iter().chain(v.im.to_le_bytes()) {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// `π^{2s}(2N)^{-d}`, which equals `(2π)^{-d}(π/N)^{d+2s}N^{2s}`.
pub fn kernel_prefactor(p: &ProblemParams) -> f64 {
    PI.powf(2.0 * p.s()) * (2.0 * p.n() as f64).powi(-(p.d() as i32))
}

fn check_rule(p: &ProblemParams, rule: &QuadratureRule) -> Result<()> {
    if rule.dim() != p.d() {
        return Err(Error::Config(format!(
            "quadrature rule is {}-dimensional, problem is {}-dimensional",
            rule.dim(),
            p.d()
        )));
    }
    Ok(())
}

/// `r2^s`, with exact shortcuts for common exponents.
#[inline]
fn pow_s(r2: f64, s: f64) -> f64 {
    if s == 0.5 {
        r2.sqrt()
    } else if s == 1.0 {
        r2
    } else if s == 0.25 {
        r2.sqrt().sqrt()
    } else {
        r2.powf(s)
    }
}

/// Shape padded with leading unit axes to three dimensions.
fn dims3(d: usize, m: usize) -> [usize; 3] {
    let mut dims = [1; 3];
    for a in 3 - d..3 {
        dims[a] = m;
    }
    dims
}

/// Node coordinates moved to the trailing axes to match [`dims3`].
fn node3(rule: &QuadratureRule, i: usize) -> ([f64; 3], f64) {
    let (x, w) = rule.node(i);
    let d = rule.dim();
    let mut out = [0.0; 3];
    out[3 - d..].copy_from_slice(&x[..d]);
    (out, w)
}

/// Runs `compute` for every item, several at a time, and hands results to
/// `accumulate` strictly in item order. The reduction order is fixed, so the
/// result does not depend on the number of worker threads.
fn ordered_reduce<T: Sync, R: Send>(
    items: &[T],
    compute: impl Fn(&T) -> R + Sync,
    mut accumulate: impl FnMut(&T, R),
) {
    let batch = rayon::current_num_threads().max(1);
    for chunk in items.chunks(batch) {
        let results: Vec<R> = if chunk.len() == 1 {
            vec![compute(&chunk[0])]
        } else {
            chunk.par_iter().map(&compute).collect()
        };
        for (item, r) in chunk.iter().zip(results) {
            accumulate(item, r);
        }
    }
}

/// Kernel assembly as published: per node, the circular convolution of
/// `c₁[j] = |j - N·1 + x_i|^{2s}` with `c₂[j] = Y_d(-(π/N)(j - N·1 - x_i))`,
/// accumulated with weights `α_i` and multiplied by `E_k`.
///
/// The published listing writes `+x_i` inside `c₂`; with that sign the
/// result is not the quadrature of the lag-space sum for nodes off the
/// lattice. The sign used here reproduces it exactly.
pub fn build_kernel(params: &ProblemParams, rule: &QuadratureRule) -> Result<ConvolutionKernel> {
    check_rule(params, rule)?;
    let (d, n, s) = (params.d(), params.n(), params.s());
    let m = 2 * n;
    let dims = dims3(d, m);
    let len = params.padded_len();
    let fft = FftNd::new(d, m);
    let nodes: Vec<usize> = (0..rule.len()).collect();
    let mut acc = vec![Complex64::default(); len];

    let conv = |&i: &usize| {
        let (x, _) = node3(rule, i);
        let mut c1 = vec![Complex64::default(); len];
        let mut c2 = vec![Complex64::default(); len];
        let ytab: Vec<Vec<Complex64>> = (0..3)
            .map(|a| {
                (0..dims[a])
                    .map(|j| {
                        if dims[a] == 1 {
                            Complex64::new(1.0, 0.0)
                        } else {
                            y(-PI / n as f64 * (j as f64 - n as f64 - x[a]), n)
                        }
                    })
                    .collect()
            })
            .collect();
        let off = |j: usize, a: usize| {
            if dims[a] == 1 {
                0.0
            } else {
                j as f64 - n as f64 + x[a]
            }
        };
        let mut idx = 0;
        for j0 in 0..dims[0] {
            let w0 = off(j0, 0);
            for j1 in 0..dims[1] {
                let w1 = off(j1, 1);
                let y01 = ytab[0][j0] * ytab[1][j1];
                for j2 in 0..dims[2] {
                    let w2 = off(j2, 2);
                    c1[idx] = Complex64::new(pow_s(w0 * w0 + w1 * w1 + w2 * w2, s), 0.0);
                    c2[idx] = y01 * ytab[2][j2];
                    idx += 1;
                }
            }
        }
        fft.forward(&mut c1);
        fft.forward(&mut c2);
        for (a, b) in c1.iter_mut().zip(&c2) {
            *a *= b;
        }
        fft.inverse(&mut c1);
        c1
    };
    ordered_reduce(&nodes, conv, |&i, c| {
        let (_, w) = rule.node(i);
        for (a, v) in acc.iter_mut().zip(&c) {
            *a += w * v;
        }
    });

    let pre = kernel_prefactor(params);
    let mut idx = 0;
    for k0 in 0..dims[0] {
        for k1 in 0..dims[1] {
            for k2 in 0..dims[2] {
                let sign = if (k0 + k1 + k2) % 2 == 0 { pre } else { -pre };
                acc[idx] *= sign;
                idx += 1;
            }
        }
    }
    ConvolutionKernel::new(*params, rule.kind(), rule.order(), acc)
}

/// Lag values `Φ^N(K)` for `K ∈ I'_{2N}^d`, stored at the standard index
/// `K mod 2N`. Nodes are processed in pairs: two real arrays share one
/// complex transform.
pub fn kernel_lags(params: &ProblemParams, rule: &QuadratureRule) -> Result<Vec<Complex64>> {
    check_rule(params, rule)?;
    let (d, n, s) = (params.d(), params.n(), params.s());
    let m = 2 * n;
    let dims = dims3(d, m);
    let len = params.padded_len();
    let fft = FftNd::new(d, m);
    let pairs: Vec<(usize, Option<usize>)> = (0..rule.len())
        .step_by(2)
        .map(|i| (i, (i + 1 < rule.len()).then_some(i + 1)))
        .collect();
    // Signed coordinate of each standard index, and of its negation.
    let sgn: Vec<f64> = (0..m).map(|k| signed(k, m) as f64).collect();
    let neg: Vec<usize> = (0..m).map(|k| (m - k) % m).collect();

    let squares = |x: &[f64; 3]| -> [Vec<f64>; 3] {
        std::array::from_fn(|q| {
            (0..dims[q])
                .map(|j| {
                    if dims[q] == 1 {
                        0.0
                    } else {
                        let w = sgn[j] + x[q];
                        w * w
                    }
                })
                .collect()
        })
    };
    let transform = |&(a, b): &(usize, Option<usize>)| {
        let sa = squares(&node3(rule, a).0);
        let sb = b.map(|b| squares(&node3(rule, b).0));
        let mut z = vec![Complex64::default(); len];
        let mut idx = 0;
        for j0 in 0..dims[0] {
            for j1 in 0..dims[1] {
                let ra = sa[0][j0] + sa[1][j1];
                let rb = sb.as_ref().map_or(0.0, |t| t[0][j0] + t[1][j1]);
                for j2 in 0..dims[2] {
                    let re = pow_s(ra + sa[2][j2], s);
                    let im = match &sb {
                        Some(t) => pow_s(rb + t[2][j2], s),
                        None => 0.0,
                    };
                    z[idx] = Complex64::new(re, im);
                    idx += 1;
                }
            }
        }
        fft.inverse_unnormalized(&mut z);
        z
    };

    let phase_tables = |x: &[f64; 3]| -> [Vec<Complex64>; 3] {
        std::array::from_fn(|q| {
            (0..dims[q])
                .map(|k| {
                    if dims[q] == 1 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::from_polar(1.0, PI * sgn[k] * x[q] / n as f64)
                    }
                })
                .collect()
        })
    };

    let mut phi = vec![Complex64::default(); len];
    ordered_reduce(&pairs, transform, |&(a, b), f| {
        let (xa, wa) = node3(rule, a);
        let (xb, wb) = b.map_or(([0.0; 3], 0.0), |b| node3(rule, b));
        let ta = phase_tables(&xa);
        let tb = phase_tables(&xb);
        let half_i = Complex64::new(0.0, -0.5);
        let slab = dims[1] * dims[2];
        phi.par_chunks_mut(slab).enumerate().for_each(|(k0, out)| {
            let mut idx = 0;
            for k1 in 0..dims[1] {
                let pa01 = ta[0][k0] * ta[1][k1] * wa;
                let pb01 = tb[0][k0] * tb[1][k1] * wb;
                let row = k0 * slab + k1 * dims[2];
                let nrow = neg_of(k0, &neg, dims[0]) * slab + neg_of(k1, &neg, dims[1]) * dims[2];
                for k2 in 0..dims[2] {
                    let fk = f[row + k2];
                    let fn_ = f[nrow + neg_of(k2, &neg, dims[2])].conj();
                    let ga = 0.5 * (fk + fn_);
                    let gb = half_i * (fk - fn_);
                    out[idx] += pa01 * ta[2][k2] * ga + pb01 * tb[2][k2] * gb;
                    idx += 1;
                }
            }
        });
    });
    let pre = kernel_prefactor(params);
    phi.iter_mut().for_each(|v| *v *= pre);
    Ok(phi)
}

#[inline]
fn neg_of(k: usize, neg: &[usize], dim: usize) -> usize {
    if dim == 1 {
        0
    } else {
        neg[k]
    }
}

/// Same kernel as [`build_kernel`], assembled from [`kernel_lags`]:
/// `Φ̂ = DFT(Ψ)` with `Ψ[m] = Φ^N(signed(m - N))`.
pub fn build_kernel_fast(params: &ProblemParams, rule: &QuadratureRule) -> Result<ConvolutionKernel> {
    let phi = kernel_lags(params, rule)?;
    let d = params.d();
    let m = params.padded_side();
    let n = params.n();
    let dims = dims3(d, m);
    let mut psi = vec![Complex64::default(); phi.len()];
    let roll = |k: usize, a: usize| if dims[a] == 1 { 0 } else { (k + n) % m };
    let mut idx = 0;
    for k0 in 0..dims[0] {
        for k1 in 0..dims[1] {
            for k2 in 0..dims[2] {
                let src = (roll(k0, 0) * dims[1] + roll(k1, 1)) * dims[2] + roll(k2, 2);
                psi[idx] = phi[src];
                idx += 1;
            }
        }
    }
    FftNd::new(d, m).forward(&mut psi);
    ConvolutionKernel::new(*params, rule.kind(), rule.order(), psi)
}

/// Periodic multipliers `ζ_k = |2π·signed(k)|^{2s}` on the `(SN)^d` lattice.
pub fn periodic_symbol(params: &ProblemParams, scale: usize) -> Vec<f64> {
    assert!(scale >= 1, "scale factor must be at least 1");
    let m = scale * params.n();
    let d = params.d();
    let s = params.s();
    let sq: Vec<f64> = (0..m).map(|k| (signed(k, m) as f64).powi(2)).collect();
    let c = (2.0 * PI).powf(2.0 * s);
    let total = m.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    for lin in 0..total {
        let mut rem = lin;
        let mut r2 = 0.0;
        for _ in 0..d {
            r2 += sq[rem % m];
            rem /= m;
        }
        out.push(c * pow_s(r2, s));
    }
    out
}

/// Normalization of the singular integral and amplitude of the ball solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FracConstants {
    pub c_int: f64,
    pub c_ball: f64,
}

impl FracConstants {
    /// `C_int = s 2^{2s} Γ(s+d/2) / (π^{d/2} Γ(1-s))` (zero at `s = 1`),
    /// `C_ball = Γ(d/2) / (2^{2s} Γ(d/2+s) Γ(1+s))`.
    pub fn new(d: usize, s: f64) -> Self {
        let hd = d as f64 / 2.0;
        let c_int = if s >= 1.0 {
            0.0
        } else {
            s * 4f64.powf(s) * libm::tgamma(s + hd) / (PI.powf(hd) * libm::tgamma(1.0 - s))
        };
        let c_ball = libm::tgamma(hd) / (4f64.powf(s) * libm::tgamma(hd + s) * libm::tgamma(1.0 + s));
        Self { c_int, c_ball }
    }
}
