//! Matrix-free application of the sinc-fractional Laplacian.
//!
//! `apply` computes `(Φ^N ∗ ū)(κ)` for `κ ∈ I_N^d`, the non-circular
//! convolution of the zero-extended input with the kernel lags: embed `u` at
//! offset `N·1` of a `(2N)^d` buffer, transform, multiply by `Φ̂`, transform
//! back and read the block `I_N^d`.
//!
//! The production path exploits that `u` is real and that only a corner of
//! the padded buffer is populated or read:
//! * the last axis uses real-to-complex transforms, and `Φ̂` is replaced by
//!   its Hermitian part, which yields exactly the real part of the full
//!   complex result;
//! * forward passes skip lines that are identically zero, inverse passes
//!   skip lines whose values are never read.
//!
//! [`OperatorHandle::apply_reference`] runs the unpruned complex pipeline
//! and is kept as an oracle.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{signed, DomainMask, GridFunction, ProblemParams};
use crate::kernel::{periodic_symbol, ConvolutionKernel};
use crate::transform::{block_offset, complex_pass, embed_into, FftNd};

const PAR_ROWS: usize = 64;

/// Plans and the Hermitian half of `Φ̂ / (2N)^d`, shared between handles.
struct Convolver {
    params: ProblemParams,
    dims: Vec<usize>,
    half: Vec<Complex64>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Convolver {
    fn new(kernel: &ConvolutionKernel) -> Self {
        let p = *kernel.params();
        let (d, n) = (p.d(), p.n());
        let m = 2 * n;
        let mut dims = vec![m; d];
        dims[d - 1] = n + 1;
        let phi = kernel.phi_hat();
        let norm = 1.0 / p.padded_len() as f64;
        let half_len: usize = dims.iter().product();
        let mut half = Vec::with_capacity(half_len);
        for h in 0..half_len {
            // full-lattice index of the half-spectrum entry and of its negation
            let mut rem = h;
            let mut full = 0;
            let mut full_neg = 0;
            let mut mul = 1;
            for a in (0..d).rev() {
                let k = rem % dims[a];
                rem /= dims[a];
                full += k * mul;
                full_neg += ((m - k) % m) * mul;
                mul *= m;
            }
            half.push(0.5 * norm * (phi[full] + phi[full_neg].conj()));
        }
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Self {
            params: p,
            dims,
            half,
            r2c: rp.plan_fft_forward(m),
            c2r: rp.plan_fft_inverse(m),
            fwd: cp.plan_fft_forward(m),
            inv: cp.plan_fft_inverse(m),
        }
    }

    /// Row index (over axes `0..d-1`) split into coordinates, all inside
    /// `window` when the result is `Some`.
    fn row_in(&self, row: usize, window: &Range<usize>) -> Option<usize> {
        let d = self.params.d();
        let n = self.params.n();
        let m = 2 * n;
        let mut rem = row;
        let mut inner = 0;
        let mut mul = 1;
        for _ in 0..d - 1 {
            let c = rem % m;
            rem /= m;
            if !window.contains(&c) {
                return None;
            }
            inner += (c - window.start) * mul;
            mul *= n;
        }
        Some(inner)
    }

    fn apply(&self, u: &[f64], out: &mut [f64], work: &mut [Complex64]) {
        let p = &self.params;
        let (d, n) = (p.d(), p.n());
        let m = 2 * n;
        let hw = n + 1;
        let dims = &self.dims;
        debug_assert_eq!(work.len(), self.half.len());

        // Real transforms of the populated rows; every other row is zero.
        let r2c = &self.r2c;
        let forward_row = |(row, dst): (usize, &mut [Complex64]), buf: &mut (Vec<f64>, Vec<Complex64>)| {
            match self.row_in(row, &(n..m)) {
                Some(src) => {
                    let (line, scratch) = buf;
                    line[..n].iter_mut().for_each(|v| *v = 0.0);
                    line[n..].copy_from_slice(&u[src * n..(src + 1) * n]);
                    r2c.process_with_scratch(line, dst, scratch).expect("r2c length");
                }
                None => dst.iter_mut().for_each(|v| *v = Complex64::default()),
            }
        };
        let init_f = || {
            (
                vec![0.0; m],
                vec![Complex64::default(); self.r2c.get_scratch_len()],
            )
        };
        let rows = work.len() / hw;
        if rows < PAR_ROWS {
            let mut buf = init_f();
            work.chunks_mut(hw)
                .enumerate()
                .for_each(|r| forward_row(r, &mut buf));
        } else {
            work.par_chunks_mut(hw)
                .enumerate()
                .for_each_init(init_f, |buf, r| forward_row(r, buf));
        }

        let mut ranges: Vec<Range<usize>> = vec![0..m; d];
        ranges[d - 1] = 0..hw;
        for axis in (0..d - 1).rev() {
            for (b, r) in ranges.iter_mut().enumerate().take(d - 1) {
                *r = if b < axis { n..m } else { 0..m };
            }
            complex_pass(work, dims, axis, &ranges, &self.fwd);
        }

        if work.len() < 1 << 15 {
            work.iter_mut().zip(&self.half).for_each(|(w, h)| *w *= h);
        } else {
            work.par_chunks_mut(4096)
                .zip(self.half.par_chunks(4096))
                .for_each(|(w, h)| w.iter_mut().zip(h).for_each(|(a, b)| *a *= b));
        }

        for axis in 0..d - 1 {
            for (b, r) in ranges.iter_mut().enumerate().take(d - 1) {
                *r = if b < axis { 0..n } else { 0..m };
            }
            complex_pass(work, dims, axis, &ranges, &self.inv);
        }

        // Inverse real transforms of the rows that hold the output block.
        let c2r = &self.c2r;
        let out_rows: Vec<(usize, usize)> = (0..rows)
            .filter_map(|row| self.row_in(row, &(0..n)).map(|dst| (row, dst)))
            .collect();
        let ptr = OutPtr(out.as_mut_ptr());
        let wptr = WorkPtr(work.as_mut_ptr());
        let inverse_row = |&(row, dst): &(usize, usize), buf: &mut (Vec<f64>, Vec<Complex64>)| {
            // SAFETY: rows and output blocks are disjoint across jobs.
            let spec = unsafe { std::slice::from_raw_parts_mut(wptr.get().add(row * hw), hw) };
            let target = unsafe { std::slice::from_raw_parts_mut(ptr.get().add(dst * n), n) };
            spec[0].im = 0.0;
            spec[hw - 1].im = 0.0;
            let (line, scratch) = buf;
            c2r.process_with_scratch(spec, line, scratch).expect("c2r length");
            target.copy_from_slice(&line[..n]);
        };
        let init_i = || {
            (
                vec![0.0; m],
                vec![Complex64::default(); self.c2r.get_scratch_len()],
            )
        };
        if out_rows.len() < PAR_ROWS {
            let mut buf = init_i();
            out_rows.iter().for_each(|r| inverse_row(r, &mut buf));
        } else {
            out_rows
                .par_iter()
                .for_each_init(init_i, |buf, r| inverse_row(r, buf));
        }
    }
}

#[derive(Clone, Copy)]
struct OutPtr(*mut f64);
unsafe impl Send for OutPtr {}
unsafe impl Sync for OutPtr {}

impl OutPtr {
    fn get(self) -> *mut f64 {
        self.0
    }
}
#[derive(Clone, Copy)]
struct WorkPtr(*mut Complex64);
unsafe impl Send for WorkPtr {}
unsafe impl Sync for WorkPtr {}

impl WorkPtr {
    fn get(self) -> *mut Complex64 {
        self.0
    }
}

/// Kernel plus preallocated scratch space.
///
/// Not for concurrent use; clones share the kernel and plans and get their
/// own scratch buffers.
#[derive(Clone)]
pub struct OperatorHandle {
    kernel: Arc<ConvolutionKernel>,
    conv: Arc<Convolver>,
    work: Vec<Complex64>,
    masked: Vec<f64>,
}

impl std::fmt::Debug for OperatorHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorHandle")
            .field("params", self.kernel.params())
            .field("quadrature", &self.kernel.quadrature_id())
            .finish()
    }
}

impl OperatorHandle {
    pub fn new(kernel: Arc<ConvolutionKernel>) -> Self {
        let conv = Arc::new(Convolver::new(&kernel));
        let work = vec![Complex64::default(); conv.half.len()];
        let masked = vec![0.0; kernel.params().len()];
        Self {
            kernel,
            conv,
            work,
            masked,
        }
    }

    pub fn params(&self) -> &ProblemParams {
        self.kernel.params()
    }

    pub fn kernel(&self) -> &Arc<ConvolutionKernel> {
        &self.kernel
    }

    /// `out = Φ^N u` on raw lattice vectors of length `N^d`.
    pub fn apply(&mut self, u: &[f64], out: &mut [f64]) {
        let len = self.params().len();
        assert_eq!(u.len(), len, "input length");
        assert_eq!(out.len(), len, "output length");
        self.conv.apply(u, out, &mut self.work);
    }

    /// `out = S_Ω Φ^N S_Ω^T u`.
    pub fn apply_masked(&mut self, mask: &DomainMask, u: &[f64], out: &mut [f64]) {
        let sel = mask.selected();
        assert_eq!(sel.len(), u.len(), "mask length");
        let mut tmp = std::mem::take(&mut self.masked);
        for ((t, &v), &keep) in tmp.iter_mut().zip(u).zip(sel) {
            *t = if keep { v } else { 0.0 };
        }
        self.apply(&tmp, out);
        self.masked = tmp;
        mask.restrict(out);
    }

    pub fn apply_sinc(&mut self, u: &GridFunction) -> Result<GridFunction> {
        self.check(u.params())?;
        let mut out = vec![0.0; u.values().len()];
        self.apply(u.values(), &mut out);
        Ok(GridFunction::new(*self.params(), out)?)
    }

    pub fn apply_masked_grid(&mut self, mask: &DomainMask, u: &GridFunction) -> Result<GridFunction> {
        self.check(u.params())?;
        self.check(mask.params())?;
        let mut out = vec![0.0; u.values().len()];
        self.apply_masked(mask, u.values(), &mut out);
        Ok(GridFunction::new(*self.params(), out)?)
    }

    fn check(&self, p: &ProblemParams) -> Result<()> {
        let q = self.params();
        if p.d() != q.d() || p.n() != q.n() {
            return Err(Error::Shape(format!(
                "grid is d={} N={}, operator is d={} N={}",
                p.d(),
                p.n(),
                q.d(),
                q.n()
            )));
        }
        Ok(())
    }

    /// Unpruned complex pipeline: embed, full forward DFT, multiply by `Φ̂`,
    /// full inverse DFT, crop. Returns real parts and the largest imaginary
    /// magnitude in the cropped block.
    pub fn apply_reference(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let p = *self.params();
        let (d, n, m) = (p.d(), p.n(), p.padded_side());
        let fft = FftNd::new(d, m);
        let mut buf = vec![Complex64::default(); p.padded_len()];
        embed_into(&p, u, &mut buf);
        fft.forward(&mut buf);
        buf.iter_mut()
            .zip(self.kernel.phi_hat())
            .for_each(|(b, k)| *b *= k);
        fft.inverse(&mut buf);
        let mut imag: f64 = 0.0;
        let out = (0..p.len())
            .map(|i| {
                let v = buf[block_offset(d, n, m, i, 0)];
                imag = imag.max(v.im.abs());
                v.re
            })
            .collect();
        (out, imag)
    }

    /// Lattice lags of the kernel, `Φ^N(K)` for `K ∈ I'_{2N}^d`.
    pub fn kernel_values(&self) -> KernelValues {
        kernel_values(&self.kernel)
    }
}

/// Real kernel lags indexed by `K mod 2N`, with the largest imaginary
/// residue of the inverse transform.
#[derive(Clone, Debug)]
pub struct KernelValues {
    dim: usize,
    side: usize,
    values: Vec<f64>,
    pub max_imag: f64,
}

impl KernelValues {
    /// Value at lag `K`, each component in `[-N, N)`.
    pub fn at(&self, lag: &[i64]) -> f64 {
        assert_eq!(lag.len(), self.dim);
        let m = self.side as i64;
        let idx = lag
            .iter()
            .fold(0usize, |acc, &k| acc * self.side + k.rem_euclid(m) as usize);
        self.values[idx]
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn kernel_values(kernel: &ConvolutionKernel) -> KernelValues {
    let p = kernel.params();
    let (d, n, m) = (p.d(), p.n(), p.padded_side());
    let mut buf = kernel.phi_hat().to_vec();
    FftNd::new(d, m).inverse(&mut buf);
    // Stored entry m holds the lag signed(m - N); move it to index K mod 2N.
    let mut values = vec![0.0; buf.len()];
    let mut max_imag: f64 = 0.0;
    for (src, v) in buf.iter().enumerate() {
        let mut rem = src;
        let mut dst = 0;
        let mut mul = 1;
        for _ in 0..d {
            let c = rem % m;
            rem /= m;
            let lag = signed((c + m - n) % m, m);
            dst += (lag.rem_euclid(m as i64) as usize) * mul;
            mul *= m;
        }
        values[dst] = v.re;
        max_imag = max_imag.max(v.im.abs());
    }
    KernelValues {
        dim: d,
        side: m,
        values,
        max_imag,
    }
}

/// Largest scale factor accepted by [`apply_scaled_periodic`] per dimension.
pub fn max_periodic_scale(d: usize) -> usize {
    match d {
        1 => 1024,
        2 => 64,
        _ => 16,
    }
}

/// Periodic fractional Laplacian on the dilated cube `[0,S)^d` at spacing
/// `1/N`, restricted to the first `N^d` block. The `S^{-2s}` factor is left
/// to the caller.
pub fn apply_scaled_periodic(params: &ProblemParams, scale_factor: usize, u: &GridFunction) -> Result<GridFunction> {
    if u.params().d() != params.d() || u.params().n() != params.n() {
        return Err(Error::Shape("grid does not match parameters".into()));
    }
    let d = params.d();
    if scale_factor == 0 || scale_factor > max_periodic_scale(d) {
        return Err(Error::Config(format!(
            "scale factor must be in 1..={} for d={d}, got {scale_factor}",
            max_periodic_scale(d)
        )));
    }
    let n = params.n();
    let m = scale_factor * n;
    let fft = FftNd::new(d, m);
    let mut buf = vec![Complex64::default(); m.pow(d as u32)];
    for (i, &v) in u.values().iter().enumerate() {
        buf[block_offset(d, n, m, i, 0)] = Complex64::new(v, 0.0);
    }
    fft.forward(&mut buf);
    let zeta = periodic_symbol(params, scale_factor);
    buf.iter_mut().zip(&zeta).for_each(|(b, z)| *b *= *z);
    fft.inverse_unnormalized(&mut buf);
    let norm = 1.0 / buf.len() as f64;
    let vals = (0..params.len())
        .map(|i| buf[block_offset(d, n, m, i, 0)].re * norm)
        .collect();
    GridFunction::new(*params, vals)
}
