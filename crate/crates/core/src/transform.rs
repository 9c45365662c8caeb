//! DFT conventions and zero-padding utilities.
//!
//! Forward: `x̂_k = Σ_j x_j e^{-2πi j·k/M}` (unnormalized).
//! Inverse: `x_k = M^{-d} Σ_j x̂_j e^{+2πi j·k/M}`.
//!
//! Multi-dimensional transforms run 1d FFTs along each axis. The line-pass
//! engine accepts an index window per axis so callers can skip lines that
//! are known to be zero or whose output is never read.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, ProblemParams};

/// Lines gathered per strided job.
const GROUP: usize = 16;
/// Below this many complex elements a pass runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Clone, Copy)]
struct SyncPtr(*mut Complex64);
unsafe impl Send for SyncPtr {}
unsafe impl Sync for SyncPtr {}

impl SyncPtr {
    // a method call makes closures capture the wrapper, not the raw field
    fn get(self) -> *mut Complex64 {
        self.0
    }
}

/// Row-major strides of `dims`.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut st = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        st[a] = st[a + 1] * dims[a + 1];
    }
    st
}

/// Offsets of all index tuples over `axes`, each restricted to its window.
fn window_offsets(axes: &[usize], ranges: &[Range<usize>], st: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &a in axes {
        let mut next = Vec::with_capacity(out.len() * ranges[a].len());
        for &o in &out {
            for i in ranges[a].clone() {
                next.push(o + i * st[a]);
            }
        }
        out = next;
    }
    out
}

/// Runs `fft` along `axis` of the array `data` with shape `dims`, for every
/// line whose other coordinates lie inside `ranges`. The window of `axis`
/// itself is ignored; full lines are always transformed.
pub(crate) fn complex_pass(
    data: &mut [Complex64],
    dims: &[usize],
    axis: usize,
    ranges: &[Range<usize>],
    fft: &Arc<dyn Fft<f64>>,
) {
    let d = dims.len();
    let m = dims[axis];
    debug_assert_eq!(fft.len(), m);
    debug_assert_eq!(data.len(), dims.iter().product::<usize>());
    let st = strides(dims);
    let ptr = SyncPtr(data.as_mut_ptr());
    let scratch_len = fft.get_inplace_scratch_len();

    if axis == d - 1 {
        let others: Vec<usize> = (0..d - 1).collect();
        let bases = window_offsets(&others, ranges, &st);
        let run = |base: usize, scratch: &mut Vec<Complex64>| {
            // SAFETY: distinct bases address disjoint contiguous lines.
            let line = unsafe { std::slice::from_raw_parts_mut(ptr.get().add(base), m) };
            fft.process_with_scratch(line, scratch);
        };
        if bases.len() * m < PAR_THRESHOLD {
            let mut scratch = vec![Complex64::default(); scratch_len];
            bases.iter().for_each(|&b| run(b, &mut scratch));
        } else {
            bases.par_iter().for_each_init(
                || vec![Complex64::default(); scratch_len],
                |scratch, &b| run(b, scratch),
            );
        }
        return;
    }

    // Strided axis: gather up to GROUP neighbouring lines along the last
    // axis into a contiguous block, transform, scatter back.
    let stride = st[axis];
    let middle: Vec<usize> = (0..d - 1).filter(|&a| a != axis).collect();
    let last = ranges[d - 1].clone();
    let mut jobs = Vec::new();
    for base in window_offsets(&middle, ranges, &st) {
        let mut q = last.start;
        while q < last.end {
            let g = GROUP.min(last.end - q);
            jobs.push((base + q, g));
            q += g;
        }
    }
    let run = |(base, g): (usize, usize), buf: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>| {
        let block = &mut buf[..g * m];
        for t in 0..m {
            for q in 0..g {
                // SAFETY: jobs cover disjoint (line, offset) pairs.
                block[q * m + t] = unsafe { *ptr.get().add(base + t * stride + q) };
            }
        }
        fft.process_with_scratch(block, scratch);
        for t in 0..m {
            for q in 0..g {
                unsafe { *ptr.get().add(base + t * stride + q) = block[q * m + t] };
            }
        }
    };
    let init = || {
        (
            vec![Complex64::default(); GROUP * m],
            vec![Complex64::default(); scratch_len],
        )
    };
    if jobs.len() * GROUP * m < PAR_THRESHOLD {
        let (mut buf, mut scratch) = init();
        jobs.iter().for_each(|&j| run(j, &mut buf, &mut scratch));
    } else {
        jobs.par_iter()
            .for_each_init(init, |(buf, scratch), &j| run(j, buf, scratch));
    }
}

pub(crate) fn scale(data: &mut [Complex64], f: f64) {
    if data.len() < PAR_THRESHOLD {
        data.iter_mut().for_each(|v| *v *= f);
    } else {
        data.par_chunks_mut(4096)
            .for_each(|c| c.iter_mut().for_each(|v| *v *= f));
    }
}

/// Planned `d`-dimensional complex FFT on a cube of side `M`.
///
/// Plans are immutable; one `FftNd` may transform many buffers concurrently.
#[derive(Clone)]
pub struct FftNd {
    dim: usize,
    side: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd")
            .field("dim", &self.dim)
            .field("side", &self.side)
            .finish()
    }
}

impl FftNd {
    pub fn new(dim: usize, side: usize) -> Self {
        assert!(dim >= 1 && side >= 1);
        let mut planner = FftPlanner::new();
        Self {
            dim,
            side,
            fwd: planner.plan_fft_forward(side),
            inv: planner.plan_fft_inverse(side),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer length does not match plan");
        let dims = vec![self.side; self.dim];
        let ranges = vec![0..self.side; self.dim];
        for axis in (0..self.dim).rev() {
            complex_pass(data, &dims, axis, &ranges, fft);
        }
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform in place, including the `M^{-d}` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_unnormalized(data);
        scale(data, 1.0 / self.len() as f64);
    }

    /// `Σ_j x_j e^{+2πi j·k/M}` without normalization.
    pub fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
    }
}

/// Complex values on a cube of side `M` in `d` dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBuffer {
    side: usize,
    dim: usize,
    values: Vec<Complex64>,
}

impl SpectralBuffer {
    pub fn zeros(side: usize, dim: usize) -> Self {
        Self {
            side,
            dim,
            values: vec![Complex64::default(); side.pow(dim as u32)],
        }
    }

    pub fn new(side: usize, dim: usize, values: Vec<Complex64>) -> Result<Self> {
        let want = side.pow(dim as u32);
        if values.len() != want {
            return Err(Error::Shape(format!(
                "spectral buffer needs {want} values, got {}",
                values.len()
            )));
        }
        Ok(Self { side, dim, values })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
}

pub fn dft_forward(b: &SpectralBuffer) -> SpectralBuffer {
    let mut out = b.clone();
    FftNd::new(b.dim, b.side).forward(&mut out.values);
    out
}

pub fn dft_inverse(b: &SpectralBuffer) -> SpectralBuffer {
    let mut out = b.clone();
    FftNd::new(b.dim, b.side).inverse(&mut out.values);
    out
}

/// Places `u_k` at `k + N·1` of a zeroed `(2N)^d` buffer.
pub fn embed_padded(u: &GridFunction) -> SpectralBuffer {
    let p = u.params();
    let mut b = SpectralBuffer::zeros(p.padded_side(), p.d());
    embed_into(p, u.values(), &mut b.values);
    b
}

pub(crate) fn embed_into(p: &ProblemParams, u: &[f64], buf: &mut [Complex64]) {
    let (n, m) = (p.n(), p.padded_side());
    buf.iter_mut().for_each(|v| *v = Complex64::default());
    for (i, &v) in u.iter().enumerate() {
        buf[block_offset(p.d(), n, m, i, n)] = Complex64::new(v, 0.0);
    }
}

/// Linear index in the side-`m` cube of the point `k + shift·1`, where `k` is
/// the `i`-th point of the side-`n` cube.
#[inline]
pub(crate) fn block_offset(d: usize, n: usize, m: usize, i: usize, shift: usize) -> usize {
    let mut rem = i;
    let mut off = 0;
    let mut mul = 1;
    for _ in 0..d {
        off += (rem % n + shift) * mul;
        rem /= n;
        mul *= m;
    }
    off
}

/// Reads the block `I_N^d` of a `(2N)^d` buffer and keeps real parts.
pub fn crop(b: &SpectralBuffer, params: &ProblemParams) -> Result<GridFunction> {
    if b.side != params.padded_side() || b.dim != params.d() {
        return Err(Error::Shape(format!(
            "cannot crop side {} d={} buffer to N={} d={}",
            b.side,
            b.dim,
            params.n(),
            params.d()
        )));
    }
    let (n, m) = (params.n(), params.padded_side());
    let vals = (0..params.len())
        .map(|i| b.values[block_offset(params.d(), n, m, i, 0)].re)
        .collect();
    GridFunction::new(*params, vals)
}
