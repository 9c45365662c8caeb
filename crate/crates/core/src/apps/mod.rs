//! Applications built on the operator: fractional Allen-Cahn evolution,
//! fractional-regularized denoising and the periodic-vs-sinc comparison.

mod allen_cahn;
mod comparison;
mod denoise;

pub use allen_cahn::{
    allen_cahn_run, double_well_prime, fit_annihilation, half_open_indicator, kink_position,
    AllenCahnConfig, AllenCahnRun, AcSample,
};
pub use comparison::{mollifier, operator_comparison, operator_comparison_with, ComparisonRow};
pub use denoise::{denoise, DenoiseConfig, DenoiseResult};

/// How the operator is closed outside the unit cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Zero exterior data: sinc operator solved with CG.
    Dirichlet,
    /// Periodic extension: diagonal in the DFT basis.
    Periodic,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Dirichlet => "dirichlet",
            Backend::Periodic => "periodic",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "dirichlet" => Ok(Backend::Dirichlet),
            "periodic" => Ok(Backend::Periodic),
            _ => Err(crate::Error::Config(format!(
                "unknown backend '{s}', expected dirichlet or periodic"
            ))),
        }
    }
}

/// Applies the periodic operator `u ↦ IDFT(m · DFT u)` for a real multiplier.
pub(crate) struct PeriodicMultiplier {
    fft: crate::transform::FftNd,
    buf: Vec<num_complex::Complex64>,
}

impl PeriodicMultiplier {
    pub(crate) fn new(params: &crate::ProblemParams) -> Self {
        Self {
            fft: crate::transform::FftNd::new(params.d(), params.n()),
            buf: vec![Default::default(); params.len()],
        }
    }

    /// `out = IDFT(f(k) · DFT(u))` with `f` indexed by the linear spectral index.
    pub(crate) fn apply(&mut self, u: &[f64], out: &mut [f64], f: impl Fn(usize) -> f64) {
        for (b, &v) in self.buf.iter_mut().zip(u) {
            *b = num_complex::Complex64::new(v, 0.0);
        }
        self.fft.forward(&mut self.buf);
        for (k, b) in self.buf.iter_mut().enumerate() {
            *b *= f(k);
        }
        self.fft.inverse(&mut self.buf);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re;
        }
    }
}
