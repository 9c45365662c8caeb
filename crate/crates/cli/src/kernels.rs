//! Kernel flags shared by several subcommands, and the on-disk kernel cache.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use fraclap::io::{load_kernel, save_kernel};
use fraclap::{build_kernel_fast, ConvolutionKernel, Error, ProblemParams, QuadratureRule, Result};

use crate::manifest::RunManifest;

#[derive(Args, Debug, Clone)]
pub struct KernelArgs {
    /// Precomputed kernel file; replaces --dim/--n/--s/--quad.
    #[arg(long, conflicts_with_all = ["dim", "n", "s", "quad"])]
    pub kernel: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Grid points per axis (even, at least 4).
    #[arg(long)]
    pub n: Option<usize>,
    /// Fractional order in (0, 1].
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// gl<n> or uniform:<n>; defaults to gl7 (gl5 in 3d).
    #[arg(long)]
    pub quad: Option<String>,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct CacheArgs {
    /// Neither read nor write the kernel cache.
    #[arg(long)]
    pub no_cache: bool,
}

impl KernelArgs {
    /// Problem parameters and rule from the inline flags.
    pub fn inline(&self) -> Result<(ProblemParams, QuadratureRule)> {
        let (Some(d), Some(n), Some(s)) = (self.dim, self.n, self.s) else {
            return Err(Error::Config("either --kernel or all of --dim, --n and --s are required".into()));
        };
        let params = ProblemParams::new(d, n, s)?;
        Ok((params, rule_for(self.quad.as_deref(), d)?))
    }

    pub fn record(&self, m: &mut RunManifest) {
        if let Some(p) = &self.kernel {
            m.param("kernel", p.display().to_string());
        }
    }

    pub fn resolve(&self, cache: CacheArgs, m: &mut RunManifest) -> Result<Arc<ConvolutionKernel>> {
        let k = match &self.kernel {
            Some(path) => {
                let k = m.time("kernel_load", || load_kernel(path))?;
                m.kernel_cache = Some(path.clone());
                Arc::new(k)
            }
            None => {
                let (params, rule) = self.inline()?;
                obtain(&params, &rule, cache, m)?
            }
        };
        let p = k.params();
        m.param("dim", p.d());
        m.param("n", p.n());
        m.param("s", p.s());
        m.param("quad", k.quadrature_id());
        Ok(k)
    }
}

pub fn rule_for(quad: Option<&str>, d: usize) -> Result<QuadratureRule> {
    match quad {
        Some(q) => QuadratureRule::parse(q, d),
        None => Ok(QuadratureRule::default_for(d)),
    }
}

pub fn cache_dir() -> PathBuf {
    let env = |k: &str| std::env::var_os(k).filter(|v| !v.is_empty()).map(PathBuf::from);
    if let Some(p) = env("FRACLAP_CACHE_DIR") {
        return p;
    }
    if let Some(p) = env("XDG_CACHE_HOME") {
        return p.join("fraclap");
    }
    if let Some(p) = env("HOME") {
        return p.join(".cache").join("fraclap");
    }
    std::env::temp_dir().join("fraclap-cache")
}

pub fn cache_name(params: &ProblemParams, rule: &QuadratureRule) -> String {
    format!(
        "kernel-d{}-n{}-s{}-{}.bin",
        params.d(),
        params.n(),
        params.s(),
        rule.id().replace(':', "")
    )
}

fn matches(k: &ConvolutionKernel, params: &ProblemParams, rule: &QuadratureRule) -> bool {
    let p = k.params();
    p.d() == params.d()
        && p.n() == params.n()
        && p.s().to_bits() == params.s().to_bits()
        && k.quad_kind() == rule.kind()
        && k.quad_order() == rule.order()
}

/// Loads the kernel from the cache when a matching file exists, otherwise
/// builds it and stores it there. Cache write failures only warn.
pub fn obtain(
    params: &ProblemParams,
    rule: &QuadratureRule,
    cache: CacheArgs,
    m: &mut RunManifest,
) -> Result<Arc<ConvolutionKernel>> {
    if cache.no_cache {
        return Ok(Arc::new(m.time("kernel_build", || build_kernel_fast(params, rule))?));
    }
    let path = cache_dir().join(cache_name(params, rule));
    if path.is_file() {
        match m.time("kernel_load", || load_kernel(&path)) {
            Ok(k) if matches(&k, params, rule) => {
                m.kernel_cache = Some(path);
                return Ok(Arc::new(k));
            }
            Ok(_) => eprintln!("warning: cached kernel {} has other parameters, rebuilding", path.display()),
            Err(e) => eprintln!("warning: ignoring cached kernel {}: {e}", path.display()),
        }
    }
    let k = m.time("kernel_build", || build_kernel_fast(params, rule))?;
    match store(&k, &path) {
        Ok(()) => m.kernel_cache = Some(path),
        Err(e) => eprintln!("warning: could not write kernel cache {}: {e}", path.display()),
    }
    Ok(Arc::new(k))
}

/// Writes through a temporary file so concurrent runs never see a partial kernel.
fn store(k: &ConvolutionKernel, path: &Path) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{}.{}.tmp", std::process::id(), path.file_name().unwrap_or_default().to_string_lossy()));
    save_kernel(k, &tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
