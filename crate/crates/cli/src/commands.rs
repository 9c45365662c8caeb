use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use fraclap::apps::{
    allen_cahn_run, denoise, fit_annihilation, half_open_indicator, AllenCahnConfig, Backend, DenoiseConfig,
};
use fraclap::io::{read_grid, read_pgm, save_kernel, write_grid, write_pgm};
use fraclap::solver::{convergence_study, fmt17, study_csv, StudyGeometry};
use fraclap::{
    build_kernel_fast, make_mask, solve_dirichlet_with, CgConfig, Error, GridFunction, MaskShape, OperatorHandle,
    ProblemParams, Result, StopRule,
};

use crate::kernels::{cache_dir, cache_name, obtain, rule_for, CacheArgs, KernelArgs};
use crate::manifest::RunManifest;

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum StopArg {
    Euclidean,
    ScaledSquared,
}

impl From<StopArg> for StopRule {
    fn from(s: StopArg) -> Self {
        match s {
            StopArg::Euclidean => StopRule::Euclidean,
            StopArg::ScaledSquared => StopRule::ScaledSquared,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum BackendArg {
    Dirichlet,
    Periodic,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Dirichlet => Backend::Dirichlet,
            BackendArg::Periodic => Backend::Periodic,
        }
    }
}

#[derive(Args, Debug, Clone, Copy)]
pub struct CgArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    /// Residual functional compared against --tol.
    #[arg(long, value_enum, default_value = "euclidean")]
    pub stop: StopArg,
}

impl CgArgs {
    fn config(&self) -> CgConfig {
        CgConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            record_history: false,
            stop: self.stop.into(),
        }
    }

    fn record(&self, m: &mut RunManifest) {
        m.param("tol", self.tol);
        m.param("max_iter", self.max_iter);
        m.param("stop", StopRule::from(self.stop).name());
    }
}

/// `cube`, `disc:<r>` (centred), `lshape` or `mask:<file>`.
pub fn parse_domain(spec: &str, d: usize) -> Result<MaskShape> {
    if spec == "cube" {
        return Ok(MaskShape::Cube);
    }
    if spec == "lshape" {
        return Ok(MaskShape::LShape);
    }
    if let Some(r) = spec.strip_prefix("disc:") {
        let radius = r
            .parse()
            .map_err(|_| Error::Config(format!("disc radius '{r}' is not a number")))?;
        return Ok(MaskShape::Disc {
            center: vec![0.5; d],
            radius,
        });
    }
    if let Some(f) = spec.strip_prefix("mask:") {
        return Ok(MaskShape::Raster(PathBuf::from(f)));
    }
    Err(Error::Config(format!(
        "unknown domain '{spec}', expected cube, disc:<r>, lshape or mask:<file>"
    )))
}

fn read_grid_as(path: &Path, params: &ProblemParams, what: &str) -> Result<GridFunction> {
    let (d, n, vals) = read_grid(path)?;
    if d != params.d() || n != params.n() {
        return Err(Error::Shape(format!(
            "{what} {} is d={d} N={n}, expected d={} N={}",
            path.display(),
            params.d(),
            params.n()
        )));
    }
    GridFunction::new(*params, vals)
}

fn write_text(path: Option<&Path>, text: &str, m: &mut RunManifest) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, text)?;
            m.add_output(p);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn not_converged(iterations: usize, residual: f64) -> Error {
    Error::Numerical(format!(
        "CG did not converge after {iterations} iterations (residual {residual:e})"
    ))
}

#[derive(Args, Debug)]
pub struct KernelCmd {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, allow_negative_numbers = true)]
    s: f64,
    /// gl7, gl5, gl3 or uniform:<K>; defaults to gl7 (gl5 in 3d).
    #[arg(long)]
    quad: Option<String>,
    /// Output file; defaults to the kernel cache directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl KernelCmd {
    pub fn run(self) -> Result<()> {
        let params = ProblemParams::new(self.dim, self.n, self.s)?;
        let rule = rule_for(self.quad.as_deref(), self.dim)?;
        let out = match self.out {
            Some(p) => p,
            None => {
                let dir = cache_dir();
                std::fs::create_dir_all(&dir)?;
                dir.join(cache_name(&params, &rule))
            }
        };
        let mut m = RunManifest::new("kernel");
        m.param("dim", params.d());
        m.param("n", params.n());
        m.param("s", params.s());
        m.param("quad", rule.id());
        let k = m.time("kernel_build", || build_kernel_fast(&params, &rule))?;
        m.time("write", || save_kernel(&k, &out))?;
        m.kernel_cache = Some(out.clone());
        m.add_output(&out);
        m.write_sidecars()?;
        println!(
            "kernel d={} N={} s={} quad={} build={:.3}s checksum={:016x} -> {}",
            params.d(),
            params.n(),
            params.s(),
            k.quadrature_id(),
            m.timings["kernel_build"],
            k.checksum(),
            out.display()
        );
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct ApplyCmd {
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    cache: CacheArgs,
    /// Input grid file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Restrict input and output to a domain (see `solve --domain`).
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

impl ApplyCmd {
    pub fn run(self) -> Result<()> {
        let mut m = RunManifest::new("apply");
        self.kernel.record(&mut m);
        m.param("in", self.input.display().to_string());
        let k = self.kernel.resolve(self.cache, &mut m)?;
        let params = *k.params();
        let u = read_grid_as(&self.input, &params, "input grid")?;
        let mut op = OperatorHandle::new(k);
        let out = match &self.domain {
            Some(spec) => {
                m.param("domain", spec.as_str());
                let mask = make_mask(&params, &parse_domain(spec, params.d())?)?;
                m.time("apply", || op.apply_masked_grid(&mask, &u))?
            }
            None => m.time("apply", || op.apply_sinc(&u))?,
        };
        write_grid(&self.out, &out)?;
        m.add_output(&self.out);
        m.write_sidecars()?;
        println!("apply {:.6}s -> {}", m.timings["apply"], self.out.display());
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct SolveCmd {
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    cache: CacheArgs,
    /// cube, disc:<r>, lshape or mask:<file>.
    #[arg(long, default_value = "cube")]
    domain: String,
    /// const:<v> or a grid file.
    #[arg(long, default_value = "const:1")]
    rhs: String,
    #[command(flatten)]
    cg: CgArgs,
    #[arg(long)]
    out_grid: Option<PathBuf>,
    /// CSV report with iterations, residuals and timings.
    #[arg(long)]
    out_report: Option<PathBuf>,
}

impl SolveCmd {
    pub fn run(self) -> Result<()> {
        let mut m = RunManifest::new("solve");
        self.kernel.record(&mut m);
        m.param("domain", self.domain.as_str());
        m.param("rhs", self.rhs.as_str());
        self.cg.record(&mut m);
        let cfg = self.cg.config();
        cfg.validate()?;
        let k = self.kernel.resolve(self.cache, &mut m)?;
        let params = *k.params();
        let mask = make_mask(&params, &parse_domain(&self.domain, params.d())?)?;
        let f = match self.rhs.strip_prefix("const:") {
            Some(v) => {
                let v: f64 = v
                    .parse()
                    .map_err(|_| Error::Config(format!("right-hand side '{}' is not a number", v)))?;
                GridFunction::constant(params, v)
            }
            None => read_grid_as(Path::new(&self.rhs), &params, "right-hand side")?,
        };
        let mut op = OperatorHandle::new(k);
        let rep = m.time("solve", || solve_dirichlet_with(&mut op, &mask, &f, &cfg))?;

        if let Some(p) = &self.out_grid {
            write_grid(p, &rep.solution)?;
            m.add_output(p);
        }
        if let Some(p) = &self.out_report {
            let mut csv = String::new();
            let _ = writeln!(csv, "{}", m.timing_line());
            let _ = writeln!(
                csv,
                "d,n,s,quadrature,domain,points,iterations,converged,stop,tol,residual,residual_euclidean,residual_scaled_squared"
            );
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                params.d(),
                params.n(),
                fmt17(params.s()),
                op.kernel().quadrature_id(),
                self.domain,
                mask.count(),
                rep.iterations,
                rep.converged,
                cfg.stop.name(),
                fmt17(cfg.tol),
                fmt17(rep.final_residual),
                fmt17(rep.residual.euclidean),
                fmt17(rep.residual.scaled_squared)
            );
            std::fs::write(p, csv)?;
            m.add_output(p);
        }
        m.write_sidecars()?;
        println!(
            "solve points={} iterations={} converged={} residual={:e} time={:.3}s",
            mask.count(),
            rep.iterations,
            rep.converged,
            rep.final_residual,
            m.timings["solve"]
        );
        if !rep.converged {
            return Err(not_converged(rep.iterations, rep.final_residual));
        }
        Ok(())
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum GeometryArg {
    Disc,
    Lshape,
}

#[derive(Args, Debug)]
pub struct BenchCmd {
    #[arg(long)]
    dim: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    s_list: Vec<f64>,
    /// Ascending powers of two.
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, value_enum, default_value = "disc")]
    geometry: GeometryArg,
    /// Disc radius around the cube centre.
    #[arg(long, default_value_t = 0.45)]
    radius: f64,
    #[arg(long)]
    quad: Option<String>,
    #[command(flatten)]
    cg: CgArgs,
    #[command(flatten)]
    cache: CacheArgs,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl BenchCmd {
    pub fn run(self) -> Result<()> {
        let mut m = RunManifest::new("bench");
        m.param("dim", self.dim);
        m.param("s_list", self.s_list.clone());
        m.param("n_list", self.n_list.clone());
        self.cg.record(&mut m);
        let geometry = match self.geometry {
            GeometryArg::Disc => StudyGeometry::Disc { radius: self.radius },
            GeometryArg::Lshape => {
                if self.dim != 2 {
                    return Err(Error::Config(format!("the L-shape is two-dimensional, got --dim {}", self.dim)));
                }
                StudyGeometry::LShape
            }
        };
        m.param("geometry", geometry.describe());
        let rule = rule_for(self.quad.as_deref(), self.dim)?;
        m.param("quad", rule.id());
        let cfg = self.cg.config();
        cfg.validate()?;

        let t0 = Instant::now();
        let mut km = RunManifest::new("bench");
        let result = {
            let mut source = |p: &ProblemParams| obtain(p, &rule, self.cache, &mut km);
            convergence_study(self.dim, &self.s_list, &self.n_list, &geometry, &cfg, &mut source)?
        };
        let total = t0.elapsed().as_secs_f64();
        let kt: f64 = km.timings.values().sum();
        m.timings = km.timings;
        m.timings.insert("solve".into(), total - kt);
        if self.cache.no_cache {
            m.kernel_cache = None;
        } else {
            m.kernel_cache = Some(cache_dir());
        }

        let csv = format!("{}\n{}", m.timing_line(), study_csv(&result, &cfg));
        write_text(self.out.as_deref(), &csv, &mut m)?;
        m.write_sidecars()?;
        for ser in &result.series {
            let rate = ser.rate.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into());
            eprintln!("s={} rate={rate}", ser.s);
        }
        if let Some(row) = result.series.iter().flat_map(|s| &s.rows).find(|r| !r.converged) {
            return Err(Error::Numerical(format!("CG did not converge at N={}", row.n)));
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct AllenCahnCmd {
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    s: f64,
    #[arg(long, default_value_t = 2e-3)]
    eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    #[arg(long, default_value_t = 40.0, allow_negative_numbers = true)]
    t_end: f64,
    #[arg(long, value_enum, default_value = "dirichlet")]
    backend: BackendArg,
    /// Record mass and kink every this many steps.
    #[arg(long, default_value_t = 10)]
    sample_every: usize,
    /// Times at which to dump the state as grid files.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
    /// CG tolerance per time step (dirichlet backend).
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    quad: Option<String>,
    #[command(flatten)]
    cache: CacheArgs,
    /// CSV time series `t,mass,kink_position`; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl AllenCahnCmd {
    pub fn run(self) -> Result<()> {
        let mut m = RunManifest::new("allen-cahn");
        let backend: Backend = self.backend.into();
        let params = ProblemParams::new(1, self.n, self.s)?;
        let mut cfg = AllenCahnConfig::standard(backend);
        cfg.params = params;
        cfg.initial = half_open_indicator(&params);
        cfg.eps = self.eps;
        cfg.tau = self.tau;
        cfg.t_end = self.t_end;
        cfg.sample_every = self.sample_every;
        cfg.snapshot_times = self.snapshots.clone();
        cfg.cg.tol = self.tol;
        cfg.validate()?;
        for (k, v) in [("n", self.n as f64), ("s", self.s), ("eps", self.eps), ("tau", self.tau), ("t_end", self.t_end)] {
            m.param(k, v);
        }
        m.param("backend", backend.name());
        m.param("sample_every", self.sample_every);
        m.param("snapshots", self.snapshots.clone());

        let kernel = match backend {
            Backend::Dirichlet => {
                let rule = rule_for(self.quad.as_deref(), 1)?;
                m.param("quad", rule.id());
                Some(obtain(&params, &rule, self.cache, &mut m)?)
            }
            Backend::Periodic => None,
        };
        let run = m.time("evolve", || allen_cahn_run(&cfg, kernel))?;

        let mut csv = String::new();
        let _ = writeln!(csv, "{}", m.timing_line());
        let _ = writeln!(csv, "t,mass,kink_position");
        for s in &run.samples {
            let kink = s.kink.map(fmt17).unwrap_or_default();
            let _ = writeln!(csv, "{},{},{}", fmt17(s.t), fmt17(s.mass), kink);
        }
        let prefix = match &self.out {
            Some(p) => p.with_extension(""),
            None => PathBuf::from("allen_cahn"),
        };
        for (t, g) in &run.snapshots {
            let mut name = prefix.file_name().unwrap_or_default().to_os_string();
            name.push(format!("_t{t}.grid"));
            let path = prefix.with_file_name(name);
            write_grid(&path, g)?;
            m.add_output(&path);
        }
        write_text(self.out.as_deref(), &csv, &mut m)?;
        m.write_sidecars()?;

        let last = run.samples.last().expect("initial sample");
        eprintln!(
            "allen-cahn steps={} cg_iterations={} final_mass={:.6}",
            run.steps, run.cg_iterations, last.mass
        );
        if backend == Backend::Dirichlet {
            if let Some((a, t0)) = fit_annihilation(&run.samples, 0.05, 0.6) {
                eprintln!("annihilation fit mass = {a:.4} (t0 - t)^(1/2), t0 = {t0:.4}");
            }
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct DenoiseCmd {
    /// Binary PGM (P5), square with power-of-two side.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    s: f64,
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "dirichlet")]
    backend: BackendArg,
    #[arg(long)]
    quad: Option<String>,
    #[command(flatten)]
    cg: CgArgs,
    #[command(flatten)]
    cache: CacheArgs,
    #[arg(long)]
    out: PathBuf,
}

impl DenoiseCmd {
    pub fn run(self) -> Result<()> {
        let mut m = RunManifest::new("denoise");
        let backend: Backend = self.backend.into();
        m.param("in", self.input.display().to_string());
        m.param("s", self.s);
        m.param("alpha", self.alpha);
        m.param("backend", backend.name());
        self.cg.record(&mut m);
        let (side, vals) = m.time("read", || read_pgm(&self.input))?;
        let params = ProblemParams::new(2, side, self.s)?;
        let mut cfg = DenoiseConfig::new(GridFunction::new(params, vals)?, self.s, self.alpha);
        cfg.cg = self.cg.config();
        cfg.validate()?;
        cfg.cg.validate()?;
        let kernel = match backend {
            Backend::Dirichlet => {
                let rule = rule_for(self.quad.as_deref(), 2)?;
                m.param("quad", rule.id());
                Some(obtain(&params, &rule, self.cache, &mut m)?)
            }
            Backend::Periodic => None,
        };
        let res = m.time("solve", || denoise(&cfg, backend, kernel))?;
        write_pgm(&self.out, side, res.image.values())?;
        m.add_output(&self.out);
        m.write_sidecars()?;
        println!(
            "denoise side={side} backend={} iterations={} fidelity={} regularizer={}",
            backend.name(),
            res.iterations,
            fmt17(res.fidelity),
            fmt17(res.regularizer)
        );
        if !res.converged {
            return Err(not_converged(res.iterations, f64::NAN));
        }
        Ok(())
    }
}
