//! JSON sidecar describing how an output file was produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fraclap::Result;
use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("FRACLAP_VERSION");

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub parameters: BTreeMap<String, Value>,
    pub kernel_cache: Option<PathBuf>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.into(),
            version: VERSION.into(),
            parameters: BTreeMap::new(),
            kernel_cache: None,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, v: impl Into<Value>) {
        self.parameters.insert(key.into(), v.into());
    }

    /// Runs `f` and records its wall-clock time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.timings.entry(phase.into()).or_default() += t0.elapsed().as_secs_f64();
        out
    }

    /// `phase=seconds` pairs for a `# timing:` line.
    pub fn timing_line(&self) -> String {
        let parts: Vec<String> = self.timings.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        format!("# timing: {}", parts.join(" "))
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `<output>.manifest.json` next to every recorded output.
    pub fn write_sidecars(&self) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        for out in &self.outputs {
            std::fs::write(sidecar_path(out), format!("{json}\n"))?;
        }
        Ok(())
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}
