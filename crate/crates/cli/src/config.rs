//! Run configuration: a flat `key = value` file overlaid with command-line flags.

use std::path::{Path, PathBuf};

use clap::Parser;
use pauliprop_core::artifacts::parse_key_values;
use pauliprop_core::models::{EAGLE_OBSERVABLE_SITE, EAGLE_PRESET};
use pauliprop_core::{parse_angle, Cadence, MultiIndex};

use crate::CliError;

/// Preset without a bundled geometry; needs `geometry`.
pub const KICKED_ISING_PRESET: &str = "kicked-ising";

#[derive(Parser, Debug, Default, Clone)]
#[command(name = "pauliprop", version, about = "Heisenberg-picture Pauli propagation on partitioned sparse operators")]
pub struct Cli {
    /// Flat `key = value` configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model preset: kicked-ising-eagle127 or kicked-ising.
    #[arg(long)]
    pub preset: Option<String>,
    /// Circuit file, used instead of a preset.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    /// Edge list `i j [color]` for the kicked-ising preset.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Width of a circuit file that does not declare `# qubits N`.
    #[arg(long)]
    pub qubits: Option<usize>,
    /// X rotation angle in radians; a `pi` suffix is allowed.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_x: Option<String>,
    /// ZZ rotation angle in radians; a `pi` suffix is allowed.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_zz: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon0: Option<f64>,
    /// per-gate or per-layer.
    #[arg(long)]
    pub cadence: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub block_size: Option<u32>,
    #[arg(long)]
    pub perturbation: Option<u64>,
    /// Evolved Pauli string; prefix `zero-state:` (the default) reads
    /// `<0|O|0>`, prefix `coefficient:` reads the string's own coefficient.
    #[arg(long)]
    pub observable: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare against the dense references and print the deviations.
    #[arg(long)]
    pub oracle_check: bool,
    /// Comma-separated worker counts to sweep.
    #[arg(long, value_delimiter = ',')]
    pub bench: Option<Vec<usize>>,
    /// Write `histogram_t<k>.tsv` with this many bins after each layer.
    #[arg(long)]
    pub histogram_bins: Option<usize>,
    /// Write a checkpoint every this many layers.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Abort once the operator exceeds this many terms.
    #[arg(long)]
    pub max_terms: Option<usize>,
    /// Run workers one after another on the main thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Eagle,
    KickedIsing(PathBuf),
    CircuitFile(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadoutKind {
    ZeroState,
    Coefficient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub source: Source,
    pub qubits: Option<usize>,
    pub theta_x: f64,
    pub theta_zz: f64,
    pub layers: usize,
    pub epsilon0: f64,
    pub cadence: Cadence,
    pub workers: usize,
    pub block_size: Option<u32>,
    pub perturbation: u64,
    pub observable: String,
    pub readout: ReadoutKind,
    pub out: PathBuf,
    pub oracle_check: bool,
    pub bench: Option<Vec<usize>>,
    pub histogram_bins: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub resume: Option<PathBuf>,
    pub max_terms: Option<usize>,
    pub sequential: bool,
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::Config(format!("invalid value {value:?} for `{key}`"))
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| bad(key, value))
}

fn angle(key: &str, value: &str) -> Result<f64, CliError> {
    parse_angle(value).map_err(|_| bad(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

/// Raw settings before validation; file entries first, flags on top.
#[derive(Default)]
struct Draft {
    preset: Option<String>,
    circuit: Option<PathBuf>,
    geometry: Option<PathBuf>,
    qubits: Option<usize>,
    theta_x: Option<f64>,
    theta_zz: Option<f64>,
    layers: Option<usize>,
    epsilon0: Option<f64>,
    cadence: Option<Cadence>,
    workers: Option<usize>,
    block_size: Option<u32>,
    perturbation: Option<u64>,
    observable: Option<String>,
    out: Option<PathBuf>,
    oracle_check: bool,
    bench: Option<Vec<usize>>,
    histogram_bins: Option<usize>,
    checkpoint_every: Option<usize>,
    resume: Option<PathBuf>,
    max_terms: Option<usize>,
    sequential: bool,
}

impl Draft {
    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), CliError> {
        let path = |v: &str| base.join(v);
        match key.replace('-', "_").as_str() {
            "preset" => self.preset = Some(value.to_string()),
            "circuit" => self.circuit = Some(path(value)),
            "geometry" => self.geometry = Some(path(value)),
            "qubits" => self.qubits = Some(number(key, value)?),
            "theta_x" => self.theta_x = Some(angle(key, value)?),
            "theta_zz" => self.theta_zz = Some(angle(key, value)?),
            "layers" => self.layers = Some(number(key, value)?),
            "epsilon0" => self.epsilon0 = Some(number(key, value)?),
            "cadence" => self.cadence = Some(value.parse().map_err(|_| bad(key, value))?),
            "workers" => self.workers = Some(number(key, value)?),
            "block_size" => self.block_size = Some(number(key, value)?),
            "perturbation" => self.perturbation = Some(number(key, value)?),
            "observable" => self.observable = Some(value.to_string()),
            "out" => self.out = Some(path(value)),
            "oracle_check" => self.oracle_check = flag(key, value)?,
            "bench" => {
                let list = value
                    .split(',')
                    .map(|v| number(key, v.trim()))
                    .collect::<Result<Vec<usize>, _>>()?;
                self.bench = Some(list);
            }
            "histogram_bins" => self.histogram_bins = Some(number(key, value)?),
            "checkpoint_every" => self.checkpoint_every = Some(number(key, value)?),
            "resume" => self.resume = Some(path(value)),
            "max_terms" => self.max_terms = Some(number(key, value)?),
            "sequential" => self.sequential = flag(key, value)?,
            _ => return Err(CliError::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    fn overlay(&mut self, cli: &Cli) -> Result<(), CliError> {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &cli.$field {
                    self.$field = Some(v.clone());
                }
            };
        }
        take!(preset);
        take!(circuit);
        take!(geometry);
        take!(qubits);
        take!(layers);
        take!(epsilon0);
        take!(workers);
        take!(block_size);
        take!(perturbation);
        take!(observable);
        take!(out);
        take!(bench);
        take!(histogram_bins);
        take!(checkpoint_every);
        take!(resume);
        take!(max_terms);
        if let Some(v) = &cli.theta_x {
            self.theta_x = Some(angle("theta-x", v)?);
        }
        if let Some(v) = &cli.theta_zz {
            self.theta_zz = Some(angle("theta-zz", v)?);
        }
        if let Some(v) = &cli.cadence {
            self.cadence = Some(v.parse().map_err(|_| bad("cadence", v))?);
        }
        self.oracle_check |= cli.oracle_check;
        self.sequential |= cli.sequential;
        Ok(())
    }
}

impl RunConfig {
    /// Reads `cli.config` if given, applies the flags and validates.
    pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
        let mut draft = Draft::default();
        if let Some(path) = &cli.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            let base = path.parent().unwrap_or(Path::new("."));
            let pairs = parse_key_values(&text).map_err(|(line, msg)| {
                CliError::Config(format!("{}:{line}: {msg}", path.display()))
            })?;
            for (k, v) in pairs {
                draft.set(&k, &v, base)?;
            }
        }
        draft.overlay(cli)?;
        Self::validate(draft)
    }

    fn validate(d: Draft) -> Result<RunConfig, CliError> {
        let cfg_err = |m: String| CliError::Config(m);
        let source = match (&d.circuit, d.preset.as_deref()) {
            (Some(_), Some(_)) => {
                return Err(cfg_err("give either a preset or a circuit file, not both".into()))
            }
            (Some(path), None) => Source::CircuitFile(path.clone()),
            (None, None) => Source::Eagle,
            (None, Some(EAGLE_PRESET)) => match &d.geometry {
                Some(g) => Source::KickedIsing(g.clone()),
                None => Source::Eagle,
            },
            (None, Some(KICKED_ISING_PRESET)) => Source::KickedIsing(
                d.geometry
                    .clone()
                    .ok_or_else(|| cfg_err("preset kicked-ising needs `geometry`".into()))?,
            ),
            (None, Some(other)) => return Err(cfg_err(format!("unknown preset `{other}`"))),
        };
        for path in [d.circuit.as_ref(), d.geometry.as_ref()].into_iter().flatten() {
            if !path.is_file() {
                return Err(cfg_err(format!("file not found: {}", path.display())));
            }
        }
        let workers = d.workers.unwrap_or(1);
        if workers == 0 {
            return Err(cfg_err("workers must be at least 1".into()));
        }
        let epsilon0 = d.epsilon0.unwrap_or(0.0);
        if !(epsilon0 >= 0.0 && epsilon0.is_finite()) {
            return Err(cfg_err(format!("epsilon0 must be finite and >= 0, got {epsilon0}")));
        }
        if let Some(bench) = &d.bench {
            if bench.is_empty() || bench.contains(&0) {
                return Err(cfg_err("bench worker counts must be >= 1".into()));
            }
        }
        if d.checkpoint_every == Some(0) {
            return Err(cfg_err("checkpoint-every must be at least 1".into()));
        }
        if d.histogram_bins == Some(0) {
            return Err(cfg_err("histogram-bins must be at least 1".into()));
        }
        let layers = d.layers.unwrap_or(if matches!(source, Source::CircuitFile(_)) { 1 } else { 20 });
        if layers == 0 {
            return Err(cfg_err("layers must be at least 1".into()));
        }
        let raw_obs = d
            .observable
            .clone()
            .unwrap_or_else(|| match source {
                Source::Eagle => format!("Z{EAGLE_OBSERVABLE_SITE}"),
                _ => "Z0".to_string(),
            });
        let (readout, observable) = if let Some(rest) = raw_obs.strip_prefix("coefficient:") {
            (ReadoutKind::Coefficient, rest.trim().to_string())
        } else {
            let rest = raw_obs.strip_prefix("zero-state:").unwrap_or(&raw_obs);
            (ReadoutKind::ZeroState, rest.trim().to_string())
        };
        Ok(RunConfig {
            source,
            qubits: d.qubits,
            theta_x: d.theta_x.unwrap_or(0.1 * std::f64::consts::PI),
            theta_zz: d.theta_zz.unwrap_or(pauliprop_core::models::DEFAULT_THETA_ZZ),
            layers,
            epsilon0,
            cadence: d.cadence.unwrap_or_default(),
            workers,
            block_size: d.block_size,
            perturbation: d.perturbation.unwrap_or(1),
            observable,
            readout,
            out: d.out.unwrap_or_else(|| PathBuf::from("pauliprop-out")),
            oracle_check: d.oracle_check,
            bench: d.bench,
            histogram_bins: d.histogram_bins,
            checkpoint_every: d.checkpoint_every,
            resume: d.resume,
            max_terms: d.max_terms,
            sequential: d.sequential,
        })
    }

    pub fn observable_index(&self, n_qubits: usize) -> Result<MultiIndex, CliError> {
        MultiIndex::parse_label(&self.observable, n_qubits)
            .map_err(|e| CliError::Config(format!("observable {:?}: {e}", self.observable)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cli(args: &[&str]) -> Cli {
        Cli::parse_from(std::iter::once("pauliprop").chain(args.iter().copied()))
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&cli(&[])).unwrap();
        assert_eq!(c.source, Source::Eagle);
        assert_eq!(c.workers, 1);
        assert_eq!(c.observable, "Z62");
        assert_eq!(c.readout, ReadoutKind::ZeroState);
        assert_eq!(c.theta_zz, -PI / 2.0);
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "theta_x = 0.25pi\nworkers = 4\nepsilon0 = 1e-4\nout = results\n").unwrap();
        let c = RunConfig::resolve(&cli(&[
            "--config",
            path.to_str().unwrap(),
            "--workers",
            "2",
            "--theta-zz",
            "-0.5pi",
        ]))
        .unwrap();
        assert_eq!(c.theta_x, 0.25 * PI);
        assert_eq!(c.workers, 2);
        assert_eq!(c.epsilon0, 1e-4);
        assert_eq!(c.out, dir.path().join("results"));
    }

    #[test]
    fn observable_forms() {
        let c = RunConfig::resolve(&cli(&["--observable", "coefficient:Z62 Z61"])).unwrap();
        assert_eq!(c.readout, ReadoutKind::Coefficient);
        assert_eq!(c.observable, "Z62 Z61");
        let c = RunConfig::resolve(&cli(&["--observable", "zero-state:X3"])).unwrap();
        assert_eq!(c.readout, ReadoutKind::ZeroState);
        assert_eq!(c.observable, "X3");
    }

    #[test]
    fn rejects_bad_settings() {
        for args in [
            &["--workers", "0"][..],
            &["--epsilon0", "-1"],
            &["--preset", "nope"],
            &["--preset", "kicked-ising"],
            &["--geometry", "/does/not/exist", "--preset", "kicked-ising"],
            &["--theta-x", "abc"],
            &["--cadence", "sometimes"],
        ] {
            assert!(
                matches!(RunConfig::resolve(&cli(args)), Err(CliError::Config(_))),
                "{args:?}"
            );
        }
    }
}
