//! JSON experiment configs and their resolution into concrete inputs.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use uot_core::dual::SolverOptions;
use uot_core::quantization::{QuantMethod, QuantOptions};
use uot_core::{io, presets, DiscreteMeasure, Domain, EntropyModel, GridDensity, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Transport,
    Quantize,
    CellProblem,
    AsymptoticDensity,
    Sweep,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Transport => "transport",
            Command::Quantize => "quantize",
            Command::CellProblem => "cell-problem",
            Command::AsymptoticDensity => "asymptotic-density",
            Command::Sweep => "sweep",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must match the subcommand.
    #[serde(default)]
    pub command: Option<Command>,
    pub model: EntropyModel,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<NuSpec>,
    /// Number of sites for `quantize` when `nu` does not give start points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    /// Normalized point count for `asymptotic-density`.
    #[serde(default, rename = "P", alias = "p", skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub table: TableSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// A box `{x_min, x_max, y_min, y_max}` or one of `unit-square`,
    /// `bump` (`[-4 pi, 4 pi]^2`). Defaults to the bump square for the
    /// Gaussian bump and to the unit square otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default = "default_resolution")]
    pub nx: usize,
    #[serde(default = "default_resolution")]
    pub ny: usize,
    /// `uniform`, `gaussian-bump` or `csv:<path>`.
    #[serde(default = "default_density")]
    pub density: String,
}

fn default_resolution() -> usize {
    512
}

fn default_density() -> String {
    "uniform".into()
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { domain: None, nx: 512, ny: 512, density: default_density() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainSpec {
    Box(Domain),
    Named(String),
}

/// Inline sites, or one of `random:<M>:<seed>`, `four-sites`, `csv:<path>`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuSpec {
    Inline { points: Vec<Point>, masses: Vec<f64> },
    Named(String),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<QuantMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Epsilon,
    #[serde(rename = "P", alias = "p")]
    P,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::P => "P",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Command run per value: `transport` (default for epsilon) or
    /// `quantize` for epsilon, `asymptotic-density` for P.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Command>,
}

/// Log-spaced `z` samples written by `cell-problem`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub count: usize,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec { z_min: 1e-6, z_max: 1e4, count: 400 }
    }
}

impl TableSpec {
    pub fn samples(&self) -> Result<Vec<f64>> {
        ensure!(
            self.z_min > 0.0 && self.z_max > self.z_min && self.z_max.is_finite() && self.count >= 2,
            "table needs 0 < z_min < z_max and count >= 2"
        );
        let (a, b) = (self.z_min.ln(), self.z_max.ln());
        let n = self.count - 1;
        Ok((0..=n).map(|k| (a + (b - a) * k as f64 / n as f64).exp()).collect())
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| uot_core::UotError::Io { path: path.display().to_string(), source: e })?;
        serde_json::from_str(&text).map_err(|e| {
            uot_core::UotError::Parse { path: path.display().to_string(), message: e.to_string() }.into()
        })
    }

    /// Applies command-line overrides and makes relative input paths
    /// absolute with respect to `base` (the config's directory).
    pub fn resolve(mut self, command: Command, base: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(c) = self.command {
            ensure!(c == command, "config is for '{c}' but '{command}' was requested");
        }
        self.command = Some(command);
        if let Some(s) = seed {
            self.seed = s;
        }
        if out.is_some() {
            self.output_dir = out;
        }
        if self.output_dir.is_none() {
            self.output_dir = Some(PathBuf::from("out"));
        }
        if let Some(path) = self.grid.density.strip_prefix("csv:") {
            self.grid.density = format!("csv:{}", base.join(path).display());
        }
        if let Some(NuSpec::Named(s)) = &self.nu {
            if let Some(path) = s.strip_prefix("csv:") {
                self.nu = Some(NuSpec::Named(format!("csv:{}", base.join(path).display())));
            }
        }
        let domain = self.domain()?;
        self.grid.domain = Some(DomainSpec::Box(domain));
        Ok(self)
    }

    pub fn output_dir(&self) -> &Path {
        self.output_dir.as_deref().unwrap_or(Path::new("out"))
    }

    pub fn domain(&self) -> Result<Domain> {
        let domain = match &self.grid.domain {
            Some(DomainSpec::Box(d)) => *d,
            Some(DomainSpec::Named(name)) => match name.as_str() {
                "unit-square" => Domain::square(1.0)?,
                "bump" | "gaussian-bump" => presets::bump_domain(),
                other => bail!("unknown domain '{other}', expected unit-square|bump or a box"),
            },
            None if self.grid.density == "gaussian-bump" => presets::bump_domain(),
            None => Domain::square(1.0)?,
        };
        domain.validate()?;
        Ok(domain)
    }

    /// Builds the raster measure; for CSV inputs the shape comes from the
    /// file and is written back into the config.
    pub fn load_density(&mut self) -> Result<GridDensity> {
        let domain = self.domain()?;
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let g = match self.grid.density.as_str() {
            "uniform" => GridDensity::uniform(domain, nx, ny, 1.0)?,
            "gaussian-bump" => presets::gaussian_bump_on(domain, nx, ny)?,
            spec => match spec.strip_prefix("csv:") {
                Some(path) => io::load_raster(path, domain)?,
                None => bail!("unknown density '{spec}', expected uniform|gaussian-bump|csv:<path>"),
            },
        };
        self.grid.nx = g.nx();
        self.grid.ny = g.ny();
        Ok(g)
    }

    /// The target measure; `random:<M>:<seed>` draws uniform positions in
    /// the domain and masses in `[0.5, 1.5]` rescaled to total `mu_mass`.
    pub fn target(&self, mu_mass: f64) -> Result<DiscreteMeasure> {
        let domain = self.domain()?;
        let nu = self.nu.as_ref().context("this command needs 'nu'")?;
        let measure = match nu {
            NuSpec::Inline { points, masses } => DiscreteMeasure::new(points.clone(), masses.clone(), Some(&domain))?,
            NuSpec::Named(name) if name == "four-sites" => {
                let points = presets::FOUR_SITE_POSITIONS
                    .iter()
                    .map(|p| [domain.x_min + p[0] * domain.width(), domain.y_min + p[1] * domain.height()])
                    .collect();
                let masses = presets::FOUR_SITE_FRACTIONS.iter().map(|f| f * mu_mass).collect();
                DiscreteMeasure::new(points, masses, Some(&domain))?
            }
            NuSpec::Named(name) => {
                if let Some(path) = name.strip_prefix("csv:") {
                    io::load_sites(path, Some(&domain))?
                } else if let Some(rest) = name.strip_prefix("random:") {
                    let (count, seed) = parse_random(rest)?;
                    presets::random_sites(&domain, count, seed, mu_mass)?
                } else {
                    bail!("unknown nu '{name}', expected random:<M>:<seed>|four-sites|csv:<path> or inline points");
                }
            }
        };
        Ok(measure)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            max_iter: self.solver.max_iter.unwrap_or(d.max_iter),
            grad_tol: self.solver.grad_tol.unwrap_or(d.grad_tol),
            gap_tol: self.solver.gap_tol.unwrap_or(d.gap_tol),
            memory: self.solver.memory.unwrap_or(d.memory),
        }
    }

    pub fn quant_options(&self) -> QuantOptions {
        let d = QuantOptions::default();
        QuantOptions {
            max_iter: self.solver.max_iter.unwrap_or(d.max_iter),
            grad_tol: self.solver.grad_tol.unwrap_or(d.grad_tol),
            memory: self.solver.memory.unwrap_or(d.memory),
            seed: self.seed,
            ..d
        }
    }

    pub fn quant_method(&self) -> QuantMethod {
        self.solver.method.unwrap_or(QuantMethod::Lloyd)
    }
}

fn parse_random(rest: &str) -> Result<(usize, u64)> {
    let (m, seed) = rest.split_once(':').context("expected random:<M>:<seed>")?;
    let m = m.trim().parse().with_context(|| format!("bad site count '{m}'"))?;
    let seed = seed.trim().parse().with_context(|| format!("bad seed '{seed}'"))?;
    ensure!(m > 0, "random:<M>:<seed> needs M >= 1");
    Ok((m, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn defaults() {
        let c = parse(r#"{"model": {"kind": "wfr"}}"#);
        assert_eq!(c.model.epsilon, 1.0);
        assert_eq!((c.grid.nx, c.grid.ny), (512, 512));
        assert_eq!(c.domain().unwrap(), Domain::square(1.0).unwrap());
        let c = parse(r#"{"model": {"kind": "w2"}, "grid": {"density": "gaussian-bump"}}"#);
        assert_eq!(c.domain().unwrap(), presets::bump_domain());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"model": {"kind": "l1"}}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"model": {"kind": "wfr", "epsilon": -1}}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"model": {"kind": "wfr"}, "typo": 1}"#).is_err());
        let c = parse(r#"{"model": {"kind": "wfr"}, "nu": "random:x:1"}"#);
        assert!(c.target(1.0).is_err());
        let c = parse(r#"{"model": {"kind": "wfr"}, "command": "quantize"}"#);
        assert!(c.resolve(Command::Transport, Path::new("."), None, None).is_err());
    }

    #[test]
    fn random_target_is_seeded_and_balanced() {
        let c = parse(r#"{"model": {"kind": "w2"}, "nu": "random:7:3"}"#);
        let a = c.target(2.5).unwrap();
        assert_eq!(a, c.target(2.5).unwrap());
        assert_eq!(a.len(), 7);
        assert!((a.total_mass() - 2.5).abs() < 1e-12);
        let other = parse(r#"{"model": {"kind": "w2"}, "nu": "random:7:4"}"#).target(2.5).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn four_sites_follow_the_domain() {
        let c = parse(r#"{"model": {"kind": "ghk"}, "grid": {"domain": {"x_min": 0, "x_max": 2, "y_min": 0, "y_max": 2}}, "nu": "four-sites"}"#);
        let nu = c.target(4.0).unwrap();
        assert_eq!(nu, presets::four_sites(2.0));
    }

    #[test]
    fn table_samples_are_log_spaced() {
        let z = TableSpec { z_min: 1e-2, z_max: 1e2, count: 5 }.samples().unwrap();
        for (a, b) in z.iter().zip([1e-2, 1e-1, 1.0, 10.0, 100.0]) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resolution_echoes_overrides() {
        let c = parse(r#"{"model": {"kind": "qr"}, "grid": {"density": "csv:mu.csv"}, "nu": "csv:nu.csv"}"#)
            .resolve(Command::Transport, Path::new("/data"), Some(9), Some("/tmp/o".into()))
            .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.grid.density, "csv:/data/mu.csv");
        assert!(matches!(&c.nu, Some(NuSpec::Named(s)) if s == "csv:/data/nu.csv"));
        assert_eq!(c.output_dir(), Path::new("/tmp/o"));
        assert!(matches!(c.grid.domain, Some(DomainSpec::Box(_))));
    }
}
