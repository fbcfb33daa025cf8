//! Run configuration: a TOML file and/or command-line flags (flags win),
//! validated into a self-contained description of one experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub points_per_axis: usize,
    pub period: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dim: 2,
            points_per_axis: 64,
            period: 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub start: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            start: 0.0,
            horizon: 1.0,
            steps: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub nu: f64,
    pub alpha: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig { nu: 0.1, alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    /// Horizon N of the truncated kernel (integrate r ∈ [1/N, N]).
    pub horizon_n: f64,
    /// ε of the one-sided regularization P^ε.
    pub eps: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            horizon_n: 16.0,
            eps: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub samples: usize,
    pub quad_panels: usize,
    pub gh_points: usize,
    pub flow_steps: usize,
    pub seed: u64,
    pub stream_id: u64,
    pub antithetic: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            samples: 20_000,
            quad_panels: 32,
            gh_points: 8,
            flow_steps: 200,
            seed: 42,
            stream_id: 0,
            antithetic: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; flag > config file > FBFLOW_OUT_DIR > "./out".
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    TaylorGreen,
    RandomSolenoidal,
    RandomBandlimited,
    Heat,
    #[serde(rename = "cole-hopf-1d")]
    #[value(name = "cole-hopf-1d")]
    ColeHopf1d,
    File,
}

impl Preset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::TaylorGreen => "taylor-green",
            Preset::RandomSolenoidal => "random-solenoidal",
            Preset::RandomBandlimited => "random-bandlimited",
            Preset::Heat => "heat",
            Preset::ColeHopf1d => "cole-hopf-1d",
            Preset::File => "file",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    Truncated,
    MonteCarlo,
}

/// A run is a pure function of this structure.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Preset,
    pub mode: Mode,
    /// Input field for `preset = "file"`.
    pub input_field: Option<PathBuf>,
    /// Convergence-study truncation horizons.
    pub n_list: Vec<f64>,
    /// Present the solution in forward-time convention.
    pub forward: bool,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub physics: PhysicsConfig,
    pub truncation: TruncationConfig,
    pub sampling: SamplingConfig,
    pub output: OutputConfig,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::TaylorGreen,
            mode: Mode::Exact,
            input_field: None,
            n_list: vec![4.0, 16.0, 64.0, 256.0],
            forward: false,
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            physics: PhysicsConfig::default(),
            truncation: TruncationConfig::default(),
            sampling: SamplingConfig::default(),
            output: OutputConfig::default(),
            tol: 1e-10,
            max_iter: 60,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "bad configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Range checks with the offending key path in the message.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, msg: String| -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError(format!("{key}: {msg}")))
            }
        };
        check(
            (1..=3).contains(&self.grid.dim),
            "grid.dim",
            format!("must be 1, 2 or 3, got {}", self.grid.dim),
        )?;
        check(
            self.grid.points_per_axis >= 4,
            "grid.points_per_axis",
            format!("must be ≥ 4, got {}", self.grid.points_per_axis),
        )?;
        check(
            self.grid.period > 0.0 && self.grid.period.is_finite(),
            "grid.period",
            format!("must be positive, got {}", self.grid.period),
        )?;
        check(
            self.physics.nu > 0.0 && self.physics.nu.is_finite(),
            "physics.nu",
            format!("must be positive, got {}", self.physics.nu),
        )?;
        check(
            self.time.horizon > self.time.start,
            "time.horizon",
            format!("must exceed time.start, got {} ≤ {}", self.time.horizon, self.time.start),
        )?;
        check(self.time.steps >= 2, "time.steps", "must be ≥ 2".into())?;
        check(
            self.truncation.horizon_n > 1.0,
            "truncation.horizon_n",
            format!("must exceed 1, got {}", self.truncation.horizon_n),
        )?;
        check(
            self.truncation.eps > 0.0 && self.truncation.eps < 1.0,
            "truncation.eps",
            format!("must lie in (0,1), got {}", self.truncation.eps),
        )?;
        check(self.sampling.samples >= 2, "sampling.samples", "must be ≥ 2".into())?;
        check(self.sampling.quad_panels >= 2, "sampling.quad_panels", "must be ≥ 2".into())?;
        check(self.sampling.gh_points >= 2, "sampling.gh_points", "must be ≥ 2".into())?;
        check(self.tol > 0.0, "tol", "must be positive".into())?;
        check(self.max_iter >= 1, "max_iter", "must be ≥ 1".into())?;
        if self.preset == Preset::File {
            check(self.input_field.is_some(), "input_field", "required for preset = \"file\"".into())?;
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        if let Some(d) = &self.output.dir {
            return d.clone();
        }
        if let Ok(d) = std::env::var("FBFLOW_OUT_DIR") {
            return PathBuf::from(d);
        }
        PathBuf::from("out")
    }
}
