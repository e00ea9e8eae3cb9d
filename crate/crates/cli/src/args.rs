use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use comono_rdd::loclin::log_grid;
use comono_rdd::{BootstrapConfig, ColumnSchema, EndpointSource, HChoice, Kernel, ModelConfig};
use serde::{Deserialize, Serialize};

/// A real value or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    #[default]
    Auto,
    Value(f64),
}

impl FromStr for Choice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Choice::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| format!("expected a number or `auto`, got `{s}`"))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("expected a positive value, got {v}"));
        }
        Ok(Choice::Value(v))
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Auto => write!(f, "auto"),
            Choice::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Choice {
    pub fn value(self) -> Option<f64> {
        match self {
            Choice::Auto => None,
            Choice::Value(v) => Some(v),
        }
    }
}

/// First-stage bandwidth: rule of thumb, cross-validated, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HArg {
    #[default]
    Rot,
    Auto,
    Value(f64),
}

impl FromStr for HArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rot" | "rule-of-thumb" => Ok(HArg::Rot),
            other => other.parse::<Choice>().map(|c| match c {
                Choice::Auto => HArg::Auto,
                Choice::Value(v) => HArg::Value(v),
            }),
        }
    }
}

impl fmt::Display for HArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HArg::Rot => write!(f, "rot"),
            HArg::Auto => write!(f, "auto"),
            HArg::Value(v) => write!(f, "{v}"),
        }
    }
}

/// `lo:hi:steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, steps] = parts[..] else {
            return Err(format!("expected lo:hi:steps, got `{s}`"));
        };
        let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
        let steps: usize = steps.trim().parse().map_err(|_| format!("bad step count `{steps}`"))?;
        if steps == 0 || !(lo <= hi) {
            return Err(format!("`{s}` is not a nonempty increasing range"));
        }
        Ok(Range { lo, hi, steps })
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.steps)
    }
}

impl Range {
    pub fn linear(&self) -> Vec<f64> {
        comono_rdd::extrapolate::equispaced(self.lo, self.hi, self.steps)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Input CSV with outcome, treatment and covariate columns
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    #[arg(long, default_value = "y")]
    pub y_col: String,
    #[arg(long, default_value = "d")]
    pub d_col: String,
    /// Comma-separated covariate columns (default: every other column)
    #[arg(long, value_delimiter = ',')]
    pub x_cols: Option<Vec<String>>,
}

impl DataArgs {
    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            y: self.y_col.clone(),
            d: self.d_col.clone(),
            x: self.x_cols.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Uniform,
    Triangular,
    Epanechnikov,
    Gaussian,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Uniform => Kernel::Uniform,
            KernelArg::Triangular => Kernel::Triangular,
            KernelArg::Epanechnikov => Kernel::Epanechnikov,
            KernelArg::Gaussian => Kernel::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointArg {
    /// Own-group fits at the group's near-frontier units
    Own,
    /// Extrapolated fits over the regression sample
    Sample,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub kernel: KernelArg,
    /// First-stage bandwidth: `rot` (rule of thumb), `auto` (cross-validated) or a value
    #[arg(long, default_value = "rot")]
    pub h: HArg,
    /// Candidate h values for `--h auto`, log-spaced (default: 0.5 to 2 times the rule of thumb, 10 steps)
    #[arg(long, value_name = "LO:HI:STEPS")]
    pub cv_grid: Option<Range>,
    /// Near-frontier radius in standardized units, or `auto` for omega*h
    #[arg(long, default_value = "auto")]
    pub epsilon: Choice,
    /// Second-stage bandwidth, or `auto` for cross-validation
    #[arg(long, default_value = "auto")]
    pub b: Choice,
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
    /// Use raw covariates for distances
    #[arg(long)]
    pub no_standardize: bool,
    /// Project q-curves onto nondecreasing functions
    #[arg(long)]
    pub rearrange: bool,
    /// Regress the opposite group's own fits instead of raw outcomes in the second stage
    #[arg(long)]
    pub smooth_response: bool,
    #[arg(long, value_enum, default_value = "own")]
    pub endpoints: EndpointArg,
    /// Plain leave-one-out for the second-stage bandwidth
    #[arg(long)]
    pub plain_cv: bool,
}

impl ModelArgs {
    pub fn config(&self, n_min: usize) -> anyhow::Result<ModelConfig> {
        if self.grid_size == 0 {
            bail!(comono_rdd::Error::InvalidArgument("grid size must be positive".into()));
        }
        let h = match self.h {
            HArg::Rot => HChoice::RuleOfThumb,
            HArg::Value(v) => HChoice::Fixed(v),
            HArg::Auto => {
                let grid = match self.cv_grid {
                    Some(r) => {
                        if !(r.lo > 0.0) {
                            bail!(comono_rdd::Error::InvalidArgument("cv grid must be positive".into()));
                        }
                        log_grid(r.lo, r.hi, r.steps)
                    }
                    None => {
                        let rot = comono_rdd::loclin::rule_of_thumb_h(n_min);
                        log_grid(0.5 * rot, 2.0 * rot, 10)
                    }
                };
                HChoice::CrossValidate(grid)
            }
        };
        Ok(ModelConfig {
            kernel: self.kernel.into(),
            h,
            epsilon: self.epsilon.value(),
            b: self.b.value(),
            grid_size: self.grid_size,
            rearrange: self.rearrange,
            smooth_response: self.smooth_response,
            endpoint_source: match self.endpoints {
                EndpointArg::Own => EndpointSource::OwnGroup,
                EndpointArg::Sample => EndpointSource::RegressionSample,
            },
            standardize: !self.no_standardize,
            blocked_cv: !self.plain_cv,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BootArgs {
    /// Multiplier-bootstrap draws for pointwise bands (0 disables bands)
    #[arg(long, default_value_t = 0)]
    pub bootstrap_draws: usize,
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl BootArgs {
    pub fn config(&self) -> Option<BootstrapConfig> {
        (self.bootstrap_draws > 0).then_some(BootstrapConfig {
            draws: self.bootstrap_draws,
            level: self.level,
            seed: self.seed,
        })
    }
}

/// Parses `a,b;c,d` into points.
pub fn parse_points(text: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|p| {
            p.split(',')
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad coordinate `{v}`")))
                .collect()
        })
        .collect()
}
