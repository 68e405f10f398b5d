//! Run configuration: a JSON manifest describing the data source, method,
//! tuning, inference options and replication plan. Every field can be
//! overridden from the command line with `--set dotted.name=value`.

use fragcp_core::error::{Error, Result};
use fragcp_core::experiment::{DetectSettings, InferenceSettings};
use fragcp_core::ffdp::ShortIntervalRule;
use fragcp_core::inference::LimitMode;
use fragcp_core::simulate::{builtin_scenario, ScenarioId, ScenarioSpec};
use fragcp_core::tuning::{Method, TuningGrid};
use fragcp_core::FragmentedDataset;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// CSV file with header `t,j,x,y`.
    Csv(PathBuf),
    /// Built-in benchmark scenario.
    Scenario(ScenarioRef),
    /// Fully explicit generative description.
    Spec(ScenarioSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRef {
    pub id: String,
    pub n: usize,
    #[serde(default)]
    pub m: Option<usize>,
}

fn default_reps() -> usize {
    20
}

fn default_refine() -> bool {
    true
}

fn default_c_k() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceConfig {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default = "default_m_range")]
    pub m: f64,
    #[serde(default = "default_n_grid")]
    pub n: usize,
    #[serde(default = "default_mode")]
    pub mode: LimitMode,
}

fn default_alphas() -> Vec<f64> {
    vec![0.05]
}
fn default_b() -> usize {
    1000
}
fn default_m_range() -> f64 {
    50.0
}
fn default_n_grid() -> usize {
    100
}
fn default_mode() -> LimitMode {
    LimitMode::Step4Prime
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            alphas: default_alphas(),
            b: default_b(),
            m: default_m_range(),
            n: default_n_grid(),
            mode: default_mode(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub xi_or_tau: Option<f64>,
    #[serde(default)]
    pub grid: Option<TuningGrid>,
    #[serde(default)]
    pub short_rule: Option<String>,
    #[serde(default = "default_c_k")]
    pub c_k: f64,
    #[serde(default = "default_refine")]
    pub refine: bool,
    #[serde(default)]
    pub prelim_on_half: bool,
    #[serde(default)]
    pub no_infer: bool,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Optional pooled-mean centering applied after loading: number of bins.
    #[serde(default)]
    pub center_bins: Option<usize>,
    #[serde(default)]
    pub scan_curves: bool,
}

fn default_method() -> Method {
    Method::Ffdp
}

fn default_r() -> usize {
    3
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        for &a in &self.inference.alphas {
            if !(0.0 < a && a < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "alpha {a} outside (0, 1)"
                )));
            }
        }
        if self.grid.is_none() && (self.lambda.is_none() || self.xi_or_tau.is_none()) {
            return Err(Error::InvalidArgument(
                "either a tuning grid or fixed lambda and xi_or_tau must be given".into(),
            ));
        }
        if let Some(rule) = &self.short_rule {
            short_rule_from_str(rule)?;
        }
        Ok(())
    }

    /// The scenario spec, when the data source is generative.
    pub fn scenario(&self) -> Result<ScenarioSpec> {
        match &self.data {
            DataSource::Csv(p) => Err(Error::InvalidArgument(format!(
                "data source is a CSV file ({}), not a scenario",
                p.display()
            ))),
            DataSource::Scenario(sref) => {
                let id: ScenarioId = sref.id.parse()?;
                builtin_scenario(id, sref.n, sref.m, self.seed)
            }
            DataSource::Spec(spec) => {
                let mut spec = spec.clone();
                spec.seed = self.seed;
                Ok(spec)
            }
        }
    }

    /// Materialize the dataset, whatever the source.
    pub fn load_data(&self) -> Result<FragmentedDataset> {
        let data = match &self.data {
            DataSource::Csv(path) => FragmentedDataset::load_csv(path)?,
            _ => fragcp_core::simulate::generate(&self.scenario()?)?.0,
        };
        match self.center_bins {
            Some(bins) => data.center(bins),
            None => Ok(data),
        }
    }

    pub fn detect_settings(&self) -> Result<DetectSettings> {
        self.validate()?;
        let short_rule = match &self.short_rule {
            Some(rule) => short_rule_from_str(rule)?,
            None => ShortIntervalRule::default(),
        };
        Ok(DetectSettings {
            method: self.method,
            r: self.r,
            lambda: self.lambda.unwrap_or(0.0),
            xi_or_tau: self.xi_or_tau.unwrap_or(1.0),
            grid: self.grid.clone(),
            fit: Default::default(),
            short_rule,
            c_k: self.c_k,
            refine: self.refine,
            inference: (!self.no_infer).then(|| InferenceSettings {
                alphas: self.inference.alphas.clone(),
                b_reps: self.inference.b,
                m_range: self.inference.m,
                n_grid: self.inference.n,
                mode: self.inference.mode,
            }),
            record_scan_curves: self.scan_curves,
            prelim_on_half: self.prelim_on_half,
        })
    }

    /// Apply a `dotted.name=value` override onto the JSON representation.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("override '{assignment}' is not name=value"))
        })?;
        let mut root = serde_json::to_value(&*self)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut cursor = &mut root;
        for key in path.split('.') {
            if !cursor.is_object() {
                return Err(Error::InvalidArgument(format!(
                    "override path '{path}' does not address an object"
                )));
            }
            cursor = cursor
                .as_object_mut()
                .unwrap()
                .entry(key.to_string())
                .or_insert(serde_json::Value::Null);
        }
        *cursor = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        *self = serde_json::from_value(root)
            .map_err(|e| Error::InvalidArgument(format!("override '{assignment}': {e}")))?;
        Ok(())
    }
}

fn short_rule_from_str(s: &str) -> Result<ShortIntervalRule> {
    match s.to_ascii_lowercase().as_str() {
        "constraint" => Ok(ShortIntervalRule::Constraint),
        "zeroloss" | "zero_loss" => Ok(ShortIntervalRule::ZeroLoss),
        other => Err(Error::InvalidArgument(format!(
            "unknown short_rule '{other}'"
        ))),
    }
}
