//! Run configuration: a single JSON document per invocation.

use declab::models::{irregular_levels, BathCoupling, PointerBathParams, PointerRulerParams};
use declab::reduction::{LocationCovariance, WalkParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Decoherence,
    Reduction,
    BornCheck,
    Harmonicity,
    Anisotropy,
    DriftStudy,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Decoherence => "decoherence",
            Experiment::Reduction => "reduction",
            Experiment::BornCheck => "born_check",
            Experiment::Harmonicity => "harmonicity",
            Experiment::Anisotropy => "anisotropy",
            Experiment::DriftStudy => "drift_study",
        }
    }

    pub fn needs_scenario(self) -> bool {
        matches!(self, Experiment::Decoherence | Experiment::DriftStudy)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Fully resolved scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ScenarioSpec {
    PointerBath(PointerBathParams),
    PointerRulerPhonon(PointerRulerParams),
    Combined { ruler: PointerRulerParams, bath: BathCoupling },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub step_sigma: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_covariance: Option<LocationCovariance>,
}

fn default_max_steps() -> u64 {
    10_000_000
}

impl WalkConfig {
    pub fn params(&self, seed: u64) -> WalkParams {
        WalkParams {
            step_sigma: self.step_sigma,
            covariance: self.covariance.clone(),
            max_steps: self.max_steps,
            seed,
            location_covariance: self.location_covariance,
            path_stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub p0: Vec<f64>,
    pub n_traj: u64,
    /// Sphere radius for `harmonicity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Number of sphere points for `harmonicity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sphere: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub t_max: f64,
    /// Output rows after `t = 0`, evenly spaced up to `t_max`.
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Re-solve `β` from the environment energy at every sample instead of
    /// keeping the initial value.
    #[serde(default)]
    pub refresh_beta: bool,
    /// When set, also integrate the perturbative reduced equation with this
    /// step and report its trace distance to the exact state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbative_dt: Option<f64>,
}

fn default_samples() -> usize {
    100
}

/// The configuration as written to the manifest: every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionConfig>,
}

fn default_output() -> String {
    "results".into()
}

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub format: Option<Format>,
}

/// A problem found while reading or validating a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub field: String,
    pub message: String,
}

impl Finding {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

/// Parses the JSON text, applies overrides and fills scenario defaults.
/// Scenario seeds default to the run seed.
pub fn parse(text: &str, overrides: &Overrides) -> Result<RunConfig, Vec<Finding>> {
    let mut root: Value = serde_json::from_str(text).map_err(|e| vec![Finding::new("", format!("not valid JSON: {e}"))])?;
    let obj = root.as_object_mut().ok_or_else(|| vec![Finding::new("", "configuration must be a JSON object")])?;
    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(vec![Finding::new("schema_version", format!("unsupported schema version {v}, expected {SCHEMA_VERSION}"))]),
        None => return Err(vec![Finding::new("schema_version", "missing or not an integer")]),
    }
    if let Some(seed) = overrides.seed {
        obj.insert("seed".into(), seed.into());
    }
    if let Some(out) = &overrides.output {
        obj.insert("output".into(), out.clone().into());
    }
    if let Some(f) = overrides.format {
        obj.insert("format".into(), serde_json::to_value(f).expect("format serializes"));
    }
    let seed = obj.get("seed").and_then(Value::as_u64).ok_or_else(|| vec![Finding::new("seed", "a non-negative integer seed is required")])?;
    let drift = obj.get("experiment").and_then(Value::as_str) == Some("drift_study");
    if let Some(scenario) = obj.get_mut("scenario") {
        fill_scenario(scenario, seed).map_err(|m| vec![Finding::new("scenario", m)])?;
        if drift {
            default_hidden(scenario, seed);
        }
    }
    serde_json::from_value(root).map_err(|e| vec![Finding::new("", e.to_string())])
}

fn fill_scenario(value: &mut Value, seed: u64) -> Result<(), String> {
    let obj = value.as_object_mut().ok_or("scenario must be an object")?;
    let model = obj.get("model").and_then(Value::as_str).ok_or("scenario.model is required")?.to_string();
    match model.as_str() {
        "pointer_bath" => {
            let n_sites = get_usize(obj, "n_sites", 2)?;
            let n_env = get_usize(obj, "n_env", 8)?;
            let lambda = obj.get("lambda").and_then(Value::as_f64).ok_or("scenario.lambda is required")?;
            let base = PointerBathParams::standard(n_sites, n_env, lambda, seed);
            overlay(obj, serde_json::to_value(base).expect("params serialize"));
        }
        "pointer_ruler_phonon" => fill_ruler(obj)?,
        "combined" => {
            let ruler = obj.get_mut("ruler").and_then(Value::as_object_mut).ok_or("scenario.ruler is required")?;
            fill_ruler(ruler)?;
            let bath = obj.get_mut("bath").and_then(Value::as_object_mut).ok_or("scenario.bath is required")?;
            let n_env = get_usize(bath, "n_env", 4)?;
            let lambda = bath.get("lambda").and_then(Value::as_f64).ok_or("scenario.bath.lambda is required")?;
            let base = BathCoupling { n_env, lambda, e_energies: irregular_levels(n_env, 3.0), seed };
            overlay(bath, serde_json::to_value(base).expect("params serialize"));
        }
        other => return Err(format!("unknown model '{other}' (expected pointer_bath, pointer_ruler_phonon or combined)")),
    }
    Ok(())
}

/// A drift study needs a nonzero hidden density; use a seeded rank-2 one
/// unless the config names its own.
fn default_hidden(scenario: &mut Value, seed: u64) {
    let target = match scenario.get("model").and_then(Value::as_str) {
        Some("combined") => scenario.get_mut("ruler"),
        _ => Some(scenario),
    };
    if let Some(Value::Object(obj)) = target {
        overlay(obj, json!({ "hidden": { "rank": 2, "scale": 0.1, "seed": seed } }));
    }
}

fn fill_ruler(obj: &mut Map<String, Value>) -> Result<(), String> {
    let lambda = match obj.get("lambda") {
        Some(Value::Number(n)) => Complex64::new(n.as_f64().unwrap_or(f64::NAN), 0.0),
        Some(Value::Array(a)) if a.len() == 2 => Complex64::new(a[0].as_f64().unwrap_or(f64::NAN), a[1].as_f64().unwrap_or(f64::NAN)),
        _ => return Err("lambda is required: a number or [re, im]".into()),
    };
    obj.insert("lambda".into(), serde_json::to_value(lambda).expect("complex serializes"));
    overlay(obj, serde_json::to_value(PointerRulerParams::standard(lambda)).expect("params serialize"));
    Ok(())
}

fn get_usize(obj: &Map<String, Value>, key: &str, default: usize) -> Result<usize, String> {
    match obj.get(key) {
        None => Ok(default),
        Some(v) => v.as_u64().map(|x| x as usize).ok_or_else(|| format!("{key} must be a non-negative integer")),
    }
}

/// Inserts every key of `defaults` that `obj` does not set; explicit nulls
/// count as unset.
fn overlay(obj: &mut Map<String, Value>, defaults: Value) {
    if let Value::Object(d) = defaults {
        for (k, v) in d {
            match obj.get(&k) {
                Some(x) if !x.is_null() => {}
                _ => {
                    obj.insert(k, v);
                }
            }
        }
    }
}
