//! Versioned JSON files: system specifications, polytopes and reports.
//!
//! Every file carries `"schema": 1`. A system specification is one of
//!
//! - explicit matrices: `{"schema": 1, "A": …, "B": …, "E": …, "D": {…}, "S_xu": {…}}`
//! - the scalar example: `{"schema": 1, "scalar": {"a": 2, "x_bar": 10, "u_bar": 1, "d_bar": 0.5}}`
//! - the planar random example: `{"schema": 1, "random_2d": {"seed": 0}}`
//! - a template: `{"schema": 1, "template": "biped", "params": {…}}`

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{build_1d, build_2d_random_with, build_template, Provenance, Random2dOptions, TemplateName, TemplateParams};
use crate::systems::LinearSystem;

pub const SCHEMA_VERSION: u32 = 1;

/// `{"schema": 1, …payload}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self { schema: SCHEMA_VERSION, body }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSpec {
    pub a: f64,
    pub x_bar: f64,
    pub u_bar: f64,
    pub d_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Random2dSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub facets: Option<usize>,
    #[serde(default)]
    pub u_max: Option<f64>,
}

#[derive(Deserialize)]
struct ExplicitFile {
    #[allow(dead_code)]
    schema: u32,
    #[serde(flatten)]
    system: LinearSystem,
    #[serde(default)]
    #[allow(dead_code)]
    name: Option<String>,
    #[serde(default)]
    #[allow(dead_code)]
    provenance: Option<Provenance>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalarFile {
    #[allow(dead_code)]
    schema: u32,
    scalar: ScalarSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomFile {
    #[allow(dead_code)]
    schema: u32,
    random_2d: Random2dSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    #[allow(dead_code)]
    schema: u32,
    template: TemplateName,
    #[serde(default)]
    params: TemplateParams,
}

/// A parsed system together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub system: LinearSystem,
    pub scalar: Option<ScalarSpec>,
    pub random: Option<Random2dSpec>,
    pub provenance: Option<Provenance>,
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("line {}, column {}: {e}", e.line(), e.column())))
}

fn check_schema(v: &serde_json::Value) -> Result<()> {
    match v.get("schema").and_then(|s| s.as_u64()) {
        Some(1) => Ok(()),
        Some(other) => Err(Error::InvalidInput(format!("unsupported schema version {other}"))),
        None => Err(Error::InvalidInput("missing \"schema\": 1".into())),
    }
}

/// Parses a system specification; `seed` overrides the seed of a random
/// example.
pub fn parse_system(text: &str, seed: Option<u64>) -> Result<LoadedSystem> {
    let v: serde_json::Value = parse(text)?;
    check_schema(&v)?;
    let has = |k: &str| v.get(k).is_some();
    if has("scalar") {
        let f: ScalarFile = parse(text)?;
        let s = f.scalar;
        let (system, _) = build_1d(s.a, s.x_bar, s.u_bar, s.d_bar)?;
        Ok(LoadedSystem { system, scalar: Some(s), random: None, provenance: None })
    } else if has("random_2d") {
        let f: RandomFile = parse(text)?;
        let mut r = f.random_2d;
        if let Some(s) = seed {
            r.seed = s;
        }
        let mut opts = Random2dOptions::default();
        if let Some(k) = r.facets {
            opts.facets = k;
        }
        if let Some(u) = r.u_max {
            opts.u_max = u;
        }
        Ok(LoadedSystem { system: build_2d_random_with(r.seed, &opts), scalar: None, random: Some(r), provenance: None })
    } else if has("template") {
        let f: TemplateFile = parse(text)?;
        let t = build_template(f.template, &f.params)?;
        Ok(LoadedSystem { system: t.system, scalar: None, random: None, provenance: Some(t.provenance) })
    } else {
        let f: ExplicitFile = parse(text)?;
        f.system.validate()?;
        Ok(LoadedSystem { system: f.system, scalar: None, random: None, provenance: f.provenance })
    }
}

pub fn read_system(path: &std::path::Path, seed: Option<u64>) -> Result<LoadedSystem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_system(&text, seed)
}

/// Reads `{"schema": 1, …}` into `T`.
pub fn read_versioned<T: DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = parse(&text)?;
    check_schema(&v)?;
    let w: Versioned<T> = parse(&text)?;
    Ok(w.body)
}

pub fn write_versioned<T: Serialize>(path: &std::path::Path, body: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Versioned::new(body))
        .map_err(|e| Error::Numerical(format!("serialisation failed: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}
