//! Resolved run configuration. Everything a report depends on lives here,
//! with charts and frames inlined, so a report can be replayed from its
//! embedded copy.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use macrograv_core::catalog::{builtin_chart, catalog_frame, sample_domain, CHART_NAMES};
use macrograv_core::chart::{ChartSpec, Signature, TensorFieldSpec, Valence};
use macrograv_core::frames::FrameField;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDef {
    pub name: String,
    pub coordinates: Vec<String>,
    /// Full metric matrix. Files may give `diagonal` instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<Vec<String>>,
    pub signature: String,
    /// Sampling box, taken from the catalog when the chart is built in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_box: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDef {
    pub label: String,
    pub rows: Vec<Vec<String>>,
    /// Catalog chart name or inline chart; only read from frame files.
    #[serde(default, skip_serializing)]
    pub chart: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ValenceName {
    Scalar,
    Vector,
    Covector,
    Mixed,
}

impl From<ValenceName> for Valence {
    fn from(v: ValenceName) -> Valence {
        match v {
            ValenceName::Scalar => Valence::Scalar,
            ValenceName::Vector => Valence::Vector,
            ValenceName::Covector => Valence::Covector,
            ValenceName::Mixed => Valence::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    Gauss,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    Average,
    Drag,
    ProperCoords,
    Factorize,
}

/// Subcommand parameters; unused ones stay `None` and are not written.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency: Option<IdempotencyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_value: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub determinant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine_with: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdempotencyParams {
    pub lambda: f64,
    pub macro_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub chart: ChartDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameDef>,
    #[serde(default)]
    pub fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<ValenceName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub format: Format,
    #[serde(default)]
    pub params: Params,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {what} file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("cannot parse {what} file {}: {e}", path.display())))
}

fn catalog_chart_def(name: &str) -> Result<ChartDef, CliError> {
    let chart = builtin_chart(name).map_err(CliError::from_core)?;
    let mut def = chart_def_of(&chart);
    def.sample_box = Some(sample_domain(name).map_err(CliError::from_core)?.iter().map(|&(a, b)| [a, b]).collect());
    Ok(def)
}

pub fn chart_def_of(chart: &ChartSpec) -> ChartDef {
    let n = chart.dimension();
    ChartDef {
        name: chart.name().to_string(),
        coordinates: chart.coordinate_names().to_vec(),
        metric: Some(
            (0..n)
                .map(|i| (0..n).map(|j| chart.metric_entry(i, j).source().to_string()).collect())
                .collect(),
        ),
        diagonal: None,
        signature: chart.signature().as_str().to_string(),
        sample_box: None,
    }
}

/// Fills in a full metric so the resolved form is unique.
fn normalize_chart(mut def: ChartDef) -> Result<ChartDef, CliError> {
    if def.metric.is_none() {
        let diag = def
            .diagonal
            .take()
            .ok_or_else(|| CliError::Config(format!("chart `{}` needs `metric` or `diagonal`", def.name)))?;
        let n = diag.len();
        def.metric = Some(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { diag[i].clone() } else { "0".to_string() }).collect())
                .collect(),
        );
    }
    def.diagonal = None;
    Ok(def)
}

fn chart_from_value(v: &serde_json::Value) -> Result<ChartDef, CliError> {
    match v {
        serde_json::Value::String(name) => catalog_chart_def(name),
        other => normalize_chart(
            serde_json::from_value(other.clone()).map_err(|e| CliError::Config(format!("bad inline chart: {e}")))?,
        ),
    }
}

/// `--chart`: a catalog name or a JSON chart file.
pub fn resolve_chart(source: &str) -> Result<ChartDef, CliError> {
    if CHART_NAMES.contains(&source) {
        return catalog_chart_def(source);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(CliError::Config(format!("`{source}` is neither a catalog chart nor an existing file")));
    }
    normalize_chart(read_json(path, "chart")?)
}

/// `--frame`: a catalog name or a JSON frame file. Returns the frame and the
/// chart it declares, if any.
pub fn resolve_frame(source: &str) -> Result<(FrameDef, Option<ChartDef>), CliError> {
    if let Ok(entry) = catalog_frame(source) {
        let def = FrameDef {
            label: entry.name.to_string(),
            rows: entry.rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
            chart: None,
        };
        return Ok((def, Some(catalog_chart_def(entry.chart)?)));
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(CliError::Config(format!("`{source}` is neither a catalog frame nor an existing file")));
    }
    let mut def: FrameDef = read_json(path, "frame")?;
    let chart = def.chart.take().map(|v| chart_from_value(&v)).transpose()?;
    Ok((def, chart))
}

pub fn build_chart(def: &ChartDef) -> Result<Arc<ChartSpec>, CliError> {
    let sig = Signature::from_name(&def.signature)
        .ok_or_else(|| CliError::Config(format!("unknown signature `{}`", def.signature)))?;
    let metric = def
        .metric
        .as_ref()
        .ok_or_else(|| CliError::Config("chart has no metric".into()))?;
    Ok(Arc::new(
        ChartSpec::new(&def.name, &def.coordinates, metric, sig).map_err(CliError::from_core)?,
    ))
}

pub fn build_frame(def: &FrameDef, chart: Arc<ChartSpec>) -> Result<FrameField, CliError> {
    FrameField::parse(chart, &def.rows, &def.label).map_err(CliError::from_core)
}

/// `c0:c1,h0:h1,nodes`.
pub fn parse_region(text: &str) -> Result<RegionSpec, CliError> {
    let bad = || CliError::Config(format!("bad --region `{text}`, expected c0:c1,h0:h1,nodes"));
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let center = parse_list(parts[0], ':').map_err(|_| bad())?;
    let half_widths = parse_list(parts[1], ':').map_err(|_| bad())?;
    let nodes = parts[2].trim().parse().map_err(|_| bad())?;
    if center.len() != half_widths.len() {
        return Err(bad());
    }
    Ok(RegionSpec {
        center,
        half_widths,
        nodes,
    })
}

pub fn parse_list(text: &str, sep: char) -> Result<Vec<f64>, CliError> {
    text.split(sep)
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("`{s}` is not a number")))
        })
        .collect()
}

/// Merges `NAME=VALUE` overrides into the defaults of one subcommand.
pub fn tolerances(defaults: &[(&str, f64)], overrides: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for item in overrides {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("bad --tol `{item}`, expected NAME=VALUE")))?;
        let slot = out
            .get_mut(name)
            .ok_or_else(|| CliError::Config(format!("unknown tolerance `{name}`")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| CliError::Config(format!("tolerance `{name}` is not a number")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("tolerance `{name}` must be positive")));
        }
        *slot = v;
    }
    Ok(out)
}

impl RunConfig {
    pub fn chart(&self) -> Result<Arc<ChartSpec>, CliError> {
        build_chart(&self.chart)
    }

    /// The configured frame, or the coordinate frame of the chart.
    pub fn frame(&self) -> Result<FrameField, CliError> {
        let chart = self.chart()?;
        match &self.frame {
            Some(def) => build_frame(def, chart),
            None => Ok(FrameField::coordinate(chart)),
        }
    }

    pub fn require_frame(&self) -> Result<FrameField, CliError> {
        if self.frame.is_none() {
            return Err(CliError::Config("this subcommand needs --frame".into()));
        }
        self.frame()
    }

    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    pub fn dimension(&self) -> usize {
        self.chart.coordinates.len()
    }

    /// Coordinate box used for random sampling and default regions.
    pub fn sampling_box(&self) -> Result<Vec<[f64; 2]>, CliError> {
        if let Some(r) = &self.region {
            return Ok(r.center.iter().zip(&r.half_widths).map(|(c, h)| [c - h, c + h]).collect());
        }
        self.chart
            .sample_box
            .clone()
            .ok_or_else(|| CliError::Config("chart has no sampling box; pass --region".into()))
    }

    /// `--region`, or a box around the middle of the sampling box.
    pub fn region_or_default(&self) -> Result<RegionSpec, CliError> {
        if let Some(r) = &self.region {
            return Ok(r.clone());
        }
        let b = self.sampling_box()?;
        Ok(RegionSpec {
            center: b.iter().map(|[a, c]| 0.5 * (a + c)).collect(),
            half_widths: b.iter().map(|[a, c]| 0.1 * (c - a)).collect(),
            nodes: if b.len() >= 4 { 4 } else { 5 },
        })
    }

    /// The tensor field from `--field`, with the valence inferred from the
    /// component count unless given.
    pub fn field(&self, chart: &ChartSpec) -> Result<TensorFieldSpec, CliError> {
        let n = chart.dimension();
        if self.fields.is_empty() {
            return Err(CliError::Config("no --field given".into()));
        }
        let valence = match self.valence {
            Some(v) => Valence::from(v),
            None => match self.fields.len() {
                1 => Valence::Scalar,
                k if k == n => Valence::Vector,
                k if k == n * n => Valence::Mixed,
                k => return Err(CliError::Config(format!("cannot infer a valence from {k} components"))),
            },
        };
        TensorFieldSpec::parse(chart, valence, &self.fields).map_err(CliError::from_core)
    }
}
