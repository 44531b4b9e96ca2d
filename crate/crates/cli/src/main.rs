use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{
    parse_list, parse_region, resolve_chart, resolve_frame, tolerances, Command, Format, IdempotencyParams, Params,
    RuleName, RunConfig, ValenceName,
};
use output::Output;

#[derive(Debug, Clone)]
pub enum CliError {
    /// Bad flags, files or definitions. Exit code 2.
    Config(String),
    /// A computation failed or a check did not pass. Exit code 1.
    Numerical(String),
}

impl CliError {
    pub fn from_core(e: macrograv_core::Error) -> CliError {
        use macrograv_core::Error as E;
        match e {
            E::Syntax { .. }
            | E::UnknownIdentifier(_)
            | E::InvalidCoordinateName(_)
            | E::DimensionMismatch { .. }
            | E::InvalidDimension(_)
            | E::AsymmetricMetric { .. }
            | E::UnknownCatalogName(_)
            | E::UnsupportedValence { .. }
            | E::NonPositiveExtent
            | E::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "macrograv", version, about = "Covariant averaging of tensor fields on coordinate charts")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Catalog chart name or JSON chart file.
    #[arg(long)]
    chart: Option<String>,
    /// Catalog frame name or JSON frame file.
    #[arg(long)]
    frame: Option<String>,
    /// Field component expression, repeated once per component.
    #[arg(long = "field", allow_hyphen_values = true)]
    fields: Vec<String>,
    /// Field valence; inferred from the component count when omitted.
    #[arg(long, value_enum)]
    valence: Option<ValenceName>,
    /// Coordinate box `c0:c1,h0:h1,nodes` (center, half widths, nodes per axis).
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    /// Tolerance override `NAME=VALUE`.
    #[arg(long = "tol")]
    tol: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the invariant battery for a chart and coordination frame.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random points for the operator identities.
        #[arg(long, default_value_t = 202)]
        samples: usize,
    },
    /// Average a tensor field over a coordinate box.
    Average {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "gauss")]
        rule: RuleName,
        /// Run the averaging-idempotency ladder instead.
        #[arg(long)]
        idempotency: bool,
        /// Micro length scale of the idempotency experiment.
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        /// Macro length scale the ladder widths are measured in.
        #[arg(long, default_value_t = 1.0)]
        macro_scale: f64,
    },
    /// Lie-drag a box region along a shift field.
    Drag {
        #[command(flatten)]
        common: Common,
        /// Direction component at the supporting point; defaults to the first frame vector.
        #[arg(long, allow_hyphen_values = true)]
        xi: Vec<String>,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value_t = 64)]
        steps: usize,
    },
    /// Build and certify volume-preserving proper coordinates.
    ProperCoords {
        #[command(flatten)]
        common: Common,
        /// Grid points per axis over the region box.
        #[arg(long, default_value_t = 20)]
        grid: usize,
        #[arg(long, allow_hyphen_values = true)]
        base_point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        base_value: Option<String>,
        /// Given coordinate y2..yn for the completion construction.
        #[arg(long, allow_hyphen_values = true)]
        partial: Vec<String>,
        /// Target Jacobian determinant of the completion.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        det: f64,
        /// Values of y1 on the seed hyperplane.
        #[arg(long, allow_hyphen_values = true)]
        seed_values: Option<String>,
        /// Second map, one expression per component, for the affine check.
        #[arg(long, allow_hyphen_values = true)]
        affine_with: Vec<String>,
    },
    /// Test whether a two-point matrix function factorizes as F(x') F(x)^-1.
    Factorize {
        #[command(flatten)]
        common: Common,
        /// Row-major entry of W(x', x); x' coordinates carry a trailing `p`.
        #[arg(long, allow_hyphen_values = true)]
        entry: Vec<String>,
        #[arg(long, default_value_t = 12)]
        probes: usize,
        #[arg(long, allow_hyphen_values = true)]
        base_point: Option<String>,
    },
    /// Re-run the configuration embedded in a JSON report.
    Rerun {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn seed_from_env() -> Result<u64, CliError> {
    match std::env::var("MACROGRAV_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("MACROGRAV_SEED `{s}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn resolve(command: Command, common: &Common, params: Params) -> Result<RunConfig, CliError> {
    let (frame, frame_chart) = match &common.frame {
        Some(f) => {
            let (def, chart) = resolve_frame(f)?;
            (Some(def), chart)
        }
        None => (None, None),
    };
    let chart = match (&common.chart, frame_chart) {
        (Some(c), _) => resolve_chart(c)?,
        (None, Some(c)) => c,
        (None, None) => return Err(CliError::Config("pass --chart or a frame that names its chart".into())),
    };
    let defaults: &[(&str, f64)] = match command {
        Command::Verify => commands::VERIFY_TOLERANCES,
        Command::ProperCoords => commands::PROPER_TOLERANCES,
        Command::Factorize => commands::FACTORIZE_TOLERANCES,
        Command::Average | Command::Drag => &[],
    };
    let region = common.region.as_deref().map(parse_region).transpose()?;
    let mut cfg = RunConfig {
        command,
        seed: seed_from_env()?,
        chart,
        frame,
        fields: common.fields.clone(),
        valence: common.valence,
        region,
        tolerances: tolerances(defaults, &common.tol)?,
        format: common.format,
        params,
    };
    let n = cfg.dimension();
    if let Some(r) = &cfg.region {
        if r.center.len() != n {
            return Err(CliError::Config(format!("--region has {} coordinates, chart has {n}", r.center.len())));
        }
    }
    if cfg.command == Command::Verify && cfg.fields.is_empty() {
        // smooth test scalar for the averaging checks
        let names = &cfg.chart.coordinates;
        let mut src = format!("sin({})", names[0]);
        if n > 1 {
            src += &format!(" + {}*cos({})", names[0], names[1]);
        }
        cfg.fields = vec![src];
    }
    if cfg.command == Command::Drag && cfg.params.xi.is_none() {
        cfg.params.xi = Some(match &cfg.frame {
            Some(f) => f.rows[0].clone(),
            None => (0..n).map(|k| if k == 0 { "1".to_string() } else { "0".to_string() }).collect(),
        });
    }
    // build once so definition errors surface as configuration errors
    let chart = cfg.chart()?;
    if let Some(def) = &cfg.frame {
        config::build_frame(def, chart.clone())?;
    }
    if !cfg.fields.is_empty() {
        cfg.field(&chart)?;
    }
    Ok(cfg)
}

fn point_arg(text: &Option<String>) -> Result<Option<Vec<f64>>, CliError> {
    text.as_deref().map(|t| parse_list(t, ',')).transpose()
}

fn non_empty(v: &[String]) -> Option<Vec<String>> {
    if v.is_empty() {
        None
    } else {
        Some(v.to_vec())
    }
}

fn configure(cmd: Cmd) -> Result<(RunConfig, Option<PathBuf>), CliError> {
    let (cfg, out) = match cmd {
        Cmd::Verify { common, samples } => {
            let p = Params {
                samples: Some(samples),
                ..Params::default()
            };
            (resolve(Command::Verify, &common, p)?, common.out)
        }
        Cmd::Average {
            common,
            rule,
            idempotency,
            lambda,
            macro_scale,
        } => {
            let p = Params {
                rule: Some(rule),
                idempotency: idempotency.then_some(IdempotencyParams { lambda, macro_scale }),
                ..Params::default()
            };
            (resolve(Command::Average, &common, p)?, common.out)
        }
        Cmd::Drag {
            common,
            xi,
            lambda,
            steps,
        } => {
            let p = Params {
                xi: non_empty(&xi),
                lambda: Some(lambda),
                steps: Some(steps),
                ..Params::default()
            };
            (resolve(Command::Drag, &common, p)?, common.out)
        }
        Cmd::ProperCoords {
            common,
            grid,
            base_point,
            base_value,
            partial,
            det,
            seed_values,
            affine_with,
        } => {
            let completion = !partial.is_empty();
            let p = Params {
                grid: Some(grid),
                base_point: point_arg(&base_point)?,
                base_value: point_arg(&base_value)?,
                partial: non_empty(&partial),
                determinant: completion.then_some(det),
                seed_expr: seed_values,
                affine_with: non_empty(&affine_with),
                ..Params::default()
            };
            (resolve(Command::ProperCoords, &common, p)?, common.out)
        }
        Cmd::Factorize {
            common,
            entry,
            probes,
            base_point,
        } => {
            let p = Params {
                entries: non_empty(&entry),
                probes: Some(probes),
                base_point: point_arg(&base_point)?,
                ..Params::default()
            };
            (resolve(Command::Factorize, &common, p)?, common.out)
        }
        Cmd::Rerun { report, out } => (embedded_config(&report)?, out),
    };
    Ok((cfg, out))
}

fn embedded_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let report: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))?;
    let cfg = report
        .get("config")
        .ok_or_else(|| CliError::Config(format!("{} has no embedded config", path.display())))?;
    serde_json::from_value(cfg.clone()).map_err(|e| CliError::Config(format!("bad embedded config: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure(cli.command).and_then(|(cfg, out)| {
        let outcome = commands::run(&cfg)?;
        Output::render(&cfg, outcome.body, outcome.csv, outcome.pass)?.write(out.as_deref())?;
        Ok(outcome.pass)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("macrograv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
