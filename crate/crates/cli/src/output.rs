use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::config::{Format, RunConfig};
use crate::CliError;

/// Shortest decimal that reads back to the same double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

pub fn csv_line(cells: &[&str]) -> String {
    let quoted: Vec<String> = cells
        .iter()
        .map(|c| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.to_string()
            }
        })
        .collect();
    quoted.join(",") + "\n"
}

pub struct Output {
    pub text: String,
}

impl Output {
    pub fn render(cfg: &RunConfig, body: Value, csv: String, pass: bool) -> Result<Output, CliError> {
        let text = match cfg.format {
            Format::Csv => csv,
            Format::Json => {
                let mut report = serde_json::Map::new();
                report.insert("tool".into(), Value::from("macrograv"));
                report.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
                report.insert(
                    "config".into(),
                    serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?,
                );
                report.insert("overall_pass".into(), Value::from(pass));
                if let Value::Object(map) = body {
                    for (k, v) in map {
                        report.insert(k, v);
                    }
                }
                serde_json::to_string_pretty(&Value::Object(report)).map_err(|e| CliError::Config(e.to_string()))? + "\n"
            }
        };
        Ok(Output { text })
    }

    pub fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        match out {
            Some(path) => fs::write(path, &self.text)
                .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
            None => std::io::stdout()
                .write_all(self.text.as_bytes())
                .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.5), "0.5");
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_line(&["a", "b,c", "d\"e"]), "a,\"b,c\",\"d\"\"e\"\n");
    }
}
