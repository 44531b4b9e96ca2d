//! Built-in charts and frames with known properties.
//!
//! All catalog charts use coordinates `x0, x1, ...`.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{ChartSpec, Signature};
use crate::error::{Error, Result};
use crate::frames::FrameField;

pub const CHART_NAMES: &[&str] = &["minkowski2", "minkowski4", "polar2", "exp2", "friedmann-flat-toy"];

fn coords(n: usize) -> Vec<alloc::string::String> {
    (0..n).map(|i| alloc::format!("x{i}")).collect()
}

pub fn builtin_chart(name: &str) -> Result<ChartSpec> {
    let chart = match name {
        "minkowski2" => ChartSpec::diagonal(name, &coords(2), &["-1", "1"], Signature::Lorentzian),
        "minkowski4" => ChartSpec::diagonal(name, &coords(4), &["-1", "1", "1", "1"], Signature::Lorentzian),
        "polar2" => ChartSpec::diagonal(name, &coords(2), &["1", "x0^2"], Signature::Riemannian),
        "exp2" => ChartSpec::diagonal(name, &coords(2), &["1", "exp(2*x0)"], Signature::Riemannian),
        // spatially flat dust-like scale factor a(t) = t^(2/3)
        "friedmann-flat-toy" => {
            let a2 = "x0^(4/3)";
            ChartSpec::diagonal(name, &coords(4), &["-1", a2, a2, a2], Signature::Lorentzian)
        }
        _ => return Err(Error::UnknownCatalogName(name.to_string())),
    };
    Ok(chart.expect("catalog charts are well formed"))
}

/// A coordinate box on which the catalog chart is regular, used for
/// random sampling.
pub fn sample_domain(chart_name: &str) -> Result<Vec<(f64, f64)>> {
    Ok(match chart_name {
        "minkowski2" => vec![(-2.0, 2.0); 2],
        "minkowski4" => vec![(-2.0, 2.0); 4],
        "polar2" => vec![(0.5, 2.5), (-1.5, 1.5)],
        "exp2" => vec![(-1.0, 1.0), (-1.0, 1.0)],
        "friedmann-flat-toy" => vec![(0.5, 2.0), (-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)],
        _ => return Err(Error::UnknownCatalogName(chart_name.to_string())),
    })
}

/// What a catalog frame is known to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameTraits {
    pub constant_anholonomicity: bool,
    pub holonomic: bool,
    pub divergence_free: bool,
}

pub struct CatalogFrame {
    pub name: &'static str,
    pub chart: &'static str,
    pub rows: &'static [&'static [&'static str]],
    pub traits: FrameTraits,
}

const fn traits(constant_anholonomicity: bool, holonomic: bool, divergence_free: bool) -> FrameTraits {
    FrameTraits {
        constant_anholonomicity,
        holonomic,
        divergence_free,
    }
}

pub const FRAMES: &[CatalogFrame] = &[
    CatalogFrame {
        name: "minkowski2-coordinate",
        chart: "minkowski2",
        rows: &[&["1", "0"], &["0", "1"]],
        traits: traits(true, true, true),
    },
    CatalogFrame {
        name: "minkowski2-exp",
        chart: "minkowski2",
        rows: &[&["1", "0"], &["0", "exp(x0)"]],
        traits: traits(true, false, false),
    },
    CatalogFrame {
        name: "minkowski2-polar-basis",
        chart: "minkowski2",
        rows: &[&["x0/sqrt(x0^2 + x1^2)", "x1/sqrt(x0^2 + x1^2)"], &["-x1", "x0"]],
        traits: traits(true, true, false),
    },
    CatalogFrame {
        name: "minkowski4-coordinate",
        chart: "minkowski4",
        rows: &[&["1", "0", "0", "0"], &["0", "1", "0", "0"], &["0", "0", "1", "0"], &["0", "0", "0", "1"]],
        traits: traits(true, true, true),
    },
    CatalogFrame {
        name: "minkowski4-heisenberg",
        chart: "minkowski4",
        rows: &[&["1", "0", "0", "0"], &["0", "1", "0", "0"], &["0", "0", "1", "x1"], &["0", "0", "0", "1"]],
        traits: traits(true, false, true),
    },
    CatalogFrame {
        name: "polar2-coordinate",
        chart: "polar2",
        rows: &[&["1", "0"], &["0", "1"]],
        traits: traits(true, true, false),
    },
    CatalogFrame {
        name: "polar2-divfree",
        chart: "polar2",
        rows: &[&["1/x0", "0"], &["0", "1"]],
        traits: traits(true, true, true),
    },
    CatalogFrame {
        name: "polar2-exp",
        chart: "polar2",
        rows: &[&["1", "0"], &["0", "exp(x0)"]],
        traits: traits(true, false, false),
    },
    CatalogFrame {
        name: "polar2-nonconst",
        chart: "polar2",
        rows: &[&["1", "0"], &["0", "x0"]],
        traits: traits(false, false, false),
    },
    CatalogFrame {
        name: "exp2-coordinate",
        chart: "exp2",
        rows: &[&["1", "0"], &["0", "1"]],
        traits: traits(true, true, false),
    },
    CatalogFrame {
        name: "exp2-divfree",
        chart: "exp2",
        rows: &[&["exp(-x0)", "0"], &["0", "1"]],
        traits: traits(true, true, true),
    },
    CatalogFrame {
        name: "exp2-exp",
        chart: "exp2",
        rows: &[&["1", "0"], &["0", "exp(x0)"]],
        traits: traits(true, false, false),
    },
    CatalogFrame {
        name: "friedmann-flat-toy-coordinate",
        chart: "friedmann-flat-toy",
        rows: &[&["1", "0", "0", "0"], &["0", "1", "0", "0"], &["0", "0", "1", "0"], &["0", "0", "0", "1"]],
        traits: traits(true, true, false),
    },
];

pub fn catalog_frame(name: &str) -> Result<&'static CatalogFrame> {
    FRAMES
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::UnknownCatalogName(name.to_string()))
}

/// Instantiates a catalog frame on its own catalog chart.
pub fn builtin_frame(name: &str) -> Result<FrameField> {
    let entry = catalog_frame(name)?;
    let chart = Arc::new(builtin_chart(entry.chart)?);
    frame_on(entry, chart)
}

/// Instantiates a catalog frame on an already constructed chart.
pub fn frame_on(entry: &CatalogFrame, chart: Arc<ChartSpec>) -> Result<FrameField> {
    let rows: Vec<Vec<&str>> = entry.rows.iter().map(|r| r.to_vec()).collect();
    FrameField::parse(chart, &rows, entry.name)
}
