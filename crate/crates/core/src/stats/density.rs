use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DENSITY_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `h = σ̂ · n^(-1/5)` with the unbiased sample standard deviation.
    #[default]
    Scott,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub bandwidth: f64,
    pub points: Vec<(f64, f64)>,
}

impl DensityCurve {
    pub fn trapezoid_integral(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density"])?;
        for (x, y) in &self.points {
            w.write_record([format!("{x}"), format!("{y}")])?;
        }
        w.flush()
    }
}

pub fn scott_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() * n.powf(-0.2)
}

/// Gaussian kernel density on [`DENSITY_POINTS`] evenly spaced points over
/// `[min - 3h, max + 3h]`.
pub fn density_export(values: &[f64], bandwidth: Bandwidth) -> Result<DensityCurve> {
    if values.len() < 2 {
        return Err(Error::TooFew {
            what: "values for a density estimate",
            needed: 2,
            got: values.len(),
        });
    }
    let h = match bandwidth {
        Bandwidth::Scott => scott_bandwidth(values),
        Bandwidth::Fixed(h) => h,
    };
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {h} (zero-variance sample?)"
        )));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (DENSITY_POINTS - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * PI).sqrt());
    let points = (0..DENSITY_POINTS)
        .map(|k| {
            let x = lo + k as f64 * step;
            let y = values
                .iter()
                .map(|v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum::<f64>()
                * norm;
            (x, y)
        })
        .collect();
    Ok(DensityCurve { bandwidth: h, points })
}
