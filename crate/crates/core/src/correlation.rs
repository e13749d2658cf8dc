//! Pearson correlation between resampled signals and the dissimilarity fed
//! to hierarchical clustering.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SignalMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub signal_ids: Vec<String>,
    pub rho: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix {
    pub signal_ids: Vec<String>,
    pub d: Vec<Vec<f64>>,
}

/// How a correlation coefficient becomes a distance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissimilarityKind {
    /// `1 - |rho|`: anti-correlated signals count as close.
    #[default]
    OneMinusAbsRho,
    /// `(1 - rho) / 2`: sign-sensitive.
    HalfOneMinusRho,
}

impl DissimilarityKind {
    pub fn apply(self, rho: f64) -> f64 {
        match self {
            DissimilarityKind::OneMinusAbsRho => 1.0 - rho.abs(),
            DissimilarityKind::HalfOneMinusRho => (1.0 - rho) / 2.0,
        }
    }
}

impl FromStr for DissimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" | "one_minus_abs_rho" => Ok(DissimilarityKind::OneMinusAbsRho),
            "signed" | "half_one_minus_rho" => Ok(DissimilarityKind::HalfOneMinusRho),
            other => Err(Error::InvalidParameter(format!(
                "unknown dissimilarity {other:?} (expected abs or signed)"
            ))),
        }
    }
}

/// Rows of `m` are centered and unit-norm, so each coefficient is a dot
/// product. Every off-diagonal entry is computed once and mirrored.
pub fn pearson_matrix(m: &SignalMatrix) -> Result<CorrelationMatrix> {
    let n = m.n_signals();
    if n < 2 {
        return Err(Error::TooFew {
            what: "retained signals",
            needed: 2,
            got: n,
        });
    }
    if m.n_samples() < 2 {
        return Err(Error::TooFew {
            what: "grid points",
            needed: 2,
            got: m.n_samples(),
        });
    }

    let mut rho = vec![vec![0.0; n]; n];
    for i in 0..n {
        rho[i][i] = 1.0;
        for j in (i + 1)..n {
            let r: f64 = m.data[i].iter().zip(&m.data[j]).map(|(a, b)| a * b).sum();
            assert!(r.is_finite(), "non-finite correlation between rows {i} and {j}");
            let r = r.clamp(-1.0, 1.0);
            rho[i][j] = r;
            rho[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        signal_ids: m.signal_ids.clone(),
        rho,
    })
}

pub fn to_dissimilarity(c: &CorrelationMatrix, kind: DissimilarityKind) -> DissimilarityMatrix {
    let d = c
        .rho
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &r)| if i == j { 0.0 } else { kind.apply(r) })
                .collect()
        })
        .collect();
    DissimilarityMatrix {
        signal_ids: c.signal_ids.clone(),
        d,
    }
}

/// Square matrix as CSV with a header row and column of signal ids.
pub fn write_matrix_csv<W: Write>(ids: &[String], values: &[Vec<f64>], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(values) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{resample, CaptureLabel, RawSignal, SignalCapture};

    fn matrix_from_rows(rows: &[Vec<f64>]) -> SignalMatrix {
        let signals = rows
            .iter()
            .enumerate()
            .map(|(i, r)| RawSignal {
                signal_id: format!("s{i}"),
                timestamps: (0..r.len()).map(|k| k as f64 * 0.1).collect(),
                values: r.clone(),
            })
            .collect();
        let cap = SignalCapture {
            capture_id: "c".into(),
            signals,
            source_path: String::new(),
            label: CaptureLabel::Benign,
        };
        resample(&cap, 10.0).unwrap()
    }

    fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        let cov = sxy / (n - 1.0);
        cov / ((sxx / (n - 1.0)).sqrt() * (syy / (n - 1.0)).sqrt())
    }

    #[test]
    fn affine_copy_is_perfectly_correlated() {
        let x: Vec<f64> = (0..50).map(|k| ((k * 37) % 17) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        let c = pearson_matrix(&matrix_from_rows(&[x, y, z])).unwrap();
        assert!((c.rho[0][1] - 1.0).abs() < 1e-12);
        assert!((c.rho[0][2] + 1.0).abs() < 1e-12);
        let d = to_dissimilarity(&c, DissimilarityKind::OneMinusAbsRho);
        assert!(d.d[0][1].abs() < 1e-12 && d.d[0][2].abs() < 1e-12);
        let signed = to_dissimilarity(&c, DissimilarityKind::HalfOneMinusRho);
        assert!((signed.d[0][2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_textbook_formula() {
        // Deterministic pseudo-random rows (LCG) so the oracle sees raw data.
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..80).map(|_| next() * 10.0 - 5.0).collect()).collect();
        let c = pearson_matrix(&matrix_from_rows(&rows)).unwrap();
        for i in 0..5 {
            assert_eq!(c.rho[i][i], 1.0);
            for j in 0..5 {
                assert_eq!(c.rho[i][j], c.rho[j][i]);
                if i != j {
                    assert!((c.rho[i][j] - textbook_pearson(&rows[i], &rows[j])).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn dissimilarity_transform_values() {
        let c = CorrelationMatrix {
            signal_ids: vec!["a".into(), "b".into(), "c".into()],
            rho: vec![vec![1.0, -1.0, 0.0], vec![-1.0, 1.0, 0.5], vec![0.0, 0.5, 1.0]],
        };
        let d = to_dissimilarity(&c, DissimilarityKind::OneMinusAbsRho);
        assert_eq!(d.d[0][1], 0.0);
        assert_eq!(d.d[0][2], 1.0);
        assert_eq!(d.d[1][2], 0.5);
        for i in 0..3 {
            assert_eq!(d.d[i][i], 0.0);
            for j in 0..3 {
                if i != j {
                    assert_eq!(d.d[i][j], 1.0 - c.rho[i][j].abs());
                }
            }
        }
    }

    #[test]
    fn single_signal_rejected() {
        let m = matrix_from_rows(&[vec![1.0, 2.0, 4.0]]);
        assert!(matches!(pearson_matrix(&m), Err(Error::TooFew { .. })));
    }

    #[test]
    fn csv_dump_has_labels() {
        let mut buf = Vec::new();
        write_matrix_csv(&["a".into(), "b".into()], &[vec![1.0, 0.5], vec![0.5, 1.0]], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",a,b\na,1,0.5\nb,0.5,1\n");
    }
}
