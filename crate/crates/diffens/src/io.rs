//! CSV ingestion and emission: datasets in, samples and diagnostics out.

use std::path::Path;

use anyhow::{bail, Context, Result};

use diffens_core::dataset::Dataset;
use diffens_core::linalg::Matrix;
use diffens_core::sampler::StepDiagnostics;

/// Read a numeric CSV with a mandatory header row into a [`Dataset`].
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .context("reading CSV header")?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.is_empty() {
        bail!("{}: empty header row", path.display());
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading row {}", i + 2))?;
        if record.len() != headers.len() {
            bail!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 2,
                record.len(),
                headers.len()
            );
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().with_context(|| {
                    format!(
                        "{}: row {}, column '{}': non-numeric value '{field}'",
                        path.display(),
                        i + 2,
                        headers[j]
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let matrix = Matrix::from_rows(&rows).map_err(crate::config::into_anyhow)?;
    Dataset::new(matrix, headers).map_err(crate::config::into_anyhow)
}

/// Write a sample matrix as CSV with the given header (one row per sample).
pub fn write_matrix_csv(path: &Path, header: &[String], data: &Matrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(header)?;
    for row in data.iter_rows() {
        writer.write_record(row.iter().map(|v| format_float(*v)))?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-step diagnostics CSV: step, t, score-std, score-mean-norm.
pub fn write_diagnostics_csv(path: &Path, diag: &[StepDiagnostics]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(["step", "t", "score_std", "score_mean_norm"])?;
    for d in diag {
        writer.write_record([
            d.step.to_string(),
            format_float(d.t),
            format_float(d.score_std),
            format_float(d.score_mean_norm),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest round-trippable decimal form.
pub fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json's float formatting is shortest-round-trip
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trips_through_csv() {
        let dir = std::env::temp_dir().join("diffens-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("toy.csv");
        std::fs::write(&path, "a,b\n1.5,2\n-0.25,4\n3,6\n").unwrap();
        let ds = read_dataset(&path).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.feature_names(), ["a".to_string(), "b".to_string()]);
        assert_eq!(ds.points().get(1, 0), -0.25);

        let out = dir.join("echo.csv");
        write_matrix_csv(&out, &ds.feature_names().to_vec(), ds.points()).unwrap();
        let back = read_dataset(&out).unwrap();
        assert_eq!(back.points(), ds.points());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let dir = std::env::temp_dir().join("diffens-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n3\n").unwrap();
        assert!(read_dataset(&path).is_err());
        std::fs::write(&path, "a,b\n1,apple\n").unwrap();
        assert!(read_dataset(&path).is_err());
    }
}
