//! CSV input and dataset output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::CliError;

/// A univariate sensor record.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSeries {
    pub timestamps: Vec<f64>,
    /// NaN marks a missing value.
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
    pub truth: Option<Vec<f64>>,
}

impl SensorSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observations(&self) -> Vec<DVector<f64>> {
        self.values.iter().map(|v| DVector::from_element(1, *v)).collect()
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64, CliError> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .map_err(|_| CliError::Config(format!("row {row}, column '{column}': cannot parse '{s}' as a number")))
}

/// Read a header-labelled CSV. Rows are numbered from 1 after the header.
pub fn ingest_csv(
    path: &Path,
    time_column: &str,
    value_column: &str,
    truth_column: Option<&str>,
) -> Result<SensorSeries, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{}: missing column '{name}'", path.display())))
    };
    let (ti, vi) = (find(time_column)?, find(value_column)?);
    let ri = truth_column.map(find).transpose()?;

    let mut series = SensorSeries {
        timestamps: Vec::new(),
        values: Vec::new(),
        missing: Vec::new(),
        truth: ri.map(|_| Vec::new()),
    };
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| CliError::Config(format!("{}: row {row}: {e}", path.display())))?;
        let t = parse_cell(record.get(ti).unwrap_or(""), row, time_column)?;
        if t.is_nan() {
            return Err(CliError::Config(format!("row {row}: missing timestamp")));
        }
        if let Some(&prev) = series.timestamps.last() {
            if t <= prev {
                return Err(CliError::Config(format!(
                    "row {row}: timestamp {t} does not increase (previous {prev})"
                )));
            }
        }
        let v = parse_cell(record.get(vi).unwrap_or(""), row, value_column)?;
        series.timestamps.push(t);
        series.values.push(v);
        series.missing.push(v.is_nan());
        if let (Some(i), Some(truth)) = (ri, series.truth.as_mut()) {
            truth.push(parse_cell(record.get(i).unwrap_or(""), row, truth_column.unwrap_or_default())?);
        }
    }
    if series.is_empty() {
        return Err(CliError::Config(format!("{}: no data rows", path.display())));
    }
    Ok(series)
}

/// Write `t, x_1.., y_1.., contaminated_flag` with round-trip float formatting.
pub fn write_dataset(
    path: &Path,
    states: &[DVector<f64>],
    observations: &[DVector<f64>],
    flags: &[bool],
) -> Result<(), CliError> {
    let dx = states.first().map_or(0, |v| v.len());
    let dy = observations.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_writer(File::create(path).map_err(|e| CliError::io(path, e))?);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dx).map(|i| format!("x_{i}")));
    header.extend((1..=dy).map(|i| format!("y_{i}")));
    header.push("contaminated_flag".into());
    w.write_record(&header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for (t, ((x, y), f)) in states.iter().zip(observations).zip(flags).enumerate() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        row.extend(y.iter().map(|v| v.to_string()));
        row.push(u8::from(*f).to_string());
        w.write_record(&row).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_rows() {
        let f = write("t,v\n0,1\n1,2\n");
        let s = ingest_csv(f.path(), "t", "v", None).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.values, vec![1.0, 2.0]);
    }

    #[test]
    fn non_monotone_names_the_row() {
        let f = write("t,v\n0,1\n2,2\n1,3\n");
        let e = ingest_csv(f.path(), "t", "v", None).unwrap_err();
        assert!(e.to_string().contains("row 3"), "{e}");
    }

    #[test]
    fn nan_sets_the_mask() {
        let f = write("t,v,truth\n0,1,1.1\n1,NaN,2.2\n2,,3.3\n3,4,4.4\n");
        let s = ingest_csv(f.path(), "t", "v", Some("truth")).unwrap();
        assert_eq!(s.missing, vec![false, true, true, false]);
        assert_eq!(s.truth.unwrap()[2], 3.3);
    }

    #[test]
    fn parse_errors_are_located() {
        let f = write("t,v\n0,1\n1,abc\n");
        let e = ingest_csv(f.path(), "t", "v", None).unwrap_err();
        assert!(e.to_string().contains("row 2") && e.to_string().contains("'v'"));
        let f = write("t,v\n");
        assert!(ingest_csv(f.path(), "t", "v", None).is_err());
        let f = write("time,v\n0,1\n");
        assert!(ingest_csv(f.path(), "t", "v", None).unwrap_err().to_string().contains("'t'"));
    }
}
