//! CSV ingestion: header-based column selection, numeric parsing, and
//! silent dropping of rows with missing selected values (counted in the
//! report).

use serde::{Deserialize, Serialize};

use cvboot::{Dataset, OutcomeKind};

use crate::errors::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub feature_columns: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Read a headered CSV into a dataset. `features = None` selects every
/// column other than the outcome and treatment.
pub fn ingest_csv(
    path: &str,
    outcome: &str,
    treatment: Option<&str>,
    features: Option<&[String]>,
    outcome_kind: OutcomeKind,
) -> CliResult<(Dataset, IngestSummary)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("cannot open {path}: {e}")))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Io(e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let col = |name: &str| -> CliResult<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let outcome_idx = col(outcome)?;
    let treatment_idx = treatment.map(col).transpose()?;
    let feature_idx: Vec<usize> = match features {
        Some(names) => names
            .iter()
            .map(|n| col(n))
            .collect::<CliResult<Vec<usize>>>()?,
        None => (0..headers.len())
            .filter(|&i| i != outcome_idx && Some(i) != treatment_idx)
            .collect(),
    };
    if feature_idx.is_empty() {
        return Err(CliError::BadArgs("no feature columns selected".into()));
    }
    if feature_idx.contains(&outcome_idx) || treatment_idx.is_some_and(|t| feature_idx.contains(&t))
    {
        return Err(CliError::BadArgs(
            "outcome/treatment columns cannot double as features".into(),
        ));
    }

    let p = feature_idx.len();
    let mut features_data: Vec<f64> = Vec::new();
    let mut outcome_data: Vec<f64> = Vec::new();
    let mut treatment_data: Vec<u8> = Vec::new();
    let mut ids: Vec<u64> = Vec::new();
    let mut dropped = 0usize;

    'rows: for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Io(e.to_string()))?;
        let mut selected: Vec<usize> = feature_idx.clone();
        selected.push(outcome_idx);
        if let Some(t) = treatment_idx {
            selected.push(t);
        }
        for &idx in &selected {
            let cell = record.get(idx).unwrap_or("");
            if is_missing(cell) {
                dropped += 1;
                continue 'rows;
            }
        }
        let parse = |idx: usize| -> CliResult<f64> {
            let cell = record.get(idx).unwrap_or("");
            cell.parse::<f64>().map_err(|_| CliError::NonNumericCell {
                row: row_no + 2, // 1-based, after the header line
                column: headers[idx].clone(),
                value: cell.to_string(),
            })
        };
        let row_start = features_data.len();
        for &idx in &feature_idx {
            features_data.push(parse(idx)?);
        }
        match parse(outcome_idx) {
            Ok(v) => outcome_data.push(v),
            Err(e) => {
                features_data.truncate(row_start);
                return Err(e);
            }
        }
        if let Some(t) = treatment_idx {
            let v = parse(t)?;
            if v != 0.0 && v != 1.0 {
                return Err(CliError::Lib(cvboot::Error::DimensionMismatch(format!(
                    "treatment value {v} at row {} is not 0/1",
                    row_no + 2
                ))));
            }
            treatment_data.push(v as u8);
        }
        ids.push(row_no as u64 + 2);
    }

    if outcome_data.len() < 2 {
        return Err(CliError::EmptyAfterFiltering);
    }
    let dataset = Dataset::new(
        features_data,
        p,
        outcome_data,
        outcome_kind,
        treatment_idx.map(|_| treatment_data),
        Some(ids),
    )?;
    let summary = IngestSummary {
        rows_used: dataset.n(),
        rows_dropped: dropped,
        feature_columns: feature_idx.iter().map(|&i| headers[i].clone()).collect(),
    };
    Ok((dataset, summary))
}
