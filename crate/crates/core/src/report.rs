//! CSV and JSON report writers.
//!
//! Every JSON report carries `schema_version`; CSV reports are plain tables
//! whose column layout is fixed per report kind.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionRecord;
use crate::data::LabelSet;
use crate::error::{Error, Result};
use crate::metrics::{RankEntry, SetConfusion, SweepRow};
use crate::setpredictors::ComparisonRow;
use crate::SCHEMA_VERSION;

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Header of the prediction CSV for a label set.
pub fn prediction_header(labels: &LabelSet) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend(labels.names().iter().map(|l| format!("p_{l}")));
    h.extend(
        [
            "set",
            "y_pred",
            "confidence",
            "credibility",
            "rejected",
            "alpha",
        ]
        .map(String::from),
    );
    h
}

/// `id, p_<label>…, set, y_pred, confidence, credibility, rejected, alpha`.
/// `set` is pipe-joined label names, empty for a rejection.
pub fn write_predictions<W: Write>(
    records: &[PredictionRecord],
    labels: &LabelSet,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(prediction_header(labels)).map_err(csv_err)?;
    for r in records {
        if r.p_values.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: r.p_values.len(),
                right: labels.len(),
            });
        }
        let mut row = vec![r.id.clone()];
        row.extend(r.p_values.iter().map(|&p| fmt(p)));
        row.push(
            r.prediction_set
                .iter()
                .map(|&k| labels.name(k))
                .collect::<Vec<_>>()
                .join("|"),
        );
        row.push(labels.name(r.point_prediction).to_string());
        row.push(fmt(r.confidence));
        row.push(fmt(r.credibility));
        row.push(r.rejected.to_string());
        row.push(fmt(r.alpha));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// Parses a prediction CSV written by [`write_predictions`] for a known label set.
pub fn read_predictions<R: Read>(reader: R, labels: &LabelSet) -> Result<Vec<PredictionRecord>> {
    let (found, records) = read_predictions_any(reader)?;
    if &found != labels {
        return Err(Error::Csv(format!(
            "prediction labels {} differ from expected {}",
            found.names().join(","),
            labels.names().join(",")
        )));
    }
    Ok(records)
}

/// Parses a prediction CSV, recovering the label set from its `p_<label>` columns.
pub fn read_predictions_any<R: Read>(reader: R) -> Result<(LabelSet, Vec<PredictionRecord>)> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let names: Vec<String> = header
        .iter()
        .skip(1)
        .map_while(|h| h.strip_prefix("p_").map(String::from))
        .collect();
    let labels = LabelSet::new(names)?;
    if header != prediction_header(&labels) {
        return Err(Error::Csv(format!(
            "unexpected prediction header: {}",
            header.join(",")
        )));
    }
    let k = labels.len();
    let num = |s: &str, row: usize, col: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::BadCell {
            row,
            column: col.to_string(),
            value: s.to_string(),
        })
    };
    let label = |s: &str| {
        labels
            .index_of(s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = i + 1;
        let p_values = (0..k)
            .map(|j| num(&rec[1 + j], row, &header[1 + j]))
            .collect::<Result<Vec<_>>>()?;
        let prediction_set = if rec[k + 1].is_empty() {
            Vec::new()
        } else {
            rec[k + 1]
                .split('|')
                .map(label)
                .collect::<Result<Vec<_>>>()?
        };
        out.push(PredictionRecord {
            id: rec[0].to_string(),
            p_values,
            prediction_set,
            point_prediction: label(&rec[k + 2])?,
            confidence: num(&rec[k + 3], row, "confidence")?,
            credibility: num(&rec[k + 4], row, "credibility")?,
            rejected: &rec[k + 5] == "true",
            alpha: num(&rec[k + 6], row, "alpha")?,
        });
    }
    Ok((labels, out))
}

/// `id, set, size, method, alpha` for set predictors without p-values.
pub fn write_sets<W: Write>(
    ids: &[String],
    sets: &[Vec<usize>],
    labels: &LabelSet,
    method: &str,
    alpha: f64,
    writer: W,
) -> Result<()> {
    if ids.len() != sets.len() {
        return Err(Error::LengthMismatch {
            left: ids.len(),
            right: sets.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "set", "size", "method", "alpha"])
        .map_err(csv_err)?;
    for (id, set) in ids.iter().zip(sets) {
        let names = set
            .iter()
            .map(|&k| labels.name(k))
            .collect::<Vec<_>>()
            .join("|");
        w.write_record([
            id.clone(),
            names,
            set.len().to_string(),
            method.to_string(),
            fmt(alpha),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// `sig, mean_err, avg_c, n_correct, n, err_<label>…`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], labels: &LabelSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["sig", "mean_err", "avg_c", "n_correct", "n"]
        .map(String::from)
        .to_vec();
    header.extend(labels.names().iter().map(|l| format!("err_{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut row = vec![
            fmt(r.sig),
            fmt(r.mean_err),
            fmt(r.avg_c),
            r.n_correct.to_string(),
            r.n.to_string(),
        ];
        row.extend(r.class_err.iter().map(|&e| fmt(e)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: String,
    pub labels: Vec<String>,
    pub smoothed: bool,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn new(labels: &LabelSet, smoothed: bool, rows: Vec<SweepRow>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            labels: labels.names().to_vec(),
            smoothed,
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub schema_version: String,
    pub method: String,
    pub alpha: f64,
    pub n: usize,
    pub effective_coverage: f64,
    pub avg_set_size: f64,
    pub confusion: SetConfusion,
}

impl ConfusionReport {
    pub fn new(
        method: &str,
        alpha: f64,
        effective_coverage: f64,
        avg_set_size: f64,
        confusion: SetConfusion,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            method: method.into(),
            alpha,
            n: confusion.total(),
            effective_coverage,
            avg_set_size,
            confusion,
        }
    }
}

/// `rank, id, y_pred, confidence, credibility`.
pub fn write_ranking<W: Write>(entries: &[RankEntry], labels: &LabelSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "id", "y_pred", "confidence", "credibility"])
        .map_err(csv_err)?;
    for (i, e) in entries.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.id.clone(),
            labels.name(e.point).to_string(),
            fmt(e.confidence),
            fmt(e.credibility),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// `alpha, mondrian, raps, naive, top_k`.
pub fn write_comparison<W: Write>(rows: &[ComparisonRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPARISON_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            fmt(r.alpha),
            r.mondrian.to_string(),
            r.raps.to_string(),
            r.naive.to_string(),
            r.top_k.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub const COMPARISON_HEADER: [&str; 5] = ["alpha", "mondrian", "raps", "naive", "top_k"];

/// Pretty JSON followed by a newline.
pub fn to_json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::record_from_pvalues;

    #[test]
    fn predictions_round_trip() {
        let labels = LabelSet::new(["TF", "TI", "T-EV"]).unwrap();
        let recs = vec![
            record_from_pvalues("a", vec![0.319, 0.0, 0.003], 0.05).unwrap(),
            record_from_pvalues("b", vec![0.45, 0.32, 0.23], 0.5).unwrap(),
            record_from_pvalues("c", vec![0.114, 0.053, 0.119], 0.05).unwrap(),
        ];
        let mut buf = Vec::new();
        write_predictions(&recs, &labels, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "id,p_TF,p_TI,p_T-EV,set,y_pred,confidence,credibility,rejected,alpha"
        );
        assert!(lines[2].contains(",,TF,"));
        assert!(lines[3].contains("TF|TI|T-EV"));
        assert_eq!(read_predictions(buf.as_slice(), &labels).unwrap(), recs);
    }

    #[test]
    fn comparison_header() {
        let mut buf = Vec::new();
        write_comparison(
            &[ComparisonRow {
                alpha: 0.05,
                mondrian: 10,
                raps: 37,
                naive: 35,
                top_k: 0,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "alpha,mondrian,raps,naive,top_k\n0.05,10,37,35,0\n"
        );
    }
}
