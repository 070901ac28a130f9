//! CSV and JSON readers/writers for panels, matrices and results.
//!
//! Ratings are 1-based on disk and 0-based in memory. Matrix files put the
//! origin state on rows and the destination on columns, the usual printed
//! layout, so they are the transpose of the in-memory column convention.

use crate::battery::McSummary;
use crate::error::{Error, Result};
use crate::kernel::Matrix;
use crate::likelihood::TransitionCounts;
use crate::risk::RiskMeasures;
use crate::simulate::{FactorPath, RatingPanel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

/// Shortest round-trip text for a float.
pub fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

/// Percent with two decimals.
pub fn fmt_pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn fmt(x: f64, paper: bool) -> String {
    if paper {
        fmt_pct(x)
    } else {
        fmt_num(x)
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

#[derive(Debug, Serialize, Deserialize)]
struct PanelRow {
    firm: u64,
    t: usize,
    rating: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

pub fn write_panel_csv(path: &Path, panel: &RatingPanel, with_scores: bool) -> Result<()> {
    let mut w = writer(path)?;
    let scores = panel.scores.as_ref().filter(|_| with_scores);
    let mut header = vec!["firm", "t", "rating"];
    if scores.is_some() {
        header.push("score");
    }
    w.write_record(&header)?;
    for i in 0..panel.n_firms {
        for t in 0..panel.t_len {
            let mut rec = vec![i.to_string(), t.to_string(), (panel.rating(i, t) + 1).to_string()];
            if let Some(s) = scores {
                let v = s[i * panel.t_len + t];
                rec.push(if v.is_nan() { String::new() } else { fmt_num(v) });
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `firm,t,rating[,score]`. Every firm must cover dates 0..T-1 with the
/// same T. `k_states` of None infers K from the largest rating seen.
pub fn read_panel_csv(path: &Path, k_states: Option<usize>) -> Result<RatingPanel> {
    read_panel(File::open(path)?, k_states)
}

pub fn read_panel<R: Read>(src: R, k_states: Option<usize>) -> Result<RatingPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src);
    let mut firms: BTreeMap<u64, BTreeMap<usize, i64>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: PanelRow = row?;
        if firms.entry(row.firm).or_default().insert(row.t, row.rating).is_some() {
            return Err(Error::Config(format!("duplicate row for firm {} date {}", row.firm, row.t)));
        }
    }
    if firms.is_empty() {
        return Err(Error::Config("panel file has no rows".into()));
    }
    let max_rating = firms.values().flat_map(|m| m.values()).copied().max().unwrap_or(0);
    let k = k_states.unwrap_or(max_rating.max(0) as usize);
    let t_len = firms.values().next().map_or(0, |m| m.len());
    let mut ratings = Vec::with_capacity(firms.len() * t_len);
    for (id, dates) in &firms {
        if dates.len() != t_len || dates.keys().enumerate().any(|(i, &t)| i != t) {
            return Err(Error::Config(format!("firm {id} does not cover dates 0..{}", t_len.saturating_sub(1))));
        }
        for &r in dates.values() {
            if r < 1 || r as usize > k {
                return Err(Error::RatingOutOfRange { rating: r, k });
            }
            ratings.push(r as usize - 1);
        }
    }
    RatingPanel::from_ratings(k, firms.len(), t_len, ratings)
}

pub fn write_factor_csv(path: &Path, f: &FactorPath) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "f"])?;
    for (t, v) in f.f.iter().enumerate() {
        w.write_record([t.to_string(), fmt_num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_factor_csv(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let (t, f): (usize, f64) = row?;
        if t != i {
            return Err(Error::Config(format!("factor file: expected date {i}, found {t}")));
        }
        out.push(f);
    }
    Ok(out)
}

/// Writes a column-convention matrix with origins as rows.
pub fn write_matrix_csv(path: &Path, m: &Matrix, paper: bool) -> Result<()> {
    let k = m.nrows();
    let mut w = writer(path)?;
    let mut header = vec!["origin".to_string()];
    header.extend((1..=k).map(|j| format!("to_{j}")));
    w.write_record(&header)?;
    for l in 0..m.ncols() {
        let mut rec = vec![(l + 1).to_string()];
        rec.extend((0..k).map(|kk| fmt(m[(kk, l)], paper)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_matrix_csv`] for full-precision files.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| -> Result<Vec<f64>> {
            let r = r?;
            r.iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("matrix entry {s:?}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::Config("matrix file is not square".into()));
    }
    Ok(Matrix::from_fn(k, k, |dest, origin| rows[origin][dest]))
}

pub fn write_vector_csv(path: &Path, name: &str, v: &[f64], paper: bool) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["state", name])?;
    for (i, x) in v.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt(*x, paper)])?;
    }
    w.flush()?;
    Ok(())
}

/// Non-zero per-date counts as `kind,t,k,l,count`; `t` is the destination
/// date and kind is 1 or 2 for one- and two-step moves.
pub fn write_counts_csv(path: &Path, c: &TransitionCounts) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["kind", "t", "k", "l", "count"])?;
    for (kind, mats, lag) in [(1, &c.n1_t, 1), (2, &c.n2_t, 2)] {
        for (i, m) in mats.iter().enumerate() {
            for l in 0..c.k_states {
                for k in 0..c.k_states {
                    let v = m[(k, l)];
                    if v != 0.0 {
                        w.write_record([kind.to_string(), (i + lag).to_string(), (k + 1).to_string(), (l + 1).to_string(), fmt_num(v)])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, s: &McSummary) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["parameter", "true", "mean_estimate", "mean_abs_bias", "mean_se"])?;
    for j in 0..s.names.len() {
        w.write_record([
            s.names[j].clone(),
            fmt_num(s.truth[j]),
            fmt_num(s.mean_estimate[j]),
            fmt_num(s.mean_abs_bias[j]),
            fmt_num(s.mean_se[j]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per replication and parameter.
pub fn write_tstats_csv(path: &Path, s: &McSummary) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["replication", "parameter", "estimate", "se", "t"])?;
    for r in s.replications.iter().filter(|r| r.error.is_none()) {
        for (j, name) in s.names.iter().enumerate() {
            let t = r.t_stats[j].map(fmt_num).unwrap_or_default();
            w.write_record([r.index.to_string(), name.clone(), fmt_num(r.estimates[j]), fmt_num(r.se[j]), t])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Risk rows `measure,horizon,<columns...>`; every column holds the same
/// measures in the same order.
pub fn write_risk_csv(path: &Path, columns: &[(&str, &RiskMeasures)], paper: bool) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["measure".to_string(), "horizon".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    let Some((_, first)) = columns.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut row = |name: &str, h: usize, get: &dyn Fn(&RiskMeasures) -> f64| -> Result<()> {
        let mut rec = vec![name.to_string(), h.to_string()];
        rec.extend(columns.iter().map(|(_, m)| fmt(get(m), paper)));
        w.write_record(&rec)?;
        Ok(())
    };
    row("DP", 1, &|m| m.dp1)?;
    row("DP", 2, &|m| m.dp2)?;
    for (i, (h, _)) in first.pd.iter().enumerate() {
        row("PD", *h, &|m| m.pd[i].1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// SHA-256 of the panel's shape and ratings, hex encoded.
pub fn panel_fingerprint(panel: &RatingPanel) -> String {
    let mut h = Sha256::new();
    for v in [panel.k_states, panel.n_firms, panel.t_len] {
        h.update((v as u64).to_le_bytes());
    }
    for &r in &panel.ratings {
        h.update([r as u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
