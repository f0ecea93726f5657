//! CSV and text renderings of study reports.
//!
//! Table numbers carry four significant digits; raw replicate records carry
//! seventeen so they round-trip.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::montecarlo::{Outcome, StudyReport, VariantSummary};

/// Header line stamped on every output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub master_seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn header(&self) -> String {
        format!("# master_seed={} config_hash={}\n", self.master_seed, self.config_hash)
    }
}

pub fn sig4(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.3e}"),
        Some(x) => x.to_string(),
        None => "NA".to_string(),
    }
}

fn full(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_full(v: Option<f64>) -> String {
    v.map(full).unwrap_or_default()
}

/// Which of the three report tables to render.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Table {
    /// Relative bias and relative root variance.
    Accuracy,
    /// Maximum final weight and fit failures.
    Weights,
    /// Variance estimation and interval coverage.
    Intervals,
}

impl Table {
    pub fn file_name(self) -> &'static str {
        match self {
            Table::Accuracy => "table2.csv",
            Table::Weights => "table3.csv",
            Table::Intervals => "table4.csv",
        }
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Table::Accuracy => &["rb", "rb_se", "rrvar", "used", "failures"],
            Table::Weights => &["max_weight", "failure_rate", "failures"],
            Table::Intervals => &["var_rb", "mean_ci_length", "coverage", "intervals"],
        }
    }

    fn cells(self, s: &VariantSummary) -> Vec<String> {
        match self {
            Table::Accuracy => vec![sig4(s.rb), sig4(s.rb_se), sig4(s.rrvar), s.used.to_string(), s.failures.to_string()],
            Table::Weights => vec![sig4(s.max_weight), sig4(Some(s.failure_rate)), s.failures.to_string()],
            Table::Intervals => vec![sig4(s.var_rb), sig4(s.mean_ci_length), sig4(s.coverage), s.intervals.to_string()],
        }
    }

    /// Variants shown in this table. Interval rows need a variance estimator.
    fn shows(self, s: &VariantSummary) -> bool {
        match self {
            Table::Intervals => s.variant.is_fitted() || s.intervals > 0,
            _ => true,
        }
    }
}

const KEY_COLUMNS: [&str; 5] = ["scenario", "design", "rho", "reps", "variant"];

fn key_cells(r: &StudyReport, s: &VariantSummary) -> Vec<String> {
    vec![
        r.label.clone(),
        r.design.to_string(),
        r.rho.map(|v| v.to_string()).unwrap_or_else(|| "NA".into()),
        r.reps.to_string(),
        s.variant.name().to_string(),
    ]
}

fn rows(table: Table, reports: &[StudyReport]) -> (Vec<String>, Vec<Vec<String>>) {
    let header: Vec<String> = KEY_COLUMNS.iter().chain(table.columns()).map(|c| c.to_string()).collect();
    let mut body = Vec::new();
    for r in reports {
        for s in r.summaries.iter().filter(|s| table.shows(s)) {
            let mut row = key_cells(r, s);
            row.extend(table.cells(s));
            body.push(row);
        }
    }
    (header, body)
}

/// One table as CSV with the provenance line first.
pub fn write_table_csv<W: Write>(table: Table, reports: &[StudyReport], prov: &Provenance, mut w: W) -> Result<()> {
    w.write_all(prov.header().as_bytes())?;
    let mut out = csv::Writer::from_writer(w);
    let (header, body) = rows(table, reports);
    out.write_record(&header)?;
    for row in body {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// One table as whitespace-aligned text, one block per scenario.
pub fn render_text(table: Table, reports: &[StudyReport]) -> String {
    let (header, body) = rows(table, reports);
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i < KEY_COLUMNS.len() {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "{c:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    let mut previous: Option<&str> = None;
    for row in &body {
        if previous.is_some_and(|p| p != row[0]) {
            out.push('\n');
        }
        previous = Some(&row[0]);
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

pub const RAW_HEADER: [&str; 9] = ["replicate", "variant", "estimate", "v_sam", "v_nr", "ci_low", "ci_high", "max_w", "status"];

/// Every replicate outcome of one study.
pub fn write_raw_csv<W: Write>(report: &StudyReport, prov: &Provenance, mut w: W) -> Result<()> {
    w.write_all(prov.header().as_bytes())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RAW_HEADER)?;
    for rec in &report.records {
        for (variant, o) in &rec.outcomes {
            let mut row = vec![rec.index.to_string(), variant.name().to_string()];
            match o {
                Outcome::Ok(v) => row.extend([
                    full(v.estimate),
                    opt_full(v.v_sam),
                    opt_full(v.v_nr),
                    opt_full(v.ci.map(|c| c.0)),
                    opt_full(v.ci.map(|c| c.1)),
                    full(v.max_weight),
                ]),
                _ => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            row.push(o.status_name().to_string());
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}
