//! JSON and CSV encodings of reports and evaluation rows.

use std::io::Write;

use serde::Serialize;

use crate::verify::{RatioReport, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Plain,
}

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct FlatRecord<'a> {
    index: usize,
    lambda: String,
    x: String,
    y: String,
    t: String,
    log_value: f64,
    log_envelope: f64,
    ratio: f64,
    regime: &'a str,
    method: &'a str,
    abs_log_error: f64,
    confluent: bool,
    sandwich_ok: String,
}

impl<'a> From<&'a Record> for FlatRecord<'a> {
    fn from(r: &'a Record) -> Self {
        Self {
            index: r.index,
            lambda: r.lambda.as_deref().map(join).unwrap_or_default(),
            x: join(&r.x),
            y: r.y.as_deref().map(join).unwrap_or_default(),
            t: r.t.map(|t| t.to_string()).unwrap_or_default(),
            log_value: r.log_value,
            log_envelope: r.log_envelope,
            ratio: r.ratio,
            regime: &r.regime,
            method: &r.method,
            abs_log_error: r.abs_log_error,
            confluent: r.confluent,
            sandwich_ok: r.sandwich_ok.map(|b| b.to_string()).unwrap_or_default(),
        }
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Flat CSV of the report's records; coordinate lists are `;`-separated.
pub fn report_csv<W: Write>(report: &RatioReport, out: W) -> csv::Result<()> {
    let mut w = csv_writer(out);
    for r in &report.records {
        w.serialize(FlatRecord::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// CSV of any flat serialisable rows.
pub fn rows_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> csv::Result<()> {
    let mut w = csv_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
