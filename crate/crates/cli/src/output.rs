//! CSV and JSON writers for sweep rows and validation reports.

use std::io::Write;

use anyhow::Result;
use udnpf::validation::CriterionOutcome;

use crate::sweep::{Row, COLUMNS, MC_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Monte Carlo columns are written only when some row carries them.
pub fn columns(rows: &[Row]) -> &'static [&'static str] {
    if rows.iter().any(|r| r.pcov_mc.is_some()) {
        &COLUMNS
    } else {
        &COLUMNS[..COLUMNS.len() - MC_COLUMNS]
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[Row], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let cols = columns(rows);
            let mut w = csv::Writer::from_writer(out);
            w.write_record(cols)?;
            for r in rows {
                w.write_record(cols.iter().map(|c| r.field(c)))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn read_csv_rows<R: std::io::Read>(input: R) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<Row>, _>>()?)
}

pub fn write_report<W: Write>(out: W, outcomes: &[CriterionOutcome], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["id", "name", "passed", "detail", "seconds"])?;
            for o in outcomes {
                w.write_record([
                    o.id.to_string(),
                    o.name.to_string(),
                    o.passed.to_string(),
                    o.detail.clone(),
                    format!("{:.3}", o.seconds),
                ])?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, outcomes)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
