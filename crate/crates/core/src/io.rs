//! CSV helpers shared by the readers and report writers.

use std::io::Read;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Formats a real with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

pub(crate) fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader)
}

pub(crate) fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, source: &str, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Schema {
            source_name: source.to_string(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

pub(crate) fn schema_err(source: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Schema {
        source_name: source.to_string(),
        line,
        message: message.into(),
    }
}

pub(crate) fn parse_field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str, source: &str) -> Result<&'a str> {
    let line = rec.position().map_or(0, |p| p.line());
    rec.get(idx)
        .ok_or_else(|| schema_err(source, line, format!("missing field `{name}`")))
}
