use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First line of every results file.
pub const CSV_HEADER_COMMENT: &str = "# teleport-lab results v1";

/// One analysed class of shots. Metrics are empty when the status is not
/// `ok`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: String,
    pub protocol: String,
    pub hops: usize,
    pub path_rank: usize,
    pub path: String,
    pub trial: usize,
    /// `on` or `off`.
    pub qrem: String,
    /// Post-selected class such as `Z1X0`; `-` for the other modes.
    pub configuration: String,
    #[serde(with = "fixed6")]
    pub negativity: Option<f64>,
    #[serde(with = "fixed6")]
    pub fidelity: Option<f64>,
    /// Shots behind the estimate; 0 for exact distributions.
    pub shots: u64,
    pub seed: u64,
    pub status: String,
}

mod fixed6 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_str(&format!("{x:.6}")),
            None => s.serialize_str(""),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let text = String::deserialize(d)?;
        if text.is_empty() {
            return Ok(None);
        }
        text.parse().map(Some).map_err(serde::de::Error::custom)
    }
}

pub fn write_results<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER_COMMENT}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a results file. Malformed rows are skipped with a warning; the
/// second value counts them.
pub fn read_results<R: BufRead>(input: R) -> Result<(Vec<ResultRow>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if !headers.is_empty() && headers.iter().next() != Some("mode") {
        return Err(Error::InvalidExperiment(format!(
            "unexpected results header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (k, rec) in reader.records().enumerate() {
        let parsed = rec
            .map_err(Error::from)
            .and_then(|r| r.deserialize::<ResultRow>(Some(&headers)).map_err(Error::from));
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("skipping results row {}: {e}", k + 1);
                skipped += 1;
            }
        }
    }
    Ok((rows, skipped))
}
