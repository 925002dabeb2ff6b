//! The trace-row schema and its CSV form.
//!
//! One row per recorded round per run. The column set is a stable contract:
//! `round,metric,epsilon,alpha,eta,sigma,clip,seed,flags`. Floats carry 17
//! significant digits so a written file reloads bit-identically; the
//! `epsilon` column uses the sentinel `local` when the shared block never
//! trains (perfect privacy) and `inf` when it trains without noise.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// The exact column set of a trace CSV.
pub const TRACE_HEADER: [&str; 9] = [
    "round", "metric", "epsilon", "alpha", "eta", "sigma", "clip", "seed", "flags",
];

/// Formats a float with 17 significant digits, enough for an exact
/// round-trip through text.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ===========================================================================
// Epsilon sentinels
// ===========================================================================

/// The privacy cost reported on a row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonReport {
    /// The shared block never trains (`alpha = 0`); nothing is revealed.
    Local,
    /// The shared block trains without noise; the guarantee is vacuous.
    Infinite,
    Value(f64),
}

impl EpsilonReport {
    pub fn to_field(self) -> String {
        match self {
            EpsilonReport::Local => "local".to_string(),
            EpsilonReport::Infinite => "inf".to_string(),
            EpsilonReport::Value(v) => fmt_f64(v),
        }
    }

    pub fn parse(field: &str) -> Result<Self> {
        match field {
            "local" => Ok(EpsilonReport::Local),
            "inf" => Ok(EpsilonReport::Infinite),
            other => other
                .parse::<f64>()
                .map(EpsilonReport::Value)
                .map_err(|_| Error::invalid(format!("bad epsilon field {other:?}"))),
        }
    }

    /// The numeric value when one exists.
    pub fn value(self) -> Option<f64> {
        match self {
            EpsilonReport::Value(v) => Some(v),
            _ => None,
        }
    }
}

// ===========================================================================
// Row flags
// ===========================================================================

/// Boolean row markers, serialized as `;`-joined tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags {
    /// The run subsampled clients, so the reported epsilon uses the
    /// Poisson-subsampling accountant at the participation rate (exact
    /// under independent coins, a standard approximation for fixed
    /// cohorts).
    pub poisson_q: bool,
    /// The run's iterate stopped being finite; rows cover the surviving
    /// prefix and the whole run is marked.
    pub diverged: bool,
}

impl Flags {
    pub fn to_field(self) -> String {
        let mut out = String::new();
        if self.poisson_q {
            out.push_str("poisson_q");
        }
        if self.diverged {
            if !out.is_empty() {
                out.push(';');
            }
            out.push_str("diverged");
        }
        out
    }

    pub fn parse(field: &str) -> Result<Self> {
        let mut flags = Flags::default();
        if field.is_empty() {
            return Ok(flags);
        }
        for token in field.split(';') {
            match token {
                "poisson_q" => flags.poisson_q = true,
                "diverged" => flags.diverged = true,
                other => return Err(Error::invalid(format!("unknown flag token {other:?}"))),
            }
        }
        Ok(flags)
    }
}

// ===========================================================================
// Rows
// ===========================================================================

/// One recorded round of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based completed-round count.
    pub round: usize,
    /// The run's metric at this round (risk of the averaged iterate).
    pub metric: f64,
    /// Privacy spent by this round.
    pub epsilon: EpsilonReport,
    /// Raw personalization weight; `inf` in the fully global mode.
    pub alpha: f64,
    pub eta: f64,
    /// Normalized noise multiplier from the sweep grid (not the raw noise
    /// std, which also depends on the clip and the aggregation scale).
    pub sigma: f64,
    pub clip: f64,
    /// Master seed of the run.
    pub seed: u64,
    pub flags: Flags,
}

impl RunRecord {
    fn to_fields(&self) -> [String; 9] {
        [
            self.round.to_string(),
            fmt_f64(self.metric),
            self.epsilon.to_field(),
            fmt_f64(self.alpha),
            fmt_f64(self.eta),
            fmt_f64(self.sigma),
            fmt_f64(self.clip),
            self.seed.to_string(),
            self.flags.to_field(),
        ]
    }

    fn from_fields(fields: &csv::StringRecord, file: &str, line: usize) -> Result<Self> {
        let field = |idx: usize| -> &str { fields.get(idx).unwrap_or("") };
        let bad = |what: &str, raw: &str| Error::Ingest {
            file: file.to_string(),
            line,
            message: format!("cannot parse {what} from {raw:?}"),
        };
        let parse_f64 = |idx: usize, what: &str| -> Result<f64> {
            field(idx).parse::<f64>().map_err(|_| bad(what, field(idx)))
        };
        Ok(RunRecord {
            round: field(0).parse().map_err(|_| bad("round", field(0)))?,
            metric: parse_f64(1, "metric")?,
            epsilon: EpsilonReport::parse(field(2)).map_err(|_| bad("epsilon", field(2)))?,
            alpha: parse_f64(3, "alpha")?,
            eta: parse_f64(4, "eta")?,
            sigma: parse_f64(5, "sigma")?,
            clip: parse_f64(6, "clip")?,
            seed: field(7).parse().map_err(|_| bad("seed", field(7)))?,
            flags: Flags::parse(field(8)).map_err(|_| bad("flags", field(8)))?,
        })
    }
}

// ===========================================================================
// File emission and loading
// ===========================================================================

/// Writes records with optional `# key: value` metadata lines before the
/// header. The output is a pure function of the inputs, byte for byte.
pub fn emit_csv(
    path: &Path,
    records: &[RunRecord],
    metadata: &[(String, String)],
) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut buf = std::io::BufWriter::new(file);
    for (key, value) in metadata {
        writeln!(buf, "# {key}: {value}").map_err(|e| Error::io(display.clone(), e))?;
    }
    let mut writer = csv::Writer::from_writer(buf);
    writer.write_record(TRACE_HEADER)?;
    for record in records {
        writer.write_record(record.to_fields())?;
    }
    writer.flush().map_err(|e| Error::io(display, e))?;
    Ok(())
}

/// Loads a trace CSV written by [`emit_csv`], returning rows and metadata.
/// The header must match [`TRACE_HEADER`] exactly.
pub fn load_csv(path: &Path) -> Result<(Vec<RunRecord>, Vec<(String, String)>)> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(display.clone(), e))?;

    let mut metadata = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end();
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim_start();
            if let Some((key, value)) = comment.split_once(':') {
                metadata.push((key.trim().to_string(), value.trim().to_string()));
            } else if !comment.is_empty() {
                metadata.push((comment.to_string(), String::new()));
            }
            offset += line.len();
        } else {
            break;
        }
    }
    let header_line = metadata.len() + 1;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text[offset..].as_bytes());
    let headers = reader.headers()?.clone();
    let expected: Vec<&str> = TRACE_HEADER.to_vec();
    if headers.iter().collect::<Vec<_>>() != expected {
        let mut got = String::new();
        for (i, h) in headers.iter().enumerate() {
            if i > 0 {
                let _ = write!(got, ",");
            }
            let _ = write!(got, "{h}");
        }
        return Err(Error::Ingest {
            file: display,
            line: header_line,
            message: format!("unexpected header {got:?}"),
        });
    }

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = header_line + idx + 1;
        let row = row.map_err(|e| Error::Ingest {
            file: display.clone(),
            line,
            message: e.to_string(),
        })?;
        if row.len() != TRACE_HEADER.len() {
            return Err(Error::Ingest {
                file: display,
                line,
                message: format!("expected {} fields, got {}", TRACE_HEADER.len(), row.len()),
            });
        }
        records.push(RunRecord::from_fields(&row, &display, line)?);
    }
    Ok((records, metadata))
}

// ===========================================================================
// Tests
// ===========================================================================
