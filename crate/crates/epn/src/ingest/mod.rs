//! Dataset readers and the synthetic stream generator.

mod cascade;
mod generic;
mod msnbc;
mod synthetic;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use epn_core::{Cra, EventInstance, TypeRegistry};
use serde::{Deserialize, Serialize};

pub use cascade::parse_cascades;
pub use generic::{parse_generic_csv, write_generic_csv};
pub use msnbc::{parse_msnbc, MSNBC_CATEGORIES};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};

/// At most this many rejection reasons are kept for reporting.
const MAX_REJECT_NOTES: usize = 10;

/// Record accounting for one parse. Every input record ends up in exactly
/// one of `accepted`, `rejected`, `empty` or `dropped_stop`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseStats {
    pub records: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub empty: u64,
    pub dropped_stop: u64,
    pub events: u64,
    /// `(line, reason)` for the first few rejected records.
    pub reject_notes: Vec<(usize, String)>,
}

impl ParseStats {
    fn reject(&mut self, line: usize, why: impl Into<String>) {
        self.rejected += 1;
        if self.reject_notes.len() < MAX_REJECT_NOTES {
            self.reject_notes.push((line, why.into()));
        }
    }

    pub fn is_balanced(&self) -> bool {
        self.accepted + self.rejected + self.empty + self.dropped_stop == self.records
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub registry: TypeRegistry,
    pub events: Vec<EventInstance>,
    pub stats: ParseStats,
}

impl Dataset {
    /// Number of distinct CRAs.
    pub fn partitions(&self) -> usize {
        let mut cras: Vec<&Cra> = self.events.iter().map(|e| &e.cra).collect();
        cras.sort_unstable();
        cras.dedup();
        cras.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// Sniff from the first lines.
    #[default]
    Auto,
    Msnbc,
    Cascade,
    Csv,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(InputFormat::Auto),
            "msnbc" => Ok(InputFormat::Msnbc),
            "cascade" => Ok(InputFormat::Cascade),
            "csv" => Ok(InputFormat::Csv),
            _ => Err(format!("unknown input format `{s}` (auto, msnbc, cascade, csv)")),
        }
    }
}

/// Picks a format from the first non-blank line.
pub fn sniff(first_line: &str) -> InputFormat {
    let l = first_line.trim();
    if l.starts_with('%') {
        return InputFormat::Msnbc;
    }
    let cols: Vec<String> = l.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if ["timestamp", "type", "cra"].iter().all(|c| cols.iter().any(|x| x == c)) {
        return InputFormat::Csv;
    }
    if cols.len() >= 4 {
        return InputFormat::Cascade;
    }
    InputFormat::Msnbc
}

pub fn parse<R: BufRead>(mut reader: R, format: InputFormat) -> Result<Dataset> {
    let format = match format {
        InputFormat::Auto => {
            let buf = reader.fill_buf()?;
            let head = String::from_utf8_lossy(&buf[..buf.len().min(4096)]).into_owned();
            let first = head.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            sniff(first)
        }
        f => f,
    };
    match format {
        InputFormat::Msnbc => parse_msnbc(reader),
        InputFormat::Cascade => parse_cascades(reader),
        InputFormat::Csv => parse_generic_csv(reader),
        InputFormat::Auto => unreachable!(),
    }
}

pub fn read_path(path: &Path, format: InputFormat) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse(BufReader::with_capacity(1 << 20, f), format)
}

fn parse_cra(token: &str) -> Cra {
    match token.parse::<i64>() {
        Ok(i) => Cra::Int(i),
        Err(_) => Cra::Text(token.to_owned()),
    }
}
