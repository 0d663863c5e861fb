//! UCI MSNBC page-category sequences: one space-separated line of category
//! ids per session, optionally preceded by a `%` header that lists the
//! category names.

use std::io::BufRead;

use epn_core::{Cra, EventInstance, EventType, Timestamp, TypeRegistry};

use super::{Dataset, ParseStats};
use crate::error::Result;

pub const MSNBC_CATEGORIES: [&str; 17] = [
    "frontpage", "news", "tech", "local", "opinion", "on-air", "misc", "weather", "msn-news",
    "health", "living", "business", "msn-sports", "sports", "summary", "bbs", "travel",
];

/// Session `i` (1-based, counted over sequence lines) becomes CRA `i`; the
/// `j`-th click in it gets timestamp `j`.
pub fn parse_msnbc<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut registry = TypeRegistry::new();
    let mut names: Vec<String> = MSNBC_CATEGORIES.iter().map(|s| s.to_string()).collect();
    let mut stats = ParseStats::default();
    let mut events = Vec::new();
    let mut in_header = true;
    let mut saw_percent = false;
    let mut ids = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.starts_with('%') {
            saw_percent = true;
            continue;
        }
        if in_header {
            if trimmed.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = trimmed.split_whitespace().collect();
            if saw_percent && tokens.iter().all(|t| t.parse::<i64>().is_err()) {
                if tokens.len() == MSNBC_CATEGORIES.len() {
                    names = tokens.iter().map(|s| s.to_string()).collect();
                }
                continue;
            }
            in_header = false;
        }

        stats.records += 1;
        let session = stats.records as i64;
        if trimmed.is_empty() {
            stats.empty += 1;
            continue;
        }
        ids.clear();
        let mut bad = None;
        for tok in trimmed.split_whitespace() {
            match tok.parse::<u32>() {
                Ok(v) if (1..=MSNBC_CATEGORIES.len() as u32).contains(&v) => ids.push(v),
                _ => {
                    bad = Some(tok.to_owned());
                    break;
                }
            }
        }
        if let Some(tok) = bad {
            stats.reject(lineno, format!("bad category `{tok}`"));
            continue;
        }
        stats.accepted += 1;
        for (j, &id) in ids.iter().enumerate() {
            let ts = Timestamp::new((j + 1) as f64).expect("finite");
            events.push(EventInstance::new(ts, EventType(id), Cra::Int(session)));
        }
    }
    for n in &names {
        registry.register(n);
    }
    stats.events = events.len() as u64;
    Ok(Dataset {
        registry,
        events,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "% Different categories found in input file:\n\n\
frontpage news tech local opinion on-air misc weather msn-news health living business msn-sports sports summary bbs travel\n\n\
% Sequences:\n\n1 1 \n2\n3 2 2 4 2 2 2 3 3\n\n6 18 1\n6 7 7 7 6 6 8 8 8 8\n";

    #[test]
    fn header_is_skipped_and_lines_numbered() {
        let d = parse_msnbc(SAMPLE.as_bytes()).unwrap();
        assert_eq!(d.registry.len(), 17);
        assert_eq!(d.registry.name(EventType(6)), Some("on-air"));
        assert_eq!(d.stats.records, 6);
        assert_eq!(d.stats.accepted, 4);
        assert_eq!(d.stats.empty, 1);
        assert_eq!(d.stats.rejected, 1);
        assert!(d.stats.is_balanced());
        assert_eq!(d.events.len(), 2 + 1 + 9 + 10);
        let last = d.events.last().unwrap();
        assert_eq!(last.cra, Cra::Int(6));
        assert_eq!(last.timestamp.value(), 10.0);
    }

    #[test]
    fn bare_sequence_lines() {
        let d = parse_msnbc("1 2 1\n".as_bytes()).unwrap();
        let got: Vec<_> = d
            .events
            .iter()
            .map(|e| (e.timestamp.value(), e.event_type.0, e.cra.clone()))
            .collect();
        assert_eq!(
            got,
            [(1.0, 1, Cra::Int(1)), (2.0, 2, Cra::Int(1)), (3.0, 1, Cra::Int(1))]
        );
    }
}
