//! Cascading-failure rows `timestamp, component id, blackout id, indicator`
//! where the indicator is 0 (initiating), 1 (dependent) or -1 (stop).

use std::io::Read;

use epn_core::{EventInstance, Timestamp, TypeRegistry};

use super::{parse_cra, Dataset, ParseStats};
use crate::error::{Error, Result};

/// Components become event types (named by their id), blackouts become CRAs.
/// Stop rows are dropped; the other two indicators are treated alike.
pub fn parse_cascades<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut registry = TypeRegistry::new();
    let mut stats = ParseStats::default();
    let mut events = Vec::new();

    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Invalid(e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue; // header row
        }
        stats.records += 1;
        if rec.len() == 1 && rec[0].is_empty() {
            stats.empty += 1;
            continue;
        }
        if rec.len() != 4 {
            stats.reject(line, format!("expected 4 fields, found {}", rec.len()));
            continue;
        }
        let Some(ts) = rec[0].parse::<f64>().ok().and_then(Timestamp::new) else {
            stats.reject(line, format!("bad timestamp `{}`", &rec[0]));
            continue;
        };
        if rec[1].is_empty() || rec[2].is_empty() {
            stats.reject(line, "empty component or blackout id");
            continue;
        }
        match rec[3].parse::<i32>() {
            Ok(-1) => {
                stats.dropped_stop += 1;
                continue;
            }
            Ok(0 | 1) => {}
            _ => {
                stats.reject(line, format!("bad indicator `{}`", &rec[3]));
                continue;
            }
        }
        let ty = registry.register(&rec[1]);
        stats.accepted += 1;
        events.push(EventInstance::new(ts, ty, parse_cra(&rec[2])));
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
    use epn_core::Cra;

    #[test]
    fn stop_rows_are_dropped() {
        let d = parse_cascades("0,c7,b1,0\n2,c9,b1,1\n5,c0,b1,-1\n".as_bytes()).unwrap();
        assert_eq!(d.events.len(), 2);
        assert_eq!(d.stats.dropped_stop, 1);
        assert!(d.stats.is_balanced());
        assert!(d.events.iter().all(|e| e.cra == Cra::Text("b1".into())));
        assert_eq!(d.registry.len(), 2);
        assert_eq!(d.events[0].timestamp.value(), 0.0);
    }

    #[test]
    fn header_and_bad_rows() {
        let src = "timestamp,component,blackout,indicator\n0,3,1,0\nx,3,1,1\n1,4,1,7\n2,5\n1.5,4,1,1\n";
        let d = parse_cascades(src.as_bytes()).unwrap();
        assert_eq!(d.stats.records, 5);
        assert_eq!(d.stats.accepted, 2);
        assert_eq!(d.stats.rejected, 3);
        assert!(d.stats.is_balanced());
        assert_eq!(d.events[1].cra, Cra::Int(1));
    }
}
