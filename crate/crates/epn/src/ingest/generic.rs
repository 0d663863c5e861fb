//! Generic `timestamp,type,cra` CSV with a header row. Columns may come in
//! any order; extra columns are kept as event attributes.

use std::io::{Read, Write};

use epn_core::{EventInstance, Timestamp, TypeRegistry};

use super::{parse_cra, Dataset, ParseStats};
use crate::error::{Error, Result};

pub fn parse_generic_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Invalid(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::format(1, format!("missing `{name}` column")))
    };
    let (ti, yi, ci) = (col("timestamp")?, col("type")?, col("cra")?);
    let extra: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != ti && i != yi && i != ci)
        .map(|(i, h)| (i, h.to_owned()))
        .collect();

    let mut registry = TypeRegistry::new();
    let mut stats = ParseStats::default();
    let mut events = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Invalid(e.to_string()))?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        stats.records += 1;
        if rec.len() == 1 && rec[0].is_empty() {
            stats.empty += 1;
            continue;
        }
        if rec.len() != headers.len() {
            stats.reject(line, format!("expected {} fields, found {}", headers.len(), rec.len()));
            continue;
        }
        let Some(ts) = rec[ti].parse::<f64>().ok().and_then(Timestamp::new) else {
            stats.reject(line, format!("bad timestamp `{}`", &rec[ti]));
            continue;
        };
        if rec[yi].is_empty() || rec[ci].is_empty() {
            stats.reject(line, "empty type or cra");
            continue;
        }
        let ty = registry.register(&rec[yi]);
        let mut ev = EventInstance::new(ts, ty, parse_cra(&rec[ci]));
        ev.attributes = extra.iter().map(|(j, h)| (h.clone(), rec[*j].to_owned())).collect();
        stats.accepted += 1;
        events.push(ev);
    }
    stats.events = events.len() as u64;
    Ok(Dataset {
        registry,
        events,
        stats,
    })
}

/// Writes `timestamp,type,cra` rows using registry names.
pub fn write_generic_csv<W: Write>(mut w: W, registry: &TypeRegistry, events: &[EventInstance]) -> Result<()> {
    writeln!(w, "timestamp,type,cra")?;
    for e in events {
        let name = registry
            .name(e.event_type)
            .ok_or_else(|| Error::Invalid(format!("{} has no name", e.event_type)))?;
        writeln!(w, "{},{},{}", e.timestamp.value(), name, e.cra)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use epn_core::Cra;

    #[test]
    fn reads_columns_by_name() {
        let src = "cra,timestamp,type,site\ns1,0.5,login,eu\ns1,1,view,eu\n2,1,login,us\nbad,row\n";
        let d = parse_generic_csv(src.as_bytes()).unwrap();
        assert_eq!(d.events.len(), 3);
        assert_eq!(d.stats.rejected, 1);
        assert_eq!(d.registry.len(), 2);
        assert_eq!(d.events[2].cra, Cra::Int(2));
        assert_eq!(d.events[0].attributes, [("site".to_string(), "eu".to_string())]);
    }

    #[test]
    fn missing_column_is_an_error() {
        assert!(parse_generic_csv("timestamp,kind\n1,a\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read() {
        let d = parse_generic_csv("timestamp,type,cra\n1,a,7\n2,b,7\n".as_bytes()).unwrap();
        let mut out = Vec::new();
        write_generic_csv(&mut out, &d.registry, &d.events).unwrap();
        let again = parse_generic_csv(out.as_slice()).unwrap();
        assert_eq!(again.events, d.events);
    }
}
