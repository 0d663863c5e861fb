use std::collections::BTreeMap;
use std::io::Cursor;

use epn::driver::{build, BuildConfig};
use epn::ingest::{parse, parse_cascades, InputFormat};
use proptest::prelude::*;

/// Row shapes a cascade file may contain, valid or not.
fn cascade_line() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.0..100.0f64, 1..6u32, 1..4u32, prop_oneof![Just(-1), Just(0), Just(1), Just(7)])
            .prop_map(|(t, c, b, ind)| format!("{t:.3},C{c},{b},{ind}")),
        Just(String::new()),
        Just("x,C1,1,0".to_owned()),
        Just("1.0,C1,1".to_owned()),
        Just("2.0,,1,0".to_owned()),
    ]
}

proptest! {
    #[test]
    fn cascade_records_are_accounted_for(lines in prop::collection::vec(cascade_line(), 0..60)) {
        let mut text = String::from("1.0,C1,9,0\n");
        for l in &lines {
            text.push_str(l);
            text.push('\n');
        }
        let d = parse_cascades(Cursor::new(text)).unwrap();
        prop_assert!(d.stats.is_balanced(), "{:?}", d.stats);
        prop_assert_eq!(d.stats.accepted as usize, d.events.len());
        prop_assert_eq!(d.stats.events as usize, d.events.len());
    }

    #[test]
    fn msnbc_sessions_map_to_cras(
        sessions in prop::collection::vec(prop::collection::vec(1..=17u32, 1..12), 1..40),
    ) {
        let mut text = String::from("% header\n\n");
        text.push_str(&epn::ingest::MSNBC_CATEGORIES.join(" "));
        text.push_str("\n\n");
        for s in &sessions {
            let toks: Vec<String> = s.iter().map(u32::to_string).collect();
            text.push_str(&toks.join(" "));
            text.push('\n');
        }
        let d = parse(Cursor::new(text), InputFormat::Msnbc).unwrap();
        prop_assert_eq!(d.stats.records as usize, sessions.len());
        prop_assert!(d.stats.is_balanced());
        prop_assert_eq!(d.partitions(), sessions.len());
        let mut by_cra: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for e in &d.events {
            by_cra.entry(e.cra.to_string()).or_default()
                .push(d.registry.name(e.event_type).unwrap().to_owned());
        }
        for (i, s) in sessions.iter().enumerate() {
            let want: Vec<&str> = s.iter().map(|&c| epn::ingest::MSNBC_CATEGORIES[c as usize - 1]).collect();
            prop_assert_eq!(&by_cra[&(i + 1).to_string()], &want);
        }
    }

    /// Blackouts interleaved in one file; consecutive rows of a blackout are
    /// less than one period apart, so every consecutive pair must be counted.
    #[test]
    fn interleaved_blackouts_count_their_own_pairs(
        blackouts in prop::collection::vec(
            (0.0..5.0f64, prop::collection::vec((0.5..9.5f64, 1..6u32), 1..15)),
            1..6,
        ),
    ) {
        let mut rows = Vec::new();
        let mut want: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (b, (start, steps)) in blackouts.iter().enumerate() {
            let mut t = *start;
            let mut prev: Option<String> = None;
            for &(gap, c) in steps {
                t += gap;
                let name = format!("C{c}");
                rows.push((t, format!("{t:.6},{name},{},1", b + 1)));
                if let Some(p) = prev.replace(name.clone()) {
                    if p != name {
                        *want.entry((p, name)).or_default() += 1;
                    }
                }
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let text: String = rows.iter().map(|(_, r)| format!("{r}\n")).collect();
        let d = parse_cascades(Cursor::new(text)).unwrap();
        let out = build(&d.registry, &d.events, &BuildConfig::default()).unwrap();
        let got: BTreeMap<(String, String), u64> = out.snapshot.edges()
            .map(|(i, j, f)| {
                let r = out.snapshot.registry();
                ((r.name(i).unwrap().to_owned(), r.name(j).unwrap().to_owned()), f)
            })
            .collect();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn stop_rows_are_dropped_not_rejected() {
    let text = "timestamp,component,blackout,indicator\n0.5,A,1,0\n1.0,B,1,1\n1.5,C,1,-1\n2.0,D,1,2\n";
    let d = parse_cascades(Cursor::new(text)).unwrap();
    assert_eq!((d.stats.accepted, d.stats.dropped_stop, d.stats.rejected), (2, 1, 1));
    assert_eq!(d.registry.len(), 2);
}
