//! Entry points shared by the fuzz targets and the corpus regression test.
//! Each accepts arbitrary bytes; malformed input must yield `Err`, and
//! anything accepted must survive a render/parse round trip.

use crate::checkpoint::Checkpoint;
use crate::hexfloat;
use crate::sim::commands::Manifest;
use crate::sim::io::{parse_csv, parse_popularity_csv, requests_from_rows, ProfileFile, RoundRow, TraceRow};
use crate::sim::ExperimentConfig;

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn config(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(c) = ExperimentConfig::from_toml(s) {
        let again = ExperimentConfig::from_toml(&c.to_toml().expect("valid config serializes"));
        assert_eq!(again.expect("rendered config parses"), c);
    }
}

pub fn profile(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(p) = ProfileFile::from_toml(s) {
        let again = ProfileFile::from_toml(&p.to_toml().expect("valid profile serializes"));
        assert_eq!(again.expect("rendered profile parses"), p);
    }
}

pub fn trace_csv(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(rows) = parse_csv::<TraceRow>(s) {
        for n in [1, 5, 24] {
            if let Ok((req, alpha)) = requests_from_rows(&rows, n) {
                assert_eq!(req.len(), rows.len());
                assert_eq!(alpha.len(), rows.len());
            }
        }
    }
}

pub fn popularity_csv(data: &[u8]) {
    if let Ok(rows) = parse_popularity_csv(data) {
        for p in rows {
            let sum: f64 = p.as_slice().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "accepted a vector summing to {sum}");
        }
    }
}

pub fn checkpoint(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(c) = Checkpoint::parse(s) {
        let rendered = c.render();
        let again = Checkpoint::parse(&rendered).expect("rendered checkpoint parses");
        assert_eq!(again.render(), rendered);
    }
}

pub fn rounds_csv(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let _ = parse_csv::<RoundRow>(s);
}

pub fn manifest(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(m) = Manifest::parse(s) {
        let again = Manifest::parse(&m.render().expect("valid manifest renders"));
        assert_eq!(again.expect("rendered manifest parses"), m);
    }
}

pub fn hexfloat(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(x) = hexfloat::parse(s.trim()) {
        let back = hexfloat::parse(&hexfloat::format(x)).expect("formatted value parses");
        assert!(back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()));
    }
}
