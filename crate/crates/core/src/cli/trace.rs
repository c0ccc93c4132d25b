//! Convergence traces and their CSV encoding.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::write_atomic;

/// One logged iteration. Column order fixes the CSV header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    pub gap_pointwise: f64,
    pub gap_ergodic: f64,
    /// `L(x_k, mu_k)`.
    pub lagrangian: f64,
    pub residual: f64,
    pub estimate_slack: Option<f64>,
    pub wall_nanos: Option<u64>,
}

pub const TRACE_HEADER: &str =
    "k,gap_pointwise,gap_ergodic,lagrangian,residual,estimate_slack,wall_nanos";

/// Every step up to 1000, then every `ceil(k/1000)`-th step, plus the last one.
pub fn should_log(k: u64, last: u64) -> bool {
    k == last || k <= 1000 || k.is_multiple_of(k.div_ceil(1000))
}

pub fn encode_trace(records: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(TRACE_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn decode_trace(bytes: &[u8]) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(Error::Config(format!(
            "unexpected trace header {:?}",
            header.join(",")
        )));
    }
    r.deserialize()
        .map(|rec| rec.map_err(Error::from))
        .collect()
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_atomic(path, &encode_trace(records)?)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    decode_trace(&fs::read(path)?)
}

/// Row-wise mean of traces logged at identical iterations. Optional columns
/// are averaged only when present in every run.
pub fn mean_trace(runs: &[Vec<TraceRecord>]) -> Result<Vec<TraceRecord>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Parameter("no traces to average".into()))?;
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Parameter("traces have different lengths".into()));
    }
    let count = runs.len() as f64;
    let mut out = Vec::with_capacity(first.len());
    for (i, head) in first.iter().enumerate() {
        let rows: Vec<&TraceRecord> = runs.iter().map(|r| &r[i]).collect();
        if rows.iter().any(|r| r.k != head.k) {
            return Err(Error::Parameter(format!(
                "traces disagree on the iteration at row {i}"
            )));
        }
        let mean = |f: fn(&TraceRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / count;
        let slack = rows
            .iter()
            .map(|r| r.estimate_slack)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / count);
        let wall = rows
            .iter()
            .map(|r| r.wall_nanos)
            .collect::<Option<Vec<u64>>>()
            .map(|v| (v.iter().map(|&w| w as u128).sum::<u128>() / v.len() as u128) as u64);
        out.push(TraceRecord {
            k: head.k,
            gap_pointwise: mean(|r| r.gap_pointwise),
            gap_ergodic: mean(|r| r.gap_ergodic),
            lagrangian: mean(|r| r.lagrangian),
            residual: mean(|r| r.residual),
            estimate_slack: slack,
            wall_nanos: wall,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(k: u64, g: f64) -> TraceRecord {
        TraceRecord {
            k,
            gap_pointwise: g,
            gap_ergodic: g / 3.0,
            lagrangian: -g,
            residual: 1e-300 * g,
            estimate_slack: None,
            wall_nanos: None,
        }
    }

    #[test]
    fn cadence() {
        assert!((1..=1000).all(|k| should_log(k, 50_000)));
        assert!(!should_log(1001, 50_000));
        assert!(should_log(1002, 50_000));
        assert!(should_log(5000, 50_000));
        assert!(!should_log(5001, 50_000));
        assert!(should_log(12_345, 12_345));
        let logged = (1..=1_000_000u64)
            .filter(|&k| should_log(k, 1_000_000))
            .count();
        assert!(logged < 10_000, "{logged}");
    }

    #[test]
    fn header_is_fixed_and_empty_cells_for_missing_fields() {
        let text = String::from_utf8(encode_trace(&[record(1, 0.5)]).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_HEADER);
        assert!(lines.next().unwrap().ends_with(",,"));
        let empty = String::from_utf8(encode_trace(&[]).unwrap()).unwrap();
        assert_eq!(empty.trim_end(), TRACE_HEADER);
        assert!(decode_trace(empty.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(decode_trace(b"k,gap\n1,2\n").is_err());
    }

    #[test]
    fn mean_of_traces() {
        let a = vec![record(1, 1.0), record(2, 2.0)];
        let mut b = vec![record(1, 3.0), record(2, 4.0)];
        b[0].estimate_slack = Some(1.0);
        let m = mean_trace(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m[0].gap_pointwise, 2.0);
        assert_eq!(m[1].gap_pointwise, 3.0);
        assert_eq!(m[0].estimate_slack, None);
        let mut c = b.clone();
        c[1].k = 3;
        assert!(mean_trace(&[a, c]).is_err());
        assert!(mean_trace(&[]).is_err());
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_exact(
            rows in proptest::collection::vec(
                (any::<u64>(), -1e300f64..1e300, any::<f64>(), -1e10f64..1e10, 0.0f64..1e3,
                 proptest::option::of(-1.0f64..1.0), proptest::option::of(any::<u64>())),
                0..20)
        ) {
            let records: Vec<TraceRecord> = rows
                .into_iter()
                .filter(|r| r.2.is_finite())
                .map(|(k, a, b, c, d, e, f)| TraceRecord {
                    k, gap_pointwise: a, gap_ergodic: b, lagrangian: c, residual: d,
                    estimate_slack: e, wall_nanos: f,
                })
                .collect();
            let back = decode_trace(&encode_trace(&records).unwrap()).unwrap();
            prop_assert_eq!(back, records);
        }
    }
}
