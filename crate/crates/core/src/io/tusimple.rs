use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LaneError, Result};
use crate::repr::LanePolyline;

/// One TuSimple annotation or prediction line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuSimpleRecord {
    pub lanes: Vec<Vec<f64>>,
    pub h_samples: Vec<f64>,
    pub raw_file: String,
    /// Anything else on the line (`run_time` in prediction files), kept for output.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Parsed lanes on the record's own `h_samples` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TuSimpleLanes {
    pub lanes: Vec<LanePolyline>,
    pub h_samples: Vec<f64>,
    pub raw_file: String,
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> LaneError {
    LaneError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Converts one lane's x list (negative = absent) to a polyline; gaps between
/// the first and last present sample are filled by linear interpolation.
pub fn lane_from_samples(xs: &[f64]) -> Option<LanePolyline> {
    let present: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= 0.0).collect();
    let (&first, &last) = (present.first()?, present.last()?);
    if first == last {
        return None;
    }
    let mut out = vec![0.0; xs.len()];
    let mut valid = vec![false; xs.len()];
    for w in present.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a..=b {
            let t = (i - a) as f64 / (b - a) as f64;
            out[i] = xs[a] + t * (xs[b] - xs[a]);
            valid[i] = true;
        }
    }
    LanePolyline::new(out, valid).ok()
}

pub fn parse_tusimple_record(json_line: &str, line: usize) -> Result<TuSimpleRecord> {
    let rec: TuSimpleRecord = serde_json::from_str(json_line).map_err(|e| parse_err(line, e))?;
    if let Some((k, l)) = rec
        .lanes
        .iter()
        .enumerate()
        .find(|(_, l)| l.len() != rec.h_samples.len())
    {
        return Err(parse_err(
            line,
            format!(
                "lane {k} has {} samples, h_samples has {}",
                l.len(),
                rec.h_samples.len()
            ),
        ));
    }
    Ok(rec)
}

/// Parses one JSON line. `-2` (any negative) marks an absent sample.
pub fn parse_tusimple(json_line: &str) -> Result<TuSimpleLanes> {
    let rec = parse_tusimple_record(json_line, 1)?;
    Ok(record_lanes(&rec))
}

pub fn record_lanes(rec: &TuSimpleRecord) -> TuSimpleLanes {
    let lanes = rec
        .lanes
        .iter()
        .enumerate()
        .filter_map(|(k, xs)| {
            let l = lane_from_samples(xs);
            if l.is_none() && xs.iter().any(|&x| x >= 0.0) {
                warn!(
                    "{}: lane {k} has fewer than two samples, skipped",
                    rec.raw_file
                );
            }
            l
        })
        .collect();
    TuSimpleLanes {
        lanes,
        h_samples: rec.h_samples.clone(),
        raw_file: rec.raw_file.clone(),
    }
}

/// Parses a JSON-lines file; blank lines are skipped.
pub fn parse_tusimple_file(text: &str) -> Result<Vec<TuSimpleRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_tusimple_record(l, n + 1))
        .collect()
}

fn number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

/// Serializes lanes back to a TuSimple line, `-2` on invalid rows.
pub fn serialize_tusimple(lanes: &TuSimpleLanes) -> String {
    let rec = serde_json::json!({
        "lanes": lanes.lanes.iter().map(|l| {
            l.xs().iter().zip(l.valid()).map(|(&x, &v)| if v { number(x) } else { Value::from(-2) }).collect::<Vec<_>>()
        }).collect::<Vec<_>>(),
        "h_samples": lanes.h_samples.iter().map(|&h| number(h)).collect::<Vec<_>>(),
        "raw_file": lanes.raw_file,
    });
    rec.to_string()
}
