use serde::Serialize;

use super::ingest::RawSeries;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GapSummary {
    pub forward_filled: usize,
    pub interpolated: usize,
    pub rows_dropped: usize,
}

/// Fills runs of at most `max_ffill` missing values with the last known
/// value and interpolates longer runs linearly between the bracketing known
/// values. Rows still incomplete afterwards (leading gaps, unbracketed long
/// trailing gaps) are dropped. Known values are never changed.
pub fn fill_gaps(series: &RawSeries, max_ffill: usize) -> Result<(RawSeries, GapSummary)> {
    let mut summary = GapSummary::default();
    let mut out = series.clone();
    for col in &mut out.columns {
        if col.values.iter().all(Option::is_none) {
            return Err(Error::Data(format!("column {} is entirely missing", col.name)));
        }
        let v = &mut col.values;
        let mut i = 0;
        while i < v.len() {
            if v[i].is_some() {
                i += 1;
                continue;
            }
            let start = i;
            while i < v.len() && v[i].is_none() {
                i += 1;
            }
            let run = i - start;
            let before = start.checked_sub(1).and_then(|k| v[k]);
            let after = v.get(i).copied().flatten();
            match (before, after) {
                (Some(last), _) if run <= max_ffill => {
                    v[start..i].fill(Some(last));
                    summary.forward_filled += run;
                }
                (Some(a), Some(b)) => {
                    let span = (run + 1) as f64;
                    for (k, slot) in v[start..i].iter_mut().enumerate() {
                        let w = (k + 1) as f64 / span;
                        *slot = Some(a + (b - a) * w);
                    }
                    summary.interpolated += run;
                }
                _ => {}
            }
        }
    }

    let keep: Vec<bool> = (0..out.len())
        .map(|r| out.columns.iter().all(|c| c.values[r].is_some()))
        .collect();
    summary.rows_dropped = keep.iter().filter(|k| !**k).count();
    if summary.rows_dropped > 0 {
        let mut flags = keep.iter();
        out.timestamps.retain(|_| *flags.next().expect("row flag"));
        for col in &mut out.columns {
            let mut flags = keep.iter();
            col.values.retain(|_| *flags.next().expect("row flag"));
        }
    }
    Ok((out, summary))
}
