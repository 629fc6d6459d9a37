use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use super::schema::DatasetSchema;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesColumn {
    pub name: String,
    /// `None` marks an empty, `NaN` or unparseable cell.
    pub values: Vec<Option<f64>>,
}

/// Ordered, de-duplicated time series as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    /// Seconds since the Unix epoch, or the row index when the schema has no
    /// time column.
    pub timestamps: Vec<i64>,
    pub columns: Vec<SeriesColumn>,
    pub duplicates_dropped: usize,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&SeriesColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn missing_count(&self) -> usize {
        self.columns
            .iter()
            .map(|c| c.values.iter().filter(|v| v.is_none()).count())
            .sum()
    }
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
    "%Y/%m/%d %H:%M:%S",
    "%Y/%m/%d %H:%M",
];
const DATE_FORMATS: &[&str] = &["%Y-%m-%d", "%Y/%m/%d", "%d/%m/%Y"];

/// Parses the timestamp layouts found in common exports into epoch seconds.
/// Values with an offset are converted to UTC; naive ones are taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let s = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    if let Ok(t) = DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f %z") {
        return Some(t.timestamp());
    }
    for f in DATETIME_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Some(t.and_utc().timestamp());
        }
    }
    for f in DATE_FORMATS {
        if let Ok(d) = NaiveDate::parse_from_str(s, f) {
            return d.and_hms_opt(0, 0, 0).map(|t| t.and_utc().timestamp());
        }
    }
    s.parse::<i64>().ok()
}

fn parse_cell(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads the mapped columns of `path`, sorts rows by time and keeps the first
/// of any duplicated timestamps.
pub fn ingest_csv(path: &Path, schema: &DatasetSchema) -> Result<RawSeries> {
    // an unreadable dataset is a data problem, not an I/O failure of ours
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let body = text.splitn(schema.skip_rows + 1, '\n').last().unwrap_or("");
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(body.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |header: &str| {
        headers
            .iter()
            .position(|h| h == header.trim())
            .ok_or_else(|| Error::Data(format!("{}: missing column {header:?}", path.display())))
    };
    let time_idx = schema.timestamp_column.as_deref().map(find).transpose()?;
    let col_idx = schema
        .columns
        .iter()
        .map(|c| find(&c.header))
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<(i64, Vec<Option<f64>>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let stamp = match time_idx {
            Some(t) => {
                let raw = record.get(t).unwrap_or("");
                parse_timestamp(raw).ok_or_else(|| {
                    Error::Data(format!("{}: row {}: bad timestamp {raw:?}", path.display(), i + 1))
                })?
            }
            None => i as i64,
        };
        let values = col_idx
            .iter()
            .map(|&c| record.get(c).and_then(parse_cell))
            .collect();
        rows.push((stamp, values));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }

    rows.sort_by_key(|(t, _)| *t);
    let before = rows.len();
    rows.dedup_by_key(|(t, _)| *t);
    let duplicates_dropped = before - rows.len();
    if duplicates_dropped > 0 {
        log::warn!("{}: dropped {duplicates_dropped} duplicate timestamps", path.display());
    }

    let mut columns: Vec<SeriesColumn> = schema
        .columns
        .iter()
        .map(|c| SeriesColumn {
            name: c.name.clone(),
            values: Vec::with_capacity(rows.len()),
        })
        .collect();
    let mut timestamps = Vec::with_capacity(rows.len());
    for (t, values) in rows {
        timestamps.push(t);
        for (col, v) in columns.iter_mut().zip(values) {
            col.values.push(v);
        }
    }
    Ok(RawSeries {
        timestamps,
        columns,
        duplicates_dropped,
    })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::data::ColumnMapping;
    use crate::data::SplitRule;

    fn schema() -> DatasetSchema {
        DatasetSchema {
            name: "t".into(),
            timestamp_column: Some("when".into()),
            skip_rows: 0,
            columns: vec![
                ColumnMapping { name: "a".into(), header: "A".into() },
                ColumnMapping { name: "b".into(), header: "B".into() },
            ],
            inputs: vec!["a".into()],
            targets: vec!["b".into()],
            window: 2,
            fill_gaps: false,
            max_ffill: 3,
            split: SplitRule::Fraction { train_fraction: 0.5 },
        }
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn timestamp_layouts() {
        assert_eq!(parse_timestamp("1970-01-01 00:01:00"), Some(60));
        assert_eq!(parse_timestamp("1970-01-01T01:00"), Some(3_600));
        assert_eq!(parse_timestamp("2006-04-01 00:00:00.000 +0200"), parse_timestamp("2006-03-31 22:00:00"));
        assert_eq!(parse_timestamp("1970/01/02"), Some(86_400));
        assert_eq!(parse_timestamp("42"), Some(42));
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn sorts_dedups_and_marks_missing() {
        let f = write(
            "when, A, B,extra\n\
             1970-01-01 00:00:02,2, 20,x\n\
             1970-01-01 00:00:01,1,NaN,x\n\
             1970-01-01 00:00:02,9,90,x\n\
             1970-01-01 00:00:03,,30,x\n",
        );
        let s = ingest_csv(f.path(), &schema()).unwrap();
        assert_eq!(s.timestamps, vec![1, 2, 3]);
        assert_eq!(s.duplicates_dropped, 1);
        assert_eq!(s.columns[0].values, vec![Some(1.0), Some(2.0), None]);
        assert_eq!(s.columns[1].values, vec![None, Some(20.0), Some(30.0)]);
        assert_eq!(s.missing_count(), 2);
    }

    #[test]
    fn skip_rows_and_index_time() {
        let f = write("latitude,longitude\n13.7,100.5\n\nA,B\n1,2\n3,4\n");
        let mut sc = schema();
        sc.timestamp_column = None;
        sc.skip_rows = 3;
        let s = ingest_csv(f.path(), &sc).unwrap();
        assert_eq!(s.timestamps, vec![0, 1]);
        assert_eq!(s.columns[1].values, vec![Some(2.0), Some(4.0)]);
    }

    #[test]
    fn errors() {
        let missing = ingest_csv(Path::new("/nonexistent/data.csv"), &schema()).unwrap_err();
        assert!(matches!(missing, Error::Data(_)));
        let f = write("when,A\n1,2\n");
        assert!(matches!(ingest_csv(f.path(), &schema()), Err(Error::Data(_))));
        let f = write("when,A,B\n");
        assert!(matches!(ingest_csv(f.path(), &schema()), Err(Error::Data(_))));
    }
}
