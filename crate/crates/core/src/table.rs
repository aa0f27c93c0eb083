//! Delimited output tables and the metrics-table reader.
//!
//! Every table starts with one `# {json}` line holding the run metadata
//! (config and seed). Readers treat `#` lines as comments.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{EngagementMatrix, EngagementVector, METRIC_NAMES};

pub const DEVOTED_HOURS_COLUMN: &str = "devoted_hours";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("missing column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("line {line}: column {column}: `{value}` is not a finite number")]
    NotNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("duplicate volunteer {0}")]
    DuplicateVolunteer(String),
    #[error("table has no rows")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Writes the metadata line, then `header` and `rows` as CSV.
pub fn write_table<W: Write, M: Serialize + ?Sized>(
    mut out: W,
    meta: &M,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), TableError> {
    writeln!(out, "# {}", serde_json::to_string(meta)?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// The JSON in a table's leading `# ` line, if any.
pub fn read_metadata(text: &str) -> Option<serde_json::Value> {
    let line = text.lines().next()?.strip_prefix("# ")?;
    serde_json::from_str(line).ok()
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input)
}

/// Raw metrics plus each volunteer's total devoted hours.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub matrix: EngagementMatrix,
    /// Aligned with `matrix.rows`; zero when the column is absent.
    pub devoted_hours: Vec<f64>,
}

impl MetricsTable {
    pub fn header() -> Vec<String> {
        std::iter::once("volunteer_id")
            .chain(METRIC_NAMES)
            .chain([DEVOTED_HOURS_COLUMN])
            .map(str::to_string)
            .collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.matrix.rows.iter().zip(&self.devoted_hours).map(|(v, h)| {
            let mut row = vec![v.volunteer_id.clone()];
            row.extend(v.values().iter().map(f64::to_string));
            row.push(h.to_string());
            row
        })
    }
}

/// Reads `volunteer_id, a, d, r, v[, devoted_hours]` in any column order.
pub fn read_metrics_table<R: Read>(input: R) -> Result<MetricsTable, TableError> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let required: Vec<&str> = std::iter::once("volunteer_id").chain(METRIC_NAMES).collect();
    let missing: Vec<String> = required
        .iter()
        .filter(|c| !index.contains_key(*c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(TableError::MissingColumns(missing));
    }
    let hours_col = index.get(DEVOTED_HOURS_COLUMN).copied();

    let mut rows: Vec<(EngagementVector, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |column: &str, i: usize| -> Result<f64, TableError> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| TableError::NotNumeric {
                    line,
                    column: column.to_string(),
                    value: raw.to_string(),
                })
        };
        let [a, d, r, v] = METRIC_NAMES.map(|m| number(m, index[m]));
        let hours = hours_col.map_or(Ok(0.0), |i| number(DEVOTED_HOURS_COLUMN, i))?;
        rows.push((
            EngagementVector {
                volunteer_id: record.get(index["volunteer_id"]).unwrap_or("").to_string(),
                a: a?,
                d: d?,
                r: r?,
                v: v?,
            },
            hours,
        ));
    }
    if rows.is_empty() {
        return Err(TableError::Empty);
    }
    rows.sort_by(|x, y| x.0.volunteer_id.cmp(&y.0.volunteer_id));
    if let Some(w) = rows.windows(2).find(|w| w[0].0.volunteer_id == w[1].0.volunteer_id) {
        return Err(TableError::DuplicateVolunteer(w[0].0.volunteer_id.clone()));
    }
    let (vectors, devoted_hours): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(MetricsTable {
        matrix: EngagementMatrix::from_rows(vectors),
        devoted_hours,
    })
}

/// Reads a `volunteer_id, archetype` table into `(id, label)` pairs.
pub fn read_truth<R: Read>(input: R) -> Result<Vec<(String, String)>, TableError> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let pos = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id), Some(label)) = (pos("volunteer_id"), pos("archetype")) else {
        let missing = ["volunteer_id", "archetype"]
            .iter()
            .filter(|c| pos(c).is_none())
            .map(|c| c.to_string())
            .collect();
        return Err(TableError::MissingColumns(missing));
    };
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok((r.get(id).unwrap_or("").to_string(), r.get(label).unwrap_or("").to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[(&str, [f64; 4], f64)]) -> MetricsTable {
        MetricsTable {
            matrix: EngagementMatrix::from_rows(
                rows.iter()
                    .map(|(id, [a, d, r, v], _)| EngagementVector {
                        volunteer_id: id.to_string(),
                        a: *a,
                        d: *d,
                        r: *r,
                        v: *v,
                    })
                    .collect(),
            ),
            devoted_hours: rows.iter().map(|r| r.2).collect(),
        }
    }

    fn render(t: &MetricsTable) -> String {
        let mut out = Vec::new();
        write_table(&mut out, &serde_json::json!({"seed": 3}), &MetricsTable::header(), t.rows()).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn metadata_line_comes_first() {
        let text = render(&table(&[("x", [0.5, 1.0, 0.25, 2.0], 3.0)]));
        assert!(text.starts_with("# {\"seed\":3}\n"));
        assert_eq!(read_metadata(&text).unwrap()["seed"], 3);
        assert_eq!(text.lines().nth(1).unwrap(), "volunteer_id,a,d,r,v,devoted_hours");
    }

    #[test]
    fn reorder_and_optional_hours() {
        let t = read_metrics_table("v,r,volunteer_id,d,a\n1,0.5,z,2,0.25\n0,1,y,1,1\n".as_bytes()).unwrap();
        assert_eq!(t.matrix.ids(), vec!["y", "z"]);
        assert_eq!(t.matrix.rows[1].values(), [0.25, 2.0, 0.5, 1.0]);
        assert_eq!(t.devoted_hours, vec![0.0, 0.0]);
    }

    #[test]
    fn bad_tables() {
        let err = read_metrics_table("volunteer_id,a,d\nx,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TableError::MissingColumns(ref c) if c == &["r", "v"]));
        let err = read_metrics_table("volunteer_id,a,d,r,v\nx,1,abc,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TableError::NotNumeric { line: 2, ref column, .. } if column == "d"));
        let err = read_metrics_table("volunteer_id,a,d,r,v\nx,1,NaN,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TableError::NotNumeric { .. }));
        assert!(matches!(read_metrics_table("volunteer_id,a,d,r,v\n".as_bytes()), Err(TableError::Empty)));
        let dup = "volunteer_id,a,d,r,v\nx,1,1,1,1\nx,1,1,1,1\n";
        assert!(matches!(read_metrics_table(dup.as_bytes()), Err(TableError::DuplicateVolunteer(_))));
    }

    #[test]
    fn truth_table() {
        let t = read_truth("# {}\nvolunteer_id,archetype\nv1,a\nv2,b\n".as_bytes()).unwrap();
        assert_eq!(t, vec![("v1".into(), "a".into()), ("v2".into(), "b".into())]);
        assert!(read_truth("id,archetype\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(vals in prop::collection::vec((prop::array::uniform4(0.0f64..1e6), 0.0f64..1e4), 1..30)) {
            let ids: Vec<String> = (0..vals.len()).map(|i| format!("v{i:03}")).collect();
            let rows: Vec<(&str, [f64; 4], f64)> = ids.iter().zip(&vals).map(|(id, (m, h))| (id.as_str(), *m, *h)).collect();
            let t = table(&rows);
            let back = read_metrics_table(render(&t).as_bytes()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
