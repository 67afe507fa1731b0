//! Row-per-curve CSV input.

use std::path::Path;

use fdchange::RawCurves64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Parsed input file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub curves: RawCurves64,
    pub labels: Option<Vec<String>>,
    /// Original abscissa range when the header had to be mapped onto [0, 1].
    pub rescaled_from: Option<AbscissaRange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbscissaRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Layout {
    /// First row holds the sampling abscissae.
    pub header: bool,
    /// First column holds row labels.
    pub labels: bool,
}

fn parse_cell(text: &str, row: usize, col: usize) -> Result<f64, CliError> {
    let t = text.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Parse {
            row,
            col: Some(col),
            msg: format!("`{t}` is not a finite number"),
        }),
    }
}

pub fn ingest_csv(path: &Path, layout: Layout) -> Result<Ingested, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(file, layout)
}

/// Rows and columns in error messages are one-based file coordinates.
pub fn ingest_reader<R: std::io::Read>(input: R, layout: Layout) -> Result<Ingested, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let skip = usize::from(layout.labels);
    let mut abscissae: Option<Vec<f64>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| CliError::Parse {
            row: line,
            col: None,
            msg: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let cells: Vec<&str> = record.iter().collect();
        if cells.len() <= skip {
            return Err(CliError::Parse {
                row: line,
                col: None,
                msg: "row has no values".into(),
            });
        }
        let count = cells.len() - skip;
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(CliError::Parse {
                    row: line,
                    col: None,
                    msg: format!("expected {w} values, found {count}"),
                })
            }
            _ => {}
        }
        let values = cells[skip..]
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(c, line, j + skip + 1))
            .collect::<Result<Vec<_>, _>>()?;
        if layout.header && abscissae.is_none() {
            abscissae = Some(values);
            continue;
        }
        if layout.labels {
            labels.push(cells[0].to_string());
        }
        rows.push(values);
    }

    let m = width.ok_or_else(|| CliError::Parse {
        row: 1,
        col: None,
        msg: "file contains no data".into(),
    })?;
    let (points, rescaled_from) = match abscissae {
        None => ((0..m).map(|j| j as f64 / (m.max(2) - 1) as f64).collect(), None),
        Some(a) => normalise_abscissae(a)?,
    };
    if rows.is_empty() {
        return Err(CliError::Parse {
            row: 1,
            col: None,
            msg: "file contains no curves".into(),
        });
    }
    let curves = RawCurves64::from_rows(&rows, points)?;
    Ok(Ingested {
        curves,
        labels: layout.labels.then_some(labels),
        rescaled_from,
    })
}

fn normalise_abscissae(a: Vec<f64>) -> Result<(Vec<f64>, Option<AbscissaRange>), CliError> {
    if let Some(j) = a.windows(2).position(|w| w[1] <= w[0]) {
        return Err(CliError::Parse {
            row: 1,
            col: Some(j + 2),
            msg: "header abscissae must be strictly increasing".into(),
        });
    }
    let (lo, hi) = (a[0], a[a.len() - 1]);
    if lo >= 0.0 && hi <= 1.0 {
        return Ok((a, None));
    }
    let span = hi - lo;
    let scaled = a.iter().map(|&x| ((x - lo) / span).clamp(0.0, 1.0)).collect();
    Ok((scaled, Some(AbscissaRange { min: lo, max: hi })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_numeric_table() {
        let ing = ingest_reader("1,2,3,4\n5,6,7,8\n9,10,11,12\n".as_bytes(), Layout::default()).unwrap();
        assert_eq!(ing.curves.n(), 3);
        assert_eq!(ing.curves.m(), 4);
        let grid = ing.curves.abscissae();
        assert_eq!(grid[0], 0.0);
        assert!((grid[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(grid[3], 1.0);
        assert!(ing.labels.is_none());
    }

    #[test]
    fn header_is_rescaled_and_labels_kept() {
        let text = "year,1,2,3\n1990,0.1,0.2,0.3\n1991,0.4,0.5,0.6\n";
        let ing = ingest_reader(text.as_bytes(), Layout { header: true, labels: true }).unwrap();
        assert_eq!(ing.curves.abscissae(), &[0.0, 0.5, 1.0]);
        assert_eq!(ing.rescaled_from, Some(AbscissaRange { min: 1.0, max: 3.0 }));
        assert_eq!(ing.labels.unwrap(), vec!["1990", "1991"]);
    }

    #[test]
    fn unit_interval_header_kept() {
        let ing = ingest_reader("0,0.25,1\n1,2,3\n4,5,6\n".as_bytes(), Layout { header: true, labels: false }).unwrap();
        assert_eq!(ing.curves.abscissae(), &[0.0, 0.25, 1.0]);
        assert!(ing.rescaled_from.is_none());
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = ingest_reader("1,2,3\n4,5\n".as_bytes(), Layout::default()).unwrap_err();
        match err {
            CliError::Parse { row, col, .. } => {
                assert_eq!(row, 2);
                assert_eq!(col, None);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_coordinates() {
        let err = ingest_reader("1,2,3\n4,x,6\n".as_bytes(), Layout::default()).unwrap_err();
        assert!(matches!(err, CliError::Parse { row: 2, col: Some(2), .. }), "{err:?}");
        assert!(err.to_string().contains("row 2, column 2"));
    }

    #[test]
    fn single_row_fails_on_sample_size() {
        let err = ingest_reader("1,2,3\n".as_bytes(), Layout::default()).unwrap_err();
        assert!(matches!(err, CliError::Core(fdchange::Error::InsufficientSample { n: 1, .. })), "{err:?}");
    }
}
