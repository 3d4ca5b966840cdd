//! CSV emission with fixed 17-significant-digit formatting, and the matching
//! reader used to check round trips.

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv: {0}")]
    Format(#[from] csv::Error),
    #[error("row {row}, column {column}: `{value}` is not a number")]
    Number { row: usize, column: usize, value: String },
    #[error("row {row} has {got} fields, header has {want}")]
    Width { row: usize, got: usize, want: usize },
    #[error("empty input: a header line is required")]
    Empty,
}

/// A cell: real numbers use the fixed format, integers are written plainly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
}

/// `d.dddddddddddddddde±XX`: 17 significant digits, always parseable back to
/// the same `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

impl Cell {
    fn render(&self) -> String {
        match *self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => format_real(x),
        }
    }
}

pub fn write_csv<W: Write>(out: W, header: &[String], rows: &[Vec<Cell>]) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Parses an emitted table: a header line and rows of numbers.
pub fn read_csv(text: &str) -> Result<CsvTable, CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = r.records();
    let header: Vec<String> = match records.next() {
        Some(rec) => rec?.iter().map(str::to_owned).collect(),
        None => return Err(CsvError::Empty),
    };
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(CsvError::Width { row: i + 1, got: rec.len(), want: header.len() });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, v)| v.parse::<f64>().map_err(|_| CsvError::Number { row: i + 1, column: j + 1, value: v.into() }))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_format() {
        assert_eq!(format_real(1.0), "1.0000000000000000e0");
        assert_eq!(format_real(-0.1), "-1.0000000000000001e-1");
        assert_eq!(format_real(19.739208802178716), "1.9739208802178716e1");
    }

    #[test]
    fn reader_rejects_malformed_tables() {
        assert!(matches!(read_csv(""), Err(CsvError::Empty)));
        assert!(matches!(read_csv("a,b\n1,x\n"), Err(CsvError::Number { row: 1, column: 2, .. })));
        assert!(read_csv("a,b\n1\n").is_err());
    }

    proptest! {
        #[test]
        fn reals_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
            prop_assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
        }

        #[test]
        fn tables_round_trip(rows in prop::collection::vec((any::<i32>(), -1e300f64..1e300), 0..20)) {
            let header = vec!["index".to_string(), "value".to_string()];
            let cells: Vec<Vec<Cell>> = rows.iter().map(|&(i, x)| vec![Cell::Int(i as i64), Cell::Real(x)]).collect();
            let mut buf = Vec::new();
            write_csv(&mut buf, &header, &cells).unwrap();
            let t = read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(&t.header, &header);
            for (r, &(i, x)) in t.rows.iter().zip(&rows) {
                prop_assert_eq!(r[0], i as f64);
                prop_assert_eq!(r[1], x);
            }
        }
    }
}
