use std::path::Path;

use crate::nncore::Tensor;

use super::DataError;

/// In-memory multivariate series. Storage is variate-major: variate `v`
/// occupies `values[v * n_steps ..][..n_steps]`, so window extraction per
/// variate is a contiguous copy.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    names: Vec<String>,
    n_steps: usize,
    values: Vec<f64>,
}

impl SeriesFrame {
    /// `per_variate[v]` holds the full series for variate `v`; all series
    /// must share one length ≥ 1.
    pub fn from_parts(names: Vec<String>, per_variate: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), per_variate.len(), "one name per variate");
        assert!(!per_variate.is_empty(), "at least one variate");
        let n_steps = per_variate[0].len();
        assert!(n_steps >= 1, "at least one step");
        assert!(
            per_variate.iter().all(|s| s.len() == n_steps),
            "all variates share one length"
        );
        let mut values = Vec::with_capacity(names.len() * n_steps);
        for series in &per_variate {
            values.extend_from_slice(series);
        }
        SeriesFrame {
            names,
            n_steps,
            values,
        }
    }

    pub fn n_variates(&self) -> usize {
        self.names.len()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Value of variate `v` at time `t`, `1 <= t <= n_steps`.
    pub fn value(&self, v: usize, t: usize) -> f64 {
        assert!(v < self.names.len(), "variate {v} out of range");
        assert!(
            t >= 1 && t <= self.n_steps,
            "time {t} outside 1..={}",
            self.n_steps
        );
        self.values[v * self.n_steps + (t - 1)]
    }

    /// Full series of one variate.
    pub fn variate(&self, v: usize) -> &[f64] {
        assert!(v < self.names.len(), "variate {v} out of range");
        &self.values[v * self.n_steps..(v + 1) * self.n_steps]
    }

    /// Lookback block ending at `t` inclusive: shape `[n_variates, l]`,
    /// spanning times `t-l+1 ..= t`. Requires `l <= t`.
    pub fn x_window(&self, t: usize, l: usize) -> Tensor {
        assert!(l >= 1 && l <= t && t <= self.n_steps, "window [{}..={t}] out of range", t + 1 - l);
        let mut out = Tensor::zeros(&[self.n_variates(), l]);
        for v in 0..self.n_variates() {
            let src = &self.values[v * self.n_steps + (t - l)..v * self.n_steps + t];
            out.row_mut(v).copy_from_slice(src);
        }
        out
    }

    /// Target block after `t`: shape `[n_variates, h]`, spanning times
    /// `t+1 ..= t+h`. Requires `t + h <= n_steps`.
    pub fn y_window(&self, t: usize, h: usize) -> Tensor {
        assert!(h >= 1 && t + h <= self.n_steps, "target [{}..={}] out of range", t + 1, t + h);
        let mut out = Tensor::zeros(&[self.n_variates(), h]);
        for v in 0..self.n_variates() {
            let src = &self.values[v * self.n_steps + t..v * self.n_steps + t + h];
            out.row_mut(v).copy_from_slice(src);
        }
        out
    }

    /// Replaces the stored series wholesale; used by standardization.
    pub(super) fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> SeriesFrame {
        let n = self.n_steps;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &x)| f(idx / n, x))
            .collect();
        SeriesFrame {
            names: self.names.clone(),
            n_steps: n,
            values,
        }
    }
}

/// Loads a CSV with a header row. The first column is dropped when its
/// header (case-insensitive) is `date` or `timestamp`, or when the first
/// data row's leading cell does not parse as a number; every remaining
/// column is a variate. Error positions are 1-based: `row` counts data
/// rows (header excluded), `col` counts value columns (dropped column
/// excluded).
pub fn load_csv(path: &Path) -> Result<SeriesFrame, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        rows.push(record?);
    }
    if headers.is_empty() || rows.is_empty() {
        return Err(DataError::EmptyData);
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != headers.len() {
            return Err(DataError::RaggedRows {
                row: i + 1,
                expected: headers.len(),
                got: row.len(),
            });
        }
    }
    let head_name = headers[0].to_ascii_lowercase();
    let skip_first = head_name == "date"
        || head_name == "timestamp"
        || rows[0].get(0).map_or(true, |c| c.trim().parse::<f64>().is_err());
    let offset = usize::from(skip_first);
    if headers.len() <= offset {
        return Err(DataError::EmptyData);
    }
    let names: Vec<String> = headers[offset..].to_vec();
    let n_variates = names.len();
    let n_steps = rows.len();
    let mut per_variate = vec![vec![0.0f64; n_steps]; n_variates];
    for (r, row) in rows.iter().enumerate() {
        for c in 0..n_variates {
            let cell = row.get(c + offset).unwrap().trim();
            let parsed: f64 = cell.parse().map_err(|_| DataError::NonNumericCell {
                row: r + 1,
                col: c + 1,
            })?;
            if !parsed.is_finite() {
                return Err(DataError::NonNumericCell {
                    row: r + 1,
                    col: c + 1,
                });
            }
            per_variate[c][r] = parsed;
        }
    }
    Ok(SeriesFrame::from_parts(names, per_variate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn frame_accessors_are_one_based() {
        let frame = SeriesFrame::from_parts(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![10.0, 20.0, 30.0, 40.0]],
        );
        assert_eq!(frame.n_variates(), 2);
        assert_eq!(frame.n_steps(), 4);
        assert_eq!(frame.value(0, 1), 1.0);
        assert_eq!(frame.value(1, 4), 40.0);
        let x = frame.x_window(3, 2);
        assert_eq!(x.shape(), &[2, 2]);
        assert_eq!(x.row(0), &[2.0, 3.0]);
        assert_eq!(x.row(1), &[20.0, 30.0]);
        let y = frame.y_window(3, 1);
        assert_eq!(y.row(0), &[4.0]);
        assert_eq!(y.row(1), &[40.0]);
    }

    #[test]
    fn load_csv_drops_named_date_column() {
        let f = write_tmp("date,u,v\n2020-01-01,1.0,4.0\n2020-01-02,2.0,5.0\n2020-01-03,3.0,6.0\n");
        let frame = load_csv(f.path()).unwrap();
        assert_eq!(frame.names(), &["u".to_string(), "v".to_string()]);
        assert_eq!(frame.n_steps(), 3);
        assert_eq!(frame.variate(0), &[1.0, 2.0, 3.0]);
        assert_eq!(frame.variate(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn load_csv_drops_unnamed_nonnumeric_first_column() {
        let f = write_tmp("idx,u\nmon,1.0\ntue,2.0\n");
        let frame = load_csv(f.path()).unwrap();
        assert_eq!(frame.names(), &["u".to_string()]);
        assert_eq!(frame.variate(0), &[1.0, 2.0]);
    }

    #[test]
    fn load_csv_keeps_numeric_first_column() {
        let f = write_tmp("x,y\n1,10\n2,20\n");
        let frame = load_csv(f.path()).unwrap();
        assert_eq!(frame.names(), &["x".to_string(), "y".to_string()]);
        assert_eq!(frame.variate(0), &[1.0, 2.0]);
    }

    #[test]
    fn load_csv_missing_file() {
        let err = load_csv(Path::new("/nonexistent/definitely_absent.csv")).unwrap_err();
        assert!(matches!(err, DataError::MissingFile(_)));
    }

    #[test]
    fn load_csv_ragged_row_is_reported_with_position() {
        let f = write_tmp("a,b\n1,2\n3\n");
        match load_csv(f.path()).unwrap_err() {
            DataError::RaggedRows { row, expected, got } => {
                assert_eq!((row, expected, got), (2, 2, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_csv_non_numeric_cell_positions_are_one_based() {
        let f = write_tmp("x\n1\nfoo\n");
        match load_csv(f.path()).unwrap_err() {
            DataError::NonNumericCell { row, col } => assert_eq!((row, col), (2, 1)),
            other => panic!("unexpected error {other:?}"),
        }
        let f = write_tmp("date,a,b\nd1,1.0,2.0\nd2,3.0,oops\n");
        match load_csv(f.path()).unwrap_err() {
            DataError::NonNumericCell { row, col } => assert_eq!((row, col), (2, 2)),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_header_only_and_date_only_files() {
        let f = write_tmp("a,b\n");
        assert!(matches!(load_csv(f.path()).unwrap_err(), DataError::EmptyData));
        let f = write_tmp("date\n2020-01-01\n");
        assert!(matches!(load_csv(f.path()).unwrap_err(), DataError::EmptyData));
    }

    #[test]
    fn load_csv_rejects_non_finite_cells() {
        let f = write_tmp("a\n1.0\nNaN\n");
        assert!(matches!(
            load_csv(f.path()).unwrap_err(),
            DataError::NonNumericCell { row: 2, col: 1 }
        ));
    }
}
