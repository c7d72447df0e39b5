//! Datasets, synthetic generation, splitting, standardization and CSV I/O.
//!
//! Dataset CSVs have a header `x1,…,xd,y` and one observation per row.
//! Query CSVs have input columns only; a trailing `y` column is accepted
//! and ignored. Values are written with 17 significant digits, which
//! round-trips every finite `f64` exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DVector<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::dims("targets", inputs.nrows(), targets.len()));
        }
        if inputs.nrows() == 0 || inputs.ncols() == 0 {
            return Err(Error::Data("dataset must have at least one row and one input column".into()));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(rows),
            targets: self.targets.select_rows(rows),
        }
    }
}

/// `x ~ U[−1, 1]^d`, `y = sin(π Σ x_j) + σ ε`, `ε ~ N(0, 1)`.
pub fn synth_sine(n: usize, d: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("synthetic data needs n >= 1 and d >= 1".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument("synthetic noise level must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = DMatrix::zeros(n, d);
    let mut targets = DVector::zeros(n);
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..d {
            let v: f64 = rng.random_range(-1.0..=1.0);
            inputs[(i, j)] = v;
            s += v;
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        targets[i] = (std::f64::consts::PI * s).sin() + sigma * e;
    }
    Dataset::new(inputs, targets)
}

/// Seeded random split; the train part gets `round(train_frac · n)` rows,
/// clamped so both parts are non-empty.
pub fn split(data: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::Data("cannot split fewer than two rows".into()));
    }
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.select(&order[..n_train]), data.select(&order[n_train..])))
}

/// Per-column affine map fitted on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Zero-variance columns get scale 1.
    pub fn fit(inputs: &DMatrix<f64>) -> Self {
        let n = inputs.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(inputs.ncols());
        let mut scale = Vec::with_capacity(inputs.ncols());
        for col in inputs.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn apply(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.mean.len() {
            return Err(Error::dims("input columns", self.mean.len(), inputs.ncols()));
        }
        Ok(DMatrix::from_fn(inputs.nrows(), inputs.ncols(), |i, j| {
            (inputs[(i, j)] - self.mean[j]) / self.scale[j]
        }))
    }
}

/// Standardize both parts with statistics of the train inputs.
pub fn standardize_split(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Standardization)> {
    let st = Standardization::fit(&train.inputs);
    let tr = Dataset::new(st.apply(&train.inputs)?, train.targets.clone())?;
    let te = Dataset::new(st.apply(&test.inputs)?, test.targets.clone())?;
    Ok((tr, te, st))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn parse_field(s: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Data(format!("row {row}, column {col}: cannot parse {s:?} as a number")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("row {row}, column {col}: non-finite value {s:?}")));
    }
    Ok(v)
}

/// Parse rows into a row-major buffer of `width` columns, keeping the
/// first `keep` columns of each row.
fn parse_rows<R: Read>(rdr: &mut csv::Reader<R>, width: usize, keep: usize) -> Result<(Vec<f64>, usize)> {
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("malformed CSV: {e}")))?;
        if rec.len() != width {
            return Err(Error::Data(format!(
                "row {}: expected {width} fields, found {}",
                r + 1,
                rec.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let v = parse_field(field, r + 1, c + 1)?;
            if c < keep {
                values.push(v);
            }
        }
        rows += 1;
    }
    Ok((values, rows))
}

fn header_width<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("malformed CSV header: {e}")))?;
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Data("missing CSV header".into()));
    }
    Ok(headers.iter().map(str::to_owned).collect())
}

/// Dataset CSV: every column but the last is an input, the last is the target.
pub fn parse_dataset_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = reader(input);
    let headers = header_width(&mut rdr)?;
    let width = headers.len();
    if width < 2 {
        return Err(Error::Data("dataset needs at least one input column and a target column".into()));
    }
    let (values, rows) = parse_rows(&mut rdr, width, width)?;
    if rows == 0 {
        return Err(Error::Data("dataset has no rows".into()));
    }
    let all = DMatrix::from_row_slice(rows, width, &values);
    Dataset::new(all.columns(0, width - 1).into_owned(), all.column(width - 1).into_owned())
}

/// Query CSV: input columns, with an optional trailing `y` column ignored.
pub fn parse_points_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rdr = reader(input);
    let headers = header_width(&mut rdr)?;
    let width = headers.len();
    let keep = if width > 1 && headers[width - 1].eq_ignore_ascii_case("y") {
        width - 1
    } else {
        width
    };
    let (values, rows) = parse_rows(&mut rdr, width, keep)?;
    if rows == 0 {
        return Err(Error::Data("query file has no rows".into()));
    }
    Ok(DMatrix::from_row_slice(rows, keep, &values))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset_csv(open(path.as_ref())?)
}

pub fn read_points_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_points_csv(open(path.as_ref())?)
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = data.dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(csv_io)?;
    for (row, y) in data.inputs.row_iter().zip(data.targets.iter()) {
        let mut rec: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        rec.push(format_f64(*y));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_points_csv<W: Write>(points: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=points.ncols()).map(|j| format!("x{j}")).collect();
    w.write_record(&header).map_err(csv_io)?;
    for row in points.row_iter() {
        let rec: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("CSV error: {other:?}")),
    }
}
