//! The missing-response data model `(m, x, y)`, CSV input/output and the
//! log/standardize preprocessing used for real data.
//!
//! CSV layout: a header row, an indicator column `m` holding literal `0`/`1`,
//! a response column `y` (empty when `m = 0`), feature columns `x1..xd`, and
//! optionally a `pi` column with known observation probabilities.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<Option<f64>>,
    m: Vec<bool>,
    true_pi: Option<Vec<f64>>,
    y_full: Option<Vec<f64>>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Validates the `(m, x, y)` triple: lengths agree and every observed row
    /// carries a finite response. Responses on unobserved rows are dropped.
    pub fn new(x: Matrix, y: Vec<Option<f64>>, m: Vec<bool>) -> Result<Self> {
        let n = x.rows();
        if n == 0 || x.cols() == 0 {
            return Err(Error::BadSize(format!("dataset must be non-empty, got {}x{}", n, x.cols())));
        }
        for len in [y.len(), m.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        let mut y = y;
        for (i, (yi, &mi)) in y.iter_mut().zip(&m).enumerate() {
            if mi {
                match yi {
                    Some(v) if v.is_finite() => {}
                    Some(_) => return Err(Error::NonFinite { index: i }),
                    None => {
                        return Err(Error::SchemaViolation {
                            row: i + 1,
                            message: "response missing on an observed row".into(),
                        })
                    }
                }
            } else {
                *yi = None;
            }
        }
        let feature_names = (1..=x.cols()).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            x,
            y,
            m,
            true_pi: None,
            y_full: None,
            feature_names,
        })
    }

    /// Fully observed dataset.
    pub fn complete(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let m = vec![true; y.len()];
        Dataset::new(x, y.into_iter().map(Some).collect(), m)
    }

    /// Attaches known observation probabilities, each in `(0, 1]`.
    pub fn with_true_pi(mut self, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: pi.len() });
        }
        if let Some(i) = pi.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::SchemaViolation {
                row: i + 1,
                message: format!("pi = {} outside (0, 1]", pi[i]),
            });
        }
        self.true_pi = Some(pi);
        Ok(self)
    }

    /// Attaches the full (unmasked) response, simulation only.
    pub fn with_full_response(mut self, y_full: Vec<f64>) -> Result<Self> {
        if y_full.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: y_full.len() });
        }
        self.y_full = Some(y_full);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), found: names.len() });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[Option<f64>] {
        &self.y
    }

    pub fn m(&self) -> &[bool] {
        &self.m
    }

    pub fn true_pi(&self) -> Option<&[f64]> {
        self.true_pi.as_deref()
    }

    pub fn full_response(&self) -> Option<&[f64]> {
        self.y_full.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn observed_count(&self) -> usize {
        self.m.iter().filter(|&&b| b).count()
    }

    pub fn complete_indices(&self) -> Vec<usize> {
        self.m.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    /// Responses with unobserved entries replaced by zero.
    pub fn y_zero_filled(&self) -> Vec<f64> {
        self.y.iter().map(|v| v.unwrap_or(0.0)).collect()
    }

    /// Indicator as 0/1 reals.
    pub fn m_f64(&self) -> Vec<f64> {
        self.m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Rows `idx`, in order, carrying every optional column along.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            m: idx.iter().map(|&i| self.m[i]).collect(),
            true_pi: self.true_pi.as_ref().map(pick),
            y_full: self.y_full.as_ref().map(pick),
            feature_names: self.feature_names.clone(),
        }
    }

    /// The complete-case rows only.
    pub fn complete_cases(&self) -> Dataset {
        self.subset(&self.complete_indices())
    }

    /// Same covariates with a replaced indicator; responses must cover the
    /// newly observed rows. Test-only helper for forced missingness patterns.
    pub fn with_indicator(&self, m: Vec<bool>) -> Result<Dataset> {
        let y = match &self.y_full {
            Some(full) => full.iter().map(|&v| Some(v)).collect(),
            None => self.y.clone(),
        };
        let mut out = Dataset::new(self.x.clone(), y, m)?;
        out.true_pi = self.true_pi.clone();
        out.y_full = self.y_full.clone();
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    pub(crate) fn replace_parts(&self, x: Matrix, y: Vec<Option<f64>>) -> Dataset {
        Dataset {
            x,
            y,
            m: self.m.clone(),
            true_pi: self.true_pi.clone(),
            y_full: self.y_full.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub indicator: String,
    pub response: String,
    /// Feature columns in order. Empty means every `x<k>` column in header order.
    pub features: Vec<String>,
    /// Optional column with known observation probabilities.
    pub pi: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            indicator: "m".into(),
            response: "y".into(),
            features: Vec::new(),
            pi: Some("pi".into()),
        }
    }
}

fn is_default_feature(name: &str) -> bool {
    name.strip_prefix('x')
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

fn parse_cell(s: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::ParseError {
        row,
        column: column.to_string(),
        message: format!("'{s}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::ParseError {
            row,
            column: column.to_string(),
            message: "non-finite value".into(),
        });
    }
    Ok(v)
}

/// Reads a dataset. Row numbers in errors count data rows from 1.
///
/// The `pi` column of the schema is optional: it is read when present in the
/// header and ignored otherwise.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::SchemaViolation {
            row: 0,
            message: format!("header has no column '{name}'"),
        })
    };
    let mi = find(&schema.indicator)?;
    let yi = find(&schema.response)?;
    let feature_cols: Vec<usize> = if schema.features.is_empty() {
        header
            .iter()
            .enumerate()
            .filter(|(_, h)| is_default_feature(h))
            .map(|(i, _)| i)
            .collect()
    } else {
        schema.features.iter().map(|f| find(f)).collect::<Result<_>>()?
    };
    if feature_cols.is_empty() {
        return Err(Error::SchemaViolation {
            row: 0,
            message: "no feature columns".into(),
        });
    }
    let pi_col = schema.pi.as_deref().and_then(|p| header.iter().position(|h| h == p));

    let d = feature_cols.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ms = Vec::new();
    let mut pis = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let m = match cell(mi).trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::SchemaViolation {
                    row,
                    message: format!("indicator '{other}' is not 0 or 1"),
                })
            }
        };
        let ycell = cell(yi).trim();
        let y = if !m {
            None
        } else if ycell.is_empty() {
            return Err(Error::SchemaViolation {
                row,
                message: "empty response on an observed row".into(),
            });
        } else {
            Some(parse_cell(ycell, row, &header[yi])?)
        };
        for &j in &feature_cols {
            xs.push(parse_cell(cell(j), row, &header[j])?);
        }
        if let Some(j) = pi_col {
            pis.push(parse_cell(cell(j), row, &header[j])?);
        }
        ys.push(y);
        ms.push(m);
    }
    if ms.is_empty() {
        return Err(Error::EmptyFile);
    }
    let x = Matrix::new(ms.len(), d, xs)?;
    let names = feature_cols.iter().map(|&j| header[j].clone()).collect();
    let mut ds = Dataset::new(x, ys, ms)?.with_feature_names(names)?;
    if pi_col.is_some() {
        ds = ds.with_true_pi(pis)?;
    }
    Ok(ds)
}

/// Writes `m,y,<features>[,pi]`. Floats use the shortest representation that
/// parses back to the same `f64`.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(ds, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_csv(ds: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    write!(w, "m,y")?;
    for name in &ds.feature_names {
        write!(w, ",{name}")?;
    }
    if ds.true_pi.is_some() {
        write!(w, ",pi")?;
    }
    writeln!(w)?;
    for i in 0..ds.n() {
        match ds.y[i] {
            Some(y) if ds.m[i] => write!(w, "1,{y}")?,
            _ => write!(w, "0,")?,
        }
        for v in ds.x.row(i) {
            write!(w, ",{v}")?;
        }
        if let Some(pi) = &ds.true_pi {
            write!(w, ",{}", pi[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformTarget {
    Feature(usize),
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Log,
    Standardize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTransform {
    pub target: TransformTarget,
    pub kind: TransformKind,
    /// `(mean, sd)` once fitted; standardize only.
    pub stats: Option<(f64, f64)>,
}

impl ColumnTransform {
    pub fn log(target: TransformTarget) -> Self {
        ColumnTransform { target, kind: TransformKind::Log, stats: None }
    }

    pub fn standardize(target: TransformTarget) -> Self {
        ColumnTransform { target, kind: TransformKind::Standardize, stats: None }
    }
}

/// Applies log transforms, then standardizations. With `fit = true` the
/// standardization statistics come from `ds` (observed responses only for
/// the response column); otherwise each transform must carry fitted stats.
pub fn apply_transforms(
    ds: &Dataset,
    transforms: &[ColumnTransform],
    fit: bool,
) -> Result<(Dataset, Vec<ColumnTransform>)> {
    let mut ordered: Vec<ColumnTransform> = transforms.to_vec();
    ordered.sort_by_key(|t| match t.kind {
        TransformKind::Log => 0,
        TransformKind::Standardize => 1,
    });

    let n = ds.n();
    let mut x = ds.x.clone();
    let mut y = ds.y.clone();
    for t in &mut ordered {
        let name = match t.target {
            TransformTarget::Feature(j) => {
                if j >= ds.d() {
                    return Err(Error::DimensionMismatch { expected: ds.d(), found: j + 1 });
                }
                ds.feature_names[j].clone()
            }
            TransformTarget::Response => "y".to_string(),
        };
        let mut values: Vec<f64> = match t.target {
            TransformTarget::Feature(j) => x.col_values(j),
            TransformTarget::Response => y.iter().flatten().copied().collect(),
        };
        match t.kind {
            TransformKind::Log => {
                if let Some(&bad) = values.iter().find(|&&v| !(v > 0.0)) {
                    return Err(Error::NonPositiveLog { column: name, value: bad });
                }
                values.iter_mut().for_each(|v| *v = v.ln());
            }
            TransformKind::Standardize => {
                if fit {
                    let k = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / k;
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
                    let sd = var.sqrt();
                    if !(sd > 0.0) {
                        return Err(Error::ZeroVariance { column: name });
                    }
                    t.stats = Some((mean, sd));
                }
                let (mean, sd) = t.stats.ok_or_else(|| {
                    Error::InvalidArgument(format!("standardize on '{name}' has no fitted stats"))
                })?;
                if !(sd > 0.0) {
                    return Err(Error::ZeroVariance { column: name });
                }
                values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            }
        }
        match t.target {
            TransformTarget::Feature(j) => {
                for (i, v) in values.into_iter().enumerate().take(n) {
                    x.set(i, j, v);
                }
            }
            TransformTarget::Response => {
                let mut it = values.into_iter();
                for yi in y.iter_mut().filter(|v| v.is_some()) {
                    *yi = it.next();
                }
            }
        }
    }
    Ok((ds.replace_parts(x, y), ordered))
}

/// Uniform random train/test partition; both parts keep the original row order.
pub fn split(ds: &Dataset, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.n(), n_test, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

pub(crate) fn split_indices(n: usize, n_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_test == 0 || n_test >= n {
        return Err(Error::BadSize(format!("need 0 < n_test < n, got n_test={n_test}, n={n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}
