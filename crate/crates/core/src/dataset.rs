//! Datasets, synthetic generators, file ingestion, normalization and fold
//! assignment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when deciding whether the last grid point lies inside the
/// requested interval.
const GRID_TOLERANCE: f64 = 1e-12;

/// `n` input vectors of dimension `d` with one scalar target each.
///
/// Inputs are stored row-major so that `row(i)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major inputs.
    pub fn new(inputs: Vec<f64>, dim: usize, targets: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if targets.is_empty() {
            return Err(Error::InvalidInput("dataset must contain at least one point".into()));
        }
        if inputs.len() != dim * targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} input values do not form {} rows of dimension {}",
                inputs.len(),
                targets.len(),
                dim
            )));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Self {
            dim,
            inputs,
            targets,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} input rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), dim, targets)
    }

    /// One-dimensional dataset.
    pub fn from_1d(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        Self::new(xs, 1, ys)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.inputs.chunks_exact(self.dim)
    }

    #[inline]
    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Row-major input buffer.
    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn max_abs_target(&self) -> f64 {
        self.targets.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    /// Dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Self::new(inputs, self.dim, targets)
    }

    /// Dataset with point `i` removed.
    pub fn without(&self, i: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&j| j != i).collect();
        self.subset(&keep)
    }

    /// Same inputs with targets replaced.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        Self::new(self.inputs.clone(), self.dim, targets)
    }

    /// CSV text with header `x1,...,xd,y`.
    pub fn to_csv(&self) -> String {
        let mut out = csv_header(self.dim, true);
        for (row, y) in self.rows().zip(&self.targets) {
            for v in row {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{y}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV file with a mandatory header. The last column must be
    /// named `y` and holds the targets; every other column is an input.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let table = CsvTable::read(path)?;
        let y_col = table.header.iter().position(|h| h == "y").ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "header has no `y` column".into(),
        })?;
        let dim = table.header.len() - 1;
        if dim == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "header has no input columns".into(),
            });
        }
        let mut inputs = Vec::with_capacity(table.rows.len() * dim);
        let mut targets = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            for (c, v) in row.iter().enumerate() {
                if c == y_col {
                    targets.push(*v);
                } else {
                    inputs.push(*v);
                }
            }
        }
        Self::new(inputs, dim, targets)
    }
}

/// Reads query inputs from a CSV with header. Columns named `y` are ignored,
/// so a dataset CSV can be used directly as a query file. Returns the input
/// dimension (from the header) and the row-major inputs.
pub fn read_inputs_csv(path: impl AsRef<Path>) -> Result<(usize, Vec<Vec<f64>>)> {
    let table = CsvTable::read(path.as_ref())?;
    let keep: Vec<usize> = (0..table.header.len()).filter(|&c| table.header[c] != "y").collect();
    let rows = table
        .rows
        .iter()
        .map(|r| keep.iter().map(|&c| r[c]).collect())
        .collect();
    Ok((keep.len(), rows))
}

pub(crate) fn csv_header(dim: usize, with_target: bool) -> String {
    let mut out: Vec<String> = (1..=dim).map(|m| format!("x{m}")).collect();
    if with_target {
        out.push("y".into());
    }
    out.join(",") + "\n"
}

struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl CsvTable {
    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let header: Vec<String> = match lines.next() {
            Some((_, l)) => l.split(',').map(|h| h.trim().to_string()).collect(),
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: "missing header row".into(),
                })
            }
        };
        let mut rows = Vec::new();
        for (lineno, line) in lines {
            let row = parse_fields(line.split(','), header.len()).map_err(|message| {
                Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message,
                }
            })?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

fn parse_fields<'a>(
    fields: impl Iterator<Item = &'a str>,
    expected: usize,
) -> std::result::Result<Vec<f64>, String> {
    let row = fields
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("non-numeric token `{t}`"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if row.len() != expected {
        return Err(format!("expected {expected} columns, found {}", row.len()));
    }
    Ok(row)
}

/// `sin(pi x) / (pi x)` with the removable singularity at 0 filled in.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Equally spaced one-dimensional grid `lo + i * step` (not exceeding `hi`)
/// with sinc targets.
pub fn gen_sinc(lo: f64, hi: f64, step: f64) -> Result<Dataset> {
    if !(step > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!(
            "invalid grid lo = {lo}, hi = {hi}, step = {step}"
        )));
    }
    let xs: Vec<f64> = (0..)
        .map(|i| lo + i as f64 * step)
        .take_while(|&x| x <= hi + GRID_TOLERANCE)
        .collect();
    let ys = xs.iter().map(|&x| sinc(x)).collect();
    Dataset::from_1d(xs, ys)
}

/// Training set of the first sinc experiment (spacing 0.2 on [-5, 5]).
pub fn sinc1_train() -> Dataset {
    gen_sinc(-5.0, 5.0, 0.2).expect("static grid")
}

/// Training set of the second sinc experiment (spacing 0.5 on [-5, 5]).
pub fn sinc2_train() -> Dataset {
    gen_sinc(-5.0, 5.0, 0.5).expect("static grid")
}

/// Shared sinc test set (spacing 0.1 from -5.01).
pub fn sinc_test() -> Dataset {
    gen_sinc(-5.01, 5.0, 0.1).expect("static grid")
}

/// Loads the yacht hydrodynamics table: seven numeric columns per record,
/// the last being the target. Whitespace-delimited input is the default; a
/// comma in the first record switches to comma-delimited parsing, in which
/// case a non-numeric header row is skipped.
pub fn load_yacht(path: impl AsRef<Path>) -> Result<Dataset> {
    const COLUMNS: usize = 7;
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let comma = lines.peek().is_some_and(|(_, l)| l.contains(','));
    if comma {
        if let Some((_, first)) = lines.peek() {
            if first.split(',').all(|t| t.trim().parse::<f64>().is_err()) {
                lines.next();
            }
        }
    }

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (lineno, line) in lines {
        let parsed = if comma {
            parse_fields(line.split(','), COLUMNS)
        } else {
            parse_fields(line.split_whitespace(), COLUMNS)
        };
        let row = parsed.map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        })?;
        inputs.extend_from_slice(&row[..COLUMNS - 1]);
        targets.push(row[COLUMNS - 1]);
    }
    if targets.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "no records".into(),
        });
    }
    Dataset::new(inputs, COLUMNS - 1, targets)
}

/// Per-dimension affine map `x -> (x - location) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    /// Z-score statistics of the training inputs. The standard deviation uses
    /// the `1/n` convention; constant dimensions get scale 1.
    pub fn fit(train: &Dataset) -> Self {
        let n = train.len() as f64;
        let d = train.dim();
        let mut location = vec![0.0; d];
        for row in train.rows() {
            for (m, v) in row.iter().enumerate() {
                location[m] += v;
            }
        }
        location.iter_mut().for_each(|s| *s /= n);
        let mut var = vec![0.0; d];
        for row in train.rows() {
            for (m, v) in row.iter().enumerate() {
                var[m] += (v - location[m]).powi(2);
            }
        }
        let scale = var
            .iter()
            .zip(&location)
            .map(|(v, mu)| {
                let sd = (v / n).sqrt();
                if sd <= 1e-12 * mu.abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { location, scale }
    }

    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.location.iter().zip(&self.scale))
            .map(|(v, (mu, s))| (v - mu) / s)
            .collect()
    }

    /// Normalizes the inputs of `data`; targets are left untouched.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.location.len() {
            return Err(Error::DimensionMismatch {
                expected: self.location.len(),
                got: data.dim(),
            });
        }
        let inputs = data.rows().flat_map(|r| self.apply_point(r)).collect();
        Dataset::new(inputs, data.dim(), data.targets().to_vec())
    }
}

pub fn fit_normalizer(train: &Dataset) -> Normalizer {
    Normalizer::fit(train)
}

pub fn apply_normalizer(norm: &Normalizer, data: &Dataset) -> Result<Dataset> {
    norm.apply(data)
}

/// Fold index for every data point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: usize,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle of `0..n` dealt round-robin into `folds` folds.
pub fn kfold(n: usize, folds: usize, seed: u64) -> Result<FoldAssignment> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidInput(format!(
            "fold count {folds} must lie in [2, {n}]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (slot, &i) in order.iter().enumerate() {
        assignment[i] = slot % folds;
    }
    Ok(FoldAssignment { folds, assignment })
}
