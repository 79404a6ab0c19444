//! Sample ingestion, synthetic generation and covariance-model statistics.
//!
//! The covariance model treats each sample as `x_i = Σ^{1/2} y_i` with
//! identity-covariance `y_i`. [`covariance_stats`] recovers `Σ`, its extreme
//! eigenvalues and the whitened radius `M = max_i ‖Σ^{-1/2} x_i‖₂`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold below which `λ_p(Σ)` counts as singular.
pub const SINGULAR_REL_TOL: f64 = 1e-10;

/// Where a sample set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    File { path: PathBuf },
    Generator { id: String, seed: u64 },
    InMemory,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::File { path } => write!(f, "file:{}", path.display()),
            Provenance::Generator { id, seed } => write!(f, "{id}(seed={seed})"),
            Provenance::InMemory => f.write_str("in-memory"),
        }
    }
}

/// `n × p` matrix of samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: DMatrix<f64>,
    provenance: Provenance,
}

impl SampleSet {
    pub fn new(data: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::Data(format!("n < 2 (got {} samples)", data.nrows())));
        }
        if data.ncols() < 1 {
            return Err(Error::Data("p < 1".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let (i, j) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::Data(format!("non-finite entry at row {i}, column {j}")));
        }
        Ok(Self { data, provenance })
    }

    pub fn from_rows(rows: &[Vec<f64>], provenance: Provenance) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::Data(format!(
                "row {i} has {} entries, expected {p}",
                r.len()
            )));
        }
        let data = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(data, provenance)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> RowDVector<f64> {
        self.data.row(i).into_owned()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Copy of this set with sample `i` replaced.
    pub fn with_row_replaced(&self, i: usize, replacement: &[f64]) -> Result<Self> {
        if i >= self.n() {
            return Err(Error::Index { index: i, len: self.n() });
        }
        if replacement.len() != self.p() {
            return Err(Error::Dimension {
                expected: self.p(),
                got: replacement.len(),
            });
        }
        let mut data = self.data.clone();
        for (j, v) in replacement.iter().enumerate() {
            data[(i, j)] = *v;
        }
        Self::new(data, self.provenance.clone())
    }
}

/// Options for [`load_csv_with`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Skip the first line; required when `label_col` names a column.
    pub header: bool,
    /// Column split off as labels instead of features.
    pub label_col: Option<String>,
}

/// Reads a headerless numeric CSV (comma- or whitespace-separated).
pub fn load_csv(path: impl AsRef<Path>) -> Result<SampleSet> {
    load_csv_with(path, &CsvOptions::default()).map(|(s, _)| s)
}

/// Reads a numeric CSV, optionally splitting off a label column.
pub fn load_csv_with(
    path: impl AsRef<Path>,
    opts: &CsvOptions,
) -> Result<(SampleSet, Option<Vec<f64>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let table = parse_table(&text, path, opts.header)?;
    let label_idx = match (&opts.label_col, &table.header) {
        (None, _) => None,
        (Some(name), Some(header)) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("no column named {name:?}")))?,
        ),
        (Some(_), None) => {
            return Err(Error::Config("a label column requires a header line".into()))
        }
    };
    let provenance = Provenance::File {
        path: path.to_path_buf(),
    };
    let Some(li) = label_idx else {
        return Ok((SampleSet::from_rows(&table.rows, provenance)?, None));
    };
    let mut labels = Vec::with_capacity(table.rows.len());
    let mut rows = Vec::with_capacity(table.rows.len());
    for mut r in table.rows {
        labels.push(r.remove(li));
        rows.push(r);
    }
    Ok((SampleSet::from_rows(&rows, provenance)?, Some(labels)))
}

pub(crate) struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Parses numeric rows. Line numbers in errors are 1-based file lines.
pub(crate) fn parse_table(text: &str, path: &Path, header: bool) -> Result<Table> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = if header {
        lines
            .next()
            .map(|(_, l)| split_fields(l).into_iter().map(String::from).collect())
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in lines {
        let line_no = lineno + 1;
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let fields = split_fields(line);
        let mut row = Vec::with_capacity(fields.len());
        for tok in fields {
            let v: f64 = tok
                .parse()
                .map_err(|_| perr(format!("cannot parse {tok:?} as a number")))?;
            if !v.is_finite() {
                return Err(perr(format!("non-finite value {tok:?}")));
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(perr(format!("expected {w} fields, found {}", row.len())))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "{}: n < 2 (found {} data rows)",
            path.display(),
            rows.len()
        )));
    }
    Ok(Table { header, rows })
}

/// `n` i.i.d. draws from `𝒩(0, I_p)`, deterministic in `seed`.
pub fn gen_gaussian(n: usize, p: usize, seed: u64) -> Result<SampleSet> {
    if n < 2 || p < 1 {
        return Err(Error::Config(format!(
            "gaussian generator needs n >= 2 and p >= 1 (got n={n}, p={p})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // row-major: sample i consumes draws i*p .. (i+1)*p
    let values: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let data = DMatrix::from_row_slice(n, p, &values);
    SampleSet::new(
        data,
        Provenance::Generator {
            id: format!("gaussian(p={p})"),
            seed,
        },
    )
}

/// Second-moment statistics of a sample set under the whitening model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceStats {
    #[serde(skip)]
    pub sigma: DMatrix<f64>,
    /// Eigenvalues of `Σ`, descending.
    pub eigs_sigma: Vec<f64>,
    /// `λ₁(Σ) − λ_p(Σ)`.
    pub gap_1p: f64,
    /// `max_i ‖Σ^{-1/2} x_i‖₂`.
    pub whitened_radius: f64,
    pub centered: bool,
}

impl CovarianceStats {
    pub fn lambda_max(&self) -> f64 {
        self.eigs_sigma[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigs_sigma.last().expect("p >= 1")
    }
}

/// Computes `Σ`, its spectrum, `λ_{1,p}` and the whitened radius.
///
/// Uncentered mode uses `(1/n) XᵀX`; centered mode subtracts the sample mean
/// first (still normalised by `1/n`) and whitens the centred rows.
pub fn covariance_stats(s: &SampleSet, centered: bool) -> Result<CovarianceStats> {
    let n = s.n();
    let mut x = s.matrix().clone();
    if centered {
        let mean: RowDVector<f64> = x.row_mean();
        for mut row in x.row_iter_mut() {
            row -= &mean;
        }
    }
    let mut sigma = x.transpose() * &x / n as f64;
    sigma = (&sigma + sigma.transpose()) * 0.5;

    let eig = sigma.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigs: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let lambda_1 = eigs[0];
    let lambda_p = *eigs.last().expect("p >= 1");
    let tol = SINGULAR_REL_TOL * lambda_1.max(0.0);
    if !(lambda_p > tol) {
        return Err(Error::SingularCovariance { lambda_p, tol });
    }

    let inv_sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&w| 1.0 / w.max(tol).sqrt()),
    );
    let whiten = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    let y = &x * whiten;
    let whitened_radius = y
        .row_iter()
        .map(|r| r.norm())
        .fold(0.0_f64, f64::max);

    Ok(CovarianceStats {
        sigma,
        gap_1p: (lambda_1 - lambda_p).max(0.0),
        eigs_sigma: eigs,
        whitened_radius,
        centered,
    })
}
