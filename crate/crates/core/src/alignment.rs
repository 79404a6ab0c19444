//! Kernel target-alignment and its concentration bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundValue;
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::spectral::{self, GAP_REL_TOL};

/// `±1` class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    pub fn new(labels: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = labels.iter().enumerate().find(|(_, v)| **v != 1.0 && **v != -1.0) {
            return Err(Error::Data(format!("label {i} is {v}, expected +1 or -1")));
        }
        Ok(Self(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `A(K) = YᵀKY / (n ‖K‖_F)`.
pub fn kta(g: &GramMatrix, y: &LabelVector) -> Result<f64> {
    kta_matrix(&g.entries, y)
}

pub fn kta_matrix(k: &DMatrix<f64>, y: &LabelVector) -> Result<f64> {
    let n = k.nrows();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    let frob = k.norm();
    if frob == 0.0 {
        return Err(Error::degenerate("kta", "kernel matrix is zero"));
    }
    let yv = DVector::from_column_slice(y.as_slice());
    let quad = yv.dot(&(k * &yv));
    Ok(quad / (n as f64 * frob))
}

/// How row/column `s` is removed when forming `K^s` for θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// Delete row and column `s` (an `(n−1) × (n−1)` principal submatrix).
    #[default]
    Drop,
    /// Overwrite row and column `s` with zeros, keeping size `n`.
    Zero,
}

impl std::str::FromStr for ThetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(ThetaMode::Drop),
            "zero" => Ok(ThetaMode::Zero),
            _ => Err(Error::Config(format!("unknown theta mode {s:?} (drop|zero)"))),
        }
    }
}

/// `min_i λ_i(K^s)/λ_i(K)` over `i = 1..n−1` for one removed sample `s`.
pub fn theta_ratio(k: &DMatrix<f64>, parent: &[f64], s: usize, mode: ThetaMode) -> Result<f64> {
    let child = match mode {
        ThetaMode::Drop => spectral::principal_submatrix_of(k, s)?,
        ThetaMode::Zero => {
            let mut z = k.clone();
            z.row_mut(s).fill(0.0);
            z.column_mut(s).fill(0.0);
            z
        }
    };
    let mu = spectral::eigenvalues_sym(&child);
    Ok(parent[..parent.len() - 1]
        .iter()
        .zip(&mu)
        .map(|(l, m)| m / l)
        .fold(f64::INFINITY, f64::min))
}

/// `θ = 1 − max_s min_i λ_i(K^s)/λ_i(K)`.
pub fn theta(g: &GramMatrix, mode: ThetaMode) -> Result<f64> {
    let k = &g.entries;
    let n = k.nrows();
    if n < 3 {
        return Err(Error::degenerate("kta_theta", format!("theta needs n >= 3, got {n}")));
    }
    let parent = spectral::eigenvalues_sym(k);
    let tol = GAP_REL_TOL * (1.0 + parent[0].abs());
    let tiny: Vec<usize> = parent[..n - 1]
        .iter()
        .enumerate()
        .filter(|(_, l)| !(**l > tol))
        .map(|(i, _)| i + 1)
        .collect();
    if !tiny.is_empty() {
        let shown: Vec<String> = tiny.iter().take(8).map(usize::to_string).collect();
        let more = if tiny.len() > 8 { format!(" (+{} more)", tiny.len() - 8) } else { String::new() };
        return Err(Error::degenerate(
            "kta_theta",
            format!(
                "eigenvalue ratios undefined: λ_i <= {tol:e} for i = {}{more}",
                shown.join(", ")
            ),
        ));
    }
    let ratios: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|s| theta_ratio(k, &parent, s, mode))
        .collect::<Result<_>>()?;
    let worst = ratios.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok((1.0 - worst).clamp(0.0, 1.0))
}

/// `L = √(Σ_{i=2}^{n−1} λ_i²)`: the spectrum without its extremes.
pub fn middle_norm(eigenvalues: &[f64]) -> f64 {
    let n = eigenvalues.len();
    if n < 3 {
        return 0.0;
    }
    eigenvalues[1..n - 1].iter().map(|l| l * l).sum::<f64>().sqrt()
}

/// `C(θ) = |A| θ⁻¹ (m − (m−1)θ + (2n−1)/‖K‖)`.
pub fn c_theta(a: f64, theta: f64, m: f64, n: usize, frob: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::degenerate("kta_theta", format!("theta = {theta} must be > 0")));
    }
    Ok(a.abs() / theta * (m - (m - 1.0) * theta + (2.0 * n as f64 - 1.0) / frob))
}

pub fn kta_bound_jl(n: usize, c_theta: f64, eps: f64) -> f64 {
    let nm1 = n as f64 - 1.0;
    2.0 * (-2.0 * eps * eps * nm1 * nm1 / (n as f64 * c_theta * c_theta)).exp()
}

/// `D = A·|1/(n−1) − ratio| + (2 + 1/(n−1))/L` with `ratio = ‖K‖/L` (or its
/// `λ₁/λ₂` approximation).
pub fn kta_difference(a: f64, n: usize, ratio: f64, l: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::degenerate(
            "kta_spectral",
            format!("L = {l:e}; needs at least two nonzero middle eigenvalues"),
        ));
    }
    let inv = 1.0 / (n as f64 - 1.0);
    let d = a * (inv - ratio).abs() + (2.0 + inv) / l;
    if d < 0.0 {
        return Err(Error::degenerate(
            "kta_spectral",
            format!("negative difference bound {d:e} (alignment {a} < 0: kernel not PSD)"),
        ));
    }
    Ok(d)
}

/// `2 exp(−2ε²/D)`
pub fn kta_bound_new(d: f64, eps: f64) -> f64 {
    2.0 * (-2.0 * eps * eps / d).exp()
}

/// `2 exp(−2ε²/(n D²))`
pub fn kta_bound_bdiff(n: usize, d: f64, eps: f64) -> f64 {
    2.0 * (-2.0 * eps * eps / (n as f64 * d * d)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentBounds {
    pub epsilon: f64,
    pub jl: Option<BoundValue>,
    pub spectral: Option<BoundValue>,
    pub spectral_bdiff: Option<BoundValue>,
    pub spectral_approx: Option<BoundValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub n: usize,
    pub a_kn: f64,
    pub l: f64,
    pub frob: f64,
    pub ratio: f64,
    pub ratio_approx: f64,
    pub theta: Option<f64>,
    pub theta_mode: ThetaMode,
    pub theta_error: Option<String>,
    /// `m` in `C(θ)`; set to `n`.
    pub m: f64,
    pub c_theta: Option<f64>,
    pub d: Option<f64>,
    pub d_approx: Option<f64>,
    pub per_eps: Vec<AlignmentBounds>,
}

/// Alignment, θ, `L` and both families of bounds over an `ε` grid.
pub fn alignment_report(
    g: &GramMatrix,
    y: &LabelVector,
    mode: ThetaMode,
    epsilons: &[f64],
) -> Result<AlignmentReport> {
    crate::bounds::validate_epsilons(epsilons)?;
    let n = g.n();
    let a_kn = kta(g, y)?;
    let ev = spectral::eigenvalues_sym(&g.entries);
    let frob = g.entries.norm();
    let l = middle_norm(&ev);
    let ratio = frob / l;
    let ratio_approx = ev[0] / ev[1];
    let (theta, theta_error) = match theta(g, mode) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let m = n as f64;
    let c = theta.and_then(|t| c_theta(a_kn, t, m, n, frob).ok());
    let d = kta_difference(a_kn, n, ratio, l).ok();
    let d_approx = kta_difference(a_kn, n, ratio_approx, l).ok();
    let per_eps = epsilons
        .iter()
        .map(|&eps| AlignmentBounds {
            epsilon: eps,
            jl: c.map(|c| kta_bound_jl(n, c, eps).into()),
            spectral: d.map(|d| kta_bound_new(d, eps).into()),
            spectral_bdiff: d.map(|d| kta_bound_bdiff(n, d, eps).into()),
            spectral_approx: d_approx.map(|d| kta_bound_new(d, eps).into()),
        })
        .collect();
    Ok(AlignmentReport {
        n,
        a_kn,
        l,
        frob,
        ratio,
        ratio_approx,
        theta,
        theta_mode: mode,
        theta_error,
        m,
        c_theta: c,
        d,
        d_approx,
        per_eps,
    })
}
