//! Closed-form concentration bounds.
//!
//! Every function here is a pure formula over precomputed statistics and
//! returns the *raw* right-hand side, which may exceed 1. [`BoundValue`]
//! carries the clipped value and a vacuity flag for reporting.
//!
//! Scaling conventions: the deviation statistic is `(1/n)·λ_i(G)` for the
//! Gram matrix `G` whose eigenvalues enter the gap-based bounds; the
//! covariance-coupled bounds (second-order and eigenvector bounds) combine
//! the perturbation-norm estimate for the `1/n`-scaled matrix with gaps of
//! that same scaled matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::alignment::{self, ThetaMode};
use crate::dataset::{self, CovarianceStats, SampleSet};
use crate::error::{Error, Result};
use crate::kernel::{self, Geometry, GramMatrix, KernelSpec, Scaling};
use crate::spectral::{self, GapProfile, Spectrum};

/// Identifies one bound formula in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    /// `2 exp(−2nε²/R⁴)`
    UniformDiag,
    /// `2 exp(−2ε²/(θ²λ₁²))`
    ThetaLambda1,
    /// `exp(−2nε²/λ_{i,i+1}²)`
    SpectralGap,
    /// Same formula with the gap taken from the `1/n`-scaled matrix.
    SpectralGapScaled,
    /// `exp(−2nε²/λ_{1,k+1}²)`
    TopkGap,
    /// `exp(−2nε²/λ_{k,n}²)`
    TailGap,
    /// `exp(−n²ε²/(18 M⁴|f|_L² λ_{1,p}²))`
    CovDistance,
    /// `exp(−n²ε²/(4 |f|_L² M⁴ λ_{1,p}²))`
    CovInner,
    /// `exp(−2nε²/B²)` with `B = 12 M²|f|_L λ₁(Σ)/√n`
    CovConservative,
    /// `exp(−n²ε²/γ²)`, `γ` with squared gaps
    SecondOrder,
    /// `exp(−n²ε²/γ′²)`, `γ′` with the resolvent sum `R_i`
    SecondOrderUnsquared,
    /// `exp(−ε²/(18 M⁴|f|_L² R_i² λ_{1,p}²))`
    EigvecPointwise,
    /// `2 exp(2n − cε²)`
    EigvecUniform,
    /// `2 exp(−2ε²(n−1)²/(n C²(θ)))`
    KtaTheta,
    /// `2 exp(−2ε²/D)`
    KtaSpectral,
    /// `2 exp(−2ε²/(n D²))`
    KtaSpectralBdiff,
    /// `KtaSpectral` with `‖K‖/L ≈ λ₁/λ₂`
    KtaSpectralApprox,
}

impl TheoremId {
    pub const ALL: [TheoremId; 17] = [
        TheoremId::UniformDiag,
        TheoremId::ThetaLambda1,
        TheoremId::SpectralGap,
        TheoremId::SpectralGapScaled,
        TheoremId::TopkGap,
        TheoremId::TailGap,
        TheoremId::CovDistance,
        TheoremId::CovInner,
        TheoremId::CovConservative,
        TheoremId::SecondOrder,
        TheoremId::SecondOrderUnsquared,
        TheoremId::EigvecPointwise,
        TheoremId::EigvecUniform,
        TheoremId::KtaTheta,
        TheoremId::KtaSpectral,
        TheoremId::KtaSpectralBdiff,
        TheoremId::KtaSpectralApprox,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::UniformDiag => "uniform_diag",
            TheoremId::ThetaLambda1 => "theta_lambda1",
            TheoremId::SpectralGap => "spectral_gap",
            TheoremId::SpectralGapScaled => "spectral_gap_scaled",
            TheoremId::TopkGap => "topk_gap",
            TheoremId::TailGap => "tail_gap",
            TheoremId::CovDistance => "cov_distance",
            TheoremId::CovInner => "cov_inner",
            TheoremId::CovConservative => "cov_conservative",
            TheoremId::SecondOrder => "second_order",
            TheoremId::SecondOrderUnsquared => "second_order_unsquared",
            TheoremId::EigvecPointwise => "eigvec_pointwise",
            TheoremId::EigvecUniform => "eigvec_uniform",
            TheoremId::KtaTheta => "kta_theta",
            TheoremId::KtaSpectral => "kta_spectral",
            TheoremId::KtaSpectralBdiff => "kta_spectral_bdiff",
            TheoremId::KtaSpectralApprox => "kta_spectral_approx",
        }
    }

    /// Value of the bound at `ε = 0` before clipping.
    pub fn prefactor(self) -> f64 {
        match self {
            TheoremId::UniformDiag
            | TheoremId::ThetaLambda1
            | TheoremId::KtaTheta
            | TheoremId::KtaSpectral
            | TheoremId::KtaSpectralBdiff
            | TheoremId::KtaSpectralApprox => 2.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown bound {s:?}")))
    }
}

/// Raw and report-ready forms of one bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub raw: f64,
    pub clipped: f64,
    /// `raw ≥ 1`: the inequality carries no information.
    pub vacuous: bool,
}

impl From<f64> for BoundValue {
    fn from(raw: f64) -> Self {
        Self {
            raw,
            clipped: raw.clamp(0.0, 1.0),
            vacuous: raw >= 1.0,
        }
    }
}

fn require_positive(theorem: &'static str, what: &str, v: f64, tol: f64) -> Result<()> {
    if v > tol && v.is_finite() {
        Ok(())
    } else {
        Err(Error::degenerate(
            theorem,
            format!("{what} = {v:e} is not above tolerance {tol:e}"),
        ))
    }
}

pub fn bound_trace_uniform(n: usize, r_squared: f64, eps: f64) -> f64 {
    let r4 = r_squared * r_squared;
    2.0 * (-2.0 * n as f64 * eps * eps / r4).exp()
}

pub fn bound_theta(theta: f64, lambda1: f64, eps: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::degenerate(
            "theta_lambda1",
            format!("theta must lie in (0, 1], got {theta}"),
        ));
    }
    let denom = theta * theta * lambda1 * lambda1;
    Ok(2.0 * (-2.0 * eps * eps / denom).exp())
}

/// Gap bound from an explicit gap value.
pub fn gap_formula(n: usize, gap: f64, eps: f64) -> f64 {
    (-2.0 * n as f64 * eps * eps / (gap * gap)).exp()
}

pub fn bound_gap(n: usize, profile: &GapProfile, eps: f64) -> Result<f64> {
    let gap = profile.gap_next()?;
    if !(gap > profile.tol_gap) {
        return Err(Error::degenerate(
            "spectral_gap",
            format!(
                "theorem assumes distinct eigenvalues: gap after eigenvalue {} is {gap:e}",
                profile.index + 1
            ),
        ));
    }
    Ok(gap_formula(n, gap, eps))
}

/// Bound for the sum of the `k` largest eigenvalues, `1 ≤ k < n`.
pub fn bound_topk_sum(n: usize, spectrum: &Spectrum, k: usize, eps: f64) -> Result<f64> {
    if k == 0 || k >= spectrum.n() {
        return Err(Error::Index { index: k, len: spectrum.n() });
    }
    let gap = spectrum.range_gap(0, k)?;
    if !(gap > spectrum.tol_gap()) {
        return Err(Error::degenerate(
            "topk_gap",
            format!("theorem assumes distinct eigenvalues: λ_1 − λ_{} = {gap:e}", k + 1),
        ));
    }
    Ok(gap_formula(n, gap, eps))
}

/// Bound for the sum `λ_k + … + λ_n`, `1 ≤ k ≤ n`.
pub fn bound_tail_sum(n: usize, spectrum: &Spectrum, k: usize, eps: f64) -> Result<f64> {
    let len = spectrum.n();
    if k == 0 || k > len {
        return Err(Error::Index { index: k, len });
    }
    let gap = spectrum.range_gap(k - 1, len - 1)?;
    if !(gap > spectrum.tol_gap()) {
        return Err(Error::degenerate(
            "tail_gap",
            format!("theorem assumes distinct eigenvalues: λ_{k} − λ_{len} = {gap:e}"),
        ));
    }
    Ok(gap_formula(n, gap, eps))
}

/// Upper bounds on `‖E‖` for a replace-one perturbation of the `1/n`-scaled
/// Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNormBound {
    /// `6M²|f|_L λ_{1,p}/√n` (distance) or `2M²|f|_L λ_{1,p}/√n` (inner product).
    pub printed: f64,
    /// `12M²|f|_L λ₁(Σ)/√n`.
    ///
    /// The printed form vanishes for isotropic `Σ` while `E` does not. For
    /// whitened norms `≤ M` both `|‖x_i − x‖² − ‖x_i − x′‖²|` and
    /// `|x_iᵀx − x_iᵀx′|` are at most `5M²λ₁(Σ)`, and an arrow matrix with
    /// entries bounded by `c/n` has norm at most `2c/√n`.
    pub conservative: f64,
}

pub fn error_norm_bound(
    geometry: Geometry,
    cov: &CovarianceStats,
    lip: f64,
    n: usize,
) -> ErrorNormBound {
    let m2 = cov.whitened_radius * cov.whitened_radius;
    let root_n = (n as f64).sqrt();
    let factor = match geometry {
        Geometry::Distance => 6.0,
        Geometry::InnerProduct => 2.0,
    };
    ErrorNormBound {
        printed: factor * m2 * lip * cov.gap_1p / root_n,
        conservative: 12.0 * m2 * lip * cov.lambda_max() / root_n,
    }
}

fn require_cov_gap(theorem: &'static str, cov: &CovarianceStats) -> Result<()> {
    let tol = spectral::GAP_REL_TOL * (1.0 + cov.lambda_max().abs());
    if cov.gap_1p > tol {
        Ok(())
    } else {
        Err(Error::degenerate(
            theorem,
            format!(
                "covariance gap λ_1(Σ) − λ_p(Σ) = {:e} vanishes (isotropic or one-dimensional data)",
                cov.gap_1p
            ),
        ))
    }
}

pub fn bound_distance(n: usize, cov: &CovarianceStats, lip: f64, eps: f64) -> Result<f64> {
    require_cov_gap("cov_distance", cov)?;
    let m4 = cov.whitened_radius.powi(4);
    let nf = n as f64;
    Ok((-(nf * nf) * eps * eps / (18.0 * m4 * lip * lip * cov.gap_1p * cov.gap_1p)).exp())
}

pub fn bound_inner(n: usize, cov: &CovarianceStats, lip: f64, eps: f64) -> Result<f64> {
    require_cov_gap("cov_inner", cov)?;
    let m4 = cov.whitened_radius.powi(4);
    let nf = n as f64;
    Ok((-(nf * nf) * eps * eps / (4.0 * lip * lip * m4 * cov.gap_1p * cov.gap_1p)).exp())
}

/// Bounded-difference bound for `(1/n)λ_i` when one replacement moves the
/// scaled matrix by at most `norm_bound` in spectral norm.
pub fn bound_from_norm(n: usize, norm_bound: f64, eps: f64) -> Result<f64> {
    require_positive("cov_conservative", "perturbation norm bound", norm_bound, 0.0)?;
    Ok((-2.0 * n as f64 * eps * eps / (norm_bound * norm_bound)).exp())
}

/// Both forms of the second-order constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gamma {
    /// First term plus `36M⁴|f|_L²(λ_{1,p}²/n) Σ_{j≠i} 1/λ_{j,i}²`.
    pub printed: f64,
    /// First term plus `36M⁴|f|_L²(λ_{1,p}²/n) R_i`.
    pub unsquared: f64,
    /// `6M²|f|_L λ_{1,p}/√n`
    pub first_term: f64,
    /// `‖E‖` estimate below half the distance from `λ_i` to the rest of the spectrum.
    pub expansion_valid: bool,
}

/// `profile` must come from the `1/n`-scaled matrix.
pub fn gamma(n: usize, cov: &CovarianceStats, lip: f64, profile: &GapProfile) -> Result<Gamma> {
    if profile.degenerate {
        return Err(Error::degenerate(
            "second_order",
            format!(
                "theorem assumes distinct eigenvalues: eigenvalue {} has a gap of {:e}",
                profile.index + 1,
                profile.min_gap
            ),
        ));
    }
    let m2 = cov.whitened_radius * cov.whitened_radius;
    let nf = n as f64;
    let first_term = 6.0 * m2 * lip * cov.gap_1p / nf.sqrt();
    let coeff = 36.0 * m2 * m2 * lip * lip * cov.gap_1p * cov.gap_1p / nf;
    Ok(Gamma {
        printed: first_term + coeff * profile.inv_gap_sq_sum,
        unsquared: first_term + coeff * profile.resolvent_sum,
        first_term,
        expansion_valid: first_term < 0.5 * profile.min_gap,
    })
}

pub fn bound_second_order(n: usize, gamma: f64, eps: f64) -> Result<f64> {
    require_positive("second_order", "gamma", gamma, 0.0)?;
    let nf = n as f64;
    Ok((-(nf * nf) * eps * eps / (gamma * gamma)).exp())
}

/// `c⁻¹ = K·M⁴|f|_L²R_i²λ_{1,p}²` with `K = 18` for distance kernels and
/// `K = 2` for inner-product kernels.
pub fn eigvec_inverse_c(
    geometry: Geometry,
    cov: &CovarianceStats,
    lip: f64,
    profile: &GapProfile,
) -> Result<f64> {
    if profile.degenerate || !profile.resolvent_sum.is_finite() {
        return Err(Error::degenerate(
            "eigvec_pointwise",
            format!("resolvent sum R_{} is unbounded (repeated eigenvalue)", profile.index + 1),
        ));
    }
    require_cov_gap("eigvec_pointwise", cov)?;
    let k = match geometry {
        Geometry::Distance => 18.0,
        Geometry::InnerProduct => 2.0,
    };
    let m4 = cov.whitened_radius.powi(4);
    let r = profile.resolvent_sum;
    Ok(k * m4 * lip * lip * r * r * cov.gap_1p * cov.gap_1p)
}

/// Pointwise bound along any unit direction `w`; the value does not depend on `w`.
pub fn bound_eigvec_pointwise(inv_c: f64, eps: f64) -> f64 {
    (-eps * eps / inv_c).exp()
}

pub fn bound_eigvec_uniform(n: usize, inv_c: f64, eps: f64) -> f64 {
    2.0 * (2.0 * n as f64 - eps * eps / inv_c).exp()
}

/// A spectral statistic whose concentration is being bounded.
///
/// Indices are 0-based; `k` in sums is a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Statistic {
    Eigenvalue(usize),
    TopkSum(usize),
    TailSum(usize),
    EigvecPointwise(usize),
    EigvecUniform(usize),
}

impl Statistic {
    pub fn kind(&self) -> &'static str {
        match self {
            Statistic::Eigenvalue(_) => "eig",
            Statistic::TopkSum(_) => "topk",
            Statistic::TailSum(_) => "tail",
            Statistic::EigvecPointwise(_) => "evec",
            Statistic::EigvecUniform(_) => "evec_uniform",
        }
    }

    /// 1-based order (for eigen statistics) or the count `k` (for sums).
    pub fn label_index(&self) -> usize {
        match *self {
            Statistic::Eigenvalue(i) | Statistic::EigvecPointwise(i) | Statistic::EigvecUniform(i) => i + 1,
            Statistic::TopkSum(k) | Statistic::TailSum(k) => k,
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.label_index())
    }
}

/// `eig:1`, `topk:3`, `tail:2`, `evec:1`, `evec_uniform:1` (1-based orders).
impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, idx) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("statistic {s:?} must look like eig:1")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::Config(format!("bad index in statistic {s:?}")))?;
        if idx == 0 {
            return Err(Error::Config(format!("statistic {s:?}: indices start at 1")));
        }
        Ok(match kind {
            "eig" => Statistic::Eigenvalue(idx - 1),
            "topk" => Statistic::TopkSum(idx),
            "tail" => Statistic::TailSum(idx),
            "evec" => Statistic::EigvecPointwise(idx - 1),
            "evec_uniform" => Statistic::EigvecUniform(idx - 1),
            _ => return Err(Error::Config(format!("unknown statistic kind {kind:?}"))),
        })
    }
}

impl TryFrom<String> for Statistic {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Statistic> for String {
    fn from(s: Statistic) -> String {
        s.to_string()
    }
}

/// Optional θ for the `θλ₁` bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaInput {
    pub value: f64,
    /// Computed from the sample rather than supplied.
    pub estimated: bool,
}

/// Everything the bound formulas need for one sample.
#[derive(Debug, Clone)]
pub struct BoundContext {
    pub n: usize,
    pub geometry: Geometry,
    /// Spectrum of the Gram matrix the gap-based bounds refer to.
    pub spectrum: Spectrum,
    /// Divide `spectrum` by this to get the `1/n`-scaled spectrum.
    pub to_scaled: f64,
    pub r_squared: f64,
    /// `Err` carries why covariance statistics are unavailable.
    pub cov: std::result::Result<CovarianceStats, String>,
    pub lipschitz: std::result::Result<f64, String>,
    pub theta: std::result::Result<ThetaInput, String>,
}

impl BoundContext {
    pub fn scaled_spectrum(&self) -> Spectrum {
        Spectrum {
            eigenvalues: self.spectrum.eigenvalues.iter().map(|l| l / self.to_scaled).collect(),
            eigenvectors: self.spectrum.eigenvectors.clone(),
        }
    }

    fn cov_and_lip(&self, theorem: &'static str) -> Result<(&CovarianceStats, f64)> {
        let cov = self
            .cov
            .as_ref()
            .map_err(|why| Error::degenerate(theorem, why.clone()))?;
        let lip = *self
            .lipschitz
            .as_ref()
            .map_err(|why| Error::degenerate(theorem, why.clone()))?;
        Ok((cov, lip))
    }
}

/// Where θ comes from when building a [`BoundContext`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaSource {
    Skip,
    Supplied(f64),
    Estimate(ThetaMode),
}

impl BoundContext {
    /// Gathers spectrum, `R²`, covariance statistics, Lipschitz constant and θ for a sample.
    ///
    /// With `eigenvectors = false` only eigenvalues are computed and the
    /// eigenvector matrix is left empty.
    pub fn from_sample(
        s: &SampleSet,
        spec: &KernelSpec,
        centered: bool,
        theta: ThetaSource,
        eigenvectors: bool,
    ) -> Result<Self> {
        let g = kernel::gram(s, spec, Scaling::Raw)?;
        Self::from_gram(s, &g, centered, theta, eigenvectors)
    }

    /// As [`BoundContext::from_sample`] with the raw Gram matrix already built.
    pub fn from_gram(
        s: &SampleSet,
        g: &GramMatrix,
        centered: bool,
        theta: ThetaSource,
        eigenvectors: bool,
    ) -> Result<Self> {
        if g.scaling != Scaling::Raw {
            return Err(Error::Config("bound context expects the raw Gram matrix".into()));
        }
        let spectrum = if eigenvectors {
            spectral::eig_sym(g)?
        } else {
            Spectrum {
                eigenvalues: spectral::eigenvalues_sym(&g.entries),
                eigenvectors: DMatrix::zeros(0, 0),
            }
        };
        let theta = match theta {
            ThetaSource::Skip => Err("theta not requested".to_string()),
            ThetaSource::Supplied(value) if (0.0..=1.0).contains(&value) => {
                Ok(ThetaInput { value, estimated: false })
            }
            ThetaSource::Supplied(value) => {
                return Err(Error::Config(format!("theta must lie in [0, 1], got {value}")))
            }
            ThetaSource::Estimate(mode) => alignment::theta(g, mode)
                .map(|value| ThetaInput { value, estimated: true })
                .map_err(|e| e.to_string()),
        };
        Ok(BoundContext {
            n: s.n(),
            geometry: g.kernel.geometry(),
            spectrum,
            to_scaled: s.n() as f64,
            r_squared: kernel::diag_sup(s, &g.kernel),
            cov: dataset::covariance_stats(s, centered).map_err(|e| e.to_string()),
            lipschitz: g.kernel.lipschitz_on(s).map_err(|e| e.to_string()),
            theta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub statistic: Statistic,
    pub epsilon: f64,
    pub theorem: TheoremId,
    pub value: Option<BoundValue>,
    /// Empty when the bound evaluated cleanly.
    pub flags: Vec<String>,
}

/// Per-statistic inputs echoed next to the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticMeta {
    pub statistic: String,
    pub gap: Option<f64>,
    pub gap_scaled: Option<f64>,
    pub resolvent_sum_scaled: Option<f64>,
    pub gamma: Option<Gamma>,
    pub eigvec_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub n: usize,
    pub r_squared: f64,
    pub lipschitz: Option<f64>,
    pub whitened_radius: Option<f64>,
    pub lambda1_sigma: Option<f64>,
    pub gap_1p: Option<f64>,
    pub error_norm: Option<ErrorNormBound>,
    pub theta: Option<ThetaInput>,
    pub statistics: Vec<StatisticMeta>,
    pub notes: Vec<String>,
}

/// Primary theorem of a statistic; its failure is an error rather than a flag.
pub fn primary_theorem(stat: &Statistic) -> TheoremId {
    match stat {
        Statistic::Eigenvalue(_) => TheoremId::SpectralGap,
        Statistic::TopkSum(_) => TheoremId::TopkGap,
        Statistic::TailSum(_) => TheoremId::TailGap,
        Statistic::EigvecPointwise(_) => TheoremId::EigvecPointwise,
        Statistic::EigvecUniform(_) => TheoremId::EigvecUniform,
    }
}

/// Theorems reported for a statistic, in report order.
pub fn theorems_for(stat: &Statistic, geometry: Geometry) -> Vec<TheoremId> {
    let cov = match geometry {
        Geometry::Distance => TheoremId::CovDistance,
        Geometry::InnerProduct => TheoremId::CovInner,
    };
    match stat {
        Statistic::Eigenvalue(_) => vec![
            TheoremId::UniformDiag,
            TheoremId::ThetaLambda1,
            TheoremId::SpectralGap,
            cov,
            TheoremId::CovConservative,
            TheoremId::SecondOrder,
            TheoremId::SecondOrderUnsquared,
        ],
        Statistic::TopkSum(_) => vec![TheoremId::TopkGap],
        Statistic::TailSum(_) => vec![TheoremId::TailGap],
        Statistic::EigvecPointwise(_) => vec![TheoremId::EigvecPointwise],
        Statistic::EigvecUniform(_) => vec![TheoremId::EigvecUniform],
    }
}

/// Evaluates one theorem for one statistic at one `ε`.
pub fn evaluate(ctx: &BoundContext, stat: &Statistic, theorem: TheoremId, eps: f64) -> Result<f64> {
    let idx = match *stat {
        Statistic::Eigenvalue(i) | Statistic::EigvecPointwise(i) | Statistic::EigvecUniform(i) => i,
        Statistic::TopkSum(_) | Statistic::TailSum(_) => 0,
    };
    match theorem {
        TheoremId::UniformDiag => Ok(bound_trace_uniform(ctx.n, ctx.r_squared, eps)),
        TheoremId::ThetaLambda1 => {
            let theta = ctx
                .theta
                .as_ref()
                .map_err(|why| Error::degenerate("theta_lambda1", why.clone()))?;
            bound_theta(theta.value, ctx.spectrum.eigenvalues[0], eps)
        }
        TheoremId::SpectralGap => bound_gap(ctx.n, &spectral::gaps(&ctx.spectrum, idx)?, eps),
        TheoremId::SpectralGapScaled => {
            bound_gap(ctx.n, &spectral::gaps(&ctx.scaled_spectrum(), idx)?, eps)
        }
        TheoremId::TopkGap => match *stat {
            Statistic::TopkSum(k) => bound_topk_sum(ctx.n, &ctx.spectrum, k, eps),
            _ => Err(Error::Config(format!("topk_gap does not apply to {stat}"))),
        },
        TheoremId::TailGap => match *stat {
            Statistic::TailSum(k) => bound_tail_sum(ctx.n, &ctx.spectrum, k, eps),
            _ => Err(Error::Config(format!("tail_gap does not apply to {stat}"))),
        },
        TheoremId::CovDistance => {
            let (cov, lip) = ctx.cov_and_lip("cov_distance")?;
            bound_distance(ctx.n, cov, lip, eps)
        }
        TheoremId::CovInner => {
            let (cov, lip) = ctx.cov_and_lip("cov_inner")?;
            bound_inner(ctx.n, cov, lip, eps)
        }
        TheoremId::CovConservative => {
            let (cov, lip) = ctx.cov_and_lip("cov_conservative")?;
            let norm = error_norm_bound(ctx.geometry, cov, lip, ctx.n).conservative;
            bound_from_norm(ctx.n, norm, eps)
        }
        TheoremId::SecondOrder | TheoremId::SecondOrderUnsquared => {
            let (cov, lip) = ctx.cov_and_lip("second_order")?;
            let g = gamma(ctx.n, cov, lip, &spectral::gaps(&ctx.scaled_spectrum(), idx)?)?;
            let value = if theorem == TheoremId::SecondOrder {
                g.printed
            } else {
                g.unsquared
            };
            bound_second_order(ctx.n, value, eps)
        }
        TheoremId::EigvecPointwise | TheoremId::EigvecUniform => {
            let (cov, lip) = ctx.cov_and_lip("eigvec_pointwise")?;
            let profile = spectral::gaps(&ctx.scaled_spectrum(), idx)?;
            let inv_c = eigvec_inverse_c(ctx.geometry, cov, lip, &profile)?;
            Ok(if theorem == TheoremId::EigvecPointwise {
                bound_eigvec_pointwise(inv_c, eps)
            } else {
                bound_eigvec_uniform(ctx.n, inv_c, eps)
            })
        }
        TheoremId::KtaTheta
        | TheoremId::KtaSpectral
        | TheoremId::KtaSpectralBdiff
        | TheoremId::KtaSpectralApprox => Err(Error::Config(format!(
            "{theorem} is an alignment bound; use the alignment module"
        ))),
    }
}

/// Checks that `epsilons` is non-empty, strictly positive and ascending.
pub fn validate_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::Config("epsilon grid is empty".into()));
    }
    if epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Config("epsilons must be positive and finite".into()));
    }
    if epsilons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("epsilons must be strictly ascending".into()));
    }
    Ok(())
}

/// Evaluates every applicable theorem for each statistic over the `ε` grid.
///
/// Failure of a statistic's primary theorem aborts with its error; failures
/// of auxiliary theorems become row flags.
pub fn report(ctx: &BoundContext, stats: &[Statistic], epsilons: &[f64]) -> Result<BoundReport> {
    validate_epsilons(epsilons)?;
    let mut rows = Vec::new();
    let mut metas = Vec::new();
    let scaled = ctx.scaled_spectrum();
    for stat in stats {
        let primary = primary_theorem(stat);
        for theorem in theorems_for(stat, ctx.geometry) {
            for &eps in epsilons {
                let (value, flags) = match evaluate(ctx, stat, theorem, eps) {
                    Ok(raw) => {
                        let v = BoundValue::from(raw);
                        let flags = if v.vacuous { vec!["vacuous".to_string()] } else { vec![] };
                        (Some(v), flags)
                    }
                    Err(e) if theorem == primary => return Err(e),
                    Err(e @ Error::Degenerate { .. }) => (None, vec![format!("skipped: {e}")]),
                    Err(e) => return Err(e),
                };
                let mut flags = flags;
                if theorem == TheoremId::ThetaLambda1 {
                    if let Ok(t) = &ctx.theta {
                        flags.push(if t.estimated { "estimated_theta" } else { "supplied_theta" }.into());
                    }
                }
                rows.push(BoundRow {
                    statistic: *stat,
                    epsilon: eps,
                    theorem,
                    value,
                    flags,
                });
            }
        }
        metas.push(statistic_meta(ctx, stat, &scaled));
    }
    let cov = ctx.cov.as_ref().ok();
    let lip = ctx.lipschitz.as_ref().ok().copied();
    let mut notes = vec![format!(
        "gap-based bounds use the Gram matrix spectrum divided by {} to obtain the 1/n-scaled spectrum",
        ctx.to_scaled
    )];
    if let Err(why) = &ctx.cov {
        notes.push(format!("covariance statistics unavailable: {why}"));
    }
    if let Err(why) = &ctx.lipschitz {
        notes.push(format!("Lipschitz constant unavailable: {why}"));
    }
    if let Err(why) = &ctx.theta {
        notes.push(format!("theta unavailable: {why}"));
    }
    Ok(BoundReport {
        rows,
        n: ctx.n,
        r_squared: ctx.r_squared,
        lipschitz: lip,
        whitened_radius: cov.map(|c| c.whitened_radius),
        lambda1_sigma: cov.map(CovarianceStats::lambda_max),
        gap_1p: cov.map(|c| c.gap_1p),
        error_norm: cov.zip(lip).map(|(c, l)| error_norm_bound(ctx.geometry, c, l, ctx.n)),
        theta: ctx.theta.as_ref().ok().copied(),
        statistics: metas,
        notes,
    })
}

fn statistic_meta(ctx: &BoundContext, stat: &Statistic, scaled: &Spectrum) -> StatisticMeta {
    let mut meta = StatisticMeta {
        statistic: stat.to_string(),
        gap: None,
        gap_scaled: None,
        resolvent_sum_scaled: None,
        gamma: None,
        eigvec_c: None,
    };
    let n_eig = ctx.spectrum.n();
    match *stat {
        Statistic::TopkSum(k) if k < n_eig => {
            meta.gap = ctx.spectrum.range_gap(0, k).ok();
            meta.gap_scaled = scaled.range_gap(0, k).ok();
        }
        Statistic::TailSum(k) if k >= 1 && k <= n_eig => {
            meta.gap = ctx.spectrum.range_gap(k - 1, n_eig - 1).ok();
            meta.gap_scaled = scaled.range_gap(k - 1, n_eig - 1).ok();
        }
        Statistic::Eigenvalue(i) | Statistic::EigvecPointwise(i) | Statistic::EigvecUniform(i)
            if i < n_eig =>
        {
            let raw = spectral::gaps(&ctx.spectrum, i).ok();
            let sc = spectral::gaps(scaled, i).ok();
            meta.gap = raw.and_then(|g| g.gap_next);
            meta.gap_scaled = sc.as_ref().and_then(|g| g.gap_next);
            meta.resolvent_sum_scaled = sc.as_ref().map(|g| g.resolvent_sum);
            if let (Ok(cov), Ok(lip), Some(profile)) = (&ctx.cov, &ctx.lipschitz, sc.as_ref()) {
                meta.gamma = gamma(ctx.n, cov, *lip, profile).ok();
                meta.eigvec_c = eigvec_inverse_c(ctx.geometry, cov, *lip, profile)
                    .ok()
                    .map(|inv| 1.0 / inv);
            }
        }
        _ => {}
    }
    meta
}
