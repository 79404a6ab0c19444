//! Kernel catalogue and Gram matrix construction.
//!
//! Every built-in kernel is either a distance kernel `k(x, y) = f(‖x − y‖²)`
//! or an inner-product kernel `k(x, y) = f(xᵀy)` for a scalar profile `f`.
//! The covariance-based bounds only need the Lipschitz constant of `f`, so a
//! kernel outside the catalogue can be admitted by declaring a constant that
//! satisfies the matching Lipschitz-type condition (see [`KernelSpec::with_constant`]).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// `f(‖x − y‖²)`
    Distance,
    /// `f(xᵀy)`
    InnerProduct,
}

/// Scalar profile supplied by the caller.
#[derive(Clone)]
pub struct CustomProfile {
    pub name: String,
    pub geometry: Geometry,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `sup |f'|` over the domain note below; `None` leaves it undeclared.
    pub lipschitz: Option<f64>,
    pub domain: String,
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile")
            .field("name", &self.name)
            .field("geometry", &self.geometry)
            .field("lipschitz", &self.lipschitz)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `exp(−‖x − y‖² / (2σ²))`
    Gaussian { sigma: f64 },
    /// `xᵀy`
    Linear,
    /// `(xᵀy + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `(‖x − y‖² + offset)^{-1/2}`
    InverseMultiquadric { offset: f64 },
    #[serde(skip)]
    Custom(CustomProfile),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    family: Family,
    /// Declared Lipschitz-type constant replacing `|f|_L` in every bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constant: Option<f64>,
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        use Family::*;
        let fam = match (&self.family, &other.family) {
            (Gaussian { sigma: a }, Gaussian { sigma: b }) => a == b,
            (Linear, Linear) => true,
            (
                Polynomial { degree: d1, offset: c1 },
                Polynomial { degree: d2, offset: c2 },
            ) => d1 == d2 && c1 == c2,
            (InverseMultiquadric { offset: a }, InverseMultiquadric { offset: b }) => a == b,
            (Custom(a), Custom(b)) => Arc::ptr_eq(&a.f, &b.f),
            _ => false,
        };
        fam && self.constant == other.constant
    }
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::from_family(Family::Gaussian { sigma })
    }

    pub fn linear() -> Self {
        Self {
            family: Family::Linear,
            constant: None,
        }
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        Self::from_family(Family::Polynomial { degree, offset })
    }

    pub fn inverse_multiquadric(offset: f64) -> Result<Self> {
        Self::from_family(Family::InverseMultiquadric { offset })
    }

    pub fn custom(profile: CustomProfile) -> Result<Self> {
        Self::from_family(Family::Custom(profile))
    }

    pub fn from_family(family: Family) -> Result<Self> {
        let spec = Self {
            family,
            constant: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Admits a kernel through a declared Lipschitz-type constant.
    pub fn with_constant(mut self, constant: f64) -> Result<Self> {
        self.constant = Some(constant);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            Family::Gaussian { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                return Err(Error::Config(format!("gaussian sigma must be > 0, got {sigma}")))
            }
            Family::Polynomial { degree, offset } if *degree < 1 || !(*offset >= 0.0) => {
                return Err(Error::Config(format!(
                    "polynomial kernel needs degree >= 1 and offset >= 0 (got {degree}, {offset})"
                )))
            }
            Family::InverseMultiquadric { offset } if !(*offset > 0.0) => {
                return Err(Error::Config(format!(
                    "inverse multiquadric offset must be > 0, got {offset}"
                )))
            }
            Family::Custom(c) => {
                if let Some(l) = c.lipschitz {
                    check_constant(l)?;
                }
            }
            _ => {}
        }
        if let Some(c) = self.constant {
            check_constant(c)?;
        }
        Ok(())
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn declared_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn geometry(&self) -> Geometry {
        match &self.family {
            Family::Gaussian { .. } | Family::InverseMultiquadric { .. } => Geometry::Distance,
            Family::Linear | Family::Polynomial { .. } => Geometry::InnerProduct,
            Family::Custom(c) => c.geometry,
        }
    }

    /// True for the families known to be positive semidefinite.
    pub fn is_mercer(&self) -> bool {
        !matches!(self.family, Family::Custom(_))
    }

    /// The scalar profile `f`.
    pub fn profile(&self, t: f64) -> f64 {
        match &self.family {
            Family::Gaussian { sigma } => (-t / (2.0 * sigma * sigma)).exp(),
            Family::Linear => t,
            Family::Polynomial { degree, offset } => (t + offset).powi(*degree as i32),
            Family::InverseMultiquadric { offset } => (t + offset).powf(-0.5),
            Family::Custom(c) => (c.f)(t),
        }
    }

    /// Argument of the profile for a pair of samples.
    pub fn pair_statistic(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.geometry() {
            Geometry::Distance => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            Geometry::InnerProduct => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.profile(self.pair_statistic(x, y))
    }

    /// `sup |f'|` over the profile's domain.
    ///
    /// Distance profiles live on `t ≥ 0`. Polynomial profiles are only
    /// Lipschitz on a bounded domain `|t| ≤ B`, so `domain_bound` must be given.
    pub fn lipschitz(&self, domain_bound: Option<f64>) -> Result<f64> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        match &self.family {
            Family::Gaussian { sigma } => Ok(1.0 / (2.0 * sigma * sigma)),
            Family::Linear => Ok(1.0),
            Family::InverseMultiquadric { offset } => Ok(0.5 * offset.powf(-1.5)),
            Family::Polynomial { degree, offset } => {
                if *degree == 1 {
                    return Ok(1.0);
                }
                let b = domain_bound.ok_or_else(|| {
                    Error::Lipschitz("polynomial kernel needs a domain bound |t| <= B".into())
                })?;
                let l = *degree as f64 * (b.abs() + offset).powi(*degree as i32 - 1);
                if l > 0.0 && l.is_finite() {
                    Ok(l)
                } else {
                    Err(Error::Lipschitz(format!(
                        "polynomial Lipschitz constant {l} on |t| <= {b} is not positive"
                    )))
                }
            }
            Family::Custom(c) => c.lipschitz.ok_or_else(|| {
                Error::Lipschitz(format!("custom profile {:?} declares no constant", c.name))
            }),
        }
    }

    /// Lipschitz constant on the domain induced by the samples.
    pub fn lipschitz_on(&self, s: &SampleSet) -> Result<f64> {
        let bound = match self.family {
            Family::Polynomial { .. } if self.constant.is_none() => Some(domain_bound(s, self)),
            _ => None,
        };
        self.lipschitz(bound)
    }
}

fn check_constant(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "Lipschitz constant must be positive and finite, got {c}"
        )))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Gaussian { sigma } => write!(f, "gaussian:{sigma}")?,
            Family::Linear => f.write_str("linear")?,
            Family::Polynomial { degree, offset } => write!(f, "poly:{degree}:{offset}")?,
            Family::InverseMultiquadric { offset } => write!(f, "imq:{offset}")?,
            Family::Custom(c) => write!(f, "custom:{}", c.name)?,
        }
        if let Some(c) = self.constant {
            write!(f, "@{c}")?;
        }
        Ok(())
    }
}

/// Parses the CLI shorthand: `gaussian:1.0`, `linear`, `poly:2:1`, `imq:1`,
/// each optionally suffixed by `@C` to declare a Lipschitz-type constant.
impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (body, constant) = match s.split_once('@') {
            Some((b, c)) => (b, Some(parse_num(c, s)?)),
            None => (s, None),
        };
        let parts: Vec<&str> = body.split(':').collect();
        let spec = match parts.as_slice() {
            ["gaussian", sigma] | ["rbf", sigma] => KernelSpec::gaussian(parse_num(sigma, s)?)?,
            ["linear"] => KernelSpec::linear(),
            ["poly", d] | ["polynomial", d] => KernelSpec::polynomial(parse_deg(d, s)?, 0.0)?,
            ["poly", d, c] | ["polynomial", d, c] => {
                KernelSpec::polynomial(parse_deg(d, s)?, parse_num(c, s)?)?
            }
            ["imq", c] => KernelSpec::inverse_multiquadric(parse_num(c, s)?)?,
            _ => return Err(Error::Config(format!("unrecognised kernel {s:?}"))),
        };
        match constant {
            Some(c) => spec.with_constant(c),
            None => Ok(spec),
        }
    }
}

fn parse_num(tok: &str, whole: &str) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::Config(format!("bad number {tok:?} in kernel {whole:?}")))
}

fn parse_deg(tok: &str, whole: &str) -> Result<u32> {
    tok.parse()
        .map_err(|_| Error::Config(format!("bad degree {tok:?} in kernel {whole:?}")))
}

/// Largest `|t|` the profile sees on this sample: `max ‖x_i − x_j‖²` for
/// distance kernels, `max |x_iᵀx_j|` for inner-product kernels.
pub fn domain_bound(s: &SampleSet, spec: &KernelSpec) -> f64 {
    let rows = rows_of(s);
    let mut b = 0.0_f64;
    for i in 0..rows.len() {
        for j in i..rows.len() {
            b = b.max(spec.pair_statistic(&rows[i], &rows[j]).abs());
        }
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `[G]_ij = k(x_i, x_j)`
    #[default]
    Raw,
    /// `[K_n]_ij = k(x_i, x_j) / n`
    OneOverN,
}

impl Scaling {
    pub fn factor(self, n: usize) -> f64 {
        match self {
            Scaling::Raw => 1.0,
            Scaling::OneOverN => 1.0 / n as f64,
        }
    }
}

impl FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Scaling::Raw),
            "one_over_n" | "one-over-n" | "1/n" => Ok(Scaling::OneOverN),
            _ => Err(Error::Config(format!("unknown scaling {s:?}"))),
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaling::Raw => "raw",
            Scaling::OneOverN => "one_over_n",
        })
    }
}

/// Symmetric kernel matrix together with its scaling and kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub scaling: Scaling,
    pub kernel: KernelSpec,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Wraps an arbitrary symmetric matrix (used by oracles and tests).
    pub fn from_matrix(entries: DMatrix<f64>, scaling: Scaling, kernel: KernelSpec) -> Self {
        Self {
            entries,
            scaling,
            kernel,
        }
    }
}

fn rows_of(s: &SampleSet) -> Vec<Vec<f64>> {
    s.matrix()
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect()
}

/// Builds the Gram matrix; only the upper triangle is evaluated and mirrored.
pub fn gram(s: &SampleSet, spec: &KernelSpec, scaling: Scaling) -> Result<GramMatrix> {
    let rows = rows_of(s);
    let n = rows.len();
    let scale = scaling.factor(n);
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = spec.eval(&rows[i], &rows[j]);
            if !k.is_finite() {
                return Err(Error::NonFiniteKernel { i, j });
            }
            let v = k * scale;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(GramMatrix {
        entries,
        scaling,
        kernel: spec.clone(),
    })
}

/// Recomputes row/column `index` of an existing Gram matrix for a new sample set.
pub(crate) fn refresh_row(g: &GramMatrix, s: &SampleSet, index: usize) -> Result<GramMatrix> {
    let rows = rows_of(s);
    let scale = g.scaling.factor(rows.len());
    let mut entries = g.entries.clone();
    for j in 0..rows.len() {
        let k = g.kernel.eval(&rows[index], &rows[j]);
        if !k.is_finite() {
            return Err(Error::NonFiniteKernel { i: index, j });
        }
        entries[(index, j)] = k * scale;
        entries[(j, index)] = k * scale;
    }
    Ok(GramMatrix {
        entries,
        scaling: g.scaling,
        kernel: g.kernel.clone(),
    })
}

/// `R² = max_i k(x_i, x_i)` on the unscaled kernel.
pub fn diag_sup(s: &SampleSet, spec: &KernelSpec) -> f64 {
    rows_of(s)
        .iter()
        .map(|x| spec.eval(x, x))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_gaussian, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(rows: &[Vec<f64>]) -> SampleSet {
        SampleSet::from_rows(rows, Provenance::InMemory).unwrap()
    }

    #[test]
    fn linear_on_orthonormal_basis() {
        let n = 4;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        let g = gram(&set(&rows), &KernelSpec::linear(), Scaling::OneOverN).unwrap();
        assert_eq!(g.entries, DMatrix::identity(n, n) / n as f64);
    }

    #[test]
    fn gaussian_diagonal_is_scale() {
        let s = gen_gaussian(10, 3, 1).unwrap();
        let g = gram(&s, &KernelSpec::gaussian(1.0).unwrap(), Scaling::OneOverN).unwrap();
        for i in 0..10 {
            assert_eq!(g.entries[(i, i)], 0.1);
        }
    }

    #[test]
    fn gaussian_two_points() {
        let g = gram(
            &set(&[vec![0.0], vec![1.0]]),
            &KernelSpec::gaussian(1.0).unwrap(),
            Scaling::Raw,
        )
        .unwrap();
        assert!((g.entries[(0, 1)] - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert_eq!(g.entries[(0, 1)], g.entries[(1, 0)]);
    }

    #[test]
    fn non_finite_value_names_pair() {
        let spec = KernelSpec::custom(CustomProfile {
            name: "log".into(),
            geometry: Geometry::Distance,
            f: Arc::new(|t: f64| -t.ln()),
            lipschitz: None,
            domain: "t > 0".into(),
        })
        .unwrap();
        let err = gram(&set(&[vec![0.0], vec![1.0]]), &spec, Scaling::Raw).unwrap_err();
        assert!(matches!(err, Error::NonFiniteKernel { i: 0, j: 0 }), "{err}");
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(KernelSpec::linear().lipschitz(None).unwrap(), 1.0);
        assert_eq!(KernelSpec::gaussian(1.0).unwrap().lipschitz(None).unwrap(), 0.5);
        assert_eq!(KernelSpec::gaussian(2.0).unwrap().lipschitz(None).unwrap(), 0.125);
        let poly = KernelSpec::polynomial(2, 0.0).unwrap();
        assert!(matches!(poly.lipschitz(None), Err(Error::Lipschitz(_))));
        assert_eq!(poly.lipschitz(Some(3.0)).unwrap(), 6.0);
        let declared = poly.with_constant(0.7).unwrap();
        assert_eq!(declared.lipschitz(None).unwrap(), 0.7);
    }

    #[test]
    fn custom_profile_needs_declared_constant() {
        let undeclared = KernelSpec::custom(CustomProfile {
            name: "cauchy".into(),
            geometry: Geometry::Distance,
            f: Arc::new(|t: f64| 1.0 / (1.0 + t)),
            lipschitz: None,
            domain: "t >= 0".into(),
        })
        .unwrap();
        assert!(undeclared.lipschitz(None).is_err());
        assert_eq!(undeclared.with_constant(1.0).unwrap().lipschitz(None).unwrap(), 1.0);
    }

    #[test]
    fn diagonal_supremum() {
        let s = set(&[vec![3.0, 4.0], vec![0.0, 1.0]]);
        assert_eq!(diag_sup(&s, &KernelSpec::gaussian(0.3).unwrap()), 1.0);
        assert_eq!(diag_sup(&s, &KernelSpec::linear()), 25.0);
        assert_eq!(diag_sup(&s, &KernelSpec::polynomial(2, 1.0).unwrap()), 676.0);
    }

    #[test]
    fn raw_is_n_times_scaled() {
        let s = gen_gaussian(13, 2, 4).unwrap();
        let spec = KernelSpec::gaussian(0.8).unwrap();
        let raw = gram(&s, &spec, Scaling::Raw).unwrap();
        let scaled = gram(&s, &spec, Scaling::OneOverN).unwrap();
        for (r, k) in raw.entries.iter().zip(scaled.entries.iter()) {
            assert!((r - 13.0 * k).abs() <= f64::EPSILON * r.abs());
        }
    }

    #[test]
    fn distance_kernel_rigid_motion_invariant() {
        let s = gen_gaussian(20, 3, 11).unwrap();
        // rotation about the z axis followed by a translation
        let (c, sn) = (0.3_f64.cos(), 0.3_f64.sin());
        let moved: Vec<Vec<f64>> = s
            .matrix()
            .row_iter()
            .map(|r| vec![c * r[0] - sn * r[1] + 5.0, sn * r[0] + c * r[1] - 2.0, r[2] + 1.0])
            .collect();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let a = gram(&s, &spec, Scaling::Raw).unwrap();
        let b = gram(&set(&moved), &spec, Scaling::Raw).unwrap();
        let rel = (&a.entries - &b.entries).norm() / a.entries.norm();
        assert!(rel < 1e-8, "{rel}");
    }

    #[test]
    fn mercer_families_are_psd() {
        let s = gen_gaussian(30, 2, 2).unwrap();
        for spec in [
            KernelSpec::gaussian(1.0).unwrap(),
            KernelSpec::linear(),
            KernelSpec::polynomial(3, 1.0).unwrap(),
            KernelSpec::inverse_multiquadric(1.0).unwrap(),
        ] {
            let g = gram(&s, &spec, Scaling::Raw).unwrap();
            let ev = g.entries.clone().symmetric_eigenvalues();
            let max = ev.max();
            assert!(ev.min() >= -1e-8 * max, "{spec}: {}", ev.min());
        }
    }

    #[test]
    fn profiles_respect_lipschitz_constant() {
        let s = gen_gaussian(40, 2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for spec in [
            KernelSpec::gaussian(1.0).unwrap(),
            KernelSpec::gaussian(0.5).unwrap(),
            KernelSpec::linear(),
            KernelSpec::polynomial(2, 0.0).unwrap(),
            KernelSpec::polynomial(3, 1.0).unwrap(),
            KernelSpec::inverse_multiquadric(0.5).unwrap(),
        ] {
            let b = domain_bound(&s, &spec);
            let l = spec.lipschitz_on(&s).unwrap();
            let lo = match spec.geometry() {
                Geometry::Distance => 0.0,
                Geometry::InnerProduct => -b,
            };
            for _ in 0..10_000 {
                let t1 = rng.gen_range(lo..=b);
                let t2 = rng.gen_range(lo..=b);
                let lhs = (spec.profile(t1) - spec.profile(t2)).abs();
                assert!(lhs <= l * (t1 - t2).abs() * (1.0 + 1e-12) + 1e-15, "{spec}");
            }
        }
    }

    #[test]
    fn shorthand_round_trip() {
        for s in ["gaussian:1", "linear", "poly:2:1", "imq:0.5", "gaussian:2@0.3"] {
            let spec: KernelSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<KernelSpec>().unwrap(), spec);
        }
        assert!("gaussian:-1".parse::<KernelSpec>().is_err());
        assert!("cubic".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn json_config_form() {
        let spec: KernelSpec = serde_json::from_str(r#"{"family": "gaussian", "sigma": 1.0}"#).unwrap();
        assert_eq!(spec, KernelSpec::gaussian(1.0).unwrap());
        let poly: KernelSpec =
            serde_json::from_str(r#"{"family": "polynomial", "degree": 2, "offset": 1.0, "constant": 3.0}"#)
                .unwrap();
        assert_eq!(poly.declared_constant(), Some(3.0));
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&poly).unwrap()).unwrap();
        assert_eq!(back, poly);
    }
}
