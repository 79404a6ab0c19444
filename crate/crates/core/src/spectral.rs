//! Symmetric eigendecomposition, gap statistics and the matrix-perturbation
//! facts the bounds rest on: Cauchy interlacing, replace-one perturbations
//! and the first-order eigenvector expansion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::SampleSet;
use crate::error::{Error, Result};
use crate::kernel::{self, GramMatrix, KernelSpec, Scaling};

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Gaps below `GAP_REL_TOL · (1 + |λ₁|)` are treated as degenerate.
pub const GAP_REL_TOL: f64 = 1e-10;

/// Interlacing slack `INTERLACE_REL_TOL · (1 + |λ₁|)`.
pub const INTERLACE_REL_TOL: f64 = 1e-9;

/// Descending eigenvalues with paired orthonormal eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    pub fn tol_gap(&self) -> f64 {
        GAP_REL_TOL * (1.0 + self.eigenvalues.first().map_or(0.0, |l| l.abs()))
    }

    /// `λ_a − λ_b` for 0-based orders `a < b`.
    pub fn range_gap(&self, a: usize, b: usize) -> Result<f64> {
        let n = self.n();
        if b >= n {
            return Err(Error::Index { index: b, len: n });
        }
        Ok(self.eigenvalues[a] - self.eigenvalues[b])
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.eigenvectors * lambda * self.eigenvectors.transpose()
    }
}

/// Eigendecomposition of a symmetric matrix, sorted descending.
///
/// Each eigenvector is signed so that its largest-magnitude entry is
/// positive (ties resolved towards the lowest index).
pub fn eig_sym_matrix(a: &DMatrix<f64>) -> Result<Spectrum> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension { expected: n, got: a.ncols() });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("matrix has non-finite entries".into()));
    }
    let max_abs = a.amax();
    let eig = a
        .clone()
        .try_symmetric_eigen(EIG_EPS, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence { n, max_abs })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let mut pivot = 0;
        for r in 1..n {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(col, &v);
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

pub fn eig_sym(g: &GramMatrix) -> Result<Spectrum> {
    eig_sym_matrix(&g.entries)
}

/// Descending eigenvalues only.
pub fn eigenvalues_sym(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Gap statistics around one eigenvalue (0-based `index`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapProfile {
    pub index: usize,
    /// `λ_i − λ_{i+1}`; `None` for the last eigenvalue.
    pub gap_next: Option<f64>,
    /// `R_i = Σ_{j≠i} 1/|λ_i − λ_j|`, infinite when degenerate.
    pub resolvent_sum: f64,
    /// `Σ_{j≠i} 1/(λ_j − λ_i)²`, infinite when degenerate.
    pub inv_gap_sq_sum: f64,
    /// `min_{j≠i} |λ_j − λ_i|`.
    pub min_gap: f64,
    /// Some `|λ_i − λ_j|` fell below the gap tolerance.
    pub degenerate: bool,
    pub tol_gap: f64,
}

impl GapProfile {
    pub fn gap_next(&self) -> Result<f64> {
        self.gap_next.ok_or_else(|| {
            Error::degenerate(
                "spectral_gap",
                format!("eigenvalue {} has no successor", self.index + 1),
            )
        })
    }
}

pub fn gaps(spec: &Spectrum, index: usize) -> Result<GapProfile> {
    let n = spec.n();
    if index >= n {
        return Err(Error::Index { index, len: n });
    }
    let tol = spec.tol_gap();
    let li = spec.eigenvalues[index];
    let mut resolvent = 0.0;
    let mut inv_sq = 0.0;
    let mut min_gap = f64::INFINITY;
    for (j, &lj) in spec.eigenvalues.iter().enumerate() {
        if j == index {
            continue;
        }
        let d = (lj - li).abs();
        min_gap = min_gap.min(d);
        resolvent += 1.0 / d;
        inv_sq += 1.0 / (d * d);
    }
    let degenerate = min_gap < tol;
    if degenerate {
        resolvent = f64::INFINITY;
        inv_sq = f64::INFINITY;
    }
    Ok(GapProfile {
        index,
        gap_next: (index + 1 < n).then(|| li - spec.eigenvalues[index + 1]),
        resolvent_sum: resolvent,
        inv_gap_sq_sum: inv_sq,
        min_gap,
        degenerate,
        tol_gap: tol,
    })
}

/// Removes row and column `drop` (0-based).
pub fn principal_submatrix_of(a: &DMatrix<f64>, drop: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n < 2 {
        return Err(Error::Data("principal submatrix needs n >= 2".into()));
    }
    if drop >= n {
        return Err(Error::Index { index: drop, len: n });
    }
    Ok(a.clone().remove_row(drop).remove_column(drop))
}

pub fn principal_submatrix(g: &GramMatrix, drop: usize) -> Result<GramMatrix> {
    Ok(GramMatrix {
        entries: principal_submatrix_of(&g.entries, drop)?,
        scaling: g.scaling,
        kernel: g.kernel.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interlacing {
    pub holds: bool,
    /// Largest signed excursion outside `λ_{i+1} ≤ μ_i ≤ λ_i`; ≤ 0 when strict.
    pub max_violation: f64,
}

pub fn interlacing_check(parent: &[f64], child: &[f64]) -> Result<Interlacing> {
    if child.len() + 1 != parent.len() {
        return Err(Error::Dimension {
            expected: parent.len().saturating_sub(1),
            got: child.len(),
        });
    }
    let tol = INTERLACE_REL_TOL * (1.0 + parent.first().map_or(0.0, |l| l.abs()));
    let max_violation = child
        .iter()
        .enumerate()
        .map(|(i, &mu)| (mu - parent[i]).max(parent[i + 1] - mu))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Interlacing {
        holds: max_violation <= tol,
        max_violation,
    })
}

/// Original and replace-one perturbed Gram matrices.
#[derive(Debug, Clone)]
pub struct PerturbationPair {
    pub original: GramMatrix,
    pub perturbed: GramMatrix,
    /// `perturbed − original`; nonzero only in row/column `replaced_index`.
    pub e: DMatrix<f64>,
    pub spectral_norm_e: f64,
    pub replaced_index: usize,
}

/// Replaces sample `index` and rebuilds the affected row/column.
pub fn perturb_replace(
    s: &SampleSet,
    spec: &KernelSpec,
    index: usize,
    replacement: &[f64],
    scaling: Scaling,
) -> Result<PerturbationPair> {
    let original = kernel::gram(s, spec, scaling)?;
    perturb_replace_from(&original, s, index, replacement)
}

/// Same as [`perturb_replace`] but reuses an already computed Gram matrix.
pub fn perturb_replace_from(
    original: &GramMatrix,
    s: &SampleSet,
    index: usize,
    replacement: &[f64],
) -> Result<PerturbationPair> {
    let swapped = s.with_row_replaced(index, replacement)?;
    let perturbed = kernel::refresh_row(original, &swapped, index)?;
    let e = &perturbed.entries - &original.entries;
    let spectral_norm_e = if e.nrows() < 4 {
        dense_spectral_norm(&e)
    } else {
        arrow_spectral_norm(&e, index)
    };
    Ok(PerturbationPair {
        original: original.clone(),
        perturbed,
        e,
        spectral_norm_e,
        replaced_index: index,
    })
}

pub fn dense_spectral_norm(e: &DMatrix<f64>) -> f64 {
    e.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Spectral norm of a symmetric matrix supported on one row/column `k`.
///
/// With `E_kk = 2α` and `b` the off-diagonal part of column `k`, the matrix
/// is `e_k aᵀ + a e_kᵀ` for `a = α e_k + b`. On `span{e_k, b}` it acts as
/// `[[2α, β], [β, 0]]` with `β = ‖b‖`, so `‖E‖ = |α| + √(α² + β²)`.
pub fn arrow_spectral_norm(e: &DMatrix<f64>, k: usize) -> f64 {
    let alpha = 0.5 * e[(k, k)];
    let beta_sq: f64 = (0..e.nrows())
        .filter(|&j| j != k)
        .map(|j| e[(j, k)] * e[(j, k)])
        .sum();
    alpha.abs() + (alpha * alpha + beta_sq).sqrt()
}

/// First-order eigenvector prediction for a perturbed matrix.
#[derive(Debug, Clone)]
pub struct FirstOrder {
    /// `ũ_i`, not renormalised.
    pub vector: DVector<f64>,
    pub norm_e: f64,
    /// `½ · min_{j≠i} |λ_j − λ_i|`
    pub half_gap: f64,
    /// `‖E‖ < half_gap`, the regime where the expansion is valid.
    pub valid: bool,
}

/// Predicts the `i`-th eigenvector of `K − e` from the spectrum of `K`:
///
/// `ũ_i = u_i + Σ_{j≠i} (u_jᵀ e u_i)/(λ_j − λ_i) · u_j`.
///
/// `e` is the difference original − perturbed. When `‖e‖` exceeds half the
/// distance from `λ_i` to the rest of the spectrum the prediction is still
/// returned with `valid = false`.
pub fn eigvec_first_order(base: &Spectrum, e: &DMatrix<f64>, i: usize) -> Result<FirstOrder> {
    let n = base.n();
    if e.nrows() != n || e.ncols() != n {
        return Err(Error::Dimension { expected: n, got: e.nrows() });
    }
    let profile = gaps(base, i)?;
    if profile.degenerate {
        return Err(Error::degenerate(
            "eigvec_expansion",
            format!(
                "eigenvalue {} is not isolated (min gap {:e}); the expansion needs ‖E‖ < half the distance to the rest of the spectrum",
                i + 1,
                profile.min_gap
            ),
        ));
    }
    let ui = base.eigenvector(i);
    let e_ui = e * &ui;
    let mut vector = ui.clone();
    for j in 0..n {
        if j == i {
            continue;
        }
        let uj = base.eigenvectors.column(j);
        let coeff = uj.dot(&e_ui) / (base.eigenvalues[j] - base.eigenvalues[i]);
        vector.axpy(coeff, &uj, 1.0);
    }
    if vector.dot(&ui) < 0.0 {
        vector.neg_mut();
    }
    let norm_e = dense_spectral_norm(e);
    let half_gap = 0.5 * profile.min_gap;
    Ok(FirstOrder {
        vector,
        norm_e,
        half_gap,
        valid: norm_e < half_gap,
    })
}

/// Flips `v` so that `vᵀ reference ≥ 0`.
pub fn align_sign(v: &DVector<f64>, reference: &DVector<f64>) -> DVector<f64> {
    if v.dot(reference) < 0.0 {
        -v
    } else {
        v.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_gaussian;
    use crate::randmat::{random_orthogonal, random_symmetric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_spectrum_invariants(a: &DMatrix<f64>, s: &Spectrum) {
        for w in s.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let n = s.n();
        let gram = s.eigenvectors.transpose() * &s.eigenvectors;
        assert!((gram - DMatrix::identity(n, n)).amax() <= 1e-8);
        assert!((a - s.reconstruct()).norm() <= 1e-7 * (1.0 + a.norm()));
    }

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let s = eig_sym_matrix(&a).unwrap();
        assert_eq!(s.eigenvalues, vec![3.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 0., 0., 1., 0., 1., 0.]);
        assert_eq!(s.eigenvectors, expected);
        assert_spectrum_invariants(&a, &s);
    }

    #[test]
    fn two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = eig_sym_matrix(&a).unwrap();
        assert!((s.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u1 = s.eigenvector(0);
        assert!((u1[0] - h).abs() < 1e-14 && (u1[1] - h).abs() < 1e-14);
        // tie in magnitude: lowest index wins the positive sign
        let u2 = s.eigenvector(1);
        assert!((u2[0] - h).abs() < 1e-14 && (u2[1] + h).abs() < 1e-14);
    }

    #[test]
    fn construct_then_decompose() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 8;
        let q = random_orthogonal(n, &mut rng);
        let lambda: Vec<f64> = (0..n).map(|k| 5.0 - k as f64).collect();
        let a = &q * DMatrix::from_diagonal(&DVector::from_vec(lambda.clone())) * q.transpose();
        let s = eig_sym_matrix(&a).unwrap();
        for (got, want) in s.eigenvalues.iter().zip(&lambda) {
            assert!((got - want).abs() < 1e-9);
        }
        assert_spectrum_invariants(&a, &s);
    }

    #[test]
    fn permutation_invariant_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_symmetric(12, &mut rng);
        let mut perm: Vec<usize> = (0..12).collect();
        perm.reverse();
        perm.swap(2, 7);
        let b = DMatrix::from_fn(12, 12, |i, j| a[(perm[i], perm[j])]);
        let (sa, sb) = (eigenvalues_sym(&a), eigenvalues_sym(&b));
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn gap_profiles() {
        let s = Spectrum {
            eigenvalues: vec![3.0, 2.0, 1.0],
            eigenvectors: DMatrix::identity(3, 3),
        };
        let g = gaps(&s, 0).unwrap();
        assert_eq!(g.gap_next, Some(1.0));
        assert_eq!(g.resolvent_sum, 1.5);
        assert!(gaps(&s, 2).unwrap().gap_next().is_err());

        let s = Spectrum {
            eigenvalues: vec![4.0, 2.0, 1.0],
            eigenvectors: DMatrix::identity(3, 3),
        };
        assert_eq!(gaps(&s, 1).unwrap().inv_gap_sq_sum, 1.25);

        let s = Spectrum {
            eigenvalues: vec![1.0, 1.0],
            eigenvectors: DMatrix::identity(2, 2),
        };
        let g = gaps(&s, 0).unwrap();
        assert!(g.degenerate);
        assert!(g.resolvent_sum.is_infinite());
    }

    #[test]
    fn submatrices() {
        let a = DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 1.0, 7.0]);
        assert_eq!(principal_submatrix_of(&a, 1).unwrap(), DMatrix::from_element(1, 1, 5.0));
        for d in 0..3 {
            assert_eq!(
                principal_submatrix_of(&DMatrix::identity(3, 3), d).unwrap(),
                DMatrix::identity(2, 2)
            );
        }
        let t = DMatrix::from_row_slice(3, 3, &[2., 1., 0., 1., 2., 1., 0., 1., 2.]);
        assert_eq!(
            principal_submatrix_of(&t, 2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[2., 1., 1., 2.])
        );
        assert!(principal_submatrix_of(&t, 3).is_err());
    }

    #[test]
    fn interlacing_examples() {
        let ok = interlacing_check(&[3.0, 2.0, 1.0], &[2.5, 1.5]).unwrap();
        assert!(ok.holds);
        let bad = interlacing_check(&[3.0, 2.0, 1.0], &[3.5, 1.0]).unwrap();
        assert!(!bad.holds);
        assert_eq!(bad.max_violation, 0.5);
        assert!(interlacing_check(&[3.0, 2.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn interlacing_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..15);
            let a = random_symmetric(n, &mut rng);
            let parent = eigenvalues_sym(&a);
            for d in 0..n {
                let child = eigenvalues_sym(&principal_submatrix_of(&a, d).unwrap());
                assert!(interlacing_check(&parent, &child).unwrap().holds);
            }
        }
    }

    #[test]
    fn identity_replacement_is_zero() {
        let s = gen_gaussian(6, 2, 1).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let x2 = s.row(2);
        let pair = perturb_replace(&s, &spec, 2, x2.as_slice(), Scaling::OneOverN).unwrap();
        assert_eq!(pair.spectral_norm_e, 0.0);
        assert_eq!(pair.e.amax(), 0.0);
    }

    #[test]
    fn two_sample_linear_replacement() {
        let s = SampleSet::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            crate::dataset::Provenance::InMemory,
        )
        .unwrap();
        for (scaling, change) in [(Scaling::Raw, 1.0), (Scaling::OneOverN, 0.5)] {
            let pair = perturb_replace(&s, &KernelSpec::linear(), 1, &[1.0, 0.0], scaling).unwrap();
            assert_eq!(pair.e[(0, 1)], change);
            assert_eq!(pair.e[(0, 0)], 0.0);
            assert_eq!(pair.e[(1, 1)], 0.0);
            assert!((pair.spectral_norm_e - change).abs() < 1e-15);
        }
    }

    #[test]
    fn arrow_norm_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        for trial in 0..20 {
            let s = gen_gaussian(12, 3, trial).unwrap();
            let k = rng.gen_range(0..12);
            let repl: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let pair = perturb_replace(&s, &spec, k, &repl, Scaling::OneOverN).unwrap();
            let dense = dense_spectral_norm(&pair.e);
            assert!((pair.spectral_norm_e - dense).abs() <= 1e-10 * (1.0 + dense));
            for i in 0..12 {
                for j in 0..12 {
                    if i != k && j != k {
                        assert_eq!(pair.e[(i, j)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn first_order_zero_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_symmetric(6, &mut rng);
        let s = eig_sym_matrix(&a).unwrap();
        let fo = eigvec_first_order(&s, &DMatrix::zeros(6, 6), 2).unwrap();
        assert_eq!(fo.vector, s.eigenvector(2));
        assert!(fo.valid);
    }

    #[test]
    fn first_order_two_by_two() {
        let base = eig_sym_matrix(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).unwrap();
        let delta = 0.01;
        let e = DMatrix::from_row_slice(2, 2, &[0.0, delta, delta, 0.0]);
        let fo = eigvec_first_order(&base, &e, 0).unwrap();
        assert!((fo.vector[0] - 1.0).abs() < 1e-15);
        assert!((fo.vector[1] + delta).abs() < 1e-15);
        assert!(fo.valid);
    }

    #[test]
    fn first_order_degenerate_gap() {
        let base = eig_sym_matrix(&DMatrix::identity(3, 3)).unwrap();
        let err = eigvec_first_order(&base, &DMatrix::zeros(3, 3), 1).unwrap_err();
        assert!(err.to_string().contains("half the distance"), "{err}");
    }
}
