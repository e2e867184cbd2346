//! Linear smoother matrices `H_s` and finite families of them.
//!
//! Every constructor caches the three statistics the rest of the crate uses
//! repeatedly: degrees of freedom `tr(H)`, `‖H‖_F²`, and the operator norm.

mod document;

use std::collections::HashSet;

use num_rational::Ratio;

pub use self::document::{
    FamilyDocument, MemberDocument, Parameters, SmootherKind, FAMILY_SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::linalg::{left_singular, operator_norm, symmetric_eigen, Matrix};
use crate::scalar::Scalar;

/// Relative singular-value cutoff for the span of a rank-deficient design.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Gram matrices whose asymmetry exceeds this (relative to `max(1, max|G|)`)
/// are rejected; smaller asymmetry is symmetrized away.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues of a Gram matrix down to `-GRAM_PSD_TOL · max(1, λ_max)` are
/// clipped to zero; anything more negative is not positive semidefinite.
pub const GRAM_PSD_TOL: f64 = 1e-10;

/// Recipe a smoother was built from; kept so families can be written back
/// out exactly as they were specified.
#[derive(Debug, Clone, PartialEq)]
pub enum SmootherSpec {
    Zero { n: usize },
    Identity { n: usize },
    Explicit { matrix: Vec<Vec<f64>> },
    /// Projection onto the span of `design` columns in `subset` (0-based).
    Projection { design: Vec<Vec<f64>>, subset: Vec<usize> },
    Krr { gram: Vec<Vec<f64>>, lambda: f64 },
    Knn { points: Vec<Vec<f64>>, k: usize },
}

/// Neighbor lists of a k-NN smoother: row `i` averages `neighbors[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnStructure {
    pub k: usize,
    pub neighbors: Vec<Vec<usize>>,
}

impl KnnStructure {
    /// `‖H‖_F²` in exact rational arithmetic.
    pub fn frob_sq_exact(&self) -> Ratio<u64> {
        let weight = Ratio::new(1u64, self.k as u64);
        self.neighbors
            .iter()
            .flat_map(|row| row.iter().map(move |_| weight * weight))
            .fold(Ratio::from_integer(0), |acc, w| acc + w)
    }

    /// For each column `i`, how many rows average point `i`.
    pub fn reverse_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.neighbors.len()];
        for row in &self.neighbors {
            for &j in row {
                counts[j] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoother<T> {
    label: String,
    h: Matrix<T>,
    df: T,
    frob_sq: T,
    opnorm: T,
    spec: SmootherSpec,
    knn: Option<KnnStructure>,
}

impl<T: Scalar> Smoother<T> {
    fn assemble(label: String, h: Matrix<T>, spec: SmootherSpec) -> Result<Self> {
        let opnorm = operator_norm(&h)?;
        Ok(Smoother {
            label,
            df: h.trace(),
            frob_sq: h.frob_sq(),
            opnorm,
            h,
            spec,
            knn: None,
        })
    }

    /// Wraps an arbitrary square matrix as a smoother.
    pub fn from_matrix(label: impl Into<String>, h: Matrix<T>) -> Result<Self> {
        check_square("smoother matrix", &h)?;
        if !h.is_finite() {
            return Err(Error::NonFinite("smoother matrix"));
        }
        let spec = SmootherSpec::Explicit {
            matrix: h.to_f64_rows(),
        };
        Self::assemble(label.into(), h, spec)
    }

    pub fn zero(label: impl Into<String>, n: usize) -> Result<Self> {
        Self::assemble(label.into(), Matrix::zeros(n, n), SmootherSpec::Zero { n })
    }

    pub fn identity(label: impl Into<String>, n: usize) -> Result<Self> {
        Self::assemble(label.into(), Matrix::identity(n), SmootherSpec::Identity { n })
    }

    /// Orthogonal projector onto the span of the selected design columns.
    ///
    /// Rank-deficient selections project onto their actual span: singular
    /// values below `RANK_REL_TOL · σ_max` are treated as zero.
    pub fn projection(
        label: impl Into<String>,
        design: &Matrix<T>,
        subset: &[usize],
    ) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::param("subset", "must select at least one column"));
        }
        if let Some(&bad) = subset.iter().find(|&&j| j >= design.ncols()) {
            return Err(Error::param(
                "subset",
                format!("column {bad} out of range for a design with {} columns", design.ncols()),
            ));
        }
        if !design.is_finite() {
            return Err(Error::NonFinite("design matrix"));
        }
        let mut cols: Vec<usize> = Vec::with_capacity(subset.len());
        for &j in subset {
            if !cols.contains(&j) {
                cols.push(j);
            }
        }
        let selected = design.select_columns(&cols);
        let basis = left_singular(&selected)?.span_basis(T::of(RANK_REL_TOL));
        let n = design.nrows();
        let mut h = Matrix::zeros(n, n);
        for u in &basis {
            for i in 0..n {
                for j in i..n {
                    h[(i, j)] += u[i] * u[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        let spec = SmootherSpec::Projection {
            design: design.to_f64_rows(),
            subset: subset.to_vec(),
        };
        Self::assemble(label.into(), h, spec)
    }

    /// Kernel ridge smoother `(G + λI)⁻¹ G`, formed through the spectral
    /// decomposition of `G` so the result is exactly symmetric.
    pub fn kernel_ridge(label: impl Into<String>, gram: &Matrix<T>, lambda: T) -> Result<Self> {
        check_square("gram matrix", gram)?;
        if !gram.is_finite() {
            return Err(Error::NonFinite("gram matrix"));
        }
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(Error::param("lambda", format!("must be nonnegative, got {lambda}")));
        }
        let scale = T::one().max(gram.max_abs());
        let asym = gram.max_asymmetry();
        if asym > T::of(GRAM_SYMMETRY_TOL) * scale {
            return Err(Error::param(
                "gram",
                format!("matrix is not symmetric (max |G_ij - G_ji| = {asym:e})"),
            ));
        }
        let n = gram.nrows();
        let eig = symmetric_eigen(&gram.symmetrized())?;
        let top = eig.values.last().copied().unwrap_or(T::zero());
        let floor = -T::of(GRAM_PSD_TOL) * T::one().max(top);
        if let Some(&low) = eig.values.first() {
            if low < floor {
                return Err(Error::param(
                    "gram",
                    format!("matrix is not positive semidefinite (eigenvalue {low:e})"),
                ));
            }
        }
        let spec = SmootherSpec::Krr {
            gram: gram.to_f64_rows(),
            lambda: lambda.as_f64(),
        };
        if lambda == T::zero() {
            let low = eig.values.first().copied().unwrap_or(T::zero());
            let cutoff = T::epsilon() * T::of_usize(n.max(1)) * top.abs();
            if low <= cutoff {
                return Err(Error::Singular(format!(
                    "lambda = 0 needs a nonsingular gram matrix (smallest eigenvalue {low:e})"
                )));
            }
            return Self::assemble(label.into(), Matrix::identity(n), spec);
        }
        let h = eig.reconstruct_with(|g| {
            let g = g.max(T::zero());
            g / (g + lambda)
        });
        Self::assemble(label.into(), h, spec)
    }

    /// k-nearest-neighbor averaging smoother on `points`.
    ///
    /// Each point is its own first neighbor; remaining neighbors are ordered
    /// by Euclidean distance with ties going to the smaller index.
    pub fn knn(label: impl Into<String>, points: &[Vec<T>], k: usize) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::param("points", "need at least one point"));
        }
        if k == 0 || k > n {
            return Err(Error::param("k", format!("must lie in 1..={n}, got {k}")));
        }
        let dim = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::shape("k-NN points", dim, p.len()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("k-NN points"));
        }
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut others: Vec<(T, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let d: T = points[i]
                            .iter()
                            .zip(&points[j])
                            .map(|(&a, &b)| (a - b) * (a - b))
                            .sum();
                        (d, j)
                    })
                    .collect();
                others.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
                std::iter::once(i)
                    .chain(others.into_iter().map(|(_, j)| j))
                    .take(k)
                    .collect()
            })
            .collect();
        let weight = T::one() / T::of_usize(k);
        let mut h = Matrix::zeros(n, n);
        for (i, row) in neighbors.iter().enumerate() {
            for &j in row {
                h[(i, j)] = weight;
            }
        }
        let spec = SmootherSpec::Knn {
            points: points
                .iter()
                .map(|p| p.iter().map(|x| x.as_f64()).collect())
                .collect(),
            k,
        };
        let mut smoother = Self::assemble(label.into(), h, spec)?;
        smoother.knn = Some(KnnStructure { k, neighbors });
        Ok(smoother)
    }

    /// Rebuilds a smoother from its recipe.
    pub fn from_spec(label: impl Into<String>, spec: &SmootherSpec) -> Result<Self> {
        let label = label.into();
        match spec {
            SmootherSpec::Zero { n } => Self::zero(label, *n),
            SmootherSpec::Identity { n } => Self::identity(label, *n),
            SmootherSpec::Explicit { matrix } => {
                Self::from_matrix(label, Matrix::from_f64_rows(matrix)?)
            }
            SmootherSpec::Projection { design, subset } => {
                Self::projection(label, &Matrix::from_f64_rows(design)?, subset)
            }
            SmootherSpec::Krr { gram, lambda } => {
                Self::kernel_ridge(label, &Matrix::from_f64_rows(gram)?, T::of(*lambda))
            }
            SmootherSpec::Knn { points, k } => {
                let pts: Vec<Vec<T>> = points
                    .iter()
                    .map(|p| p.iter().map(|&x| T::of(x)).collect())
                    .collect();
                Self::knn(label, &pts, *k)
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// Degrees of freedom `tr(H)`.
    pub fn df(&self) -> T {
        self.df
    }

    pub fn frob_sq(&self) -> T {
        self.frob_sq
    }

    pub fn opnorm(&self) -> T {
        self.opnorm
    }

    pub fn spec(&self) -> &SmootherSpec {
        &self.spec
    }

    pub fn knn_structure(&self) -> Option<&KnnStructure> {
        self.knn.as_ref()
    }

    pub fn apply(&self, y: &[T]) -> Vec<T> {
        self.h.matvec(y)
    }

    pub fn apply_transpose(&self, y: &[T]) -> Vec<T> {
        self.h.tr_matvec(y)
    }
}

fn check_square<T: Scalar>(what: &'static str, m: &Matrix<T>) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::shape(
            what,
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ))
    }
}

/// Gershgorin-type operator norm bound for a k-NN smoother:
/// `(1/k) · max_i #{j : H_ji > 0}`, the largest column count over `k`.
pub fn knn_opnorm_bound<T: Scalar>(smoother: &Smoother<T>, k: usize) -> T {
    let h = smoother.matrix();
    let n = h.ncols();
    let max_count = (0..n)
        .map(|i| (0..h.nrows()).filter(|&j| h[(j, i)] > T::zero()).count())
        .max()
        .unwrap_or(0);
    T::of_usize(max_count) / T::of_usize(k.max(1))
}

/// Finite, ordered menu of smoothers sharing a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherFamily<T> {
    members: Vec<Smoother<T>>,
    h_op: T,
}

impl<T: Scalar> SmootherFamily<T> {
    pub fn new(members: Vec<Smoother<T>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::param("members", "family must be nonempty"))?;
        let n = first.n();
        let mut seen = HashSet::new();
        for m in &members {
            if m.n() != n {
                return Err(Error::shape("family member dimension", n, m.n()));
            }
            if !seen.insert(m.label.as_str()) {
                return Err(Error::param("label", format!("duplicate label `{}`", m.label)));
            }
        }
        let h_op = members.iter().fold(T::zero(), |acc, m| acc.max(m.opnorm));
        Ok(SmootherFamily { members, h_op })
    }

    pub fn members(&self) -> &[Smoother<T>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n(&self) -> usize {
        self.members[0].n()
    }

    /// `max_s ‖H_s‖_op`.
    pub fn h_op(&self) -> T {
        self.h_op
    }

    pub fn get(&self, label: &str) -> Option<&Smoother<T>> {
        self.members.iter().find(|m| m.label == label)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.members.iter().position(|m| m.label == label)
    }

    pub fn to_document(&self) -> FamilyDocument {
        FamilyDocument {
            schema_version: FAMILY_SCHEMA_VERSION,
            members: self
                .members
                .iter()
                .map(|m| MemberDocument::from_spec(m.label.clone(), &m.spec))
                .collect(),
        }
    }

    pub fn from_document(doc: &FamilyDocument) -> Result<Self> {
        doc.check_version()?;
        let members = doc
            .members
            .iter()
            .map(|m| Smoother::from_spec(m.label.clone(), &m.to_spec()?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn from_matrix_examples() {
        let id = Smoother::from_matrix("id", Matrix::<f64>::identity(2)).unwrap();
        assert_eq!((id.df(), id.frob_sq(), id.opnorm()), (2.0, 2.0, 1.0));
        let zero = Smoother::from_matrix("zero", Matrix::<f64>::zeros(2, 2)).unwrap();
        assert_eq!((zero.df(), zero.frob_sq(), zero.opnorm()), (0.0, 0.0, 0.0));
        let shift = Smoother::from_matrix("a", m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(shift.df(), 0.0);
        assert_eq!(shift.frob_sq(), 1.0);
        assert_relative_eq!(shift.opnorm(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn from_matrix_errors() {
        let rect = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(Smoother::from_matrix("r", rect), Err(Error::Shape { .. })));
        let nan = m(&[&[f64::NAN]]);
        assert!(matches!(Smoother::from_matrix("n", nan), Err(Error::NonFinite(_))));
    }

    #[test]
    fn projection_examples() {
        let p = Smoother::projection("p", &m(&[&[1.0], &[0.0]]), &[0]).unwrap();
        assert_eq!(p.matrix(), &m(&[&[1.0, 0.0], &[0.0, 0.0]]));
        assert_eq!(p.df(), 1.0);

        let q = Smoother::projection("q", &m(&[&[1.0], &[1.0]]), &[0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(q.matrix()[(i, j)], 0.5, epsilon = 1e-15);
            }
        }
        assert_relative_eq!(q.df(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(q.frob_sq(), 1.0, epsilon = 1e-14);

        // Duplicate column: rank-one span, df 1 rather than 2.
        let dup = Smoother::projection("d", &m(&[&[1.0, 1.0], &[1.0, 1.0]]), &[0, 1]).unwrap();
        assert!(dup.matrix().sub(q.matrix()).unwrap().max_abs() < 1e-14);
        assert_relative_eq!(dup.df(), 1.0, epsilon = 1e-14);

        assert!(Smoother::projection("e", &m(&[&[1.0]]), &[]).is_err());
        assert!(Smoother::projection("e", &m(&[&[1.0]]), &[1]).is_err());
    }

    #[test]
    fn krr_examples() {
        let gram = Matrix::from_diag(&[2.0, 1.0]);
        let h = Smoother::kernel_ridge("k", &gram, 1.0).unwrap();
        assert_relative_eq!(h.matrix()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(h.matrix()[(1, 1)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(h.df(), 7.0 / 6.0, epsilon = 1e-14);
        assert!(h.opnorm() <= 1.0);

        let id = Smoother::kernel_ridge("k0", &gram, 0.0).unwrap();
        assert_eq!(id.df(), 2.0);

        let big = Smoother::kernel_ridge("kb", &gram, 1e9).unwrap();
        assert!(big.df() <= 3e-9);
    }

    #[test]
    fn krr_errors() {
        let singular = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            Smoother::kernel_ridge("s", &singular, 0.0),
            Err(Error::Singular(_))
        ));
        assert!(Smoother::kernel_ridge("s", &singular, 0.5).is_ok());
        let asym = m(&[&[1.0, 0.5], &[0.0, 1.0]]);
        assert!(matches!(
            Smoother::kernel_ridge("a", &asym, 1.0),
            Err(Error::Parameter { name: "gram", .. })
        ));
        let indefinite = Matrix::from_diag(&[1.0, -1.0]);
        assert!(Smoother::kernel_ridge("i", &indefinite, 1.0).is_err());
        assert!(Smoother::kernel_ridge("l", &Matrix::from_diag(&[1.0]), -1.0).is_err());
        // Tiny asymmetry is symmetrized, not rejected.
        let nearly = m(&[&[2.0, 0.5 + 1e-13], &[0.5, 2.0]]);
        let h = Smoother::kernel_ridge("n", &nearly, 1.0).unwrap();
        assert_eq!(h.matrix().max_asymmetry(), 0.0);
    }

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64]).collect()
    }

    #[test]
    fn knn_examples() {
        let pts = line(5);
        let k1 = Smoother::knn("k1", &pts, 1).unwrap();
        assert_eq!(k1.matrix(), &Matrix::identity(5));
        assert_eq!(knn_opnorm_bound(&k1, 1), 1.0);

        let k3 = Smoother::knn("k3", &line(3), 3).unwrap();
        assert!(k3.matrix().as_slice().iter().all(|&x| x == 1.0 / 3.0));
        assert_relative_eq!(k3.df(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(k3.frob_sq(), 1.0, epsilon = 1e-15);
        assert_eq!(knn_opnorm_bound(&k3, 3), 1.0);
        assert_relative_eq!(k3.opnorm(), 1.0, max_relative = 1e-10);

        let k2 = Smoother::knn("k2", &line(6), 2).unwrap();
        assert_eq!(k2.knn_structure().unwrap().frob_sq_exact(), Ratio::from_integer(3));
        assert!(k2.opnorm() <= knn_opnorm_bound(&k2, 2) + 1e-12);

        assert!(Smoother::knn("bad", &line(3), 4).is_err());
        assert!(Smoother::knn("bad", &line(3), 0).is_err());
    }

    #[test]
    fn knn_tie_breaking() {
        // Point 1 is equidistant from 0 and 2; the smaller index wins.
        let k2 = Smoother::knn("k", &line(3), 2).unwrap();
        assert_eq!(k2.knn_structure().unwrap().neighbors[1], vec![1, 0]);
        // A duplicate of an earlier point still keeps itself first.
        let dup = vec![vec![0.0], vec![0.0], vec![5.0]];
        let k = Smoother::knn("k", &dup, 1).unwrap();
        assert_eq!(k.matrix(), &Matrix::identity(3));
    }

    #[test]
    fn family_invariants() {
        let a = Smoother::<f64>::zero("a", 2).unwrap();
        let b = Smoother::<f64>::identity("b", 2).unwrap();
        let fam = SmootherFamily::new(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(fam.h_op(), 1.0);
        assert_eq!(fam.index_of("b"), Some(1));
        assert!(SmootherFamily::<f64>::new(vec![]).is_err());
        assert!(SmootherFamily::new(vec![a.clone(), a.clone()]).is_err());
        let c = Smoother::<f64>::identity("c", 3).unwrap();
        assert!(SmootherFamily::new(vec![a, c]).is_err());
    }

    #[test]
    fn document_round_trip() {
        let fam = SmootherFamily::new(vec![
            Smoother::<f64>::zero("a", 3).unwrap(),
            Smoother::identity("b", 3).unwrap(),
            Smoother::projection("p", &m(&[&[1.0, 0.0], &[1.0, 1.0], &[0.0, 2.0]]), &[1]).unwrap(),
            Smoother::kernel_ridge("k", &Matrix::from_diag(&[3.0, 2.0, 1.0]), 0.5).unwrap(),
            Smoother::knn("n", &line(3), 2).unwrap(),
            Smoother::from_matrix("x", m(&[&[0.0, 1.0, 0.0], &[0.0; 3], &[0.25; 3]])).unwrap(),
        ])
        .unwrap();
        let json = serde_json::to_string(&fam.to_document()).unwrap();
        let doc: FamilyDocument = serde_json::from_str(&json).unwrap();
        let back = SmootherFamily::<f64>::from_document(&doc).unwrap();
        assert_eq!(back, fam);
    }

    #[test]
    fn single_precision_family() {
        let fam = SmootherFamily::<f32>::new(vec![
            Smoother::kernel_ridge("k", &Matrix::from_diag(&[2.0, 1.0]), 1.0).unwrap(),
        ])
        .unwrap();
        assert!((fam.members()[0].df() - 7.0 / 6.0).abs() < 1e-6);
    }
}
