// SPDX-License-Identifier: MIT OR Apache-2.0

//! Classical multidimensional scaling of latents and tokens.
//!
//! Latent–token distances are lens negative log-likelihoods. Latent–latent
//! and token–token pairs have no natural distance; they are padded with the
//! largest observed latent–token distance, which pushes points of the same
//! kind apart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("empty distance input")]
    Empty,
    #[error("distance rows have unequal lengths")]
    Ragged,
    #[error("distance matrix is not symmetric at ({0}, {1})")]
    NonSymmetric(usize, usize),
    #[error("distance matrix has a non-finite or negative entry at ({0}, {1})")]
    InvalidEntry(usize, usize),
    #[error("distance matrix has a nonzero diagonal at {0}")]
    NonZeroDiagonal(usize),
    #[error("{points} points cannot be embedded in {dims} dimensions")]
    TooFewPoints { points: usize, dims: usize },
    #[error("{0} labels for a matrix of size {1}")]
    LabelCount(usize, usize),
    #[error("path references row {0}, which does not exist")]
    InvalidPath(usize),
    #[error("eigen-solver is defined for square matrices only")]
    NotSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Latent,
    Token,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointLabel {
    pub kind: PointKind,
    pub id: String,
}

impl PointLabel {
    pub fn latent(id: impl Into<String>) -> Self {
        Self {
            kind: PointKind::Latent,
            id: id.into(),
        }
    }

    pub fn token(id: impl Into<String>) -> Self {
        Self {
            kind: PointKind::Token,
            id: id.into(),
        }
    }
}

/// Symmetric, nonnegative, zero-diagonal distance matrix with row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    matrix: Matrix<T>,
    labels: Vec<PointLabel>,
}

const SYMMETRY_TOL: f64 = 1e-9;

impl<T: Scalar> DistanceMatrix<T> {
    pub fn new(matrix: Matrix<T>, labels: Vec<PointLabel>) -> Result<Self, GeometryError> {
        let k = matrix.rows();
        if k == 0 {
            return Err(GeometryError::Empty);
        }
        if matrix.cols() != k {
            return Err(GeometryError::NotSquare);
        }
        if labels.len() != k {
            return Err(GeometryError::LabelCount(labels.len(), k));
        }
        let tol = T::lit(SYMMETRY_TOL);
        for i in 0..k {
            if matrix[(i, i)] != T::zero() {
                return Err(GeometryError::NonZeroDiagonal(i));
            }
            for j in 0..k {
                let x = matrix[(i, j)];
                if !x.is_finite() || x < T::zero() {
                    return Err(GeometryError::InvalidEntry(i, j));
                }
                if (x - matrix[(j, i)]).abs() > tol {
                    return Err(GeometryError::NonSymmetric(i, j));
                }
            }
        }
        Ok(Self { matrix, labels })
    }

    /// Unlabelled convenience constructor; rows are labelled `p0, p1, …`.
    pub fn from_matrix(matrix: Matrix<T>) -> Result<Self, GeometryError> {
        let labels = (0..matrix.rows())
            .map(|i| PointLabel::latent(format!("p{i}")))
            .collect();
        Self::new(matrix, labels)
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn labels(&self) -> &[PointLabel] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.matrix[(i, j)]
    }
}

/// Joint latent/token matrix: latents first, then tokens.
///
/// `distances[i][t]` is the distance between latent `i` and token `t`.
/// Same-kind pairs are set to `pad`, or to the largest latent–token distance
/// when `pad` is `None`.
pub fn build_lens_distance_matrix<T: Scalar>(
    distances: &[Vec<T>],
    latent_labels: Vec<String>,
    token_labels: Vec<String>,
    pad: Option<T>,
) -> Result<DistanceMatrix<T>, GeometryError> {
    let n_latents = distances.len();
    let n_tokens = distances.first().map_or(0, Vec::len);
    if n_latents == 0 || n_tokens == 0 {
        return Err(GeometryError::Empty);
    }
    if distances.iter().any(|r| r.len() != n_tokens) {
        return Err(GeometryError::Ragged);
    }
    for (i, row) in distances.iter().enumerate() {
        if let Some(t) = row.iter().position(|x| !x.is_finite() || *x < T::zero()) {
            return Err(GeometryError::InvalidEntry(i, n_latents + t));
        }
    }
    let pad = pad.unwrap_or_else(|| distances.iter().flatten().copied().fold(T::zero(), T::max));
    let k = n_latents + n_tokens;
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            m[(i, j)] = match (i < n_latents, j < n_latents) {
                (true, false) => distances[i][j - n_latents],
                (false, true) => distances[j][i - n_latents],
                _ => pad,
            };
        }
    }
    let labels = latent_labels
        .into_iter()
        .map(PointLabel::latent)
        .chain(token_labels.into_iter().map(PointLabel::token))
        .collect();
    DistanceMatrix::new(m, labels)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as matrix columns.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>), GeometryError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(GeometryError::NotSquare);
    }
    let mut a = a.clone();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_sq().sqrt();
    let tol = T::epsilon() * scale;
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum();
        if off.sqrt() <= tol || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt());
                let t = if tau == T::zero() { T::one() } else { t };
                let c = (T::one() + t * t).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    Ok((values, vectors))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdsEmbedding<T> {
    /// `k × dims` coordinates.
    pub coords: Matrix<T>,
    /// Top `dims` eigenvalues of the double-centred Gram matrix.
    pub eigenvalues: Vec<T>,
    /// Some selected eigenvalue was negative and clamped to zero.
    pub clamped_negative: bool,
    /// No selected eigenvalue was positive; coordinates are all zero.
    pub degenerate: bool,
}

/// Classical MDS: `B = −½ J D⁽²⁾ J`, coordinates are the top eigenvectors
/// scaled by `sqrt(max(λ, 0))`. Each axis is oriented so that its first
/// non-negligible coordinate is positive.
pub fn classical_mds<T: Scalar>(
    matrix: &DistanceMatrix<T>,
    dims: usize,
) -> Result<MdsEmbedding<T>, GeometryError> {
    let k = matrix.size();
    if dims == 0 || k < dims {
        return Err(GeometryError::TooFewPoints { points: k, dims });
    }
    let kt = T::from_usize(k).expect("size fits");
    let sq: Vec<T> = matrix.matrix().as_slice().iter().map(|&d| d * d).collect();
    let row_mean: Vec<T> = (0..k)
        .map(|i| sq[i * k..(i + 1) * k].iter().copied().sum::<T>() / kt)
        .collect();
    let grand = row_mean.iter().copied().sum::<T>() / kt;
    let half = T::lit(0.5);
    let mut b = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            // rows and columns share means because D is symmetric
            b[(i, j)] = -half * (sq[i * k + j] - row_mean[i] - row_mean[j] + grand);
        }
    }
    let (values, vectors) = symmetric_eigen(&b)?;
    let scale = b.frobenius_sq().sqrt().max(T::one());
    let negligible = T::lit(1e-12) * scale;

    let mut coords = Matrix::zeros(k, dims);
    let mut clamped_negative = false;
    let mut any_positive = false;
    for axis in 0..dims {
        let lambda = values[axis];
        if lambda < -negligible {
            clamped_negative = true;
        }
        if lambda <= negligible {
            continue;
        }
        any_positive = true;
        let root = lambda.sqrt();
        let flip = (0..k)
            .map(|i| vectors[(i, axis)])
            .find(|x| x.abs() > T::lit(1e-9))
            .is_some_and(|x| x < T::zero());
        for i in 0..k {
            let x = vectors[(i, axis)] * root;
            coords[(i, axis)] = if flip { -x } else { x };
        }
    }
    Ok(MdsEmbedding {
        coords,
        eigenvalues: values[..dims].to_vec(),
        clamped_negative,
        degenerate: !any_positive,
    })
}

/// 2-D layout of latents and tokens plus one layer-ordered path per prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEmbedding {
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<PointLabel>,
    pub paths: Vec<Vec<usize>>,
    pub clamped_negative: bool,
    pub degenerate: bool,
}

impl TrajectoryEmbedding {
    pub fn new<T: Scalar>(
        mds: &MdsEmbedding<T>,
        labels: Vec<PointLabel>,
        paths: Vec<Vec<usize>>,
    ) -> Result<Self, GeometryError> {
        let k = mds.coords.rows();
        if labels.len() != k {
            return Err(GeometryError::LabelCount(labels.len(), k));
        }
        if let Some(&bad) = paths.iter().flatten().find(|&&i| i >= k) {
            return Err(GeometryError::InvalidPath(bad));
        }
        let at = |i: usize, a: usize| {
            if a < mds.coords.cols() {
                mds.coords[(i, a)].to_f64_lossy()
            } else {
                0.0
            }
        };
        Ok(Self {
            coords: (0..k).map(|i| [at(i, 0), at(i, 1)]).collect(),
            labels,
            paths,
            clamped_negative: mds.clamped_negative,
            degenerate: mds.degenerate,
        })
    }
}
