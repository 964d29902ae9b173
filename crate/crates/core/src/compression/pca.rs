//! Principal component projection `R^D → R^M`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::alignment::AlignmentAdapter;
use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::numcore::{check_dim, DenseMatrix, DenseVector};

/// Eigenvalues at or below `RANK_TOLERANCE · λ_max` count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DenseVector,
    /// `D × M` with orthonormal columns (at fit time).
    pub projection: DenseMatrix,
    /// Non-increasing population variances along each column.
    pub eigenvalues: DenseVector,
}

impl PcaModel {
    /// Zero mean, identity projection: raw embeddings pass through unchanged.
    /// Eigenvalues are reported as zero since none were estimated.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: DenseVector::zeros(dim),
            projection: DenseMatrix::identity(dim),
            eigenvalues: DenseVector::zeros(dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.cols()
    }

    /// `Uᵀ(x − mean)`.
    pub fn project(&self, x: &DenseVector) -> Result<DenseVector> {
        DenseVector::new(self.project_slice(x.as_slice())?)
    }

    pub(crate) fn project_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let centered: Vec<f64> = x.iter().zip(self.mean.as_slice()).map(|(a, m)| a - m).collect();
        self.projection.matvec_t(&centered)
    }

    /// `mean + U·z`.
    pub fn reconstruct(&self, z: &DenseVector) -> Result<DenseVector> {
        check_dim(self.output_dim(), z.dim())?;
        let mut x = self.projection.matvec(z.as_slice())?;
        for (xi, m) in x.iter_mut().zip(self.mean.as_slice()) {
            *xi += m;
        }
        DenseVector::new(x)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.input_dim(), self.mean.dim())?;
        check_dim(self.output_dim(), self.eigenvalues.dim())?;
        if !self.mean.is_finite() || !self.projection.is_finite() || !self.eigenvalues.is_finite() {
            return Err(Error::Numeric("PCA model has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn quantize_f32(&mut self) {
        self.mean.quantize_f32();
        self.projection.quantize_f32();
        self.eigenvalues.quantize_f32();
    }
}

/// Fits PCA on the (optionally adapted) image embeddings of `dataset`.
pub fn fit_pca(
    dataset: &EmbeddingDataset,
    adapter: Option<&AlignmentAdapter>,
    m: usize,
) -> Result<PcaModel> {
    if dataset.is_empty() {
        return Err(Error::Param("cannot fit PCA on an empty dataset".into()));
    }
    let points = dataset
        .records()
        .iter()
        .map(|r| match adapter {
            Some(a) => a.apply_slice(r.image_emb.as_slice()),
            None => Ok(r.image_emb.as_slice().to_vec()),
        })
        .collect::<Result<Vec<_>>>()?;
    fit_pca_points(&points, m)
}

/// Top-`m` eigenvectors of the population covariance (divisor `L`). Each
/// column is signed so that its largest-magnitude entry is positive.
pub fn fit_pca_points(points: &[Vec<f64>], m: usize) -> Result<PcaModel> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Param("cannot fit PCA on zero points".into()));
    }
    if m == 0 {
        return Err(Error::Param("PCA target dimension must be >= 1".into()));
    }
    let d = points[0].len();
    for p in points {
        check_dim(d, p.len())?;
    }

    let mut mean = vec![0.0; d];
    for p in points {
        for (acc, v) in mean.iter_mut().zip(p) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);

    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for p in points {
        for ((c, v), mu) in centered.iter_mut().zip(p).zip(&mean) {
            *c = v - mu;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut cov[i * d..(i + 1) * d];
            for j in i..d {
                row[j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / n as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&i| lambda_max > 0.0 && eig.eigenvalues[i] > RANK_TOLERANCE * lambda_max)
        .count();
    if m > rank {
        return Err(Error::Rank {
            requested: m,
            achievable: rank,
        });
    }

    let mut projection = DenseMatrix::zeros(d, m);
    let mut eigenvalues = Vec::with_capacity(m);
    for (col, &k) in order.iter().take(m).enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..d {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            projection.set(i, col, sign * v[i]);
        }
        eigenvalues.push(eig.eigenvalues[k]);
    }

    let model = PcaModel {
        mean: DenseVector::new(mean)?,
        projection,
        eigenvalues: DenseVector::new(eigenvalues)?,
    };
    model.validate()?;
    Ok(model)
}

pub fn project(model: &PcaModel, x: &DenseVector) -> Result<DenseVector> {
    model.project(x)
}
