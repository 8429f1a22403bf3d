//! Small dense least-squares helpers shared by inference and selection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Ordinary least squares fit with coefficient standard errors.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub residual_variance: f64,
}

/// Solves `min ||design·β − y||²`, failing on a rank-deficient design.
pub fn ols(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = design.shape();
    if n < p {
        return Err(Error::Rank(format!("{n} rows for {p} coefficients")));
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(p) as f64) * f64::EPSILON * 1e3;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < p || smax == 0.0 {
        return Err(Error::Rank(format!("design has rank {rank} < {p}")));
    }
    let beta = svd.solve(y, tol).map_err(|e| Error::Numerical(e.to_string()))?;
    let resid = y - design * &beta;
    let dof = (n - p).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    // diag((XᵀX)⁻¹) = Σ_k V_jk² / s_k²
    let v_t = svd.v_t.as_ref().expect("requested V");
    let se = DVector::from_iterator(
        p,
        (0..p).map(|j| {
            let d: f64 = (0..p).map(|k| (v_t[(k, j)] / svd.singular_values[k]).powi(2)).sum();
            (sigma2 * d).sqrt()
        }),
    );
    Ok(OlsFit {
        coefficients: beta,
        std_errors: se,
        residual_variance: sigma2,
    })
}

/// Ridge regression with an unpenalized intercept. Covariates are
/// standardized with the training statistics before the penalty applies.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    center: DVector<f64>,
    scale: DVector<f64>,
    intercept: f64,
    weights: DVector<f64>,
}

impl RidgeModel {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Self> {
        let (n, p) = x.shape();
        let nf = n as f64;
        let center = DVector::from_iterator(p, x.column_iter().map(|c| c.sum() / nf));
        let scale = DVector::from_iterator(
            p,
            x.column_iter().zip(center.iter()).map(|(c, m)| {
                let v = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            }),
        );
        let z = standardize_with(x, &center, &scale);
        let y_mean = y.mean();
        let yc = y.add_scalar(-y_mean);
        let mut gram = z.transpose() * &z;
        for j in 0..p {
            gram[(j, j)] += lambda * nf;
        }
        let rhs = z.transpose() * yc;
        let weights = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge normal equations not positive definite".into()))?
            .solve(&rhs);
        Ok(Self {
            center,
            scale,
            intercept: y_mean,
            weights,
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let z = standardize_with(x, &self.center, &self.scale);
        (z * &self.weights).add_scalar(self.intercept)
    }
}

fn standardize_with(x: &DMatrix<f64>, center: &DVector<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    let mut z = x.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.add_scalar_mut(-center[j]);
        col /= scale[j];
    }
    z
}

/// k-nearest-neighbour regressor on standardized covariates; ties in
/// distance resolved by training row order.
#[derive(Debug, Clone)]
pub struct KnnModel {
    center: DVector<f64>,
    scale: DVector<f64>,
    train: DMatrix<f64>,
    target: DVector<f64>,
    k: usize,
}

impl KnnModel {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Self {
        let (n, p) = x.shape();
        let nf = n as f64;
        let center = DVector::from_iterator(p, x.column_iter().map(|c| c.sum() / nf));
        let scale = DVector::from_iterator(
            p,
            x.column_iter().zip(center.iter()).map(|(c, m)| {
                let v = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            }),
        );
        let train = standardize_with(x, &center, &scale);
        Self {
            center,
            scale,
            train,
            target: y.clone(),
            k: k.min(n).max(1),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let z = standardize_with(x, &self.center, &self.scale);
        let n = self.train.nrows();
        DVector::from_iterator(
            z.nrows(),
            z.row_iter().map(|q| {
                let mut dist: Vec<(f64, usize)> = (0..n).map(|i| ((self.train.row(i) - q).norm_squared(), i)).collect();
                dist.select_nth_unstable_by(self.k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dist[..self.k].iter().map(|&(_, i)| self.target[i]).sum::<f64>() / self.k as f64
            }),
        )
    }
}
