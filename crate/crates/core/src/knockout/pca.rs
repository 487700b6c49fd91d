use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Centering vector and the two leading principal axes of a fitted matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// `cols × 2`; each axis is signed so its largest-magnitude loading is positive.
    pub axes: Matrix,
}

pub fn pca_2d(x: &Matrix) -> Result<Pca2> {
    let (n, p) = x.shape();
    if n < 2 || p == 0 {
        return Err(Error::Validation(format!("PCA needs at least 2 rows, got {n}x{p}")));
    }
    let mean = x.column_means();
    let centered = DMatrix::from_fn(n, p, |r, c| x.get(r, c) - mean[c]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = Matrix::zeros(p, 2);
    for (k, &idx) in order.iter().take(2).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..p {
            axes.set(r, k, sign * v[r]);
        }
    }
    Ok(Pca2 { mean, axes })
}

impl Pca2 {
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "{} columns for a PCA fitted on {}",
                x.cols(),
                self.mean.len()
            )));
        }
        let centered = Matrix::new(
            x.rows(),
            x.cols(),
            (0..x.rows())
                .flat_map(|r| x.row(r).iter().zip(&self.mean).map(|(v, m)| v - m).collect::<Vec<_>>())
                .collect(),
        )?;
        centered.matmul(&self.axes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_dominant_direction() {
        // Points spread along (1, 1) with a little spread along (1, -1).
        let rows: Vec<[f64; 2]> = (-5..=5)
            .map(|t| {
                let t = t as f64;
                let e = if t as i64 % 2 == 0 { 0.1 } else { -0.1 };
                [t + e, t - e]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = pca_2d(&x).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.axes.get(0, 0) - h).abs() < 1e-9);
        assert!((p.axes.get(1, 0) - h).abs() < 1e-9);
        let proj = p.project(&x).unwrap();
        assert!((proj.column_values(0).iter().sum::<f64>()).abs() < 1e-9);
    }
}
