use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Per-gene z-scoring fitted on a reference cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneScaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl GeneScaler {
    /// Column means and population standard deviations; constant columns get sd 1.
    pub fn fit(x: &Matrix) -> Self {
        let means = x.column_means();
        let n = x.rows().max(1) as f64;
        let mut sds = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for (c, v) in x.row(r).iter().enumerate() {
                sds[c] += (v - means[c]).powi(2) / n;
            }
        }
        for s in &mut sds {
            *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
        }
        Self { means, sds }
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width() {
            return Err(Error::Dimension(format!(
                "scaler fitted on {} genes, input has {}",
                self.width(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.means[c]) / self.sds[c];
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_columns() {
        let x = Matrix::from_rows(&[[1.0, 7.0], [3.0, 7.0]]).unwrap();
        let s = GeneScaler::fit(&x);
        assert_eq!(s.transform(&x).unwrap().data(), &[-1.0, 0.0, 1.0, 0.0]);
    }
}
