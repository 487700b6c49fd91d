use rand::seq::index::sample;
use rand::Rng;

use super::tape::Parameter;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Number of coordinates sampled across all parameters.
    pub samples: usize,
    /// A coordinate whose one-sided slopes differ by more than this (relative)
    /// sits on a kink or a discontinuity and is excluded.
    pub kink_tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples: 150,
            kink_tolerance: 2e-4,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Compares the gradients currently stored on the parameters of `model`
/// against central finite differences of `loss`.
///
/// The relative error of a coordinate is `|analytic − numeric| / max(1, |numeric|)`;
/// the report carries the maximum over all checked coordinates.
pub fn finite_difference_check<M, P, L, R>(
    model: &mut M,
    mut params_of: P,
    mut loss: L,
    cfg: GradCheckConfig,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    P: FnMut(&mut M) -> Vec<&mut Parameter>,
    L: FnMut(&M) -> Result<f64>,
    R: Rng + ?Sized,
{
    let (sizes, analytic): (Vec<usize>, Vec<Vec<f64>>) = params_of(model)
        .iter()
        .map(|p| (p.value.len(), p.grad.data().to_vec()))
        .unzip();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Ok(GradCheckReport::default());
    }
    let base = loss(model)?;
    if !base.is_finite() {
        return Err(Error::Numeric(
            "loss at the base point is not finite".into(),
        ));
    }
    let picks = sample(rng, total, cfg.samples.min(total)).into_vec();
    let mut report = GradCheckReport::default();
    for flat in picks {
        let (pi, ci) = locate(&sizes, flat);
        let original = params_of(model)[pi].value.data()[ci];
        let mut eval_at = |model: &mut M, v: f64| -> Result<f64> {
            params_of(model)[pi].value.data_mut()[ci] = v;
            loss(model)
        };
        let plus = eval_at(model, original + cfg.step)?;
        let minus = eval_at(model, original - cfg.step)?;
        params_of(model)[pi].value.data_mut()[ci] = original;

        let numeric = (plus - minus) / (2.0 * cfg.step);
        let forward = (plus - base) / cfg.step;
        let backward = (base - minus) / cfg.step;
        let scale = numeric.abs().max(1.0);
        if (forward - backward).abs() > cfg.kink_tolerance * scale {
            report.skipped_kinks += 1;
            continue;
        }
        let err = (analytic[pi][ci] - numeric).abs() / scale;
        report.max_relative_error = report.max_relative_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (i, &s) in sizes.iter().enumerate() {
        if flat < s {
            return (i, flat);
        }
        flat -= s;
    }
    unreachable!("flat index within total size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rng, Matrix, Tape};

    struct Quad {
        w: Parameter,
    }

    fn quad_loss(q: &Quad) -> Result<f64> {
        Ok(q.w
            .value
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64 + 1.0) * v * v)
            .sum())
    }

    #[test]
    fn quadratic_gradient_passes() {
        let mut r = rng::stream(1, "t");
        let mut q = Quad {
            w: Parameter::new(Matrix::randn(3, 4, 1.0, &mut r)),
        };
        let mut tape = Tape::new();
        let w = tape.param(&q.w);
        let sq = tape.square(w);
        let weights =
            tape.constant(Matrix::new(3, 4, (1..=12).map(|i| i as f64).collect()).unwrap());
        let weighted = tape.mul(sq, weights).unwrap();
        let l = tape.sum(weighted);
        tape.backward(l, &mut [&mut q.w]).unwrap();
        let rep = finite_difference_check(
            &mut q,
            |q| vec![&mut q.w],
            quad_loss,
            GradCheckConfig {
                samples: 12,
                ..Default::default()
            },
            &mut r,
        )
        .unwrap();
        assert_eq!(rep.checked, 12);
        assert!(rep.max_relative_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn relu_kink_is_excluded() {
        // loss = relu(w) with w exactly at the kink; the analytic subgradient (0)
        // disagrees with the central difference (0.5), so the coordinate must be skipped.
        let mut q = Quad {
            w: Parameter::new(Matrix::from_rows(&[[0.0, 2.0]]).unwrap()),
        };
        let mut tape = Tape::new();
        let w = tape.param(&q.w);
        let r = tape.relu(w);
        let l = tape.sum(r);
        tape.backward(l, &mut [&mut q.w]).unwrap();
        let rep = finite_difference_check(
            &mut q,
            |q| vec![&mut q.w],
            |q| Ok(q.w.value.data().iter().map(|v| v.max(0.0)).sum()),
            GradCheckConfig {
                samples: 2,
                ..Default::default()
            },
            &mut rng::stream(0, "k"),
        )
        .unwrap();
        assert_eq!(rep.skipped_kinks, 1);
        assert_eq!(rep.checked, 1);
        assert!(rep.max_relative_error < 1e-8);
    }
}
