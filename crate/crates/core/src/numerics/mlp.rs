use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::{Parameter, Tape, Var};
use crate::error::{Error, Result};

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// Layer layout of a multilayer perceptron.
///
/// `layer_widths` lists the input width followed by the output width of
/// every layer, so a single linear map `a → b` is `[a, b]`. Each layer is
/// linear, then optional batch normalization, then its activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub batch_norm: Vec<bool>,
}

impl MlpSpec {
    pub fn new(
        layer_widths: Vec<usize>,
        activations: Vec<Activation>,
        batch_norm: Vec<bool>,
    ) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activations,
            batch_norm,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// ReLU on every hidden layer, `output` activation on the last, no batch norm.
    pub fn simple(widths: &[usize], output: Activation) -> Result<Self> {
        let n = widths.len().saturating_sub(1);
        let mut acts = vec![Activation::Relu; n];
        if let Some(last) = acts.last_mut() {
            *last = output;
        }
        Self::new(widths.to_vec(), acts, vec![false; n])
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len().saturating_sub(1)
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_layers();
        if n == 0 {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        if self.activations.len() != n || self.batch_norm.len() != n {
            return Err(Error::Config(format!(
                "{n} layers but {} activations and {} batch-norm flags",
                self.activations.len(),
                self.batch_norm.len()
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchNormState {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Parameter,
    pub bias: Parameter,
    pub batch_norm: Option<BatchNormState>,
    pub activation: Activation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

impl Mlp {
    /// He-style initialization: weights `N(0, 2/fan_in)`, zero biases, unit BN scale.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.n_layers());
        for l in 0..spec.n_layers() {
            let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
            let sd = (2.0 / fan_in as f64).sqrt();
            layers.push(Layer {
                weight: Parameter::new(Matrix::randn(fan_in, fan_out, sd, rng)),
                bias: Parameter::new(Matrix::zeros(1, fan_out)),
                batch_norm: spec.batch_norm[l].then(|| BatchNormState {
                    gamma: Parameter::new(Matrix::filled(1, fan_out, 1.0)),
                    beta: Parameter::new(Matrix::zeros(1, fan_out)),
                    running_mean: vec![0.0; fan_out],
                    running_var: vec![1.0; fan_out],
                }),
                activation: spec.activations[l],
            });
        }
        Ok(Self { spec, layers })
    }

    /// Builds a network from explicit `(weight, bias)` pairs.
    pub fn from_weights(spec: MlpSpec, weights: Vec<(Matrix, Matrix)>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.n_layers() {
            return Err(Error::Config(format!(
                "{} weight pairs for {} layers",
                weights.len(),
                spec.n_layers()
            )));
        }
        let mut layers = Vec::new();
        for (l, (w, b)) in weights.into_iter().enumerate() {
            let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
            if w.shape() != (fan_in, fan_out) || b.shape() != (1, fan_out) {
                return Err(Error::Dimension(format!(
                    "layer {l}: weight {:?} bias {:?}, expected ({fan_in}, {fan_out})",
                    w.shape(),
                    b.shape()
                )));
            }
            layers.push(Layer {
                weight: Parameter::new(w),
                bias: Parameter::new(b),
                batch_norm: spec.batch_norm[l].then(|| BatchNormState {
                    gamma: Parameter::new(Matrix::filled(1, fan_out, 1.0)),
                    beta: Parameter::new(Matrix::zeros(1, fan_out)),
                    running_mean: vec![0.0; fan_out],
                    running_var: vec![1.0; fan_out],
                }),
                activation: spec.activations[l],
            });
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
            if let Some(bn) = &l.batch_norm {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some(bn) = &mut l.batch_norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// Records the forward pass on `tape`. In training mode batch-norm layers
    /// use batch statistics and update their running averages; otherwise the
    /// running averages are applied as constants.
    pub fn forward(&mut self, tape: &mut Tape, input: Var, training: bool) -> Result<Var> {
        let (out, stats) = self.record(tape, input, training)?;
        for (layer, stat) in self.layers.iter_mut().zip(stats) {
            let (Some(bn), Some((means, vars, n))) = (&mut layer.batch_norm, stat) else {
                continue;
            };
            for c in 0..means.len() {
                let unbiased = vars[c] * n / (n - 1.0);
                bn.running_mean[c] = (1.0 - BATCH_NORM_MOMENTUM) * bn.running_mean[c]
                    + BATCH_NORM_MOMENTUM * means[c];
                bn.running_var[c] = (1.0 - BATCH_NORM_MOMENTUM) * bn.running_var[c]
                    + BATCH_NORM_MOMENTUM * unbiased;
            }
        }
        Ok(out)
    }

    /// Inference-mode forward pass on an existing tape; never touches running statistics.
    pub fn forward_inference(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        Ok(self.record(tape, input, false)?.0)
    }

    /// Like [`Mlp::forward`] but leaves the running statistics alone, so the
    /// same parameters always give the same output for the same batch.
    pub fn forward_frozen(&self, tape: &mut Tape, input: Var, training: bool) -> Result<Var> {
        Ok(self.record(tape, input, training)?.0)
    }

    /// Inference-mode evaluation on a scratch tape.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let y = self.forward_inference(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }

    #[allow(clippy::type_complexity)]
    fn record(
        &self,
        tape: &mut Tape,
        input: Var,
        training: bool,
    ) -> Result<(Var, Vec<Option<(Vec<f64>, Vec<f64>, f64)>>)> {
        let x = tape.value(input);
        if x.cols() != self.spec.input_width() {
            return Err(Error::Dimension(format!(
                "MLP expects {} input columns, got {}",
                self.spec.input_width(),
                x.cols()
            )));
        }
        x.ensure_finite("MLP input")?;
        let mut stats = Vec::with_capacity(self.layers.len());
        let mut h = input;
        for layer in &self.layers {
            let w = tape.param(&layer.weight);
            let b = tape.param(&layer.bias);
            h = tape.matmul(h, w)?;
            h = tape.add_row(h, b)?;
            let mut stat = None;
            if let Some(bn) = &layer.batch_norm {
                h = if training {
                    let n = tape.value(h).rows() as f64;
                    let (normed, means, vars) = tape.batch_norm(h, BATCH_NORM_EPS)?;
                    stat = Some((means, vars, n));
                    normed
                } else {
                    let shift = tape.constant(Matrix::row_vector(
                        &bn.running_mean.iter().map(|m| -m).collect::<Vec<_>>(),
                    ));
                    let scale = tape.constant(Matrix::row_vector(
                        &bn.running_var
                            .iter()
                            .map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt())
                            .collect::<Vec<_>>(),
                    ));
                    let centered = tape.add_row(h, shift)?;
                    tape.mul_row(centered, scale)?
                };
                let gamma = tape.param(&bn.gamma);
                let beta = tape.param(&bn.beta);
                h = tape.mul_row(h, gamma)?;
                h = tape.add_row(h, beta)?;
            }
            stats.push(stat);
            h = match layer.activation {
                Activation::Relu => tape.relu(h),
                Activation::Identity => h,
            };
        }
        Ok((h, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::simple(&[2, 2], Activation::Identity).unwrap();
        let mlp =
            Mlp::from_weights(spec, vec![(Matrix::identity(2), Matrix::zeros(1, 2))]).unwrap();
        let out = mlp
            .predict(&Matrix::from_rows(&[[3.0, -1.0]]).unwrap())
            .unwrap();
        assert_eq!(out.data(), &[3.0, -1.0]);
    }

    #[test]
    fn relu_layer_clips_negatives() {
        let spec = MlpSpec::simple(&[2, 2], Activation::Relu).unwrap();
        let mlp =
            Mlp::from_weights(spec, vec![(Matrix::identity(2), Matrix::zeros(1, 2))]).unwrap();
        let out = mlp
            .predict(&Matrix::from_rows(&[[-2.0, 5.0]]).unwrap())
            .unwrap();
        assert_eq!(out.data(), &[0.0, 5.0]);
    }

    #[test]
    fn two_layer_forward_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = MlpSpec::simple(&[3, 4, 2], Activation::Identity).unwrap();
        let mlp = Mlp::new(spec, &mut rng).unwrap();
        let x = [0.5, -1.25, 2.0];
        let out = mlp.predict(&Matrix::row_vector(&x)).unwrap();

        let l0 = &mlp.layers()[0];
        let l1 = &mlp.layers()[1];
        let mut hidden = [0.0; 4];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut s = l0.bias.value.get(0, j);
            for (i, xi) in x.iter().enumerate() {
                s += xi * l0.weight.value.get(i, j);
            }
            *h = if s > 0.0 { s } else { 0.0 };
        }
        for k in 0..2 {
            let mut s = l1.bias.value.get(0, k);
            for (j, h) in hidden.iter().enumerate() {
                s += h * l1.weight.value.get(j, k);
            }
            assert!((out.get(0, k) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = MlpSpec::new(
            vec![4, 6, 3],
            vec![Activation::Relu, Activation::Identity],
            vec![true, false],
        )
        .unwrap();
        let x = Matrix::randn(5, 4, 1.0, &mut rng);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut mlp = Mlp::new(spec.clone(), &mut rng).unwrap();
            let mut tape = Tape::new();
            let v = tape.constant(x.clone());
            let y = mlp.forward(&mut tape, v, true).unwrap();
            tape.value(y).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn width_mismatch_and_nan_rejected() {
        let spec = MlpSpec::simple(&[2, 2], Activation::Identity).unwrap();
        let mlp =
            Mlp::from_weights(spec, vec![(Matrix::identity(2), Matrix::zeros(1, 2))]).unwrap();
        assert!(matches!(
            mlp.predict(&Matrix::zeros(1, 3)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            mlp.predict(&Matrix::row_vector(&[f64::NAN, 0.0])),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn empty_spec_rejected() {
        assert!(MlpSpec::new(vec![3], vec![], vec![]).is_err());
    }
}
