//! Patient-M: a vector-quantized autoencoder over expression profiles.
//!
//! Each patient is encoded to `D` latent units, every unit is projected to a
//! non-negative slot vector of width `S`, slots are snapped to the nearest of `K` codebook
//! entries, and the patient representation `Z_p` is the mean of its `D`
//! quantized slots. Inputs are z-scored per gene with statistics fitted on
//! the training cohort, so reconstructions live in standardized units.

mod quantize;
mod silhouette;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use quantize::{nearest_code_indices, slot_mean};
pub use silhouette::silhouette_score;

use crate::data_io::{ExpressionMatrix, GeneScaler};
use crate::error::{Error, Result};
use crate::numerics::{
    finite_difference_check, rng, Activation, Adam, GradCheckConfig, GradCheckReport, Matrix, Mlp,
    MlpSpec, Parameter, Tape, Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatientConfig {
    pub latent_dim: usize,
    pub slot_dim: usize,
    pub codebook_size: usize,
    pub commitment: f64,
    pub decoder_hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
}

impl Default for PatientConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            slot_dim: 32,
            codebook_size: 32,
            commitment: 0.25,
            decoder_hidden: vec![64],
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 300,
            patience: 20,
            val_fraction: 0.1,
        }
    }
}

impl PatientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.slot_dim == 0 {
            return Err(Error::Config(
                "latent and slot widths must be positive".into(),
            ));
        }
        if self.codebook_size < 2 {
            return Err(Error::Config(format!(
                "codebook needs K >= 2, got {}",
                self.codebook_size
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch size must be at least 2 for batch normalization".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction {} outside [0, 0.5)",
                self.val_fraction
            )));
        }
        if !(self.commitment.is_finite() && self.commitment >= 0.0) {
            return Err(Error::Config(
                "commitment weight must be non-negative".into(),
            ));
        }
        Adam::with_lr(self.lr).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientHyper {
    pub n_genes: usize,
    pub latent_dim: usize,
    pub slot_dim: usize,
    pub codebook_size: usize,
    pub commitment: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatientModel {
    pub hyper: PatientHyper,
    pub gene_ids: Vec<String>,
    pub scaler: GeneScaler,
    pub encoder: Mlp,
    pub slot_projector: Mlp,
    pub codebook: Parameter,
    pub usage_counts: Vec<u64>,
    pub decoder: Mlp,
}

/// The four terms of the Patient-M objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatientLoss {
    pub total: f64,
    pub recon: f64,
    pub codebook: f64,
    pub commitment: f64,
}

/// Quantization decisions and stop-gradient operands captured at one point,
/// so the loss can be re-evaluated as a smooth function around it.
#[derive(Clone, Debug)]
pub struct FrozenQuantization {
    pub indices: Vec<usize>,
    pub slots: Matrix,
    pub codes: Matrix,
}

struct LossVars {
    total: Var,
    recon: Var,
    codebook: Var,
    commitment: Var,
    slots: Matrix,
    indices: Vec<usize>,
}

impl PatientModel {
    pub fn new<R: Rng + ?Sized>(
        gene_ids: Vec<String>,
        scaler: GeneScaler,
        cfg: &PatientConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = gene_ids.len();
        if scaler.width() != n {
            return Err(Error::Dimension(format!(
                "scaler width {} for {n} genes",
                scaler.width()
            )));
        }
        let (d, s, k) = (cfg.latent_dim, cfg.slot_dim, cfg.codebook_size);
        let encoder = Mlp::new(
            MlpSpec::new(vec![n, d], vec![Activation::Relu], vec![true])?,
            rng,
        )?;
        // Non-negative slots and codes: Z_p stays in the positive orthant, so a
        // gene with a negative or zero target in Infer-M is pulled towards a zero
        // embedding instead of into the opposite orthant.
        let slot_projector = Mlp::new(MlpSpec::simple(&[d, d * s], Activation::Relu)?, rng)?;
        let mut widths = vec![s];
        widths.extend_from_slice(&cfg.decoder_hidden);
        widths.push(n);
        let decoder = Mlp::new(MlpSpec::simple(&widths, Activation::Identity)?, rng)?;
        let mut codebook = Parameter::new(Matrix::randn(k, s, (1.0 / k as f64).sqrt(), rng));
        codebook
            .value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = v.abs());
        Ok(Self {
            hyper: PatientHyper {
                n_genes: n,
                latent_dim: d,
                slot_dim: s,
                codebook_size: k,
                commitment: cfg.commitment,
            },
            gene_ids,
            scaler,
            encoder,
            slot_projector,
            codebook,
            usage_counts: vec![0; k],
            decoder,
        })
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = self.encoder.params();
        out.extend(self.slot_projector.params());
        out.push(&self.codebook);
        out.extend(self.decoder.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.encoder.params_mut();
        out.extend(self.slot_projector.params_mut());
        out.push(&mut self.codebook);
        out.extend(self.decoder.params_mut());
        out
    }

    pub fn standardize(&self, x: &Matrix) -> Result<Matrix> {
        self.scaler.transform(x)
    }

    /// `(Z_e, Z_c)` in inference mode for raw expression rows. `Z_c` holds
    /// `D` consecutive slot rows of width `S` per patient.
    pub fn encode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let xs = self.standardize(x)?;
        let mut tape = Tape::new();
        let input = tape.constant(xs);
        let ze = self.encoder.forward_inference(&mut tape, input)?;
        let zc = self.slots_from(&mut tape, ze, false)?;
        Ok((tape.value(ze).clone(), tape.value(zc).clone()))
    }

    /// Snaps every slot to its nearest codebook row and counts code usage.
    pub fn quantize(&mut self, zc: &Matrix) -> Result<(Matrix, Vec<usize>)> {
        let idx = nearest_code_indices(&self.codebook.value, zc)?;
        for &i in &idx {
            self.usage_counts[i] += 1;
        }
        Ok((self.codebook.value.select_rows(&idx), idx))
    }

    pub fn patient_repr(&self, quantized: &Matrix) -> Result<Matrix> {
        slot_mean(quantized, self.hyper.latent_dim)
    }

    /// Reconstruction in standardized gene units.
    pub fn decode(&self, zp: &Matrix) -> Result<Matrix> {
        self.decoder.predict(zp)
    }

    /// `Z_p` (M×S) for raw expression rows, inference mode.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        let (_, zc) = self.encode(x)?;
        let idx = nearest_code_indices(&self.codebook.value, &zc)?;
        self.patient_repr(&self.codebook.value.select_rows(&idx))
    }

    /// Objective on raw expression rows. With `batch_stats` the encoder
    /// normalizes with the statistics of `x` itself, as during training.
    pub fn patient_loss(&self, x: &Matrix, batch_stats: bool) -> Result<PatientLoss> {
        let xs = self.standardize(x)?;
        let mut tape = Tape::new();
        let vars = self.record_loss(&mut tape, &xs, batch_stats, None)?;
        Ok(read_loss(&tape, &vars))
    }

    /// Evaluates the objective as a smooth function of the parameters by
    /// holding the code assignment and the stop-gradient operands fixed.
    pub fn surrogate_loss(&self, x_std: &Matrix, frozen: &FrozenQuantization) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.record_loss(&mut tape, x_std, true, Some(frozen))?;
        Ok(tape.value(vars.total).get(0, 0))
    }

    fn slots_from(&self, tape: &mut Tape, ze: Var, training: bool) -> Result<Var> {
        let flat = self.slot_projector.forward_frozen(tape, ze, training)?;
        let rows = tape.value(flat).rows() * self.hyper.latent_dim;
        tape.reshape(flat, rows, self.hyper.slot_dim)
    }

    fn record_loss(
        &self,
        tape: &mut Tape,
        x_std: &Matrix,
        batch_stats: bool,
        frozen: Option<&FrozenQuantization>,
    ) -> Result<LossVars> {
        let input = tape.constant(x_std.clone());
        let ze = self.encoder.forward_frozen(tape, input, batch_stats)?;
        self.loss_from_latent(tape, input, ze, frozen)
    }

    fn loss_from_latent(
        &self,
        tape: &mut Tape,
        input: Var,
        ze: Var,
        frozen: Option<&FrozenQuantization>,
    ) -> Result<LossVars> {
        let zc = self.slots_from(tape, ze, true)?;
        let slots = tape.value(zc).clone();
        let cb = tape.param(&self.codebook);
        let (zq, indices, slots_sg, codes_sg) = match frozen {
            None => {
                let idx = nearest_code_indices(&self.codebook.value, &slots)?;
                let codes = self.codebook.value.select_rows(&idx);
                let zq = tape.straight_through(zc, codes.clone())?;
                (zq, idx, slots.clone(), codes)
            }
            Some(f) => {
                let offset = f.codes.zip_map(&f.slots, |c, z| c - z)?;
                let offset = tape.constant(offset);
                let zq = tape.add(zc, offset)?;
                (zq, f.indices.clone(), f.slots.clone(), f.codes.clone())
            }
        };
        let zp = tape.group_mean_rows(zq, self.hyper.latent_dim)?;
        let xhat = self.decoder.forward_frozen(tape, zp, true)?;

        let diff = tape.sub(xhat, input)?;
        let sq = tape.square(diff);
        let recon = tape.mean(sq);

        let gathered = tape.gather_rows(cb, &indices)?;
        let slots_const = tape.constant(slots_sg);
        let d_cb = tape.sub(slots_const, gathered)?;
        let sq = tape.square(d_cb);
        let codebook = tape.mean(sq);

        let codes_const = tape.constant(codes_sg);
        let d_commit = tape.sub(zc, codes_const)?;
        let sq = tape.square(d_commit);
        let commit_raw = tape.mean(sq);
        let commitment = tape.scale(commit_raw, self.hyper.commitment);

        let partial = tape.add(recon, codebook)?;
        let total = tape.add(partial, commitment)?;
        Ok(LossVars {
            total,
            recon,
            codebook,
            commitment,
            slots,
            indices,
        })
    }

    /// One minibatch of training: forward with batch statistics (updating the
    /// running averages), backward, Adam. Returns the loss and the raw slots.
    fn train_step(&mut self, x_std: &Matrix, adam: &Adam) -> Result<(PatientLoss, Matrix)> {
        let mut tape = Tape::new();
        let input = tape.constant(x_std.clone());
        let ze = self.encoder.forward(&mut tape, input, true)?;
        let vars = self.loss_from_latent(&mut tape, input, ze, None)?;
        let loss = read_loss(&tape, &vars);
        if !loss.total.is_finite() {
            return Err(Error::Training(format!("non-finite loss {:?}", loss)));
        }
        for &i in &vars.indices {
            self.usage_counts[i] += 1;
        }
        let mut params = self.params_mut();
        for p in params.iter_mut() {
            p.zero_grad();
        }
        tape.backward(vars.total, &mut params)?;
        adam.step(&mut params)?;
        Ok((loss, vars.slots))
    }

    /// Replaces every codebook row unused since the last reset with a random
    /// slot vector drawn from `slots`, then clears the counters.
    pub fn reseed_dead_codes<R: Rng + ?Sized>(&mut self, slots: &Matrix, rng: &mut R) -> usize {
        let mut reseeded = 0;
        if slots.rows() > 0 {
            for k in 0..self.hyper.codebook_size {
                if self.usage_counts[k] == 0 {
                    let pick = rng.random_range(0..slots.rows());
                    self.codebook
                        .value
                        .row_mut(k)
                        .copy_from_slice(slots.row(pick));
                    reseeded += 1;
                }
            }
        }
        self.usage_counts.iter_mut().for_each(|c| *c = 0);
        reseeded
    }
}

fn read_loss(tape: &Tape, v: &LossVars) -> PatientLoss {
    let get = |x: Var| tape.value(x).get(0, 0);
    PatientLoss {
        total: get(v.total),
        recon: get(v.recon),
        codebook: get(v.codebook),
        commitment: get(v.commitment),
    }
}

/// Back-propagates the objective on `x` (raw expression) into the model's
/// gradients and compares them against central finite differences.
pub fn check_patient_gradients<R: Rng + ?Sized>(
    model: &mut PatientModel,
    x: &Matrix,
    cfg: GradCheckConfig,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let xs = model.standardize(x)?;
    let mut tape = Tape::new();
    let vars = model.record_loss(&mut tape, &xs, true, None)?;
    let codes = model.codebook.value.select_rows(&vars.indices);
    let frozen = FrozenQuantization {
        indices: vars.indices.clone(),
        slots: vars.slots.clone(),
        codes,
    };
    let mut params = model.params_mut();
    for p in params.iter_mut() {
        p.zero_grad();
    }
    tape.backward(vars.total, &mut params)?;
    drop(params);
    finite_difference_check(
        model,
        |m| m.params_mut(),
        |m| m.surrogate_loss(&xs, &frozen),
        cfg,
        rng,
    )
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PatientTrainingLog {
    pub train_loss: Vec<f64>,
    pub val_recon: Vec<f64>,
    pub initial_val_recon: f64,
    pub best_epoch: usize,
    pub reseeded_codes: usize,
}

/// Minibatch Adam training with early stopping on validation reconstruction.
/// Labels, when present, are ignored.
pub fn train_patient_m(
    x: &ExpressionMatrix,
    cfg: &PatientConfig,
    seed: u64,
) -> Result<(PatientModel, PatientTrainingLog)> {
    cfg.validate()?;
    let m = x.n_patients();
    if m < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 patients to train, got {m}"
        )));
    }
    let mut init_rng = rng::stream(seed, "patient/init");
    let mut shuffle_rng = rng::stream(seed, "patient/shuffle");
    let mut split_rng = rng::stream(seed, "patient/split");

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut split_rng);
    let n_val = (cfg.val_fraction * m as f64).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_raw = x.values.select_rows(train_idx);
    let scaler = GeneScaler::fit(&train_raw);
    let mut model = PatientModel::new(x.gene_ids.clone(), scaler, cfg, &mut init_rng)?;
    let train_std = model.standardize(&train_raw)?;
    let val_raw = if val_idx.is_empty() {
        train_raw.clone()
    } else {
        x.values.select_rows(val_idx)
    };

    let adam = Adam::with_lr(cfg.lr)?;
    let val_recon = |model: &PatientModel| model.patient_loss(&val_raw, false).map(|l| l.recon);
    let mut log = PatientTrainingLog {
        initial_val_recon: val_recon(&model)?,
        ..Default::default()
    };
    let mut best = (f64::INFINITY, model.clone());
    let mut since_best = 0;
    let mut rows: Vec<usize> = (0..train_std.rows()).collect();

    for epoch in 0..cfg.max_epochs {
        rows.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut seen_slots = Vec::new();
        for batch in batches(&rows, cfg.batch_size) {
            let xb = train_std.select_rows(batch);
            let (loss, slots) = model.train_step(&xb, &adam).map_err(|e| match e {
                Error::Training(msg) => Error::Training(format!(
                    "epoch {epoch}: {msg}; last finite validation recon {:.6}",
                    log.val_recon
                        .last()
                        .copied()
                        .unwrap_or(log.initial_val_recon)
                )),
                other => other,
            })?;
            epoch_loss += loss.total * batch.len() as f64;
            seen_slots.push(slots);
        }
        log.train_loss.push(epoch_loss / rows.len() as f64);
        let pool = seen_slots.pop().expect("at least one batch");
        log.reseeded_codes += model.reseed_dead_codes(&pool, &mut shuffle_rng);

        let v = val_recon(&model)?;
        if !v.is_finite() {
            return Err(Error::Training(format!(
                "epoch {epoch}: validation loss is not finite"
            )));
        }
        log.val_recon.push(v);
        if v < best.0 {
            best = (v, model.clone());
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                debug!("patient-m early stop at epoch {epoch}");
                break;
            }
        }
    }
    let model = best.1;
    info!(
        "patient-m: {} epochs, best validation recon {:.4} (initial {:.4}) at epoch {}",
        log.val_recon.len(),
        best.0,
        log.initial_val_recon,
        log.best_epoch
    );
    if best.0 >= log.initial_val_recon {
        warn!("patient-m validation reconstruction did not improve");
    }
    Ok((model, log))
}

/// Consecutive minibatches; a trailing batch of one row is merged into the
/// previous batch because batch normalization needs two rows.
pub(crate) fn batches(rows: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let mut end = (start + size).min(rows.len());
        if rows.len() - end == 1 {
            end = rows.len();
        }
        out.push(&rows[start..end]);
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(n: usize) -> PatientModel {
        let cfg = PatientConfig {
            latent_dim: 4,
            slot_dim: 3,
            codebook_size: 5,
            decoder_hidden: vec![6],
            ..PatientConfig::default()
        };
        let scaler = GeneScaler {
            means: vec![0.0; n],
            sds: vec![1.0; n],
        };
        let ids = (0..n).map(|i| format!("g{i}")).collect();
        PatientModel::new(ids, scaler, &cfg, &mut rng::stream(1, "t")).unwrap()
    }

    #[test]
    fn shapes_follow_hyperparameters() {
        let model = tiny_model(10);
        let x = Matrix::randn(4, 10, 1.0, &mut rng::stream(2, "x"));
        let (ze, zc) = model.encode(&x).unwrap();
        assert_eq!(ze.shape(), (4, 4));
        assert_eq!(zc.shape(), (16, 3));
        let zp = model.embed(&x).unwrap();
        assert_eq!(zp.shape(), (4, 3));
        assert_eq!(model.decode(&zp).unwrap().shape(), (4, 10));
    }

    #[test]
    fn quantized_slots_are_codebook_rows() {
        let mut model = tiny_model(6);
        let x = Matrix::randn(5, 6, 1.0, &mut rng::stream(3, "x"));
        let (_, zc) = model.encode(&x).unwrap();
        let (q, idx) = model.quantize(&zc).unwrap();
        for (r, &k) in idx.iter().enumerate() {
            assert_eq!(q.row(r), model.codebook.value.row(k));
        }
        assert_eq!(model.usage_counts.iter().sum::<u64>(), 20);
    }

    #[test]
    fn batches_never_leave_a_single_row() {
        let rows: Vec<usize> = (0..65).collect();
        let sizes: Vec<usize> = batches(&rows, 32).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![32, 33]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut model = tiny_model(7);
        let x = Matrix::randn(6, 7, 1.0, &mut rng::stream(4, "x"));
        let report = check_patient_gradients(
            &mut model,
            &x,
            GradCheckConfig::default(),
            &mut rng::stream(5, "fd"),
        )
        .unwrap();
        assert!(report.checked >= 100, "{report:?}");
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }
}
