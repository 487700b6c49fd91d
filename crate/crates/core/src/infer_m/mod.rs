//! Infer-M: reconstruct expression as `X̃ = Z_p · Z_gᵀ`, fine-tune the graph
//! encoder against that reconstruction with the patient model and the link
//! decoder frozen, and decode one network per subtype.

use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use crate::data_io::{ScoredNetwork, SubtypeNetworkSet};
use crate::data_io::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::graph_m::{decode_network, GraphContext, GraphModel};
use crate::numerics::{
    finite_difference_check, parameter_digest, rng, Adam, GradCheckConfig, GradCheckReport, Matrix,
    Tape, Var,
};
use crate::patient_m::{batches, PatientModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// One fine-tuned encoder per subtype from a shared starting point.
    #[default]
    PerSubtype,
    /// A single encoder fine-tuned on all patients, shared by every subtype.
    Pooled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub conditioning: Conditioning,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub threshold: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            conditioning: Conditioning::PerSubtype,
            lr: 1e-3,
            batch_size: 32,
            epochs: 100,
            threshold: 0.5,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 || self.epochs < 1 {
            return Err(Error::Config(
                "infer batch size and epochs must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Adam::with_lr(self.lr).map(|_| ())
    }
}

/// Frozen patient model, the shared graph model, and per-subtype encoder
/// snapshots.
#[derive(Clone, Debug)]
pub struct IntegrationState {
    pub patient: PatientModel,
    pub graph: GraphModel,
    pub ctx: GraphContext,
    pub snapshots: BTreeMap<String, GraphModel>,
}

/// Hashes of the frozen parameter groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeDigest {
    pub phi: String,
    pub omega: String,
}

impl IntegrationState {
    pub fn new(patient: PatientModel, graph: GraphModel, ctx: GraphContext) -> Result<Self> {
        if patient.gene_ids.as_slice() != ctx.graph.gene_ids() {
            return Err(Error::Alignment(
                "patient model genes and graph nodes differ; align the inputs first".into(),
            ));
        }
        if patient.hyper.slot_dim != graph.hyper.embed_dim {
            return Err(Error::Dimension(format!(
                "patient slot width {} must equal gene embedding width {}",
                patient.hyper.slot_dim, graph.hyper.embed_dim
            )));
        }
        Ok(Self {
            patient,
            graph,
            ctx,
            snapshots: BTreeMap::new(),
        })
    }

    /// Digest of φ and of ω. Snapshots carry their own copy of ω; if any copy
    /// has drifted from the shared one the ω digest covers all copies, so it
    /// can no longer match a digest taken before refinement.
    pub fn freeze_digest(&self) -> FreezeDigest {
        let shared = parameter_digest(self.graph.omega());
        let drifted = self
            .snapshots
            .values()
            .any(|snap| parameter_digest(snap.omega()) != shared);
        let omega = if drifted {
            let mut all = self.graph.omega();
            for snap in self.snapshots.values() {
                all.extend(snap.omega());
            }
            parameter_digest(all)
        } else {
            shared
        };
        FreezeDigest {
            phi: parameter_digest(self.patient.params()),
            omega,
        }
    }

    fn inputs(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.ctx.graph.n_nodes() {
            return Err(Error::Dimension(format!(
                "{} expression columns for {} graph nodes",
                x.cols(),
                self.ctx.graph.n_nodes()
            )));
        }
        Ok((self.patient.embed(x)?, self.patient.standardize(x)?))
    }

    /// `X̃ = Z_p · Z_gᵀ` for raw expression rows under encoder `theta`.
    pub fn integrate_reconstruct(&self, theta: &GraphModel, x: &Matrix) -> Result<Matrix> {
        let (zp, _) = self.inputs(x)?;
        integrate(&zp, &theta.embeddings(&self.ctx)?)
    }

    pub fn inference_loss(&self, theta: &GraphModel, x: &Matrix) -> Result<f64> {
        let (zp, target) = self.inputs(x)?;
        let mut tape = Tape::new();
        let loss = record_inference_loss(&mut tape, theta, &self.ctx, &zp, &target)?;
        Ok(tape.value(loss).get(0, 0))
    }

    /// Fine-tunes a copy of the shared encoder on the given patients and
    /// returns it with the per-epoch mean loss.
    pub fn refine(
        &self,
        x: &Matrix,
        cfg: &InferConfig,
        seed: u64,
        label: &str,
    ) -> Result<(GraphModel, Vec<f64>)> {
        cfg.validate()?;
        if x.rows() < 3 {
            return Err(Error::Validation(format!(
                "subtype {label} has {} patients; at least 3 are needed",
                x.rows()
            )));
        }
        let (zp, target) = self.inputs(x)?;
        let mut theta = self.graph.clone();
        let adam = Adam::with_lr(cfg.lr)?;
        let mut shuffle = rng::stream(seed, &format!("infer/{label}"));
        let mut rows: Vec<usize> = (0..x.rows()).collect();
        let mut curve = vec![self.inference_loss(&theta, x)?];
        for epoch in 0..cfg.epochs {
            rows.shuffle(&mut shuffle);
            for batch in batches(&rows, cfg.batch_size) {
                let zb = zp.select_rows(batch);
                let tb = target.select_rows(batch);
                let mut tape = Tape::new();
                let loss = record_inference_loss(&mut tape, &theta, &self.ctx, &zb, &tb)?;
                if !tape.value(loss).get(0, 0).is_finite() {
                    return Err(Error::Training(format!(
                        "inference loss for {label} not finite at epoch {epoch}; last finite {:?}",
                        curve.last()
                    )));
                }
                let mut params = theta.theta_mut();
                params.iter_mut().for_each(|p| p.zero_grad());
                tape.backward(loss, &mut params)?;
                adam.step(&mut params)?;
            }
            let mut tape = Tape::new();
            let full = record_inference_loss(&mut tape, &theta, &self.ctx, &zp, &target)?;
            curve.push(tape.value(full).get(0, 0));
        }
        Ok((theta, curve))
    }

    /// Runs the fine-tuning phase for every subtype in `x` and stores the
    /// snapshots. Returns the loss curve per subtype.
    pub fn refine_all(
        &mut self,
        x: &ExpressionMatrix,
        cfg: &InferConfig,
        seed: u64,
    ) -> Result<BTreeMap<String, Vec<f64>>> {
        let subtypes = x.subtypes();
        if subtypes.is_empty() {
            return Err(Error::Validation(
                "subtype labels are required for network inference".into(),
            ));
        }
        let mut curves = BTreeMap::new();
        match cfg.conditioning {
            Conditioning::PerSubtype => {
                for y in &subtypes {
                    let xs = x.values.select_rows(&x.patients_with_label(y));
                    let (theta, curve) = self.refine(&xs, cfg, seed, y)?;
                    info!(
                        "infer-m {y}: loss {:.4} -> {:.4}",
                        curve[0],
                        curve.last().copied().unwrap_or(f64::NAN)
                    );
                    self.snapshots.insert(y.clone(), theta);
                    curves.insert(y.clone(), curve);
                }
            }
            Conditioning::Pooled => {
                let (theta, curve) = self.refine(&x.values, cfg, seed, "pooled")?;
                for y in &subtypes {
                    self.snapshots.insert(y.clone(), theta.clone());
                    curves.insert(y.clone(), curve.clone());
                }
            }
        }
        Ok(curves)
    }

    /// Decodes every snapshot over the prior node set.
    pub fn generate_subtype_networks(&self, threshold: f64) -> Result<SubtypeNetworkSet> {
        if self.snapshots.is_empty() {
            return Err(Error::State(
                "no subtype encoders; run refinement first".into(),
            ));
        }
        let mut networks = BTreeMap::new();
        for (y, theta) in &self.snapshots {
            let zg = theta.embeddings(&self.ctx)?;
            let (g, scores) = decode_network(theta, &zg, self.ctx.graph.gene_ids(), threshold)?;
            if g.n_edges() == 0 {
                warn!("subtype {y}: inferred network is empty");
            }
            networks.insert(y.clone(), ScoredNetwork { graph: g, scores });
        }
        Ok(SubtypeNetworkSet { networks })
    }

    /// Decoder scores for every pair of prior nodes under subtype `y`'s
    /// encoder, in [`crate::graph_m::all_pairs`] order.
    pub fn pair_scores(&self, y: &str) -> Result<Vec<f64>> {
        Ok(self
            .pair_logits(y)?
            .into_iter()
            .map(crate::numerics::sigmoid)
            .collect())
    }

    /// Decoder logits over all pairs `i < j` under subtype `y`'s encoder.
    pub fn pair_logits(&self, y: &str) -> Result<Vec<f64>> {
        let theta = self
            .snapshots
            .get(y)
            .ok_or_else(|| Error::State(format!("no encoder snapshot for subtype {y}")))?;
        let zg = theta.embeddings(&self.ctx)?;
        theta.link_logits(&zg, &crate::graph_m::all_pairs(self.ctx.graph.n_nodes()))
    }
}

pub fn integrate(zp: &Matrix, zg: &Matrix) -> Result<Matrix> {
    zp.matmul_t(zg)
}

fn record_inference_loss(
    tape: &mut Tape,
    theta: &GraphModel,
    ctx: &GraphContext,
    zp: &Matrix,
    target: &Matrix,
) -> Result<Var> {
    let zg = theta.record_embeddings(tape, ctx)?;
    let zp = tape.constant(zp.clone());
    let xt = tape.matmul_t(zp, zg)?;
    let t = tape.constant(target.clone());
    let diff = tape.sub(xt, t)?;
    let sq = tape.square(diff);
    Ok(tape.mean(sq))
}

/// Gradient check of the inference loss with respect to θ. Returns the
/// report together with the largest absolute gradient found on ω, which
/// must be zero because ω never enters the loss.
pub fn check_inference_gradients<R: Rng + ?Sized>(
    theta: &mut GraphModel,
    ctx: &GraphContext,
    zp: &Matrix,
    target: &Matrix,
    cfg: GradCheckConfig,
    rng: &mut R,
) -> Result<(GradCheckReport, f64)> {
    let mut tape = Tape::new();
    let loss = record_inference_loss(&mut tape, theta, ctx, zp, target)?;
    let mut params = theta.params_mut();
    params.iter_mut().for_each(|p| p.zero_grad());
    tape.backward(loss, &mut params)?;
    drop(params);
    let omega_grad = theta
        .omega()
        .iter()
        .flat_map(|p| p.grad.data().iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    let eval = |m: &GraphModel| -> Result<f64> {
        let mut tape = Tape::new();
        let l = record_inference_loss(&mut tape, m, ctx, zp, target)?;
        Ok(tape.value(l).get(0, 0))
    };
    let report = finite_difference_check(theta, |m| m.theta_mut(), eval, cfg, rng)?;
    Ok((report, omega_grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_product() {
        let zp = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let zg = Matrix::identity(2);
        assert_eq!(integrate(&zp, &zg).unwrap().data(), &[1.0, 0.0]);
        assert!(integrate(&Matrix::zeros(3, 2), &zg)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }
}
