//! The training and inference stages chained in order, for callers that do
//! not need to checkpoint between them.

use std::collections::BTreeMap;

use log::info;
use serde::{Deserialize, Serialize};

use crate::data_io::{split_edges, ExpressionMatrix, GeneGraph, SubtypeNetworkSet};
use crate::error::{Error, Result};
use crate::graph_m::{
    expression_features, train_graph_m, GraphConfig, GraphContext, GraphModel, GraphTrainingLog,
};
use crate::infer_m::{FreezeDigest, InferConfig, IntegrationState};
use crate::patient_m::{train_patient_m, PatientConfig, PatientModel, PatientTrainingLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub patient: PatientConfig,
    pub graph: GraphConfig,
    pub infer: InferConfig,
    /// Train/validation/test fractions of the prior edges for Graph-M.
    pub edge_split: [f64; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patient: PatientConfig::default(),
            graph: GraphConfig::default(),
            infer: InferConfig::default(),
            edge_split: [0.8, 0.1, 0.1],
        }
    }
}

impl ModelConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.patient.validate()?;
        self.graph.validate()?;
        self.infer.validate()?;
        if self.patient.slot_dim != self.graph.embed_dim {
            return Err(Error::Config(format!(
                "patient slot width {} must equal gene embedding width {}",
                self.patient.slot_dim, self.graph.embed_dim
            )));
        }
        Ok(())
    }

    fn split(&self) -> (f64, f64, f64) {
        let [a, b, c] = self.edge_split;
        (a, b, c)
    }
}

/// Both independently trained models with the context Infer-M needs.
#[derive(Clone, Debug)]
pub struct Trained {
    pub patient: PatientModel,
    pub patient_log: PatientTrainingLog,
    pub graph: GraphModel,
    pub graph_log: GraphTrainingLog,
    pub ctx: GraphContext,
}

pub fn graph_context(x: &ExpressionMatrix, g: &GeneGraph) -> Result<GraphContext> {
    GraphContext::new(g.clone(), expression_features(x, g.gene_ids())?)
}

pub fn train_patient(x: &ExpressionMatrix, cfg: &ModelConfig, seed: u64) -> Result<(PatientModel, PatientTrainingLog)> {
    let (m, log) = train_patient_m(x, &cfg.patient, seed)?;
    info!("patient-m: {} epochs, best {}", log.train_loss.len(), log.best_epoch);
    Ok((m, log))
}

pub fn train_graph(
    x: &ExpressionMatrix,
    g: &GeneGraph,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<(GraphModel, GraphTrainingLog, GraphContext)> {
    let ctx = graph_context(x, g)?;
    let split = split_edges(g, cfg.split(), seed)?;
    let (m, log) = train_graph_m(&ctx, &split, &cfg.graph, seed)?;
    info!("graph-m: test AUC {:.3}", log.test_auc);
    Ok((m, log, ctx))
}

/// Trains Patient-M and Graph-M on aligned inputs.
pub fn train_models(x: &ExpressionMatrix, g: &GeneGraph, cfg: &ModelConfig, seed: u64) -> Result<Trained> {
    cfg.validate()?;
    let (patient, patient_log) = train_patient(x, cfg, seed)?;
    let (graph, graph_log, ctx) = train_graph(x, g, cfg, seed)?;
    Ok(Trained {
        patient,
        patient_log,
        graph,
        graph_log,
        ctx,
    })
}

#[derive(Clone, Debug)]
pub struct Inferred {
    pub state: IntegrationState,
    pub curves: BTreeMap<String, Vec<f64>>,
    pub networks: SubtypeNetworkSet,
    pub freeze_before: FreezeDigest,
    pub freeze_after: FreezeDigest,
}

impl Inferred {
    pub fn frozen(&self) -> bool {
        self.freeze_before == self.freeze_after
    }
}

/// Fine-tunes the graph encoder per subtype and decodes the networks.
pub fn infer_networks(trained: &Trained, x: &ExpressionMatrix, cfg: &ModelConfig, seed: u64) -> Result<Inferred> {
    let mut state = IntegrationState::new(trained.patient.clone(), trained.graph.clone(), trained.ctx.clone())?;
    let freeze_before = state.freeze_digest();
    let curves = state.refine_all(x, &cfg.infer, seed)?;
    let networks = state.generate_subtype_networks(cfg.infer.threshold)?;
    let freeze_after = state.freeze_digest();
    if freeze_before != freeze_after {
        return Err(Error::State("frozen parameters changed during refinement".into()));
    }
    Ok(Inferred {
        state,
        curves,
        networks,
        freeze_before,
        freeze_after,
    })
}
