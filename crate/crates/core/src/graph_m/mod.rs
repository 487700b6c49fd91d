//! Graph-M: structural-feature message passing over the prior gene graph and
//! a link classifier on elementwise products of gene embeddings.

mod auc;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use auc::roc_auc;

use crate::data_io::{EdgeSplit, ExpressionMatrix, GeneGraph, PairSet};
use crate::error::{Error, Result};
use crate::numerics::{
    finite_difference_check, rng, sigmoid, Activation, Adam, GradCheckConfig, GradCheckReport,
    Matrix, Mlp, MlpSpec, Parameter, Tape, Var,
};

/// Probability clamp used in the link loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub edge_hidden: usize,
    pub decoder_hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden: 32,
            layers: 2,
            edge_hidden: 8,
            decoder_hidden: 32,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0
            || self.hidden == 0
            || self.edge_hidden == 0
            || self.decoder_hidden == 0
        {
            return Err(Error::Config("graph model widths must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("graph batch size must be positive".into()));
        }
        Adam::with_lr(self.lr).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphHyper {
    pub n_features: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub edge_hidden: usize,
    pub decoder_hidden: usize,
}

/// Everything message passing needs about the node set: the adjacency used
/// for aggregation and the per-gene expression summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphContext {
    pub graph: GeneGraph,
    pub features: Matrix,
}

impl GraphContext {
    pub fn new(graph: GeneGraph, features: Matrix) -> Result<Self> {
        if features.rows() != graph.n_nodes() {
            return Err(Error::Alignment(format!(
                "{} feature rows for {} graph nodes",
                features.rows(),
                graph.n_nodes()
            )));
        }
        Ok(Self { graph, features })
    }

    /// Same features over a different adjacency on the same node order.
    pub fn with_graph(&self, graph: GeneGraph) -> Result<Self> {
        if graph.gene_ids() != self.graph.gene_ids() {
            return Err(Error::Alignment(
                "replacement graph has a different node order".into(),
            ));
        }
        Self::new(graph, self.features.clone())
    }

    /// Node degrees divided by the mean degree, so the summed edge term
    /// stays on the scale of a single edge embedding.
    fn degree_column(&self) -> Matrix {
        let deg: Vec<f64> = self.graph.degrees().iter().map(|&d| d as f64).collect();
        let mean = deg.iter().sum::<f64>() / deg.len().max(1) as f64;
        let scale = if mean > 0.0 { 1.0 / mean } else { 1.0 };
        Matrix::column(&deg.iter().map(|d| d * scale).collect::<Vec<_>>())
    }

    /// Row-normalized adjacency; isolated rows stay zero.
    fn mean_aggregator(&self) -> Matrix {
        let mut a = self.graph.adjacency().clone();
        for r in 0..a.rows() {
            let deg: f64 = a.row(r).iter().sum();
            if deg > 0.0 {
                a.row_mut(r).iter_mut().for_each(|v| *v /= deg);
            }
        }
        a
    }
}

/// Per-gene expression summaries aligned with `genes`: the cohort mean
/// followed by one mean per subtype (sorted labels), each column z-scored
/// across genes.
pub fn expression_features(x: &ExpressionMatrix, genes: &[String]) -> Result<Matrix> {
    let cols: Vec<usize> = genes
        .iter()
        .map(|g| {
            x.gene_index(g).ok_or_else(|| {
                Error::Alignment(format!("gene {g} missing from the expression matrix"))
            })
        })
        .collect::<Result<_>>()?;
    let xs = x.values.select_cols(&cols);
    let mut columns = vec![xs.column_means()];
    for label in x.subtypes() {
        columns.push(
            xs.select_rows(&x.patients_with_label(&label))
                .column_means(),
        );
    }
    let n = genes.len();
    let mut out = Matrix::zeros(n, columns.len());
    for (c, col) in columns.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sd = if sd > 1e-12 { sd } else { 1.0 };
        for (r, v) in col.iter().enumerate() {
            out.set(r, c, (v - mean) / sd);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphModel {
    pub hyper: GraphHyper,
    pub edge_mlp: Mlp,
    pub node_mlp: Mlp,
    /// Linear+ReLU update layers; the last one has width `embed_dim`.
    pub message_layers: Vec<Mlp>,
    /// Linear projection to `embed_dim`, used only when there are no update layers.
    pub output: Option<Mlp>,
    pub decoder: Mlp,
}

impl GraphModel {
    pub fn new<R: Rng + ?Sized>(n_features: usize, cfg: &GraphConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (u, e) = (cfg.hidden, cfg.edge_hidden);
        let edge_mlp = Mlp::new(MlpSpec::simple(&[1, e, e], Activation::Identity)?, rng)?;
        let node_mlp = Mlp::new(
            MlpSpec::simple(&[e + n_features, u], Activation::Relu)?,
            rng,
        )?;
        let message_layers = (0..cfg.layers)
            .map(|l| {
                let out = if l + 1 == cfg.layers {
                    cfg.embed_dim
                } else {
                    u
                };
                Mlp::new(MlpSpec::simple(&[2 * u, out], Activation::Relu)?, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let output = if cfg.layers == 0 {
            Some(Mlp::new(
                MlpSpec::simple(&[u, cfg.embed_dim], Activation::Identity)?,
                rng,
            )?)
        } else {
            None
        };
        let decoder = Mlp::new(
            MlpSpec::simple(
                &[cfg.embed_dim, cfg.decoder_hidden, 1],
                Activation::Identity,
            )?,
            rng,
        )?;
        Ok(Self {
            hyper: GraphHyper {
                n_features,
                embed_dim: cfg.embed_dim,
                hidden: u,
                layers: cfg.layers,
                edge_hidden: e,
                decoder_hidden: cfg.decoder_hidden,
            },
            edge_mlp,
            node_mlp,
            message_layers,
            output,
            decoder,
        })
    }

    /// Structural MLPs and message-passing encoder (θ).
    pub fn theta(&self) -> Vec<&Parameter> {
        let mut out = self.edge_mlp.params();
        out.extend(self.node_mlp.params());
        for l in &self.message_layers {
            out.extend(l.params());
        }
        if let Some(o) = &self.output {
            out.extend(o.params());
        }
        out
    }

    pub fn theta_mut(&mut self) -> Vec<&mut Parameter> {
        self.split_params_mut().0
    }

    fn split_params_mut(&mut self) -> (Vec<&mut Parameter>, Vec<&mut Parameter>) {
        let mut theta = self.edge_mlp.params_mut();
        theta.extend(self.node_mlp.params_mut());
        for l in &mut self.message_layers {
            theta.extend(l.params_mut());
        }
        if let Some(o) = &mut self.output {
            theta.extend(o.params_mut());
        }
        (theta, self.decoder.params_mut())
    }

    /// Projects the decoder weights (not biases) onto the non-negative orthant,
    /// keeping ω monotone non-decreasing in every coordinate of `z_i ⊙ z_j`.
    pub fn clamp_decoder_weights(&mut self) {
        for layer in self.decoder.layers_mut() {
            layer
                .weight
                .value
                .data_mut()
                .iter_mut()
                .for_each(|w| *w = w.max(0.0));
        }
    }

    /// Link decoder (ω).
    pub fn omega(&self) -> Vec<&Parameter> {
        self.decoder.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let (mut out, omega) = self.split_params_mut();
        out.extend(omega);
        out
    }

    fn check_context(&self, ctx: &GraphContext) -> Result<()> {
        if ctx.features.cols() != self.hyper.n_features {
            return Err(Error::Alignment(format!(
                "model expects {} expression features, context has {}",
                self.hyper.n_features,
                ctx.features.cols()
            )));
        }
        Ok(())
    }

    pub(crate) fn record_features(&self, tape: &mut Tape, ctx: &GraphContext) -> Result<Var> {
        self.check_context(ctx)?;
        let one = tape.constant(Matrix::scalar(1.0));
        let per_edge = self.edge_mlp.forward_inference(tape, one)?;
        let deg = tape.constant(ctx.degree_column());
        let summed = tape.matmul(deg, per_edge)?;
        let feats = tape.constant(ctx.features.clone());
        let joined = tape.concat_cols(summed, feats)?;
        self.node_mlp.forward_inference(tape, joined)
    }

    pub(crate) fn record_encode(
        &self,
        tape: &mut Tape,
        ctx: &GraphContext,
        xprime: Var,
    ) -> Result<Var> {
        let agg = tape.constant(ctx.mean_aggregator());
        let mut h = xprime;
        for layer in &self.message_layers {
            let neigh = tape.matmul(agg, h)?;
            let joined = tape.concat_cols(h, neigh)?;
            h = layer.forward_inference(tape, joined)?;
        }
        match &self.output {
            Some(o) => o.forward_inference(tape, h),
            None => Ok(h),
        }
    }

    pub(crate) fn record_embeddings(&self, tape: &mut Tape, ctx: &GraphContext) -> Result<Var> {
        let xp = self.record_features(tape, ctx)?;
        self.record_encode(tape, ctx, xp)
    }

    /// Probabilities for `pairs` given embeddings already on the tape.
    pub(crate) fn record_scores(
        &self,
        tape: &mut Tape,
        zg: Var,
        pairs: &[(usize, usize)],
    ) -> Result<Var> {
        let logit = self.record_logits(tape, zg, pairs)?;
        Ok(tape.sigmoid(logit))
    }

    pub(crate) fn record_logits(
        &self,
        tape: &mut Tape,
        zg: Var,
        pairs: &[(usize, usize)],
    ) -> Result<Var> {
        if let Some(&(i, _)) = pairs.iter().find(|(i, j)| i == j) {
            return Err(Error::Domain(format!("link score of node {i} with itself")));
        }
        let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let zi = tape.gather_rows(zg, &left)?;
        let zj = tape.gather_rows(zg, &right)?;
        let prod = tape.mul(zi, zj)?;
        self.decoder.forward_inference(tape, prod)
    }

    /// X' for every node.
    pub fn structural_features(&self, ctx: &GraphContext) -> Result<Matrix> {
        let mut tape = Tape::new();
        let v = self.record_features(&mut tape, ctx)?;
        Ok(tape.value(v).clone())
    }

    /// Z_g from precomputed X'.
    pub fn graph_encode(&self, ctx: &GraphContext, xprime: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let xp = tape.constant(xprime.clone());
        let v = self.record_encode(&mut tape, ctx, xp)?;
        Ok(tape.value(v).clone())
    }

    pub fn embeddings(&self, ctx: &GraphContext) -> Result<Matrix> {
        let mut tape = Tape::new();
        let v = self.record_embeddings(&mut tape, ctx)?;
        Ok(tape.value(v).clone())
    }

    pub fn link_score(&self, zg: &Matrix, i: usize, j: usize) -> Result<f64> {
        Ok(self.link_scores(zg, &[(i, j)])?[0])
    }

    pub fn link_scores(&self, zg: &Matrix, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        Ok(self
            .link_logits(zg, pairs)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// Decoder outputs before the sigmoid.
    pub fn link_logits(&self, zg: &Matrix, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        if zg.cols() != self.hyper.embed_dim {
            return Err(Error::Dimension(format!(
                "embeddings of width {} for a decoder of width {}",
                zg.cols(),
                self.hyper.embed_dim
            )));
        }
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let z = tape.constant(zg.clone());
        let s = self.record_logits(&mut tape, z, pairs)?;
        Ok(tape.value(s).data().to_vec())
    }

    /// Mean clamped binary cross-entropy over labeled pairs.
    pub fn link_loss(
        &self,
        ctx: &GraphContext,
        pairs: &[(usize, usize)],
        labels: &[f64],
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.record_link_loss(&mut tape, ctx, pairs, labels)?;
        Ok(tape.value(loss).get(0, 0))
    }

    fn record_link_loss(
        &self,
        tape: &mut Tape,
        ctx: &GraphContext,
        pairs: &[(usize, usize)],
        labels: &[f64],
    ) -> Result<Var> {
        if labels.iter().any(|&h| h != 0.0 && h != 1.0) {
            return Err(Error::Validation("link labels must be 0 or 1".into()));
        }
        let zg = self.record_embeddings(tape, ctx)?;
        let probs = self.record_scores(tape, zg, pairs)?;
        tape.bce(probs, labels, PROB_CLAMP)
    }

    /// Scores every unordered pair of `ctx`'s nodes and keeps those at or
    /// above `threshold`; isolated nodes are dropped.
    pub fn predict_links(
        &self,
        ctx: &GraphContext,
        threshold: f64,
    ) -> Result<(GeneGraph, Vec<f64>)> {
        let zg = self.embeddings(ctx)?;
        decode_network(self, &zg, ctx.graph.gene_ids(), threshold)
    }
}

/// All pairs `i < j` in row-major order.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

/// Thresholds decoder scores over all pairs of `genes`. Returns the pruned
/// graph and the scores of its edges in edge order.
pub fn decode_network(
    model: &GraphModel,
    zg: &Matrix,
    genes: &[String],
    threshold: f64,
) -> Result<(GeneGraph, Vec<f64>)> {
    let pairs = all_pairs(genes.len());
    let scores = model.link_scores(zg, &pairs)?;
    let kept: Vec<((usize, usize), f64)> = pairs
        .into_iter()
        .zip(scores)
        .filter(|&(_, s)| s >= threshold)
        .collect();
    let full = GeneGraph::from_edges(genes.to_vec(), kept.iter().map(|&(p, _)| p))?;
    let pruned = full.prune_isolated()?;
    if pruned.n_edges() == 0 {
        warn!("no pair reaches link threshold {threshold}; network is empty");
    }
    let lookup: std::collections::HashMap<(&str, &str), f64> = kept
        .iter()
        .map(|&((i, j), s)| ((genes[i].as_str(), genes[j].as_str()), s))
        .collect();
    let edge_scores = pruned
        .edges()
        .iter()
        .map(|&(a, b)| lookup[&(pruned.gene_ids()[a].as_str(), pruned.gene_ids()[b].as_str())])
        .collect();
    Ok((pruned, edge_scores))
}

/// Back-propagates the link loss and compares against finite differences
/// over every parameter of the model.
pub fn check_link_gradients<R: Rng + ?Sized>(
    model: &mut GraphModel,
    ctx: &GraphContext,
    pairs: &[(usize, usize)],
    labels: &[f64],
    cfg: GradCheckConfig,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let loss = model.record_link_loss(&mut tape, ctx, pairs, labels)?;
    let mut params = model.params_mut();
    for p in params.iter_mut() {
        p.zero_grad();
    }
    tape.backward(loss, &mut params)?;
    drop(params);
    finite_difference_check(
        model,
        |m| m.params_mut(),
        |m| m.link_loss(ctx, pairs, labels),
        cfg,
        rng,
    )
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphTrainingLog {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub val_auc: f64,
    pub test_auc: f64,
    pub test_accuracy: f64,
}

fn evaluate(model: &GraphModel, ctx: &GraphContext, set: &PairSet) -> Result<(f64, f64, f64)> {
    let (pairs, labels) = set.labeled();
    let loss = model.link_loss(ctx, &pairs, &labels)?;
    let zg = model.embeddings(ctx)?;
    let scores = model.link_scores(&zg, &pairs)?;
    let correct = scores
        .iter()
        .zip(&labels)
        .filter(|(s, h)| (**s >= 0.5) == (**h == 1.0))
        .count();
    Ok((
        loss,
        roc_auc(&scores, &labels),
        correct as f64 / labels.len().max(1) as f64,
    ))
}

/// Minibatch training on the training pairs with message passing over the
/// training edges only, early stopping on validation loss.
pub fn train_graph_m(
    ctx: &GraphContext,
    split: &EdgeSplit,
    cfg: &GraphConfig,
    seed: u64,
) -> Result<(GraphModel, GraphTrainingLog)> {
    cfg.validate()?;
    let train_ctx = ctx.with_graph(split.train_graph(&ctx.graph)?)?;
    let mut model = GraphModel::new(
        ctx.features.cols(),
        cfg,
        &mut rng::stream(seed, "graph/init"),
    )?;
    let adam = Adam::with_lr(cfg.lr)?;
    let (pairs, labels) = split.train.labeled();
    let (val_pairs, val_labels) = split.val.labeled();
    let mut log = GraphTrainingLog::default();
    let mut best = (f64::INFINITY, model.clone());
    let mut since_best = 0;
    let mut shuffle_rng = rng::stream(seed, "graph/shuffle");
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let bp: Vec<(usize, usize)> = batch.iter().map(|&k| pairs[k]).collect();
            let bl: Vec<f64> = batch.iter().map(|&k| labels[k]).collect();
            let mut tape = Tape::new();
            let loss = model.record_link_loss(&mut tape, &train_ctx, &bp, &bl)?;
            let value = tape.value(loss).get(0, 0);
            if !value.is_finite() {
                return Err(Error::Training(format!(
                    "graph-m loss not finite at epoch {epoch}; last finite {:?}",
                    log.train_loss.last()
                )));
            }
            let mut params = model.params_mut();
            params.iter_mut().for_each(|p| p.zero_grad());
            tape.backward(loss, &mut params)?;
            adam.step(&mut params)?;
            model.clamp_decoder_weights();
            epoch_loss += value * batch.len() as f64;
        }
        log.train_loss.push(epoch_loss / pairs.len() as f64);

        let v = model.link_loss(&train_ctx, &val_pairs, &val_labels)?;
        log.val_loss.push(v);
        if v < best.0 {
            best = (v, model.clone());
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let model = best.1;
    let (_, val_auc, _) = evaluate(&model, &train_ctx, &split.val)?;
    let (_, test_auc, test_acc) = evaluate(&model, &train_ctx, &split.test)?;
    log.val_auc = val_auc;
    log.test_auc = test_auc;
    log.test_accuracy = test_acc;
    info!(
        "graph-m: {} epochs, best epoch {}, validation AUC {:.3}, test AUC {:.3}",
        log.train_loss.len(),
        log.best_epoch,
        val_auc,
        test_auc
    );
    if val_auc < 0.55 {
        warn!("graph-m validation AUC {val_auc:.3} is near chance");
    }
    Ok((model, log))
}
