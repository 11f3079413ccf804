//! The training loop.
//!
//! One epoch: encode the clean graph, derive cluster guidance from the
//! embedding, draw one guided augmentation, encode it, combine the losses
//! under the current curriculum indicator, take one Adam step, and advance the
//! curriculum.

use std::time::{Duration, Instant};

use crate::augment::{sample_view, AugmentationPlan};
use crate::config::{Ablation, KMeansSeeding, TrainConfig};
use crate::contrast::{clustering_loss, discrimination_loss, ContrastConfig};
use crate::curriculum::{adaptive_weights, CurriculumState, TaskWeights};
use crate::diff::{Matrix, Tape, Var};
use crate::encoder::{adam_step, embed, encode, init_params, AdamState, EncoderParams, FeatureInput};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, normalize_edges, GraphBundle, NormalizedAdjacency};
use crate::guidance::{entropy_loss, ClusterGuidance};
use crate::metrics::{evaluate, Scores};

const STREAM_INIT: u64 = 1;
const STREAM_KMEANS: u64 = 2;
const STREAM_AUGMENT: u64 = 3;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent seed for one random stream at one epoch.
pub fn derive_seed(master: u64, stream: u64, epoch: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_mul(0x1_0000_0001) ^ splitmix64(epoch)))
}

/// Everything a single epoch's loss depends on besides the weights.
#[derive(Debug, Clone)]
pub struct EpochInputs {
    pub adj: NormalizedAdjacency,
    pub features: FeatureInput,
    pub view_adj: NormalizedAdjacency,
    pub view_features: FeatureInput,
    pub centroids: Matrix,
    pub pseudo_labels: Vec<usize>,
    pub indicator: Vec<bool>,
    pub weights: TaskWeights,
    pub gamma: f64,
    pub contrast: ContrastConfig,
}

/// Scalar handles for the joint loss and its parts.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub discrimination: Option<Var>,
    pub clustering: Option<Var>,
    pub entropy: Var,
}

/// Loss values in the unit scale; skipped terms are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub discrimination: f64,
    pub clustering: f64,
    pub entropy: f64,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        LossValues {
            total: tape.value(self.total).item(),
            discrimination: get(self.discrimination),
            clustering: get(self.clustering),
            entropy: tape.value(self.entropy).item(),
        }
    }
}

/// `β·L_dt + α·L_ct + γ·L_en` from two already-encoded views. The entropy term
/// uses the clean view only.
pub fn combine_losses(tape: &mut Tape, z1: Var, z2: Var, inputs: &EpochInputs) -> Result<LossTerms> {
    let dt = discrimination_loss(tape, z1, z2, &inputs.indicator, &inputs.contrast)?;
    let ct = clustering_loss(
        tape,
        z1,
        z2,
        &inputs.centroids,
        &inputs.pseudo_labels,
        &inputs.indicator,
        &inputs.contrast,
    )?;
    let en = entropy_loss(tape, z1, &inputs.centroids)?;
    let mut total = tape.scale(en, inputs.gamma)?;
    if let Some(dt) = dt {
        let w = tape.scale(dt, inputs.weights.discrimination)?;
        total = tape.add(total, w)?;
    }
    if let Some(ct) = ct {
        let w = tape.scale(ct, inputs.weights.clustering)?;
        total = tape.add(total, w)?;
    }
    Ok(LossTerms {
        total,
        discrimination: dt,
        clustering: ct,
        entropy: en,
    })
}

/// Records both encoder passes and the joint loss for fixed epoch inputs.
pub fn joint_loss(tape: &mut Tape, w1: Var, w2: Var, inputs: &EpochInputs) -> Result<LossTerms> {
    let z1 = encode(tape, &inputs.adj, &inputs.features, w1, w2)?;
    let z2 = encode(tape, &inputs.view_adj, &inputs.view_features, w1, w2)?;
    combine_losses(tape, z1, z2, inputs)
}

/// Joint loss value at `params` for fixed epoch inputs.
pub fn evaluate_joint_loss(params: &EncoderParams, inputs: &EpochInputs) -> Result<LossValues> {
    let mut tape = Tape::new();
    let w1 = tape.constant(params.w1.clone())?;
    let w2 = tape.constant(params.w2.clone())?;
    Ok(joint_loss(&mut tape, w1, w2, inputs)?.values(&tape))
}

/// One row of the training history, unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub loss_dt: f64,
    pub loss_ct: f64,
    pub loss_en: f64,
    /// Nodes in the clustering task for this epoch's loss.
    pub n_ct: usize,
    pub scores: Option<Scores>,
}

/// Result of one [`Trainer::step`].
#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub record: EpochRecord,
    /// Inputs the step's loss was computed from, for re-evaluation.
    pub inputs: EpochInputs,
    /// Clean-view embedding before the step.
    pub embedding: Matrix,
    pub guidance: ClusterGuidance,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub ablation: Ablation,
    pub history: Vec<EpochRecord>,
    /// Clean-view embedding after the final update.
    pub embedding: Matrix,
    /// k-means labels of the final embedding.
    pub labels: Vec<usize>,
    /// Scores of `labels` against the ground truth, if the bundle has labels.
    pub scores: Option<Scores>,
    pub params: EncoderParams,
    pub wall_clock: Duration,
}

/// Stateful trainer over one bundle.
pub struct Trainer<'a> {
    bundle: &'a GraphBundle,
    cfg: TrainConfig,
    adj: NormalizedAdjacency,
    features: FeatureInput,
    params: EncoderParams,
    adam: AdamState,
    curriculum: CurriculumState,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(bundle: &'a GraphBundle, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if bundle.k() > bundle.n() {
            return Err(Error::InvalidArgument(format!(
                "k = {} exceeds the node count {}",
                bundle.k(),
                bundle.n()
            )));
        }
        let cfg = config.effective();
        let params = init_params(
            bundle.d(),
            cfg.encoder.hidden,
            cfg.encoder.out,
            derive_seed(cfg.train.seed, STREAM_INIT, 0),
        )?;
        let adam = AdamState::for_encoder(cfg.optim, &params);
        let curriculum = CurriculumState::new(bundle.n(), cfg.train.epochs, cfg.schedule())?;
        Ok(Self {
            bundle,
            adj: normalize_adjacency(bundle),
            features: FeatureInput::new(bundle.features()),
            params,
            adam,
            curriculum,
            epoch: 0,
            cfg,
        })
    }

    /// Configuration after folding in the ablation.
    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn curriculum(&self) -> &CurriculumState {
        &self.curriculum
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.train.epochs
    }

    fn kmeans_seed(&self) -> u64 {
        let epoch = match self.cfg.kmeans.seed_policy {
            KMeansSeeding::PerEpoch => self.epoch as u64,
            KMeansSeeding::Fixed => 0,
        };
        derive_seed(self.cfg.train.seed, STREAM_KMEANS, epoch)
    }

    /// Runs one epoch and updates the weights.
    pub fn step(&mut self) -> Result<EpochOutcome> {
        let epoch = self.epoch;
        self.step_inner().map_err(|e| e.in_epoch(epoch))
    }

    fn step_inner(&mut self) -> Result<EpochOutcome> {
        let bundle = self.bundle;
        let epoch = self.epoch;
        let mut tape = Tape::new();
        let w1 = tape.param(self.params.w1.clone())?;
        let w2 = tape.param(self.params.w2.clone())?;
        let z1 = encode(&mut tape, &self.adj, &self.features, w1, w2)?;
        let embedding = tape.value(z1).clone();

        let guidance = ClusterGuidance::compute(&embedding, bundle.k(), self.kmeans_seed())?;
        let indicator = self.curriculum.indicator_for_epoch(&guidance.entropy)?.to_vec();

        let plan = AugmentationPlan::build(bundle, &guidance.entropy, &guidance.pseudo_labels, &self.cfg.aug)?;
        let view = sample_view(
            bundle,
            &plan,
            &guidance.pseudo_labels,
            derive_seed(self.cfg.train.seed, STREAM_AUGMENT, epoch as u64),
        )?;
        let inputs = EpochInputs {
            adj: self.adj.clone(),
            features: self.features.clone(),
            view_adj: normalize_edges(bundle.n(), &view.edges),
            view_features: FeatureInput::new(&view.features),
            centroids: guidance.centroids.clone(),
            pseudo_labels: guidance.pseudo_labels.clone(),
            weights: adaptive_weights(&indicator),
            indicator,
            gamma: self.cfg.train.gamma,
            contrast: self.cfg.contrast,
        };
        let z2 = encode(&mut tape, &inputs.view_adj, &inputs.view_features, w1, w2)?;
        let terms = combine_losses(&mut tape, z1, z2, &inputs)?;
        let values = terms.values(&tape);
        if !values.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                value: values.total,
            });
        }

        let grads = tape.gradient(terms.total, &[w1, w2])?;
        let grads: [Matrix; 2] = grads.try_into().expect("two gradients");
        adam_step(&mut self.params, &grads, &mut self.adam)?;
        self.curriculum.advance(&guidance.entropy)?;
        self.epoch += 1;

        let scores = match bundle.labels() {
            Some(truth) => Some(evaluate(&guidance.pseudo_labels, truth)?),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            loss: values.total,
            loss_dt: values.discrimination,
            loss_ct: values.clustering,
            loss_en: values.entropy,
            n_ct: inputs.indicator.iter().filter(|&&b| b).count(),
            scores,
        };
        Ok(EpochOutcome {
            record,
            inputs,
            embedding,
            guidance,
        })
    }

    /// Embedding and k-means labels of the current weights.
    pub fn final_clustering(&self) -> Result<(Matrix, Vec<usize>)> {
        let z = embed(&self.adj, &self.features, &self.params)?;
        let seed = derive_seed(self.cfg.train.seed, STREAM_KMEANS, self.epoch as u64);
        let guidance = ClusterGuidance::compute(&z, self.bundle.k(), seed)?;
        Ok((z, guidance.pseudo_labels))
    }

    /// Runs the remaining epochs, calling `observe` after each one.
    pub fn run_with(mut self, mut observe: impl FnMut(&EpochRecord)) -> Result<TrainReport> {
        let start = Instant::now();
        let mut history = Vec::with_capacity(self.cfg.train.epochs);
        while !self.is_done() {
            let outcome = self.step()?;
            observe(&outcome.record);
            history.push(outcome.record);
        }
        let (embedding, labels) = self.final_clustering().map_err(|e| e.in_epoch(self.epoch))?;
        let scores = match self.bundle.labels() {
            Some(truth) => Some(evaluate(&labels, truth)?),
            None => None,
        };
        Ok(TrainReport {
            ablation: self.cfg.train.ablation,
            history,
            embedding,
            labels,
            scores,
            params: self.params,
            wall_clock: start.elapsed(),
        })
    }

    pub fn run(self) -> Result<TrainReport> {
        self.run_with(|_| {})
    }
}

/// Trains a fresh model on `bundle`.
pub fn train(bundle: &GraphBundle, config: &TrainConfig) -> Result<TrainReport> {
    Trainer::new(bundle, config)?.run()
}

/// Trains once per ablation, all from the same configuration and seed.
pub fn run_ablations(bundle: &GraphBundle, config: &TrainConfig) -> Result<Vec<TrainReport>> {
    Ablation::ALL
        .into_iter()
        .map(|ablation| {
            let mut cfg = *config;
            cfg.train.ablation = ablation;
            train(bundle, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GraphBundle {
        let features = Matrix::from_rows(&[
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ]);
        let edges = vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)];
        GraphBundle::new("tiny", 2, edges, features, Some(vec![0, 0, 0, 1, 1, 1])).unwrap()
    }

    fn small_config(epochs: usize) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.train.epochs = epochs;
        cfg.encoder.hidden = 8;
        cfg.encoder.out = 4;
        cfg.aug.p_e = 0.1;
        cfg
    }

    #[test]
    fn derived_seeds_differ_by_stream_and_epoch() {
        let a = derive_seed(0, STREAM_KMEANS, 0);
        assert_ne!(a, derive_seed(0, STREAM_AUGMENT, 0));
        assert_ne!(a, derive_seed(0, STREAM_KMEANS, 1));
        assert_ne!(a, derive_seed(1, STREAM_KMEANS, 0));
        assert_eq!(a, derive_seed(0, STREAM_KMEANS, 0));
    }

    #[test]
    fn runs_and_records_every_epoch() {
        let bundle = tiny();
        let report = train(&bundle, &small_config(5)).unwrap();
        assert_eq!(report.history.len(), 5);
        assert_eq!(report.labels.len(), 6);
        assert!(report.scores.is_some());
        assert!(report.history.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn self_paced_quota_reaches_every_node() {
        let bundle = tiny();
        let mut cfg = small_config(4);
        cfg.curriculum.pace = 2.0;
        let report = train(&bundle, &cfg).unwrap();
        let n_ct: Vec<usize> = report.history.iter().map(|r| r.n_ct).collect();
        assert_eq!(n_ct, vec![0, 3, 6, 6]);
    }

    #[test]
    fn k_above_n_is_rejected() {
        let b = GraphBundle::new("x", 3, vec![(0, 1)], Matrix::identity(2), None).unwrap();
        assert!(matches!(Trainer::new(&b, &small_config(1)), Err(Error::InvalidArgument(_))));
    }
}
