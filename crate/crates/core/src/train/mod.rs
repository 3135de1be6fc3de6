//! Training loops for the lattice-shift objective and the continuous
//! baseline, the learning-rate sweep, evaluation against the mean-image
//! reference, capacity reporting, and checkpoint persistence.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, NamedTensor,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::lattice::{EmbeddingTensor, FactorSpec, LatticeMode, LatticeOffset, LatticeSpec};
use crate::metrics::{psnr, ssim, MetricReport};
use crate::model::{ArchPlan, Backbone, QtaeModel, TaeBaselineModel};
use crate::rng::SeedStream;
use crate::tensor::{l1_loss, l1_loss_grad, AdamHyper, AdamState, Padding, Tensor};

const SPLIT_SALT: u64 = 1;
const EPOCH_STREAM_SALT: u64 = 2;

/// Which objective the run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    QtaeProduct,
    QtaeAdditive,
    TaeBaseline,
}

/// Pair orientation of the objective. `Forward` encodes the source, shifts
/// by +u and matches the target; `Reversed` encodes the target, shifts by
/// -u and matches the source. The two coincide under pair relabeling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveDirection {
    #[default]
    Forward,
    Reversed,
}

/// Padding mode of the backbone convolutions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    #[default]
    Zero,
    Circular,
}

impl PaddingMode {
    pub fn to_padding(self) -> Padding {
        match self {
            PaddingMode::Zero => Padding::Zero(1),
            PaddingMode::Circular => Padding::Circular(1),
        }
    }
}

fn default_epochs() -> usize {
    100
}

fn default_batch_size() -> usize {
    32
}

fn default_learning_rates() -> Vec<f64> {
    vec![1e-5, 1e-4, 1e-3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub factors: Vec<FactorSpec>,
    /// Channel count m of the lattice.
    pub channels: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub direction: ObjectiveDirection,
    #[serde(default)]
    pub padding: PaddingMode,
}

impl TrainConfig {
    pub fn new(mode: TrainMode, factors: Vec<FactorSpec>, channels: usize, seed: u64) -> Self {
        TrainConfig {
            mode,
            factors,
            channels,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rates: default_learning_rates(),
            seed,
            direction: ObjectiveDirection::default(),
            padding: PaddingMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::contract("train config: epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("train config: batch size must be at least 1"));
        }
        if self.learning_rates.is_empty() {
            return Err(Error::contract("train config: learning-rate set is empty"));
        }
        if self.learning_rates.iter().any(|lr| !lr.is_finite() || *lr <= 0.0) {
            return Err(Error::contract("train config: learning rates must be positive"));
        }
        self.lattice()?;
        Ok(())
    }

    /// The lattice the embedding lives on. The baseline shares it for
    /// capacity and pose-search bookkeeping.
    pub fn lattice(&self) -> Result<LatticeSpec> {
        let mode = match self.mode {
            TrainMode::QtaeAdditive => LatticeMode::Additive,
            TrainMode::QtaeProduct | TrainMode::TaeBaseline => LatticeMode::Product,
        };
        LatticeSpec::new(self.factors.clone(), self.channels, mode)
    }
}

/// A model under training or restored from a checkpoint.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Qtae(QtaeModel<f32>),
    Tae(TaeBaselineModel<f32>),
}

impl TrainedModel {
    pub fn backbone(&self) -> &Backbone<f32> {
        match self {
            TrainedModel::Qtae(m) => m.backbone(),
            TrainedModel::Tae(m) => m.backbone(),
        }
    }

    pub fn backbone_mut(&mut self) -> &mut Backbone<f32> {
        match self {
            TrainedModel::Qtae(m) => m.backbone_mut(),
            TrainedModel::Tae(m) => m.backbone_mut(),
        }
    }

    pub fn image_shape(&self) -> [usize; 3] {
        match self {
            TrainedModel::Qtae(m) => m.image_shape(),
            TrainedModel::Tae(m) => m.image_shape(),
        }
    }

    /// Render the model's prediction of `pair.target` from `pair.source`.
    pub fn predict(&self, pair: &SamplePair) -> Result<Tensor<f32>> {
        match self {
            TrainedModel::Qtae(m) => m.predict_transformed(&pair.source, &pair.offset),
            TrainedModel::Tae(m) => m.tae_predict(&pair.source, &offset_bins(&pair.offset, 1)),
        }
    }
}

/// Build the configured model at its seeded initialisation.
pub(crate) fn build_model(config: &TrainConfig, image: [usize; 3]) -> Result<TrainedModel> {
    let lattice = config.lattice()?;
    let padding = config.padding.to_padding();
    match config.mode {
        TrainMode::QtaeProduct | TrainMode::QtaeAdditive => Ok(TrainedModel::Qtae(
            QtaeModel::new(image, lattice, padding, config.seed)?,
        )),
        TrainMode::TaeBaseline => Ok(TrainedModel::Tae(TaeBaselineModel::new(
            image,
            lattice.factor_count(),
            lattice.element_count(),
            padding,
            config.seed,
        )?)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_psnr: f64,
    pub val_ssim: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub lr: f64,
    pub diverged: bool,
    /// Validation PSNR after the final completed epoch, if any.
    pub final_val_psnr: Option<f64>,
    pub curve: Vec<EpochRecord>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub best_lr: f64,
    /// One entry per swept learning rate, in config order.
    pub sweep: Vec<SweepReport>,
}

/// Loss curves in the report format: epoch, lr, loss, psnr, ssim.
pub fn curve_to_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,loss,psnr,ssim\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.epoch, r.lr, r.train_loss, r.val_psnr, r.val_ssim
        ));
    }
    out
}

/// Deterministic validation split: a seeded permutation reserves roughly a
/// tenth of the pairs (at least one) for learning-rate selection.
pub fn validation_split(seed: u64, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::contract("need at least 2 pairs to reserve a validation split"));
    }
    let mut rng = SeedStream::derive(seed, SPLIT_SALT);
    let order = rng.permutation(n);
    let n_val = (n / 10).max(1);
    let val = order[..n_val].to_vec();
    let train = order[n_val..].to_vec();
    Ok((train, val))
}

/// Offset components as continuous values in bin units, optionally negated.
/// The baseline consumes the transformation in this parameterisation.
fn offset_bins(u: &LatticeOffset, sign: i64) -> Vec<f64> {
    u.components.iter().map(|c| (c * sign) as f64).collect()
}

fn batch_images(batch: &[&SamplePair], use_target: bool, image: [usize; 3]) -> Result<Tensor<f32>> {
    let [c, h, w] = image;
    let plane = c * h * w;
    let mut out = Tensor::zeros(&[batch.len(), c, h, w]);
    for (i, pair) in batch.iter().enumerate() {
        let src = if use_target { &pair.target } else { &pair.source };
        if src.shape() != image {
            return Err(Error::contract(format!(
                "pair image shape {:?} does not match {:?}",
                src.shape(),
                image
            )));
        }
        out.data_mut()[i * plane..(i + 1) * plane].copy_from_slice(src.data());
    }
    Ok(out)
}

/// Shift each embedding row by its pair's offset (scaled by `sign`).
fn shift_rows_qtae(
    spec: &LatticeSpec,
    embed: &Tensor<f32>,
    batch: &[&SamplePair],
    sign: i64,
) -> Result<Tensor<f32>> {
    let len = spec.element_count();
    let mut out = Tensor::zeros(embed.shape());
    for (i, pair) in batch.iter().enumerate() {
        let row = embed.data()[i * len..(i + 1) * len].to_vec();
        let offset = LatticeOffset::new(
            pair.offset.components.iter().map(|c| c * sign).collect(),
        );
        let shifted = EmbeddingTensor::from_flat(spec.clone(), row)?.shifted(&offset)?;
        out.data_mut()[i * len..(i + 1) * len].copy_from_slice(shifted.tensor().data());
    }
    Ok(out)
}

/// Add each pair's offset (in bin units, scaled by `sign`) to the first
/// `slots` entries of its embedding row.
fn shift_rows_tae(
    embed: &mut Tensor<f32>,
    batch: &[&SamplePair],
    slots: usize,
    sign: i64,
) -> Result<()> {
    let len = embed.shape()[1];
    for (i, pair) in batch.iter().enumerate() {
        let u = offset_bins(&pair.offset, sign);
        if u.len() != slots {
            return Err(Error::contract(format!(
                "pair offset has {} components, model reserves {slots} slots",
                u.len()
            )));
        }
        for (j, inc) in u.iter().enumerate() {
            embed.data_mut()[i * len + j] += *inc as f32;
        }
    }
    Ok(())
}

/// One optimisation step over a batch. Returns the batch mean L1 loss.
fn step_batch(
    model: &mut TrainedModel,
    adam: &mut AdamState<f32>,
    batch: &[&SamplePair],
    direction: ObjectiveDirection,
) -> Result<f64> {
    let image = model.image_shape();
    // Reversed trains the same mapping on relabeled pairs: inputs and
    // references swap and the shift flips sign.
    let (encode_target, sign) = match direction {
        ObjectiveDirection::Forward => (false, 1i64),
        ObjectiveDirection::Reversed => (true, -1i64),
    };
    let x = batch_images(batch, encode_target, image)?;
    let reference = batch_images(batch, !encode_target, image)?;

    model.backbone_mut().zero_grads();
    let loss = match model {
        TrainedModel::Qtae(m) => {
            let spec = m.lattice().clone();
            let (embed, enc_trace) = m.backbone().encode_batch(&x)?;
            let shifted = shift_rows_qtae(&spec, &embed, batch, sign)?;
            let (out, dec_trace) = m.backbone().decode_batch(&shifted)?;
            let loss = l1_loss(&out, &reference)?;
            let d_out = l1_loss_grad(&out, &reference)?;
            let d_shifted = m.backbone_mut().decode_backward(&dec_trace, &d_out)?;
            // adjoint of the shift is the shift by the negated offset
            let d_embed = shift_rows_qtae(&spec, &d_shifted, batch, -sign)?;
            m.backbone_mut().encode_backward(&enc_trace, &d_embed)?;
            loss
        }
        TrainedModel::Tae(m) => {
            let slots = m.slots();
            let (mut embed, enc_trace) = m.backbone().encode_batch(&x)?;
            shift_rows_tae(&mut embed, batch, slots, sign)?;
            let (out, dec_trace) = m.backbone().decode_batch(&embed)?;
            let loss = l1_loss(&out, &reference)?;
            let d_out = l1_loss_grad(&out, &reference)?;
            // the slot increment is a constant add, so the cotangent passes
            // through unchanged
            let d_embed = m.backbone_mut().decode_backward(&dec_trace, &d_out)?;
            m.backbone_mut().encode_backward(&enc_trace, &d_embed)?;
            loss
        }
    };
    if !loss.is_finite() {
        return Err(Error::numeric("training loss is not finite"));
    }
    let mut params = model.backbone_mut().parameters_mut();
    adam.step(&mut params)?;
    Ok(loss as f64)
}

fn validate_model(model: &TrainedModel, pairs: &[SamplePair], idx: &[usize]) -> Result<(f64, f64)> {
    let mut scores = Vec::with_capacity(idx.len());
    for &i in idx {
        let pred = model.predict(&pairs[i])?;
        let p = psnr(&pred, &pairs[i].target, 1.0)?;
        let s = ssim(&pred, &pairs[i].target)?;
        scores.push((p, s));
    }
    let report = MetricReport::from_scores(&scores)?;
    Ok((report.psnr, report.ssim))
}

/// Run epochs `start..end`. Returns the per-epoch records and whether the
/// run diverged (non-finite loss or gradients), which ends it early.
#[allow(clippy::too_many_arguments)]
fn run_epochs(
    model: &mut TrainedModel,
    adam: &mut AdamState<f32>,
    rng: &mut SeedStream,
    pairs: &[SamplePair],
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
    start: usize,
    end: usize,
    lr: f64,
) -> Result<(Vec<EpochRecord>, bool)> {
    let mut curve = Vec::new();
    for epoch in start..end {
        let order = rng.permutation(train_idx.len());
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        let mut diverged = false;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&SamplePair> =
                chunk.iter().map(|&i| &pairs[train_idx[i]]).collect();
            match step_batch(model, adam, &batch, config.direction) {
                Ok(loss) => {
                    loss_sum += loss * batch.len() as f64;
                    seen += batch.len();
                }
                Err(Error::Numeric(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if diverged {
            return Ok((curve, true));
        }
        let (val_psnr, val_ssim) = validate_model(model, pairs, val_idx)?;
        curve.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / seen as f64,
            val_psnr,
            val_ssim,
        });
    }
    Ok((curve, false))
}

/// Train with a learning-rate sweep and return the best checkpoint by
/// validation PSNR, along with the full sweep table.
pub fn train(config: &TrainConfig, pairs: &[SamplePair]) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::contract("training needs a non-empty dataset"));
    }
    let lattice = config.lattice()?;
    for pair in pairs {
        pair.validate()?;
        if pair.offset.components.len() != lattice.factor_count() {
            return Err(Error::contract("pair offset arity does not match the lattice"));
        }
    }
    let shape = pairs[0].source.shape();
    if shape.len() != 3 {
        return Err(Error::contract(format!("pair images must be [C, H, W], got {shape:?}")));
    }
    let image = [shape[0], shape[1], shape[2]];
    let (train_idx, val_idx) = validation_split(config.seed, pairs.len())?;

    let mut sweep = Vec::new();
    let mut best: Option<(usize, f64, TrainedModel, AdamState<f32>, SeedStream)> = None;
    for (li, &lr) in config.learning_rates.iter().enumerate() {
        let mut model = build_model(config, image)?;
        let mut adam = AdamState::new(AdamHyper::with_lr(lr));
        let mut rng = SeedStream::derive(config.seed, EPOCH_STREAM_SALT + li as u64);
        let (curve, diverged) = run_epochs(
            &mut model,
            &mut adam,
            &mut rng,
            pairs,
            &train_idx,
            &val_idx,
            config,
            0,
            config.epochs,
            lr,
        )?;
        let final_val_psnr = curve.last().map(|r| r.val_psnr);
        if !diverged {
            let score = final_val_psnr.expect("non-diverged run has at least one epoch");
            if best.as_ref().is_none_or(|(_, b, ..)| score > *b) {
                best = Some((li, score, model, adam, rng));
            }
        }
        sweep.push(SweepReport { lr, diverged, final_val_psnr, curve });
    }

    let (li, _, model, adam, rng) =
        best.ok_or_else(|| Error::numeric("every learning rate diverged"))?;
    let best_lr = config.learning_rates[li];
    let checkpoint = Checkpoint::capture(
        &model,
        &adam,
        CheckpointMeta {
            config: config.clone(),
            lattice,
            image,
            lr: best_lr,
            epoch: config.epochs,
            adam_step: adam.step_count(),
            rng: rng.state(),
        },
    );
    Ok(TrainOutcome { checkpoint, best_lr, sweep })
}

/// Continue a checkpointed run (at its recorded learning rate) until
/// `total_epochs`. Picking up at epoch e and finishing matches the
/// uninterrupted run bit for bit.
pub fn resume(ckpt: &Checkpoint, pairs: &[SamplePair], total_epochs: usize) -> Result<TrainOutcome> {
    if total_epochs < ckpt.meta.epoch {
        return Err(Error::contract(format!(
            "checkpoint is already at epoch {}, cannot resume to {total_epochs}",
            ckpt.meta.epoch
        )));
    }
    let mut config = ckpt.meta.config.clone();
    config.epochs = total_epochs;
    config.validate()?;
    let (mut model, mut adam, mut rng) = ckpt.instantiate()?;
    let (train_idx, val_idx) = validation_split(config.seed, pairs.len())?;
    let lr = ckpt.meta.lr;
    let (curve, diverged) = run_epochs(
        &mut model,
        &mut adam,
        &mut rng,
        pairs,
        &train_idx,
        &val_idx,
        &config,
        ckpt.meta.epoch,
        total_epochs,
        lr,
    )?;
    if diverged {
        return Err(Error::numeric("resumed run diverged"));
    }
    let final_val_psnr = curve.last().map(|r| r.val_psnr);
    let checkpoint = Checkpoint::capture(
        &model,
        &adam,
        CheckpointMeta {
            config: config.clone(),
            lattice: ckpt.meta.lattice.clone(),
            image: ckpt.meta.image,
            lr,
            epoch: total_epochs,
            adam_step: adam.step_count(),
            rng: rng.state(),
        },
    );
    Ok(TrainOutcome {
        checkpoint,
        best_lr: lr,
        sweep: vec![SweepReport { lr, diverged: false, final_val_psnr, curve }],
    })
}

/// Model metrics next to the mean-image reference.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model: MetricReport,
    pub mean_baseline: MetricReport,
}

/// Score arbitrary predictions against the pair targets.
pub fn evaluate_predictions<F>(mut predict: F, pairs: &[SamplePair]) -> Result<MetricReport>
where
    F: FnMut(&SamplePair) -> Result<Tensor<f32>>,
{
    if pairs.is_empty() {
        return Err(Error::contract("evaluation needs a non-empty dataset"));
    }
    let mut scores = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let pred = predict(pair)?;
        scores.push((psnr(&pred, &pair.target, 1.0)?, ssim(&pred, &pair.target)?));
    }
    MetricReport::from_scores(&scores)
}

/// The reference predictor: the mean of the evaluated targets, scored
/// against each of them.
pub fn mean_image_report(pairs: &[SamplePair]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::contract("evaluation needs a non-empty dataset"));
    }
    let shape = pairs[0].target.shape().to_vec();
    let mut mean = Tensor::<f32>::zeros(&shape);
    for pair in pairs {
        if pair.target.shape() != shape.as_slice() {
            return Err(Error::contract("evaluation pairs have mixed image shapes"));
        }
        mean.add_scaled(&pair.target, 1.0)?;
    }
    mean.scale_in_place(1.0 / pairs.len() as f32);
    evaluate_predictions(|_| Ok(mean.clone()), pairs)
}

/// Mean PSNR/SSIM of the model's predictions over `pairs`, with the
/// mean-image reference computed alongside.
pub fn evaluate(model: &TrainedModel, pairs: &[SamplePair]) -> Result<EvalReport> {
    let model_report = evaluate_predictions(|p| model.predict(p), pairs)?;
    let mean_baseline = mean_image_report(pairs)?;
    Ok(EvalReport { model: model_report, mean_baseline })
}

/// Embedding cell counts for both composition modes plus the trainable
/// parameter count of the configured mode's backbone.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityReport {
    pub mode: LatticeMode,
    pub embedding_cells: usize,
    pub product_cells: usize,
    pub additive_cells: usize,
    pub parameter_count: usize,
}

pub fn report_capacity(spec: &LatticeSpec, image: [usize; 3]) -> Result<CapacityReport> {
    spec.validate()?;
    let plan = ArchPlan::new(image, spec.element_count())?;
    Ok(CapacityReport {
        mode: spec.mode,
        embedding_cells: spec.element_count(),
        product_cells: spec.product_element_count(),
        additive_cells: spec.additive_element_count(),
        parameter_count: plan.parameter_count(),
    })
}

/// Pose estimate from the baseline: the difference of the transformation
/// slots between the two embeddings, in bin units, plus its rounding to a
/// lattice offset (wrapped to the signed representative for periodic
/// factors, clamped to the overlap range for aperiodic ones).
pub fn tae_pose_estimate(
    model: &TaeBaselineModel<f32>,
    source: &Tensor<f32>,
    target: &Tensor<f32>,
    spec: &LatticeSpec,
) -> Result<(Vec<f64>, LatticeOffset)> {
    if model.slots() != spec.factor_count() {
        return Err(Error::contract(format!(
            "model reserves {} slots, lattice has {} factors",
            model.slots(),
            spec.factor_count()
        )));
    }
    let a = model.embed(source)?;
    let b = model.embed(target)?;
    let continuous: Vec<f64> = (0..model.slots())
        .map(|i| b.tensor().data()[i] as f64 - a.tensor().data()[i] as f64)
        .collect();
    let mut rounded = Vec::with_capacity(continuous.len());
    for (value, factor) in continuous.iter().zip(&spec.factors) {
        let d = factor.extent as i64;
        let r = value.round() as i64;
        rounded.push(if factor.periodic {
            let m = r.rem_euclid(d);
            if m > d / 2 {
                m - d
            } else {
                m
            }
        } else {
            r.clamp(-(d - 1), d - 1)
        });
    }
    Ok((continuous, LatticeOffset::new(rounded)))
}
