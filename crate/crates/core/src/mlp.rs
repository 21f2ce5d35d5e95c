//! One-hidden-layer perceptron: sigmoid hidden units, softmax output, trained
//! by plain mini-batch gradient descent on cross-entropy.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Video;
use crate::error::{Error, Result};
use crate::features::{extract_into, Corpus, Sample, ScalingContext};
use crate::simulator::{AdaptationLogic, PlayerStateView};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Finite-difference step for [`gradient_check`].
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely in
/// [`gradient_check`]; the central difference carries ~1e-10 of rounding.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// `input x hidden`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `hidden x classes`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// Feature scaling the model was trained with; required to act as a
    /// streaming policy.
    pub scaling: Option<ScalingContext>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_size: 110,
            learning_rate: 0.05,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            validation_fraction: 1.0 / 9.0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::invalid("batch and hidden sizes must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must lie in (0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_samples: usize,
    pub validation_samples: usize,
    /// Mean cross-entropy over the training split after each epoch.
    pub epoch_train_loss: Vec<f64>,
    pub epoch_validation_loss: Vec<f64>,
    pub epoch_validation_accuracy: Vec<f64>,
}

impl TrainReport {
    pub fn final_validation_accuracy(&self) -> f64 {
        self.epoch_validation_accuracy.last().copied().unwrap_or(0.0)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-wise softmax in place.
fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Hidden activations and class probabilities of a batch.
struct Activations {
    hidden: Array2<f64>,
    probs: Array2<f64>,
}

struct Gradients {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let s = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-s..=s))
        };
        let w1 = glorot(input, hidden);
        let w2 = glorot(hidden, classes);
        MlpModel {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(classes),
            scaling: None,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.ncols()
    }

    pub fn classes(&self) -> usize {
        self.w2.ncols()
    }

    fn check_shapes(&self) -> Result<()> {
        let (input, hidden, classes) = (self.input_size(), self.hidden_size(), self.classes());
        let consistent = self.b1.len() == hidden
            && self.w2.nrows() == hidden
            && self.b2.len() == classes
            && classes >= 1;
        if !consistent {
            return Err(Error::invalid("inconsistent layer shapes"));
        }
        if let Some(ctx) = &self.scaling {
            ctx.validate()?;
            if ctx.feature_len(classes) != input {
                return Err(Error::Dimension {
                    expected: ctx.feature_len(classes),
                    got: input,
                });
            }
        }
        let finite = [&self.w1, &self.w2].iter().all(|w| w.iter().all(|x| x.is_finite()))
            && [&self.b1, &self.b2].iter().all(|b| b.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::invalid("non-finite model parameter"));
        }
        Ok(())
    }

    fn activations(&self, x: ArrayView2<'_, f64>) -> Activations {
        let mut hidden = x.dot(&self.w1);
        hidden += &self.b1;
        hidden.mapv_inplace(sigmoid);
        let mut probs = hidden.dot(&self.w2);
        probs += &self.b2;
        softmax_rows(&mut probs);
        Activations { hidden, probs }
    }

    /// Class probabilities for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_size() {
            return Err(Error::Dimension {
                expected: self.input_size(),
                got: features.len(),
            });
        }
        Ok(self.forward_unchecked(ArrayView1::from(features)))
    }

    fn forward_unchecked(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut h = x.dot(&self.w1);
        h += &self.b1;
        h.mapv_inplace(sigmoid);
        let mut z = h.dot(&self.w2);
        z += &self.b2;
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        z.mapv_inplace(|v| (v - max).exp());
        let sum = z.sum();
        z.iter().map(|v| v / sum).collect()
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(features)?))
    }

    /// Gradients of the summed cross-entropy over the batch, divided by
    /// `scale`.
    fn gradients(&self, x: ArrayView2<'_, f64>, labels: &[usize], scale: f64) -> (Gradients, f64) {
        let Activations { hidden, mut probs } = self.activations(x);
        let mut loss = 0.0;
        for (mut row, &y) in probs.rows_mut().into_iter().zip(labels) {
            loss -= row[y].max(f64::MIN_POSITIVE).ln();
            row[y] -= 1.0;
        }
        let dz = probs / scale;
        let w2 = hidden.t().dot(&dz);
        let b2 = dz.sum_axis(Axis(0));
        let mut dh = dz.dot(&self.w2.t());
        dh.zip_mut_with(&hidden, |g, h| *g *= h * (1.0 - h));
        let w1 = x.t().dot(&dh);
        let b1 = dh.sum_axis(Axis(0));
        (Gradients { w1, b1, w2, b2 }, loss)
    }

    /// Mean cross-entropy and accuracy over a batch.
    fn evaluate(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, f64) {
        if labels.is_empty() {
            return (0.0, 0.0);
        }
        let probs = self.activations(x).probs;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (row, &y) in probs.rows().into_iter().zip(labels) {
            loss -= row[y].max(f64::MIN_POSITIVE).ln();
            correct += usize::from(argmax(row.as_slice().expect("standard layout")) == y);
        }
        let n = labels.len() as f64;
        (loss / n, correct as f64 / n)
    }

    /// Cross-entropy of one sample.
    pub fn loss(&self, sample: &Sample) -> Result<f64> {
        let p = self.forward(&sample.features)?;
        let py = p.get(sample.label).ok_or(Error::Dimension {
            expected: self.classes(),
            got: sample.label + 1,
        })?;
        Ok(-py.max(f64::MIN_POSITIVE).ln())
    }

    pub fn to_json_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, &ModelFile::from(self))?;
        Ok(())
    }

    pub fn from_json_reader<R: Read>(r: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r)?;
        MlpModel::try_from(file)
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    input_size: usize,
    hidden_size: usize,
    output_size: usize,
    /// Row-major `input_size x hidden_size`.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Row-major `hidden_size x output_size`.
    w2: Vec<f64>,
    b2: Vec<f64>,
    scaling: Option<ScalingContext>,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            input_size: m.input_size(),
            hidden_size: m.hidden_size(),
            output_size: m.classes(),
            w1: m.w1.iter().copied().collect(),
            b1: m.b1.to_vec(),
            w2: m.w2.iter().copied().collect(),
            b2: m.b2.to_vec(),
            scaling: m.scaling,
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                f.format_version
            )));
        }
        let shape = |data: Vec<f64>, rows: usize, cols: usize| {
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::invalid(format!("weight matrix shape: {e}")))
        };
        let model = MlpModel {
            w1: shape(f.w1, f.input_size, f.hidden_size)?,
            b1: Array1::from(f.b1),
            w2: shape(f.w2, f.hidden_size, f.output_size)?,
            b2: Array1::from(f.b2),
            scaling: f.scaling,
        };
        model.check_shapes()?;
        Ok(model)
    }
}

fn stack(samples: &[Sample], idx: &[usize], width: usize) -> (Array2<f64>, Vec<usize>) {
    let mut x = Array2::zeros((idx.len(), width));
    let mut labels = Vec::with_capacity(idx.len());
    for (mut row, &i) in x.rows_mut().into_iter().zip(idx) {
        row.assign(&ArrayView1::from(&samples[i].features[..]));
        labels.push(samples[i].label);
    }
    (x, labels)
}

/// Trains a classifier with `classes` outputs on `samples`.
///
/// A pinned shuffle holds out `validation_fraction` of the samples; each
/// epoch visits the rest in a fresh pinned order.
pub fn train(samples: &[Sample], classes: usize, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    let width = samples
        .first()
        .ok_or_else(|| Error::DegenerateCorpus("no samples".into()))?
        .features
        .len();
    if let Some(s) = samples.iter().find(|s| s.features.len() != width) {
        return Err(Error::Dimension {
            expected: width,
            got: s.features.len(),
        });
    }
    if let Some(s) = samples.iter().find(|s| s.label >= classes) {
        return Err(Error::invalid(format!("label {} >= {classes} classes", s.label)));
    }
    let first = samples[0].label;
    if samples.iter().all(|s| s.label == first) {
        return Err(Error::DegenerateCorpus(format!(
            "every sample has label {first}; at least two classes are required"
        )));
    }
    if samples.len() < 2 {
        return Err(Error::DegenerateCorpus("need at least two samples".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((samples.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, samples.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let (val_x, val_y) = stack(samples, val_idx, width);
    let (all_x, all_y) = stack(samples, train_idx, width);

    let mut model = MlpModel::init(width, cfg.hidden_size, classes, rng.random());
    let mut report = TrainReport {
        train_samples: train_idx.len(),
        validation_samples: val_idx.len(),
        epoch_train_loss: Vec::with_capacity(cfg.epochs),
        epoch_validation_loss: Vec::with_capacity(cfg.epochs),
        epoch_validation_accuracy: Vec::with_capacity(cfg.epochs),
    };
    // positions into all_x so batches avoid re-reading the samples
    let mut positions: Vec<usize> = (0..train_idx.len()).collect();
    let mut batch_x = Array2::zeros((cfg.batch_size, width));
    let mut batch_y = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        positions.shuffle(&mut rng);
        for chunk in positions.chunks(cfg.batch_size) {
            if batch_x.nrows() != chunk.len() {
                batch_x = Array2::zeros((chunk.len(), width));
            }
            batch_y.clear();
            for (mut row, &p) in batch_x.rows_mut().into_iter().zip(chunk) {
                row.assign(&all_x.row(p));
                batch_y.push(all_y[p]);
            }
            let (g, _) = model.gradients(batch_x.view(), &batch_y, chunk.len() as f64);
            let lr = cfg.learning_rate;
            let wd = cfg.weight_decay;
            model.w1.zip_mut_with(&g.w1, |w, d| *w -= lr * (d + wd * *w));
            model.w2.zip_mut_with(&g.w2, |w, d| *w -= lr * (d + wd * *w));
            model.b1.scaled_add(-lr, &g.b1);
            model.b2.scaled_add(-lr, &g.b2);
        }
        let (train_loss, _) = model.evaluate(all_x.view(), &all_y);
        let (val_loss, val_acc) = model.evaluate(val_x.view(), &val_y);
        report.epoch_train_loss.push(train_loss);
        report.epoch_validation_loss.push(val_loss);
        report.epoch_validation_accuracy.push(val_acc);
    }
    Ok((model, report))
}

/// Trains on a feature corpus and embeds its scaling into the model.
pub fn train_corpus(corpus: &Corpus, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    let (mut model, report) = train(&corpus.samples, corpus.r, cfg)?;
    model.scaling = Some(corpus.ctx);
    model.check_shapes()?;
    Ok((model, report))
}

/// Largest relative deviation between backpropagated gradients and central
/// finite differences of the sample's cross-entropy, over every parameter.
/// Magnitudes below [`GRADIENT_CHECK_FLOOR`] are compared against the floor.
pub fn gradient_check(model: &MlpModel, sample: &Sample) -> Result<f64> {
    if sample.features.len() != model.input_size() {
        return Err(Error::Dimension {
            expected: model.input_size(),
            got: sample.features.len(),
        });
    }
    let x = ArrayView2::from_shape((1, model.input_size()), &sample.features[..])
        .expect("one row");
    let (g, _) = model.gradients(x, &[sample.label], 1.0);

    let h = GRADIENT_CHECK_STEP;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut compare = |analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    };
    macro_rules! sweep {
        ($param:ident, $grad:expr) => {
            for (idx, &analytic) in $grad.indexed_iter() {
                let orig = probe.$param[idx];
                probe.$param[idx] = orig + h;
                let plus = probe.loss(sample)?;
                probe.$param[idx] = orig - h;
                let minus = probe.loss(sample)?;
                probe.$param[idx] = orig;
                compare(analytic, plus, minus);
            }
        };
    }
    sweep!(w1, g.w1);
    sweep!(b1, g.b1);
    sweep!(w2, g.w2);
    sweep!(b2, g.b2);
    Ok(worst)
}

/// Streaming policy backed by a trained model.
#[derive(Debug, Clone)]
pub struct MlpLogic {
    model: MlpModel,
    ctx: ScalingContext,
    video: Video,
}

pub fn as_logic(model: &MlpModel, video: &Video) -> Result<MlpLogic> {
    let ctx = model
        .scaling
        .ok_or_else(|| Error::invalid("model carries no feature scaling"))?;
    if model.classes() != video.r() {
        return Err(Error::RepresentationMismatch {
            model: model.classes(),
            video: video.r(),
        });
    }
    model.check_shapes()?;
    Ok(MlpLogic {
        model: model.clone(),
        ctx,
        video: video.clone(),
    })
}

impl AdaptationLogic for MlpLogic {
    fn decide(&self, view: &PlayerStateView<'_>) -> usize {
        let mut features = vec![0.0; self.model.input_size()];
        extract_into(view, &self.video, &self.ctx, &mut features);
        1 + argmax(&self.model.forward_unchecked(ArrayView1::from(&features[..])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_model_is_uniform() {
        let model = MlpModel {
            w1: Array2::zeros((4, 3)),
            b1: Array1::zeros(3),
            w2: Array2::zeros((3, 5)),
            b2: Array1::zeros(5),
            scaling: None,
        };
        let p = model.forward(&[0.3, 0.1, 0.9, 0.0]).unwrap();
        assert!(p.iter().all(|x| (x - 0.2).abs() < 1e-15));
        assert!(model.forward(&[0.0; 3]).is_err());
    }

    #[test]
    fn hand_computed_two_two_two() {
        let model = MlpModel {
            w1: array![[0.5, -1.0], [2.0, 0.25]],
            b1: array![0.1, -0.2],
            w2: array![[1.0, -1.0], [0.5, 2.0]],
            b2: array![0.0, 0.3],
            scaling: None,
        };
        // oracle
        let x = [0.4, 0.8];
        let h1 = 1.0 / (1.0 + (-(0.4 * 0.5 + 0.8 * 2.0 + 0.1_f64)).exp());
        let h2 = 1.0 / (1.0 + (-(0.4 * -1.0 + 0.8 * 0.25 - 0.2_f64)).exp());
        let z1 = h1 * 1.0 + h2 * 0.5;
        let z2 = h1 * -1.0 + h2 * 2.0 + 0.3;
        let p1 = z1.exp() / (z1.exp() + z2.exp());
        let p = model.forward(&x).unwrap();
        assert!((p[0] - p1).abs() < 1e-12);
        assert!((p[1] - (1.0 - p1)).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut model = MlpModel::init(6, 4, 3, 11);
        model.b1[2] = 0.1 + 0.2;
        let mut buf = Vec::new();
        model.to_json_writer(&mut buf).unwrap();
        let back = MlpModel::from_json_reader(&buf[..]).unwrap();
        assert_eq!(back, model);
        let probe = [0.1, 0.9, 0.3, 0.5, 0.0, 1.0];
        let (a, b) = (model.forward(&probe).unwrap(), back.forward(&probe).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_single_class() {
        let samples = vec![
            Sample { features: vec![0.0], label: 1 },
            Sample { features: vec![1.0], label: 1 },
        ];
        assert!(matches!(
            train(&samples, 2, &TrainConfig::default()),
            Err(Error::DegenerateCorpus(_))
        ));
    }

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
