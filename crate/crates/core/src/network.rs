//! Sequential model assembly, softmax cross-entropy, and the SGD training
//! loop.
//!
//! Training is plain SGD with classical momentum, applied uniformly to every
//! trainable value a layer exposes, including TERELU's `beta`. Divergence is
//! surfaced, not masked: a non-finite loss aborts the run with the epoch and
//! batch in the error.

use crate::activations::ActivationSpec;
use crate::data::{self, Dataset};
use crate::error::Error;
use crate::layers::{ActivationLayer, BatchNormLayer, DenseLayer, Layer, MaxoutLayer, ParamPair};
use crate::numerics::{streams, Matrix, Rng};

/// An ordered layer stack. Adjacent widths are validated at construction.
#[derive(Debug, Clone)]
pub struct Model {
    layers: Vec<Layer>,
    rng_seed: u64,
}

impl Model {
    pub fn new(layers: Vec<Layer>, rng_seed: u64) -> Self {
        let mut width: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            let (in_dim, out_dim) = layer.io_dims();
            if let (Some(expected), Some(got)) = (width, in_dim) {
                assert_eq!(
                    expected, got,
                    "layer {i} expects input width {got} but the previous layer produces {expected}"
                );
            }
            if out_dim.is_some() {
                width = out_dim;
            }
        }
        Model { layers, rng_seed }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn forward(&mut self, x: &Matrix, training: bool) -> Matrix {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, training);
        }
        cur
    }

    /// Propagate a loss gradient back through every layer, populating each
    /// layer's parameter gradients. Returns the gradient at the input.
    pub fn backward(&mut self, loss_grad: &Matrix) -> Matrix {
        let mut cur = loss_grad.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur);
        }
        cur
    }

    /// Every trainable value in layer order; see [`Layer::params`] for the
    /// per-layer ordering.
    pub fn param_pairs(&mut self) -> Vec<ParamPair<'_>> {
        self.layers.iter_mut().flat_map(|l| l.params()).collect()
    }

    pub fn flat_params(&mut self) -> Vec<f64> {
        self.param_pairs().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        let mut offset = 0;
        for pair in self.param_pairs() {
            pair.value.copy_from_slice(&values[offset..offset + pair.value.len()]);
            offset += pair.value.len();
        }
        assert_eq!(offset, values.len(), "flat parameter vector length mismatch");
    }

    pub fn flat_grads(&mut self) -> Vec<f64> {
        self.param_pairs().iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    /// Current `beta` of each TERELU activation layer, in layer order.
    pub fn terelu_betas(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Activation(a) => match a.spec() {
                    ActivationSpec::Terelu(p) => Some(p.beta),
                    _ => None,
                },
                _ => None,
            })
            .collect()
    }
}

fn init_stddev(activation: &ActivationSpec, fan_in: usize) -> f64 {
    // Rectifier-family layers get sqrt(2/fan_in); tanh saturates, so it gets
    // sqrt(1/fan_in).
    match activation {
        ActivationSpec::Tanh => (1.0 / fan_in as f64).sqrt(),
        _ => (2.0 / fan_in as f64).sqrt(),
    }
}

/// Repeated `[Dense -> BatchNorm (optional) -> Activation]` blocks followed
/// by a plain dense output layer; the loss applies the softmax. Batch
/// normalization sits immediately before each activation.
pub fn build_fcnn(
    depth_hidden: usize,
    width: usize,
    input_dim: usize,
    classes: usize,
    activation: ActivationSpec,
    use_bn: bool,
    seed: u64,
) -> Model {
    assert!(depth_hidden >= 1, "depth_hidden must be at least 1");
    assert!(width >= 1 && input_dim >= 1 && classes >= 1, "widths must be positive");
    let mut rng = Rng::with_stream(seed, streams::WEIGHT_INIT);
    let mut layers = Vec::with_capacity(depth_hidden * 3 + 1);
    let mut in_dim = input_dim;
    for _ in 0..depth_hidden {
        layers.push(Layer::Dense(DenseLayer::init(
            in_dim,
            width,
            init_stddev(&activation, in_dim),
            &mut rng,
        )));
        if use_bn {
            layers.push(Layer::BatchNorm(BatchNormLayer::new(width)));
        }
        layers.push(Layer::Activation(ActivationLayer::new(activation.clone())));
        in_dim = width;
    }
    layers.push(Layer::Dense(DenseLayer::init(
        in_dim,
        classes,
        (1.0 / in_dim as f64).sqrt(),
        &mut rng,
    )));
    Model::new(layers, seed)
}

/// Maxout variant: the maxout unit replaces each dense-plus-activation
/// block, so batch normalization (when enabled) sits in front of it and
/// standardizes its input.
pub fn build_maxout_fcnn(
    depth_hidden: usize,
    width: usize,
    input_dim: usize,
    classes: usize,
    pieces: usize,
    use_bn: bool,
    seed: u64,
) -> Model {
    assert!(depth_hidden >= 1, "depth_hidden must be at least 1");
    assert!(width >= 1 && input_dim >= 1 && classes >= 1, "widths must be positive");
    let mut rng = Rng::with_stream(seed, streams::WEIGHT_INIT);
    let mut layers = Vec::with_capacity(depth_hidden * 2 + 1);
    let mut in_dim = input_dim;
    for _ in 0..depth_hidden {
        if use_bn {
            layers.push(Layer::BatchNorm(BatchNormLayer::new(in_dim)));
        }
        layers.push(Layer::Maxout(MaxoutLayer::init(
            in_dim,
            width,
            pieces,
            (2.0 / in_dim as f64).sqrt(),
            &mut rng,
        )));
        in_dim = width;
    }
    layers.push(Layer::Dense(DenseLayer::init(
        in_dim,
        classes,
        (1.0 / in_dim as f64).sqrt(),
        &mut rng,
    )));
    Model::new(layers, seed)
}

/// Mean cross-entropy of a softmax over the logits, with the log-sum-exp
/// stabilization, plus its gradient `(softmax - onehot) / batch`.
///
/// Panics on an out-of-range label.
pub fn softmax_xent(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    assert_eq!(
        logits.rows(),
        labels.len(),
        "logit rows {} do not match label count {}",
        logits.rows(),
        labels.len()
    );
    let classes = logits.cols();
    let batch = logits.rows();
    let scale = 1.0 / batch as f64;
    let mut grad = Matrix::zeros(batch, classes);
    let mut loss = 0.0;
    for i in 0..batch {
        let row = logits.row(i);
        let label = labels[i];
        assert!(label < classes, "label {label} out of range for {classes} classes");
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        loss += max + sum_exp.ln() - row[label];
        for j in 0..classes {
            grad[(i, j)] = (row[j] - max).exp() / sum_exp * scale;
        }
        grad[(i, label)] -= scale;
    }
    (loss * scale, grad)
}

/// Training hyperparameters. The paperless defaults: plain SGD momentum 0.9,
/// learning rate 0.01, batches of 64.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.01, momentum: 0.9, batch_size: 64, epochs: 30, seed: 1 }
    }
}

/// One metrics record per epoch; `beta_values` carries the current TERELU
/// `beta` per activation layer and is empty for other activations.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub beta_values: Vec<f64>,
}

/// SGD with classical momentum. Velocity buffers are laid out to match the
/// model's parameter order and persist across epochs.
#[derive(Debug, Clone)]
pub struct Sgd {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Sgd { learning_rate, momentum, velocity: Vec::new() }
    }

    pub fn step(&mut self, model: &mut Model) {
        let mut pairs = model.param_pairs();
        if self.velocity.is_empty() {
            self.velocity = pairs.iter().map(|p| vec![0.0; p.value.len()]).collect();
        }
        assert_eq!(
            self.velocity.len(),
            pairs.len(),
            "optimizer state does not match the model's parameter layout"
        );
        for (pair, vel) in pairs.iter_mut().zip(&mut self.velocity) {
            for ((w, &g), v) in pair.value.iter_mut().zip(pair.grad.iter()).zip(vel.iter_mut()) {
                *v = self.momentum * *v + g;
                *w -= self.learning_rate * *v;
            }
        }
    }
}

/// One pass over seeded-shuffled batches: forward, loss, backward, update.
/// Returns the epoch-mean training loss and accuracy, accumulated from the
/// training-mode forward passes.
pub fn train_epoch(
    model: &mut Model,
    ds: &Dataset,
    cfg: &TrainConfig,
    sgd: &mut Sgd,
    rng: &mut Rng,
    epoch: usize,
) -> Result<(f64, f64), Error> {
    assert!(!ds.is_empty(), "train_epoch on empty dataset");
    let batch_seed = rng.next_u64();
    let n = ds.len() as f64;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for (batch_idx, (x, labels)) in data::batches(ds, cfg.batch_size, batch_seed).enumerate() {
        let logits = model.forward(&x, true);
        let (loss, grad) = softmax_xent(&logits, &labels);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
        }
        loss_sum += loss * labels.len() as f64;
        for (pred, &label) in logits.argmax_rows().iter().zip(&labels) {
            if *pred == label {
                correct += 1;
            }
        }
        model.backward(&grad);
        sgd.step(model);
    }
    Ok((loss_sum / n, correct as f64 / n))
}

/// Evaluation-mode loss and accuracy over a dataset. Parameters and running
/// statistics are left untouched.
pub fn evaluate(model: &mut Model, ds: &Dataset) -> (f64, f64) {
    assert!(!ds.is_empty(), "evaluate on empty dataset");
    const CHUNK: usize = 512;
    let n = ds.len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let (x, labels) = ds.gather(&idx);
        let logits = model.forward(&x, false);
        let (loss, _) = softmax_xent(&logits, &labels);
        loss_sum += loss * labels.len() as f64;
        for (pred, &label) in logits.argmax_rows().iter().zip(&labels) {
            if *pred == label {
                correct += 1;
            }
        }
        start = end;
    }
    (loss_sum / n as f64, correct as f64 / n as f64)
}

/// Full training run: `epochs` epochs of [`train_epoch`] with a validation
/// pass after each. `on_epoch` sees every completed row as it is produced,
/// so callers that stream rows to disk keep them even if a later epoch
/// aborts on a non-finite loss.
pub fn train(
    model: &mut Model,
    train_ds: &Dataset,
    val_ds: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRow),
) -> Result<Vec<MetricsRow>, Error> {
    let mut sgd = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut rng = Rng::with_stream(cfg.seed, streams::SHUFFLE);
    let mut rows = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (train_loss, train_acc) = train_epoch(model, train_ds, cfg, &mut sgd, &mut rng, epoch)?;
        let (val_loss, val_acc) = evaluate(model, val_ds);
        let row = MetricsRow {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            beta_values: model.terelu_betas(),
        };
        on_epoch(&row);
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blobs;

    fn tiny_blobs(seed: u64) -> Dataset {
        synthetic_blobs(50, 2, 4, 8.0, seed)
    }

    #[test]
    fn softmax_xent_uniform_logits() {
        let logits = Matrix::zeros(3, 10);
        let (loss, _) = softmax_xent(&logits, &[0, 5, 9]);
        assert!((loss - 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_xent_confident_correct() {
        let logits = Matrix::from_rows(&[&[30.0, -30.0]]);
        let (loss, grad) = softmax_xent(&logits, &[0]);
        assert!(loss < 1e-12);
        for &g in grad.data() {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "label 3 out of range")]
    fn softmax_xent_rejects_bad_label() {
        let _ = softmax_xent(&Matrix::zeros(1, 3), &[3]);
    }

    #[test]
    fn softmax_xent_gradient_matches_finite_differences() {
        let logits = Matrix::from_rows(&[&[0.3, -1.2, 0.7], &[2.0, 0.1, -0.4]]);
        let labels = [2usize, 0];
        let (_, grad) = softmax_xent(&logits, &labels);
        let point: Vec<f64> = logits.data().to_vec();
        let numeric = crate::gradcheck::central_diff(
            |v| softmax_xent(&Matrix::from_vec(2, 3, v.to_vec()), &labels).0,
            &point,
            1e-6,
        )
        .unwrap();
        for (a, n) in grad.data().iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
            assert!(rel < 1e-6, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn build_fcnn_paper_scale_architecture() {
        let mut m = build_fcnn(54, 64, 784, 10, ActivationSpec::terelu_default(), true, 1);
        // 54 blocks of 3 layers plus the output layer
        assert_eq!(m.layers().len(), 54 * 3 + 1);
        assert_eq!(m.terelu_betas().len(), 54);
        let x = Rng::seed_from(2).normal_matrix(4, 784, 1.0);
        assert_eq!(m.forward(&x, false).shape(), (4, 10));
    }

    #[test]
    fn build_fcnn_minimal_instance_runs() {
        let mut m = build_fcnn(1, 1, 1, 2, ActivationSpec::Relu, true, 3);
        let x = Matrix::from_rows(&[&[0.5], &[1.5]]);
        assert_eq!(m.forward(&x, true).shape(), (2, 2));
    }

    #[test]
    fn build_fcnn_comparison_depths() {
        for depth in [8usize, 20] {
            let m = build_fcnn(depth, 64, 16, 10, ActivationSpec::Elu(Default::default()), true, 1);
            assert_eq!(m.layers().len(), depth * 3 + 1);
        }
    }

    #[test]
    #[should_panic(expected = "expects input width")]
    fn model_rejects_incompatible_widths() {
        let mut rng = Rng::seed_from(1);
        let _ = Model::new(
            vec![
                Layer::Dense(DenseLayer::init(2, 3, 0.1, &mut rng)),
                Layer::Dense(DenseLayer::init(4, 1, 0.1, &mut rng)),
            ],
            1,
        );
    }

    #[test]
    fn model_forward_matches_manual_layer_loop() {
        let mut m = build_fcnn(2, 5, 3, 2, ActivationSpec::terelu_default(), true, 9);
        let mut manual = m.clone();
        let x = Rng::seed_from(4).normal_matrix(6, 3, 1.0);
        let composed = m.forward(&x, true);
        let mut cur = x;
        for layer in 0..manual.layers.len() {
            cur = manual.layers[layer].forward(&cur, true);
        }
        assert_eq!(composed, cur);
    }

    #[test]
    fn model_forward_zero_output_layer() {
        let m = Model::new(
            vec![Layer::Dense(DenseLayer::from_parts(Matrix::zeros(3, 2), Matrix::zeros(1, 2)))],
            0,
        );
        let mut m = m;
        let out = m.forward(&Rng::seed_from(5).normal_matrix(4, 3, 1.0), false);
        assert_eq!(out, Matrix::zeros(4, 2));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut m = build_fcnn(2, 4, 3, 2, ActivationSpec::terelu_default(), true, 6);
        let x = Rng::seed_from(7).normal_matrix(5, 3, 1.0);
        assert_eq!(m.forward(&x, false), m.forward(&x, false));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
        let ds = tiny_blobs(1);
        let mut m = build_fcnn(2, 4, 4, 2, ActivationSpec::terelu_default(), true, 2);
        let before = m.flat_params();
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 1, ..TrainConfig::default() };
        let mut sgd = Sgd::new(cfg.learning_rate, cfg.momentum);
        let mut rng = Rng::with_stream(cfg.seed, streams::SHUFFLE);
        train_epoch(&mut m, &ds, &cfg, &mut sgd, &mut rng, 0).unwrap();
        let after = m.flat_params();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn overfits_a_single_example() {
        let ds = Dataset::new(Matrix::from_rows(&[&[0.4, -1.0]]), vec![1], 2, "one");
        let mut m = build_fcnn(1, 4, 2, 2, ActivationSpec::terelu_default(), false, 3);
        let cfg = TrainConfig { epochs: 200, batch_size: 2, ..TrainConfig::default() };
        let rows = train(&mut m, &ds, &ds, &cfg, |_| {}).unwrap();
        assert_eq!(rows.last().unwrap().train_acc, 1.0);
        let (_, acc) = evaluate(&mut m, &ds);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn learns_separable_blobs_quickly() {
        let ds = tiny_blobs(3);
        let mut m = build_fcnn(2, 8, 4, 2, ActivationSpec::terelu_default(), true, 4);
        let cfg = TrainConfig { epochs: 50, batch_size: 16, ..TrainConfig::default() };
        let rows = train(&mut m, &ds, &ds, &cfg, |_| {}).unwrap();
        let best = rows.iter().map(|r| r.train_acc).fold(0.0f64, f64::max);
        assert!(best >= 0.99, "only reached train accuracy {best}");
    }

    #[test]
    fn loss_decreases_over_first_epochs_for_every_kind() {
        let ds = tiny_blobs(6);
        for spec in ActivationSpec::all_defaults() {
            let name = spec.name();
            let mut m = build_fcnn(2, 8, 4, 2, spec, true, 5);
            let cfg = TrainConfig { epochs: 5, batch_size: 16, ..TrainConfig::default() };
            let rows = train(&mut m, &ds, &ds, &cfg, |_| {}).unwrap();
            assert!(
                rows[4].train_loss < rows[0].train_loss,
                "{name}: loss went from {} to {}",
                rows[0].train_loss,
                rows[4].train_loss
            );
        }
    }

    #[test]
    fn evaluate_is_pure() {
        let ds = tiny_blobs(8);
        let mut m = build_fcnn(1, 4, 4, 2, ActivationSpec::terelu_default(), true, 7);
        let a = evaluate(&mut m, &ds);
        let b = evaluate(&mut m, &ds);
        assert_eq!(a, b);
        // and parameters are untouched
        let before = m.flat_params();
        let _ = evaluate(&mut m, &ds);
        assert_eq!(before, m.flat_params());
    }

    #[test]
    fn random_init_model_sits_at_chance_level() {
        let ds = synthetic_blobs(200, 10, 8, 0.0, 11);
        let mut m = build_fcnn(2, 16, 8, 10, ActivationSpec::terelu_default(), false, 12);
        let (_, acc) = evaluate(&mut m, &ds);
        assert!((acc - 0.1).abs() < 0.05, "chance-level accuracy came out at {acc}");
    }

    #[test]
    fn terelu_beta_receives_gradient_when_saturating_inputs_flow() {
        let mut m = Model::new(
            vec![
                Layer::Dense(DenseLayer::from_parts(Matrix::identity(2), Matrix::zeros(1, 2))),
                Layer::Activation(ActivationLayer::new(ActivationSpec::terelu_default())),
                Layer::Dense(DenseLayer::from_parts(Matrix::identity(2), Matrix::zeros(1, 2))),
            ],
            0,
        );
        // one pre-activation above mu = 1
        let x = Matrix::from_rows(&[&[3.0, 0.2]]);
        let logits = m.forward(&x, true);
        let (_, grad) = softmax_xent(&logits, &[0]);
        m.backward(&grad);
        let grads = m.flat_grads();
        let pairs = m.param_pairs();
        let beta_pos: usize = pairs
            .iter()
            .take_while(|p| p.name != "beta")
            .map(|p| p.value.len())
            .sum();
        assert!(grads[beta_pos].abs() > 1e-6, "beta gradient is {}", grads[beta_pos]);
    }

    #[test]
    fn fixed_seed_reproduces_identical_metrics() {
        let ds = tiny_blobs(13);
        let run = || {
            let mut m = build_fcnn(2, 6, 4, 2, ActivationSpec::terelu_default(), true, 21);
            let cfg = TrainConfig { epochs: 4, batch_size: 16, seed: 21, ..TrainConfig::default() };
            train(&mut m, &ds, &ds, &cfg, |_| {}).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.train_loss.to_bits(), rb.train_loss.to_bits());
            assert_eq!(ra.val_loss.to_bits(), rb.val_loss.to_bits());
            assert_eq!(ra.train_acc.to_bits(), rb.train_acc.to_bits());
            assert_eq!(ra.val_acc.to_bits(), rb.val_acc.to_bits());
            assert_eq!(ra.beta_values, rb.beta_values);
        }
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let ds = tiny_blobs(14);
        let mut m = build_fcnn(1, 4, 4, 2, ActivationSpec::Relu, false, 15);
        // poison one weight so the first batch produces a NaN loss
        m.param_pairs()[0].value[0] = f64::NAN;
        let cfg = TrainConfig { epochs: 3, batch_size: 16, ..TrainConfig::default() };
        let err = train(&mut m, &ds, &ds, &cfg, |_| {}).unwrap_err();
        match err {
            Error::NonFiniteLoss { epoch, batch } => {
                assert_eq!(epoch, 0);
                assert_eq!(batch, 0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn maxout_model_trains_on_blobs() {
        let ds = tiny_blobs(16);
        let mut m = build_maxout_fcnn(2, 8, 4, 2, 2, true, 17);
        let cfg = TrainConfig { epochs: 50, batch_size: 16, ..TrainConfig::default() };
        let rows = train(&mut m, &ds, &ds, &cfg, |_| {}).unwrap();
        let best = rows.iter().map(|r| r.train_acc).fold(0.0f64, f64::max);
        assert!(best >= 0.99, "maxout only reached train accuracy {best}");
    }
}
