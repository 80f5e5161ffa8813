//! Composable network layers: affine, batch normalization, elementwise
//! activation, and maxout.
//!
//! Each layer owns its parameters, their gradients, and whatever forward
//! state its backward pass needs. The contract is strict: `backward` may
//! only follow a training-mode `forward`, and panics otherwise. Evaluation
//! forwards leave no cache behind, so a trained layer can serve predictions
//! without growing state.

use crate::activations::ActivationSpec;
use crate::numerics::{Matrix, Rng};

/// Mutable view over one trainable parameter and a read view of its
/// gradient. Layers hand these out in a fixed, documented order.
pub struct ParamPair<'a> {
    pub name: &'static str,
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

/// Fully-connected affine map `y = xW + b`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    w: Matrix,
    b: Matrix,
    grad_w: Matrix,
    grad_b: Matrix,
    cache_input: Option<Matrix>,
}

impl DenseLayer {
    /// Weights drawn as zero-mean normals with the given stddev, bias zero.
    pub fn init(in_dim: usize, out_dim: usize, stddev: f64, rng: &mut Rng) -> Self {
        DenseLayer::from_parts(rng.normal_matrix(in_dim, out_dim, stddev), Matrix::zeros(1, out_dim))
    }

    pub fn from_parts(w: Matrix, b: Matrix) -> Self {
        assert_eq!(
            (1, w.cols()),
            b.shape(),
            "dense bias must be 1x{}, got {}x{}",
            w.cols(),
            b.rows(),
            b.cols()
        );
        let grad_w = Matrix::zeros(w.rows(), w.cols());
        let grad_b = Matrix::zeros(1, b.cols());
        DenseLayer { w, b, grad_w, grad_b, cache_input: None }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    fn forward(&mut self, x: &Matrix, training: bool) -> Matrix {
        assert_eq!(
            x.cols(),
            self.in_dim(),
            "dense forward shape mismatch: input {}x{} vs weights {}x{}",
            x.rows(),
            x.cols(),
            self.w.rows(),
            self.w.cols()
        );
        if training {
            self.cache_input = Some(x.clone());
        }
        x.matmul(&self.w).add_row_broadcast(&self.b)
    }

    fn backward(&mut self, upstream: &Matrix) -> Matrix {
        let x = self.cache_input.take().expect("dense backward called before training forward");
        assert_eq!(
            (x.rows(), self.out_dim()),
            upstream.shape(),
            "dense backward upstream shape {}x{} does not match forward output {}x{}",
            upstream.rows(),
            upstream.cols(),
            x.rows(),
            self.out_dim()
        );
        self.grad_w = x.transpose().matmul(upstream);
        self.grad_b = upstream.column_sums();
        upstream.matmul(&self.w.transpose())
    }
}

/// Per-column standardization with learnable scale (`gamma`, init 1) and
/// shift (`delta`, init 0), so right after initialization the output has
/// mean 0 and unit variance over the batch.
///
/// Training mode normalizes by the batch statistics (biased variance) and
/// folds them into running statistics; evaluation mode normalizes by the
/// running statistics and never mutates anything.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    gamma: Matrix,
    delta: Matrix,
    grad_gamma: Matrix,
    grad_delta: Matrix,
    eps: f64,
    momentum: f64,
    running_mean: Matrix,
    running_var: Matrix,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    centered: Matrix,
    inv_std: Matrix, // 1 x n
    x_hat: Matrix,
}

impl BatchNormLayer {
    pub fn new(n: usize) -> Self {
        BatchNormLayer::with_settings(n, 1e-5, 0.9)
    }

    pub fn with_settings(n: usize, eps: f64, momentum: f64) -> Self {
        assert!(eps > 0.0, "batchnorm eps must be positive, got {eps}");
        assert!((0.0..1.0).contains(&momentum), "batchnorm momentum must be in [0,1), got {momentum}");
        BatchNormLayer {
            gamma: Matrix::filled(1, n, 1.0),
            delta: Matrix::zeros(1, n),
            grad_gamma: Matrix::zeros(1, n),
            grad_delta: Matrix::zeros(1, n),
            eps,
            momentum,
            running_mean: Matrix::zeros(1, n),
            running_var: Matrix::filled(1, n, 1.0),
            cache: None,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.cols()
    }

    fn forward(&mut self, x: &Matrix, training: bool) -> Matrix {
        let n = self.width();
        assert_eq!(
            x.cols(),
            n,
            "batchnorm forward shape mismatch: input {}x{} vs width {n}",
            x.rows(),
            x.cols()
        );
        if training {
            assert!(
                x.rows() >= 2,
                "batchnorm training requires a batch of at least 2 rows, got {}",
                x.rows()
            );
            let (mean, var) = x.column_mean_var();
            let inv_std = var.map(|v| 1.0 / (v + self.eps).sqrt());
            let centered = {
                let mut c = x.clone();
                for i in 0..c.rows() {
                    for j in 0..n {
                        c[(i, j)] -= mean[(0, j)];
                    }
                }
                c
            };
            let x_hat = {
                let mut h = centered.clone();
                for i in 0..h.rows() {
                    for j in 0..n {
                        h[(i, j)] *= inv_std[(0, j)];
                    }
                }
                h
            };
            let mut out = x_hat.clone();
            for i in 0..out.rows() {
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] * self.gamma[(0, j)] + self.delta[(0, j)];
                }
            }
            for j in 0..n {
                self.running_mean[(0, j)] =
                    self.momentum * self.running_mean[(0, j)] + (1.0 - self.momentum) * mean[(0, j)];
                self.running_var[(0, j)] =
                    self.momentum * self.running_var[(0, j)] + (1.0 - self.momentum) * var[(0, j)];
            }
            self.cache = Some(BnCache { centered, inv_std, x_hat });
            out
        } else {
            let mut out = x.clone();
            for i in 0..out.rows() {
                for j in 0..n {
                    let hat = (out[(i, j)] - self.running_mean[(0, j)])
                        / (self.running_var[(0, j)] + self.eps).sqrt();
                    out[(i, j)] = hat * self.gamma[(0, j)] + self.delta[(0, j)];
                }
            }
            out
        }
    }

    /// Full input gradient including the mean and variance pathways, so the
    /// per-column sums of the returned gradient are (analytically) zero.
    fn backward(&mut self, upstream: &Matrix) -> Matrix {
        let cache = self.cache.take().expect("batchnorm backward called before training forward");
        let n = self.width();
        let m = cache.x_hat.rows();
        assert_eq!(
            (m, n),
            upstream.shape(),
            "batchnorm backward upstream shape {}x{} does not match forward output {m}x{n}",
            upstream.rows(),
            upstream.cols()
        );
        let mf = m as f64;

        self.grad_gamma = upstream.zip_map(&cache.x_hat, |u, h| u * h).column_sums();
        self.grad_delta = upstream.column_sums();

        // d loss / d x_hat
        let mut dxhat = upstream.clone();
        for i in 0..m {
            for j in 0..n {
                dxhat[(i, j)] *= self.gamma[(0, j)];
            }
        }

        let mut dvar = Matrix::zeros(1, n);
        for i in 0..m {
            for j in 0..n {
                dvar[(0, j)] += dxhat[(i, j)] * cache.centered[(i, j)];
            }
        }
        for j in 0..n {
            let s = cache.inv_std[(0, j)];
            dvar[(0, j)] *= -0.5 * s * s * s;
        }

        let mut dmean = Matrix::zeros(1, n);
        let centered_sums = cache.centered.column_sums();
        for i in 0..m {
            for j in 0..n {
                dmean[(0, j)] -= dxhat[(i, j)] * cache.inv_std[(0, j)];
            }
        }
        for j in 0..n {
            dmean[(0, j)] += dvar[(0, j)] * (-2.0 / mf) * centered_sums[(0, j)];
        }

        let mut dx = Matrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                dx[(i, j)] = dxhat[(i, j)] * cache.inv_std[(0, j)]
                    + dvar[(0, j)] * 2.0 * cache.centered[(i, j)] / mf
                    + dmean[(0, j)] / mf;
            }
        }
        dx
    }
}

/// Elementwise activation. Only TERELU carries a trainable value (`beta`),
/// whose gradient is accumulated over the whole batch during backward.
#[derive(Debug, Clone)]
pub struct ActivationLayer {
    spec: ActivationSpec,
    grad_beta: f64,
    cache_input: Option<Matrix>,
    beta_warned: bool,
}

impl ActivationLayer {
    pub fn new(spec: ActivationSpec) -> Self {
        ActivationLayer { spec, grad_beta: 0.0, cache_input: None, beta_warned: false }
    }

    pub fn spec(&self) -> &ActivationSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Matrix, training: bool) -> Matrix {
        if let ActivationSpec::Terelu(p) = &self.spec {
            if p.beta <= 0.0 && !self.beta_warned {
                log::warn!("terelu beta drifted to {} (<= 0); forward is no longer monotone", p.beta);
                self.beta_warned = true;
            }
        }
        if training {
            self.cache_input = Some(x.clone());
        }
        x.map(|v| self.spec.forward(v))
    }

    fn backward(&mut self, upstream: &Matrix) -> Matrix {
        let x = self.cache_input.take().expect("activation backward called before training forward");
        assert_eq!(
            x.shape(),
            upstream.shape(),
            "activation backward upstream shape {}x{} does not match forward input {}x{}",
            upstream.rows(),
            upstream.cols(),
            x.rows(),
            x.cols()
        );
        self.grad_beta = 0.0;
        if matches!(self.spec, ActivationSpec::Terelu(_)) {
            for (u, v) in upstream.data().iter().zip(x.data()) {
                self.grad_beta += u * self.spec.dbeta(*v);
            }
        }
        upstream.zip_map(&x, |u, v| u * self.spec.dx(v))
    }
}

/// Maxout unit: the elementwise maximum over `k` affine pieces. It replaces
/// a dense-plus-activation block rather than slotting into
/// [`ActivationSpec`].
#[derive(Debug, Clone)]
pub struct MaxoutLayer {
    ws: Vec<Matrix>,
    bs: Vec<Matrix>,
    grad_ws: Vec<Matrix>,
    grad_bs: Vec<Matrix>,
    cache: Option<MaxoutCache>,
}

#[derive(Debug, Clone)]
struct MaxoutCache {
    input: Matrix,
    /// Winning piece per (example, unit); ties break to the lowest piece
    /// index at forward time so backward is deterministic.
    argmax: Vec<usize>,
}

impl MaxoutLayer {
    pub fn init(in_dim: usize, out_dim: usize, k: usize, stddev: f64, rng: &mut Rng) -> Self {
        let ws = (0..k).map(|_| rng.normal_matrix(in_dim, out_dim, stddev)).collect();
        let bs = (0..k).map(|_| Matrix::zeros(1, out_dim)).collect();
        MaxoutLayer::from_parts(ws, bs)
    }

    pub fn from_parts(ws: Vec<Matrix>, bs: Vec<Matrix>) -> Self {
        assert!(ws.len() >= 2, "maxout requires at least 2 pieces, got {}", ws.len());
        assert_eq!(ws.len(), bs.len(), "maxout piece count mismatch: {} weights vs {} biases", ws.len(), bs.len());
        let shape = ws[0].shape();
        for w in &ws {
            assert_eq!(w.shape(), shape, "maxout pieces must share shapes");
        }
        for b in &bs {
            assert_eq!(b.shape(), (1, shape.1), "maxout biases must be 1x{}", shape.1);
        }
        let grad_ws = ws.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        let grad_bs = bs.iter().map(|b| Matrix::zeros(1, b.cols())).collect();
        MaxoutLayer { ws, bs, grad_ws, grad_bs, cache: None }
    }

    pub fn piece_count(&self) -> usize {
        self.ws.len()
    }

    pub fn in_dim(&self) -> usize {
        self.ws[0].rows()
    }

    pub fn out_dim(&self) -> usize {
        self.ws[0].cols()
    }

    fn forward(&mut self, x: &Matrix, training: bool) -> Matrix {
        assert_eq!(
            x.cols(),
            self.in_dim(),
            "maxout forward shape mismatch: input {}x{} vs weights {}x{}",
            x.rows(),
            x.cols(),
            self.in_dim(),
            self.out_dim()
        );
        let mut best = x.matmul(&self.ws[0]).add_row_broadcast(&self.bs[0]);
        let mut argmax = vec![0usize; best.rows() * best.cols()];
        for p in 1..self.piece_count() {
            let z = x.matmul(&self.ws[p]).add_row_broadcast(&self.bs[p]);
            for (idx, (cur, cand)) in best.data_mut().iter_mut().zip(z.data()).enumerate() {
                if *cand > *cur {
                    *cur = *cand;
                    argmax[idx] = p;
                }
            }
        }
        if training {
            self.cache = Some(MaxoutCache { input: x.clone(), argmax });
        }
        best
    }

    fn backward(&mut self, upstream: &Matrix) -> Matrix {
        let cache = self.cache.take().expect("maxout backward called before training forward");
        let (batch, out_dim) = (cache.input.rows(), self.out_dim());
        assert_eq!(
            (batch, out_dim),
            upstream.shape(),
            "maxout backward upstream shape {}x{} does not match forward output {batch}x{out_dim}",
            upstream.rows(),
            upstream.cols()
        );
        let x_t = cache.input.transpose();
        let mut downstream = Matrix::zeros(batch, cache.input.cols());
        for p in 0..self.piece_count() {
            let mut masked = Matrix::zeros(batch, out_dim);
            let mut any = false;
            for (idx, &winner) in cache.argmax.iter().enumerate() {
                if winner == p {
                    masked.data_mut()[idx] = upstream.data()[idx];
                    any = true;
                }
            }
            self.grad_ws[p] = x_t.matmul(&masked);
            self.grad_bs[p] = masked.column_sums();
            if any {
                let piece_down = masked.matmul(&self.ws[p].transpose());
                downstream = downstream.zip_map(&piece_down, |a, b| a + b);
            }
        }
        downstream
    }
}

/// Tagged union over the four layer types.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    Activation(ActivationLayer),
    Maxout(MaxoutLayer),
}

impl Layer {
    pub fn forward(&mut self, x: &Matrix, training: bool) -> Matrix {
        match self {
            Layer::Dense(l) => l.forward(x, training),
            Layer::BatchNorm(l) => l.forward(x, training),
            Layer::Activation(l) => l.forward(x, training),
            Layer::Maxout(l) => l.forward(x, training),
        }
    }

    pub fn backward(&mut self, upstream: &Matrix) -> Matrix {
        match self {
            Layer::Dense(l) => l.backward(upstream),
            Layer::BatchNorm(l) => l.backward(upstream),
            Layer::Activation(l) => l.backward(upstream),
            Layer::Maxout(l) => l.backward(upstream),
        }
    }

    /// Every trainable value exactly once, in a fixed order:
    /// Dense -> `[w, b]`, BatchNorm -> `[gamma, delta]`,
    /// Activation -> `[beta]` for TERELU (empty otherwise),
    /// Maxout -> `[w_0, b_0, w_1, b_1, ...]`.
    pub fn params(&mut self) -> Vec<ParamPair<'_>> {
        match self {
            Layer::Dense(l) => vec![
                ParamPair { name: "w", value: l.w.data_mut(), grad: l.grad_w.data() },
                ParamPair { name: "b", value: l.b.data_mut(), grad: l.grad_b.data() },
            ],
            Layer::BatchNorm(l) => vec![
                ParamPair { name: "gamma", value: l.gamma.data_mut(), grad: l.grad_gamma.data() },
                ParamPair { name: "delta", value: l.delta.data_mut(), grad: l.grad_delta.data() },
            ],
            Layer::Activation(l) => match &mut l.spec {
                ActivationSpec::Terelu(p) => vec![ParamPair {
                    name: "beta",
                    value: std::slice::from_mut(&mut p.beta),
                    grad: std::slice::from_ref(&l.grad_beta),
                }],
                _ => vec![],
            },
            Layer::Maxout(l) => {
                let mut out = Vec::with_capacity(2 * l.ws.len());
                for ((w, gw), (b, gb)) in l
                    .ws
                    .iter_mut()
                    .zip(&l.grad_ws)
                    .zip(l.bs.iter_mut().zip(&l.grad_bs))
                {
                    out.push(ParamPair { name: "w", value: w.data_mut(), grad: gw.data() });
                    out.push(ParamPair { name: "b", value: b.data_mut(), grad: gb.data() });
                }
                out
            }
        }
    }

    /// `(input, output)` widths where the layer constrains them; activation
    /// layers accept any width.
    pub fn io_dims(&self) -> (Option<usize>, Option<usize>) {
        match self {
            Layer::Dense(l) => (Some(l.in_dim()), Some(l.out_dim())),
            Layer::BatchNorm(l) => (Some(l.width()), Some(l.width())),
            Layer::Activation(_) => (None, None),
            Layer::Maxout(l) => (Some(l.in_dim()), Some(l.out_dim())),
        }
    }
}
