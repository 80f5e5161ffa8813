//! Scalar activation functions: forward value, input derivative, and (for
//! TERELU) the derivative with respect to its trainable scale.
//!
//! TERELU extends the ELU shape with a saturating exponential above a
//! threshold `mu`:
//!
//! ```text
//! f(x) = alpha * (e^x - 1)              x <= 0
//!        x                              0 < x < mu
//!        beta * (mu - (e^(mu - x) - 1)) x >= mu
//! ```
//!
//! `alpha > 0` and `mu > 0` are hyperparameters; `beta` is trainable. All
//! three default to 1. Branch boundaries are fixed: at `x = 0` the
//! exponential branch applies, at `x = mu` the saturating branch applies,
//! and the derivative uses the same convention. The positive tail approaches
//! `beta * (mu + 1)`, so the gradient contracts toward zero for large
//! inputs instead of staying at 1.
//!
//! Mind one sharp edge: the function is continuous at `mu` only while
//! `beta = 1`. Training moves `beta`, and the formula is evaluated literally,
//! so a trained `beta != 1` introduces a jump of `(beta - 1) * mu` at the
//! threshold. Likewise `beta <= 0` breaks monotonicity; layers log a warning
//! if an update drives `beta` there, but the value is never clamped.
//!
//! The remaining kinds (RELU, leaky RELU, ELU, SRELU, APL, parametric
//! softplus, tanh) are the comparison baselines. Their SRELU/APL/softplus
//! parameters are fixed per layer here, not trained; only TERELU's `beta`
//! and the network weights learn.

/// TERELU parameter block. `beta` is the only trainable field.
#[derive(Debug, Clone, PartialEq)]
pub struct TereluParams {
    pub alpha: f64,
    pub mu: f64,
    pub beta: f64,
}

impl TereluParams {
    /// Panics unless `alpha > 0` and `mu > 0`.
    pub fn new(alpha: f64, mu: f64, beta: f64) -> Self {
        assert!(alpha > 0.0, "terelu alpha must be positive, got {alpha}");
        assert!(mu > 0.0, "terelu mu must be positive, got {mu}");
        TereluParams { alpha, mu, beta }
    }

    /// d f / d beta: zero below the threshold, `mu - (e^(mu - x) - 1)`
    /// (equivalently `f(x) / beta`) at and above it.
    pub fn dbeta(&self, x: f64) -> f64 {
        if x >= self.mu {
            self.mu - (self.mu - x).exp_m1()
        } else {
            0.0
        }
    }

    /// Limit of the saturating branch as `x -> inf`: `beta * (mu + 1)`.
    pub fn saturation(&self) -> f64 {
        self.beta * (self.mu + 1.0)
    }
}

impl Default for TereluParams {
    fn default() -> Self {
        TereluParams::new(1.0, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EluParams {
    pub alpha: f64,
}

impl EluParams {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha >= 0.0, "elu alpha must be non-negative, got {alpha}");
        EluParams { alpha }
    }
}

impl Default for EluParams {
    fn default() -> Self {
        EluParams { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LreluParams {
    /// Negative-side slope.
    pub alpha: f64,
}

impl LreluParams {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha >= 0.0, "leaky relu slope must be non-negative, got {alpha}");
        LreluParams { alpha }
    }
}

impl Default for LreluParams {
    fn default() -> Self {
        LreluParams { alpha: 0.01 }
    }
}

/// S-shaped rectifier with linear tails on both sides of an identity band.
/// The four parameters are fixed per layer in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct SreluParams {
    pub t_r: f64,
    pub a_r: f64,
    pub t_l: f64,
    pub a_l: f64,
}

impl SreluParams {
    /// Panics unless `t_l <= t_r` so the three branches partition the line.
    pub fn new(t_r: f64, a_r: f64, t_l: f64, a_l: f64) -> Self {
        assert!(t_l <= t_r, "srelu thresholds out of order: t_l = {t_l} > t_r = {t_r}");
        SreluParams { t_r, a_r, t_l, a_l }
    }
}

impl Default for SreluParams {
    fn default() -> Self {
        SreluParams::new(1.0, 0.5, -1.0, 0.1)
    }
}

/// Piecewise-linear unit: `max(0, x)` plus a sum of downward hinges
/// `a_s * max(0, -x + b_s)`. Hinge parameters are fixed per layer here.
#[derive(Debug, Clone, PartialEq)]
pub struct AplParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl AplParams {
    /// Panics unless both vectors are non-empty and equal length.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        assert!(!a.is_empty(), "apl requires at least one hinge");
        assert_eq!(a.len(), b.len(), "apl slope/location length mismatch: {} vs {}", a.len(), b.len());
        AplParams { a, b }
    }

    pub fn hinge_count(&self) -> usize {
        self.a.len()
    }
}

impl Default for AplParams {
    fn default() -> Self {
        AplParams::new(vec![0.5], vec![1.0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftplusParams {
    pub alpha: f64,
    pub beta: f64,
}

impl SoftplusParams {
    /// Panics if `beta == 0`.
    pub fn new(alpha: f64, beta: f64) -> Self {
        assert!(beta != 0.0, "softplus beta must be nonzero");
        SoftplusParams { alpha, beta }
    }
}

impl Default for SoftplusParams {
    fn default() -> Self {
        SoftplusParams { alpha: 1.0, beta: 1.0 }
    }
}

/// An activation kind together with its parameter block.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationSpec {
    Relu,
    Lrelu(LreluParams),
    Elu(EluParams),
    Srelu(SreluParams),
    Apl(AplParams),
    ParametricSoftplus(SoftplusParams),
    Tanh,
    Terelu(TereluParams),
}

/// The negative-side branch shared by ELU and TERELU. Both kinds must route
/// through this exact expression so they agree bit-for-bit below the
/// threshold.
#[inline]
fn exp_decay(alpha: f64, x: f64) -> f64 {
    alpha * x.exp_m1()
}

#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl ActivationSpec {
    pub fn relu() -> Self {
        ActivationSpec::Relu
    }

    pub fn terelu_default() -> Self {
        ActivationSpec::Terelu(TereluParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationSpec::Relu => "relu",
            ActivationSpec::Lrelu(_) => "lrelu",
            ActivationSpec::Elu(_) => "elu",
            ActivationSpec::Srelu(_) => "srelu",
            ActivationSpec::Apl(_) => "apl",
            ActivationSpec::ParametricSoftplus(_) => "softplus",
            ActivationSpec::Tanh => "tanh",
            ActivationSpec::Terelu(_) => "terelu",
        }
    }

    /// The default parameter block for each kind.
    pub fn default_of(name: &str) -> Option<ActivationSpec> {
        Some(match name {
            "relu" => ActivationSpec::Relu,
            "lrelu" => ActivationSpec::Lrelu(LreluParams::default()),
            "elu" => ActivationSpec::Elu(EluParams::default()),
            "srelu" => ActivationSpec::Srelu(SreluParams::default()),
            "apl" => ActivationSpec::Apl(AplParams::default()),
            "softplus" => ActivationSpec::ParametricSoftplus(SoftplusParams::default()),
            "tanh" => ActivationSpec::Tanh,
            "terelu" => ActivationSpec::Terelu(TereluParams::default()),
            _ => return None,
        })
    }

    /// All eight kinds at default parameters, in a fixed order.
    pub fn all_defaults() -> Vec<ActivationSpec> {
        ["relu", "lrelu", "elu", "srelu", "apl", "softplus", "tanh", "terelu"]
            .iter()
            .map(|n| ActivationSpec::default_of(n).unwrap())
            .collect()
    }

    pub fn forward(&self, x: f64) -> f64 {
        match self {
            ActivationSpec::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationSpec::Lrelu(p) => {
                if x > 0.0 {
                    x
                } else {
                    p.alpha * x
                }
            }
            ActivationSpec::Elu(p) => {
                if x > 0.0 {
                    x
                } else {
                    exp_decay(p.alpha, x)
                }
            }
            ActivationSpec::Srelu(p) => {
                if x >= p.t_r {
                    p.t_r + p.a_r * (x - p.t_r)
                } else if x <= p.t_l {
                    p.t_l + p.a_l * (x - p.t_l)
                } else {
                    x
                }
            }
            ActivationSpec::Apl(p) => {
                let mut y = x.max(0.0);
                for (&a, &b) in p.a.iter().zip(&p.b) {
                    y += a * (b - x).max(0.0);
                }
                y
            }
            ActivationSpec::ParametricSoftplus(p) => {
                let t = p.beta * x;
                p.alpha * (t.max(0.0) + (-t.abs()).exp().ln_1p())
            }
            ActivationSpec::Tanh => x.tanh(),
            ActivationSpec::Terelu(p) => {
                if x <= 0.0 {
                    exp_decay(p.alpha, x)
                } else if x < p.mu {
                    x
                } else {
                    p.beta * (p.mu - (p.mu - x).exp_m1())
                }
            }
        }
    }

    /// Derivative with respect to the input. At non-differentiable points it
    /// takes the branch that `forward` takes. The TERELU branches are written
    /// in terms of the forward value: `f(x) + alpha` below zero and
    /// `-f(x) + beta*mu + beta` (algebraically `beta * e^(mu - x)`) above the
    /// threshold.
    pub fn dx(&self, x: f64) -> f64 {
        match self {
            ActivationSpec::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationSpec::Lrelu(p) => {
                if x > 0.0 {
                    1.0
                } else {
                    p.alpha
                }
            }
            ActivationSpec::Elu(p) => {
                if x > 0.0 {
                    1.0
                } else {
                    p.alpha * x.exp()
                }
            }
            ActivationSpec::Srelu(p) => {
                if x >= p.t_r {
                    p.a_r
                } else if x <= p.t_l {
                    p.a_l
                } else {
                    1.0
                }
            }
            ActivationSpec::Apl(p) => {
                let mut d = if x > 0.0 { 1.0 } else { 0.0 };
                for (&a, &b) in p.a.iter().zip(&p.b) {
                    if x < b {
                        d -= a;
                    }
                }
                d
            }
            ActivationSpec::ParametricSoftplus(p) => p.alpha * p.beta * logistic(p.beta * x),
            ActivationSpec::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationSpec::Terelu(p) => {
                if x <= 0.0 {
                    self.forward(x) + p.alpha
                } else if x < p.mu {
                    1.0
                } else {
                    -self.forward(x) + p.beta * p.mu + p.beta
                }
            }
        }
    }

    /// Derivative with respect to the trainable TERELU scale; zero for every
    /// other kind, which has no trainable parameter.
    pub fn dbeta(&self, x: f64) -> f64 {
        match self {
            ActivationSpec::Terelu(p) => p.dbeta(x),
            _ => 0.0,
        }
    }

    /// Inputs where the derivative jumps. Gradient tests exclude a small
    /// neighborhood of these points because a central difference straddling
    /// a kink measures the average slope, not either one-sided derivative.
    pub fn kink_points(&self) -> Vec<f64> {
        match self {
            ActivationSpec::Relu | ActivationSpec::Lrelu(_) | ActivationSpec::Elu(_) => vec![0.0],
            ActivationSpec::Srelu(p) => vec![p.t_l, p.t_r],
            ActivationSpec::Apl(p) => {
                let mut pts = vec![0.0];
                pts.extend_from_slice(&p.b);
                pts
            }
            ActivationSpec::ParametricSoftplus(_) | ActivationSpec::Tanh => vec![],
            ActivationSpec::Terelu(p) => vec![0.0, p.mu],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_E: f64 = 0.367_879_441_171_442_33; // e^-1

    fn terelu(alpha: f64, mu: f64, beta: f64) -> ActivationSpec {
        ActivationSpec::Terelu(TereluParams::new(alpha, mu, beta))
    }

    #[test]
    fn terelu_forward_examples() {
        let t = terelu(1.0, 1.0, 1.0);
        assert_eq!(t.forward(0.0), 0.0);
        assert!((t.forward(2.0) - (2.0 - INV_E)).abs() < 1e-15);
        assert!((t.forward(-1.0) - (INV_E - 1.0)).abs() < 1e-15);
        // identity band
        assert_eq!(t.forward(0.5), 0.5);
    }

    #[test]
    fn terelu_boundary_conventions() {
        // at x = 0 the exponential branch applies, at x = mu the saturating one
        let t = terelu(2.0, 1.0, 3.0);
        assert_eq!(t.forward(0.0), 0.0); // 2 * (e^0 - 1)
        assert_eq!(t.dx(0.0), 2.0); // f(0) + alpha
        assert_eq!(t.forward(1.0), 3.0); // beta * (mu - (e^0 - 1)) = beta * mu
        assert_eq!(t.dbeta(1.0), 1.0); // mu - (e^0 - 1) = mu
    }

    #[test]
    fn terelu_dx_examples() {
        let t = terelu(1.0, 1.0, 1.0);
        assert!((t.dx(-1.0) - INV_E).abs() < 1e-15);
        assert_eq!(t.dx(0.5), 1.0);
        assert!((t.dx(2.0) - INV_E).abs() < 1e-15);
    }

    #[test]
    fn terelu_dbeta_examples() {
        assert_eq!(terelu(1.0, 1.0, 1.0).dbeta(0.0), 0.0);
        assert_eq!(terelu(1.0, 1.0, 1.0).dbeta(1.0), 1.0);
        let t = TereluParams::new(1.0, 1.0, 2.0);
        assert!((t.dbeta(2.0) - (2.0 - INV_E)).abs() < 1e-15);
        // dbeta equals f(x) / beta on the saturating branch
        let spec = ActivationSpec::Terelu(t.clone());
        assert!((t.dbeta(2.0) - spec.forward(2.0) / t.beta).abs() < 1e-15);
    }

    #[test]
    fn terelu_saturation_examples() {
        assert_eq!(TereluParams::new(1.0, 1.0, 1.0).saturation(), 2.0);
        assert_eq!(TereluParams::new(1.0, 1.0, 2.0).saturation(), 4.0);
        assert_eq!(TereluParams::new(1.0, 3.0, 1.0).saturation(), 4.0);
    }

    #[test]
    fn terelu_forward_approaches_saturation() {
        let p = TereluParams::default();
        let spec = ActivationSpec::Terelu(p.clone());
        assert!((spec.forward(50.0) - p.saturation()).abs() < 1e-12);
        assert!(spec.dx(50.0).abs() < 1e-20, "tail gradient {}", spec.dx(50.0));
    }

    #[test]
    fn terelu_dx_consistency_with_forward() {
        // below zero: dx = f + alpha; above mu: dx = -f + beta*mu + beta
        let mut rng = crate::numerics::Rng::seed_from(5);
        for _ in 0..20 {
            let alpha = 0.1 + 2.9 * unit(&mut rng);
            let mu = 0.1 + 2.9 * unit(&mut rng);
            let beta = 0.1 + 2.9 * unit(&mut rng);
            let spec = terelu(alpha, mu, beta);
            for _ in 0..50 {
                let xn = -6.0 * unit(&mut rng);
                assert!((spec.dx(xn) - (spec.forward(xn) + alpha)).abs() <= 1e-15);
                let xp = mu + 6.0 * unit(&mut rng);
                let expect = -spec.forward(xp) + beta * mu + beta;
                assert!((spec.dx(xp) - expect).abs() <= 1e-12);
                // and both agree with the closed form beta * e^(mu - x)
                assert!((spec.dx(xp) - beta * (mu - xp).exp()).abs() < 1e-12);
            }
        }
    }

    fn unit(rng: &mut crate::numerics::Rng) -> f64 {
        rng.uniform()
    }

    #[test]
    fn terelu_continuity_at_unit_beta() {
        let eps = 1e-8;
        for alpha in [0.5, 1.0, 2.0] {
            let spec = terelu(alpha, 1.0, 1.0);
            let jump_mu = (spec.forward(1.0 - eps) - spec.forward(1.0 + eps)).abs();
            assert!(jump_mu < 3.0 * eps, "jump at mu: {jump_mu}");
            let jump_zero = (spec.forward(-eps) - spec.forward(eps)).abs();
            assert!(jump_zero < 3.0 * eps, "jump at zero: {jump_zero}");
        }
    }

    #[test]
    fn terelu_discontinuous_at_mu_when_beta_trained_away_from_one() {
        let spec = terelu(1.0, 2.0, 1.5);
        let below = spec.forward(2.0 - 1e-12);
        let at = spec.forward(2.0);
        // limit from below is mu, value at mu is beta * mu
        assert!((at - below - 1.0).abs() < 1e-9, "expected jump of (beta-1)*mu = 1, got {}", at - below);
    }

    #[test]
    fn terelu_monotone_for_positive_beta() {
        let mut rng = crate::numerics::Rng::seed_from(9);
        let spec = terelu(1.3, 0.7, 2.1);
        let mut xs: Vec<f64> = (0..1000).map(|_| -6.0 + 12.0 * unit(&mut rng)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ys: Vec<f64> = xs.iter().map(|&x| spec.forward(x)).collect();
        for w in ys.windows(2) {
            assert!(w[0] <= w[1], "not monotone: {} > {}", w[0], w[1]);
        }
    }

    #[test]
    fn elu_examples() {
        let e = ActivationSpec::Elu(EluParams::default());
        assert!((e.forward(-1.0) - (INV_E - 1.0)).abs() < 1e-15);
        assert_eq!(e.forward(2.0), 2.0);
        assert_eq!(e.dx(2.0), 1.0);
        assert!((e.dx(-1.0) - INV_E).abs() < 1e-15);
    }

    #[test]
    fn relu_examples() {
        let r = ActivationSpec::Relu;
        assert_eq!(r.forward(-3.0), 0.0);
        assert_eq!(r.forward(5.0), 5.0);
        assert_eq!(r.dx(-1.0), 0.0);
        assert_eq!(r.dx(1.0), 1.0);
    }

    #[test]
    fn lrelu_examples() {
        let l = ActivationSpec::Lrelu(LreluParams::new(0.1));
        assert!((l.forward(-2.0) - (-0.2)).abs() < 1e-15);
        assert_eq!(l.dx(-2.0), 0.1);
        assert_eq!(l.dx(2.0), 1.0);
    }

    #[test]
    fn srelu_examples() {
        let s = ActivationSpec::Srelu(SreluParams::new(1.0, 0.5, -1.0, 0.1));
        assert_eq!(s.forward(2.0), 1.5); // 1 + 0.5 * (2 - 1)
        assert_eq!(s.forward(0.3), 0.3);
        assert_eq!(s.forward(-2.0), -1.0 + 0.1 * (-1.0));
        assert_eq!(s.dx(2.0), 0.5);
        assert_eq!(s.dx(0.0), 1.0);
        assert_eq!(s.dx(-2.0), 0.1);
    }

    #[test]
    fn apl_examples() {
        let a = ActivationSpec::Apl(AplParams::new(vec![0.5], vec![1.0]));
        assert_eq!(a.forward(0.5), 0.75); // max(0, 0.5) + 0.5 * max(0, 0.5)
        assert_eq!(a.dx(0.5), 0.5); // 1 - 0.5
        assert_eq!(a.dx(2.0), 1.0);
        assert_eq!(a.dx(-1.0), -0.5);
    }

    #[test]
    fn softplus_examples() {
        let s = ActivationSpec::ParametricSoftplus(SoftplusParams::default());
        assert!((s.forward(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((s.dx(0.0) - 0.5).abs() < 1e-15);
        // stable at large magnitudes
        assert!((s.forward(700.0) - 700.0).abs() < 1e-9);
        assert!(s.forward(-700.0).abs() < 1e-300);
    }

    #[test]
    fn tanh_examples() {
        assert_eq!(ActivationSpec::Tanh.forward(0.0), 0.0);
        assert_eq!(ActivationSpec::Tanh.dx(0.0), 1.0);
    }

    #[test]
    fn terelu_matches_elu_below_threshold() {
        let mut rng = crate::numerics::Rng::seed_from(21);
        for _ in 0..10 {
            let alpha = 0.1 + 2.9 * unit(&mut rng);
            let mu = 0.1 + 2.9 * unit(&mut rng);
            let te = terelu(alpha, mu, 1.0);
            let elu = ActivationSpec::Elu(EluParams::new(alpha));
            for _ in 0..100 {
                let x = -6.0 + (6.0 + mu) * unit(&mut rng);
                if x >= mu {
                    continue;
                }
                assert_eq!(
                    te.forward(x).to_bits(),
                    elu.forward(x).to_bits(),
                    "terelu({alpha},{mu},1) and elu({alpha}) diverge at x = {x}"
                );
            }
        }
    }

    #[test]
    #[should_panic(expected = "alpha must be positive")]
    fn terelu_rejects_zero_alpha() {
        let _ = TereluParams::new(0.0, 1.0, 1.0);
    }

    #[test]
    #[should_panic(expected = "mu must be positive")]
    fn terelu_rejects_negative_mu() {
        let _ = TereluParams::new(1.0, -0.5, 1.0);
    }

    #[test]
    #[should_panic(expected = "thresholds out of order")]
    fn srelu_rejects_crossed_thresholds() {
        let _ = SreluParams::new(-1.0, 0.5, 1.0, 0.1);
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn apl_rejects_ragged_vectors() {
        let _ = AplParams::new(vec![0.5, 0.2], vec![1.0]);
    }

    #[test]
    #[should_panic(expected = "beta must be nonzero")]
    fn softplus_rejects_zero_beta() {
        let _ = SoftplusParams::new(1.0, 0.0);
    }
}
