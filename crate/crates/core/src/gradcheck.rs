//! Central-finite-difference oracle for every gradient in the crate, plus
//! the named check suite behind the `gradcheck` subcommand.
//!
//! The oracle only ever evaluates closures, so it stays independent of the
//! analytic code paths it is used to verify. Relative error is measured as
//! `|a - n| / max(1, |a|, |n|)`, which stays meaningful near zero gradients.

use crate::error::Error;

/// Default step. With 64-bit floats this balances truncation against
/// rounding error for objectives of order one.
pub const DEFAULT_H: f64 = 1e-6;

/// Half-width of the neighborhood excluded around derivative kinks when
/// sampling inputs: a central difference that straddles a kink measures the
/// average of the two slopes, not either derivative.
pub const KINK_EXCLUSION_RADIUS: f64 = 1e-3;

/// Outcome of one gradient comparison.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// Description of the worst component.
    pub worst_index: String,
    /// Analytic value at the worst component.
    pub analytic: f64,
    /// Numeric value at the worst component.
    pub numeric: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central finite differences: component `i` is
/// `(f(x + h e_i) - f(x - h e_i)) / (2h)`.
///
/// Fails with the offending component if `f` evaluates to a non-finite
/// value at any probe point.
pub fn central_diff<F>(mut f: F, point: &[f64], h: f64) -> Result<Vec<f64>, Error>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "step h must be positive, got {h}");
    let mut probe = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        probe[i] = point[i] + h;
        let plus = f(&probe);
        probe[i] = point[i] - h;
        let minus = f(&probe);
        probe[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteEval { component: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Compare an analytic gradient against [`central_diff`] of `f` and report
/// the worst component.
pub fn check_gradient<F>(
    f: F,
    analytic: &[f64],
    point: &[f64],
    h: f64,
    tolerance: f64,
) -> Result<GradReport, Error>
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(
        analytic.len(),
        point.len(),
        "analytic gradient has {} components but the point has {}",
        analytic.len(),
        point.len()
    );
    let numeric = central_diff(f, point, h)?;
    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_index: "none".to_owned(),
        analytic: 0.0,
        numeric: 0.0,
        tolerance,
        passed: true,
    };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
        if rel >= report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = format!("component {i}");
            report.analytic = a;
            report.numeric = n;
        }
    }
    report.passed = report.max_rel_err < tolerance;
    Ok(report)
}

/// Named checks covering every activation, every layer type, and small
/// end-to-end models. Used by the `gradcheck` subcommand and the test
/// suites.
pub mod suite {
    use super::*;
    use crate::activations::{ActivationSpec, TereluParams};
    use crate::layers::{ActivationLayer, BatchNormLayer, DenseLayer, Layer, MaxoutLayer};
    use crate::network::{build_fcnn, build_maxout_fcnn, softmax_xent, Model};
    use crate::numerics::{Matrix, Rng};

    pub struct NamedCheck {
        pub name: String,
        pub report: GradReport,
    }

    pub const ACTIVATION_TOL: f64 = 1e-6;
    pub const LAYER_TOL: f64 = 1e-5;
    pub const MODEL_TOL: f64 = 1e-4;
    pub const MODEL_BN_TOL: f64 = 1e-3;

    fn sample_away_from_kinks(
        spec: &ActivationSpec,
        points: usize,
        rng: &mut Rng,
        lo: f64,
        hi: f64,
    ) -> Vec<f64> {
        let kinks = spec.kink_points();
        let mut out = Vec::with_capacity(points);
        while out.len() < points {
            let x = lo + (hi - lo) * rng.uniform();
            if kinks.iter().all(|k| (x - k).abs() > KINK_EXCLUSION_RADIUS) {
                out.push(x);
            }
        }
        out
    }

    /// Check `dx` against the oracle at `points` samples in `[-6, 6]`,
    /// excluding kink neighborhoods. The samples form one vector objective
    /// `sum_i forward(x_i)`, whose gradient is exactly the per-sample
    /// derivative.
    pub fn activation_dx_check(spec: &ActivationSpec, points: usize, seed: u64) -> GradReport {
        let mut rng = Rng::seed_from(seed);
        let xs = sample_away_from_kinks(spec, points, &mut rng, -6.0, 6.0);
        let analytic: Vec<f64> = xs.iter().map(|&x| spec.dx(x)).collect();
        check_gradient(
            |v| v.iter().map(|&x| spec.forward(x)).sum(),
            &analytic,
            &xs,
            DEFAULT_H,
            ACTIVATION_TOL,
        )
        .expect("activation objective is finite")
    }

    /// Check the TERELU `beta` gradient at fixed inputs by differentiating
    /// over `beta` itself, one component per sampled input.
    pub fn terelu_beta_check(params: &TereluParams, points: usize, seed: u64) -> GradReport {
        let spec = ActivationSpec::Terelu(params.clone());
        let mut rng = Rng::seed_from(seed);
        let xs = sample_away_from_kinks(&spec, points, &mut rng, -6.0, 6.0);
        let analytic: Vec<f64> = xs.iter().map(|&x| params.dbeta(x)).collect();
        let betas = vec![params.beta; xs.len()];
        check_gradient(
            |v| {
                xs.iter()
                    .zip(v)
                    .map(|(&x, &b)| {
                        ActivationSpec::Terelu(TereluParams::new(params.alpha, params.mu, b))
                            .forward(x)
                    })
                    .sum()
            },
            &analytic,
            &betas,
            DEFAULT_H,
            ACTIVATION_TOL,
        )
        .expect("beta objective is finite")
    }

    pub fn activation_checks(points: usize, seed: u64) -> Vec<NamedCheck> {
        let mut out = Vec::new();
        for spec in ActivationSpec::all_defaults() {
            out.push(NamedCheck {
                name: format!("activation {} dx", spec.name()),
                report: activation_dx_check(&spec, points, seed),
            });
        }
        out.push(NamedCheck {
            name: "activation terelu dbeta".to_owned(),
            report: terelu_beta_check(&TereluParams::default(), points, seed),
        });
        out
    }

    /// Per-branch breakdown for TERELU, printed by `gradcheck --kind terelu`.
    pub fn terelu_branch_checks(points: usize, seed: u64) -> Vec<NamedCheck> {
        let params = TereluParams::default();
        let spec = ActivationSpec::Terelu(params.clone());
        let d = KINK_EXCLUSION_RADIUS;
        let regions = [
            ("terelu dx, x <= 0", -6.0, -d),
            ("terelu dx, 0 < x < mu", d, params.mu - d),
            ("terelu dx, x >= mu", params.mu + d, 6.0),
        ];
        let mut out = Vec::new();
        for (name, lo, hi) in regions {
            let mut rng = Rng::seed_from(seed);
            let xs: Vec<f64> = (0..points).map(|_| lo + (hi - lo) * rng.uniform()).collect();
            let analytic: Vec<f64> = xs.iter().map(|&x| spec.dx(x)).collect();
            let report = check_gradient(
                |v| v.iter().map(|&x| spec.forward(x)).sum(),
                &analytic,
                &xs,
                DEFAULT_H,
                ACTIVATION_TOL,
            )
            .expect("activation objective is finite");
            out.push(NamedCheck { name: name.to_owned(), report });
        }
        out.push(NamedCheck {
            name: "terelu dbeta".to_owned(),
            report: terelu_beta_check(&params, points, seed),
        });
        out
    }

    fn probe_sum(layer: &Layer, x: &Matrix, probe: &Matrix) -> f64 {
        let mut work = layer.clone();
        let out = work.forward(x, true);
        out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    }

    /// Gradient of `sum(probe . forward(x))` with respect to the input.
    pub fn layer_input_check(layer: &Layer, x: &Matrix, probe: &Matrix, tol: f64) -> GradReport {
        let mut work = layer.clone();
        let out = work.forward(x, true);
        assert_eq!(out.shape(), probe.shape(), "probe must match the layer output shape");
        let analytic = work.backward(probe).data().to_vec();
        let (rows, cols) = x.shape();
        check_gradient(
            |v| probe_sum(layer, &Matrix::from_vec(rows, cols, v.to_vec()), probe),
            &analytic,
            x.data(),
            DEFAULT_H,
            tol,
        )
        .expect("layer objective is finite")
    }

    /// Gradient of the same objective with respect to one parameter block.
    pub fn layer_param_check(
        layer: &Layer,
        x: &Matrix,
        probe: &Matrix,
        param_idx: usize,
        tol: f64,
    ) -> GradReport {
        let mut work = layer.clone();
        let _ = work.forward(x, true);
        let _ = work.backward(probe);
        let analytic = work.params()[param_idx].grad.to_vec();
        let point = {
            let mut c = layer.clone();
            let v = c.params()[param_idx].value.to_vec();
            v
        };
        check_gradient(
            |v| {
                let mut l = layer.clone();
                l.params()[param_idx].value.copy_from_slice(v);
                probe_sum(&l, x, probe)
            },
            &analytic,
            &point,
            DEFAULT_H,
            tol,
        )
        .expect("layer objective is finite")
    }

    fn checks_for_layer(name: &str, layer: Layer, x: Matrix, probe: Matrix) -> Vec<NamedCheck> {
        let mut out = vec![NamedCheck {
            name: format!("{name} input"),
            report: layer_input_check(&layer, &x, &probe, LAYER_TOL),
        }];
        let param_names: Vec<String> = {
            let mut l = layer.clone();
            l.params().iter().enumerate().map(|(i, p)| format!("{} #{i}", p.name)).collect()
        };
        for (i, pname) in param_names.iter().enumerate() {
            out.push(NamedCheck {
                name: format!("{name} param {pname}"),
                report: layer_param_check(&layer, &x, &probe, i, LAYER_TOL),
            });
        }
        out
    }

    /// Inputs resampled until no entry sits next to a derivative kink.
    fn input_away_from_kinks(spec: &ActivationSpec, rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        let xs = sample_away_from_kinks(spec, rows * cols, rng, -3.0, 3.0);
        Matrix::from_vec(rows, cols, xs)
    }

    pub fn layer_checks(seed: u64) -> Vec<NamedCheck> {
        let mut rng = Rng::seed_from(seed);
        let mut out = Vec::new();

        let dense = Layer::Dense(DenseLayer::init(3, 2, 0.7, &mut rng));
        let x = rng.normal_matrix(4, 3, 1.0);
        let probe = rng.normal_matrix(4, 2, 1.0);
        out.extend(checks_for_layer("dense", dense, x, probe));

        let bn = Layer::BatchNorm(BatchNormLayer::new(3));
        let x = rng.normal_matrix(4, 3, 1.5);
        let probe = rng.normal_matrix(4, 3, 1.0);
        out.extend(checks_for_layer("batchnorm", bn, x, probe));

        for spec in ActivationSpec::all_defaults() {
            let name = format!("activation[{}]", spec.name());
            let x = input_away_from_kinks(&spec, 4, 4, &mut rng);
            let probe = rng.normal_matrix(4, 4, 1.0);
            out.extend(checks_for_layer(&name, Layer::Activation(ActivationLayer::new(spec)), x, probe));
        }

        let maxout = Layer::Maxout(MaxoutLayer::init(4, 3, 3, 0.7, &mut rng));
        let x = rng.normal_matrix(4, 4, 1.0);
        let probe = rng.normal_matrix(4, 3, 1.0);
        out.extend(checks_for_layer("maxout", maxout, x, probe));

        out
    }

    /// End-to-end check of every parameter gradient against the oracle on
    /// the batch loss of a small 2-input, 3-hidden, 2-class model.
    pub fn model_loss_check(model: &Model, x: &Matrix, labels: &[usize], tol: f64) -> GradReport {
        let mut work = model.clone();
        let logits = work.forward(x, true);
        let (_, grad) = softmax_xent(&logits, labels);
        work.backward(&grad);
        let analytic = work.flat_grads();
        let point = {
            let mut c = model.clone();
            c.flat_params()
        };
        check_gradient(
            |v| {
                let mut m = model.clone();
                m.set_flat_params(v);
                let logits = m.forward(x, true);
                softmax_xent(&logits, labels).0
            },
            &analytic,
            &point,
            DEFAULT_H,
            tol,
        )
        .expect("model loss is finite")
    }

    pub fn model_checks(seed: u64) -> Vec<NamedCheck> {
        let mut rng = Rng::seed_from(seed);
        let mut out = Vec::new();
        for spec in ActivationSpec::all_defaults() {
            let name = spec.name();
            let model = build_fcnn(1, 3, 2, 2, spec.clone(), false, seed);
            let x = rng.normal_matrix(4, 2, 1.5);
            let labels = [0usize, 1, 1, 0];
            out.push(NamedCheck {
                name: format!("model[{name}] bn=off"),
                report: model_loss_check(&model, &x, &labels, MODEL_TOL),
            });

            let model = build_fcnn(1, 3, 2, 2, spec, true, seed.wrapping_add(1));
            let x = rng.normal_matrix(8, 2, 1.5);
            let labels = [0usize, 1, 1, 0, 1, 0, 0, 1];
            out.push(NamedCheck {
                name: format!("model[{name}] bn=on"),
                report: model_loss_check(&model, &x, &labels, MODEL_BN_TOL),
            });
        }
        let model = build_maxout_fcnn(1, 3, 2, 2, 2, false, seed.wrapping_add(2));
        let x = rng.normal_matrix(4, 2, 1.5);
        out.push(NamedCheck {
            name: "model[maxout] bn=off".to_owned(),
            report: model_loss_check(&model, &x, &[0, 1, 1, 0], MODEL_TOL),
        });
        out
    }

    /// Everything: activations (including the beta path), all layer types,
    /// and the end-to-end models.
    pub fn full_suite(points: usize, seed: u64) -> Vec<NamedCheck> {
        let mut out = activation_checks(points, seed);
        out.extend(layer_checks(seed.wrapping_add(100)));
        out.extend(model_checks(seed.wrapping_add(200)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_diff_is_exact_on_quadratics() {
        let grad = central_diff(|v| v[0] * v[0], &[3.0], 1e-6).unwrap();
        assert!((grad[0] - 6.0).abs() < 1e-6);

        // degree <= 2 polynomials in several variables
        let f = |v: &[f64]| 2.0 * v[0] * v[0] - 3.0 * v[0] * v[1] + v[1] + 5.0;
        let point = [1.25, -0.75];
        let grad = central_diff(f, &point, 1e-4).unwrap();
        let expect = [2.0 * 2.0 * point[0] - 3.0 * point[1], -3.0 * point[0] + 1.0];
        for (g, e) in grad.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-8, "got {g}, expected {e}");
        }
    }

    #[test]
    fn central_diff_of_constant_is_zero() {
        let grad = central_diff(|_| 4.2, &[1.0, 2.0, 3.0], 1e-6).unwrap();
        assert_eq!(grad, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn central_diff_exponential_at_zero() {
        let grad = central_diff(|v| v[0].exp(), &[0.0], 1e-6).unwrap();
        assert!((grad[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn central_diff_reports_non_finite_component() {
        let err = central_diff(|v| (1.0 / v[1]).ln(), &[1.0, 0.0], 1e-6).unwrap_err();
        assert!(err.to_string().contains("component 1"), "unexpected error: {err}");
    }

    #[test]
    fn check_gradient_passes_on_exact_match() {
        let report = check_gradient(|v| 3.0 * v[0], &[3.0], &[1.0], 1e-6, 1e-6).unwrap();
        assert!(report.passed);
        assert!(report.max_rel_err < 1e-10);
    }

    #[test]
    fn check_gradient_flags_injected_error() {
        let tol = 1e-6;
        // true gradient is [3, 2]; poison the second component
        let analytic = [3.0, 2.0 * (1.0 + 2.0 * tol)];
        let report = check_gradient(
            |v| 3.0 * v[0] + 2.0 * v[1],
            &analytic,
            &[0.5, 0.5],
            1e-6,
            tol,
        )
        .unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst_index, "component 1");
    }

    #[test]
    fn check_gradient_flags_sign_flip() {
        // a deliberately wrong (sign-flipped) analytic derivative must fail
        let spec = crate::activations::ActivationSpec::terelu_default();
        let x = [2.0];
        let wrong = [-spec.dx(2.0)];
        let report = check_gradient(|v| spec.forward(v[0]), &wrong, &x, 1e-6, 1e-6).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn terelu_dx_at_two_passes_default_tolerance() {
        let spec = crate::activations::ActivationSpec::terelu_default();
        let analytic = [spec.dx(2.0)];
        let report = check_gradient(|v| spec.forward(v[0]), &analytic, &[2.0], 1e-6, 1e-6).unwrap();
        assert!(report.passed, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn suite_activation_checks_pass() {
        for check in suite::activation_checks(200, 1) {
            assert!(
                check.report.passed,
                "{} failed: rel err {} (analytic {}, numeric {})",
                check.name, check.report.max_rel_err, check.report.analytic, check.report.numeric
            );
        }
    }

    #[test]
    fn suite_layer_checks_pass() {
        for check in suite::layer_checks(2) {
            assert!(
                check.report.passed,
                "{} failed: rel err {} (analytic {}, numeric {})",
                check.name, check.report.max_rel_err, check.report.analytic, check.report.numeric
            );
        }
    }

    #[test]
    fn suite_model_checks_pass() {
        for check in suite::model_checks(3) {
            assert!(
                check.report.passed,
                "{} failed: rel err {} (analytic {}, numeric {})",
                check.name, check.report.max_rel_err, check.report.analytic, check.report.numeric
            );
        }
    }
}
