//! Finite-difference certification of every differentiable operation:
//! tape primitives, layers, the encoder, both regressors and both losses.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{generate, GenConfig};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::Result;
use crate::kernel::gradcheck::{check_inputs, check_params};
use crate::kernel::{
    Conv1d, GradCheckConfig, GradCheckReport, Linear, Matrix, ParamStore, Rng, SelfAttention, Tape,
    Var,
};
use crate::objectives::{listwise_loss, pairwise_loss_at, LossValue, ScoredList};
use crate::regressor::{Regressor, RegressorSpec};

/// Tolerance for linear maps, softmax and the softmax-based loss.
pub const LINEAR_TOL: f64 = 1e-6;
/// Tolerance for nonlinear compositions.
pub const COMPOSITE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub name: String,
    pub report: GradCheckReport,
}

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect(),
    )
    .expect("sizes agree")
}

/// Relative finite-difference check of a scalar loss of a score vector.
fn check_loss(scores: &[f64], loss: impl Fn(&[f64]) -> LossValue, tol: f64) -> GradCheckReport {
    let step = crate::kernel::gradcheck::DEFAULT_STEP;
    let analytic = loss(scores).grad;
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut x = scores.to_vec();
    for k in 0..x.len() {
        let x0 = x[k];
        x[k] = x0 + step;
        let plus = loss(&x).value;
        x[k] = x0 - step;
        let minus = loss(&x).value;
        x[k] = x0;
        let numeric = (plus - minus) / (2.0 * step);
        let abs = (analytic[k] - numeric).abs();
        worst_abs = worst_abs.max(abs);
        worst = worst.max(abs / 1f64.max(analytic[k].abs()).max(numeric.abs()));
    }
    GradCheckReport {
        max_rel_error: worst,
        max_abs_error: worst_abs,
        coords_checked: x.len(),
        tol,
        passed: worst < tol,
    }
}

/// Runs every check with inputs drawn from `seed`.
pub fn gradient_certification(seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::new();
    let mut push = |name: &str, report: GradCheckReport| {
        out.push(OpCheck {
            name: name.to_string(),
            report,
        })
    };
    let lin = GradCheckConfig::with_tol(LINEAR_TOL);
    let comp = GradCheckConfig::with_tol(COMPOSITE_TOL);

    let a = random(3, 4, &mut rng);
    let b = random(4, 2, &mut rng);
    let c = random(3, 4, &mut rng);
    let bias = random(1, 4, &mut rng);
    let seq = random(5, 3, &mut rng);

    push(
        "matmul",
        check_inputs(&[a.clone(), b.clone()], |t, v| t.matmul(v[0], v[1]), lin)?,
    );
    push(
        "matmul_t",
        check_inputs(&[a.clone(), c.clone()], |t, v| t.matmul_t(v[0], v[1]), lin)?,
    );
    push(
        "add_bias",
        check_inputs(
            &[a.clone(), bias.clone()],
            |t, v| t.add_bias(v[0], v[1]),
            lin,
        )?,
    );
    push(
        "add",
        check_inputs(&[a.clone(), c.clone()], |t, v| t.add(v[0], v[1]), lin)?,
    );
    push(
        "mul",
        check_inputs(&[a.clone(), c.clone()], |t, v| t.mul(v[0], v[1]), lin)?,
    );
    push(
        "scale",
        check_inputs(
            core::slice::from_ref(&a),
            |t, v| Ok(t.scale(v[0], -1.7)),
            lin,
        )?,
    );
    push(
        "concat_cols",
        check_inputs(
            &[a.clone(), random(3, 2, &mut rng)],
            |t, v| t.concat_cols(&[v[0], v[1]]),
            lin,
        )?,
    );
    push(
        "concat_rows",
        check_inputs(
            &[a.clone(), c.clone()],
            |t, v| t.concat_rows(&[v[0], v[1]]),
            lin,
        )?,
    );
    push(
        "mean_rows",
        check_inputs(core::slice::from_ref(&a), |t, v| t.mean_rows(v[0]), lin)?,
    );
    push(
        "max_rows",
        check_inputs(core::slice::from_ref(&a), |t, v| t.max_rows(v[0]), lin)?,
    );
    push(
        "im2col",
        check_inputs(core::slice::from_ref(&seq), |t, v| t.im2col(v[0], 3), lin)?,
    );
    push(
        "row_sums",
        check_inputs(core::slice::from_ref(&a), |t, v| Ok(t.row_sums(v[0])), lin)?,
    );
    push(
        "softmax_rows",
        check_inputs(
            core::slice::from_ref(&a),
            |t, v| Ok(t.softmax_rows(v[0])),
            lin,
        )?,
    );
    push(
        "sigmoid",
        check_inputs(core::slice::from_ref(&a), |t, v| Ok(t.sigmoid(v[0])), comp)?,
    );
    push(
        "tanh",
        check_inputs(core::slice::from_ref(&a), |t, v| Ok(t.tanh(v[0])), comp)?,
    );
    let p_left = Matrix::from_vec(2, 7, (0..14).map(|_| rng.uniform_range(0.1, 0.9)).collect())?;
    push(
        "routing",
        check_inputs(&[p_left], |t, v| t.routing(v[0], 4), comp)?,
    );

    let mut store = ParamStore::new();
    let linear = Linear::new(&mut store, "linear", 3, 4, &mut rng);
    let x = tape_input(&seq);
    push(
        "linear",
        check_params(
            &mut store,
            |t, s| {
                let input = x(t);
                linear.forward(t, s, input)
            },
            lin,
        )?,
    );

    let mut store = ParamStore::new();
    let attn = SelfAttention::new(&mut store, "attn", 3, 3, &mut rng);
    push(
        "self_attention",
        check_params(
            &mut store,
            |t, s| {
                let input = x(t);
                Ok(attn.forward(t, s, input)?.output)
            },
            comp,
        )?,
    );
    push(
        "self_attention_input",
        check_inputs(
            core::slice::from_ref(&seq),
            |t, v| Ok(attn.forward(t, &store, v[0])?.output),
            comp,
        )?,
    );

    let mut store = ParamStore::new();
    let conv = Conv1d::new(&mut store, "conv", 3, 2, 3, &mut rng)?;
    push(
        "conv1d",
        check_params(
            &mut store,
            |t, s| {
                let input = x(t);
                conv.forward(t, s, input)
            },
            lin,
        )?,
    );

    // Full encoder and both regressors on a small generated product.
    let data = generate(&GenConfig {
        n_products: 1,
        reviews_min: 3,
        reviews_max: 3,
        product_tokens_min: 3,
        product_tokens_max: 3,
        review_tokens_min: 2,
        review_tokens_max: 3,
        regions: 2,
        d_tok: 4,
        d_img: 3,
        seed,
        ..GenConfig::default()
    })?;
    let product = &data.products[0];
    for lan in [true, false] {
        let mut store = ParamStore::new();
        let cfg = EncoderConfig {
            listwise_attention: lan,
            ..EncoderConfig::new(4, 3, 3)
        };
        let enc = Encoder::new(&mut store, cfg, &mut rng)?;
        let name = if lan {
            "encoder"
        } else {
            "encoder_without_list_attention"
        };
        push(
            name,
            check_params(&mut store, |t, s| enc.encode(t, s, product), comp)?,
        );
    }

    let z = random(4, 6, &mut rng);
    let zf = tape_input(&z);
    for (name, spec) in [
        ("soft_tree", RegressorSpec::Tree { depth: 3, trees: 1 }),
        (
            "soft_tree_ensemble",
            RegressorSpec::Tree { depth: 4, trees: 2 },
        ),
        ("fcnn", RegressorSpec::Fcnn { hidden: vec![5, 3] }),
    ] {
        let mut store = ParamStore::new();
        let reg = Regressor::new(&mut store, &spec, 6, &mut rng)?;
        push(
            name,
            check_params(
                &mut store,
                |t, s| {
                    let input = zf(t);
                    reg.forward(t, s, input)
                },
                comp,
            )?,
        );
        push(
            &alloc::format!("{name}_input"),
            check_inputs(
                core::slice::from_ref(&z),
                |t, v| reg.forward(t, &store, v[0]),
                comp,
            )?,
        );
    }

    let scores: Vec<f64> = (0..6).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
    let labels = vec![0u8, 4, 2, 1, 3, 2];
    push(
        "listwise_loss",
        check_loss(
            &scores,
            |s| listwise_loss(&ScoredList::new(s.to_vec(), labels.clone()).expect("lengths agree")),
            LINEAR_TOL,
        ),
    );
    // Scores chosen so the hinge is strictly active, away from its kink.
    let hinge_scores = [0.5, 0.2, -0.3, 1.0];
    let hinge_labels = vec![3u8, 0, 1, 2];
    push(
        "pairwise_loss",
        check_loss(
            &hinge_scores,
            |s| {
                pairwise_loss_at(
                    &ScoredList::new(s.to_vec(), hinge_labels.clone()).expect("lengths agree"),
                    0,
                    1,
                )
            },
            COMPOSITE_TOL,
        ),
    );
    Ok(out)
}

/// Records a constant input on whatever tape the check builds.
fn tape_input(m: &Matrix) -> impl Fn(&mut Tape) -> Var + '_ {
    move |t: &mut Tape| t.input(m.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_operation_passes() {
        let checks = gradient_certification(11).unwrap();
        assert!(checks.len() > 20);
        for c in &checks {
            assert!(c.report.passed, "{}: {:?}", c.name, c.report);
            assert!(c.report.coords_checked > 0, "{}", c.name);
        }
    }
}
