use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{grad_check_with_floor, Tensor};
use crate::cells::ParamId;
use crate::expr::parse_equation;

const DEEP: &str = "(= (sin (+ (* (pow (sqrt 4) -1) pi) (* -1 (* (sec (+ (pow (pow (csc x) 2) -1) (pow (sin (+ (+ (+ 1 (* -1 1)) x) (* (pow 2 -1) pi))) 2))) x)))) (cos (+ 0 x)))";

fn all_configs() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for cell in CellKind::ALL {
        for use_stack in [false, true] {
            out.push(ModelConfig {
                cell,
                use_stack,
                hidden: 4,
                stack_size: 3,
                ..Default::default()
            });
        }
    }
    out
}

fn bound_ids(model: &Model, eq: &Expr) -> BTreeSet<ParamId> {
    let mut g = Graph::new();
    let mut pass = model.forward::<ChaCha8Rng>(&mut g, eq, None).unwrap();
    pass.session().bound().map(|(id, _)| id).collect()
}

#[test]
fn deep_equations_run_for_every_configuration() {
    let eq = parse_equation(DEEP).unwrap();
    assert_eq!(eq.depth(), 13);
    for cfg in all_configs() {
        let model = Model::new(cfg, 1).unwrap();
        let out = model.output(&eq).unwrap();
        assert!(out.prob > 0.0 && out.prob < 1.0, "{}", cfg.label());
    }
}

#[test]
fn identical_sides_score_a_squared_norm() {
    let model = Model::new(ModelConfig::default(), 2).unwrap();
    let eq = parse_equation("(= (sin (+ x y)) (sin (+ x y)))").unwrap();
    let mut g = Graph::new();
    let pass = model.forward::<ChaCha8Rng>(&mut g, &eq, None).unwrap();
    let z = pass.graph().value(pass.left.z).data();
    let norm: f64 = z.iter().map(|v| v * v).sum();
    assert_eq!(pass.output().score, norm);
    assert!(norm >= 0.0);
}

#[test]
fn zero_side_gives_bias_probability() {
    let mut model = Model::new(ModelConfig::new(CellKind::TreeRnn, 3), 3).unwrap();
    let id = model.bank().id("x.emb").unwrap();
    model.bank_mut().get_mut(id).data_mut().fill(0.0);
    let bias = model.bank().id("eq.bias").unwrap();
    model.bank_mut().get_mut(bias).data_mut()[0] = 0.7;
    let out = model.output(&parse_equation("(= x (cos y))").unwrap()).unwrap();
    assert_eq!(out.score, 0.0);
    assert_eq!(out.prob, 1.0 / (1.0 + (-0.7f64).exp()));
}

#[test]
fn repeated_operators_share_one_parameter_set() {
    let model = Model::new(ModelConfig::default(), 4).unwrap();
    let eq = parse_equation("(= (sec (+ x pi)) (* -1 (sec (sec x))))").unwrap();
    let ids = bound_ids(&model, &eq);
    let sec_w = model.bank().id("sec.i.W").unwrap();
    assert!(ids.contains(&sec_w));
    // One leaf per parameter, however many `sec` nodes there are.
    let mut g = Graph::new();
    let mut pass = model.forward::<ChaCha8Rng>(&mut g, &eq, None).unwrap();
    let sec_leaves: Vec<_> = pass.session().bound().filter(|(id, _)| *id == sec_w).collect();
    assert_eq!(sec_leaves.len(), 1);

    let other = parse_equation("(= (sec (+ pi x)) (* (sec x) -1))").unwrap();
    assert_eq!(bound_ids(&model, &other), ids);
    let bigger = parse_equation("(= (sec (+ (sec (+ x pi)) pi)) (* -1 (sec (* -1 (sec (sec x))))))").unwrap();
    assert_eq!(bound_ids(&model, &bigger), ids);
}

#[test]
fn loss_and_prediction_examples() {
    let half = VerificationOutput { score: 0.0, prob: 0.5 };
    assert!((loss(&half, Label::Correct) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((loss(&half, Label::Incorrect) - std::f64::consts::LN_2).abs() < 1e-15);
    let sure = VerificationOutput { score: 0.0, prob: 1.0 };
    assert!(loss(&sure, Label::Correct) < 1e-10);
    assert_eq!(predict(&VerificationOutput { score: 0.0, prob: 0.7 }), Label::Correct);
    assert_eq!(predict(&VerificationOutput { score: 0.0, prob: 0.3 }), Label::Incorrect);
    assert_eq!(predict(&half), Label::Correct);
}

#[test]
fn score_gradient_is_prob_minus_target_times_scale() {
    let mut model = Model::new(ModelConfig::new(CellKind::MiTreeLstm, 5), 5).unwrap();
    let scale = model.bank().id("eq.scale").unwrap();
    model.bank_mut().get_mut(scale).data_mut()[0] = 1.7;
    let eq = parse_equation("(= (+ x 1) (+ 1 x))").unwrap();
    for label in [Label::Correct, Label::Incorrect] {
        let mut g = Graph::new();
        let pass = model.forward::<ChaCha8Rng>(&mut g, &eq, None).unwrap();
        let (score, logit, p) = (pass.score, pass.logit, pass.output().prob);
        drop(pass);
        let l = g.bce_with_logit(logit, label.target()).unwrap();
        let grads = g.backward(l).unwrap();
        let expect = (p - label.target()) * 1.7;
        assert!((grads.wrt(score)[0] - expect).abs() < 1e-12);
    }
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let eq = parse_equation("(= (* (sin x) (+ y 1)) (cos (+ x -1)))").unwrap();
    assert_eq!(eq.depth(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut configs = all_configs();
    configs.extend(all_configs().into_iter().map(|c| ModelConfig {
        first_order_ablation: true,
        ..c
    }));
    for cfg in configs {
        let cfg = ModelConfig {
            hidden: 3,
            stack_size: 2,
            ..cfg
        };
        let model = Model::new(cfg, rng.gen()).unwrap();
        // Only the parameters this equation touches carry gradient.
        let used: Vec<ParamId> = bound_ids(&model, &eq).into_iter().collect();
        let params: Vec<Tensor> = used.iter().map(|&id| model.bank().get(id).clone()).collect();
        let err = grad_check_with_floor(
            |g, v| {
                let mut leaves: Vec<Option<Var>> = vec![None; model.bank().len()];
                for (k, id) in used.iter().enumerate() {
                    leaves[id.index()] = Some(v[k]);
                }
                let all: Vec<Var> = model
                    .bank()
                    .ids()
                    .map(|id| leaves[id.index()].unwrap_or_else(|| g.constant(model.bank().get(id).clone())))
                    .collect();
                let mut s = Session::with_leaves(g, model.bank(), model.layout(), &all);
                let (_, _, _, logit) = record::<ChaCha8Rng>(&mut s, &eq, 0.0, &mut None)?;
                Ok::<_, ModelError>(s.graph.bce_with_logit(logit, 1.0)?)
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "{}: {err}", cfg.label());
    }
}

#[test]
fn ablation_changes_outputs() {
    let eq = parse_equation("(= (* (sin x) (+ y 1)) (cos (+ x -1)))").unwrap();
    for cell in [CellKind::MTreeLstm, CellKind::MiTreeLstm] {
        let cfg = ModelConfig::new(cell, 6);
        let model = Model::new(cfg, 7).unwrap();
        let twin_cfg = ModelConfig {
            first_order_ablation: true,
            ..cfg
        };
        let twin = Model::from_bank(twin_cfg, model.bank().clone()).unwrap();
        assert_ne!(model.output(&eq).unwrap(), twin.output(&eq).unwrap());
    }
}

#[test]
fn dropout_only_in_training_mode() {
    let cfg = ModelConfig {
        dropout: 0.3,
        ..ModelConfig::new(CellKind::TreeLstm, 8)
    };
    let model = Model::new(cfg, 8).unwrap();
    let eq = parse_equation("(= (+ x (* y z)) (+ (* z y) x))").unwrap();
    assert_eq!(model.output(&eq).unwrap(), model.output(&eq).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (train_loss, _) = model.example_grads(&eq, Label::Correct, Some(&mut rng)).unwrap();
    let eval_loss = loss(&model.output(&eq).unwrap(), Label::Correct);
    assert_ne!(train_loss, eval_loss);
    let (plain, _) = model.example_grads::<ChaCha8Rng>(&eq, Label::Correct, None).unwrap();
    assert!((plain - eval_loss).abs() < 1e-12);
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    for cfg in all_configs() {
        let model = Model::new(cfg, 9).unwrap();
        let meta: BTreeMap<String, String> = [("seed".to_string(), "9".to_string())].into();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model, &meta).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.model.config(), model.config());
        for ((_, n1, t1), (_, n2, t2)) in model.bank().iter().zip(back.model.bank().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            assert!(t1.data().iter().zip(t2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back.model, &back.meta).unwrap();
        assert_eq!(buf, again);
    }
}

#[test]
fn bad_checkpoints_are_rejected() {
    assert!(read_checkpoint("nonsense\n".as_bytes()).is_err());
    let text = format!("{CHECKPOINT_MAGIC}\nconfig colour=red\n");
    let err = read_checkpoint(text.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("colour"), "{err}");
    let text = format!("{CHECKPOINT_MAGIC}\nconfig hidden=3\n");
    assert!(matches!(
        read_checkpoint(text.as_bytes()),
        Err(ModelError::Cell(CellError::MissingParam(_)))
    ));
}

#[test]
fn config_keys_and_differences() {
    let mut cfg = ModelConfig::default();
    assert!(cfg.set("cell", "mi_tree_lstm").unwrap());
    assert!(cfg.set("stack", "true").unwrap());
    assert!(!cfg.set("lr", "0.1").unwrap());
    assert!(cfg.set("hidden", "many").is_err());
    assert_eq!(cfg.label(), "mi_tree_lstm+stack");
    let other = ModelConfig { hidden: 30, ..cfg };
    assert_eq!(cfg.first_difference(&other), Some("hidden"));
    assert_eq!(cfg.first_difference(&cfg), None);
    let keys: Vec<_> = cfg.pairs().into_iter().map(|(k, _)| k).collect();
    assert_eq!(keys, ModelConfig::KEYS);
}
