use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cells::CellKind;
use crate::expr::parse_equation;
use crate::model::ModelConfig;

use Label::{Correct as C, Incorrect as I};

fn eq(label: Label, depth: usize) -> LabeledEquation {
    LabeledEquation {
        expr: parse_equation("(= x x)").unwrap(),
        label,
        depth,
    }
}

#[test]
fn confusion_example() {
    let m = verification_metrics(&[C, C, C, I, I], &[C, C, I, C, I], &[1; 5]).unwrap();
    let o = m.overall;
    assert_eq!((o.tp, o.fp, o.fn_, o.tn), (2, 1, 1, 1));
    assert_eq!(o.accuracy(), 0.6);
    assert_eq!(o.precision(), Some(2.0 / 3.0));
    assert_eq!(o.recall(), Some(2.0 / 3.0));
}

#[test]
fn perfect_predictions_and_undefined_ratios() {
    let labels = [C, I, I, C];
    let m = verification_metrics(&labels, &labels, &[1, 2, 2, 3]).unwrap();
    let r = m.records("test");
    assert_eq!(r.len(), 4);
    assert!(r.iter().all(|r| r.acc == 1.0));
    // Depth 2 has no Correct predictions or labels.
    assert_eq!((r[1].depth, r[1].prec, r[1].rcl), (Some(2), None, None));
    assert_eq!(
        (r[3].depth, r[3].prec, r[3].rcl, r[3].n),
        (None, Some(1.0), Some(1.0), 4)
    );
    assert_eq!(r[..3].iter().map(|r| r.n).sum::<usize>(), 4);
}

#[test]
fn length_mismatch_and_empty() {
    assert!(matches!(
        verification_metrics(&[C], &[C, I], &[1, 1]),
        Err(EvalError::LengthMismatch { .. })
    ));
    assert!(matches!(verification_metrics(&[], &[], &[]), Err(EvalError::Empty)));
}

#[test]
fn majority_baseline_matches_class_fraction() {
    let train = vec![eq(C, 1), eq(C, 2), eq(I, 2)];
    let data = vec![eq(C, 8), eq(I, 8), eq(I, 9), eq(C, 9), eq(C, 9)];
    let m = majority_baseline(&train, &data).unwrap();
    assert_eq!(m.overall.accuracy(), 0.6);
    assert_eq!(m.by_depth[&8].accuracy(), 0.5);
    assert_eq!(m, majority_baseline(&train, &data).unwrap());
    let balanced = vec![eq(C, 1), eq(I, 1)];
    assert_eq!(majority_baseline(&train, &balanced).unwrap().overall.accuracy(), 0.5);
    assert_eq!(majority_label(&[eq(I, 1), eq(I, 1), eq(C, 1)]), I);
}

#[test]
fn ranking_ties_follow_candidate_index() {
    let r = CompletionRecord::from_scores(0, 1, &[0.2, 0.9, 0.2, 0.9, 0.5], vec![2]);
    assert_eq!(r.ranked, vec![1, 3, 4, 0, 2]);
    assert!(!r.hit(4) && r.hit(5));
}

#[test]
fn topk_examples() {
    let scores = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
    let first: Vec<_> = (0..10)
        .map(|i| CompletionRecord::from_scores(i, 1, &scores, vec![0]))
        .collect();
    assert_eq!(topk_accuracy(&first, 1).unwrap(), 1.0);
    assert_eq!(topk_accuracy(&first, 5).unwrap(), 1.0);
    let third: Vec<_> = (0..10)
        .map(|i| CompletionRecord::from_scores(i, 1, &scores, vec![2]))
        .collect();
    assert_eq!(topk_accuracy(&third, 1).unwrap(), 0.0);
    assert_eq!(topk_accuracy(&third, 5).unwrap(), 1.0);
    assert!(matches!(topk_accuracy(&third, 0), Err(EvalError::ZeroK)));
}

#[test]
fn random_scores_give_top5_near_one_tenth() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let records: Vec<CompletionRecord> = (0..20_000)
        .map(|i| {
            let scores: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
            CompletionRecord::from_scores(i, 1, &scores, vec![rng.gen_range(0..50)])
        })
        .collect();
    let top5 = topk_accuracy(&records, 5).unwrap();
    // Binomial standard error is about 0.002.
    assert!((top5 - 0.1).abs() < 0.01, "{top5}");
    let top1 = topk_accuracy(&records, 1).unwrap();
    assert!((top1 - 0.02).abs() < 0.005, "{top1}");
}

#[test]
fn topk_report_is_monotone_in_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let records: Vec<CompletionRecord> = (0..300)
        .map(|i| {
            let scores: Vec<f64> = (0..12).map(|_| rng.gen()).collect();
            CompletionRecord::from_scores(i, 1 + i % 3, &scores, vec![0, 5])
        })
        .collect();
    let rows = topk_report(&records, &[1, 5]).unwrap();
    assert_eq!(rows.len(), 8);
    for pair in rows.chunks(2) {
        assert_eq!((pair[0].k, pair[1].k), (1, 5));
        assert_eq!(pair[0].depth, pair[1].depth);
        assert!(pair[0].topk <= pair[1].topk);
    }
    assert_eq!(rows[6].n, 300);
    assert_eq!(rows[..6].iter().step_by(2).map(|r| r.n).sum::<usize>(), 300);
}

#[test]
fn records_serialize_with_nulls() {
    let m = verification_metrics(&[I, I], &[I, I], &[3, 3]).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &m.records("valid")).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        r#"{"split":"valid","depth":3,"acc":1.0,"prec":null,"rcl":null,"n":2}"#
    );
    let mut csv = Vec::new();
    write_csv(&mut csv, &m.records("valid")).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "split,depth,acc,prec,rcl,n");
    assert_eq!(csv.lines().nth(2).unwrap(), "valid,,1.0,,,2");
    let mut buf = Vec::new();
    write_jsonl(
        &mut buf,
        &[TopKRecord {
            depth: None,
            k: 5,
            topk: 0.25,
            n: 4,
        }],
    )
    .unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "{\"depth\":null,\"K\":5,\"topk\":0.25,\"n\":4}\n"
    );
}

fn run(cell: CellKind, first: bool, seed: u64, acc: f64, epochs: usize) -> AblationRun {
    AblationRun {
        config: ModelConfig {
            first_order_ablation: first,
            ..ModelConfig::new(cell, 25)
        },
        seed,
        data: "d1".into(),
        test_acc: acc,
        epochs_to_best: epochs,
    }
}

#[test]
fn ablation_table_shape_and_pairing() {
    let runs = vec![
        run(CellKind::MTreeLstm, false, 1, 0.9, 10),
        run(CellKind::MTreeLstm, true, 1, 0.8, 12),
        run(CellKind::MTreeLstm, false, 2, 0.7, 20),
        run(CellKind::MTreeLstm, true, 2, 0.8, 14),
        run(CellKind::MiTreeLstm, false, 1, 0.6, 5),
        run(CellKind::MiTreeLstm, true, 1, 0.6, 5),
        run(CellKind::MiTreeLstm, false, 2, 0.6, 5),
        run(CellKind::MiTreeLstm, true, 2, 0.6, 5),
    ];
    let table = ablation_report(&runs).unwrap();
    assert_eq!(table.rows.len(), 2);
    let m = &table.rows[0];
    assert_eq!(m.model, "mtree_lstm");
    let second = m.second_acc.unwrap();
    assert!((second.mean - 0.8).abs() < 1e-12 && (second.std - 0.1).abs() < 1e-12);
    assert_eq!(m.first_acc.unwrap().std, 0.0);
    assert_eq!(m.second_epochs.unwrap().mean, 15.0);
    assert_eq!(table.rows[1].gap(), Some(0.0));
    let text = table.to_string();
    assert!(text.contains("2nd order") && text.contains("1st order"));
    assert!(text.contains("80.00 ± 10.00"), "{text}");

    let mut missing = runs.clone();
    missing.pop();
    assert!(matches!(ablation_report(&missing), Err(EvalError::Unpaired(_))));
    let mut other = runs.clone();
    other[3].config.hidden = 30;
    let err = ablation_report(&other).unwrap_err();
    assert!(err.to_string().contains("hidden"), "{err}");
    let mut data = runs;
    data[1].data = "d2".into();
    assert!(matches!(ablation_report(&data), Err(EvalError::Unpaired(_))));
}

#[test]
fn evaluation_of_a_model_is_deterministic() {
    let model = Model::new(ModelConfig::new(CellKind::TreeLstm, 5), 3).unwrap();
    let data: Vec<LabeledEquation> = ["(= (+ x 0) x)", "(= (sin x) (cos x))", "(= (* 2 y) (+ y y))"]
        .iter()
        .zip([C, I, C])
        .map(|(s, l)| LabeledEquation::new(parse_equation(s).unwrap(), l))
        .collect();
    let a = evaluate(&model, &data).unwrap();
    assert_eq!(a, evaluate(&model, &data).unwrap());
    assert_eq!(a.overall.n(), 3);
    let preds = predictions(&model, &data).unwrap();
    let direct: Vec<Label> = data.iter().map(|e| predict(&model.output(&e.expr).unwrap())).collect();
    assert_eq!(preds, direct);
}
