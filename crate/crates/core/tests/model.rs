mod common;

use common::*;
use ecm_core::corpus::{DialogueExample, EmotionCategory, EOS_ID, GO_ID};
use ecm_core::model::{AlphaLoss, EcmModel};
use ecm_core::numerics::{grad_check, GradCheckOptions, NumericsError, Tape, Tensor};
use ecm_core::EcmError;

fn losses(model: &EcmModel<f64>, batch: &[&DialogueExample]) -> (f64, f64, f64, f64, usize) {
    let mut tape = Tape::new();
    let b = model.params().bind(&mut tape);
    let out = model.forward_loss(&mut tape, &b, batch).unwrap();
    (tape.value(out.loss).data()[0], out.ce_sum, out.alpha_sum, out.mem_sum, out.tokens)
}

fn set(model: &mut EcmModel<f64>, name: &str, value: f64) {
    let t = model.params_mut().get_mut(name).unwrap();
    *t = Tensor::filled(t.shape(), value);
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let model = tiny_model::<f64>((true, true, true), 3);
    let ex = toy_examples(model.vocab());
    let batch = [&ex[0], &ex[2]];
    let report = grad_check(
        model.params().tensors(),
        |tape, vars| {
            let b = model.params().bound_from(vars)?;
            let out = model.forward_loss(tape, &b, &batch).map_err(|e| NumericsError::Contract(e.to_string()))?;
            Ok(out.loss)
        },
        GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

#[test]
fn uniform_output_gives_log_vocab_cross_entropy() {
    let mut model = tiny_model::<f64>((false, false, false), 1);
    set(&mut model, "out.w", 0.0);
    let ex = toy_examples(model.vocab());
    let (_, ce, alpha, _, tokens) = losses(&model, &[&ex[1]]);
    assert_eq!(tokens, ex[1].response.len() + 1);
    let expect = tokens as f64 * (model.vocab().len() as f64).ln();
    assert!((ce - expect).abs() < 1e-9, "{ce} vs {expect}");
    assert_eq!(alpha, 0.0);
}

#[test]
fn loss_terms_are_toggled_by_flags() {
    let model = tiny_model::<f64>((true, true, true), 2);
    let ex = toy_examples(model.vocab());
    let (loss, ce, alpha, mem, tokens) = losses(&model, &[&ex[0], &ex[1]]);
    assert!(alpha > 0.0 && mem > 0.0);
    assert!((loss - (ce + alpha + mem) / tokens as f64).abs() < 1e-12);

    let mut cfg = model.config().clone();
    cfg.memory_loss = false;
    let (off, _) = EcmModel::from_pretrained(&model, cfg, 0).unwrap();
    let (loss2, ..) = losses(&off, &[&ex[0], &ex[1]]);
    assert!((loss2 - (ce + alpha) / tokens as f64).abs() < 1e-12);

    let mut cfg = model.config().clone();
    cfg.alpha_loss = AlphaLoss::EmotionOnly;
    let (lit, _) = EcmModel::from_pretrained(&model, cfg, 0).unwrap();
    let (_, _, alpha_lit, ..) = losses(&lit, &[&ex[0], &ex[1]]);
    assert!(alpha_lit < alpha && alpha_lit > 0.0);
}

#[test]
fn write_gate_of_one_half_halves_memory() {
    let mut model = tiny_model::<f64>((false, true, false), 4);
    set(&mut model, "imem.w_write", 0.0);
    set(&mut model, "imem.bank", 1.0);
    let post = model.vocab().encode(&toks("my cat is here"));
    let enc = model.encode_post(&post).unwrap();
    let st = model.initial_state(&enc, &[Some(EmotionCategory::Sad)]).unwrap();
    assert!(st.memory.as_ref().unwrap().data().iter().all(|&v| v == 1.0));
    let next = model.decode_step(&enc, &st, &[GO_ID]).unwrap();
    assert!(next.state.memory.unwrap().data().iter().all(|&v| v == 0.5));
}

#[test]
fn external_memory_extremes_route_all_mass() {
    let mut model = tiny_model::<f64>((false, false, true), 5);
    let h = model.config().hidden;
    let g = model.config().generic_vocab;
    let states = Tensor::filled(&[2, h], 1.0);
    for (vu, generic_zero) in [(-1000.0, false), (1000.0, true)] {
        set(&mut model, "out.v_u", vu);
        let (p, alpha) = model.output_distribution(&states).unwrap();
        for r in 0..2 {
            let row = p.row(r);
            let (gen, emo) = row.split_at(g);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if generic_zero {
                assert!(gen.iter().all(|&v| v == 0.0) && alpha[r] == 1.0);
            } else {
                assert!(emo.iter().all(|&v| v == 0.0) && alpha[r] == 0.0);
            }
        }
    }
}

#[test]
fn single_token_post_attends_fully() {
    let model = tiny_model::<f64>((true, true, true), 6);
    let enc = model.encode_post(&[5]).unwrap();
    assert_eq!(enc.len(), 1);
    let st = model.initial_state(&enc, &[Some(EmotionCategory::Happy)]).unwrap();
    let out = model.decode_step(&enc, &st, &[GO_ID]).unwrap();
    assert_eq!(out.attention.data(), [1.0]);
}

#[test]
fn zero_model_encoder_is_a_fixed_point() {
    let mut model = tiny_model::<f64>((false, false, false), 7);
    let names: Vec<String> = model.params().names().to_vec();
    for n in names {
        set(&mut model, &n, 0.0);
    }
    let mut tape = Tape::new();
    let b = model.params().bind(&mut tape);
    let src = model.encode(&mut tape, &b, &[&[4, 5, 6]]).unwrap();
    assert_eq!(src.outputs.len(), 3);
    for &o in &src.outputs {
        assert_eq!(tape.value(o).shape(), [1, 4]);
        assert_eq!(tape.value(o), tape.value(src.outputs[0]));
    }
}

#[test]
fn contract_errors() {
    let model = tiny_model::<f64>((true, true, true), 8);
    let ex = toy_examples(model.vocab());
    let mut tape = Tape::new();
    let b = model.params().bind(&mut tape);

    let mut no_label = ex[0].clone();
    no_label.emotion = None;
    assert!(matches!(model.forward_loss(&mut tape, &b, &[&no_label]), Err(EcmError::Contract(_))));

    let mut no_q = ex[0].clone();
    no_q.q.clear();
    assert!(matches!(model.forward_loss(&mut tape, &b, &[&no_q]), Err(EcmError::Contract(_))));

    let mut empty = ex[0].clone();
    empty.post.clear();
    assert!(matches!(model.forward_loss(&mut tape, &b, &[&empty]), Err(EcmError::Contract(_))));

    let enc = model.encode_post(&ex[0].post).unwrap();
    assert!(model.initial_state(&enc, &[None]).is_err());
    let st = model.initial_state(&enc, &[Some(EmotionCategory::Sad)]).unwrap();
    assert!(model.decode_step(&enc, &st, &[model.vocab().len()]).is_err());
}

#[test]
fn teacher_forced_path_agrees_with_batched_loss() {
    let model = tiny_model::<f64>((true, true, true), 9);
    let ex = toy_examples(model.vocab());
    let lp = model.teacher_forced_log_probs(&ex[3].post, &ex[3].response, ex[3].emotion).unwrap();
    let (_, ce, ..) = losses(&model, &[&ex[3]]);
    assert!((lp.iter().sum::<f64>() + ce).abs() < 1e-10);

    let enc = model.encode_post(&ex[3].post).unwrap();
    let mut st = model.initial_state(&enc, &[ex[3].emotion]).unwrap();
    let mut prev = GO_ID;
    for (t, &y) in ex[3].response.iter().chain([EOS_ID].iter()).enumerate() {
        let out = model.decode_step(&enc, &st, &[prev]).unwrap();
        assert!((out.log_probs.get2(0, y) - lp[t]).abs() < 1e-12);
        st = out.state;
        prev = y;
    }
}

#[test]
fn padding_does_not_change_per_example_loss() {
    let model = tiny_model::<f64>((true, true, true), 10);
    let ex = toy_examples(model.vocab());
    let (_, ce_a, al_a, mem_a, _) = losses(&model, &[&ex[4]]);
    let (_, ce_b, al_b, mem_b, _) = losses(&model, &[&ex[5]]);
    let (_, ce, al, mem, _) = losses(&model, &[&ex[4], &ex[5]]);
    assert!((ce - ce_a - ce_b).abs() < 1e-9);
    assert!((al - al_a - al_b).abs() < 1e-9);
    assert!((mem - mem_a - mem_b).abs() < 1e-9);
}

#[test]
fn checkpoint_round_trip_preserves_loss() {
    let model = tiny_model::<f32>((true, true, true), 11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let back = EcmModel::<f32>::load(&path).unwrap();
    assert_eq!(back, model);
    let ex = toy_examples(model.vocab());
    let loss = |m: &EcmModel<f32>| {
        let mut tape = Tape::new();
        let b = m.params().bind(&mut tape);
        let out = m.forward_loss(&mut tape, &b, &[&ex[0], &ex[1]]).unwrap();
        tape.value(out.loss).data()[0].to_bits()
    };
    assert_eq!(loss(&model), loss(&back));
    let wide = EcmModel::<f64>::load(&path).unwrap();
    assert_eq!(wide.cast::<f32>(), model);
}

#[test]
fn checkpoint_shape_mismatch_is_rejected() {
    let model = tiny_model::<f32>((true, false, true), 12);
    let mut header = model.header();
    header["config"]["hidden"] = serde_json::json!(5);
    assert!(matches!(EcmModel::<f32>::from_parts(header, model.params().clone()), Err(EcmError::Checkpoint(_))));
}

#[test]
fn pretrained_initialization_copies_shared_tensors() {
    let base = tiny_model::<f32>((false, false, false), 13);
    let cfg = base.config().clone().with_flags(true, true, true);
    let (ecm, copied) = EcmModel::from_pretrained(&base, cfg, 14).unwrap();
    for name in &copied {
        if name == "out.w_generic" {
            continue;
        }
        assert_eq!(ecm.params().get(name), base.params().get(name), "{name}");
    }
    assert!(copied.iter().any(|n| n == "dec.0.w_in") && copied.iter().any(|n| n == "embed"));
    let w = base.params().get("out.w").unwrap();
    let wg = ecm.params().get("out.w_generic").unwrap();
    for r in 0..w.rows() {
        assert_eq!(&w.row(r)[..wg.cols()], wg.row(r));
    }
    for fresh in ["emotion.embed", "imem.bank", "imem.w_read", "imem.w_write", "out.w_emotion", "out.v_u", "dec.0.w_in_emo"] {
        assert!(!copied.iter().any(|n| n == fresh));
        assert!(ecm.params().get(fresh).unwrap().data().iter().all(|v| v.abs() <= 0.08));
    }
}

#[test]
fn emotion_changes_the_distribution() {
    let model = tiny_model::<f64>((true, true, true), 15);
    let post = model.vocab().encode(&toks("the dog is here"));
    let enc = model.encode_post(&post).unwrap();
    let st = model.initial_state(&enc, &[Some(EmotionCategory::Happy), Some(EmotionCategory::Sad)]).unwrap();
    let out = model.decode_step(&enc, &st, &[GO_ID, GO_ID]).unwrap();
    assert_ne!(out.log_probs.row(0), out.log_probs.row(1));
}
