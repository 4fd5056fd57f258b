use super::*;

fn w(m: &[&str]) -> Word {
    Word::from_morphs(m.iter().copied()).unwrap()
}

fn small(seed: u64) -> Seq2seqConfig {
    Seq2seqConfig {
        embedding_dim: 6,
        hidden_dim: 5,
        seed,
        ..Seq2seqConfig::default()
    }
}

#[test]
fn target_serialization() {
    use Symbol::*;
    let papers = w(&["paper", "s"]);
    assert_eq!(
        serialize_target(&papers),
        [Char('p'), Char('a'), Char('p'), Char('e'), Char('r'), Sep, Char('s'), Eos]
    );
    let free = w(&["free"]);
    assert_eq!(serialize_target(&free), [Char('f'), Char('r'), Char('e'), Char('e'), Eos]);
    for word in [papers, free] {
        assert_eq!(deserialize_target(&serialize_target(&word)), word.morphs());
    }
}

#[test]
fn vocab_reserves_separator() {
    let v = SeqVocab::from_words(&[w(&["ab", "c"])]);
    assert_eq!(v.input_size(), 4);
    assert_eq!(v.output_size(), 7);
    assert_eq!(v.input_id('z'), 0);
    for id in 0..v.output_size() {
        assert_eq!(v.output_id(v.output_symbol(id)), id);
    }
    assert!((1..v.input_size()).all(|i| v.output_symbol(i + 3) != Symbol::Sep));
}

#[test]
fn gradients_match_finite_differences() {
    let words = [w(&["ab", "c"]), w(&["pa", "per", "s"]), w(&["x"]), w(&["kal", "ta"])];
    for seed in 0..6 {
        let word = &words[seed as usize % words.len()];
        let check = gradient_check(&small(seed), word).unwrap();
        assert!(check.max_relative_error <= 1e-3, "{check:?}");
        assert!(check.max_attention_row_error <= 1e-10);
    }
}

#[test]
fn single_symbol_word_gradient() {
    let check = gradient_check(&small(3), &w(&["a"])).unwrap();
    assert!(check.max_relative_error <= 1e-3, "{check:?}");
}

#[test]
fn loss_is_pure() {
    let train = [w(&["ab", "c"]), w(&["ba"])];
    let model = Seq2seqModel::init(&small(1), &train).unwrap();
    let a = model.batch_loss_and_gradient(&train);
    let _ = model.word_loss(&train[1]);
    let b = model.batch_loss_and_gradient(&train);
    assert_eq!(a, b);
}

#[test]
fn seeded_training_is_reproducible_and_finite() {
    let train = [w(&["ab", "c"]), w(&["ba"]), w(&["ca", "b"])];
    let config = Seq2seqConfig { max_epochs: 5, ..small(9) };
    let (m1, r1) = train_seq2seq(&train, &config).unwrap();
    let (m2, r2) = train_seq2seq(&train, &config).unwrap();
    assert!(r1.epoch_losses.iter().all(|l| l.is_finite()));
    assert_eq!(r1, r2);
    assert_eq!(m1, m2);
}

#[test]
fn decoding_respects_cap_and_fallback() {
    let model = Seq2seqModel::init(&small(4), &[w(&["ab"])]).unwrap();
    for s in ["a", "ab", "zzzz", "abababab"] {
        assert!(model.decode_symbols(s).len() <= 2 * s.chars().count() + 5);
        let out = model.segment(s);
        assert!(!out.is_empty() && out.iter().all(|m| !m.is_empty()));
    }
}

#[test]
fn empty_training_and_bad_config() {
    assert_eq!(train_seq2seq(&[], &Seq2seqConfig::desk()).unwrap_err(), Seq2seqError::EmptyTraining);
    let bad = Seq2seqConfig { batch_size: 0, ..small(0) };
    assert!(matches!(train_seq2seq(&[w(&["a"])], &bad), Err(Seq2seqError::Config(_))));
}

#[test]
fn divergence_is_reported() {
    let config = Seq2seqConfig { learning_rate: f64::INFINITY, max_epochs: 3, ..small(0) };
    let err = train_seq2seq(&[w(&["ab", "c"]), w(&["ba"])], &config).unwrap_err();
    assert!(matches!(err, Seq2seqError::Diverged { .. }));
}

#[test]
fn text_round_trip() {
    let model = Seq2seqModel::init(&small(2), &[w(&["äb", "c"])]).unwrap();
    let back = Seq2seqModel::from_text(&model.to_text()).unwrap();
    assert_eq!(back, model);
    assert!(Seq2seqModel::from_text("#segeval-seq2seq v2\n").is_err());
}
