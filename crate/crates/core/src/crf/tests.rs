use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn w(m: &[&str]) -> Word {
    Word::from_morphs(m.iter().copied()).unwrap()
}

/// All interior label sequences of length `n` that the grammar accepts.
fn valid_paths(n: usize) -> Vec<Vec<Label>> {
    let mut out = Vec::new();
    for code in 0..4usize.pow(n as u32) {
        let mut c = code;
        let labels: Vec<Label> = (0..n)
            .map(|_| {
                let l = Label::INTERIOR[c % 4];
                c /= 4;
                l
            })
            .collect();
        if is_valid_path(&labels) {
            out.push(labels);
        }
    }
    out
}

/// Path score computed straight from feature strings and the transition table.
fn oracle_score(model: &CrfModel, surface: &str, labels: &[Label]) -> f64 {
    let chars: Vec<char> = surface.chars().collect();
    let mut s = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        for f in extract_features(&chars, t, model.delta()) {
            s += model.emission_weight(&f, y);
        }
    }
    let k = model.order();
    if k > 0 {
        let table: HashMap<(Vec<Label>, Label), f64> =
            model.transition_table().into_iter().map(|(h, y, w)| ((h, y), w)).collect();
        let mut framed = vec![Label::Start];
        framed.extend_from_slice(labels);
        framed.push(Label::End);
        for j in 1..framed.len() {
            let hist = framed[j - k.min(j)..j].to_vec();
            s += table[&(hist, framed[j])];
        }
    }
    s
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn random_surface(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| ['a', 'b', 'c'][rng.random_range(0..3)]).collect()
}

fn randomize(model: &mut CrfModel, rng: &mut ChaCha8Rng, scale: f64) {
    let p: Vec<f64> = (0..model.param_count()).map(|_| rng.random_range(-scale..scale)).collect();
    model.set_params(&p);
}

#[test]
fn viterbi_and_partition_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..40 {
        let k = trial % 5;
        let len = 1 + trial % 8;
        let surface = random_surface(&mut rng, len);
        let vocab = [Word::from_morphs([surface.as_str()]).unwrap()];
        let mut model = CrfModel::new(k, 3, 1.0, &vocab).unwrap();
        randomize(&mut model, &mut rng, 1.5);
        let scores: Vec<f64> = valid_paths(len).iter().map(|p| oracle_score(&model, &surface, p)).collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (labels, score) = model.viterbi_labels(&surface);
        assert!((score - best).abs() < 1e-8, "k={k} len={len}");
        assert!((oracle_score(&model, &surface, &labels) - best).abs() < 1e-8);
        assert!((model.log_partition(&surface) - lse(&scores)).abs() < 1e-8);
    }
}

#[test]
fn path_score_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = CrfModel::new(3, 2, 1.0, &[w(&["abca"])]).unwrap();
    randomize(&mut model, &mut rng, 1.0);
    for p in valid_paths(4) {
        let a = model.path_score("abca", &p).unwrap();
        assert!((a - oracle_score(&model, "abca", &p)).abs() < 1e-12);
    }
    assert!(model.path_score("abca", &[Label::B, Label::B, Label::E, Label::S]).is_none());
}

#[test]
fn marginals_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..=4 {
        let mut model = CrfModel::new(k, 4, 1.0, &[w(&["abc", "ab"])]).unwrap();
        randomize(&mut model, &mut rng, 2.0);
        let (m, _) = model.marginals("abcab");
        for row in m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn single_char_word_has_zero_loss_at_zero_weights() {
    let model = CrfModel::new(2, 4, 1.0, &[w(&["a"])]).unwrap();
    let (loss, grad) = nll_and_gradient(&model, &[w(&["a"])]);
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn zero_weight_loss_counts_valid_paths() {
    for n in 1..=6 {
        let word = Word::from_morphs(["abcdef"[..n].to_string()]).unwrap();
        let model = CrfModel::new(1, 2, 1.0, std::slice::from_ref(&word)).unwrap();
        let (loss, _) = nll_and_gradient(&model, &[word]);
        assert!((loss - (valid_paths(n).len() as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn gold_path_probability_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let word = w(&["pa", "p", "ers"]);
    for k in 0..=3 {
        let mut model = CrfModel::new(k, 4, 0.0, std::slice::from_ref(&word)).unwrap();
        randomize(&mut model, &mut rng, 3.0);
        let (loss, _) = nll_and_gradient(&model, std::slice::from_ref(&word));
        let p = (-loss).exp();
        assert!(p > 0.0 && p <= 1.0);
    }
}

fn max_rel_gradient_error(model: &mut CrfModel, batch: &[Word]) -> f64 {
    let (_, grad) = nll_and_gradient(model, batch);
    let base = model.params();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        model.set_params(&p);
        let up = nll_and_gradient(model, batch).0;
        p[i] = base[i] - h;
        model.set_params(&p);
        let down = nll_and_gradient(model, batch).0;
        let fd = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    model.set_params(&base);
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..6 {
        let k = trial % 3;
        let batch = vec![w(&["ab", "c"]), w(&["c", "ab"])];
        let mut model = CrfModel::new(k, 1, 0.1, &batch).unwrap();
        assert!(model.param_count() <= 200);
        randomize(&mut model, &mut rng, 0.5);
        let err = max_rel_gradient_error(&mut model, &batch);
        assert!(err <= 1e-4, "k={k}: {err}");
    }
}

#[test]
fn lower_order_weights_embed_into_higher_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vocab = [w(&["abcab"])];
    for k in 0..4 {
        let mut low = CrfModel::new(k, 2, 1.0, &vocab).unwrap();
        randomize(&mut low, &mut rng, 1.0);
        let mut high = CrfModel::new(k + 1, 2, 1.0, &vocab).unwrap();
        let n_emit = low.feature_count() * 4;
        let mut p = high.params();
        p[..n_emit].copy_from_slice(&low.params()[..n_emit]);
        high.set_params(&p);
        let low_table: HashMap<(Vec<Label>, Label), f64> =
            low.transition_table().into_iter().map(|(h, y, w)| ((h, y), w)).collect();
        for (h, y, _) in high.transition_table() {
            let weight = if k == 0 { 0.0 } else { low_table[&(h[h.len() - k.min(h.len())..].to_vec(), y)] };
            assert!(high.set_transition_weight(&h, y, weight));
        }
        for p in valid_paths(5) {
            let (a, b) = (low.path_score("abcab", &p).unwrap(), high.path_score("abcab", &p).unwrap());
            assert!((a - b).abs() < 1e-12);
        }
        assert!((low.log_partition("abcab") - high.log_partition("abcab")).abs() < 1e-12);
    }
}

#[test]
fn single_character_surface() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = CrfModel::new(2, 4, 1.0, &[w(&["a"])]).unwrap();
    randomize(&mut model, &mut rng, 5.0);
    assert_eq!(model.segment("a"), ["a"]);
}

#[test]
fn zero_weight_decoding_is_stable() {
    let model = CrfModel::new(1, 4, 1.0, &[w(&["abc"])]).unwrap();
    let first = model.segment("abcdef");
    for _ in 0..3 {
        assert_eq!(model.segment("abcdef"), first);
    }
    assert_eq!(first.concat(), "abcdef");
}

fn toy_corpus() -> Vec<Word> {
    let stems = ["kal", "mor", "sive", "tupa", "ren", "lok", "viha", "nar", "pemo", "suk"];
    let suffixes = [vec![], vec!["ta"], vec!["ni"], vec!["ta", "shi"], vec!["ni", "ko"]];
    let mut out = Vec::new();
    for s in stems {
        for suf in &suffixes {
            let mut m = vec![s];
            m.extend(suf.iter().copied());
            out.push(w(&m));
        }
    }
    out
}

#[test]
fn first_order_crf_fits_training_labels() {
    let train = toy_corpus();
    assert_eq!(train.len(), 50);
    let (model, report) = train_crf(&train, &CrfConfig::with_order(1)).unwrap();
    assert!(report.optimizer.loss_history.windows(2).all(|p| p[1] <= p[0]));
    let (mut right, mut total) = (0, 0);
    for word in &train {
        let (pred, _) = model.viterbi_labels(word.surface());
        let gold = interior_labels(word.morphs());
        right += pred.iter().zip(&gold).filter(|(a, b)| a == b).count();
        total += gold.len();
    }
    assert!(right as f64 / total as f64 >= 0.95, "{right}/{total}");
}

#[test]
fn all_orders_train() {
    let train: Vec<Word> = toy_corpus().into_iter().step_by(5).collect();
    for k in 0..=MAX_ORDER {
        let (model, _) = train_crf(&train, &CrfConfig::with_order(k)).unwrap();
        assert_eq!(model.segment("kalta").concat(), "kalta");
    }
    assert_eq!(
        train_crf(&train, &CrfConfig::with_order(5)).unwrap_err(),
        CrfError::UnsupportedOrder(5)
    );
    assert_eq!(train_crf(&[], &CrfConfig::with_order(1)).unwrap_err(), CrfError::EmptyTraining);
}

#[test]
fn non_convergence_still_returns_model() {
    let train = toy_corpus();
    let mut config = CrfConfig::with_order(1);
    config.lbfgs.max_iterations = 2;
    config.lbfgs.rel_tolerance = 0.0;
    let (model, report) = train_crf(&train, &config).unwrap();
    assert!(!report.converged);
    assert!(report.optimizer.grad_inf_norm > 0.0);
    assert_eq!(model.segment("kalta").concat(), "kalta");
}

#[test]
fn unseen_features_are_dropped() {
    let (model, _) = train_crf(&toy_corpus()[..10], &CrfConfig::with_order(1)).unwrap();
    let out = model.segment("xyzzyq");
    assert_eq!(out.concat(), "xyzzyq");
}

#[test]
fn text_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in [0, 2] {
        let mut model = CrfModel::new(k, 3, 0.5, &[w(&["a\\b", "cd"])]).unwrap();
        randomize(&mut model, &mut rng, 1.0);
        let back = CrfModel::from_text(&model.to_text()).unwrap();
        assert_eq!(back, model);
    }
    assert!(CrfModel::from_text("#segeval-crf v0\n").is_err());
}
