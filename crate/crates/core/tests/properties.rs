mod common;

use ndarray::{Array2, Array3};
use pausebench::enrichment::{
    bin_pause, enrich, extract_pauses, parse_timed_transcript, render, EnrichedItem, SchemeId,
};
use pausebench::experiments::{roc_auc, stratified_batches, stratified_kfold};
use pausebench::neuralcore::{model_forward, predict, AttentionMode, BatchInput, HyperParams, ModelDims, ModelParams, SequenceBatch};
use pausebench::tensorio::{encode_matrix, read_matrix_from, EmbeddingMatrix, EMBED_DIM};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force_auc, random_transcript};

fn scheme_id() -> impl Strategy<Value = SchemeId> {
    prop::sample::select(SchemeId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn binning_is_total_above_minimum(id in scheme_id(), d in 0.0f64..20.0) {
        let s = id.scheme();
        prop_assert_eq!(bin_pause(&s, d).is_some(), d >= s.minimum());
    }

    #[test]
    fn bins_are_monotone(id in scheme_id(), a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let s = id.scheme();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if let (Some(i), Some(j)) = (s.bin_index(lo), s.bin_index(hi)) {
            prop_assert!(i <= j);
        }
    }

    #[test]
    fn enrichment_keeps_words_in_order(seed: u64, id in scheme_id(), disfl: bool) {
        let t = random_transcript(&mut ChaCha8Rng::seed_from_u64(seed), 40);
        let e = enrich(&t, &id.scheme(), disfl);
        let words: Vec<&str> = e.words().collect();
        let original: Vec<&str> = t.words().map(|w| w.text.as_str()).collect();
        prop_assert_eq!(words, original);
        // at most one pause token between consecutive words, never leading or trailing
        let items = &e.items;
        prop_assert!(matches!(items.first(), Some(EnrichedItem::Word(_))));
        prop_assert!(!matches!(items.last(), Some(EnrichedItem::Pause(_))));
        for pair in items.windows(2) {
            prop_assert!(!matches!(pair, [EnrichedItem::Pause(_), EnrichedItem::Pause(_)]));
        }
    }

    #[test]
    fn pause_count_matches_gaps(seed: u64, id in scheme_id()) {
        let t = random_transcript(&mut ChaCha8Rng::seed_from_u64(seed), 40);
        let s = id.scheme();
        let expected = extract_pauses(&t).iter().filter(|p| p.duration_s >= s.minimum()).count();
        prop_assert_eq!(enrich(&t, &s, false).pause_positions().len(), expected);
    }

    #[test]
    fn rendered_tokens_match_items(seed: u64, id in scheme_id(), disfl: bool) {
        let t = random_transcript(&mut ChaCha8Rng::seed_from_u64(seed), 30);
        let e = enrich(&t, &id.scheme(), disfl);
        let text = render(&e);
        let tokens: Vec<&str> = text.split(' ').collect();
        let items: Vec<&str> = e.items.iter().map(EnrichedItem::as_str).collect();
        prop_assert_eq!(tokens, items);
    }

    #[test]
    fn transcript_document_round_trip(seed: u64) {
        let t = random_transcript(&mut ChaCha8Rng::seed_from_u64(seed), 30);
        let bytes = serde_json::to_vec(&t.to_document()).unwrap();
        prop_assert_eq!(parse_timed_transcript(&bytes).unwrap(), t);
    }

    #[test]
    fn matrix_round_trip_is_bit_exact(rows in 1usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..rows * EMBED_DIM).map(|_| f32::from_bits(rng.random::<u32>() & 0xBF7F_FFFF)).collect();
        let m = EmbeddingMatrix::new(rows, EMBED_DIM, data).unwrap();
        let back = read_matrix_from(&encode_matrix(&m)[..]).unwrap();
        prop_assert_eq!(
            back.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            m.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn auc_matches_pair_statistic(
        pairs in prop::collection::vec((0u8..6, any::<bool>()), 2..50)
            .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 5.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        prop_assert!((auc - brute_force_auc(&scores, &labels)).abs() <= 1e-12);
        // strictly increasing transforms leave it unchanged; swapping labels mirrors it
        for warp in [|s: f64| 2.5 * s - 1.0, |s: f64| s * s * s, |s: f64| (3.0 * s).exp() - 7.0] {
            let warped: Vec<f64> = scores.iter().map(|&s| warp(s)).collect();
            prop_assert!((roc_auc(&warped, &labels).unwrap() - auc).abs() <= 1e-12);
        }
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert!((roc_auc(&scores, &flipped).unwrap() - (1.0 - auc)).abs() <= 1e-12);
    }

    #[test]
    fn folds_partition_subjects(sizes in prop::collection::vec(0usize..25, 2..4), k in 2usize..7, seed: u64) {
        let subjects: Vec<(String, usize)> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |i| (format!("{c}-{i}"), c)))
            .collect();
        prop_assume!(subjects.len() >= k);
        let plan = stratified_kfold(&subjects, k, seed).unwrap();
        let mut all: Vec<&String> = plan.test_sets.iter().flatten().collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), subjects.len());
        for (c, _) in sizes.iter().enumerate() {
            let per_fold: Vec<usize> = plan
                .test_sets
                .iter()
                .map(|t| t.iter().filter(|id| id.starts_with(&format!("{c}-"))).count())
                .collect();
            prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn batches_cover_each_sample_once(n0 in 1usize..30, n1 in 1usize..30, bs in 1usize..12, seed: u64) {
        let labels: Vec<usize> = std::iter::repeat_n(0, n0).chain(std::iter::repeat_n(1, n1)).collect();
        let batches = stratified_batches(&labels, bs, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n0 + n1).collect::<Vec<_>>());
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= bs));
    }

    #[test]
    fn softmax_ignores_constant_shift(a in -30.0f64..30.0, b in -30.0f64..30.0, c in -500.0f64..500.0) {
        let logits = Array2::from_shape_vec((1, 2), vec![a, b]).unwrap();
        let shifted = logits.mapv(|x| x + c);
        let (p, _) = predict(logits.view());
        let (q, _) = predict(shifted.view());
        prop_assert!((p[[0, 1]] - q[[0, 1]]).abs() < 1e-12);
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
    }
}

fn random_batch(rng: &mut ChaCha8Rng, d: usize, mode: AttentionMode) -> BatchInput {
    let mut seqs = |n: usize| {
        let arrays: Vec<Array2<f64>> = (0..n)
            .map(|_| Array2::from_shape_simple_fn((rng.random_range(1..6), d), || rng.random_range(-2.0..2.0)))
            .collect();
        let views: Vec<_> = arrays.iter().map(|a| a.view()).collect();
        SequenceBatch::from_sequences(&views).unwrap()
    };
    let query = seqs(3);
    let key_value = (mode == AttentionMode::Cross).then(|| seqs(3));
    BatchInput { query, key_value, labels: vec![0, 1, 0] }
}

/// Fill every masked position with noise, so masking has something to hide.
fn pad_with_noise(b: &SequenceBatch, extra: usize, rng: &mut ChaCha8Rng) -> SequenceBatch {
    let mut p = b.with_padding(extra);
    let (n, l, d) = p.data.dim();
    let noise = Array3::from_shape_simple_fn((n, l, d), || rng.random_range(-50.0..50.0));
    ndarray::Zip::from(&mut p.data)
        .and(&noise)
        .and_broadcast(&p.mask.clone().insert_axis(ndarray::Axis(2)))
        .for_each(|x, &z, &valid| {
            if !valid {
                *x = z;
            }
        });
    p
}

#[test]
fn padding_never_moves_logits() {
    let hp = HyperParams::default();
    let dims = ModelDims { d_model: 24, hidden: 16 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..60 {
        let mode = AttentionMode::ALL[case % 3];
        let params = ModelParams::init(dims, &mut rng);
        let batch = random_batch(&mut rng, dims.d_model, mode);
        let extra = rng.random_range(1..5);
        let padded = BatchInput {
            query: pad_with_noise(&batch.query, extra, &mut rng),
            key_value: batch.key_value.as_ref().map(|kv| pad_with_noise(kv, extra + 1, &mut rng)),
            labels: batch.labels.clone(),
        };
        let (a, _) = model_forward(&params, &hp, &batch, mode, false, &mut rng).unwrap();
        let (b, _) = model_forward(&params, &hp, &padded, mode, false, &mut rng).unwrap();
        let diff = (&a - &b).mapv(f64::abs).fold(0.0f64, |m, &x| m.max(x));
        assert!(diff < 1e-9, "case {case}: {diff}");
    }
}
