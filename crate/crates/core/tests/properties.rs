//! Randomized property checks over the engine invariants: frame-schedule
//! arithmetic, retrieval against an independent brute-force oracle,
//! parse/render round-trips, and reward bounds.

use proptest::prelude::*;

use omnirag_core::bank::{
    build_bank, sample_frame_schedule, schedule_len, segment_id_for, AsrRecord, VideoManifest,
};
use omnirag_core::embed::{DeterministicEmbedder, EmbedBackend};
use omnirag_core::grpo::standardized_advantages;
use omnirag_core::protocol::{
    format_reward, gated_reward, parse_turn, render_turn, Action, ParseMode, ParsedTurn,
    TagGrammar,
};
use omnirag_core::retrieval::{cosine, embed_bank, retrieve_audio, retrieve_image};

proptest! {
    #[test]
    fn schedule_length_matches_floor_formula(
        duration in 0.01f64..100_000.0,
        interval in 0.01f64..500.0,
    ) {
        let schedule = sample_frame_schedule(duration, interval).unwrap();
        prop_assert_eq!(schedule.len(), schedule_len(duration, interval).unwrap());
        prop_assert_eq!(schedule.len() as u64, (duration / interval).floor() as u64 + 1);
        // Timestamps are (i-1) * interval, within the video, and increasing.
        prop_assert_eq!(schedule[0], 0.0);
        let last = *schedule.last().unwrap();
        prop_assert!(last <= duration);
        for w in schedule.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn segment_id_is_floor_of_timestamp_over_window(
        t in 0.0f64..50_000.0,
        seg in 0.5f64..120.0,
    ) {
        prop_assert_eq!(segment_id_for(t, seg), (t / seg).floor() as u64);
    }

    #[test]
    fn advantage_standardization_properties(
        rewards in proptest::collection::vec(-2.0f64..2.0, 2..12),
        shift in -5.0f64..5.0,
    ) {
        let a = standardized_advantages(&rewards, 1e-8).unwrap();
        // Sums to zero.
        prop_assert!(a.iter().sum::<f64>().abs() < 1e-6 * rewards.len() as f64);
        // Invariant to a uniform reward shift.
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let b = standardized_advantages(&shifted, 1e-8).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn reward_bounds(
        fmt in 0.0f64..=1.0,
        perf in 0.0f64..=1.0,
    ) {
        let r = gated_reward(fmt, perf, 0.5);
        prop_assert!((-1.0..=1.0).contains(&r));
        // The gate: below threshold the performance term must not appear.
        if fmt < 0.5 {
            prop_assert!((r - (-1.0 + fmt)).abs() < 1e-12);
        }
    }
}

fn body_text() -> impl Strategy<Value = String> {
    // Tag-free bodies without surrounding whitespace; the grammar treats
    // angle brackets as tag syntax and the parser trims bodies.
    "[a-zA-Z0-9,.?']([a-zA-Z0-9 ,.?']{0,38}[a-zA-Z0-9,.?'])?"
}

proptest! {
    #[test]
    fn parse_render_round_trip(
        think in body_text(),
        body in body_text(),
        which in 0usize..3,
    ) {
        let action = match which {
            0 => Action::SearchImage { query: body.clone() },
            1 => Action::SearchAudio { query: body.clone() },
            _ => Action::Answer { text: body.clone() },
        };
        let turn = ParsedTurn::new(&think, action);
        let rendered = render_turn(&turn);
        let grammar = TagGrammar::default();
        let strict = parse_turn(&rendered, &grammar, ParseMode::Strict).unwrap();
        prop_assert_eq!(&strict, &turn);
        let lenient = parse_turn(&rendered, &grammar, ParseMode::Lenient).unwrap();
        prop_assert_eq!(&lenient, &turn);
        // Rendering is idempotent through a parse cycle.
        prop_assert_eq!(render_turn(&strict), rendered);
    }

    #[test]
    fn full_format_reward_for_rendered_answer_turns(think in body_text(), ans in body_text()) {
        let turn = ParsedTurn::new(&think, Action::Answer { text: ans });
        let (fmt, _) = format_reward(&render_turn(&turn), &TagGrammar::default());
        prop_assert_eq!(fmt, 1.0);
    }
}

/// Independent oracle: score every item, sort by (score desc, index asc),
/// with per-segment best-frame collapse for images.
fn oracle_audio(bank: &omnirag_core::bank::EvidenceBank, query_vec: &[f32], k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = bank
        .audio_items
        .iter()
        .map(|item| (item.index, cosine(item.embedding.as_ref().unwrap(), query_vec)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(i, _)| i).collect()
}

fn oracle_image(bank: &omnirag_core::bank::EvidenceBank, query_vec: &[f32], k: usize) -> Vec<u64> {
    use std::collections::BTreeMap;
    let mut best: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for item in &bank.image_items {
        let s = cosine(item.embedding.as_ref().unwrap(), query_vec);
        let entry = best.entry(item.segment_id).or_insert((f64::NEG_INFINITY, usize::MAX));
        if s > entry.0 || (s == entry.0 && item.index < entry.1) {
            *entry = (s, item.index);
        }
    }
    let mut segs: Vec<(u64, f64)> = best.into_iter().map(|(seg, (s, _))| (seg, s)).collect();
    segs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    segs.into_iter().take(k).map(|(seg, _)| seg).collect()
}

fn random_bank(
    duration: f64,
    asr_slots: &[(f64, f64, String)],
) -> omnirag_core::bank::EvidenceBank {
    let frames = sample_frame_schedule(duration, 10.0).unwrap();
    let manifest = VideoManifest {
        video_id: "prop".into(),
        duration_s: duration,
        frame_assets: frames.iter().map(|t| (*t, format!("frames/{t:.1}.jpg"))).collect(),
        audio_asset: Some("audio.wav".into()),
    };
    let asr: Vec<AsrRecord> = asr_slots
        .iter()
        .map(|(t0, t1, text)| AsrRecord { start_s: *t0, end_s: *t1, text: text.clone() })
        .collect();
    build_bank(&manifest, &asr, 10.0, 10.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn retrieval_matches_brute_force_oracle(
        duration in 20.0f64..600.0,
        k in 1usize..10,
        query in body_text(),
        seed in 0u64..500,
        n_asr in 1usize..20,
    ) {
        let asr: Vec<(f64, f64, String)> = (0..n_asr)
            .map(|i| {
                let t0 = i as f64 * duration / n_asr as f64;
                (t0, t0 + 1.0, format!("utterance number {i} about topic {}", i % 5))
            })
            .collect();
        let backend = DeterministicEmbedder::new(seed);
        let bank = embed_bank(random_bank(duration, &asr), &backend).unwrap();
        let query_vec = backend.embed_text(&query).unwrap();

        let audio = retrieve_audio(&bank, &backend, &query, k).unwrap();
        let want_audio = oracle_audio(&bank, &query_vec, k);
        let got_audio: Vec<usize> = audio.hits.iter().map(|h| h.item_index).collect();
        prop_assert_eq!(got_audio, want_audio);

        let image = retrieve_image(&bank, &backend, &query, k).unwrap();
        let want_image = oracle_image(&bank, &query_vec, k);
        let got_image: Vec<u64> = image.hits.iter().map(|h| h.segment_id).collect();
        prop_assert_eq!(got_image, want_image);

        // Monotonicity in K: top-k is a prefix of top-(k+1).
        let wider = retrieve_image(&bank, &backend, &query, k + 1).unwrap();
        for (a, b) in image.hits.iter().zip(&wider.hits) {
            prop_assert_eq!(a, b);
        }
        // Scores are sorted and valid cosines.
        for h in image.hits.iter().chain(&audio.hits) {
            prop_assert!((-1.0..=1.0).contains(&h.score));
        }
        for w in audio.hits.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }
}
