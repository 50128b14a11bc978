use dataforge_core::audio::AudioClip;
use dataforge_core::phoneme::{
    g2p, inference_hybridize, text_units, train_augment, AugmentParams, BaseDict, EntryKind, Lexicon, PronSource,
    UnitKind,
};
use dataforge_core::punct::{optimize_punctuation, CharAlignment};
use dataforge_core::qa::{double_check_filter, edit_distance, QaGate, TableBackend};
use dataforge_core::text::{is_punctuation, Lang};
use dataforge_core::vocab::{chinese_char_count, prune_vocab, VocabEntry};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn seq(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 0..max)
}

const HANZI: [&str; 8] = ["你", "好", "世", "界", "银", "行", "今", "天"];

fn hanzi_base() -> BaseDict {
    let mut b = BaseDict::new();
    for (c, p) in HANZI
        .iter()
        .zip(["n i3", "h ao3", "sh i4", "j ie4", "y in2", "h ang2", "j in1", "t ian1"])
    {
        b.insert(*c, p.split(' ').map(String::from).collect());
    }
    b
}

fn hanzi_lexicon() -> Lexicon {
    let mut l = Lexicon::new();
    l.insert("银行", vec!["y in2".into(), "h ang2".into()], EntryKind::Polyphone)
        .unwrap();
    l.insert("天", vec!["t ian1".into()], EntryKind::Rare).unwrap();
    l
}

fn hanzi_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop_oneof![3 => 0usize..8, 1 => Just(8), 1 => Just(9)], 0..24).prop_map(|ix| {
        ix.iter()
            .map(|&i| match i {
                8 => "银行",
                9 => "，",
                k => HANZI[k],
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn edit_distance_triangle(a in seq(10), b in seq(10), c in seq(10)) {
        let ab = edit_distance(&a, &b).total();
        let bc = edit_distance(&b, &c).total();
        let ac = edit_distance(&a, &c).total();
        prop_assert!(ac <= ab + bc);
    }

    #[test]
    fn edit_distance_symmetry(a in seq(12), b in seq(12)) {
        let ab = edit_distance(&a, &b);
        let ba = edit_distance(&b, &a);
        prop_assert_eq!(ab.total(), ba.total());
        // Swapping roles turns deletions into insertions; the optimal
        // script may trade a substitution pair, so compare the net shape.
        prop_assert_eq!(ab.deletions as i64 - ab.insertions as i64, ba.insertions as i64 - ba.deletions as i64);
        prop_assert!(ab.substitutions + ab.deletions <= ab.ref_len);
        prop_assert_eq!(ab.ref_len, a.len());
    }

    #[test]
    fn gate_is_monotone(
        reference in prop::collection::vec(0usize..8, 1..30),
        errs_a in prop::collection::btree_set(0usize..30, 0..6),
        errs_b in prop::collection::btree_set(0usize..30, 0..6),
        keep_a in prop::collection::vec(any::<bool>(), 6),
    ) {
        let ref_text: String = reference.iter().map(|&i| HANZI[i]).collect();
        let corrupt = |errs: &dyn Fn(usize) -> bool| -> String {
            reference.iter().enumerate().map(|(k, &i)| if errs(k) { "错" } else { HANZI[i] }).collect()
        };
        let hyp_a = corrupt(&|k| errs_a.contains(&k));
        let hyp_b = corrupt(&|k| errs_b.contains(&k));
        // Improve A by repairing a subset of its errors.
        let fixed: Vec<usize> = errs_a.iter().zip(&keep_a).filter(|(_, k)| !**k).map(|(e, _)| *e).collect();
        let better_a = corrupt(&|k| errs_a.contains(&k) && !fixed.contains(&k));
        let clip = AudioClip::new(vec![0.0; 16], 16_000, "u").unwrap();
        let verdict = |a: &str| {
            let x = TableBackend::new("a").with("u", a);
            let y = TableBackend::new("b").with("u", hyp_b.as_str());
            double_check_filter(&ref_text, &clip, [&x, &y], Lang::Zh, &QaGate::default()).unwrap()
        };
        let before = verdict(&hyp_a);
        let after = verdict(&better_a);
        prop_assert!(after.rates[0] <= before.rates[0]);
        prop_assert!(!before.kept || after.kept);
    }

    #[test]
    fn punctuation_properties(
        units in prop::collection::vec(0usize..8, 1..20),
        commas in prop::collection::vec(any::<bool>(), 20),
        gaps in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..0.6], 20),
        threshold in 0.05f64..0.4,
    ) {
        let mut text = String::new();
        for (k, &u) in units.iter().enumerate() {
            text.push_str(HANZI[u]);
            if k + 1 < units.len() && commas[k] {
                text.push('，');
            }
        }
        text.push('。');
        let mut t = 0.0;
        let aligns: Vec<CharAlignment> = units
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                let a = CharAlignment::new(HANZI[u], t, t + 0.15);
                t += 0.15 + gaps[k];
                a
            })
            .collect();
        let once = optimize_punctuation(&text, &aligns, threshold, Lang::Zh).unwrap();
        let twice = optimize_punctuation(&once, &aligns, threshold, Lang::Zh).unwrap();
        prop_assert_eq!(&once, &twice);
        let bare = |s: &str| s.chars().filter(|c| !is_punctuation(*c)).collect::<String>();
        prop_assert_eq!(bare(&once), bare(&text));
        prop_assert!(once.ends_with('。'));
        // Between units k and k+1: punctuation iff gap > threshold.
        let body = &once[..once.len() - '。'.len_utf8()];
        let mut chars = body.chars().peekable();
        let mut k = 0;
        while let Some(c) = chars.next() {
            prop_assert!(!is_punctuation(c));
            let mut punct = false;
            while chars.peek().is_some_and(|c| is_punctuation(*c)) {
                chars.next();
                punct = true;
            }
            if k + 1 < units.len() {
                let gap = aligns[k + 1].start_s - aligns[k].end_s;
                prop_assert_eq!(punct, gap > threshold, "pair {}", k);
            }
            k += 1;
        }
    }

    #[test]
    fn prune_idempotent_and_ordered(surfaces in prop::collection::vec("[a-z你好世界银行]{1,5}", 0..60)) {
        let vocab: Vec<VocabEntry> = surfaces.iter().enumerate().map(|(i, s)| VocabEntry::new(i as u32, s.as_str()).unwrap()).collect();
        let once = prune_vocab(&vocab);
        prop_assert_eq!(prune_vocab(&once), once.clone());
        prop_assert!(once.iter().all(|e| chinese_char_count(e.surface()) < 3));
        prop_assert!(once.windows(2).all(|w| w[0].token_id() < w[1].token_id()));
        let expected: Vec<&VocabEntry> = vocab.iter().filter(|e| chinese_char_count(e.surface()) < 3).collect();
        prop_assert_eq!(once.iter().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn hybrid_reconstruction_and_protection(text in hanzi_text(), seed in any::<u64>(), p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let (lex, base) = (hanzi_lexicon(), hanzi_base());
        let inf = inference_hybridize(&text, Lang::Zh, &lex, &base);
        prop_assert_eq!(inf.reconstruct(), text.clone());
        prop_assert_eq!(&inf, &inference_hybridize(&text, Lang::Zh, &lex, &base));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let aug = train_augment(&text, Lang::Zh, &mut rng, &AugmentParams { p, max_ratio: r }, &lex, &base).unwrap();
        prop_assert_eq!(aug.sequence.reconstruct(), text.clone());
        for seqn in [&inf, &aug.sequence] {
            prop_assert!(seqn.units.iter().all(|u| !u.payload.is_empty()));
            prop_assert!(seqn.units.windows(2).all(|w| w[0].origin_index < w[1].origin_index));
        }
        // No augmented PHONEME unit falls inside a lexicon match.
        let units = text_units(&text, Lang::Zh);
        let prons = g2p(&units, &lex, &base);
        for u in aug.sequence.phoneme_units() {
            let idx = units.iter().position(|t| t.offset == u.origin_index).unwrap();
            let protected = matches!(prons[idx].source, PronSource::Lexicon { .. });
            prop_assert!(!protected);
            prop_assert!(!lex.contains(u.surface.as_deref().unwrap()));
            prop_assert_eq!(u.kind, UnitKind::Phoneme);
        }
        prop_assert!(aug.replaced as f64 <= r * aug.eligible as f64 + 1e-12);
    }
}
