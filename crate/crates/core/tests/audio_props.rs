use dataforge_core::audio::{
    coarse_concat, detect_speech, normalize_amplitude, speaker_concat, standardize, AudioClip, Fragment, RawAudio,
    Segment, VadParams,
};
use proptest::prelude::*;

/// Random clip made of loud and silent stretches.
fn bursty_clip() -> impl Strategy<Value = AudioClip> {
    (
        prop::collection::vec((any::<bool>(), 1usize..400, -1.0f64..1.0), 1..20),
        prop::sample::select(vec![8_000u32, 16_000]),
    )
        .prop_map(|(runs, rate)| {
            let mut s = Vec::new();
            for (loud, len, amp) in runs {
                for k in 0..len {
                    s.push(if loud { amp * ((k % 7) as f64 / 7.0 - 0.5) } else { 0.0 });
                }
            }
            AudioClip::new(s, rate, "p").unwrap()
        })
}

proptest! {
    #[test]
    fn standardize_is_mono_and_bounded(
        channels in 1u16..3,
        frames in prop::collection::vec(-2.0f64..2.0, 2..600),
        from in prop::sample::select(vec![8_000u32, 11_025, 22_050, 44_100, 48_000]),
    ) {
        let n = frames.len() / channels as usize * channels as usize;
        prop_assume!(n >= channels as usize);
        let raw = RawAudio { channels, sample_rate: from, interleaved: frames[..n].to_vec(), source_id: "r".into() };
        let clip = standardize(&raw, 16_000).unwrap();
        prop_assert!(clip.samples().iter().all(|s| (-1.0..=1.0).contains(s)));
        let in_frames = (n / channels as usize) as f64;
        let expected = (in_frames * 16_000.0 / from as f64).round().max(1.0);
        prop_assert_eq!(clip.len() as f64, expected);
        prop_assert!((clip.duration_s() - clip.len() as f64 / 16_000.0).abs() < 1e-12);
    }

    #[test]
    fn vad_segments_sorted_and_disjoint(clip in bursty_clip(), gap in 0.0f64..300.0, frame in 5.0f64..40.0) {
        let params = VadParams { frame_ms: frame, energy_threshold: 0.05, min_gap_ms: gap };
        let segs = detect_speech(&clip, &params).unwrap();
        for s in &segs {
            prop_assert!(0.0 <= s.start_s && s.start_s < s.end_s);
            prop_assert!(s.end_s <= clip.duration_s() + 1e-12);
        }
        for w in segs.windows(2) {
            prop_assert!(w[0].end_s < w[1].start_s);
        }
    }

    #[test]
    fn coarse_concat_conserves_duration(clip in bursty_clip(), target in 0.01f64..0.5) {
        let segs = detect_speech(&clip, &VadParams { energy_threshold: 0.05, ..VadParams::default() }).unwrap();
        let spans: Vec<_> = segs.iter().map(|s| (&clip, *s)).collect();
        let out = coarse_concat(&spans, target).unwrap();
        let input: f64 = segs.iter().map(Segment::duration_s).sum();
        let output: f64 = out.iter().map(AudioClip::duration_s).sum();
        let slack = (segs.len().max(1)) as f64 / clip.sample_rate() as f64;
        prop_assert!((input - output).abs() <= slack);
        for c in out.iter().rev().skip(1) {
            prop_assert!(c.duration_s() >= target);
        }
    }

    #[test]
    fn normalize_is_idempotent(clip in bursty_clip(), db in -30.0f64..0.0) {
        let once = normalize_amplitude(&clip, db).unwrap();
        let twice = normalize_amplitude(&once, db).unwrap();
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn speaker_concat_respects_cap_and_order(
        lens in prop::collection::vec(1usize..2_000, 1..15),
        cap in 0.05f64..0.4,
    ) {
        let rate = 8_000;
        let clips: Vec<AudioClip> = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| AudioClip::new((0..n).map(|k| ((i * 31 + k) % 13) as f64 / 20.0).collect(), rate, format!("f{i}")).unwrap())
            .collect();
        let frags: Vec<Fragment> = clips
            .iter()
            .map(|c| Fragment::new(c, Segment::new(0.0, c.duration_s()).unwrap(), "spk").unwrap())
            .collect();
        let out = speaker_concat(&frags, cap).unwrap();
        for c in &out {
            prop_assert!(c.oversize || c.clip.duration_s() <= cap + 1e-12);
            prop_assert!(!c.oversize || c.fragment_count == 1);
        }
        let joined: Vec<f64> = out.iter().flat_map(|c| c.clip.samples().to_vec()).collect();
        let source: Vec<f64> = clips.iter().flat_map(|c| c.samples().to_vec()).collect();
        prop_assert_eq!(joined, source);
        prop_assert_eq!(out.iter().map(|c| c.fragment_count).sum::<usize>(), frags.len());
    }
}
