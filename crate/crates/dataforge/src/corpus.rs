//! Generator for the small synthetic corpus bundled with the crate.
//!
//! Each clip is a train of tone bursts, one per alignment unit of its
//! transcript, separated by short gaps and one long planted pause. The
//! alignment file records the burst times exactly.

use std::path::Path;

use dataforge_core::audio::RawAudio;
use dataforge_core::punct::{alignment_units, CharAlignment};
use dataforge_core::text::Lang;

use crate::formats::{to_jsonl, write_text, SourceEntry};
use crate::pipeline::PipelineConfig;
use crate::wav::write_raw_pcm16;
use crate::Error;

const LEAD_S: f64 = 0.3;
const GAP_S: f64 = 0.05;
const PAUSE_S: f64 = 0.45;
const FADE_S: f64 = 0.005;

struct Spec {
    id: &'static str,
    speaker: &'static str,
    lang: Lang,
    text: &'static str,
    /// Unit index followed by the long pause.
    pause_after: Option<usize>,
    rate: u32,
    channels: u16,
}

const SPECS: [Spec; 5] = [
    Spec {
        id: "c01",
        speaker: "spk_a",
        lang: Lang::Zh,
        text: "你好世界我们今天很好",
        pause_after: Some(3),
        rate: 16_000,
        channels: 1,
    },
    Spec {
        id: "c02",
        speaker: "spk_a",
        lang: Lang::Zh,
        text: "今天天气很好，我们去听歌",
        pause_after: None,
        rate: 16_000,
        channels: 1,
    },
    Spec {
        id: "c03",
        speaker: "spk_b",
        lang: Lang::Zh,
        text: "早上好，中国",
        pause_after: Some(2),
        rate: 8_000,
        channels: 2,
    },
    Spec {
        id: "c04",
        speaker: "spk_c",
        lang: Lang::En,
        text: "hello world this is a test",
        pause_after: Some(1),
        rate: 11_025,
        channels: 1,
    },
    Spec {
        id: "c05",
        speaker: "spk_d",
        lang: Lang::En,
        text: "good morning thank you",
        pause_after: None,
        rate: 8_000,
        channels: 1,
    },
];

fn unit_duration(i: usize) -> f64 {
    0.12 + 0.02 * (i % 4) as f64
}

/// Alignment and mono samples for one clip.
fn render(spec: &Spec) -> (Vec<CharAlignment>, Vec<f64>) {
    let units = alignment_units(spec.text, spec.lang);
    let mut aligns = Vec::with_capacity(units.len());
    let mut t = LEAD_S;
    for (i, u) in units.iter().enumerate() {
        let d = unit_duration(i);
        aligns.push(CharAlignment::new(*u, t, t + d));
        t += d + if spec.pause_after == Some(i) { PAUSE_S } else { GAP_S };
    }
    let total = t - GAP_S + LEAD_S;
    let rate = spec.rate as f64;
    let n = (total * rate).round() as usize;
    let mut samples = vec![0.0; n];
    for (i, a) in aligns.iter().enumerate() {
        let freq = 180.0 + 30.0 * (i % 5) as f64;
        let (s0, s1) = ((a.start_s * rate).round() as usize, (a.end_s * rate).round() as usize);
        for (k, s) in samples[s0..s1.min(n)].iter_mut().enumerate() {
            let tk = k as f64 / rate;
            let env = (tk / FADE_S).min((a.duration_s() - tk) / FADE_S).clamp(0.0, 1.0);
            *s = 0.4 * env * (2.0 * std::f64::consts::PI * freq * tk).sin();
        }
    }
    (aligns, samples)
}

/// Writes the corpus: `manifest.jsonl`, `pipeline.json`, `audio/*.wav`
/// and `align/*.json`.
pub fn synthesize(out_dir: &Path) -> Result<Vec<SourceEntry>, Error> {
    let mut entries = Vec::new();
    for spec in &SPECS {
        let (aligns, mono) = render(spec);
        let interleaved = if spec.channels == 2 {
            mono.iter().flat_map(|&s| [s, 0.5 * s]).collect()
        } else {
            mono
        };
        let raw = RawAudio {
            channels: spec.channels,
            sample_rate: spec.rate,
            interleaved,
            source_id: spec.id.into(),
        };
        let audio = format!("audio/{}.wav", spec.id);
        let alignment = format!("align/{}.json", spec.id);
        std::fs::create_dir_all(out_dir.join("audio")).map_err(|source| Error::Io {
            path: out_dir.join("audio"),
            source,
        })?;
        write_raw_pcm16(&out_dir.join(&audio), &raw)?;
        let mut json = serde_json::to_string_pretty(&aligns).expect("alignments serialize");
        json.push('\n');
        write_text(&out_dir.join(&alignment), &json)?;
        entries.push(SourceEntry {
            entry_id: spec.id.into(),
            audio,
            speaker_id: spec.speaker.into(),
            text: spec.text.into(),
            lang: spec.lang,
            alignment: Some(alignment),
        });
    }
    write_text(&out_dir.join("manifest.jsonl"), &to_jsonl(&entries))?;
    let mut config = serde_json::to_string_pretty(&PipelineConfig::default()).expect("config serializes");
    config.push('\n');
    write_text(&out_dir.join("pipeline.json"), &config)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_matches_units() {
        for spec in &SPECS {
            let (aligns, samples) = render(spec);
            assert_eq!(aligns.len(), alignment_units(spec.text, spec.lang).len());
            assert!(samples.iter().all(|s| s.abs() <= 0.4));
        }
    }
}
