//! Stage executors. Each job reads the artifacts named by its input refs
//! and writes its own under `artifacts/<entry>/`, returning a payload ref
//! relative to the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dataforge_core::audio::{
    coarse_concat, detect_speech, normalize_amplitude, speaker_concat, standardize, AudioClip, Fragment, Segment,
    VadParams, COARSE_TARGET_S, SPEAKER_CAP_S, TARGET_PEAK_DB,
};
use dataforge_core::orchestrator::{JobSpec, Stage};
use dataforge_core::punct::{duration_stats, optimize_punctuation, threshold_for, ThresholdMode};
use dataforge_core::qa::{double_check_filter, text_normalize, GateRule, QaGate, TableBackend, RETENTION_THRESHOLD};
use dataforge_core::vocab::{ratio_check, speech_token_count, RatioBounds};

use crate::formats::{parse_alignment, parse_json, read_text, write_text, QaRecord, SourceEntry};
use crate::wav::{read_clip, read_wav, write_wav, WavFormat};
use crate::Error;

/// Stage parameters shared by every worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSettings {
    pub sample_rate: u32,
    pub vad: VadParams,
    pub coarse_target_s: f64,
    pub target_peak_db: f64,
    pub speaker_cap_s: f64,
    pub qa_threshold: f64,
    pub qa_rule: GateRule,
    pub threshold_mode: ThresholdMode,
    /// Transcript overrides per entry for the two stub recognizers; entries
    /// not listed are recognized exactly.
    pub asr_a: BTreeMap<String, String>,
    pub asr_b: BTreeMap<String, String>,
}

impl Default for StageSettings {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            vad: VadParams::default(),
            coarse_target_s: COARSE_TARGET_S,
            target_peak_db: TARGET_PEAK_DB,
            speaker_cap_s: SPEAKER_CAP_S,
            qa_threshold: RETENTION_THRESHOLD,
            qa_rule: GateRule::Max,
            threshold_mode: ThresholdMode::Variance,
            asr_a: BTreeMap::new(),
            asr_b: BTreeMap::new(),
        }
    }
}

/// Audio artifact index written by the audio stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSet {
    pub entry_id: String,
    pub clips: Vec<ClipRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub speech: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entry_id: String,
    pub backend: String,
    /// Clip set that was transcribed.
    pub clips: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PunctOutput {
    pub entry_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub entry_id: String,
    pub text: String,
    pub speech_tokens: u64,
    pub text_tokens: usize,
    pub ratio: f64,
    pub ratio_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub payload_ref: String,
    pub kept: Option<bool>,
}

/// Everything a worker needs to run any stage.
#[derive(Debug, Clone)]
pub struct StageContext {
    pub manifest_dir: PathBuf,
    pub out_dir: PathBuf,
    pub entries: BTreeMap<String, SourceEntry>,
    pub settings: StageSettings,
}

fn rel(entry: &str, name: &str) -> String {
    format!("artifacts/{entry}/{name}")
}

impl StageContext {
    fn entry(&self, id: &str) -> Result<&SourceEntry, Error> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::Data(format!("no manifest entry {id:?}")))
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    fn input<'j>(&self, job: &'j JobSpec, i: usize) -> Result<&'j str, Error> {
        job.input_refs
            .get(i)
            .map(String::as_str)
            .ok_or_else(|| Error::Data(format!("{}: missing input ref {i}", job.job_id)))
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, rel: &str) -> Result<T, Error> {
        let path = self.out(rel);
        Ok(parse_json(&read_text(&path)?, &path.display().to_string())?)
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), Error> {
        let mut s = serde_json::to_string_pretty(value).expect("artifacts serialize");
        s.push('\n');
        write_text(&self.out(rel), &s)
    }

    fn load_clips(&self, set: &ClipSet) -> Result<Vec<AudioClip>, Error> {
        set.clips.iter().map(|c| read_clip(&self.out(&c.path))).collect()
    }

    fn write_clips(
        &self,
        entry: &str,
        stage: Stage,
        clips: &[(AudioClip, Option<String>)],
    ) -> Result<Vec<ClipRef>, Error> {
        clips
            .iter()
            .enumerate()
            .map(|(k, (clip, speaker))| {
                let path = rel(entry, &format!("{stage}.{k}.wav"));
                write_wav(&self.out(&path), clip, WavFormat::Float32)?;
                Ok(ClipRef {
                    path,
                    speaker_id: speaker.clone(),
                    duration_s: clip.duration_s(),
                })
            })
            .collect()
    }

    fn emit_set(&self, job: &JobSpec, set: &ClipSet) -> Result<StageOutput, Error> {
        let payload_ref = rel(&job.entry_id, &format!("{}.json", job.stage));
        self.write_json(&payload_ref, set)?;
        Ok(StageOutput {
            payload_ref,
            kept: None,
        })
    }

    /// Runs one job.
    pub fn execute(&self, job: &JobSpec) -> Result<StageOutput, Error> {
        let entry = self.entry(&job.entry_id)?;
        let id = job.entry_id.as_str();
        let s = &self.settings;
        match job.stage {
            Stage::Standardize => {
                let raw = read_wav(&self.manifest_dir.join(self.input(job, 0)?))?;
                let clip = standardize(&raw, s.sample_rate)?.with_source_id(id);
                let clips = self.write_clips(id, job.stage, &[(clip, None)])?;
                self.emit_set(
                    job,
                    &ClipSet {
                        entry_id: id.into(),
                        clips,
                        speech: Vec::new(),
                        tags: Vec::new(),
                    },
                )
            }
            Stage::Vad => {
                let input: ClipSet = self.read_json(self.input(job, 0)?)?;
                let clips = self.load_clips(&input)?;
                let mut speech = Vec::new();
                let mut spans = Vec::new();
                for clip in &clips {
                    let segs = detect_speech(clip, &s.vad)?;
                    speech.extend(segs.iter().copied());
                    spans.extend(segs.into_iter().map(|seg| (clip, seg)));
                }
                if spans.is_empty() {
                    return Err(Error::Data(format!("{id}: no speech detected")));
                }
                let packed = coarse_concat(&spans, s.coarse_target_s)?;
                let clips = self.write_clips(
                    id,
                    job.stage,
                    &packed.into_iter().map(|c| (c, None)).collect::<Vec<_>>(),
                )?;
                self.emit_set(
                    job,
                    &ClipSet {
                        entry_id: id.into(),
                        clips,
                        speech,
                        tags: Vec::new(),
                    },
                )
            }
            Stage::SeparateStub => {
                let mut set: ClipSet = self.read_json(self.input(job, 0)?)?;
                set.speech.clear();
                set.tags.push("separated".into());
                self.emit_set(job, &set)
            }
            Stage::DiarizeStub => {
                let mut set: ClipSet = self.read_json(self.input(job, 0)?)?;
                for c in &mut set.clips {
                    c.speaker_id = Some(entry.speaker_id.clone());
                }
                set.tags.push("diarized".into());
                self.emit_set(job, &set)
            }
            Stage::Normalize => {
                let set: ClipSet = self.read_json(self.input(job, 0)?)?;
                let clips = self.load_clips(&set)?;
                let normalized = clips
                    .iter()
                    .zip(&set.clips)
                    .map(|(clip, r)| Ok((normalize_amplitude(clip, s.target_peak_db)?, r.speaker_id.clone())))
                    .collect::<Result<Vec<_>, Error>>()?;
                let clips = self.write_clips(id, job.stage, &normalized)?;
                self.emit_set(job, &ClipSet { clips, ..set })
            }
            Stage::SpeakerConcat => {
                let set: ClipSet = self.read_json(self.input(job, 0)?)?;
                let clips = self.load_clips(&set)?;
                let speaker = entry.speaker_id.as_str();
                let fragments = clips
                    .iter()
                    .map(|c| Ok(Fragment::new(c, Segment::new(0.0, c.duration_s())?, speaker)?))
                    .collect::<Result<Vec<_>, Error>>()?;
                let joined = speaker_concat(&fragments, s.speaker_cap_s)?;
                let out: Vec<_> = joined
                    .into_iter()
                    .map(|sc| (sc.clip, Some(speaker.to_owned())))
                    .collect();
                let clips = self.write_clips(id, job.stage, &out)?;
                self.emit_set(job, &ClipSet { clips, ..set })
            }
            Stage::AsrA | Stage::AsrB => {
                let table = if job.stage == Stage::AsrA { &s.asr_a } else { &s.asr_b };
                let text = table.get(id).cloned().unwrap_or_else(|| entry.text.clone());
                let payload_ref = rel(id, &format!("{}.json", job.stage));
                self.write_json(
                    &payload_ref,
                    &Transcript {
                        entry_id: id.into(),
                        backend: job.stage.to_string(),
                        clips: self.input(job, 0)?.into(),
                        text,
                    },
                )?;
                Ok(StageOutput {
                    payload_ref,
                    kept: None,
                })
            }
            Stage::WerFilter => {
                let a: Transcript = self.read_json(self.input(job, 0)?)?;
                let b: Transcript = self.read_json(self.input(job, 1)?)?;
                let set: ClipSet = self.read_json(&a.clips)?;
                let clip = join_clips(id, &self.load_clips(&set)?)?;
                let backend_a = TableBackend::new(a.backend).with(id, a.text);
                let backend_b = TableBackend::new(b.backend).with(id, b.text);
                let gate = QaGate {
                    threshold: s.qa_threshold,
                    rule: s.qa_rule,
                };
                let verdict = double_check_filter(&entry.text, &clip, [&backend_a, &backend_b], entry.lang, &gate)?;
                let payload_ref = rel(id, "wer_filter.json");
                self.write_json(
                    &payload_ref,
                    &QaRecord {
                        utt_id: id.into(),
                        rates: verdict.rates,
                        kept: verdict.kept,
                        threshold: verdict.threshold,
                    },
                )?;
                Ok(StageOutput {
                    payload_ref,
                    kept: Some(verdict.kept),
                })
            }
            Stage::Punct => {
                let (text, threshold_s) = match &entry.alignment {
                    Some(path) => {
                        let path = self.manifest_dir.join(path);
                        let aligns = parse_alignment(&read_text(&path)?, &path.display().to_string())?;
                        let threshold = threshold_for(&duration_stats(&aligns)?, s.threshold_mode);
                        (
                            optimize_punctuation(&entry.text, &aligns, threshold, entry.lang)?,
                            Some(threshold),
                        )
                    }
                    None => (entry.text.clone(), None),
                };
                let payload_ref = rel(id, "punct.json");
                self.write_json(
                    &payload_ref,
                    &PunctOutput {
                        entry_id: id.into(),
                        text,
                        threshold_s,
                    },
                )?;
                Ok(StageOutput {
                    payload_ref,
                    kept: None,
                })
            }
            Stage::FeatureStub => {
                let punct: PunctOutput = self.read_json(self.input(job, 0)?)?;
                let set: ClipSet = self.read_json(&rel(id, "speaker_concat.json"))?;
                let duration: f64 = set.clips.iter().map(|c| c.duration_s).sum();
                let speech_tokens = speech_token_count(duration)?;
                let text_tokens = text_normalize(&punct.text, entry.lang).len();
                let verdict = ratio_check(text_tokens, speech_tokens, &RatioBounds::default())?;
                let payload_ref = rel(id, "feature_stub.json");
                self.write_json(
                    &payload_ref,
                    &FeatureRecord {
                        entry_id: id.into(),
                        text: punct.text,
                        speech_tokens,
                        text_tokens,
                        ratio: verdict.ratio,
                        ratio_ok: verdict.accepted,
                    },
                )?;
                Ok(StageOutput {
                    payload_ref,
                    kept: None,
                })
            }
        }
    }
}

/// Concatenates an entry's clips end to end for utterance-level checks.
fn join_clips(id: &str, clips: &[AudioClip]) -> Result<AudioClip, Error> {
    let rate = clips
        .first()
        .map(AudioClip::sample_rate)
        .ok_or_else(|| Error::Data(format!("{id}: no audio")))?;
    let samples = clips.iter().flat_map(|c| c.samples().iter().copied()).collect();
    Ok(AudioClip::new(samples, rate, id)?)
}

/// Resolves a payload ref against the output directory.
pub fn artifact_path(out_dir: &Path, payload_ref: &str) -> PathBuf {
    out_dir.join(payload_ref)
}
