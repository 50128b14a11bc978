//! Audio standardization, energy-based speech detection and the two packing
//! policies used before and after diarization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Default coarse packing target: roughly ten minutes of speech.
pub const COARSE_TARGET_S: f64 = 600.0;
/// Default per-speaker clip cap.
pub const SPEAKER_CAP_S: f64 = 40.0;
/// Default peak level for amplitude normalization.
pub const TARGET_PEAK_DB: f64 = -3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AudioError {
    #[error("audio has no samples")]
    EmptyAudio,
    #[error("non-finite sample at index {index}")]
    CorruptAudio { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("invalid segment [{start_s}, {end_s})")]
    InvalidSegment { start_s: f64, end_s: f64 },
    #[error("segment [{start_s}, {end_s}) exceeds clip duration {duration_s}")]
    SegmentOutOfBounds { start_s: f64, end_s: f64, duration_s: f64 },
    #[error("fragment speaker `{found}` differs from `{expected}`")]
    SpeakerMismatch { expected: String, found: String },
    #[error("sample rate {found} differs from {expected}")]
    RateMismatch { expected: u32, found: u32 },
}

/// Undecoded multi-channel audio as read from a container.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAudio {
    pub channels: u16,
    pub sample_rate: u32,
    /// Frame-interleaved samples.
    pub interleaved: Vec<f64>,
    pub source_id: String,
}

/// Mono audio with every sample in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidParameter("sample rate must be positive"));
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::CorruptAudio { index });
        }
        if samples.iter().any(|s| s.abs() > 1.0) {
            return Err(AudioError::InvalidParameter("samples must lie in [-1, 1]"));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    /// Sample index range covered by `segment`, clamped to the clip.
    pub fn sample_range(&self, segment: &Segment) -> core::ops::Range<usize> {
        let rate = self.sample_rate as f64;
        let n = self.samples.len();
        let start = (libm::round(segment.start_s * rate) as usize).min(n);
        let end = (libm::round(segment.end_s * rate) as usize).clamp(start, n);
        start..end
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// A time-bounded span of a clip, `0 <= start_s < end_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self, AudioError> {
        if !(start_s.is_finite() && end_s.is_finite() && start_s >= 0.0 && start_s < end_s) {
            return Err(AudioError::InvalidSegment { start_s, end_s });
        }
        Ok(Self { start_s, end_s })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// A segment attributed to one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment<'a> {
    clip: &'a AudioClip,
    segment: Segment,
    speaker_id: String,
}

impl<'a> Fragment<'a> {
    pub fn new(clip: &'a AudioClip, segment: Segment, speaker_id: impl Into<String>) -> Result<Self, AudioError> {
        let speaker_id = speaker_id.into();
        if speaker_id.is_empty() {
            return Err(AudioError::InvalidParameter("speaker id must be non-empty"));
        }
        check_within(clip, &segment)?;
        Ok(Self {
            clip,
            segment,
            speaker_id,
        })
    }

    pub fn clip(&self) -> &'a AudioClip {
        self.clip
    }

    pub fn segment(&self) -> Segment {
        self.segment
    }

    pub fn speaker_id(&self) -> &str {
        &self.speaker_id
    }

    fn samples(&self) -> &'a [f64] {
        &self.clip.samples[self.clip.sample_range(&self.segment)]
    }
}

fn check_within(clip: &AudioClip, segment: &Segment) -> Result<(), AudioError> {
    let duration_s = clip.duration_s();
    // Half a sample of slack absorbs the rounding of segment boundaries.
    if segment.end_s > duration_s + 0.5 / clip.sample_rate as f64 {
        return Err(AudioError::SegmentOutOfBounds {
            start_s: segment.start_s,
            end_s: segment.end_s,
            duration_s,
        });
    }
    Ok(())
}

/// Downmix to mono, resample linearly to `target_rate` and clamp to `[-1, 1]`.
pub fn standardize(raw: &RawAudio, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 || raw.sample_rate == 0 {
        return Err(AudioError::InvalidParameter("sample rates must be positive"));
    }
    if raw.channels == 0 {
        return Err(AudioError::InvalidParameter("channel count must be positive"));
    }
    let channels = raw.channels as usize;
    if raw.interleaved.len() < channels {
        return Err(AudioError::EmptyAudio);
    }
    if let Some(index) = raw.interleaved.iter().position(|s| !s.is_finite()) {
        return Err(AudioError::CorruptAudio { index });
    }
    let mono: Vec<f64> = raw
        .interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let samples = resample_linear(&mono, raw.sample_rate, target_rate)
        .into_iter()
        .map(|s| s.clamp(-1.0, 1.0))
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: target_rate,
        source_id: raw.source_id.clone(),
    })
}

/// Linear interpolation onto the `to` grid; positions past the last input
/// sample hold its value. Output length is `round(n * to / from)`.
pub fn resample_linear(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let n = samples.len() as u64;
    let (from, to) = (from as u64, to as u64);
    let out_len = ((n * to + from / 2) / from).max(1);
    (0..out_len)
        .map(|j| {
            let num = j * from;
            let i = (num / to) as usize;
            if i + 1 >= samples.len() {
                return samples[samples.len() - 1];
            }
            let frac = (num % to) as f64 / to as f64;
            samples[i] + (samples[i + 1] - samples[i]) * frac
        })
        .collect()
}

/// Energy VAD settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadParams {
    pub frame_ms: f64,
    /// Frames whose RMS reaches this level count as speech.
    pub energy_threshold: f64,
    /// Silence shorter than this between speech runs is bridged.
    pub min_gap_ms: f64,
}

impl Default for VadParams {
    fn default() -> Self {
        Self {
            frame_ms: 20.0,
            energy_threshold: 0.01,
            min_gap_ms: 200.0,
        }
    }
}

/// Sorted, disjoint speech segments found by frame RMS.
pub fn detect_speech(clip: &AudioClip, params: &VadParams) -> Result<Vec<Segment>, AudioError> {
    if !(params.frame_ms > 0.0 && params.frame_ms.is_finite()) {
        return Err(AudioError::InvalidParameter("frame_ms must be positive"));
    }
    if !(params.energy_threshold > 0.0 && params.energy_threshold.is_finite()) {
        return Err(AudioError::InvalidParameter("energy threshold must be positive"));
    }
    if !(params.min_gap_ms >= 0.0) {
        return Err(AudioError::InvalidParameter("min_gap_ms must be non-negative"));
    }
    let rate = clip.sample_rate as f64;
    let frame_len = (libm::round(params.frame_ms * rate / 1000.0) as usize).max(1);
    let min_gap = libm::round(params.min_gap_ms * rate / 1000.0) as usize;

    // Speech runs as half-open sample ranges.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (k, frame) in clip.samples.chunks(frame_len).enumerate() {
        let energy = frame.iter().map(|s| s * s).sum::<f64>() / frame.len() as f64;
        if libm::sqrt(energy) < params.energy_threshold {
            continue;
        }
        let start = k * frame_len;
        let end = start + frame.len();
        match runs.last_mut() {
            Some(last) if start - last.1 < min_gap || start == last.1 => last.1 = end,
            _ => runs.push((start, end)),
        }
    }
    Ok(runs
        .into_iter()
        .map(|(s, e)| Segment {
            start_s: s as f64 / rate,
            end_s: e as f64 / rate,
        })
        .collect())
}

/// Pack segments in input order into clips of at least `target_s`; a group
/// closes as soon as its duration reaches the target, the last one may be
/// shorter.
pub fn coarse_concat(segments: &[(&AudioClip, Segment)], target_s: f64) -> Result<Vec<AudioClip>, AudioError> {
    if !(target_s > 0.0) {
        return Err(AudioError::InvalidParameter("target_s must be positive"));
    }
    let Some((first, _)) = segments.first() else {
        return Ok(Vec::new());
    };
    let rate = first.sample_rate;
    let mut out = Vec::new();
    let mut open: Vec<f64> = Vec::new();
    for (clip, segment) in segments {
        if clip.sample_rate != rate {
            return Err(AudioError::RateMismatch {
                expected: rate,
                found: clip.sample_rate,
            });
        }
        check_within(clip, segment)?;
        open.extend_from_slice(&clip.samples[clip.sample_range(segment)]);
        if open.len() as f64 / rate as f64 >= target_s {
            let id = format!("{}#c{}", first.source_id, out.len());
            out.push(AudioClip {
                samples: core::mem::take(&mut open),
                sample_rate: rate,
                source_id: id,
            });
        }
    }
    if !open.is_empty() {
        let id = format!("{}#c{}", first.source_id, out.len());
        out.push(AudioClip {
            samples: open,
            sample_rate: rate,
            source_id: id,
        });
    }
    Ok(out)
}

/// Scale so the peak magnitude equals `10^(target_peak_db / 20)`.
/// Silent clips come back unchanged.
pub fn normalize_amplitude(clip: &AudioClip, target_peak_db: f64) -> Result<AudioClip, AudioError> {
    if !(target_peak_db <= 0.0) {
        return Err(AudioError::InvalidParameter("target peak must be at most 0 dBFS"));
    }
    let peak = clip.peak();
    if peak == 0.0 {
        return Ok(clip.clone());
    }
    let factor = db_to_amplitude(target_peak_db) / peak;
    Ok(AudioClip {
        samples: clip.samples.iter().map(|s| (s * factor).clamp(-1.0, 1.0)).collect(),
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    })
}

pub fn db_to_amplitude(db: f64) -> f64 {
    libm::pow(10.0, db / 20.0)
}

/// One output of [`speaker_concat`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerClip {
    pub clip: AudioClip,
    /// A single fragment longer than the cap, emitted whole.
    pub oversize: bool,
    pub fragment_count: usize,
}

/// Concatenate one speaker's fragments in order; a fragment joins the open
/// clip only if the result stays within `cap_s`.
pub fn speaker_concat(fragments: &[Fragment<'_>], cap_s: f64) -> Result<Vec<SpeakerClip>, AudioError> {
    if !(cap_s > 0.0) {
        return Err(AudioError::InvalidParameter("cap_s must be positive"));
    }
    let Some(first) = fragments.first() else {
        return Ok(Vec::new());
    };
    let speaker = first.speaker_id.as_str();
    let rate = first.clip.sample_rate;
    for f in fragments {
        if f.speaker_id != speaker {
            return Err(AudioError::SpeakerMismatch {
                expected: speaker.into(),
                found: f.speaker_id.clone(),
            });
        }
        if f.clip.sample_rate != rate {
            return Err(AudioError::RateMismatch {
                expected: rate,
                found: f.clip.sample_rate,
            });
        }
    }

    let seconds = |n: usize| n as f64 / rate as f64;
    let mut out: Vec<SpeakerClip> = Vec::new();
    let mut open: Vec<f64> = Vec::new();
    let mut count = 0usize;
    let close = |out: &mut Vec<SpeakerClip>, samples: Vec<f64>, count: usize| {
        let oversize = seconds(samples.len()) > cap_s;
        out.push(SpeakerClip {
            clip: AudioClip {
                samples,
                sample_rate: rate,
                source_id: format!("{speaker}#{}", out.len()),
            },
            oversize,
            fragment_count: count,
        });
    };
    for f in fragments {
        let piece = f.samples();
        if count > 0 && seconds(open.len() + piece.len()) > cap_s {
            close(&mut out, core::mem::take(&mut open), count);
            count = 0;
        }
        open.extend_from_slice(piece);
        count += 1;
    }
    if count > 0 {
        close(&mut out, open, count);
    }
    Ok(out)
}
