//! WAV input and output.

use std::path::Path;

use dataforge_core::audio::{AudioClip, RawAudio};

use crate::Error;

/// On-disk sample encoding for written clips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    /// 32-bit IEEE float; round-trips every clip sample exactly.
    #[default]
    Float32,
}

pub fn read_wav(path: &Path) -> Result<RawAudio, Error> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(RawAudio {
        channels: spec.channels,
        sample_rate: spec.sample_rate,
        interleaved,
        source_id,
    })
}

/// Reads a WAV file and checks it is already mono.
pub fn read_clip(path: &Path) -> Result<AudioClip, Error> {
    let raw = read_wav(path)?;
    if raw.channels != 1 {
        return Err(Error::Data(format!(
            "{}: expected mono audio, found {} channels",
            path.display(),
            raw.channels
        )));
    }
    let samples = raw.interleaved.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    Ok(AudioClip::new(samples, raw.sample_rate, raw.source_id)?)
}

pub fn write_wav(path: &Path, clip: &AudioClip, format: WavFormat) -> Result<(), Error> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = match format {
        WavFormat::Pcm16 => hound::WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate(),
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        },
        WavFormat::Float32 => hound::WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate(),
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        },
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in clip.samples() {
        match format {
            WavFormat::Pcm16 => w.write_sample((s * 32767.0).round() as i16),
            WavFormat::Float32 => w.write_sample(s as f32),
        }
        .map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

/// Writes interleaved 16-bit PCM with any channel count.
pub fn write_raw_pcm16(path: &Path, raw: &RawAudio) -> Result<(), Error> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: raw.channels,
        sample_rate: raw.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &raw.interleaved {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)
            .map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}
