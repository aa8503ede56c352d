//! Clean/noisy corpora: WAV I/O, mixing, cropping and splitting.
//!
//! On disk a corpus is two parallel directories `clean/` and `noisy/` holding
//! WAV files with identical names, plus an optional `manifest.json`.

mod synth;
mod wav;

pub use synth::{babble_noise, noise, speech_like, white_noise, NoiseKind};
pub use wav::{encode_wav, read_wav, write_wav, WavEncoding};

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, Waveform};
use crate::error::{ensure, Error, Result};
use crate::fsutil;

/// Training crop length: 128 frames at a 160-sample hop.
pub const CROP_SAMPLES: usize = 20480;

#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePair {
    pub id: String,
    pub clean: Waveform,
    pub noisy: Waveform,
    pub snr_db: Option<f64>,
}

impl UtterancePair {
    pub fn new(id: impl Into<String>, clean: Waveform, noisy: Waveform) -> Result<Self> {
        let id = id.into();
        ensure!(
            clean.len() == noisy.len() && clean.sample_rate() == noisy.sample_rate(),
            InvalidInput,
            "pair `{id}`: clean is {} samples at {} Hz, noisy {} at {} Hz",
            clean.len(),
            clean.sample_rate(),
            noisy.len(),
            noisy.sample_rate()
        );
        Ok(Self {
            id,
            clean,
            noisy,
            snr_db: None,
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub noisy: Waveform,
    pub clean: Waveform,
    pub offset: usize,
}

/// Same-offset crop of both members; shorter pairs are zero-padded at the tail.
pub fn crop_pair(pair: &UtterancePair, crop_samples: usize, rng: &mut impl Rng) -> Crop {
    let slack = pair.len().saturating_sub(crop_samples);
    let offset = if slack == 0 { 0 } else { rng.gen_range(0..=slack) };
    Crop {
        noisy: pair.noisy.segment(offset, crop_samples),
        clean: pair.clean.segment(offset, crop_samples),
        offset,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub seed: u64,
}

/// Seeded shuffle, then the first `max(1, round(val_fraction * N))` ids go to validation.
pub fn split(ids: &[String], val_fraction: f64, seed: u64) -> Result<SplitPlan> {
    ensure!(ids.len() >= 2, InvalidInput, "need at least 2 utterances to split, got {}", ids.len());
    ensure!(
        val_fraction > 0.0 && val_fraction < 1.0,
        InvalidInput,
        "val_fraction must be in (0, 1), got {val_fraction}"
    );
    let unique: HashSet<&String> = ids.iter().collect();
    ensure!(unique.len() == ids.len(), InvalidInput, "utterance ids are not unique");
    let mut order = ids.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((val_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let train_ids = order.split_off(n_val);
    Ok(SplitPlan {
        train_ids,
        val_ids: order,
        seed,
    })
}

/// Mix each clean utterance with a random segment of a noise. Utterance `i`
/// gets `snrs[i % S]` and noise `(i / S) % N`, so consecutive runs cover every
/// SNR and noise combination. Noises shorter than the utterance are looped.
pub fn synth_pairs(
    cleans: &[(String, Waveform)],
    noises: &[Waveform],
    snrs: &[f64],
    seed: u64,
) -> Result<Vec<UtterancePair>> {
    ensure!(!cleans.is_empty() && !noises.is_empty(), InvalidInput, "no clean or noise sources");
    ensure!(!snrs.is_empty(), InvalidInput, "no SNR levels given");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cleans.len());
    for (i, (id, clean)) in cleans.iter().enumerate() {
        let noise = &noises[(i / snrs.len()) % noises.len()];
        if noise.sample_rate() != clean.sample_rate() {
            return Err(Error::Format(format!(
                "`{id}` is {} Hz but the noise is {} Hz",
                clean.sample_rate(),
                noise.sample_rate()
            )));
        }
        let offset = rng.gen_range(0..noise.len());
        let looped: Vec<f64> = (0..clean.len())
            .map(|i| noise.samples()[(offset + i) % noise.len()])
            .collect();
        let segment = Waveform::new(looped, noise.sample_rate())?;
        let snr = snrs[i % snrs.len()];
        let mix = dsp::mix_at_snr(clean, &segment, snr)?;
        let mut pair = UtterancePair::new(id.clone(), clean.clone(), mix.noisy)?;
        pair.snr_db = Some(snr);
        out.push(pair);
    }
    Ok(out)
}

/// `*.wav` files in `dir`, sorted by name.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

/// Directory form of [`synth_pairs`]: every WAV in `clean_dir` against the WAVs in `noise_dir`.
pub fn synth_corpus(clean_dir: &Path, noise_dir: &Path, snrs: &[f64], seed: u64) -> Result<Vec<UtterancePair>> {
    let cleans = wav_files(clean_dir)?
        .iter()
        .map(|p| Ok((stem(p), read_wav(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let noises = wav_files(noise_dir)?.iter().map(|p| read_wav(p)).collect::<Result<Vec<_>>>()?;
    ensure!(!cleans.is_empty(), InvalidInput, "no WAV files in {}", clean_dir.display());
    ensure!(!noises.is_empty(), InvalidInput, "no WAV files in {}", noise_dir.display());
    synth_pairs(&cleans, &noises, snrs, seed)
}

/// In-memory corpus of `n` speech-like utterances of `len` samples at 16 kHz,
/// with white and babble-like noise at the SNRs in `snrs` (see [`synth_pairs`]).
pub fn toy_corpus(n: usize, len: usize, snrs: &[f64], seed: u64) -> Result<Vec<UtterancePair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = dsp::WORKING_RATE;
    let cleans: Vec<(String, Waveform)> = (0..n)
        .map(|i| (format!("utt{i:04}"), speech_like(len, fs, &mut rng)))
        .collect();
    let noises = [NoiseKind::White, NoiseKind::Babble]
        .iter()
        .map(|&k| noise(k, 4 * len, fs, &mut rng))
        .collect::<Vec<_>>();
    synth_pairs(&cleans, &noises, snrs, rng.gen())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clean_path: PathBuf,
    pub noisy_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

pub type Manifest = BTreeMap<String, ManifestEntry>;

/// Write `clean/<id>.wav`, `noisy/<id>.wav` and `manifest.json` (paths relative to `dir`).
pub fn write_corpus(pairs: &[UtterancePair], dir: &Path) -> Result<Manifest> {
    let mut manifest = Manifest::new();
    for p in pairs {
        let clean_path = PathBuf::from("clean").join(format!("{}.wav", p.id));
        let noisy_path = PathBuf::from("noisy").join(format!("{}.wav", p.id));
        write_wav(&p.clean, &dir.join(&clean_path), WavEncoding::Float32)?;
        write_wav(&p.noisy, &dir.join(&noisy_path), WavEncoding::Float32)?;
        let prev = manifest.insert(
            p.id.clone(),
            ManifestEntry {
                clean_path,
                noisy_path,
                snr_db: p.snr_db,
            },
        );
        ensure!(prev.is_none(), InvalidInput, "duplicate utterance id `{}`", p.id);
    }
    fsutil::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Load a corpus from `manifest.json` if present, else by pairing `clean/` and `noisy/` by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<UtterancePair>> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = if manifest_path.exists() {
        fsutil::read_json(&manifest_path)?
    } else {
        let mut m = Manifest::new();
        for clean in wav_files(&dir.join("clean"))? {
            let name = clean.file_name().expect("listed file").to_owned();
            let noisy = PathBuf::from("noisy").join(&name);
            if !dir.join(&noisy).exists() {
                return Err(Error::InvalidInput(format!(
                    "{} has no noisy counterpart",
                    clean.display()
                )));
            }
            m.insert(
                stem(&clean),
                ManifestEntry {
                    clean_path: PathBuf::from("clean").join(&name),
                    noisy_path: noisy,
                    snr_db: None,
                },
            );
        }
        m
    };
    ensure!(!manifest.is_empty(), InvalidInput, "empty corpus at {}", dir.display());
    manifest
        .into_iter()
        .map(|(id, e)| {
            let clean = read_wav(&dir.join(&e.clean_path))?;
            let noisy = read_wav(&dir.join(&e.noisy_path))?;
            let mut pair = UtterancePair::new(id, clean, noisy)?;
            pair.snr_db = e.snr_db;
            Ok(pair)
        })
        .collect()
}
