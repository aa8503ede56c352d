//! Objective speech quality and intelligibility measures.

mod loizou;
mod pesq;
mod stoi;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use loizou::{llr, lpc, segmental_snr, wss, FrameMeasure, SEGSNR_CEIL_DB, SEGSNR_FLOOR_DB, SILENT_ENERGY};
pub use pesq::{PesqAdapter, DEFAULT_PATTERN};
pub use stoi::stoi;

use crate::data::read_wav;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::{fsutil, threads};

/// Fraction of lowest-distortion frames kept by LLR and WSS.
pub const DEFAULT_RETENTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    pub retention: f64,
    /// Command template with `{clean}` and `{degraded}` placeholders.
    pub pesq_command: Option<String>,
    /// Regex whose first capture group is the score.
    pub pesq_pattern: Option<String>,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            retention: DEFAULT_RETENTION,
            pesq_command: None,
            pesq_pattern: None,
        }
    }
}

impl MetricOptions {
    pub fn adapter(&self) -> Result<PesqAdapter> {
        PesqAdapter::new(self.pesq_command.as_deref(), self.pesq_pattern.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composite {
    pub csig: f64,
    pub cbak: f64,
    pub covl: f64,
}

/// Hu and Loizou's regression composites, each clamped to `[1, 5]`.
pub fn composite_scores(pesq: f64, llr: f64, wss: f64, segsnr: f64) -> Composite {
    let c = |v: f64| v.clamp(1.0, 5.0);
    Composite {
        csig: c(3.093 - 1.029 * llr + 0.603 * pesq - 0.009 * wss),
        cbak: c(1.634 + 0.478 * pesq - 0.007 * wss + 0.063 * segsnr),
        covl: c(1.594 + 0.805 * pesq - 0.512 * llr - 0.007 * wss),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub stoi: f64,
    pub segsnr: f64,
    pub llr: f64,
    pub wss: f64,
    pub pesq: Option<f64>,
    pub csig: Option<f64>,
    pub cbak: Option<f64>,
    pub covl: Option<f64>,
}

impl Scores {
    fn with_pesq(mut self, pesq: f64) -> Self {
        let c = composite_scores(pesq, self.llr, self.wss, self.segsnr);
        self.pesq = Some(pesq);
        self.csig = Some(c.csig);
        self.cbak = Some(c.cbak);
        self.covl = Some(c.covl);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScores {
    #[serde(flatten)]
    pub scores: Scores,
    /// LLR frames dropped as silent or unstable.
    pub llr_frames_skipped: usize,
}

/// Everything except PESQ and the composites.
pub fn score_pair(clean: &Waveform, degraded: &Waveform, opts: &MetricOptions) -> Result<UtteranceScores> {
    let l = llr(clean, degraded, opts.retention)?;
    Ok(UtteranceScores {
        scores: Scores {
            stoi: stoi(clean, degraded)?,
            segsnr: segmental_snr(clean, degraded)?,
            llr: l.value,
            wss: wss(clean, degraded, opts.retention)?.value,
            pesq: None,
            csig: None,
            cbak: None,
            covl: None,
        },
        llr_frames_skipped: l.frames_skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_utterance: BTreeMap<String, UtteranceScores>,
    pub means: Scores,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn mean_opt<'a>(items: impl Iterator<Item = &'a Scores> + Clone, f: fn(&Scores) -> Option<f64>) -> Option<f64> {
    let vals: Option<Vec<f64>> = items.map(f).collect();
    vals.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

impl ScoreReport {
    pub fn from_scores(per_utterance: BTreeMap<String, UtteranceScores>) -> Result<Self> {
        if per_utterance.is_empty() {
            return Err(Error::InvalidInput("no utterances to score".into()));
        }
        let s = || per_utterance.values().map(|u| &u.scores);
        let means = Scores {
            stoi: mean(s().map(|x| x.stoi)),
            segsnr: mean(s().map(|x| x.segsnr)),
            llr: mean(s().map(|x| x.llr)),
            wss: mean(s().map(|x| x.wss)),
            pesq: mean_opt(s(), |x| x.pesq),
            csig: mean_opt(s(), |x| x.csig),
            cbak: mean_opt(s(), |x| x.cbak),
            covl: mean_opt(s(), |x| x.covl),
        };
        Ok(Self { per_utterance, means })
    }

    /// Header `utterance,stoi,segsnr,llr,wss,pesq,csig,cbak,covl`; missing values are empty.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["utterance", "stoi", "segsnr", "llr", "wss", "pesq", "csig", "cbak", "covl"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (id, u) in &self.per_utterance {
            let s = &u.scores;
            w.write_record([
                id.clone(),
                s.stoi.to_string(),
                s.segsnr.to_string(),
                s.llr.to_string(),
                s.wss.to_string(),
                opt(s.pesq),
                opt(s.csig),
                opt(s.cbak),
                opt(s.covl),
            ])?;
        }
        w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
    }

    pub fn write(&self, csv_path: &Path, means_json: &Path) -> Result<()> {
        fsutil::write_atomic(csv_path, &self.to_csv()?)?;
        fsutil::write_json(means_json, &self.means)
    }
}

/// One utterance to score from files.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub clean: PathBuf,
    pub degraded: PathBuf,
}

/// Score in-memory pairs in parallel.
pub fn evaluate_waveforms(items: &[(String, Waveform, Waveform)], opts: &MetricOptions) -> Result<ScoreReport> {
    let scored = threads::install(|| {
        items
            .par_iter()
            .map(|(id, c, d)| score_pair(c, d, opts).map(|s| (id.clone(), s)))
            .collect::<Result<Vec<_>>>()
    })?;
    ScoreReport::from_scores(scored.into_iter().collect())
}

/// Score file pairs in parallel. PESQ and the composites are filled in only
/// when the adapter is configured and its tool is present.
pub fn evaluate_files(items: &[EvalItem], opts: &MetricOptions, adapter: &PesqAdapter) -> Result<ScoreReport> {
    let scored = threads::install(|| {
        items
            .par_iter()
            .map(|it| {
                let clean = read_wav(&it.clean)?;
                let degraded = read_wav(&it.degraded)?;
                let mut s = score_pair(&clean, &degraded, opts)?;
                match adapter.score(&it.clean, &it.degraded) {
                    Ok(p) => s.scores = s.scores.with_pesq(p),
                    Err(Error::PesqUnavailable(_)) => {}
                    Err(e) => return Err(e),
                }
                Ok((it.id.clone(), s))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    ScoreReport::from_scores(scored.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_hand_values() {
        let c = composite_scores(4.5, 0.0, 0.0, 35.0);
        assert_eq!(c.csig, 5.0);
        let c = composite_scores(0.0, 0.0, 0.0, 0.0);
        assert!((c.cbak - 1.634).abs() < 1e-12);
        assert!((c.covl - 1.594).abs() < 1e-12);
        // raw csig before the clamp: 3.093 + 0.603 * 4.5
        assert!((3.093f64 + 0.603 * 4.5 - 5.8065).abs() < 1e-12);
    }

    #[test]
    fn csv_leaves_missing_pesq_blank() {
        let s = UtteranceScores {
            scores: Scores {
                stoi: 0.9,
                segsnr: 3.0,
                llr: 0.5,
                wss: 20.0,
                pesq: None,
                csig: None,
                cbak: None,
                covl: None,
            },
            llr_frames_skipped: 0,
        };
        let r = ScoreReport::from_scores([("a".to_string(), s)].into()).unwrap();
        let text = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert_eq!(text, "utterance,stoi,segsnr,llr,wss,pesq,csig,cbak,covl\na,0.9,3,0.5,20,,,,\n");
        assert_eq!(r.means.pesq, None);
    }
}
