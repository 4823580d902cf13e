//! `separate` and `evaluate`.

use std::fs;
use std::path::{Path, PathBuf};

use arraysep::metrics::{default_epsilon, format_table, lsd, snr, MetricReport};
use arraysep::pipeline::{separate, Variant};
use arraysep::simulate::mix;
use arraysep::stft::StftConfig;

use crate::config::{RunConfig, WavFormat};
use crate::error::{CliError, Result};
use crate::spectrogram::Spectrogram;
use crate::wav;

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub report: MetricReport,
    pub real_time_factor: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub runs: Vec<VariantRun>,
    /// Lines worth showing on stderr, such as PCM clipping.
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn table(&self) -> String {
        let reports: Vec<MetricReport> = self.runs.iter().map(|r| r.report.clone()).collect();
        format_table(&reports)
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Renders the scene, runs every requested variant, and writes
///
/// ```text
///   out/mixture.wav              N-channel microphone signals
///   out/reference/<source>.wav   dry references used for scoring
///   out/<variant>/<source>.wav   separated outputs
///   out/metrics.csv, out/report.txt
///   out/spectrograms/*.txt       with spectrogram dumps enabled
/// ```
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let mixture = mix(&cfg.scenario)?;
    let rate = cfg.scenario.scene.sample_rate as u32;
    let out = &cfg.out_dir;
    let spec_dir = out.join("spectrograms");
    create_dir(&out.join("reference"))?;
    if cfg.spectrograms {
        create_dir(&spec_dir)?;
    }
    let mut warnings = Vec::new();
    let mut put = |path: PathBuf, channels: &[Vec<f64>]| -> Result<()> {
        let clipped = wav::write(&path, rate, channels, cfg.wav_format)?;
        if clipped > 0 && cfg.wav_format == WavFormat::Pcm16 {
            warnings.push(format!("{}: {clipped} samples clipped", path.display()));
        }
        Ok(())
    };
    let stft = cfg.separator.stft;
    let dump = |name: String, signal: &[f64]| -> Result<()> {
        if cfg.spectrograms {
            Spectrogram::compute(signal, stft)?.write(&spec_dir.join(format!("{name}.txt")))?;
        }
        Ok(())
    };

    put(out.join("mixture.wav"), &mixture.mics)?;
    dump("mic0".into(), &mixture.mics[0])?;
    for (name, r) in cfg.source_names.iter().zip(&mixture.references) {
        put(out.join("reference").join(format!("{name}.wav")), std::slice::from_ref(r))?;
        dump(format!("reference_{name}"), r)?;
    }

    let mut runs = Vec::new();
    let mut csv = String::from(MetricReport::csv_header());
    csv.push('\n');
    for &variant in &cfg.variants {
        let result = separate(&mixture.mics, &cfg.separator, variant, &cfg.events)?;
        let dir = out.join(variant.to_string());
        create_dir(&dir)?;
        let mut estimates = Vec::with_capacity(cfg.source_names.len());
        for name in &cfg.source_names {
            let est = result
                .sources
                .iter()
                .find(|(id, _)| id.0 == *name)
                .map(|(_, s)| s.clone())
                .unwrap_or_else(|| vec![0.0; mixture.mics[0].len()]);
            put(dir.join(format!("{name}.wav")), std::slice::from_ref(&est))?;
            dump(format!("{variant}_{name}"), &est)?;
            estimates.push(est);
        }
        let report = MetricReport::compute(variant, cfg.source_names.clone(), &mixture.references, &estimates, stft)?;
        csv.push_str(&report.csv_rows());
        runs.push(VariantRun {
            report,
            real_time_factor: result.real_time_factor,
        });
    }
    let summary = RunSummary { runs, warnings };
    write_text(&out.join("metrics.csv"), &csv)?;
    write_text(&out.join("report.txt"), &summary.table())?;
    Ok(summary)
}

/// SNR and LSD of `estimate` against `reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub snr_db: f64,
    pub lsd_db: f64,
}

/// Scores the first channel of each file. The estimate is truncated or
/// zero-padded to the reference length.
pub fn evaluate(reference: &Path, estimate: &Path, frame_size: usize, hop_size: usize) -> Result<Evaluation> {
    let r = wav::read(reference)?;
    let e = wav::read(estimate)?;
    if r.sample_rate != e.sample_rate {
        return Err(CliError::Config(format!(
            "sample rates differ: {} Hz vs {} Hz",
            r.sample_rate, e.sample_rate
        )));
    }
    let (Some(r_sig), Some(mut e_sig)) = (r.channels.into_iter().next(), e.channels.into_iter().next()) else {
        return Err(CliError::Config("empty WAV file".into()));
    };
    e_sig.resize(r_sig.len(), 0.0);
    let cfg = StftConfig::new(frame_size, hop_size, r.sample_rate as f64, StftConfig::default().window)?;
    Ok(Evaluation {
        snr_db: snr(&r_sig, &e_sig)?,
        lsd_db: lsd(&r_sig, &e_sig, cfg, default_epsilon(&r_sig, cfg)?)?,
    })
}

/// Variant names in table order, for help text.
pub fn variant_names() -> String {
    let mut names: Vec<String> = Variant::ALL.iter().map(Variant::to_string).collect();
    names.push("all".into());
    names.join(" | ")
}
