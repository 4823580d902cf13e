//! Objective scores: aligned SNR and log-spectral distortion.

use std::fmt;

use crate::error::{validation_err, Result};
use crate::fftconv;
use crate::pipeline::Variant;
use crate::stft::{analyze_mono, StftConfig};

/// Reported instead of +∞ when the estimate matches the reference exactly.
pub const SNR_CAP_DB: f64 = 99.0;

/// Relative ε used by [`default_epsilon`].
pub const EPSILON_FRACTION: f64 = 1e-4;

/// Integer delay and scalar gain mapping an estimate onto its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// `estimate[n + lag]` lines up with `reference[n]`.
    pub lag: isize,
    pub gain: f64,
}

fn shifted(estimate: &[f64], lag: isize) -> Vec<f64> {
    let len = estimate.len() as isize;
    (0..len)
        .map(|n| {
            let i = n + lag;
            if i >= 0 && i < len {
                estimate[i as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Lag at the cross-correlation magnitude peak, then the least-squares gain.
pub fn align(reference: &[f64], estimate: &[f64]) -> Alignment {
    let r = fftconv::cross_correlate(estimate, reference);
    let zero = reference.len() as isize - 1;
    let mut best = (0isize, 0.0f64);
    for (idx, v) in r.iter().enumerate() {
        let lag = idx as isize - zero;
        // Ties go to the smallest |lag|.
        if v.abs() > best.1 || (v.abs() == best.1 && lag.abs() < best.0.abs()) {
            best = (lag, v.abs());
        }
    }
    let lag = best.0;
    let est = shifted(estimate, lag);
    let cross: f64 = reference.iter().zip(&est).map(|(s, e)| s * e).sum();
    let energy: f64 = est.iter().map(|e| e * e).sum();
    let gain = if energy > 0.0 { cross / energy } else { 0.0 };
    Alignment { lag, gain }
}

/// `10 log10(Σ s² / Σ (s − g ŝ_d)²)` after [`align`], capped at [`SNR_CAP_DB`].
pub fn snr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return validation_err(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        ));
    }
    let signal: f64 = reference.iter().map(|s| s * s).sum();
    if !(signal > 0.0) {
        return validation_err("reference signal is identically zero");
    }
    let a = align(reference, estimate);
    let est = shifted(estimate, a.lag);
    let error: f64 = reference
        .iter()
        .zip(&est)
        .map(|(s, e)| (s - a.gain * e).powi(2))
        .sum();
    if error <= signal * 10f64.powf(-SNR_CAP_DB / 10.0) {
        return Ok(SNR_CAP_DB);
    }
    Ok(10.0 * (signal / error).log10())
}

/// `EPSILON_FRACTION` × the mean per-bin power of the reference spectrogram.
pub fn default_epsilon(reference: &[f64], cfg: StftConfig) -> Result<f64> {
    let frames = analyze_mono(reference, cfg)?;
    let count = frames.len() * cfg.num_bins();
    let total: f64 = frames.iter().flatten().map(|c| c.norm_sqr()).sum();
    let mean = if count > 0 { total / count as f64 } else { 0.0 };
    Ok((EPSILON_FRACTION * mean).max(f64::MIN_POSITIVE))
}

/// Frame-averaged RMS over bins of `10 log10((|S|² + ε) / (|Ŝ|² + ε))`.
pub fn lsd(reference: &[f64], estimate: &[f64], cfg: StftConfig, epsilon: f64) -> Result<f64> {
    if reference.len() != estimate.len() {
        return validation_err(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        ));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return validation_err(format!("epsilon {epsilon} must be positive"));
    }
    let s = analyze_mono(reference, cfg)?;
    let e = analyze_mono(estimate, cfg)?;
    if s.is_empty() {
        return validation_err("signal shorter than one hop");
    }
    let k = cfg.num_bins() as f64;
    let total: f64 = s
        .iter()
        .zip(&e)
        .map(|(fs, fe)| {
            let ms: f64 = fs
                .iter()
                .zip(fe)
                .map(|(a, b)| {
                    let d = 10.0 * ((a.norm_sqr() + epsilon) / (b.norm_sqr() + epsilon)).log10();
                    d * d
                })
                .sum();
            (ms / k).sqrt()
        })
        .sum();
    Ok(total / s.len() as f64)
}

/// Per-source scores of one processing variant.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub variant: Variant,
    pub sources: Vec<String>,
    pub snr_db: Vec<f64>,
    pub lsd_db: Vec<f64>,
}

impl MetricReport {
    /// Scores `estimates[j]` against `references[j]`.
    pub fn compute(
        variant: Variant,
        sources: Vec<String>,
        references: &[Vec<f64>],
        estimates: &[Vec<f64>],
        cfg: StftConfig,
    ) -> Result<Self> {
        if references.len() != estimates.len() || references.len() != sources.len() {
            return validation_err("references, estimates and names differ in count");
        }
        let mut snr_db = Vec::with_capacity(references.len());
        let mut lsd_db = Vec::with_capacity(references.len());
        for (r, e) in references.iter().zip(estimates) {
            snr_db.push(snr(r, e)?);
            lsd_db.push(lsd(r, e, cfg, default_epsilon(r, cfg)?)?);
        }
        Ok(Self {
            variant,
            sources,
            snr_db,
            lsd_db,
        })
    }

    pub fn csv_header() -> &'static str {
        "variant,source,snr_db,lsd_db"
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for ((name, s), l) in self.sources.iter().zip(&self.snr_db).zip(&self.lsd_db) {
            out.push_str(&format!("{},{name},{s:.4},{l:.4}\n", self.variant));
        }
        out
    }
}

/// Aligned text table, one row per variant, SNR and LSD columns per source.
pub fn format_table(reports: &[MetricReport]) -> String {
    struct Table<'a>(&'a [MetricReport]);
    impl fmt::Display for Table<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let Some(first) = self.0.first() else {
                return Ok(());
            };
            write!(f, "{:<14}", "variant")?;
            for s in &first.sources {
                write!(f, " {:>12} {:>12}", format!("{s} SNR"), format!("{s} LSD"))?;
            }
            writeln!(f)?;
            for r in self.0 {
                write!(f, "{:<14}", r.variant.to_string())?;
                for (s, l) in r.snr_db.iter().zip(&r.lsd_db) {
                    write!(f, " {s:>12.2} {l:>12.2}")?;
                }
                writeln!(f)?;
            }
            Ok(())
        }
    }
    Table(reports).to_string()
}
