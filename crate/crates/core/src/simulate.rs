//! Synthetic far-field scenes with known ground truth.
//!
//! Each source is delayed onto every microphone with a windowed-sinc
//! fractional delay, the images are summed, and noise is added at a
//! per-microphone SNR measured against the summed source images.

use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{validation_err, Result};
use crate::fftconv;
use crate::geometry::{self, ArrayScene};

/// Taps in the fractional-delay interpolator.
pub const DELAY_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

/// Interpolation taps for offsets `j - frac`, `j` in `-31..=32`.
fn delay_kernel(frac: f64) -> [f64; DELAY_TAPS] {
    let half = (DELAY_TAPS / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    let mut h = [0.0; DELAY_TAPS];
    for (idx, tap) in h.iter_mut().enumerate() {
        let t = idx as f64 - (half - 1.0) - frac;
        let r = (t / half).clamp(-1.0, 1.0);
        *tap = sinc(t) * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
    }
    h
}

/// `y[n] = x(n - delay)` with band-limited interpolation; samples outside the
/// input are taken as zero, and the output has the input's length.
///
/// Integer delays are exact shifts.
pub fn fractional_delay(signal: &[f64], delay: f64) -> Vec<f64> {
    let len = signal.len();
    let whole = delay.floor();
    let frac = delay - whole;
    let shift = whole as isize;
    let at = |i: isize| {
        if i >= 0 && (i as usize) < len {
            signal[i as usize]
        } else {
            0.0
        }
    };
    if frac == 0.0 {
        return (0..len as isize).map(|n| at(n - shift)).collect();
    }
    let h = delay_kernel(frac);
    let first = -(DELAY_TAPS as isize / 2 - 1);
    (0..len as isize)
        .map(|n| {
            h.iter()
                .enumerate()
                .map(|(idx, &c)| c * at(n - shift - (first + idx as isize)))
                .sum()
        })
        .collect()
}

/// One source's dry signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSignal {
    pub samples: Vec<f64>,
    pub gain: f64,
    /// Samples outside this range are silenced; `None` keeps the whole signal.
    pub active: Option<Range<usize>>,
}

impl SourceSignal {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            gain: 1.0,
            active: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// Independent white Gaussian noise on every microphone.
    White,
    /// Recorded noise, one buffer per microphone, or a single buffer that is
    /// reused with a per-microphone circular offset.
    Recorded(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Per-microphone SNR of the summed source images against the noise.
    pub snr_db: f64,
}

/// Synthetic exponential-decay reverberation added to every source image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reverb {
    pub rt60: f64,
    /// Energy of the direct path relative to the tail.
    pub direct_to_reverb_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Source directions are in the same order as `sources`.
    pub scene: ArrayScene,
    pub sources: Vec<SourceSignal>,
    pub noise: Option<NoiseSpec>,
    pub reverb: Option<Reverb>,
    pub duration_samples: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.sources.is_empty() {
            return validation_err("scenario has no sources");
        }
        if self.sources.len() != self.scene.num_sources() {
            return validation_err(format!(
                "{} source signals for {} source directions",
                self.sources.len(),
                self.scene.num_sources()
            ));
        }
        for (j, s) in self.sources.iter().enumerate() {
            if s.samples.len() < self.duration_samples {
                return validation_err(format!(
                    "duration {} exceeds source {j} length {}",
                    self.duration_samples,
                    s.samples.len()
                ));
            }
            if !s.gain.is_finite() {
                return validation_err(format!("source {j} gain is not finite"));
            }
        }
        if let Some(noise) = &self.noise {
            if !noise.snr_db.is_finite() {
                return validation_err("noise level is not finite");
            }
            if let NoiseKind::Recorded(bufs) = &noise.kind {
                if bufs.is_empty() || bufs.iter().any(Vec::is_empty) {
                    return validation_err("recorded noise is empty");
                }
                if bufs.len() != 1 && bufs.len() != self.scene.num_mics() {
                    return validation_err(format!(
                        "{} noise channels for {} microphones",
                        bufs.len(),
                        self.scene.num_mics()
                    ));
                }
            }
        }
        if let Some(r) = &self.reverb {
            if !(r.rt60 > 0.0 && r.rt60.is_finite()) || !r.direct_to_reverb_db.is_finite() {
                return validation_err("reverb parameters must be positive and finite");
            }
        }
        Ok(())
    }
}

/// Rendered scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    /// `mics[i]`: microphone signals.
    pub mics: Vec<Vec<f64>>,
    /// `references[j]`: dry source j after gain and activity masking, undelayed.
    pub references: Vec<Vec<f64>>,
    /// `noise[i]`: the noise component of each microphone signal.
    pub noise: Vec<Vec<f64>>,
}

fn reverb_tail(rng: &mut ChaCha8Rng, rev: &Reverb, sample_rate: f64) -> Vec<f64> {
    let len = ((rev.rt60 * sample_rate).ceil() as usize).max(2);
    let decay = 3.0 * 10f64.ln() / (rev.rt60 * sample_rate);
    let mut h: Vec<f64> = (0..len)
        .map(|n| {
            let g: f64 = StandardNormal.sample(rng);
            if n == 0 {
                0.0
            } else {
                g * (-decay * n as f64).exp()
            }
        })
        .collect();
    let energy: f64 = h.iter().map(|v| v * v).sum();
    let target = 10f64.powf(-rev.direct_to_reverb_db / 10.0);
    let scale = (target / energy).sqrt();
    h.iter_mut().for_each(|v| *v *= scale);
    h[0] = 1.0;
    h
}

/// Renders the scenario. Same scenario, same output, bit for bit.
pub fn mix(scenario: &Scenario) -> Result<Mixture> {
    scenario.validate()?;
    let len = scenario.duration_samples;
    let n_mics = scenario.scene.num_mics();
    let delays = geometry::delays(&scenario.scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let references: Vec<Vec<f64>> = scenario
        .sources
        .iter()
        .map(|s| {
            let range = s.active.clone().unwrap_or(0..len);
            (0..len)
                .map(|n| if range.contains(&n) { s.gain * s.samples[n] } else { 0.0 })
                .collect()
        })
        .collect();

    let mut mics = vec![vec![0.0; len]; n_mics];
    for (j, reference) in references.iter().enumerate() {
        for (i, mic) in mics.iter_mut().enumerate() {
            let mut image = fractional_delay(reference, delays[i][j]);
            if let Some(rev) = &scenario.reverb {
                let h = reverb_tail(&mut rng, rev, scenario.scene.sample_rate);
                image = fftconv::convolve(&image, &h);
                image.truncate(len);
            }
            mic.iter_mut().zip(&image).for_each(|(m, v)| *m += v);
        }
    }

    let mut noise = vec![vec![0.0; len]; n_mics];
    if let Some(spec) = &scenario.noise {
        for (i, (mic, n)) in mics.iter_mut().zip(noise.iter_mut()).enumerate() {
            match &spec.kind {
                NoiseKind::White => {
                    n.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                }
                NoiseKind::Recorded(bufs) => {
                    let (buf, offset) = if bufs.len() == 1 {
                        (&bufs[0], i * bufs[0].len() / n_mics)
                    } else {
                        (&bufs[i], 0)
                    };
                    for (t, v) in n.iter_mut().enumerate() {
                        *v = buf[(t + offset) % buf.len()];
                    }
                }
            }
            let sig: f64 = mic.iter().map(|v| v * v).sum();
            let raw: f64 = n.iter().map(|v| v * v).sum();
            let scale = if raw > 0.0 && sig > 0.0 {
                (sig / raw * 10f64.powf(-spec.snr_db / 10.0)).sqrt()
            } else {
                0.0
            };
            n.iter_mut().for_each(|v| *v *= scale);
            mic.iter_mut().zip(n.iter()).for_each(|(m, v)| *m += v);
        }
    }

    Ok(Mixture {
        mics,
        references,
        noise,
    })
}

/// Speech-like surrogate: alternating voiced syllables (harmonic series with
/// jittered pitch under three formant bumps), unvoiced bursts (band-passed
/// noise) and pauses, band-limited to about 5 kHz.
pub fn speech_like(num_samples: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; num_samples];
    let base_f0 = rng.random_range(95.0..230.0);
    let mut pos = 0usize;
    while pos < num_samples {
        let kind = rng.random_range(0..10);
        let dur_s = match kind {
            0..=5 => rng.random_range(0.12..0.32),
            6..=7 => rng.random_range(0.05..0.12),
            _ => rng.random_range(0.06..0.25),
        };
        let len = ((dur_s * sample_rate) as usize).min(num_samples - pos);
        let seg = &mut out[pos..pos + len];
        match kind {
            0..=5 => voiced(&mut rng, seg, base_f0, sample_rate),
            6..=7 => unvoiced(&mut rng, seg, sample_rate),
            _ => {}
        }
        pos += len;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

/// Band-limited Gaussian noise under a speech-like activity envelope.
///
/// Talk spurts of 0.8 to 2 s, made of syllables of 0.12 to 0.3 s, alternate
/// with pauses of 0.2 to 0.8 s held 40 dB down. The long-term spectrum is
/// flat up to a knee near 500 Hz and falls at 6 dB per octave above it,
/// between random band edges near 100 Hz and 7 kHz. Peak-normalized to 0.5
/// like [`speech_like`].
pub fn modulated_noise(num_samples: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    const FLOOR: f64 = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = rng.random_range(80.0..150.0) / sample_rate;
    let knee = rng.random_range(400.0..700.0) / sample_rate;
    let high = (rng.random_range(6000.0..7500.0) / sample_rate).min(0.45);
    let mut env = vec![FLOOR; num_samples];
    let mut pos = 0usize;
    let mut talking = rng.random_bool(0.5);
    while pos < num_samples {
        let span = if talking { rng.random_range(0.8..2.0) } else { rng.random_range(0.2..0.8) };
        let end = (pos + (span * sample_rate) as usize).clamp(pos + 1, num_samples);
        if talking {
            let mut s = pos;
            while s < end {
                let len = ((rng.random_range(0.12..0.3) * sample_rate) as usize).clamp(1, end - s);
                let level = rng.random_range(0.4..1.0);
                for (n, e) in env[s..s + len].iter_mut().enumerate() {
                    *e = FLOOR.max(level * envelope(n, len));
                }
                s += len;
            }
        }
        pos = end;
        talking = !talking;
    }
    let raw: Vec<f64> = env
        .iter()
        .map(|e| {
            let g: f64 = StandardNormal.sample(&mut rng);
            e * g
        })
        .collect();
    let mut out = fftconv::shape(&raw, |f| {
        if f < low || f > high {
            0.0
        } else {
            (knee / f).min(1.0)
        }
    });
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

fn envelope(n: usize, len: usize) -> f64 {
    // Raised-cosine attack and release of 20% each.
    let edge = (len / 5).max(1) as f64;
    let t = n as f64;
    let rise = (t / edge).min(1.0);
    let fall = ((len - n) as f64 / edge).min(1.0);
    let w = rise.min(fall);
    0.5 - 0.5 * (PI * w).cos()
}

fn voiced(rng: &mut ChaCha8Rng, seg: &mut [f64], base_f0: f64, fs: f64) {
    let formants = [
        (rng.random_range(300.0..850.0), 90.0),
        (rng.random_range(850.0..2300.0), 130.0),
        (rng.random_range(2300.0..3300.0), 200.0),
    ];
    let f0_start = base_f0 * rng.random_range(0.85..1.15);
    let f0_end = base_f0 * rng.random_range(0.85..1.15);
    let level = rng.random_range(0.4..1.0);
    let max_harm = (5000.0 / base_f0.min(f0_start).min(f0_end) * 0.87) as usize;
    let amps: Vec<f64> = (1..=max_harm)
        .map(|h| {
            let f = h as f64 * base_f0;
            let shape: f64 = formants
                .iter()
                .map(|&(fc, bw)| (-(f - fc).powi(2) / (2.0 * bw * bw)).exp())
                .sum();
            (shape + 0.02) / (h as f64).sqrt()
        })
        .collect();
    let phases: Vec<f64> = (0..max_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let len = seg.len();
    let mut phase = 0.0;
    for (n, out) in seg.iter_mut().enumerate() {
        let f0 = f0_start + (f0_end - f0_start) * n as f64 / len as f64;
        phase += 2.0 * PI * f0 / fs;
        let mut v = 0.0;
        for (h, (&a, &p)) in amps.iter().zip(&phases).enumerate() {
            if (h + 1) as f64 * f0 > 0.45 * fs.min(11_000.0) {
                break;
            }
            v += a * ((h + 1) as f64 * phase + p).sin();
        }
        *out = level * envelope(n, len) * v;
    }
}

fn unvoiced(rng: &mut ChaCha8Rng, seg: &mut [f64], fs: f64) {
    // Second-order resonator centred between 2 and 5 kHz.
    let fc = rng.random_range(2000.0f64..5000.0).min(0.4 * fs);
    let r: f64 = 0.9;
    let (a1, a2) = (-2.0 * r * (2.0 * PI * fc / fs).cos(), r * r);
    let level = rng.random_range(0.05..0.2);
    let (mut y1, mut y2) = (0.0, 0.0);
    let len = seg.len();
    for (n, out) in seg.iter_mut().enumerate() {
        let x: f64 = StandardNormal.sample(rng);
        let y = x - a1 * y1 - a2 * y2;
        y2 = y1;
        y1 = y;
        *out = level * envelope(n, len) * y;
    }
}
