//! Multi-source post-filter for the separated outputs.
//!
//! For each output `Y_m` the noise estimate is the sum of a stationary part,
//! tracked by minima-controlled recursive averaging, and a leakage part,
//! `η Σ_{i≠m} Z_i`, where `Z_i` are the recursively smoothed power spectra of
//! the other outputs. That estimate drives a loudness-domain (α = 1/2) MMSE
//! amplitude gain weighted by the speech-presence probability:
//!
//! ```text
//!   Y_m ─► |·|² ─► Z_m ───────────────┐ (to the other sources)
//!            │                        ▼
//!            ├─► MCRA ─► λ_stat ─► (+) ◄── λ_leak = η Σ_{i≠m} Z_i
//!            │                      │ λ
//!            └──► γ, ξ, υ ◄─────────┘
//!                   │
//!                   ├─► G_H1 ─┐
//!                   └─► p ────┴─► G = [p G_H1^α + (1-p) G_min^α]^{1/α} ─► Ŝ_m = G Y_m
//! ```
//!
//! Setting `η = 0` turns this into an independent single-channel enhancer per output.

use num_complex::Complex64;

use crate::error::{config_err, validation_err, Result};
use crate::gss::SourceId;
use crate::special::{self, GAMMA_5_4};
use crate::stft::{SpectralFrame, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McraConfig {
    /// Recursive smoothing of the power spectrum before minimum tracking.
    pub power_smoothing: f64,
    /// Recursive smoothing of the noise estimate in speech-absent bins.
    pub noise_smoothing: f64,
    /// Minimum-search window length in frames.
    pub window_frames: usize,
    /// Speech is declared present where smoothed power exceeds this multiple of the minimum.
    pub presence_threshold: f64,
}

impl Default for McraConfig {
    fn default() -> Self {
        Self::for_stft(&StftConfig::default(), 1.5)
    }
}

impl McraConfig {
    pub fn for_stft(stft: &StftConfig, window_seconds: f64) -> Self {
        let frames = (window_seconds * stft.sample_rate / stft.hop_size as f64).round();
        Self {
            power_smoothing: 0.95,
            noise_smoothing: 0.95,
            window_frames: (frames as usize).max(1),
            presence_threshold: 5.0,
        }
    }
}

/// Minima-controlled recursive averaging of a stationary noise power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Mcra {
    cfg: McraConfig,
    smoothed: Vec<f64>,
    minimum: Vec<f64>,
    running_minimum: Vec<f64>,
    noise: Vec<f64>,
    frames_in_window: usize,
    started: bool,
    noise_seeded: bool,
    // Until the first window closes the minimum is not yet meaningful; an
    // unseeded tracker then averages every frame.
    warming_up: bool,
}

impl Mcra {
    pub fn new(cfg: McraConfig, num_bins: usize) -> Self {
        Self {
            cfg,
            smoothed: vec![0.0; num_bins],
            minimum: vec![0.0; num_bins],
            running_minimum: vec![0.0; num_bins],
            noise: vec![0.0; num_bins],
            frames_in_window: 0,
            started: false,
            noise_seeded: false,
            warming_up: true,
        }
    }

    /// Starts from a known noise estimate instead of the first frame's power.
    pub fn with_initial_noise(cfg: McraConfig, noise: Vec<f64>) -> Self {
        let mut m = Self::new(cfg, noise.len());
        m.noise = noise;
        m.noise_seeded = true;
        m
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn update(&mut self, power: &[f64]) {
        debug_assert_eq!(power.len(), self.noise.len());
        if !self.started {
            self.smoothed.copy_from_slice(power);
            self.minimum.copy_from_slice(power);
            self.running_minimum.copy_from_slice(power);
            if !self.noise_seeded {
                self.noise.copy_from_slice(power);
            }
            self.started = true;
            return;
        }
        let a = self.cfg.power_smoothing;
        let b = self.cfg.noise_smoothing;
        self.frames_in_window += 1;
        let restart = self.frames_in_window >= self.cfg.window_frames;
        for k in 0..power.len() {
            let s = a * self.smoothed[k] + (1.0 - a) * power[k];
            self.smoothed[k] = s;
            if restart {
                self.minimum[k] = self.running_minimum[k].min(s);
                self.running_minimum[k] = s;
            } else {
                self.minimum[k] = self.minimum[k].min(s);
                self.running_minimum[k] = self.running_minimum[k].min(s);
            }
            let present = s > self.cfg.presence_threshold * self.minimum[k];
            if !present || (self.warming_up && !self.noise_seeded) {
                self.noise[k] = b * self.noise[k] + (1.0 - b) * power[k];
            }
        }
        if restart {
            self.frames_in_window = 0;
            self.warming_up = false;
        }
    }
}

/// Maps local, global and frame-wide a priori SNR averages to presence factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresenceConfig {
    /// Half-width of the local window in bins (1 → 3 bins).
    pub local_half_width: usize,
    /// Half-width of the global window in bins (7 → 15 bins).
    pub global_half_width: usize,
    /// Averages at or below this SNR (dB) give factor 0.
    pub low_db: f64,
    /// Averages at or above this SNR (dB) give factor 1.
    pub high_db: f64,
    /// Upper bound on q̂. Below 1 the posterior can still rise to 1 in a
    /// strong bin of an otherwise quiet frame.
    pub max_absence: f64,
}

impl Default for PresenceConfig {
    fn default() -> Self {
        Self {
            local_half_width: 1,
            global_half_width: 7,
            low_db: 1.0,
            high_db: 10.0,
            max_absence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostfilterConfig {
    /// Leakage factor η (linear power ratio).
    pub eta: f64,
    /// Smoothing constant α_s of the output power spectra `Z`.
    pub alpha_s: f64,
    /// Decision-directed constant α_p.
    pub alpha_p: f64,
    /// Gain applied where speech is certainly absent.
    pub g_min: f64,
    /// Exponent α of the MMSE estimation domain (1/2: loudness).
    pub alpha_exponent: f64,
    pub mcra: McraConfig,
    pub presence: PresenceConfig,
    /// Noise estimate floor, relative to the long-run mean output power.
    pub noise_floor: f64,
}

impl Default for PostfilterConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            alpha_s: 0.7,
            alpha_p: 0.98,
            g_min: 0.0,
            alpha_exponent: 0.5,
            mcra: McraConfig::default(),
            presence: PresenceConfig::default(),
            noise_floor: 1e-12,
        }
    }
}

impl PostfilterConfig {
    pub fn for_stft(stft: &StftConfig) -> Self {
        Self {
            mcra: McraConfig::for_stft(stft, 1.5),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_s > 0.0 && self.alpha_s < 1.0) {
            return config_err(format!("alpha_s = {} must lie in (0, 1)", self.alpha_s));
        }
        if !(self.alpha_p >= 0.0 && self.alpha_p < 1.0) {
            return config_err(format!("alpha_p = {} must lie in [0, 1)", self.alpha_p));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return config_err(format!("eta = {} must be non-negative", self.eta));
        }
        if !(self.g_min >= 0.0 && self.g_min <= 1.0) {
            return config_err(format!("g_min = {} must lie in [0, 1]", self.g_min));
        }
        if !(self.alpha_exponent > 0.0 && self.alpha_exponent.is_finite()) {
            return config_err(format!("alpha_exponent = {} must be positive", self.alpha_exponent));
        }
        let m = &self.mcra;
        if !(0.0..1.0).contains(&m.power_smoothing) || !(0.0..1.0).contains(&m.noise_smoothing) {
            return config_err("MCRA smoothing constants must lie in [0, 1)");
        }
        if m.window_frames == 0 || !(m.presence_threshold >= 1.0) {
            return config_err("MCRA window must be non-empty and the threshold at least 1");
        }
        if !(self.presence.high_db > self.presence.low_db) {
            return config_err("presence high threshold must exceed the low threshold");
        }
        if !(0.0..=1.0).contains(&self.presence.max_absence) {
            return config_err("max_absence must lie in [0, 1]");
        }
        Ok(())
    }
}

/// `Z ← α_s Z + (1 − α_s) |Y|²`.
pub fn smooth_spectrum(z: &mut [f64], power: &[f64], alpha_s: f64) {
    for (z, &p) in z.iter_mut().zip(power) {
        *z = alpha_s * *z + (1.0 - alpha_s) * p;
    }
}

/// `λ_m^leak = η Σ_{i≠m} Z_i` for every source `m`.
pub fn leakage_estimate(z: &[&[f64]], eta: f64) -> Vec<Vec<f64>> {
    let bins = z.first().map_or(0, |v| v.len());
    (0..z.len())
        .map(|m| {
            (0..bins)
                .map(|k| {
                    let others: f64 = z.iter().enumerate().filter(|&(i, _)| i != m).map(|(_, zi)| zi[k]).sum();
                    eta * others
                })
                .collect()
        })
        .collect()
}

/// `λ = λ_stat + λ_leak`.
pub fn noise_total(stat: &[f64], leak: &[f64]) -> Vec<f64> {
    stat.iter().zip(leak).map(|(s, l)| s + l).collect()
}

/// Stationary noise of a new delay-and-sum output from per-microphone noise
/// estimates: `(1/N²) Σ_n σ²_n(k)`.
pub fn init_noise(mic_noise: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = mic_noise.len();
    if n == 0 {
        return validation_err("noise initialisation needs at least one microphone");
    }
    let bins = mic_noise[0].len();
    if mic_noise.iter().any(|m| m.len() != bins) {
        return validation_err("microphone noise estimates have different bin counts");
    }
    if mic_noise.iter().flatten().any(|v| !(*v >= 0.0)) {
        return validation_err("noise estimates must be non-negative");
    }
    let scale = 1.0 / (n * n) as f64;
    Ok((0..bins)
        .map(|k| mic_noise.iter().map(|m| m[k]).sum::<f64>() * scale)
        .collect())
}

/// A posteriori SNR γ, decision-directed a priori SNR ξ̂ and υ = γξ/(1+ξ) for one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrEstimate {
    pub gamma: f64,
    pub xi: f64,
    pub upsilon: f64,
}

impl SnrEstimate {
    /// `lambda` must already be floored above zero.
    pub fn compute(power: f64, lambda: f64, prev_gain_h1: f64, prev_gamma: f64, alpha_p: f64) -> Self {
        let gamma = power / lambda;
        let xi = alpha_p * prev_gain_h1 * prev_gain_h1 * prev_gamma + (1.0 - alpha_p) * (gamma - 1.0).max(0.0);
        let upsilon = gamma * xi / (xi + 1.0);
        Self { gamma, xi, upsilon }
    }
}

/// Loudness-domain MMSE gain under the speech-present hypothesis,
///
/// ```text
///   G_H1 = (√υ / γ) [Γ(1 + α/2) M(−α/2; 1; −υ)]^{1/α}
/// ```
///
/// without clamping. Defined as 0 at `υ = 0`.
pub fn mmse_gain(gamma: f64, upsilon: f64, alpha: f64) -> f64 {
    if !(upsilon > 0.0) || !(gamma > 0.0) {
        return 0.0;
    }
    let half = alpha / 2.0;
    let gamma_fn = if half == 0.25 { GAMMA_5_4 } else { special::gamma(1.0 + half) };
    let moment = gamma_fn * special::hyp1f1_neg(half, upsilon);
    upsilon.sqrt() / gamma * moment.powf(1.0 / alpha)
}

/// [`mmse_gain`] clamped to `[0, 1]`, so the post-filter never amplifies.
pub fn gain_h1(gamma: f64, upsilon: f64, alpha: f64) -> f64 {
    let g = mmse_gain(gamma, upsilon, alpha);
    if g.is_finite() {
        g.clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// A priori speech absence probability `q̂(k) = 1 − P_local P_global P_frame`
/// from the current a priori SNR estimates, capped at `max_absence`.
pub fn absence_prior(xi: &[f64], cfg: &PresenceConfig) -> Vec<f64> {
    let bins = xi.len();
    if bins == 0 {
        return Vec::new();
    }
    let mut prefix = Vec::with_capacity(bins + 1);
    prefix.push(0.0);
    for &v in xi {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + v);
    }
    let window_mean = |k: usize, half: usize| {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(bins);
        (prefix[hi] - prefix[lo]) / (hi - lo) as f64
    };
    let ramp = |mean: f64| {
        if !(mean > 0.0) {
            return 0.0;
        }
        let db = 10.0 * mean.log10();
        ((db - cfg.low_db) / (cfg.high_db - cfg.low_db)).clamp(0.0, 1.0)
    };
    let frame = ramp(prefix[bins] / bins as f64);
    (0..bins)
        .map(|k| {
            let local = ramp(window_mean(k, cfg.local_half_width));
            let global = ramp(window_mean(k, cfg.global_half_width));
            (1.0 - local * global * frame).min(cfg.max_absence)
        })
        .collect()
}

/// Posterior speech-presence probability
/// `p = {1 + q̂/(1−q̂) (1+ξ) e^{−υ}}⁻¹`, with `q̂ = 1` giving `p = 0`.
pub fn speech_probability(q: f64, xi: f64, upsilon: f64) -> f64 {
    if q >= 1.0 {
        return 0.0;
    }
    if q <= 0.0 {
        return 1.0;
    }
    let odds = q / (1.0 - q) * (1.0 + xi) * (-upsilon).exp();
    let p = 1.0 / (1.0 + odds);
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// `G = [p G_H1^α + (1 − p) G_min^α]^{1/α}`; with `G_min = 0`, α = 1/2 this is `p² G_H1`.
pub fn combined_gain(p: f64, g_h1: f64, g_min: f64, alpha: f64) -> f64 {
    let g = if g_min == 0.0 {
        p.powf(1.0 / alpha) * g_h1
    } else {
        (p * g_h1.powf(alpha) + (1.0 - p) * g_min.powf(alpha)).powf(1.0 / alpha)
    };
    g.clamp(0.0, 1.0)
}

/// `Ŝ = G Y`, phase preserved.
pub fn apply_gain(y: &[Complex64], gain: &[f64], out: &mut [Complex64]) {
    for ((o, v), g) in out.iter_mut().zip(y).zip(gain) {
        *o = v * *g;
    }
}

/// Running quantities of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFilterState {
    z: Vec<f64>,
    mcra: Mcra,
    lambda_leak: Vec<f64>,
    prev_gain_h1: Vec<f64>,
    prev_gamma: Vec<f64>,
    gain: Vec<f64>,
    presence: Vec<f64>,
    mean_power: f64,
    frames: u64,
}

impl SourceFilterState {
    fn new(cfg: &PostfilterConfig, num_bins: usize, initial_noise: Option<Vec<f64>>) -> Self {
        let mcra = match initial_noise {
            Some(noise) => Mcra::with_initial_noise(cfg.mcra, noise),
            None => Mcra::new(cfg.mcra, num_bins),
        };
        Self {
            z: vec![0.0; num_bins],
            mcra,
            lambda_leak: vec![0.0; num_bins],
            prev_gain_h1: vec![0.0; num_bins],
            prev_gamma: vec![0.0; num_bins],
            gain: vec![0.0; num_bins],
            presence: vec![0.0; num_bins],
            mean_power: 0.0,
            frames: 0,
        }
    }

    pub fn smoothed_spectrum(&self) -> &[f64] {
        &self.z
    }

    pub fn lambda_stat(&self) -> &[f64] {
        self.mcra.noise()
    }

    pub fn lambda_leak(&self) -> &[f64] {
        &self.lambda_leak
    }

    /// Gain `G(k)` applied on the latest frame.
    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    /// Speech-presence probability `p(k)` of the latest frame.
    pub fn presence(&self) -> &[f64] {
        &self.presence
    }
}

/// Post-filter over all active sources. Channel `m` of the frames passed to
/// [`Postfilter::process`] belongs to the `m`-th added source.
#[derive(Debug, Clone)]
pub struct Postfilter {
    cfg: PostfilterConfig,
    num_bins: usize,
    sources: Vec<(SourceId, SourceFilterState)>,
}

impl Postfilter {
    pub fn new(cfg: PostfilterConfig, num_bins: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            num_bins,
            sources: Vec::new(),
        })
    }

    pub fn config(&self) -> &PostfilterConfig {
        &self.cfg
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn source_ids(&self) -> impl Iterator<Item = &SourceId> {
        self.sources.iter().map(|(id, _)| id)
    }

    pub fn state(&self, m: usize) -> &SourceFilterState {
        &self.sources[m].1
    }

    /// Registers a new source. `initial_noise` seeds its stationary noise
    /// estimate (see [`init_noise`]); all other state starts at zero.
    pub fn add_source(&mut self, id: SourceId, initial_noise: Option<Vec<f64>>) -> Result<()> {
        if self.sources.iter().any(|(s, _)| *s == id) {
            return validation_err(format!("source '{id}' is already active"));
        }
        if let Some(noise) = &initial_noise {
            if noise.len() != self.num_bins {
                return config_err("initial noise estimate has the wrong bin count");
            }
        }
        let state = SourceFilterState::new(&self.cfg, self.num_bins, initial_noise);
        self.sources.push((id, state));
        Ok(())
    }

    pub fn remove_source(&mut self, id: &SourceId) -> Result<()> {
        match self.sources.iter().position(|(s, _)| s == id) {
            Some(m) => {
                self.sources.remove(m);
                Ok(())
            }
            None => validation_err(format!("source '{id}' is not active")),
        }
    }

    pub fn process(&mut self, y: &SpectralFrame) -> Result<SpectralFrame> {
        if y.channels() != self.sources.len() || y.num_bins() != self.num_bins {
            return config_err(format!(
                "frame is {} channels × {} bins, post-filter expects {} × {}",
                y.channels(),
                y.num_bins(),
                self.sources.len(),
                self.num_bins
            ));
        }
        let cfg = self.cfg;
        let powers: Vec<Vec<f64>> = (0..y.channels()).map(|m| y.power(m)).collect();

        for ((_, st), power) in self.sources.iter_mut().zip(&powers) {
            smooth_spectrum(&mut st.z, power, cfg.alpha_s);
            st.mcra.update(power);
            let frame_mean = power.iter().sum::<f64>() / power.len().max(1) as f64;
            st.frames += 1;
            st.mean_power += (frame_mean - st.mean_power) / st.frames as f64;
        }
        let leak = {
            let z: Vec<&[f64]> = self.sources.iter().map(|(_, s)| s.z.as_slice()).collect();
            leakage_estimate(&z, cfg.eta)
        };

        let mut out = SpectralFrame::zeros(y.frame_index(), y.channels(), self.num_bins);
        let mut snr = vec![SnrEstimate { gamma: 0.0, xi: 0.0, upsilon: 0.0 }; self.num_bins];
        let mut xi = vec![0.0; self.num_bins];
        let mut g_h1 = vec![0.0; self.num_bins];
        for (m, ((_, st), leak)) in self.sources.iter_mut().zip(leak).enumerate() {
            st.lambda_leak = leak;
            let floor = (cfg.noise_floor * st.mean_power).max(f64::MIN_POSITIVE);
            let power = &powers[m];
            for k in 0..self.num_bins {
                let lambda = (st.mcra.noise()[k] + st.lambda_leak[k]).max(floor);
                let est = SnrEstimate::compute(power[k], lambda, st.prev_gain_h1[k], st.prev_gamma[k], cfg.alpha_p);
                snr[k] = est;
                xi[k] = est.xi;
                g_h1[k] = gain_h1(est.gamma, est.upsilon, cfg.alpha_exponent);
            }
            let q = absence_prior(&xi, &cfg.presence);
            for k in 0..self.num_bins {
                let p = speech_probability(q[k], snr[k].xi, snr[k].upsilon);
                st.presence[k] = p;
                st.gain[k] = combined_gain(p, g_h1[k], cfg.g_min, cfg.alpha_exponent);
                st.prev_gain_h1[k] = g_h1[k];
                st.prev_gamma[k] = snr[k].gamma;
            }
            apply_gain(y.channel(m), &st.gain, out.channel_mut(m));
        }
        Ok(out)
    }
}
