//! Streaming short-time Fourier analysis and overlap-add synthesis.
//!
//! Analysis keeps a `frame_size` history per channel, pre-filled with zeros,
//! and emits one frame every `hop_size` input samples. Synthesis overlap-adds
//! the windowed inverse transforms, so a matched analyzer/synthesizer pair
//! reproduces its input delayed by [`StftConfig::latency`] samples.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{config_err, Result};

/// Analysis/synthesis window pair. Both sides use the same shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Square root of the periodic Hann window.
    SqrtHann,
    Rectangular,
}

impl WindowKind {
    pub fn samples(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::SqrtHann => (0..len)
                .map(|n| (0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).sqrt())
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowKind::SqrtHann => write!(f, "sqrt_hann"),
            WindowKind::Rectangular => write!(f, "rectangular"),
        }
    }
}

impl std::str::FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sqrt_hann" | "sqrt-hann" => Ok(WindowKind::SqrtHann),
            "rectangular" | "rect" => Ok(WindowKind::Rectangular),
            other => Err(format!("unknown window '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub frame_size: usize,
    pub hop_size: usize,
    pub sample_rate: f64,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_size: 1024,
            hop_size: 512,
            sample_rate: 16_000.0,
            window: WindowKind::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn new(frame_size: usize, hop_size: usize, sample_rate: f64, window: WindowKind) -> Result<Self> {
        let cfg = Self {
            frame_size,
            hop_size,
            sample_rate,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_size < 2 || !self.frame_size.is_power_of_two() {
            return config_err(format!("frame size {} is not a power of two", self.frame_size));
        }
        if self.hop_size == 0 || !self.frame_size.is_multiple_of(self.hop_size) {
            return config_err(format!(
                "hop size {} does not divide frame size {}",
                self.hop_size, self.frame_size
            ));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return config_err(format!("invalid sample rate {}", self.sample_rate));
        }
        let overlap = self.overlap_sum();
        let (lo, hi) = overlap
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo <= 0.0 || (hi - lo) > 1e-9 * hi {
            return config_err(format!(
                "{} window pair is not constant-overlap-add at hop {} (min {lo}, max {hi})",
                self.window, self.hop_size
            ));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    /// Delay in samples between analyzer input and synthesizer output.
    pub fn latency(&self) -> usize {
        self.frame_size - self.hop_size
    }

    pub fn analysis_window(&self) -> Vec<f64> {
        self.window.samples(self.frame_size)
    }

    pub fn synthesis_window(&self) -> Vec<f64> {
        self.window.samples(self.frame_size)
    }

    /// Constant value of the overlapped analysis·synthesis window product.
    pub fn ola_gain(&self) -> f64 {
        self.overlap_sum()[0]
    }

    fn overlap_sum(&self) -> Vec<f64> {
        let wa = self.analysis_window();
        let ws = self.synthesis_window();
        (0..self.hop_size)
            .map(|n| {
                (n..self.frame_size)
                    .step_by(self.hop_size)
                    .map(|i| wa[i] * ws[i])
                    .sum()
            })
            .collect()
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.frame_size as f64
    }
}

/// Complex spectra of all channels at one frame, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    frame_index: u64,
    num_bins: usize,
    data: Vec<Complex64>,
}

impl SpectralFrame {
    pub fn zeros(frame_index: u64, channels: usize, num_bins: usize) -> Self {
        Self {
            frame_index,
            num_bins,
            data: vec![Complex64::new(0.0, 0.0); channels * num_bins],
        }
    }

    pub fn from_channels(frame_index: u64, channels: Vec<Vec<Complex64>>) -> Result<Self> {
        let num_bins = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != num_bins) {
            return config_err("channels have different bin counts");
        }
        Ok(Self {
            frame_index,
            num_bins,
            data: channels.concat(),
        })
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn channels(&self) -> usize {
        if self.num_bins == 0 {
            0
        } else {
            self.data.len() / self.num_bins
        }
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.num_bins..(c + 1) * self.num_bins]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.num_bins..(c + 1) * self.num_bins]
    }

    /// Copies the across-channel vector of bin `k` into `out`.
    pub fn gather_bin(&self, k: usize, out: &mut [Complex64]) {
        for (c, v) in out.iter_mut().enumerate() {
            *v = self.data[c * self.num_bins + k];
        }
    }

    pub fn scatter_bin(&mut self, k: usize, values: &[Complex64]) {
        for (c, v) in values.iter().enumerate() {
            self.data[c * self.num_bins + k] = *v;
        }
    }

    pub fn power(&self, c: usize) -> Vec<f64> {
        self.channel(c).iter().map(|v| v.norm_sqr()).collect()
    }
}

fn check_block<S: AsRef<[f64]>>(block: &[S], channels: usize) -> Result<usize> {
    if block.len() != channels {
        return config_err(format!(
            "block has {} channels, stream expects {channels}",
            block.len()
        ));
    }
    let len = block.first().map_or(0, |c| c.as_ref().len());
    if block.iter().any(|c| c.as_ref().len() != len) {
        return config_err("block channels have different lengths");
    }
    Ok(len)
}

/// Streaming multichannel analyzer.
pub struct StftAnalyzer {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn RealToComplex<f64>>,
    history: Vec<Vec<f64>>,
    pending: usize,
    next_index: u64,
    scratch: Vec<f64>,
    fft_scratch: Vec<Complex64>,
}

impl StftAnalyzer {
    pub fn new(cfg: StftConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        if channels == 0 {
            return config_err("analyzer needs at least one channel");
        }
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(cfg.frame_size);
        let fft_scratch = fft.make_scratch_vec();
        Ok(Self {
            window: cfg.analysis_window(),
            history: vec![vec![0.0; cfg.frame_size]; channels],
            pending: 0,
            next_index: 0,
            scratch: vec![0.0; cfg.frame_size],
            fft_scratch,
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn channels(&self) -> usize {
        self.history.len()
    }

    /// Feeds a block of samples (one slice per channel) and returns every
    /// frame completed by it.
    pub fn analyze<S: AsRef<[f64]>>(&mut self, block: &[S]) -> Result<Vec<SpectralFrame>> {
        let len = check_block(block, self.channels())?;
        let hop = self.cfg.hop_size;
        let tail = self.cfg.frame_size - hop;
        let mut frames = Vec::with_capacity((self.pending + len) / hop);
        let mut pos = 0;
        while pos < len {
            let take = (hop - self.pending).min(len - pos);
            for (hist, chan) in self.history.iter_mut().zip(block) {
                let start = tail + self.pending;
                hist[start..start + take].copy_from_slice(&chan.as_ref()[pos..pos + take]);
            }
            self.pending += take;
            pos += take;
            if self.pending == hop {
                frames.push(self.emit());
                for hist in &mut self.history {
                    hist.copy_within(hop.., 0);
                }
                self.pending = 0;
            }
        }
        Ok(frames)
    }

    fn emit(&mut self) -> SpectralFrame {
        let bins = self.cfg.num_bins();
        let mut frame = SpectralFrame::zeros(self.next_index, self.history.len(), bins);
        for c in 0..self.history.len() {
            for ((s, &x), &w) in self.scratch.iter_mut().zip(&self.history[c]).zip(&self.window) {
                *s = x * w;
            }
            self.fft
                .process_with_scratch(&mut self.scratch, frame.channel_mut(c), &mut self.fft_scratch)
                .expect("buffer sizes fixed at construction");
        }
        self.next_index += 1;
        frame
    }
}

/// Streaming multichannel overlap-add synthesizer.
pub struct StftSynthesizer {
    cfg: StftConfig,
    window: Vec<f64>,
    ifft: Arc<dyn ComplexToReal<f64>>,
    accum: Vec<Vec<f64>>,
    spectrum: Vec<Complex64>,
    scratch: Vec<f64>,
    fft_scratch: Vec<Complex64>,
}

impl StftSynthesizer {
    pub fn new(cfg: StftConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        if channels == 0 {
            return config_err("synthesizer needs at least one channel");
        }
        let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(cfg.frame_size);
        // Folds the 1/N of the inverse transform and the overlap gain into the window.
        let scale = 1.0 / (cfg.frame_size as f64 * cfg.ola_gain());
        let window = cfg.synthesis_window().into_iter().map(|w| w * scale).collect();
        Ok(Self {
            window,
            accum: vec![vec![0.0; cfg.frame_size]; channels],
            spectrum: vec![Complex64::new(0.0, 0.0); cfg.num_bins()],
            scratch: vec![0.0; cfg.frame_size],
            fft_scratch: ifft.make_scratch_vec(),
            ifft,
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn channels(&self) -> usize {
        self.accum.len()
    }

    /// Overlap-adds one frame and appends the `hop_size` finished samples of
    /// each channel to `out`.
    pub fn push_frame(&mut self, frame: &SpectralFrame, out: &mut [Vec<f64>]) -> Result<()> {
        if frame.num_bins() != self.cfg.num_bins() {
            return config_err(format!(
                "frame has {} bins, synthesizer expects {}",
                frame.num_bins(),
                self.cfg.num_bins()
            ));
        }
        if frame.channels() != self.channels() || out.len() != self.channels() {
            return config_err(format!(
                "frame has {} channels, synthesizer expects {}",
                frame.channels(),
                self.channels()
            ));
        }
        let hop = self.cfg.hop_size;
        let last = self.spectrum.len() - 1;
        for (c, acc) in self.accum.iter_mut().enumerate() {
            self.spectrum.copy_from_slice(frame.channel(c));
            // A real signal has purely real DC and Nyquist bins.
            self.spectrum[0].im = 0.0;
            self.spectrum[last].im = 0.0;
            self.ifft
                .process_with_scratch(&mut self.spectrum, &mut self.scratch, &mut self.fft_scratch)
                .expect("buffer sizes fixed at construction");
            for ((a, &s), &w) in acc.iter_mut().zip(&self.scratch).zip(&self.window) {
                *a += s * w;
            }
            out[c].extend_from_slice(&acc[..hop]);
            acc.copy_within(hop.., 0);
            let n = acc.len();
            acc[n - hop..].fill(0.0);
        }
        Ok(())
    }

    /// Synthesizes a sequence of frames; returns `frames.len() * hop_size`
    /// samples per channel.
    pub fn synthesize(&mut self, frames: &[SpectralFrame]) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::with_capacity(frames.len() * self.cfg.hop_size); self.channels()];
        for frame in frames {
            self.push_frame(frame, &mut out)?;
        }
        Ok(out)
    }
}

/// Single-channel convenience: all frames of `signal` as bin vectors.
pub fn analyze_mono(signal: &[f64], cfg: StftConfig) -> Result<Vec<Vec<Complex64>>> {
    let mut analyzer = StftAnalyzer::new(cfg, 1)?;
    Ok(analyzer
        .analyze(&[signal])?
        .into_iter()
        .map(|f| f.channel(0).to_vec())
        .collect())
}
