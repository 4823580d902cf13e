//! End-to-end separation for the five comparison variants.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{config_err, validation_err, Error, Result};
use crate::geometry::{ArrayScene, SteeringVector, Vec3};
use crate::gss::{GssConfig, SeparationState, SourceId};
use crate::postfilter::{init_noise, Mcra, Postfilter, PostfilterConfig};
use crate::stft::{SpectralFrame, StftAnalyzer, StftConfig, StftSynthesizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// First microphone, unprocessed.
    Mic,
    /// Fixed delay-and-sum weights, no adaptation.
    DelayAndSum,
    /// Adaptive geometric separation.
    Gss,
    /// Separation followed by the post-filter without the leakage term.
    GssSinglePf,
    /// Separation followed by the post-filter with the leakage term.
    GssMultiPf,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Mic,
        Variant::DelayAndSum,
        Variant::Gss,
        Variant::GssSinglePf,
        Variant::GssMultiPf,
    ];

    pub fn adapts(self) -> bool {
        matches!(self, Variant::Gss | Variant::GssSinglePf | Variant::GssMultiPf)
    }

    pub fn has_postfilter(self) -> bool {
        matches!(self, Variant::GssSinglePf | Variant::GssMultiPf)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Mic => "mic",
            Variant::DelayAndSum => "delay_and_sum",
            Variant::Gss => "gss",
            Variant::GssSinglePf => "gss_single_pf",
            Variant::GssMultiPf => "gss_multi_pf",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorConfig {
    pub stft: StftConfig,
    pub gss: GssConfig,
    /// Used as given for [`Variant::GssMultiPf`]; the single-channel
    /// variant runs it with `eta = 0`.
    pub postfilter: PostfilterConfig,
    pub mic_positions: Vec<Vec3>,
    pub speed_of_sound: f64,
}

impl SeparatorConfig {
    pub fn new(mic_positions: Vec<Vec3>, speed_of_sound: f64, stft: StftConfig) -> Self {
        Self {
            postfilter: PostfilterConfig::for_stft(&stft),
            gss: GssConfig::default(),
            stft,
            mic_positions,
            speed_of_sound,
        }
    }

    /// Post-filter settings actually used by `variant`, if it has one.
    pub fn postfilter_for(&self, variant: Variant) -> Option<PostfilterConfig> {
        match variant {
            Variant::GssMultiPf => Some(self.postfilter),
            Variant::GssSinglePf => Some(PostfilterConfig {
                eta: 0.0,
                ..self.postfilter
            }),
            _ => None,
        }
    }

    fn steering(&self, direction: &Vec3) -> Result<SteeringVector> {
        let scene = ArrayScene {
            mic_positions: self.mic_positions.clone(),
            source_directions: vec![*direction],
            speed_of_sound: self.speed_of_sound,
            sample_rate: self.stft.sample_rate,
        };
        scene.validate()?;
        Ok(SteeringVector::from_delays(
            &scene.source_delays(direction),
            self.stft.frame_size,
        ))
    }
}

/// Frame-by-frame spectral separator: GSS, then the optional post-filter.
///
/// Output channel `m` belongs to the `m`-th active source in the order the
/// sources were added (removals close the gap).
pub struct Separator {
    cfg: SeparatorConfig,
    variant: Variant,
    gss: SeparationState,
    postfilter: Option<Postfilter>,
    /// Stationary noise per microphone, used to seed a new source's post-filter.
    mic_noise: Vec<Mcra>,
    frames_seen: u64,
}

impl Separator {
    pub fn new(cfg: SeparatorConfig, variant: Variant) -> Result<Self> {
        if variant == Variant::Mic {
            return config_err("the mic variant has no spectral separator");
        }
        cfg.stft.validate()?;
        let bins = cfg.stft.num_bins();
        let n = cfg.mic_positions.len();
        let gss = SeparationState::new(n, bins, cfg.gss)?;
        let postfilter = cfg
            .postfilter_for(variant)
            .map(|pf| Postfilter::new(pf, bins))
            .transpose()?;
        let mic_noise = if postfilter.is_some() {
            (0..n).map(|_| Mcra::new(cfg.postfilter.mcra, bins)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            cfg,
            variant,
            gss,
            postfilter,
            mic_noise,
            frames_seen: 0,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn gss(&self) -> &SeparationState {
        &self.gss
    }

    pub fn postfilter(&self) -> Option<&Postfilter> {
        self.postfilter.as_ref()
    }

    pub fn num_sources(&self) -> usize {
        self.gss.num_sources()
    }

    pub fn source_ids(&self) -> Vec<SourceId> {
        self.gss.source_ids().cloned().collect()
    }

    /// Starts separating a source arriving from `direction` (unit vector).
    pub fn add_source(&mut self, id: SourceId, direction: &Vec3) -> Result<()> {
        let steering = self.cfg.steering(direction)?;
        self.gss.add_source(id.clone(), steering)?;
        if let Some(pf) = &mut self.postfilter {
            let seed = if self.frames_seen > 0 {
                let per_mic: Vec<Vec<f64>> = self.mic_noise.iter().map(|m| m.noise().to_vec()).collect();
                Some(init_noise(&per_mic)?)
            } else {
                None
            };
            if let Err(e) = pf.add_source(id.clone(), seed) {
                self.gss.remove_source(&id)?;
                return Err(e);
            }
        }
        Ok(())
    }

    pub fn remove_source(&mut self, id: &SourceId) -> Result<()> {
        self.gss.remove_source(id)?;
        if let Some(pf) = &mut self.postfilter {
            pf.remove_source(id)?;
        }
        Ok(())
    }

    /// Separates one multichannel frame into one channel per active source.
    pub fn process(&mut self, x: &SpectralFrame) -> Result<SpectralFrame> {
        for (c, mcra) in self.mic_noise.iter_mut().enumerate() {
            mcra.update(&x.power(c));
        }
        self.frames_seen += 1;
        let y = self.gss.process(x, self.variant.adapts())?;
        match &mut self.postfilter {
            Some(pf) => pf.process(&y),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventAction {
    Add { id: SourceId, direction: Vec3 },
    Remove { id: SourceId },
}

/// A change to the active source set, applied at the first frame boundary
/// at or after `at_sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEvent {
    pub at_sample: usize,
    pub action: EventAction,
}

#[derive(Debug, Clone)]
pub struct SeparationOutput {
    /// One signal per source that was ever active, in order of first
    /// appearance, time-aligned with the input and of the same length.
    /// Samples outside a source's active span are zero.
    pub sources: Vec<(SourceId, Vec<f64>)>,
    pub elapsed: Duration,
    /// Processing time over signal duration.
    pub real_time_factor: f64,
}

impl SeparationOutput {
    pub fn get(&self, id: &SourceId) -> Option<&[f64]> {
        self.sources.iter().find(|(s, _)| s == id).map(|(_, v)| v.as_slice())
    }
}

/// Runs `variant` over a whole recording. `events` need not be sorted.
pub fn separate(
    mics: &[Vec<f64>],
    cfg: &SeparatorConfig,
    variant: Variant,
    events: &[SourceEvent],
) -> Result<SeparationOutput> {
    let started = Instant::now();
    let n = cfg.mic_positions.len();
    if mics.len() != n {
        return config_err(format!("{} microphone signals for {n} microphone positions", mics.len()));
    }
    let len = mics.first().map_or(0, Vec::len);
    if mics.iter().any(|m| m.len() != len) {
        return validation_err("microphone signals have different lengths");
    }
    cfg.stft.validate()?;
    let mut events: Vec<&SourceEvent> = events.iter().collect();
    events.sort_by_key(|e| e.at_sample);

    let mut outputs: Vec<(SourceId, Vec<f64>)> = Vec::new();
    let slot = |outputs: &mut Vec<(SourceId, Vec<f64>)>, id: &SourceId| match outputs.iter().position(|(s, _)| s == id) {
        Some(i) => i,
        None => {
            outputs.push((id.clone(), vec![0.0; len]));
            outputs.len() - 1
        }
    };

    if variant == Variant::Mic {
        // Every source slot receives the first microphone while active.
        let mut active: Vec<(SourceId, usize)> = Vec::new();
        let close = |outputs: &mut Vec<(SourceId, Vec<f64>)>, id: &SourceId, from: usize, to: usize| {
            let i = slot(outputs, id);
            outputs[i].1[from..to].copy_from_slice(&mics[0][from..to]);
        };
        for e in &events {
            let at = e.at_sample.min(len);
            match &e.action {
                EventAction::Add { id, .. } => {
                    if active.iter().any(|(s, _)| s == id) {
                        return validation_err(format!("source '{id}' is already active"));
                    }
                    slot(&mut outputs, id);
                    active.push((id.clone(), at));
                }
                EventAction::Remove { id } => {
                    let Some(p) = active.iter().position(|(s, _)| s == id) else {
                        return validation_err(format!("source '{id}' is not active"));
                    };
                    let (id, from) = active.remove(p);
                    close(&mut outputs, &id, from, at);
                }
            }
        }
        for (id, from) in active {
            close(&mut outputs, &id, from, len);
        }
        return Ok(finish(outputs, started, len, cfg.stft.sample_rate));
    }

    let stft = cfg.stft;
    let hop = stft.hop_size;
    let latency = stft.latency();
    let mut separator = Separator::new(cfg.clone(), variant)?;
    let mut analyzer = StftAnalyzer::new(stft, n)?;
    // One mono synthesizer per active source, in separator channel order.
    let mut synths: Vec<(SourceId, StftSynthesizer)> = Vec::new();
    let mut next_event = 0;
    let total = len + latency;
    let frames = total.div_ceil(hop);
    let mut block = vec![vec![0.0; hop]; n];
    let mut scratch = vec![Vec::with_capacity(hop)];
    for frame in 0..frames {
        let start = frame * hop;
        while next_event < events.len() && events[next_event].at_sample / hop <= frame {
            match &events[next_event].action {
                EventAction::Add { id, direction } => {
                    separator.add_source(id.clone(), direction)?;
                    synths.push((id.clone(), StftSynthesizer::new(stft, 1)?));
                    slot(&mut outputs, id);
                }
                EventAction::Remove { id } => {
                    separator.remove_source(id)?;
                    synths.retain(|(s, _)| s != id);
                }
            }
            next_event += 1;
        }
        for (b, m) in block.iter_mut().zip(mics) {
            for (i, v) in b.iter_mut().enumerate() {
                *v = m.get(start + i).copied().unwrap_or(0.0);
            }
        }
        let mut x = analyzer.analyze(&block)?;
        let Some(x) = x.pop() else {
            continue;
        };
        let y = separator.process(&x)?;
        for (m, (id, synth)) in synths.iter_mut().enumerate() {
            let mono = SpectralFrame::from_channels(y.frame_index(), vec![y.channel(m).to_vec()])?;
            scratch[0].clear();
            synth.push_frame(&mono, &mut scratch)?;
            let i = slot(&mut outputs, id);
            let out = &mut outputs[i].1;
            for (j, v) in scratch[0].iter().enumerate() {
                // Synthesis lags the input by the analysis latency.
                let t = (start + j) as isize - latency as isize;
                if t >= 0 && (t as usize) < len {
                    out[t as usize] += v;
                }
            }
        }
    }
    Ok(finish(outputs, started, len, stft.sample_rate))
}

fn finish(sources: Vec<(SourceId, Vec<f64>)>, started: Instant, len: usize, fs: f64) -> SeparationOutput {
    let elapsed = started.elapsed();
    let duration = len as f64 / fs;
    SeparationOutput {
        sources,
        elapsed,
        real_time_factor: if duration > 0.0 { elapsed.as_secs_f64() / duration } else { 0.0 },
    }
}

/// Events that make every listed source active from the first sample.
pub fn initial_sources(sources: &[(SourceId, Vec3)]) -> Vec<SourceEvent> {
    sources
        .iter()
        .map(|(id, direction)| SourceEvent {
            at_sample: 0,
            action: EventAction::Add {
                id: id.clone(),
                direction: *direction,
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{circular_array, direction_from_angles};
    use crate::simulate::{mix, speech_like, NoiseKind, NoiseSpec, Scenario, SourceSignal};

    fn small_stft() -> StftConfig {
        StftConfig {
            frame_size: 256,
            hop_size: 128,
            ..StftConfig::default()
        }
    }

    fn scenario(dirs: &[f64], snr_db: f64, len: usize) -> Scenario {
        Scenario {
            scene: ArrayScene {
                mic_positions: circular_array(6, 0.2),
                source_directions: dirs.iter().map(|&a| direction_from_angles(a, 0.0)).collect(),
                speed_of_sound: 343.0,
                sample_rate: 16_000.0,
            },
            sources: (0..dirs.len())
                .map(|j| SourceSignal::new(speech_like(len, 16_000.0, 40 + j as u64)))
                .collect(),
            noise: Some(NoiseSpec {
                kind: NoiseKind::White,
                snr_db,
            }),
            reverb: None,
            duration_samples: len,
            seed: 3,
        }
    }

    fn ids(dirs: &[f64]) -> Vec<(SourceId, Vec3)> {
        dirs.iter()
            .enumerate()
            .map(|(j, &a)| (SourceId(format!("s{j}")), direction_from_angles(a, 0.0)))
            .collect()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("beamformer".parse::<Variant>().is_err());
    }

    #[test]
    fn mic_variant_passes_first_mic_through() {
        let sc = scenario(&[0.0, 120.0], 5.0, 8000);
        let m = mix(&sc).unwrap();
        let cfg = SeparatorConfig::new(sc.scene.mic_positions.clone(), 343.0, small_stft());
        let out = separate(&m.mics, &cfg, Variant::Mic, &initial_sources(&ids(&[0.0, 120.0]))).unwrap();
        for (_, s) in &out.sources {
            assert_eq!(s, &m.mics[0]);
        }
    }

    #[test]
    fn single_mic_single_source_delay_and_sum_is_identity() {
        // With one mic at the origin W = 1, so the chain is analysis + synthesis.
        let sig = speech_like(6000, 16_000.0, 1);
        let cfg = SeparatorConfig::new(vec![[0.0; 3]], 343.0, small_stft());
        let src = initial_sources(&[(SourceId::from("a"), [1.0, 0.0, 0.0])]);
        let out = separate(&[sig.clone()], &cfg, Variant::DelayAndSum, &src).unwrap();
        let y = &out.sources[0].1;
        assert_eq!(y.len(), sig.len());
        for (a, b) in y.iter().zip(&sig) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn same_input_same_output() {
        let sc = scenario(&[0.0, 90.0], 0.0, 8000);
        let m = mix(&sc).unwrap();
        let cfg = SeparatorConfig::new(sc.scene.mic_positions.clone(), 343.0, small_stft());
        let ev = initial_sources(&ids(&[0.0, 90.0]));
        let a = separate(&m.mics, &cfg, Variant::GssMultiPf, &ev).unwrap();
        let b = separate(&m.mics, &cfg, Variant::GssMultiPf, &ev).unwrap();
        assert_eq!(a.sources, b.sources);
    }

    #[test]
    fn postfilter_never_amplifies() {
        let sc = scenario(&[0.0, 90.0, 200.0], 0.0, 16_000);
        let m = mix(&sc).unwrap();
        let stft = small_stft();
        let cfg = SeparatorConfig::new(sc.scene.mic_positions.clone(), 343.0, stft);
        let mut gss_only = Separator::new(cfg.clone(), Variant::Gss).unwrap();
        let mut filtered = Separator::new(cfg, Variant::GssMultiPf).unwrap();
        for (id, d) in ids(&[0.0, 90.0, 200.0]) {
            gss_only.add_source(id.clone(), &d).unwrap();
            filtered.add_source(id, &d).unwrap();
        }
        let mut analyzer = StftAnalyzer::new(stft, 6).unwrap();
        for x in analyzer.analyze(&m.mics).unwrap() {
            let y = gss_only.process(&x).unwrap();
            let s = filtered.process(&x).unwrap();
            for c in 0..3 {
                for (a, b) in s.channel(c).iter().zip(y.channel(c)) {
                    assert!(a.norm() <= b.norm() * (1.0 + 1e-12));
                }
                let st = filtered.postfilter().unwrap().state(c);
                assert!(st.gain().iter().all(|g| (0.0..=1.0).contains(g)));
                assert!(st.presence().iter().all(|p| (0.0..=1.0).contains(p)));
                assert!(st.lambda_stat().iter().chain(st.lambda_leak()).all(|l| *l >= 0.0 && l.is_finite()));
            }
        }
    }

    #[test]
    fn events_gate_outputs_and_seed_noise() {
        let sc = scenario(&[0.0, 150.0], 5.0, 16_000);
        let m = mix(&sc).unwrap();
        let cfg = SeparatorConfig::new(sc.scene.mic_positions.clone(), 343.0, small_stft());
        let mut ev = initial_sources(&ids(&[0.0]));
        ev.push(SourceEvent {
            at_sample: 4000,
            action: EventAction::Add {
                id: SourceId::from("late"),
                direction: direction_from_angles(150.0, 0.0),
            },
        });
        ev.push(SourceEvent {
            at_sample: 12_000,
            action: EventAction::Remove { id: SourceId::from("late") },
        });
        let out = separate(&m.mics, &cfg, Variant::GssMultiPf, &ev).unwrap();
        let late = out.get(&SourceId::from("late")).unwrap();
        // Frame boundaries: 4000 → frame 31 starts at 3968; 12000 → frame 93.
        // Output lags by `latency` before alignment, so the active span maps
        // back to [3968 - 128, 11904) in input time, with overlap-add tails.
        let lat = 128;
        assert!(late[..3968 - lat - 128].iter().all(|&v| v == 0.0));
        assert!(late[12_000..].iter().all(|&v| v == 0.0));
        assert!(late[6000..10_000].iter().any(|&v| v != 0.0));
        assert_eq!(out.sources.len(), 2);
    }

    #[test]
    fn duplicate_and_unknown_sources_are_rejected() {
        let cfg = SeparatorConfig::new(circular_array(4, 0.1), 343.0, small_stft());
        let mut sep = Separator::new(cfg, Variant::GssMultiPf).unwrap();
        sep.add_source(SourceId::from("a"), &[1.0, 0.0, 0.0]).unwrap();
        assert!(sep.add_source(SourceId::from("a"), &[0.0, 1.0, 0.0]).is_err());
        assert!(sep.remove_source(&SourceId::from("b")).is_err());
        assert!(sep.add_source(SourceId::from("c"), &[0.0, 0.0, 0.0]).is_err());
        // A failed add leaves both stages consistent.
        assert_eq!(sep.num_sources(), 1);
        assert_eq!(sep.postfilter().unwrap().num_sources(), 1);
    }
}
