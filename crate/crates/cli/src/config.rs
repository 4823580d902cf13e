//! Run configuration: a TOML file with one table per concern.
//!
//! ```toml
//! [scene]
//! sample_rate = 16000
//! duration = 10.0
//! mics = 8
//! radius = 0.25
//! seed = 2024
//!
//! [[source]]
//! name = "front"
//! azimuth = 0.0
//! signal = "speech"
//!
//! [noise]
//! kind = "white"
//! snr_db = -5.0
//!
//! [events]
//! script = ["at 3.0s add source front"]
//! ```
//!
//! See the README for every key.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use arraysep::geometry::{circular_array, direction_from_angles, ArrayScene, Vec3};
use arraysep::gss::SourceId;
use arraysep::pipeline::{EventAction, SeparatorConfig, SourceEvent, Variant};
use arraysep::simulate::{modulated_noise, speech_like, NoiseKind, NoiseSpec, Reverb, Scenario, SourceSignal};
use arraysep::stft::{StftConfig, WindowKind};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::wav;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scene: SceneSection,
    #[serde(default, rename = "source")]
    sources: Vec<SourceSection>,
    noise: Option<NoiseSection>,
    reverb: Option<ReverbSection>,
    #[serde(default)]
    stft: StftSection,
    #[serde(default)]
    gss: GssSection,
    #[serde(default)]
    postfilter: PostfilterSection,
    #[serde(default)]
    events: EventsSection,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSection {
    #[serde(default = "default_rate")]
    sample_rate: u32,
    /// Seconds.
    duration: f64,
    #[serde(default = "default_speed")]
    speed_of_sound: f64,
    mics: Option<usize>,
    radius: Option<f64>,
    mic_positions: Option<Vec<Vec3>>,
    #[serde(default)]
    seed: u64,
}

fn default_rate() -> u32 {
    16_000
}

fn default_speed() -> f64 {
    343.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSection {
    name: String,
    azimuth: f64,
    #[serde(default)]
    elevation: f64,
    /// `speech`, `modulated_noise`, or a path to a mono WAV file.
    #[serde(default = "default_signal")]
    signal: String,
    seed: Option<u64>,
    #[serde(default = "one")]
    gain: f64,
}

fn default_signal() -> String {
    "speech".into()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    /// `white` or a path to a WAV file with one or N channels.
    #[serde(default = "default_noise")]
    kind: String,
    snr_db: f64,
}

fn default_noise() -> String {
    "white".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReverbSection {
    rt60: f64,
    #[serde(default)]
    direct_to_reverb_db: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StftSection {
    frame_size: Option<usize>,
    hop_size: Option<usize>,
    window: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GssSection {
    mu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostfilterSection {
    eta: Option<f64>,
    alpha_s: Option<f64>,
    alpha_p: Option<f64>,
    g_min: Option<f64>,
    presence_low_db: Option<f64>,
    presence_high_db: Option<f64>,
    max_absence: Option<f64>,
    /// Seconds.
    mcra_window: Option<f64>,
    mcra_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventsSection {
    #[serde(default)]
    script: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    variant: Option<String>,
    out: Option<PathBuf>,
    wav_format: Option<String>,
    #[serde(default)]
    spectrograms: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

impl FromStr for WavFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(WavFormat::Pcm16),
            "float32" => Ok(WavFormat::Float32),
            other => Err(CliError::Config(format!("unknown wav_format '{other}' (pcm16 | float32)"))),
        }
    }
}

/// Which variants to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VariantChoice {
    All,
    One(Variant),
}

impl VariantChoice {
    pub fn variants(&self) -> Vec<Variant> {
        match self {
            VariantChoice::All => Variant::ALL.to_vec(),
            VariantChoice::One(v) => vec![*v],
        }
    }
}

impl FromStr for VariantChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(VariantChoice::All);
        }
        s.parse().map(VariantChoice::One).map_err(CliError::from)
    }
}

impl fmt::Display for VariantChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantChoice::All => f.write_str("all"),
            VariantChoice::One(v) => v.fmt(f),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub variant: Option<VariantChoice>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub spectrograms: bool,
}

/// A fully resolved run: the scene to render and how to process it.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub source_names: Vec<String>,
    pub events: Vec<SourceEvent>,
    pub separator: SeparatorConfig,
    pub variants: Vec<Variant>,
    pub out_dir: PathBuf,
    pub wav_format: WavFormat,
    pub spectrograms: bool,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    /// Relative file paths in `text` are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        build(file, base_dir, overrides)
    }
}

fn build(file: FileConfig, base: &Path, ov: &Overrides) -> Result<RunConfig> {
    let sc = &file.scene;
    let fs = sc.sample_rate as f64;
    if sc.sample_rate == 0 {
        return Err(CliError::Config("scene.sample_rate must be positive".into()));
    }
    if !(sc.duration > 0.0 && sc.duration.is_finite()) {
        return Err(CliError::Config("scene.duration must be positive".into()));
    }
    let len = (sc.duration * fs).round() as usize;
    let seed = ov.seed.unwrap_or(sc.seed);

    let mic_positions = match (&sc.mic_positions, sc.mics, sc.radius) {
        (Some(p), None, None) => p.clone(),
        (None, Some(n), Some(r)) => circular_array(n, r),
        _ => {
            return Err(CliError::Config(
                "scene needs either mic_positions or both mics and radius".into(),
            ))
        }
    };

    if file.sources.is_empty() {
        return Err(CliError::Config("no [[source]] tables".into()));
    }
    let mut names: Vec<String> = Vec::new();
    let mut directions = Vec::new();
    let mut signals = Vec::new();
    for (j, s) in file.sources.iter().enumerate() {
        if s.name.is_empty() || s.name.contains(char::is_whitespace) {
            return Err(CliError::Config(format!("source name '{}' must be one non-empty word", s.name)));
        }
        if names.contains(&s.name) {
            return Err(CliError::Config(format!("duplicate source name '{}'", s.name)));
        }
        names.push(s.name.clone());
        directions.push(direction_from_angles(s.azimuth, s.elevation));
        let src_seed = s.seed.unwrap_or(seed.wrapping_add(1000 + j as u64));
        let mut samples = match s.signal.as_str() {
            "speech" => speech_like(len, fs, src_seed),
            "modulated_noise" => modulated_noise(len, fs, src_seed),
            path => {
                let w = wav::read(&base.join(path))?;
                if w.sample_rate != sc.sample_rate {
                    return Err(CliError::Config(format!(
                        "source '{}': {path} is {} Hz, scene is {} Hz",
                        s.name, w.sample_rate, sc.sample_rate
                    )));
                }
                w.channels.into_iter().next().unwrap_or_default()
            }
        };
        samples.resize(len, 0.0);
        let mut sig = SourceSignal::new(samples);
        sig.gain = s.gain;
        signals.push(sig);
    }

    let events = parse_events(&file.events.script, &names, &directions, fs, len)?;
    for (j, sig) in signals.iter_mut().enumerate() {
        sig.active = activity(&events, &SourceId(names[j].clone()), len);
    }

    let noise = match &file.noise {
        None => None,
        Some(n) => {
            let kind = if n.kind == "white" {
                NoiseKind::White
            } else {
                let w = wav::read(&base.join(&n.kind))?;
                if w.sample_rate != sc.sample_rate {
                    return Err(CliError::Config(format!(
                        "noise file {} is {} Hz, scene is {} Hz",
                        n.kind, w.sample_rate, sc.sample_rate
                    )));
                }
                NoiseKind::Recorded(w.channels)
            };
            Some(NoiseSpec { kind, snr_db: n.snr_db })
        }
    };
    let reverb = file.reverb.as_ref().map(|r| Reverb {
        rt60: r.rt60,
        direct_to_reverb_db: r.direct_to_reverb_db,
    });

    let scenario = Scenario {
        scene: ArrayScene {
            mic_positions: mic_positions.clone(),
            source_directions: directions,
            speed_of_sound: sc.speed_of_sound,
            sample_rate: fs,
        },
        sources: signals,
        noise,
        reverb,
        duration_samples: len,
        seed,
    };
    scenario.validate()?;

    let defaults = StftConfig::default();
    let window = match &file.stft.window {
        Some(w) => w.parse::<WindowKind>().map_err(CliError::Config)?,
        None => defaults.window,
    };
    let stft = StftConfig::new(
        file.stft.frame_size.unwrap_or(defaults.frame_size),
        file.stft.hop_size.unwrap_or(defaults.hop_size),
        fs,
        window,
    )?;
    let mut separator = SeparatorConfig::new(mic_positions, sc.speed_of_sound, stft);
    if let Some(mu) = file.gss.mu {
        separator.gss.mu = mu;
    }
    let pf = &file.postfilter;
    let p = &mut separator.postfilter;
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut p.eta, pf.eta);
    set(&mut p.alpha_s, pf.alpha_s);
    set(&mut p.alpha_p, pf.alpha_p);
    set(&mut p.g_min, pf.g_min);
    set(&mut p.presence.low_db, pf.presence_low_db);
    set(&mut p.presence.high_db, pf.presence_high_db);
    set(&mut p.presence.max_absence, pf.max_absence);
    set(&mut p.mcra.presence_threshold, pf.mcra_threshold);
    if let Some(w) = pf.mcra_window {
        if !(w > 0.0 && w.is_finite()) {
            return Err(CliError::Config("postfilter.mcra_window must be positive".into()));
        }
        p.mcra.window_frames = ((w * fs / stft.hop_size as f64).round() as usize).max(1);
    }
    p.validate()?;
    if !(separator.gss.mu >= 0.0 && separator.gss.mu.is_finite()) {
        return Err(CliError::Config("gss.mu must be non-negative".into()));
    }

    let variant = match (&ov.variant, &file.run.variant) {
        (Some(v), _) => v.clone(),
        (None, Some(s)) => s.parse()?,
        (None, None) => VariantChoice::All,
    };
    let out_dir = match (&ov.out, &file.run.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("out"),
    };
    let wav_format = match &file.run.wav_format {
        Some(f) => f.parse()?,
        None => WavFormat::Float32,
    };

    Ok(RunConfig {
        scenario,
        source_names: names,
        events,
        separator,
        variants: variant.variants(),
        out_dir,
        wav_format,
        spectrograms: ov.spectrograms || file.run.spectrograms,
    })
}

/// Parses one `at <time> add|remove source <name>` line. Times take an `s`
/// or `ms` suffix, or none for seconds.
pub fn parse_event_line(line: &str) -> Result<(f64, bool, String)> {
    let bad = || CliError::Config(format!("malformed event '{line}' (expected: at 3.0s add source NAME)"));
    let words: Vec<&str> = line.split_whitespace().collect();
    let [at, time, action, source, name] = words.as_slice() else {
        return Err(bad());
    };
    if *at != "at" || *source != "source" {
        return Err(bad());
    }
    let seconds = if let Some(ms) = time.strip_suffix("ms") {
        ms.parse::<f64>().map(|v| v / 1000.0)
    } else {
        time.strip_suffix('s').unwrap_or(time).parse::<f64>()
    }
    .map_err(|_| bad())?;
    if !(seconds >= 0.0 && seconds.is_finite()) {
        return Err(bad());
    }
    let add = match *action {
        "add" => true,
        "remove" => false,
        _ => return Err(bad()),
    };
    Ok((seconds, add, name.to_string()))
}

fn parse_events(
    script: &[String],
    names: &[String],
    directions: &[Vec3],
    fs: f64,
    len: usize,
) -> Result<Vec<SourceEvent>> {
    let mut added = vec![None; names.len()];
    let mut removed = vec![None; names.len()];
    for line in script {
        let (t, add, name) = parse_event_line(line)?;
        let Some(j) = names.iter().position(|n| *n == name) else {
            return Err(CliError::Config(format!("event names unknown source '{name}'")));
        };
        let at = ((t * fs).round() as usize).min(len);
        let slot = if add { &mut added[j] } else { &mut removed[j] };
        if slot.replace(at).is_some() {
            return Err(CliError::Config(format!(
                "source '{name}' has more than one {} event",
                if add { "add" } else { "remove" }
            )));
        }
    }
    let mut events = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let start = added[j].unwrap_or(0);
        if let Some(stop) = removed[j] {
            if stop <= start {
                return Err(CliError::Config(format!("source '{name}' is removed before it is added")));
            }
        }
        let id = SourceId(name.clone());
        events.push(SourceEvent {
            at_sample: start,
            action: EventAction::Add {
                id: id.clone(),
                direction: directions[j],
            },
        });
        if let Some(stop) = removed[j] {
            events.push(SourceEvent {
                at_sample: stop,
                action: EventAction::Remove { id },
            });
        }
    }
    events.sort_by_key(|e| e.at_sample);
    Ok(events)
}

fn activity(events: &[SourceEvent], id: &SourceId, len: usize) -> Option<std::ops::Range<usize>> {
    let mut start = 0;
    let mut stop = len;
    for e in events {
        match &e.action {
            EventAction::Add { id: i, .. } if i == id => start = e.at_sample,
            EventAction::Remove { id: i } if i == id => stop = e.at_sample,
            _ => {}
        }
    }
    (start != 0 || stop != len).then_some(start..stop)
}
