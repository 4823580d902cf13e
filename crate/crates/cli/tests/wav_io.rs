use arraysep_cli::config::WavFormat;
use arraysep_cli::wav::{read, write};

fn ramp(len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|n| scale * ((n as f64 * 0.37).sin())).collect()
}

#[test]
fn float32_round_trip_is_exact_at_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let chans = vec![ramp(500, 0.9), ramp(500, -0.3), vec![0.0; 500]];
    assert_eq!(write(&path, 22_050, &chans, WavFormat::Float32).unwrap(), 0);
    let w = read(&path).unwrap();
    assert_eq!(w.sample_rate, 22_050);
    assert_eq!(w.channels.len(), 3);
    for (got, want) in w.channels.iter().zip(&chans) {
        for (g, v) in got.iter().zip(want) {
            assert_eq!(*g, *v as f32 as f64);
        }
    }
}

#[test]
fn pcm16_round_trip_within_one_step_and_counts_clipping() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let mut chans = vec![ramp(300, 0.99), ramp(300, 0.5)];
    chans[1][10] = 1.5;
    chans[1][11] = -2.0;
    assert_eq!(write(&path, 16_000, &chans, WavFormat::Pcm16).unwrap(), 2);
    let w = read(&path).unwrap();
    for (got, want) in w.channels.iter().zip(&chans) {
        for (g, v) in got.iter().zip(want) {
            assert!((g - v.clamp(-1.0, 1.0)).abs() <= 1.0 / 32768.0, "{g} vs {v}");
        }
    }
}

#[test]
fn unequal_channels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = write(&dir.path().join("x.wav"), 8000, &[vec![0.0; 3], vec![0.0; 4]], WavFormat::Float32).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn unreadable_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(read(&dir.path().join("missing.wav")).unwrap_err().exit_code(), 2);
    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"definitely not RIFF").unwrap();
    assert_eq!(read(&junk).unwrap_err().exit_code(), 2);
}
