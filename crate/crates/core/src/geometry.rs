//! Far-field array geometry: propagation delays and steering matrices.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{validation_err, Result};

pub type Vec3 = [f64; 3];

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Unit vector pointing from the array towards a far-field source.
pub fn direction_from_angles(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

/// `count` microphones evenly spaced on a horizontal circle, the first on the +x axis.
pub fn circular_array(count: usize, radius: f64) -> Vec<Vec3> {
    (0..count)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / count as f64;
            [radius * phi.cos(), radius * phi.sin(), 0.0]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayScene {
    /// Microphone positions in metres.
    pub mic_positions: Vec<Vec3>,
    /// Unit vectors from the array towards each source.
    pub source_directions: Vec<Vec3>,
    /// Metres per second.
    pub speed_of_sound: f64,
    pub sample_rate: f64,
}

impl ArrayScene {
    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.is_empty() {
            return validation_err("scene has no microphones");
        }
        if self.source_directions.is_empty() {
            return validation_err("scene has no sources");
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return validation_err(format!("speed of sound {} must be positive", self.speed_of_sound));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return validation_err(format!("sample rate {} must be positive", self.sample_rate));
        }
        if self.mic_positions.iter().flatten().any(|v| !v.is_finite()) {
            return validation_err("microphone position is not finite");
        }
        for (j, d) in self.source_directions.iter().enumerate() {
            let norm = dot(d, d).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return validation_err(format!("source {j} has a zero-norm direction"));
            }
            if (norm - 1.0).abs() > 1e-9 {
                return validation_err(format!("source {j} direction has norm {norm}, expected 1"));
            }
        }
        Ok(())
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn num_sources(&self) -> usize {
        self.source_directions.len()
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.mic_positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.mic_positions {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi / n;
            }
        }
        c
    }

    /// Arrival delay of a plane wave from `direction` at every microphone, in
    /// samples relative to the array centroid.
    pub fn source_delays(&self, direction: &Vec3) -> Vec<f64> {
        let c = self.centroid();
        let scale = self.sample_rate / self.speed_of_sound;
        self.mic_positions
            .iter()
            .map(|p| {
                let rel = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                -dot(&rel, direction) * scale
            })
            .collect()
    }
}

/// N×M table of arrival delays in samples, `delays[i][j]` for mic i and source j.
///
/// A microphone closer to the source hears it earlier and gets a negative
/// delay; delays of each source sum to zero over the array.
pub fn delays(scene: &ArrayScene) -> Result<Vec<Vec<f64>>> {
    scene.validate()?;
    let per_source: Vec<Vec<f64>> = scene
        .source_directions
        .iter()
        .map(|d| scene.source_delays(d))
        .collect();
    Ok((0..scene.num_mics())
        .map(|i| per_source.iter().map(|col| col[i]).collect())
        .collect())
}

/// Per-bin steering vector of one source: `a_i(k)` for all mics, bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    num_mics: usize,
    data: Vec<Complex64>,
}

impl SteeringVector {
    pub fn from_delays(delays: &[f64], frame_size: usize) -> Self {
        let num_bins = frame_size / 2 + 1;
        let mut data = Vec::with_capacity(num_bins * delays.len());
        for k in 0..num_bins {
            let omega = -2.0 * PI * k as f64 / frame_size as f64;
            data.extend(delays.iter().map(|&d| Complex64::from_polar(1.0, omega * d)));
        }
        Self {
            num_mics: delays.len(),
            data,
        }
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_bins(&self) -> usize {
        self.data.len() / self.num_mics
    }

    pub fn bin(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.num_mics..(k + 1) * self.num_mics]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// Per-bin N×M matrices `A(k)` with `a_ij(k) = exp(-j 2π (k / frame_size) δ_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    frame_size: usize,
    columns: Vec<SteeringVector>,
}

impl SteeringMatrix {
    pub fn num_mics(&self) -> usize {
        self.columns.first().map_or(0, SteeringVector::num_mics)
    }

    pub fn num_sources(&self) -> usize {
        self.columns.len()
    }

    pub fn num_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn get(&self, k: usize, mic: usize, source: usize) -> Complex64 {
        self.columns[source].bin(k)[mic]
    }

    pub fn column(&self, source: usize) -> &SteeringVector {
        &self.columns[source]
    }

    pub fn into_columns(self) -> Vec<SteeringVector> {
        self.columns
    }
}

/// Builds `A(k)` for `k = 0..=frame_size/2` from an N×M delay table.
pub fn steering_matrix(delays: &[Vec<f64>], frame_size: usize) -> Result<SteeringMatrix> {
    if delays.iter().flatten().any(|d| !d.is_finite()) {
        return validation_err("delay table contains non-finite values");
    }
    let num_sources = delays.first().map_or(0, Vec::len);
    if delays.iter().any(|row| row.len() != num_sources) {
        return validation_err("delay table rows have different lengths");
    }
    let columns = (0..num_sources)
        .map(|j| {
            let col: Vec<f64> = delays.iter().map(|row| row[j]).collect();
            SteeringVector::from_delays(&col, frame_size)
        })
        .collect();
    Ok(SteeringMatrix { frame_size, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_scene(dir: Vec3) -> ArrayScene {
        ArrayScene {
            mic_positions: vec![[-0.17, 0.0, 0.0], [0.17, 0.0, 0.0]],
            source_directions: vec![dir],
            speed_of_sound: 340.0,
            sample_rate: 16_000.0,
        }
    }

    #[test]
    fn coincident_mics_have_zero_delay() {
        let scene = ArrayScene {
            mic_positions: vec![[0.0; 3]; 4],
            source_directions: vec![[1.0, 0.0, 0.0], direction_from_angles(37.0, 10.0)],
            speed_of_sound: 343.0,
            sample_rate: 16_000.0,
        };
        assert!(delays(&scene).unwrap().iter().flatten().all(|&d| d == 0.0));
    }

    #[test]
    fn broadside_pair_has_no_relative_delay() {
        let d = delays(&pair_scene([0.0, 1.0, 0.0])).unwrap();
        assert_eq!(d[0][0] - d[1][0], 0.0);
    }

    #[test]
    fn endfire_pair_delay_matches_path_length() {
        let scene = pair_scene([1.0, 0.0, 0.0]);
        let d = delays(&scene).unwrap();
        // Independent route: distance from a far point source on +x to each mic.
        let far = [1.0e7, 0.0, 0.0];
        let path = |p: &Vec3| ((far[0] - p[0]).powi(2) + (far[1] - p[1]).powi(2)).sqrt();
        let want = (path(&scene.mic_positions[0]) - path(&scene.mic_positions[1])) / 340.0 * 16_000.0;
        assert!((want - 16.0).abs() < 1e-6);
        assert!((d[0][0] - d[1][0] - want).abs() < 1e-6);
        // The mic nearer the source hears it first.
        assert!(d[1][0] < d[0][0]);
    }

    #[test]
    fn zero_direction_is_rejected() {
        assert!(delays(&pair_scene([0.0, 0.0, 0.0])).is_err());
        assert!(delays(&pair_scene([2.0, 0.0, 0.0])).is_err());
        let mut s = pair_scene([1.0, 0.0, 0.0]);
        s.speed_of_sound = 0.0;
        assert!(delays(&s).is_err());
    }

    #[test]
    fn zero_delays_give_all_ones() {
        let a = steering_matrix(&vec![vec![0.0; 3]; 4], 64).unwrap();
        for k in 0..a.num_bins() {
            for i in 0..4 {
                for j in 0..3 {
                    assert_eq!(a.get(k, i, j), Complex64::new(1.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn half_frame_delay_flips_sign_at_bin_one() {
        let a = steering_matrix(&[vec![32.0]], 64).unwrap();
        assert!((a.get(1, 0, 0) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matches_direct_exponential() {
        let table = vec![vec![0.3, -2.75], vec![11.1, 0.0], vec![-7.4, 5.5]];
        let a = steering_matrix(&table, 256).unwrap();
        for k in [0usize, 1, 17, 64, 128] {
            for (i, row) in table.iter().enumerate() {
                for (j, &d) in row.iter().enumerate() {
                    let phase = -2.0 * PI * k as f64 * d / 256.0;
                    let want = Complex64::new(phase.cos(), phase.sin());
                    assert!((a.get(k, i, j) - want).norm() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn steering_invariants(
            mics in prop::collection::vec(prop::array::uniform3(-0.5f64..0.5), 1..8),
            az in 0.0f64..360.0,
            el in -80.0f64..80.0,
        ) {
            let scene = ArrayScene {
                mic_positions: mics,
                source_directions: vec![direction_from_angles(az, el)],
                speed_of_sound: 343.0,
                sample_rate: 16_000.0,
            };
            let d = delays(&scene).unwrap();
            let sum: f64 = d.iter().map(|r| r[0]).sum();
            prop_assert!(sum.abs() < 1e-9);
            let n = 128;
            let a = steering_matrix(&d, n).unwrap();
            for k in 0..a.num_bins() {
                for i in 0..scene.num_mics() {
                    let v = a.get(k, i, 0);
                    prop_assert!((v.norm() - 1.0).abs() < 1e-9);
                    if k == 0 {
                        prop_assert_eq!(v, Complex64::new(1.0, 0.0));
                    }
                    // The negative-frequency image is the conjugate, so the
                    // implied impulse response is real.
                    let mirror = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64 * d[i][0]);
                    prop_assert!((mirror - v.conj()).norm() < 1e-9);
                }
            }
        }
    }
}
