//! Linear convolution and cross-correlation through zero-padded real FFTs.

use num_complex::Complex64;
use realfft::RealFftPlanner;

fn spectra(a: &[f64], b: &[f64], n: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let run = |x: &[f64]| {
        let mut buf = vec![0.0; n];
        buf[..x.len()].copy_from_slice(x);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("fft buffer sizes");
        out
    };
    (run(a), run(b))
}

fn inverse(mut spec: Vec<Complex64>, n: usize) -> Vec<f64> {
    let inv = RealFftPlanner::<f64>::new().plan_fft_inverse(n);
    spec[0].im = 0.0;
    if let Some(last) = spec.last_mut() {
        last.im = 0.0;
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut spec, &mut out).expect("fft buffer sizes");
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let len = a.len() + b.len() - 1;
    let n = len.next_power_of_two();
    let (fa, fb) = spectra(a, b, n);
    let prod = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = inverse(prod, n);
    out.truncate(len);
    out
}

/// `r[lag] = Σ_n a[n + lag] b[n]` for `lag` in `-(b.len()-1) ..= a.len()-1`,
/// returned with index `lag + b.len() - 1`.
pub(crate) fn cross_correlate(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let len = a.len() + b.len() - 1;
    let n = len.next_power_of_two();
    let (fa, fb) = spectra(a, b, n);
    let prod = fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect();
    let circ = inverse(prod, n);
    // Negative lags wrap to the end of the circular result.
    let neg = b.len() - 1;
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&circ[n - neg..]);
    out.extend_from_slice(&circ[..a.len()]);
    out
}

/// Zero-phase filtering by a real gain curve. `gain` receives the bin
/// frequency as a fraction of the sample rate, in `[0, 0.5]`.
pub(crate) fn shape(x: &[f64], gain: impl Fn(f64) -> f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len().next_power_of_two();
    let (mut spec, _) = spectra(x, &[], n);
    for (k, v) in spec.iter_mut().enumerate() {
        *v *= gain(k as f64 / n as f64);
    }
    let mut out = inverse(spec, n);
    out.truncate(x.len());
    out
}
