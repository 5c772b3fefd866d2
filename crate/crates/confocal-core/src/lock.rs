//! Lock and vibration metrology: PDH error-signal model, slope
//! calibration from a swept trace, error-voltage to cavity-length
//! conversion, Welch power spectral densities with band RMS, piezo
//! calibration, and sample-vibration extraction from drive sweeps.
//!
//! All quantities are SI (Hz, m, V, s). Displacements come back in
//! meters; the CLI layer formats picometers.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fit::linear_least_squares;
use ndarray::Array2;

/// A sampled voltage record.
#[derive(Debug, Clone)]
pub struct NoiseTrace {
    /// Sample rate in Hz.
    pub rate: f64,
    /// Voltage samples.
    pub samples: Vec<f64>,
    pub label: String,
}

impl NoiseTrace {
    pub fn new(rate: f64, samples: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Input(format!("sample rate {rate} Hz must be positive")));
        }
        if samples.is_empty() {
            return Err(Error::Input("empty trace".into()));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite sample {v}")));
        }
        Ok(NoiseTrace {
            rate,
            samples,
            label: label.into(),
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    /// Mean-removed variance of the samples.
    pub fn variance(&self) -> f64 {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().sum::<f64>() / n;
        self.samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }
}

/// PDH error-signal shape of a cavity line, normalized to unit peak.
///
/// The reflection response is the impedance-matched Lorentzian
/// F(d) = (2id/k) / (1 + 2id/k); the error signal is the imaginary part
/// of the carrier-sideband interference F(d) F*(d+W) - F*(d) F(d-W).
/// The modulation depth scales carrier and sidebands together, so it
/// drops out of the unit-peak normalization.
#[derive(Debug, Clone)]
pub struct PdhModel {
    pub linewidth: f64,
    pub mod_freq: f64,
    pub mod_depth: f64,
    peak: f64,
}

impl PdhModel {
    pub fn new(linewidth: f64, mod_freq: f64, mod_depth: f64) -> Result<Self> {
        if !(linewidth > 0.0) || !linewidth.is_finite() {
            return Err(Error::Input(format!("linewidth {linewidth} Hz must be positive")));
        }
        if !(mod_freq > 0.0) || !mod_freq.is_finite() {
            return Err(Error::Input(format!(
                "modulation frequency {mod_freq} Hz must be positive"
            )));
        }
        if !(mod_depth > 0.0) || !mod_depth.is_finite() {
            return Err(Error::Input(format!(
                "modulation depth {mod_depth} rad must be positive"
            )));
        }
        let mut model = PdhModel {
            linewidth,
            mod_freq,
            mod_depth,
            peak: 1.0,
        };
        model.peak = model.find_peak();
        Ok(model)
    }

    fn reflection(&self, detuning: f64) -> Complex64 {
        let u = Complex64::new(0.0, 2.0 * detuning / self.linewidth);
        u / (1.0 + u)
    }

    fn raw(&self, detuning: f64) -> f64 {
        let f0 = self.reflection(detuning);
        let fp = self.reflection(detuning + self.mod_freq);
        let fm = self.reflection(detuning - self.mod_freq);
        (f0 * fp.conj() - f0.conj() * fm).im
    }

    fn find_peak(&self) -> f64 {
        let span = self.mod_freq + 5.0 * self.linewidth;
        let count = 16384usize;
        let mut best = (0usize, 0.0f64);
        let mut values = vec![0.0; count];
        for (i, v) in values.iter_mut().enumerate() {
            let d = -span + 2.0 * span * i as f64 / (count - 1) as f64;
            *v = self.raw(d).abs();
            if *v > best.1 {
                best = (i, *v);
            }
        }
        // parabolic refinement around the best sample
        let i = best.0.clamp(1, count - 2);
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() < 1e-300 {
            return b;
        }
        let shift = 0.5 * (a - c) / denom;
        let step = 2.0 * span / (count - 1) as f64;
        let d = -span + step * (i as f64 + shift.clamp(-1.0, 1.0));
        self.raw(d).abs().max(b)
    }

    /// Error signal at a detuning, unit peak, antisymmetric.
    pub fn error_signal(&self, detuning: f64) -> f64 {
        self.raw(detuning) / self.peak
    }

    /// Analytic slope of the normalized signal at zero detuning, per Hz.
    pub fn central_slope(&self) -> f64 {
        let x = 2.0 * self.mod_freq / self.linewidth;
        let raw = (4.0 / self.linewidth) * x * x / (1.0 + x * x);
        raw / self.peak
    }
}

/// One-shot evaluation of the normalized PDH error signal.
pub fn pdh_error_signal(
    detuning: f64,
    linewidth: f64,
    mod_freq: f64,
    mod_depth: f64,
) -> Result<f64> {
    Ok(PdhModel::new(linewidth, mod_freq, mod_depth)?.error_signal(detuning))
}

/// Swept PDH trace for slope calibration, center crossing mid-trace.
/// The sweep covers `span` Hz of detuning at a constant rate.
pub fn synthesize_pdh_sweep(
    model: &PdhModel,
    rate: f64,
    duration: f64,
    span: f64,
    amplitude: f64,
) -> Result<NoiseTrace> {
    if !(span > 0.0) || !(duration > 0.0) || !(amplitude > 0.0) {
        return Err(Error::Input("sweep span, duration, amplitude must be positive".into()));
    }
    let count = (rate * duration).round() as usize;
    if count < 16 {
        return Err(Error::Input("sweep trace would hold fewer than 16 samples".into()));
    }
    let sweep_rate = span / duration;
    let samples: Vec<f64> = (0..count)
        .map(|i| {
            let t = i as f64 / rate;
            let detuning = sweep_rate * (t - duration / 2.0);
            amplitude * model.error_signal(detuning)
        })
        .collect();
    NoiseTrace::new(rate, samples, "synthetic PDH sweep")
}

/// A zero crossing of the trace with its local slope in V/s.
struct Crossing {
    time: f64,
    slope: f64,
}

fn zero_crossings(trace: &NoiseTrace) -> Vec<Crossing> {
    let dt = 1.0 / trace.rate;
    let s = &trace.samples;
    let mut out = Vec::new();
    for i in 0..s.len() - 1 {
        if s[i] == 0.0 && s[i + 1] == 0.0 {
            continue;
        }
        if s[i] * s[i + 1] <= 0.0 && (s[i] != 0.0 || s[i + 1] != 0.0) {
            let frac = if s[i] == s[i + 1] {
                0.0
            } else {
                s[i] / (s[i] - s[i + 1])
            };
            // slope from a short least-squares window around the crossing
            let lo = i.saturating_sub(3);
            let hi = (i + 4).min(s.len() - 1);
            let n = hi - lo + 1;
            let tbar = (lo + hi) as f64 / 2.0 * dt;
            let mut num = 0.0;
            let mut den = 0.0;
            for j in lo..=hi {
                let t = j as f64 * dt - tbar;
                num += t * s[j];
                den += t * t;
            }
            if den == 0.0 || n < 3 {
                continue;
            }
            out.push(Crossing {
                time: (i as f64 + frac) * dt,
                slope: num / den,
            });
        }
    }
    out
}

/// Error-signal slope in V/Hz from a swept PDH trace.
///
/// The carrier is the steepest zero crossing; the first opposite-slope
/// crossings on either side are the sideband features, a known
/// 2 x sideband_freq apart, which fixes the time-to-frequency scale.
pub fn calibrate_slope(sweep: &NoiseTrace, sideband_freq: f64) -> Result<f64> {
    if !(sideband_freq > 0.0) {
        return Err(Error::Input(format!(
            "sideband frequency {sideband_freq} Hz must be positive"
        )));
    }
    let crossings = zero_crossings(sweep);
    let carrier = crossings
        .iter()
        .max_by(|a, b| a.slope.abs().total_cmp(&b.slope.abs()))
        .ok_or_else(|| Error::Calibration("no zero crossings in sweep".into()))?;
    let threshold = 0.1 * carrier.slope.abs();
    let mut left: Option<&Crossing> = None;
    let mut right: Option<&Crossing> = None;
    for c in &crossings {
        if c.slope * carrier.slope >= 0.0 || c.slope.abs() < threshold {
            continue;
        }
        if c.time < carrier.time {
            if left.map_or(true, |best| c.time > best.time) {
                left = Some(c);
            }
        } else if right.map_or(true, |best| c.time < best.time) {
            right = Some(c);
        }
    }
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        _ => {
            return Err(Error::Calibration(
                "sideband zero crossings not found on both sides of the carrier".into(),
            ))
        }
    };
    let dt = right.time - left.time;
    if dt <= 0.0 {
        return Err(Error::Calibration("sideband features coincide".into()));
    }
    let hz_per_second = 2.0 * sideband_freq / dt;
    Ok(carrier.slope / hz_per_second)
}

/// Frequency-discriminator bookkeeping of a locked cavity.
#[derive(Debug, Clone)]
pub struct LockCalibration {
    /// Error-signal slope in V/Hz.
    pub slope: f64,
    /// Cavity length in m.
    pub cavity_length: f64,
    /// Longitudinal mode index at the lock point.
    pub longitudinal_index: u64,
    /// Free spectral range in Hz.
    pub fsr: f64,
    /// Laser frequency in Hz.
    pub laser_frequency: f64,
    /// Bare-cavity RMS frequency excursion in Hz.
    pub bare_rms: f64,
}

impl LockCalibration {
    pub fn new(
        slope: f64,
        cavity_length: f64,
        longitudinal_index: u64,
        fsr: f64,
        laser_frequency: f64,
        bare_rms: f64,
    ) -> Result<Self> {
        let cal = LockCalibration {
            slope,
            cavity_length,
            longitudinal_index,
            fsr,
            laser_frequency,
            bare_rms,
        };
        cal.validate()?;
        Ok(cal)
    }

    /// The product q x FSR must reproduce the laser frequency to 1e-4.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cavity length", self.cavity_length),
            ("fsr", self.fsr),
            ("laser frequency", self.laser_frequency),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Input(format!("{name} {v} must be positive")));
            }
        }
        if !(self.bare_rms >= 0.0) {
            return Err(Error::Input(format!("bare RMS {} Hz negative", self.bare_rms)));
        }
        let product = self.longitudinal_index as f64 * self.fsr;
        let rel = (product - self.laser_frequency).abs() / self.laser_frequency;
        if rel > 1e-4 {
            return Err(Error::Input(format!(
                "q x fsr = {product:.6e} Hz disagrees with the laser frequency {:.6e} Hz \
                 (relative {rel:.2e}); check the longitudinal index",
                self.laser_frequency
            )));
        }
        Ok(())
    }
}

/// Cavity length displacement in m corresponding to an error-signal RMS.
/// delta_L = (V / slope) x L / (q x FSR).
pub fn displacement_from_error(v_rms: f64, cal: &LockCalibration) -> Result<f64> {
    cal.validate()?;
    if cal.slope == 0.0 || !cal.slope.is_finite() {
        return Err(Error::Input("error-signal slope is zero".into()));
    }
    if !(v_rms >= 0.0) {
        return Err(Error::Input(format!("RMS voltage {v_rms} negative")));
    }
    let dnu = v_rms / cal.slope;
    Ok(dnu.abs() * cal.cavity_length / (cal.longitudinal_index as f64 * cal.fsr))
}

/// Spectral window applied to each Welch segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
    Rectangular,
}

impl WindowKind {
    fn values(&self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::Hann => (0..n)
                .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()))
                .collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WindowKind::Hann => "hann",
            WindowKind::Rectangular => "rectangular",
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone)]
pub struct PsdSpec {
    /// Bin centers in Hz, 0 through Nyquist.
    pub frequencies: Vec<f64>,
    /// Density in V^2/Hz (or converted units downstream).
    pub density: Vec<f64>,
    pub window: WindowKind,
    pub segment_length: usize,
    pub overlap: usize,
    pub segments_averaged: usize,
    pub rate: f64,
}

impl PsdSpec {
    pub fn nyquist(&self) -> f64 {
        self.rate / 2.0
    }
}

/// Welch averaged periodogram, one-sided, power-normalized so that the
/// integral over frequency estimates the trace variance. Segments are
/// averaged in order, so the result is reproducible bit for bit.
pub fn compute_psd(
    trace: &NoiseTrace,
    segment_length: usize,
    overlap: usize,
    window: WindowKind,
) -> Result<PsdSpec> {
    if segment_length < 8 {
        return Err(Error::Input(format!("segment length {segment_length} < 8")));
    }
    if segment_length > trace.samples.len() {
        return Err(Error::Input(format!(
            "segment length {segment_length} exceeds trace length {}",
            trace.samples.len()
        )));
    }
    if overlap >= segment_length {
        return Err(Error::Input(format!(
            "overlap {overlap} must be smaller than the segment length {segment_length}"
        )));
    }
    let stride = segment_length - overlap;
    let w = window.values(segment_length);
    let win_power: f64 = w.iter().map(|v| v * v).sum();
    let half = segment_length / 2;
    let mut fft_planner = FftPlanner::<f64>::new();
    let fft = fft_planner.plan_fft_forward(segment_length);
    let mut density = vec![0.0f64; half + 1];
    let mut segments = 0usize;
    let mut start = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_length];
    while start + segment_length <= trace.samples.len() {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(trace.samples[start + j] * w[j], 0.0);
        }
        fft.process(&mut buf);
        for (k, d) in density.iter_mut().enumerate() {
            let power = buf[k].norm_sqr() / (trace.rate * win_power);
            let one_sided = if k == 0 || (segment_length % 2 == 0 && k == half) {
                power
            } else {
                2.0 * power
            };
            *d += one_sided;
        }
        segments += 1;
        start += stride;
    }
    if segments == 0 {
        return Err(Error::Input("trace shorter than one segment".into()));
    }
    for d in &mut density {
        *d /= segments as f64;
    }
    let frequencies: Vec<f64> = (0..=half)
        .map(|k| k as f64 * trace.rate / segment_length as f64)
        .collect();
    Ok(PsdSpec {
        frequencies,
        density,
        window,
        segment_length,
        overlap,
        segments_averaged: segments,
        rate: trace.rate,
    })
}

/// RMS over a band: sqrt of the trapezoidal integral of the density,
/// with linear interpolation at the band edges.
pub fn band_rms(psd: &PsdSpec, f_lo: f64, f_hi: f64) -> Result<f64> {
    let f = &psd.frequencies;
    let s = &psd.density;
    let (first, last) = (f[0], *f.last().unwrap());
    if !(f_lo < f_hi) {
        return Err(Error::Input(format!("empty band [{f_lo}, {f_hi}] Hz")));
    }
    let tol = 1e-9 * last.max(1.0);
    if f_lo < first - tol || f_hi > last + tol {
        return Err(Error::Input(format!(
            "band [{f_lo}, {f_hi}] Hz outside the PSD support [{first}, {last}] Hz"
        )));
    }
    let f_lo = f_lo.max(first);
    let f_hi = f_hi.min(last);
    let value_at = |freq: f64| -> f64 {
        match f.binary_search_by(|v| v.total_cmp(&freq)) {
            Ok(i) => s[i],
            Err(i) => {
                let (i0, i1) = (i - 1, i);
                let frac = (freq - f[i0]) / (f[i1] - f[i0]);
                s[i0] + frac * (s[i1] - s[i0])
            }
        }
    };
    let mut nodes = vec![(f_lo, value_at(f_lo))];
    for (freq, dens) in f.iter().zip(s.iter()) {
        if *freq > f_lo && *freq < f_hi {
            nodes.push((*freq, *dens));
        }
    }
    nodes.push((f_hi, value_at(f_hi)));
    let mut integral = 0.0;
    for pair in nodes.windows(2) {
        integral += 0.5 * (pair[0].1 + pair[1].1) * (pair[1].0 - pair[0].0);
    }
    Ok(integral.max(0.0).sqrt())
}

/// Piezo length-per-voltage calibration from successive transmission
/// peak voltages one FSR apart: gamma = (lambda/2) / mean step, with the
/// uncertainty taken from the half-spread of the steps.
pub fn piezo_gamma(peak_voltages: &[f64], wavelength: f64) -> Result<(f64, f64)> {
    if peak_voltages.len() < 2 {
        return Err(Error::Input(format!(
            "need at least two transmission peaks, got {}",
            peak_voltages.len()
        )));
    }
    if !(wavelength > 0.0) {
        return Err(Error::Input(format!("wavelength {wavelength} m must be positive")));
    }
    let steps: Vec<f64> = peak_voltages.windows(2).map(|w| w[1] - w[0]).collect();
    if steps.iter().any(|v| *v == 0.0) {
        return Err(Error::Input("repeated peak voltage; zero step".into()));
    }
    if steps.iter().any(|v| v.signum() != steps[0].signum()) {
        return Err(Error::Input("peak voltages must be monotone".into()));
    }
    let mean = steps.iter().sum::<f64>() / steps.len() as f64;
    let lo = steps.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = steps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let half_spread = (hi - lo) / 2.0;
    let gamma = (wavelength / 2.0) / mean.abs();
    let sigma = gamma * half_spread / mean.abs();
    Ok((gamma, sigma))
}

/// Linear response of lock frequency to sample drive, delta_nu = alpha x + beta.
#[derive(Debug, Clone)]
pub struct VibrationFit {
    /// Drive frequency this response was measured at, Hz.
    pub drive_frequency: f64,
    /// Slope in Hz per m of drive displacement.
    pub alpha: f64,
    pub alpha_sigma: f64,
    /// Offset in Hz.
    pub beta: f64,
    pub beta_sigma: f64,
    /// Fit residual RMS in Hz.
    pub residual_rms: f64,
}

/// Ordinary least squares for delta_nu = alpha x + beta.
/// Drives in m, responses in Hz.
pub fn fit_vibration_response(
    drive_frequency: f64,
    drives: &[f64],
    responses: &[f64],
) -> Result<VibrationFit> {
    if drives.len() != responses.len() {
        return Err(Error::Input(format!(
            "{} drives vs {} responses",
            drives.len(),
            responses.len()
        )));
    }
    if drives.len() < 3 {
        return Err(Error::Input(format!("need at least 3 points, got {}", drives.len())));
    }
    // scale the drive column to unit size so nm-scale drives against a
    // unit intercept stay well conditioned
    let x_scale = drives.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let x_scale = if x_scale > 0.0 { x_scale } else { 1.0 };
    let mut design = Array2::<f64>::zeros((drives.len(), 2));
    for (i, x) in drives.iter().enumerate() {
        design[(i, 0)] = *x / x_scale;
        design[(i, 1)] = 1.0;
    }
    let fit = linear_least_squares(&design, responses)?;
    Ok(VibrationFit {
        drive_frequency,
        alpha: fit.coefficients[0] / x_scale,
        alpha_sigma: fit.covariance[(0, 0)].max(0.0).sqrt() / x_scale,
        beta: fit.coefficients[1],
        beta_sigma: fit.covariance[(1, 1)].max(0.0).sqrt(),
        residual_rms: fit.residual_rms,
    })
}

/// Sample displacement with uncertainty, in m.
#[derive(Debug, Clone, Copy)]
pub struct SampleDisplacement {
    pub value: f64,
    pub sigma: f64,
    /// Set when alpha is consistent with zero within one sigma.
    pub ill_conditioned: bool,
}

/// Sample motion from the fitted response after removing the bare-cavity
/// floor: x = (beta - bare_rms) / alpha. `bare_sigma` propagates an
/// uncertainty on the floor when one is known.
pub fn sample_displacement(
    fit: &VibrationFit,
    bare_rms: f64,
    bare_sigma: Option<f64>,
) -> Result<SampleDisplacement> {
    if fit.alpha == 0.0 {
        return Err(Error::Input("alpha is zero; displacement undefined".into()));
    }
    if !(bare_rms >= 0.0) {
        return Err(Error::Input(format!("bare floor {bare_rms} Hz negative")));
    }
    let excess = fit.beta - bare_rms;
    let value = excess / fit.alpha;
    let sb = bare_sigma.unwrap_or(0.0);
    let var = (fit.beta_sigma * fit.beta_sigma + sb * sb) / (fit.alpha * fit.alpha)
        + (excess / (fit.alpha * fit.alpha)).powi(2) * fit.alpha_sigma * fit.alpha_sigma;
    Ok(SampleDisplacement {
        value,
        sigma: var.max(0.0).sqrt(),
        ill_conditioned: fit.alpha.abs() <= fit.alpha_sigma,
    })
}

/// Deterministic Gaussian source (Box-Muller over ChaCha8).
pub(crate) struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        GaussianSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1: f64 = loop {
            let v: f64 = self.rng.gen();
            if v > 0.0 {
                break v;
            }
        };
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// White Gaussian voltage trace with the given standard deviation.
pub fn synthesize_white_noise(
    rate: f64,
    count: usize,
    sigma: f64,
    seed: u64,
) -> Result<NoiseTrace> {
    if !(sigma >= 0.0) {
        return Err(Error::Input(format!("sigma {sigma} negative")));
    }
    let mut source = GaussianSource::new(seed);
    let samples: Vec<f64> = (0..count).map(|_| sigma * source.next()).collect();
    NoiseTrace::new(rate, samples, "synthetic white noise")
}

/// Random-phase shaped noise whose RMS inside `band` equals
/// `target_band_rms` exactly at synthesis time. The spectral shape is a
/// Lorentzian rolloff around `corner_freq` on a small white floor, a
/// stand-in for servo-suppressed cavity length noise.
pub fn synthesize_shaped_noise(
    rate: f64,
    count: usize,
    band: (f64, f64),
    target_band_rms: f64,
    corner_freq: f64,
    seed: u64,
) -> Result<NoiseTrace> {
    if count < 64 {
        return Err(Error::Input(format!("trace of {count} samples too short")));
    }
    if !(band.0 >= 0.0) || !(band.1 > band.0) || band.1 > rate / 2.0 {
        return Err(Error::Input(format!(
            "band [{}, {}] Hz invalid for rate {rate} Hz",
            band.0, band.1
        )));
    }
    if !(target_band_rms > 0.0) || !(corner_freq > 0.0) {
        return Err(Error::Input("target RMS and corner frequency must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = count / 2;
    let shape = |f: f64| 1.0 / (1.0 + (f / corner_freq).powi(2)) + 1e-4;
    // in-band variance: sum of amplitude^2 / 2 over bins inside the band
    let mut in_band = 0.0;
    for k in 1..half {
        let f = k as f64 * rate / count as f64;
        if f >= band.0 && f <= band.1 {
            in_band += shape(f) / 2.0;
        }
    }
    if in_band == 0.0 {
        return Err(Error::Input("no synthesis bins inside the band".into()));
    }
    let scale = target_band_rms / in_band.sqrt();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); count];
    for k in 1..half {
        let f = k as f64 * rate / count as f64;
        let amplitude = scale * shape(f).sqrt();
        let phase: f64 = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        let c = Complex64::from_polar(amplitude / 2.0, phase);
        spectrum[k] = c;
        spectrum[count - k] = c.conj();
    }
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(count);
    ifft.process(&mut spectrum);
    let samples: Vec<f64> = spectrum.iter().map(|v| v.re).collect();
    NoiseTrace::new(rate, samples, "synthetic shaped noise")
}

#[cfg(test)]
mod tests {
    use super::*;

    const C: f64 = 299_792_458.0;

    fn model() -> PdhModel {
        PdhModel::new(2.0e6, 15.0e6, 0.5).unwrap()
    }

    fn reference_cal(slope: f64) -> LockCalibration {
        let length = 10.0e-3;
        let fsr = C / (2.0 * length);
        let laser = C / 780.0e-9;
        let q = (laser / fsr).round() as u64;
        LockCalibration::new(slope, length, q, fsr, laser, 4.25e6).unwrap()
    }

    #[test]
    fn lock_point_gives_zero_signal() {
        assert_eq!(model().error_signal(0.0), 0.0);
    }

    #[test]
    fn error_signal_is_antisymmetric() {
        let m = model();
        for i in 1..=100 {
            let d = i as f64 / 100.0 * 10.0 * m.linewidth;
            let plus = m.error_signal(d);
            let minus = m.error_signal(-d);
            assert!(
                (plus + minus).abs() <= 1e-12 * plus.abs().max(1e-30),
                "asymmetry at {d}"
            );
        }
    }

    #[test]
    fn unit_peak_normalization() {
        let m = model();
        let mut peak = 0.0f64;
        for i in 0..20000 {
            let d = -20.0e6 + 40.0e6 * i as f64 / 19999.0;
            peak = peak.max(m.error_signal(d).abs());
        }
        assert!(peak <= 1.0 + 1e-9, "peak {peak}");
        assert!(peak > 0.999, "peak {peak}");
    }

    #[test]
    fn central_slope_matches_finite_difference() {
        let m = model();
        let h = 1e-4 * m.linewidth;
        let fd = (m.error_signal(h) - m.error_signal(-h)) / (2.0 * h);
        let analytic = m.central_slope();
        assert!(
            (fd - analytic).abs() / analytic.abs() < 1e-3,
            "fd {fd:.6e} vs analytic {analytic:.6e}"
        );
    }

    #[test]
    fn modulation_depth_does_not_change_the_shape() {
        let a = PdhModel::new(2.0e6, 15.0e6, 0.2).unwrap();
        let b = PdhModel::new(2.0e6, 15.0e6, 1.1).unwrap();
        for d in [-20.0e6, -3.0e6, 0.7e6, 9.0e6] {
            assert!((a.error_signal(d) - b.error_signal(d)).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_calibration_round_trip() {
        let m = model();
        let amplitude = 0.5;
        let sweep = synthesize_pdh_sweep(&m, 2.0e6, 0.1, 80.0e6, amplitude).unwrap();
        let injected = amplitude * m.central_slope();
        let recovered = calibrate_slope(&sweep, m.mod_freq).unwrap();
        assert!(
            (recovered - injected).abs() / injected.abs() < 0.01,
            "recovered {recovered:.4e} vs injected {injected:.4e}"
        );
    }

    #[test]
    fn slope_is_invariant_under_sweep_rate() {
        let m = model();
        let fast = synthesize_pdh_sweep(&m, 2.0e6, 0.05, 80.0e6, 0.5).unwrap();
        let slow = synthesize_pdh_sweep(&m, 2.0e6, 0.1, 80.0e6, 0.5).unwrap();
        let a = calibrate_slope(&fast, m.mod_freq).unwrap();
        let b = calibrate_slope(&slow, m.mod_freq).unwrap();
        assert!((a - b).abs() / b.abs() < 0.01, "{a:.4e} vs {b:.4e}");
    }

    #[test]
    fn missing_sidebands_is_a_calibration_error() {
        let m = model();
        // sweep narrower than the sideband spacing
        let sweep = synthesize_pdh_sweep(&m, 2.0e6, 0.05, 10.0e6, 0.5).unwrap();
        assert!(matches!(
            calibrate_slope(&sweep, m.mod_freq),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn lock_calibration_rejects_wrong_index() {
        let length = 10.0e-3;
        let fsr = C / (2.0 * length);
        let laser = C / 780.0e-9;
        assert!(LockCalibration::new(1e-6, length, 20000, fsr, laser, 0.0).is_err());
    }

    #[test]
    fn displacement_reference_values() {
        let slope = 2.5e-7;
        let cal = reference_cal(slope);
        // frequency excursions quoted as equivalent RMS voltages
        let for_dnu = |dnu: f64| displacement_from_error(dnu * slope, &cal).unwrap();
        let at_425 = for_dnu(4.25e6);
        let at_373 = for_dnu(3.73e6);
        assert!(
            (at_425 - 110.58e-12).abs() < 0.02e-12,
            "4.25 MHz -> {:.4} pm",
            at_425 * 1e12
        );
        assert!(
            (at_373 - 97.05e-12).abs() < 0.02e-12,
            "3.73 MHz -> {:.4} pm",
            at_373 * 1e12
        );
        assert_eq!(for_dnu(0.0), 0.0);
    }

    #[test]
    fn displacement_matches_laser_frequency_form() {
        let cal = reference_cal(1.3e-7);
        let v = 4.25e6 * cal.slope;
        let via_q = displacement_from_error(v, &cal).unwrap();
        let via_laser = (v / cal.slope) * cal.cavity_length / cal.laser_frequency;
        assert!((via_q - via_laser).abs() / via_laser < 1e-4);
    }

    #[test]
    fn zero_slope_is_rejected() {
        let mut cal = reference_cal(1e-6);
        cal.slope = 0.0;
        assert!(displacement_from_error(0.1, &cal).is_err());
    }

    #[test]
    fn white_noise_density_is_flat_at_the_analytic_level() {
        let rate = 1.0e6;
        let trace = synthesize_white_noise(rate, 1 << 18, 1.0, 11).unwrap();
        let psd = compute_psd(&trace, 4096, 2048, WindowKind::Hann).unwrap();
        let expected = 2.0 / rate;
        let interior = &psd.density[1..psd.density.len() - 1];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!(
            (mean - expected).abs() / expected < 0.05,
            "mean density {mean:.3e} vs {expected:.3e}"
        );
        // decade averages stay within ten percent
        for (lo, hi) in [(1.0e3, 1.0e4), (1.0e4, 1.0e5), (1.0e5, 4.0e5)] {
            let rms = band_rms(&psd, lo, hi).unwrap();
            let expect = (expected * (hi - lo)).sqrt();
            assert!(
                (rms - expect).abs() / expect < 0.1,
                "band [{lo}, {hi}]: {rms:.3e} vs {expect:.3e}"
            );
        }
    }

    #[test]
    fn pure_tone_carries_its_parseval_power() {
        let rate = 100.0e3;
        let amp = 0.3;
        let samples: Vec<f64> = (0..1 << 17)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / rate).sin())
            .collect();
        let trace = NoiseTrace::new(rate, samples, "tone").unwrap();
        let psd = compute_psd(&trace, 8192, 4096, WindowKind::Hann).unwrap();
        let total = band_rms(&psd, 0.0, psd.nyquist()).unwrap();
        let expected = amp / 2.0f64.sqrt();
        assert!(
            (total - expected).abs() / expected < 0.05,
            "tone rms {total:.4e} vs {expected:.4e}"
        );
        // a band that skips the tone holds almost nothing
        let off = band_rms(&psd, 2000.0, 10_000.0).unwrap();
        assert!(off < 1e-3 * expected, "off-band rms {off:.3e}");
    }

    #[test]
    fn dc_trace_puts_all_power_in_the_lowest_bin() {
        let trace = NoiseTrace::new(1000.0, vec![2.0; 4096], "dc").unwrap();
        let psd = compute_psd(&trace, 1024, 0, WindowKind::Rectangular).unwrap();
        let rest: f64 = psd.density[1..].iter().sum();
        assert!(psd.density[0] > 0.0);
        assert!(rest <= 1e-12 * psd.density[0], "leakage {rest:.3e}");
    }

    #[test]
    fn flat_band_rms_is_analytic() {
        let frequencies: Vec<f64> = (0..=1000).map(|k| k as f64).collect();
        let density = vec![4.0; frequencies.len()];
        let psd = PsdSpec {
            frequencies,
            density,
            window: WindowKind::Rectangular,
            segment_length: 0,
            overlap: 0,
            segments_averaged: 1,
            rate: 2000.0,
        };
        let rms = band_rms(&psd, 100.0, 600.0).unwrap();
        assert!((rms - (4.0f64 * 500.0).sqrt()).abs() < 1e-9);
        assert!(band_rms(&psd, 600.0, 600.0).is_err());
        assert!(band_rms(&psd, 100.0, 1500.0).is_err());
    }

    #[test]
    fn shaped_noise_reports_its_target_band_rms() {
        let rate = 2.0e5;
        let trace =
            synthesize_shaped_noise(rate, 1 << 19, (30.0, 1.0e5), 0.7, 1000.0, 23).unwrap();
        let psd = compute_psd(&trace, 8192, 4096, WindowKind::Hann).unwrap();
        let rms = band_rms(&psd, 30.0, 1.0e5).unwrap();
        assert!((rms - 0.7).abs() / 0.7 < 0.05, "band rms {rms:.4}");
        // full-support Parseval against the trace standard deviation
        let full = band_rms(&psd, 0.0, psd.nyquist()).unwrap();
        let std = trace.variance().sqrt();
        assert!((full - std).abs() / std < 0.05, "{full:.4e} vs {std:.4e}");
    }

    #[test]
    fn psd_input_validation() {
        let trace = NoiseTrace::new(1000.0, vec![0.0; 100], "short").unwrap();
        assert!(compute_psd(&trace, 256, 0, WindowKind::Hann).is_err());
        assert!(compute_psd(&trace, 64, 64, WindowKind::Hann).is_err());
        assert!(NoiseTrace::new(1000.0, vec![], "empty").is_err());
        assert!(NoiseTrace::new(1000.0, vec![f64::NAN], "nan").is_err());
    }

    #[test]
    fn piezo_gamma_reference_value() {
        let peaks = [0.0, 9.63, 19.26];
        let (gamma, _) = piezo_gamma(&peaks, 780.0e-9).unwrap();
        assert!(
            (gamma - 40.4984e-9).abs() < 1e-13,
            "gamma {:.4} nm/V",
            gamma * 1e9
        );
        // lambda/2 proportionality
        let (double, _) = piezo_gamma(&peaks, 1560.0e-9).unwrap();
        assert!((double - 2.0 * gamma).abs() < 1e-15);
    }

    #[test]
    fn piezo_gamma_uncertainty_from_spread() {
        let peaks = [0.0, 9.5, 19.2];
        let (gamma, sigma) = piezo_gamma(&peaks, 780.0e-9).unwrap();
        let expected = 390.0e-9 / 9.6;
        assert!((gamma - expected).abs() / expected < 1e-12);
        let expected_sigma = expected * 0.1 / 9.6;
        assert!((sigma - expected_sigma).abs() / expected_sigma < 1e-9);
        assert!(piezo_gamma(&[1.0], 780.0e-9).is_err());
    }

    #[test]
    fn exact_line_is_recovered_exactly() {
        let drives: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|x| x * 1e-9).collect();
        let responses: Vec<f64> = drives.iter().map(|x| 1e15 * x + 5e6).collect();
        let fit = fit_vibration_response(700.0, &drives, &responses).unwrap();
        assert!((fit.alpha - 1e15).abs() / 1e15 < 1e-9);
        assert!((fit.beta - 5e6).abs() / 5e6 < 1e-9);
        assert!(fit.residual_rms < 1e-3);
        assert!(fit.alpha_sigma < 1e-6 * fit.alpha.abs());
    }

    #[test]
    fn identical_drives_are_rank_deficient() {
        let drives = vec![2e-9; 5];
        let responses = vec![1.0e6, 1.1e6, 0.9e6, 1.0e6, 1.05e6];
        assert!(matches!(
            fit_vibration_response(700.0, &drives, &responses),
            Err(Error::RankDeficient(_))
        ));
        assert!(fit_vibration_response(700.0, &[1e-9, 2e-9], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn noisy_line_recovery_within_three_sigma() {
        let alpha_true = 1.0e15;
        let beta_true = 8.0e6;
        let noise = 0.2e6;
        let drives: Vec<f64> = (0..10).map(|i| (i + 1) as f64 * 1e-9).collect();
        let mut misses = 0;
        for seed in 0..1000u64 {
            let mut source = GaussianSource::new(seed);
            let responses: Vec<f64> = drives
                .iter()
                .map(|x| alpha_true * x + beta_true + noise * source.next())
                .collect();
            let fit = fit_vibration_response(700.0, &drives, &responses).unwrap();
            // sigmas from the known noise level; the residual-estimated
            // ones carry t-distribution tails at 8 degrees of freedom
            let n = drives.len() as f64;
            let s_est = fit.residual_rms * (n / (n - 2.0)).sqrt();
            let scale = noise / s_est;
            if (fit.alpha - alpha_true).abs() > 3.0 * fit.alpha_sigma * scale
                || (fit.beta - beta_true).abs() > 3.0 * fit.beta_sigma * scale
            {
                misses += 1;
            }
        }
        assert!(misses <= 10, "{misses} of 1000 runs outside 3 sigma");
    }

    #[test]
    fn response_offset_shifts_beta_only() {
        let drives: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) * 1e-9).collect();
        let mut source = GaussianSource::new(5);
        let responses: Vec<f64> = drives
            .iter()
            .map(|x| 0.9e15 * x + 3.0e6 + 0.1e6 * source.next())
            .collect();
        let shifted: Vec<f64> = responses.iter().map(|v| v + 2.5e6).collect();
        let a = fit_vibration_response(700.0, &drives, &responses).unwrap();
        let b = fit_vibration_response(700.0, &drives, &shifted).unwrap();
        assert!((b.alpha - a.alpha).abs() <= 1e-9 * a.alpha.abs());
        assert!((b.beta - (a.beta + 2.5e6)).abs() <= 1e-9 * b.beta.abs());
    }

    #[test]
    fn displacement_arithmetic_and_floor_case() {
        let fit = VibrationFit {
            drive_frequency: 700.0,
            alpha: 1e15,
            alpha_sigma: 1e12,
            beta: 14.25e6,
            beta_sigma: 0.1e6,
            residual_rms: 0.0,
        };
        let x = sample_displacement(&fit, 4.25e6, None).unwrap();
        assert_eq!(x.value, 10.0e-9);
        assert!(!x.ill_conditioned);
        let floor = VibrationFit { beta: 4.25e6, ..fit.clone() };
        assert_eq!(sample_displacement(&floor, 4.25e6, None).unwrap().value, 0.0);
        let shaky = VibrationFit {
            alpha_sigma: 2e15,
            ..fit
        };
        assert!(sample_displacement(&shaky, 4.25e6, None).unwrap().ill_conditioned);
    }

    #[test]
    fn end_to_end_sample_motion_recovery() {
        let gamma = 40.5e-9 / 1.0;
        let alpha_true = 0.8e15;
        let bare = 4.25e6;
        let x_sample = 6.0e-9;
        let beta_true = alpha_true * x_sample + bare;
        let volts: Vec<f64> = (1..=10).map(|i| i as f64 * 0.02).collect();
        let drives: Vec<f64> = volts.iter().map(|v| gamma * v).collect();
        let mut source = GaussianSource::new(97);
        let responses: Vec<f64> = drives
            .iter()
            .map(|x| alpha_true * x + beta_true + 0.15e6 * source.next())
            .collect();
        let fit = fit_vibration_response(700.0, &drives, &responses).unwrap();
        let x = sample_displacement(&fit, bare, None).unwrap();
        assert!(
            (x.value - x_sample).abs() < 1.0e-9,
            "recovered {:.3} nm",
            x.value * 1e9
        );
        assert!(!x.ill_conditioned);
    }
}
