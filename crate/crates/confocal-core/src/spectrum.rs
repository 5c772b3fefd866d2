//! Transmission spectra: synthesis from mode overlaps and round-trip
//! losses, Lorentzian peak fitting and finesse extraction.
//!
//! Per-mode lines are Lorentzian rather than full Airy; at the finesse
//! levels this library targets (80 and above) the difference is below a
//! percent. Frequency axes are offsets from the reference family
//! resonance, never absolute optical frequencies, to keep 100 MHz scale
//! structure out of the 384 THz floating-point noise floor.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::fit_curve;
use crate::geometry::CavityGeometry;
use crate::grid::FieldGrid;
use crate::mask::TransmissionMask;
use crate::modes::{ModeBasis, ParityFamily};
use crate::solver::{
    finesse_from_amplitude, mask_overlap_matrix, par_matmul, round_trip_operator,
};

/// Peaks weaker than this fraction of the tallest line are not annotated.
const PEAK_FLOOR: f64 = 1e-3;

/// How the spectrum was synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    /// Per-mode Lorentzians from the diagonal of the round-trip matrix;
    /// valid once transverse modes are split by more than a linewidth.
    Diagonal,
    /// Lines from eigenmodes of the full round-trip operator; required
    /// near degeneracy where the mask mixes family members.
    Eigenmodes,
    /// Loaded from disk or otherwise not synthesized here.
    External,
}

/// One annotated peak of a sampled spectrum.
#[derive(Debug, Clone, Copy)]
pub struct PeakAnnotation {
    /// Offset of the maximum from the reference resonance (Hz).
    pub center: f64,
    pub height: f64,
    /// Full width at half maximum estimated from the samples (Hz).
    pub width: f64,
}

/// A sampled transmission spectrum with peak annotations.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Strictly increasing offsets from the reference resonance (Hz).
    pub offsets: Vec<f64>,
    /// Non-negative transmission per bin (dimensionless).
    pub transmission: Vec<f64>,
    /// Absolute frequency the offsets are measured from (Hz).
    pub reference_frequency: f64,
    pub peaks: Vec<PeakAnnotation>,
    pub method: SpectrumMethod,
}

impl Spectrum {
    /// Validate samples and annotate peaks.
    pub fn from_samples(
        offsets: Vec<f64>,
        transmission: Vec<f64>,
        reference_frequency: f64,
        method: SpectrumMethod,
    ) -> Result<Self> {
        if offsets.len() != transmission.len() {
            return Err(Error::Input(format!(
                "{} offsets vs {} transmission samples",
                offsets.len(),
                transmission.len()
            )));
        }
        if offsets.len() < 2 {
            return Err(Error::Input("a spectrum needs at least two bins".into()));
        }
        for w in offsets.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Input(format!(
                    "frequency axis must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(t) = transmission.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::Input(format!("negative transmission sample {t}")));
        }
        let peaks = find_peaks(&offsets, &transmission);
        Ok(Spectrum {
            offsets,
            transmission,
            reference_frequency,
            peaks,
            method,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Mean bin spacing (Hz).
    pub fn bin_width(&self) -> f64 {
        (self.offsets[self.len() - 1] - self.offsets[0]) / (self.len() - 1) as f64
    }

    /// Trapezoidal integral of the transmission over the full axis (Hz).
    pub fn integrated_transmission(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.len() {
            acc += 0.5
                * (self.transmission[i] + self.transmission[i - 1])
                * (self.offsets[i] - self.offsets[i - 1]);
        }
        acc
    }
}

/// Local maxima above a relative floor, with half-maximum widths
/// interpolated from the neighboring samples.
fn find_peaks(offsets: &[f64], transmission: &[f64]) -> Vec<PeakAnnotation> {
    let n = transmission.len();
    let max = transmission.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let floor = PEAK_FLOOR * max;
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        let t = transmission[i];
        if t < floor || t < transmission[i - 1] || t <= transmission[i + 1] {
            continue;
        }
        let half = t / 2.0;
        let left = half_crossing(offsets, transmission, i, half, -1);
        let right = half_crossing(offsets, transmission, i, half, 1);
        peaks.push(PeakAnnotation {
            center: offsets[i],
            height: t,
            width: right - left,
        });
    }
    peaks
}

/// Offset where the curve crosses `level` walking from `i`, linearly
/// interpolated; falls back to the data edge.
fn half_crossing(offsets: &[f64], transmission: &[f64], i: usize, level: f64, dir: i64) -> f64 {
    let n = transmission.len() as i64;
    let mut j = i as i64;
    loop {
        let next = j + dir;
        if next < 0 || next >= n {
            return offsets[j as usize];
        }
        let (tj, tn) = (transmission[j as usize], transmission[next as usize]);
        if tn <= level {
            let f = if (tj - tn).abs() > 0.0 {
                (tj - level) / (tj - tn)
            } else {
                0.0
            };
            return offsets[j as usize] + f * (offsets[next as usize] - offsets[j as usize]);
        }
        // walking uphill again means the level is never reached on this side
        if tn > tj {
            return offsets[next as usize];
        }
        j = next;
    }
}

/// Airy peak transmission of a two-mirror cavity whose round-trip field
/// amplitude is `rho`.
fn peak_transmission(geometry: &CavityGeometry, rho: f64) -> f64 {
    let t1 = 1.0 - geometry.reflectivity_upper;
    let t2 = 1.0 - geometry.reflectivity_lower;
    let rr = (geometry.reflectivity_upper * geometry.reflectivity_lower).sqrt();
    t1 * t2 * rho / (rr * (1.0 - rho) * (1.0 - rho))
}

struct LineComponent {
    center: f64,
    fwhm: f64,
    height: f64,
}

/// Synthesize the transmission spectrum of the masked cavity for a given
/// pump, over `range` (Hz offsets from the reference resonance) in `bins`
/// samples.
///
/// Away from degeneracy each basis mode contributes its own Lorentzian
/// (diagonal approximation); once the family collapses within a linewidth
/// the lines come from the eigenmodes of the round-trip operator, where
/// mask-induced mixing matters. Longitudinal copies of every line are
/// replicated at multiples of the free spectral range across the window.
pub fn transmission_spectrum(
    geometry: &CavityGeometry,
    mask: &TransmissionMask,
    basis: &ModeBasis,
    pump: &FieldGrid,
    range: (f64, f64),
    bins: usize,
) -> Result<Spectrum> {
    if *geometry != basis.geometry {
        return Err(Error::Input(
            "spectrum geometry differs from the geometry the basis was built from".into(),
        ));
    }
    if !(range.1 > range.0) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(Error::Input(format!(
            "invalid frequency range {:?}",
            range
        )));
    }
    if bins < 2 {
        return Err(Error::Input(format!("at least 2 bins required, got {bins}")));
    }
    let overlaps = basis.project(pump)?;
    let fsr = geometry.fsr();
    let detunings = basis.relative_frequencies();
    let spread = detunings.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - detunings.iter().cloned().fold(f64::INFINITY, f64::min);
    let nominal_fwhm =
        fsr / finesse_from_amplitude(geometry.bare_round_trip_amplitude(), fsr)?.finesse;
    let method = if spread <= nominal_fwhm {
        SpectrumMethod::Eigenmodes
    } else {
        SpectrumMethod::Diagonal
    };

    let mut components: Vec<LineComponent> = Vec::new();
    match method {
        SpectrumMethod::Diagonal => {
            let b = mask_overlap_matrix(mask, basis)?;
            let bb = par_matmul(&b, &b);
            let bare = geometry.bare_round_trip_amplitude();
            for (k, delta) in detunings.iter().enumerate() {
                let rho = bare * bb[(k, k)].norm();
                push_line(
                    &mut components,
                    geometry,
                    fsr,
                    rho,
                    *delta,
                    overlaps[k].norm_sqr(),
                )?;
            }
        }
        SpectrumMethod::Eigenmodes => {
            let op = round_trip_operator(geometry, mask, basis, 0.0)?;
            let spectrum = op.eigendecompose()?;
            let t_rt = geometry.round_trip_time();
            for j in 0..spectrum.len() {
                let lambda = spectrum.eigenvalues[j];
                let mut overlap = Complex64::new(0.0, 0.0);
                for i in 0..basis.len() {
                    overlap += spectrum.eigenvectors[(i, j)].conj() * overlaps[i];
                }
                // resonance sits where the probe detuning cancels the
                // round-trip eigenphase
                let center = lambda.arg() / (2.0 * std::f64::consts::PI * t_rt);
                push_line(
                    &mut components,
                    geometry,
                    fsr,
                    lambda.norm(),
                    center,
                    overlap.norm_sqr(),
                )?;
            }
        }
        SpectrumMethod::External => unreachable!(),
    }

    let max_height = components.iter().map(|c| c.height).fold(0.0f64, f64::max);
    components.retain(|c| c.height > 1e-12 * max_height);

    // replicate each line at longitudinal neighbors that still reach into
    // the window
    let mut replicated: Vec<LineComponent> = Vec::new();
    for c in &components {
        let pad = 8.0 * c.fwhm;
        let p_lo = ((range.0 - pad - c.center) / fsr).floor() as i64;
        let p_hi = ((range.1 + pad - c.center) / fsr).ceil() as i64;
        for p in p_lo..=p_hi {
            let center = c.center + p as f64 * fsr;
            if center >= range.0 - pad && center <= range.1 + pad {
                replicated.push(LineComponent { center, ..*c });
            }
        }
    }

    let bin_width = (range.1 - range.0) / (bins - 1) as f64;
    let narrowest = replicated
        .iter()
        .filter(|c| c.center >= range.0 && c.center <= range.1)
        .map(|c| c.fwhm)
        .fold(f64::INFINITY, f64::min);
    if narrowest.is_finite() && bin_width > narrowest / 4.0 {
        let needed = ((range.1 - range.0) / (narrowest / 4.0)).ceil() as usize + 1;
        return Err(Error::Resolution(format!(
            "bin width {bin_width:.3e} Hz undersamples the narrowest line \
             (fwhm {narrowest:.3e} Hz); use at least {needed} bins"
        )));
    }

    let offsets: Vec<f64> = (0..bins)
        .map(|i| range.0 + i as f64 * bin_width)
        .collect();
    let transmission: Vec<f64> = offsets
        .par_iter()
        .map(|&nu| {
            let mut acc = 0.0;
            for c in &replicated {
                let hw = c.fwhm / 2.0;
                let d = nu - c.center;
                acc += c.height * hw * hw / (d * d + hw * hw);
            }
            acc
        })
        .collect();
    let reference = geometry.mode_frequency(basis.q_ref, 0, 0)?;
    Spectrum::from_samples(offsets, transmission, reference, method)
}

fn push_line(
    components: &mut Vec<LineComponent>,
    geometry: &CavityGeometry,
    fsr: f64,
    rho: f64,
    center: f64,
    overlap_sq: f64,
) -> Result<()> {
    if rho >= 1.0 {
        return Err(Error::Input(format!(
            "round-trip amplitude {rho} at or above unity; the operator is not passive"
        )));
    }
    // fully absorbed modes never build up a line
    if rho < 1e-6 || overlap_sq <= 0.0 {
        return Ok(());
    }
    let finesse = finesse_from_amplitude(rho, fsr)?.finesse;
    components.push(LineComponent {
        center,
        fwhm: fsr / finesse,
        height: overlap_sq * peak_transmission(geometry, rho),
    });
    Ok(())
}

/// A fitted Lorentzian line.
#[derive(Debug, Clone, Copy)]
pub struct PeakFit {
    /// Line center (Hz offset).
    pub center: f64,
    /// Full width at half maximum (Hz).
    pub fwhm: f64,
    /// One-sigma uncertainty of the width from the fit covariance (Hz).
    pub fwhm_sigma: f64,
    /// Peak height above the baseline.
    pub height: f64,
    /// Fitted constant baseline.
    pub baseline: f64,
    /// RMS residual over the fitted window.
    pub residual_rms: f64,
}

/// Least-squares Lorentzian fit over `window` (Hz interval). The window
/// must contain exactly one peak.
pub fn fit_lorentzian(spectrum: &Spectrum, window: (f64, f64)) -> Result<PeakFit> {
    if !(window.1 > window.0) {
        return Err(Error::Input(format!("invalid fit window {window:?}")));
    }
    let idx: Vec<usize> = (0..spectrum.len())
        .filter(|&i| spectrum.offsets[i] >= window.0 && spectrum.offsets[i] <= window.1)
        .collect();
    if idx.len() < 8 {
        return Err(Error::Input(format!(
            "fit window contains {} samples; at least 8 required",
            idx.len()
        )));
    }
    let x: Vec<f64> = idx.iter().map(|&i| spectrum.offsets[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| spectrum.transmission[i]).collect();
    let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(y_max > y_min) {
        return Err(Error::Input("flat data in fit window".into()));
    }
    // count threshold-crossing regions with hysteresis, so sample noise
    // around a single line does not read as multiple peaks
    let enter = y_min + 0.35 * (y_max - y_min);
    let exit = y_min + 0.15 * (y_max - y_min);
    let mut regions = 0usize;
    let mut inside = false;
    for &v in &y {
        if !inside && v >= enter {
            inside = true;
            regions += 1;
        } else if inside && v < exit {
            inside = false;
        }
    }
    if regions > 1 {
        return Err(Error::Input(format!(
            "{regions} peaks in the fit window; a Lorentzian fit needs exactly one"
        )));
    }
    let argmax = (0..y.len()).max_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap()).unwrap();
    if argmax == 0 || argmax == y.len() - 1 {
        return Err(Error::Input(
            "the maximum sits on the window edge; widen the window".into(),
        ));
    }
    let center0 = x[argmax];

    let height0 = y_max - y_min;
    let half = y_min + height0 / 2.0;
    let mut left = x[0];
    let mut right = x[x.len() - 1];
    for i in 0..y.len() {
        if y[i] >= half {
            left = x[i];
            break;
        }
    }
    for i in (0..y.len()).rev() {
        if y[i] >= half {
            right = x[i];
            break;
        }
    }
    let bin = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let fwhm0 = (right - left).max(2.0 * bin);

    let model = |nu: f64, p: &[f64]| {
        let hw = p[1].abs() / 2.0;
        let d = nu - p[0];
        p[3] + p[2] * hw * hw / (d * d + hw * hw)
    };
    let initial = [center0, fwhm0, height0, y_min];
    let scales = [fwhm0, fwhm0, height0, height0];
    let fit = fit_curve(model, &x, &y, &initial, &scales)?;
    let fwhm = fit.params[1].abs();
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::Convergence(format!(
            "Lorentzian fit collapsed to width {fwhm}"
        )));
    }
    Ok(PeakFit {
        center: fit.params[0],
        fwhm,
        fwhm_sigma: fit.sigma(1),
        height: fit.params[2],
        baseline: fit.params[3],
        residual_rms: fit.residual_rms,
    })
}

/// Finesse = FSR / fitted FWHM of the dominant peak. The free spectral
/// range is inferred from the spacing of the tallest longitudinal peaks
/// unless supplied.
pub fn finesse_from_spectrum(spectrum: &Spectrum, fsr_hint: Option<f64>) -> Result<f64> {
    if spectrum.peaks.is_empty() {
        return Err(Error::Input("spectrum has no peaks".into()));
    }
    let tallest = spectrum
        .peaks
        .iter()
        .cloned()
        .fold(spectrum.peaks[0], |a, b| if b.height > a.height { b } else { a });
    let fsr = match fsr_hint {
        Some(f) if f > 0.0 => f,
        Some(f) => {
            return Err(Error::Input(format!("free spectral range must be positive, got {f}")))
        }
        None => {
            let mut centers: Vec<f64> = spectrum
                .peaks
                .iter()
                .filter(|p| p.height >= 0.5 * tallest.height)
                .map(|p| p.center)
                .collect();
            centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if centers.len() < 2 {
                return Err(Error::Input(
                    "fewer than two longitudinal peaks resolved; supply the free spectral range"
                        .into(),
                ));
            }
            let mut gaps: Vec<f64> = centers.windows(2).map(|w| w[1] - w[0]).collect();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            gaps[gaps.len() / 2]
        }
    };
    let halfspan = (4.0 * tallest.width).max(6.0 * spectrum.bin_width());
    let fit = fit_lorentzian(
        spectrum,
        (tallest.center - halfspan, tallest.center + halfspan),
    )?;
    if fit.fwhm < 3.0 * spectrum.bin_width() {
        return Err(Error::Resolution(format!(
            "fitted linewidth {:.3e} Hz spans under 3 bins at spacing {:.3e} Hz",
            fit.fwhm,
            spectrum.bin_width()
        )));
    }
    Ok(fsr / fit.fwhm)
}

/// One row of a degeneracy collapse scan.
#[derive(Debug, Clone, Copy)]
pub struct CollapsePoint {
    /// Cavity length over mirror radius.
    pub length_ratio: f64,
    /// Max minus min synthesized peak center across the family (Hz).
    pub spread: f64,
}

/// Line-center spread of the mode family as the length crosses the
/// degeneracy point. Centers are referenced to the degenerate resonance,
/// so the fan opens without folding at the free spectral range; lines the
/// pump does not excite, or that the mask fully absorbs, are ignored.
/// Lengths are processed in input order.
pub fn degeneracy_collapse_scan(
    template: &CavityGeometry,
    lengths: &[f64],
    mask: &TransmissionMask,
    family: ParityFamily,
    max_order: u32,
    pump: &FieldGrid,
) -> Result<Vec<CollapsePoint>> {
    let mut out = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let geometry = template.with_length(length)?;
        let basis = ModeBasis::new(geometry, family, max_order)?;
        let fsr = geometry.fsr();
        let t_rt = geometry.round_trip_time();
        let overlaps = basis.project(pump)?;
        let dev = geometry.arccos_g_over_pi() - 0.5;
        let fan: Vec<f64> = basis
            .indices
            .iter()
            .map(|&(n, m)| (n + m) as f64 * dev * fsr)
            .collect();
        let fan_spread = fan.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - fan.iter().cloned().fold(f64::INFINITY, f64::min);
        let nominal_fwhm =
            fsr / finesse_from_amplitude(geometry.bare_round_trip_amplitude(), fsr)?.finesse;

        // (center, weight) per line, by the same near/far degeneracy split
        // as the spectrum synthesis
        let mut lines: Vec<(f64, f64)> = Vec::new();
        if fan_spread <= nominal_fwhm {
            let op = round_trip_operator(&geometry, mask, &basis, 0.0)?;
            let spectrum = op.eigendecompose()?;
            for j in 0..spectrum.len() {
                let lambda = spectrum.eigenvalues[j];
                if lambda.norm() < 1e-6 {
                    continue;
                }
                let mut overlap = Complex64::new(0.0, 0.0);
                for i in 0..basis.len() {
                    overlap += spectrum.eigenvectors[(i, j)].conj() * overlaps[i];
                }
                let center = lambda.arg() / (2.0 * std::f64::consts::PI * t_rt);
                lines.push((center, overlap.norm_sqr()));
            }
        } else {
            let b = mask_overlap_matrix(mask, &basis)?;
            let bb = par_matmul(&b, &b);
            for (k, base) in fan.iter().enumerate() {
                let mixing = bb[(k, k)];
                if mixing.norm() < 1e-6 {
                    continue;
                }
                let center = base + mixing.arg() / (2.0 * std::f64::consts::PI * t_rt);
                lines.push((center, overlaps[k].norm_sqr()));
            }
        }
        let w_max = lines.iter().map(|l| l.1).fold(0.0f64, f64::max);
        if !(w_max > 0.0) {
            return Err(Error::Input(format!(
                "pump excites no family line at length {length}"
            )));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(center, weight) in &lines {
            if weight > 1e-9 * w_max {
                lo = lo.min(center);
                hi = hi.max(center);
            }
        }
        out.push(CollapsePoint {
            length_ratio: length / template.mirror_radius,
            spread: hi - lo,
        });
    }
    Ok(out)
}
