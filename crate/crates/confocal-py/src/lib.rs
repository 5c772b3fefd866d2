//! Python bindings for the confocal cavity toolkit.
//!
//! The module mirrors the main operations of the Rust crates: cavity
//! geometry and finesse, supermode localization, imaging resolution, the
//! leads-device finesse map, transmission spectra, and the lock and
//! vibration chain. All quantities are SI (meters, hertz, volts) unless a
//! docstring says otherwise.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use confocal_core::{
    CavityGeometry, GrapheneConvention, ModeBasis, ParityFamily, TransmissionMask, WindowKind,
    SPEED_OF_LIGHT,
};

/// Validation failures become ValueError, numerical failures RuntimeError.
fn py_err(e: confocal_core::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse_family(name: &str) -> PyResult<ParityFamily> {
    match name {
        "even" => Ok(ParityFamily::Even),
        "odd" => Ok(ParityFamily::Odd),
        "all" => Ok(ParityFamily::All),
        other => Err(PyValueError::new_err(format!(
            "unknown parity family {other:?}; expected \"even\", \"odd\", or \"all\""
        ))),
    }
}

fn family_name(family: ParityFamily) -> &'static str {
    match family {
        ParityFamily::Even => "even",
        ParityFamily::Odd => "odd",
        ParityFamily::All => "all",
    }
}

fn parse_window(name: &str) -> PyResult<WindowKind> {
    match name {
        "hann" => Ok(WindowKind::Hann),
        "rectangular" => Ok(WindowKind::Rectangular),
        other => Err(PyValueError::new_err(format!(
            "unknown window {other:?}; expected \"hann\" or \"rectangular\""
        ))),
    }
}

/// A symmetric two-mirror cavity: mirror curvature radius, length, the
/// intensity reflectivities of the two coatings, operating wavelength, and
/// any calibrated excess round-trip intensity loss. Lengths in meters.
#[pyclass(frozen)]
struct Geometry {
    inner: CavityGeometry,
}

#[pymethods]
impl Geometry {
    #[new]
    #[pyo3(signature = (mirror_radius, length, reflectivity_upper, reflectivity_lower, wavelength, excess_loss=0.0))]
    fn new(
        mirror_radius: f64,
        length: f64,
        reflectivity_upper: f64,
        reflectivity_lower: f64,
        wavelength: f64,
        excess_loss: f64,
    ) -> PyResult<Self> {
        let geom = CavityGeometry::new(
            mirror_radius,
            length,
            reflectivity_upper,
            reflectivity_lower,
            wavelength,
        )
        .map_err(py_err)?;
        let geom = if excess_loss != 0.0 {
            geom.with_excess_loss(excess_loss).map_err(py_err)?
        } else {
            geom
        };
        Ok(Geometry { inner: geom })
    }

    /// The confocal science cavity: R = L = 10 mm at 780 nm, excess loss
    /// trimmed so the finesse is 208.
    #[staticmethod]
    fn science() -> PyResult<Self> {
        Ok(Geometry {
            inner: confocal_core::presets::science_cavity().map_err(py_err)?,
        })
    }

    /// The coating-limited bench cavity (no excess loss).
    #[staticmethod]
    fn test() -> PyResult<Self> {
        Ok(Geometry {
            inner: confocal_core::presets::test_cavity().map_err(py_err)?,
        })
    }

    /// The leads-device cavity, excess loss trimmed to finesse 181.
    #[staticmethod]
    fn leads() -> PyResult<Self> {
        Ok(Geometry {
            inner: confocal_core::presets::leads_cavity().map_err(py_err)?,
        })
    }

    #[getter]
    fn mirror_radius(&self) -> f64 {
        self.inner.mirror_radius
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length
    }

    #[getter]
    fn reflectivity_upper(&self) -> f64 {
        self.inner.reflectivity_upper
    }

    #[getter]
    fn reflectivity_lower(&self) -> f64 {
        self.inner.reflectivity_lower
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.wavelength
    }

    #[getter]
    fn excess_loss(&self) -> f64 {
        self.inner.excess_loss
    }

    /// Same mirrors at a different length.
    fn with_length(&self, length: f64) -> PyResult<Self> {
        Ok(Geometry {
            inner: self.inner.clone().with_length(length).map_err(py_err)?,
        })
    }

    /// Same geometry with a calibrated excess round-trip intensity loss.
    fn with_excess_loss(&self, excess_loss: f64) -> PyResult<Self> {
        Ok(Geometry {
            inner: self
                .inner
                .clone()
                .with_excess_loss(excess_loss)
                .map_err(py_err)?,
        })
    }

    /// Same geometry with the excess loss trimmed so the bare finesse
    /// equals `finesse`.
    fn with_finesse(&self, finesse: f64) -> PyResult<Self> {
        let excess = confocal_core::excess_loss_for_finesse(
            self.inner.reflectivity_upper,
            self.inner.reflectivity_lower,
            finesse,
        )
        .map_err(py_err)?;
        self.with_excess_loss(excess)
    }

    /// Stability parameter g = 1 - L/R; zero at confocality.
    fn stability_g(&self) -> f64 {
        self.inner.stability_g()
    }

    /// Free spectral range c / 2L in Hz.
    fn fsr(&self) -> f64 {
        self.inner.fsr()
    }

    /// 1/e^2 intensity radius of the fundamental mode at the waist, meters.
    fn fundamental_waist(&self) -> f64 {
        self.inner.fundamental_waist()
    }

    /// Transverse mode spacing (arccos g / pi) x FSR in Hz.
    fn transverse_mode_spacing(&self) -> f64 {
        self.inner.transverse_mode_spacing()
    }

    /// Resonance frequency of mode (q, n, m) in Hz.
    fn mode_frequency(&self, q: i64, n: u32, m: u32) -> PyResult<f64> {
        self.inner.mode_frequency(q, n, m).map_err(py_err)
    }

    /// Longitudinal index of the resonance nearest the operating
    /// wavelength.
    fn reference_q(&self) -> i64 {
        self.inner.reference_q()
    }

    /// Round-trip field amplitude including the excess loss.
    fn round_trip_amplitude(&self) -> f64 {
        self.inner.bare_round_trip_amplitude()
    }

    /// Finesse of the empty cavity, from the exact Airy relation.
    fn finesse(&self) -> PyResult<f64> {
        let report =
            confocal_core::finesse_from_amplitude(self.inner.bare_round_trip_amplitude(), self.inner.fsr())
                .map_err(py_err)?;
        Ok(report.finesse)
    }

    /// FSR / finesse in Hz.
    fn linewidth(&self) -> PyResult<f64> {
        let report =
            confocal_core::finesse_from_amplitude(self.inner.bare_round_trip_amplitude(), self.inner.fsr())
                .map_err(py_err)?;
        Ok(report.linewidth)
    }

    /// Finesse the coatings alone would give, with the excess loss removed.
    fn coating_finesse(&self) -> PyResult<f64> {
        let report = confocal_core::finesse_from_amplitude(
            self.inner.coating_round_trip_amplitude(),
            self.inner.fsr(),
        )
        .map_err(py_err)?;
        Ok(report.finesse)
    }

    fn __repr__(&self) -> String {
        format!(
            "Geometry(R = {:.3} mm, L = {:.3} mm, lambda = {:.1} nm, excess_loss = {:.4})",
            self.inner.mirror_radius * 1e3,
            self.inner.length * 1e3,
            self.inner.wavelength * 1e9,
            self.inner.excess_loss,
        )
    }
}

/// Converts error-signal readings of a locked cavity into length
/// displacement: delta_L = (V / slope) x L / (q x FSR). Built from the
/// error-signal slope in V/Hz, the geometry (which fixes FSR and the
/// longitudinal index at the lock point), and the bare-cavity RMS
/// frequency excursion in Hz.
#[pyclass(frozen)]
struct LockCalibration {
    inner: confocal_core::LockCalibration,
}

#[pymethods]
impl LockCalibration {
    #[new]
    fn new(slope: f64, geometry: &Geometry, bare_rms: f64) -> PyResult<Self> {
        let fsr = geometry.inner.fsr();
        let laser = SPEED_OF_LIGHT / geometry.inner.wavelength;
        let q = (laser / fsr).round() as u64;
        let inner = confocal_core::LockCalibration::new(
            slope,
            geometry.inner.length,
            q,
            fsr,
            laser,
            bare_rms,
        )
        .map_err(py_err)?;
        Ok(LockCalibration { inner })
    }

    #[getter]
    fn slope(&self) -> f64 {
        self.inner.slope
    }

    #[getter]
    fn fsr(&self) -> f64 {
        self.inner.fsr
    }

    #[getter]
    fn longitudinal_index(&self) -> u64 {
        self.inner.longitudinal_index
    }

    #[getter]
    fn bare_rms(&self) -> f64 {
        self.inner.bare_rms
    }

    /// Length displacement in m for an error-signal RMS in volts.
    fn displacement_from_error(&self, v_rms: f64) -> PyResult<f64> {
        confocal_core::displacement_from_error(v_rms, &self.inner).map_err(py_err)
    }

    /// Length displacement in m for a frequency RMS in Hz.
    fn displacement_from_frequency(&self, rms_hz: f64) -> PyResult<f64> {
        confocal_core::displacement_from_error(rms_hz * self.inner.slope, &self.inner)
            .map_err(py_err)
    }

    /// Length displacement in m of the bare-cavity frequency excursion.
    fn bare_displacement(&self) -> PyResult<f64> {
        self.displacement_from_frequency(self.inner.bare_rms)
    }

    fn __repr__(&self) -> String {
        format!(
            "LockCalibration(slope = {:.3e} V/Hz, q = {}, fsr = {:.4e} Hz, bare_rms = {:.3e} Hz)",
            self.inner.slope, self.inner.longitudinal_index, self.inner.fsr, self.inner.bare_rms,
        )
    }
}

/// A localized supermode of a degenerate transverse family: unit-norm
/// coefficients over the (n, m) basis, the intensity centroid and
/// effective waist of the synthesized field, and the spatial variance the
/// localizer minimized.
#[pyclass(frozen)]
struct Supermode {
    /// Parity family the supermode was built in.
    #[pyo3(get)]
    family: String,
    /// Basis truncation order n + m <= max_order.
    #[pyo3(get)]
    max_order: u32,
    /// Effective waist xi of the synthesized intensity, meters.
    #[pyo3(get)]
    effective_waist: f64,
    /// Intensity centroid (x, y) in meters.
    #[pyo3(get)]
    center: (f64, f64),
    /// Minimized spatial variance in m^2.
    #[pyo3(get)]
    variance: f64,
    /// Rows (n, m, re, im) ordered as the basis.
    #[pyo3(get)]
    coefficients: Vec<(u32, u32, f64, f64)>,
}

#[pymethods]
impl Supermode {
    fn __repr__(&self) -> String {
        format!(
            "Supermode(family = {}, max_order = {}, effective_waist = {:.4} um)",
            self.family,
            self.max_order,
            self.effective_waist * 1e6,
        )
    }
}

/// Minimum-variance supermode of the degenerate family truncated at
/// `max_order`.
#[pyfunction]
#[pyo3(signature = (geometry, max_order, family="even"))]
fn localized_supermode(geometry: &Geometry, max_order: u32, family: &str) -> PyResult<Supermode> {
    let family = parse_family(family)?;
    let basis = ModeBasis::new(geometry.inner.clone(), family, max_order).map_err(py_err)?;
    let (supermode, variance) = confocal_core::localized_supermode(&basis).map_err(py_err)?;
    let coefficients = basis
        .indices
        .iter()
        .zip(&supermode.coefficients)
        .map(|(&(n, m), c)| (n, m, c.re, c.im))
        .collect();
    Ok(Supermode {
        family: family_name(supermode.family).to_string(),
        max_order,
        effective_waist: supermode.effective_waist,
        center: supermode.center,
        variance,
        coefficients,
    })
}

/// Smallest resolvable feature and usable field of view (both meters) of
/// in-situ imaging through the even-family kernel truncated at
/// `max_order`.
#[pyfunction]
fn imaging_resolution(geometry: &Geometry, max_order: u32) -> PyResult<(f64, f64)> {
    let basis =
        ModeBasis::new(geometry.inner.clone(), ParityFamily::Even, max_order).map_err(py_err)?;
    confocal_core::resolution_and_fov(&basis).map_err(py_err)
}

/// Finesse at the four canonical probe sites of the built-in leads device:
/// bare substrate, the gap between the leads, plain hBN, and the
/// TMD/graphene stack. `convention` selects how the graphene absorption
/// is counted ("per-pass" or "per-round-trip"). Returns rows of
/// (label, x, y, finesse, linewidth).
#[pyfunction]
#[pyo3(signature = (convention="per-pass", max_order=60))]
fn finesse_map_leads(
    convention: &str,
    max_order: u32,
) -> PyResult<Vec<(String, f64, f64, f64, f64)>> {
    let convention = GrapheneConvention::parse(convention).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown graphene convention {convention:?}; expected \"per-pass\" or \"per-round-trip\""
        ))
    })?;
    let geometry = confocal_core::presets::leads_cavity().map_err(py_err)?;
    let basis =
        ModeBasis::new(geometry.clone(), ParityFamily::Even, max_order).map_err(py_err)?;
    let mask = confocal_core::presets::leads_device_mask(
        confocal_core::presets::leads_device_grid(),
        convention,
    )
    .map_err(py_err)?;
    let sites = confocal_core::presets::leads_probe_sites();
    let positions: Vec<(f64, f64)> = sites.iter().map(|s| (s.x, s.y)).collect();
    let reports =
        confocal_core::finesse_map(&mask, &basis, &geometry, &positions).map_err(py_err)?;
    Ok(sites
        .iter()
        .zip(reports)
        .map(|(site, report)| {
            (
                site.label.to_string(),
                site.x,
                site.y,
                report.finesse,
                report.linewidth,
            )
        })
        .collect())
}

/// Excess round-trip intensity loss that brings a cavity with the given
/// intensity reflectivities down to `finesse`.
#[pyfunction]
fn excess_loss_for_finesse(
    reflectivity_upper: f64,
    reflectivity_lower: f64,
    finesse: f64,
) -> PyResult<f64> {
    confocal_core::excess_loss_for_finesse(reflectivity_upper, reflectivity_lower, finesse)
        .map_err(py_err)
}

/// Piezo displacement calibration from the voltages of successive
/// longitudinal resonances: the slope of the k lambda/2 line in m/V with
/// its fit uncertainty.
#[pyfunction]
#[pyo3(signature = (peak_voltages, wavelength=780.0e-9))]
fn piezo_gamma(peak_voltages: Vec<f64>, wavelength: f64) -> PyResult<(f64, f64)> {
    confocal_core::piezo_gamma(&peak_voltages, wavelength).map_err(py_err)
}

/// Linear response of the lock frequency to a sample drive,
/// delta_nu = alpha x + beta, with per-coefficient uncertainties.
#[pyclass(frozen)]
struct VibrationFit {
    inner: confocal_core::VibrationFit,
}

#[pymethods]
impl VibrationFit {
    #[getter]
    fn drive_frequency(&self) -> f64 {
        self.inner.drive_frequency
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn alpha_sigma(&self) -> f64 {
        self.inner.alpha_sigma
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn beta_sigma(&self) -> f64 {
        self.inner.beta_sigma
    }

    #[getter]
    fn residual_rms(&self) -> f64 {
        self.inner.residual_rms
    }

    /// Sample motion in m after removing the bare-cavity floor:
    /// x = (beta - bare_rms) / alpha. Returns (value, sigma,
    /// ill_conditioned); the flag is set when alpha is consistent with
    /// zero within one sigma.
    #[pyo3(signature = (bare_rms, bare_sigma=None))]
    fn sample_displacement(
        &self,
        bare_rms: f64,
        bare_sigma: Option<f64>,
    ) -> PyResult<(f64, f64, bool)> {
        let report = confocal_core::sample_displacement(&self.inner, bare_rms, bare_sigma)
            .map_err(py_err)?;
        Ok((report.value, report.sigma, report.ill_conditioned))
    }

    fn __repr__(&self) -> String {
        format!(
            "VibrationFit(alpha = {:.4e} Hz/m, beta = {:.4e} Hz, residual = {:.3e} Hz)",
            self.inner.alpha, self.inner.beta, self.inner.residual_rms,
        )
    }
}

/// Ordinary least squares for delta_nu = alpha x + beta. Drives in m,
/// responses in Hz, measured at `drive_frequency`.
#[pyfunction]
fn fit_vibration_response(
    drive_frequency: f64,
    drives: Vec<f64>,
    responses: Vec<f64>,
) -> PyResult<VibrationFit> {
    let inner = confocal_core::fit_vibration_response(drive_frequency, &drives, &responses)
        .map_err(py_err)?;
    Ok(VibrationFit { inner })
}

/// Deterministic white Gaussian voltage trace with standard deviation
/// `sigma`, from a seeded stream.
#[pyfunction]
#[pyo3(signature = (rate, count, sigma, seed=7))]
fn white_noise(rate: f64, count: usize, sigma: f64, seed: u64) -> PyResult<Vec<f64>> {
    Ok(confocal_core::synthesize_white_noise(rate, count, sigma, seed)
        .map_err(py_err)?
        .samples)
}

/// Deterministic shaped voltage trace: a Lorentzian rolloff around
/// `corner` on a small white floor, scaled so the RMS inside
/// [band_lo, band_hi] equals `target_band_rms` at synthesis time.
#[pyfunction]
#[pyo3(signature = (rate, count, band_lo, band_hi, target_band_rms, corner, seed=7))]
fn shaped_noise(
    rate: f64,
    count: usize,
    band_lo: f64,
    band_hi: f64,
    target_band_rms: f64,
    corner: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    Ok(
        confocal_core::synthesize_shaped_noise(
            rate,
            count,
            (band_lo, band_hi),
            target_band_rms,
            corner,
            seed,
        )
        .map_err(py_err)?
        .samples,
    )
}

/// One-sided Welch power spectral density of a voltage trace.
#[pyclass(frozen)]
struct Psd {
    inner: confocal_core::PsdSpec,
}

#[pymethods]
impl Psd {
    /// Bin centers in Hz, 0 through Nyquist.
    #[getter]
    fn frequencies(&self) -> Vec<f64> {
        self.inner.frequencies.clone()
    }

    /// Density in V^2/Hz.
    #[getter]
    fn density(&self) -> Vec<f64> {
        self.inner.density.clone()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }

    #[getter]
    fn segments_averaged(&self) -> usize {
        self.inner.segments_averaged
    }

    fn nyquist(&self) -> f64 {
        self.inner.nyquist()
    }

    /// RMS in volts of the density integrated over [f_lo, f_hi].
    fn band_rms(&self, f_lo: f64, f_hi: f64) -> PyResult<f64> {
        confocal_core::band_rms(&self.inner, f_lo, f_hi).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Psd({} bins to {:.3e} Hz, {} segments averaged)",
            self.inner.frequencies.len(),
            self.inner.nyquist(),
            self.inner.segments_averaged,
        )
    }
}

/// Welch averaged periodogram of `samples` taken at `rate` Hz.
#[pyfunction]
#[pyo3(signature = (samples, rate, segment_length=8192, overlap=4096, window="hann"))]
fn welch_psd(
    samples: Vec<f64>,
    rate: f64,
    segment_length: usize,
    overlap: usize,
    window: &str,
) -> PyResult<Psd> {
    let window = parse_window(window)?;
    let trace = confocal_core::NoiseTrace::new(rate, samples, "python trace").map_err(py_err)?;
    let inner =
        confocal_core::compute_psd(&trace, segment_length, overlap, window).map_err(py_err)?;
    Ok(Psd { inner })
}

/// A sampled transmission spectrum with annotated peaks.
#[pyclass(frozen)]
struct Spectrum {
    /// Offsets from the reference resonance in Hz, strictly increasing.
    #[pyo3(get)]
    offsets: Vec<f64>,
    /// Transmission per bin, dimensionless.
    #[pyo3(get)]
    transmission: Vec<f64>,
    /// Absolute frequency the offsets are measured from, Hz.
    #[pyo3(get)]
    reference_frequency: f64,
    /// Rows (center, height, width) per resolved peak; widths are FWHM in
    /// Hz estimated from the samples.
    #[pyo3(get)]
    peaks: Vec<(f64, f64, f64)>,
    /// Line model used: "diagonal", "eigenmodes", or "external".
    #[pyo3(get)]
    method: String,
}

#[pymethods]
impl Spectrum {
    fn __repr__(&self) -> String {
        format!(
            "Spectrum({} bins, {} peaks, method = {})",
            self.offsets.len(),
            self.peaks.len(),
            self.method,
        )
    }
}

/// Transmission of the empty cavity probed by a point pump, sampled on
/// `bins` points across `span` Hz centered on the reference resonance.
/// The line model switches between per-mode Lorentzians and full
/// eigenmode lines depending on how close the transverse family sits to
/// degeneracy. The default pump sits slightly off axis so detuned spectra
/// show the resolved transverse fan.
#[pyfunction]
#[pyo3(signature = (geometry, max_order=36, family="even", span=16.0e9, bins=4001, pump=(10.0e-6, 6.0e-6)))]
fn transmission_spectrum(
    geometry: &Geometry,
    max_order: u32,
    family: &str,
    span: f64,
    bins: usize,
    pump: (f64, f64),
) -> PyResult<Spectrum> {
    let family = parse_family(family)?;
    let basis = ModeBasis::new(geometry.inner.clone(), family, max_order).map_err(py_err)?;
    let grid = basis.default_grid().map_err(py_err)?;
    let coefficients = basis.point_projection(pump.0, pump.1).map_err(py_err)?;
    let field = basis
        .synthesize(&coefficients, &grid)
        .map_err(py_err)?
        .normalized()
        .map_err(py_err)?;
    let mask = TransmissionMask::identity(grid);
    let spectrum = confocal_core::transmission_spectrum(
        &geometry.inner,
        &mask,
        &basis,
        &field,
        (-span / 2.0, span / 2.0),
        bins,
    )
    .map_err(py_err)?;
    let method = match spectrum.method {
        confocal_core::SpectrumMethod::Diagonal => "diagonal",
        confocal_core::SpectrumMethod::Eigenmodes => "eigenmodes",
        confocal_core::SpectrumMethod::External => "external",
    };
    Ok(Spectrum {
        offsets: spectrum.offsets,
        transmission: spectrum.transmission,
        reference_frequency: spectrum.reference_frequency,
        peaks: spectrum
            .peaks
            .iter()
            .map(|p| (p.center, p.height, p.width))
            .collect(),
        method: method.to_string(),
    })
}

/// Simulator for a length-tunable multimode cavity with an intracavity
/// 2D-material mask: spectra, finesse, supermode localization, imaging
/// resolution, and lock metrology.
#[pymodule]
fn confocal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SPEED_OF_LIGHT", SPEED_OF_LIGHT)?;
    m.add_class::<Geometry>()?;
    m.add_class::<LockCalibration>()?;
    m.add_class::<Supermode>()?;
    m.add_class::<VibrationFit>()?;
    m.add_class::<Psd>()?;
    m.add_class::<Spectrum>()?;
    m.add_function(wrap_pyfunction!(localized_supermode, m)?)?;
    m.add_function(wrap_pyfunction!(imaging_resolution, m)?)?;
    m.add_function(wrap_pyfunction!(finesse_map_leads, m)?)?;
    m.add_function(wrap_pyfunction!(excess_loss_for_finesse, m)?)?;
    m.add_function(wrap_pyfunction!(piezo_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(fit_vibration_response, m)?)?;
    m.add_function(wrap_pyfunction!(white_noise, m)?)?;
    m.add_function(wrap_pyfunction!(shaped_noise, m)?)?;
    m.add_function(wrap_pyfunction!(welch_psd, m)?)?;
    m.add_function(wrap_pyfunction!(transmission_spectrum, m)?)?;
    Ok(())
}
