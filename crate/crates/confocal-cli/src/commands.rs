//! One function per subcommand. Each builds its pipeline from the
//! scenario, writes result files under `out`, and prints the same report
//! text to stdout.

use std::fmt::Write as _;
use std::path::Path;

use confocal_core::io::{self, format_float};
use confocal_core::presets::{leads_device_grid, leads_device_mask, leads_probe_sites};
use confocal_core::scenario::{MaskSource, NoiseSource, Scenario};
use confocal_core::{
    band_rms, compute_psd, displacement_from_error, fit_vibration_response, image_through_cavity,
    localized_supermode, piezo_gamma, resolution_and_fov, sample_displacement,
    synthesize_white_noise, transmission_spectrum, GrapheneConvention, ImageGrid, ImagingKernel,
    ModeBasis, Result, SpectrumMethod,
};

fn emit(report: &str, out: &Path, name: &str) -> Result<()> {
    io::save_report(report, &out.join(name))?;
    print!("{report}");
    Ok(())
}

/// Displacement in pm, printed without a fraction when the configured
/// value is a whole number of pm.
fn format_pm(meters: f64) -> String {
    let pm = meters * 1e12;
    if (pm - pm.round()).abs() < 1e-6 {
        format!("{:.0}", pm)
    } else {
        format!("{:.3}", pm)
    }
}

pub fn spectrum(scenario: &Scenario, out: &Path) -> Result<()> {
    let mask = scenario.resolve_mask()?;
    let span = scenario.analysis.span;
    let mut report = String::new();
    let _ = writeln!(report, "spectrum report");
    let _ = writeln!(report, "scenario: {}", scenario.label);
    let _ = writeln!(
        report,
        "window: {:.3} GHz in {} bins around the reference resonance",
        span * 1e-9,
        scenario.analysis.bins
    );
    for &ratio in &scenario.analysis.length_ratios {
        let geometry = scenario
            .geometry
            .with_length(ratio * scenario.geometry.mirror_radius)?;
        let basis = ModeBasis::new(geometry, scenario.family, scenario.basis_order)?;
        let pump = scenario.resolve_pump(&basis)?;
        let spectrum = transmission_spectrum(
            &geometry,
            &mask,
            &basis,
            &pump,
            (-span / 2.0, span / 2.0),
            scenario.analysis.bins,
        )?;
        let name = format!("spectrum_ratio_{ratio:.3}.csv");
        io::save_spectrum(&spectrum, &out.join(&name))?;
        let method = match spectrum.method {
            SpectrumMethod::Diagonal => "split transverse lines",
            SpectrumMethod::Eigenmodes => "degenerate eigenmode lines",
            SpectrumMethod::External => "external",
        };
        let _ = writeln!(
            report,
            "L/R = {ratio:.3}: resolved peaks {} ({method}) -> {name}",
            spectrum.peaks.len()
        );
    }
    emit(&report, out, "spectrum_report.txt")
}

pub fn supermode(scenario: &Scenario, out: &Path) -> Result<()> {
    let basis = scenario.basis()?;
    let (mode, variance) = localized_supermode(&basis)?;
    let field = mode.synthesize(&basis, &scenario.grid)?;
    let image = ImageGrid::new(scenario.grid, field.intensity())?;
    io::save_image_pgm(&image, &out.join("supermode_intensity.pgm"))?;
    io::save_image_csv(&image, &out.join("supermode_intensity.csv"))?;

    let mut table = String::new();
    let _ = writeln!(table, "# supermode coefficients, unit norm");
    let _ = writeln!(table, "n,m,re,im");
    for (&(n, m), c) in basis.indices.iter().zip(&mode.coefficients) {
        let _ = writeln!(
            table,
            "{n},{m},{},{}",
            format_float(c.re),
            format_float(c.im)
        );
    }
    io::save_report(&table, &out.join("supermode_coefficients.csv"))?;

    let w0 = scenario.geometry.fundamental_waist();
    let mut report = String::new();
    let _ = writeln!(report, "supermode report");
    let _ = writeln!(report, "scenario: {}", scenario.label);
    let _ = writeln!(
        report,
        "family: max order {}, {} modes",
        scenario.basis_order,
        basis.len()
    );
    let _ = writeln!(report, "effective waist: {:.4} um", mode.effective_waist * 1e6);
    let _ = writeln!(report, "fundamental waist: {:.4} um", w0 * 1e6);
    let _ = writeln!(
        report,
        "localization ratio xi/w0: {:.4}",
        mode.effective_waist / w0
    );
    let _ = writeln!(
        report,
        "variance eigenvalue: {} m^2",
        format_float(variance)
    );
    let _ = writeln!(
        report,
        "center: ({:.3}, {:.3}) um",
        mode.center.0 * 1e6,
        mode.center.1 * 1e6
    );
    emit(&report, out, "supermode_report.txt")
}

pub fn finesse_map(scenario: &Scenario, out: &Path) -> Result<()> {
    let mask = scenario.resolve_mask()?;
    let basis = scenario.basis()?;
    let sites: Vec<(String, f64, f64)> = match &scenario.mask {
        MaskSource::LeadsDevice(_) => leads_probe_sites()
            .iter()
            .map(|s| (s.label.to_string(), s.x, s.y))
            .collect(),
        _ => vec![("center".to_string(), 0.0, 0.0)],
    };
    let positions: Vec<(f64, f64)> = sites.iter().map(|&(_, x, y)| (x, y)).collect();
    let reports = confocal_core::finesse_map(&mask, &basis, &scenario.geometry, &positions)?;

    let mut report = String::new();
    let _ = writeln!(report, "finesse map");
    let _ = writeln!(report, "scenario: {}", scenario.label);
    let _ = writeln!(report, "mask: {}", mask.label);
    let _ = writeln!(
        report,
        "{:<12} {:>8} {:>8} {:>9} {:>14}",
        "site", "x_um", "y_um", "finesse", "linewidth_mhz"
    );
    for ((label, x, y), point) in sites.iter().zip(&reports) {
        let _ = writeln!(
            report,
            "{label:<12} {:>8.2} {:>8.2} {:>9.2} {:>14.2}",
            x * 1e6,
            y * 1e6,
            point.finesse,
            point.linewidth * 1e-6
        );
    }
    emit(&report, out, "finesse_map.txt")
}

pub fn image(scenario: &Scenario, out: &Path, scene: Option<&Path>) -> Result<()> {
    let object = match scene {
        Some(path) => io::load_mask(path)?,
        None => scenario.resolve_mask()?,
    };
    let basis = scenario.basis()?;
    let kernel = ImagingKernel::new(basis)?;
    let illumination = ImageGrid::uniform(object.spec, 1.0)?;
    let image = image_through_cavity(&object, &illumination, &kernel)?;
    io::save_image_pgm(&image, &out.join("image.pgm"))?;
    io::save_image_csv(&image, &out.join("image.csv"))?;
    let (resolution, fov) = resolution_and_fov(&kernel.basis)?;

    let mut report = String::new();
    let _ = writeln!(report, "imaging report");
    let _ = writeln!(report, "scenario: {}", scenario.label);
    let _ = writeln!(report, "object: {}", object.label);
    let _ = writeln!(
        report,
        "family: max order {}, {} modes",
        scenario.basis_order,
        kernel.basis.len()
    );
    let _ = writeln!(report, "resolution (point FWHM): {:.3} um", resolution * 1e6);
    let _ = writeln!(report, "field of view (50% diameter): {:.1} um", fov * 1e6);
    let _ = writeln!(
        report,
        "collected energy: {}",
        format_float(image.total_energy())
    );
    emit(&report, out, "image_report.txt")
}

pub fn lock_noise(scenario: &Scenario, out: &Path, seed: u64) -> Result<()> {
    let trace = scenario.resolve_noise(seed)?;
    let psd = compute_psd(
        &trace,
        scenario.analysis.psd_segment,
        scenario.analysis.psd_overlap,
        scenario.analysis.window,
    )?;
    let (lo, hi) = scenario.analysis.band;
    let v_rms = band_rms(&psd, lo, hi)?;
    let cal = scenario.lock_calibration()?;
    let displacement = displacement_from_error(v_rms, &cal)?;
    io::save_psd(&psd, &out.join("lock_noise_psd.csv"))?;

    let mut report = String::new();
    let _ = writeln!(report, "lock-noise report");
    let _ = writeln!(report, "scenario: {}", scenario.label);
    let _ = writeln!(
        report,
        "trace: {}, {} samples at {} Hz ({:.3} s)",
        trace.label,
        trace.samples.len(),
        trace.rate,
        trace.duration()
    );
    let _ = writeln!(
        report,
        "psd: {} window, segment {}, overlap {}, {} segments averaged",
        psd.window.name(),
        psd.segment_length,
        psd.overlap,
        psd.segments_averaged
    );
    let _ = writeln!(report, "band: {lo} Hz to {hi} Hz");
    let _ = writeln!(report, "band RMS: {} V", format_float(v_rms));
    let _ = writeln!(
        report,
        "frequency RMS: {:.4} MHz",
        v_rms / cal.slope * 1e-6
    );
    let _ = writeln!(
        report,
        "displacement RMS: {:.1} pm",
        displacement * 1e12
    );
    if let NoiseSource::Shaped {
        target_band_rms, ..
    } = scenario.noise
    {
        let _ = writeln!(
            report,
            "displacement target: {} pm",
            format_pm(target_band_rms)
        );
    }
    emit(&report, out, "lock_noise_report.txt")
}

pub fn vibration_fit(
    scenario: &Scenario,
    out: &Path,
    seed: u64,
    inject_nm: f64,
    points: usize,
    noise_mhz: f64,
) -> Result<()> {
    // Synthetic drive ladder at 1 nm per step; the response line encodes
    // the injected sample motion on top of the bare floor.
    let alpha_true = 1.0e15;
    let bare = scenario.lock.bare_rms;
    let beta_true = bare + alpha_true * inject_nm * 1e-9;
    let noise = synthesize_white_noise(1.0, points.max(1), noise_mhz * 1e6, seed)?;
    let drives: Vec<f64> = (1..=points).map(|i| i as f64 * 1e-9).collect();
    let responses: Vec<f64> = drives
        .iter()
        .zip(&noise.samples)
        .map(|(x, eps)| alpha_true * x + beta_true + eps)
        .collect();
    let fit = fit_vibration_response(700.0, &drives, &responses)?;
    let sample = sample_displacement(&fit, bare, None)?;
    let (gamma, gamma_spread) = piezo_gamma(&[0.0, 9.63, 19.26], scenario.geometry.wavelength)?;

    let mut report = String::new();
    let _ = writeln!(report, "vibration-fit report");
    let _ = writeln!(report, "scenario: {}", scenario.label);
    let _ = writeln!(
        report,
        "drive series: {points} points, response noise {noise_mhz:.3} MHz RMS, seed {seed}"
    );
    let _ = writeln!(report, "drive frequency: {} Hz", fit.drive_frequency);
    let _ = writeln!(
        report,
        "alpha: {:.4} +/- {:.4} MHz/nm",
        fit.alpha * 1e-15,
        fit.alpha_sigma * 1e-15
    );
    let _ = writeln!(
        report,
        "beta: {:.4} +/- {:.4} MHz",
        fit.beta * 1e-6,
        fit.beta_sigma * 1e-6
    );
    let _ = writeln!(
        report,
        "residual RMS: {:.4} MHz",
        fit.residual_rms * 1e-6
    );
    let _ = writeln!(report, "bare floor: {:.2} MHz", bare * 1e-6);
    let _ = writeln!(
        report,
        "sample displacement: {:.2} +/- {:.2} nm (injected {:.2} nm)",
        sample.value * 1e9,
        sample.sigma * 1e9,
        inject_nm
    );
    if sample.ill_conditioned {
        let _ = writeln!(report, "warning: alpha consistent with zero within 1 sigma");
    }
    let _ = writeln!(
        report,
        "piezo gamma: {:.2} +/- {:.2} nm/V (9.63 V mode spacing)",
        gamma * 1e9,
        gamma_spread * 1e9
    );
    emit(&report, out, "vibration_fit_report.txt")
}

pub fn gen_mask(scenario: &Scenario, out: &Path, convention: GrapheneConvention) -> Result<()> {
    let spec = match &scenario.mask {
        MaskSource::LeadsDevice(_) => scenario.grid,
        _ => leads_device_grid(),
    };
    let mask = leads_device_mask(spec, convention)?;
    let path = out.join("leads-device.txt");
    io::save_mask(&mask, &path)?;
    println!(
        "wrote {} ({}x{} at {:.3} um, {})",
        path.display(),
        spec.width,
        spec.height,
        spec.pitch * 1e6,
        convention.name()
    );
    Ok(())
}
