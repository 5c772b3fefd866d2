//! Acceptance gate. Each test checks one release criterion at its pinned
//! tolerance and runtime budget, and prints a single verdict line of the
//! form `[acceptance] C<n> <name>: PASS (<details>)`. Verdicts go to the
//! raw stderr stream so they stay visible in captured test runs.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use confocal_core::io::load_mask;
use confocal_core::presets::{
    leads_cavity, leads_device_grid, leads_device_mask, leads_probe_sites, science_cavity,
    test_cavity, GrapheneConvention, LEADS_BASIS_ORDER, SCIENCE_BASIS_ORDER,
};
use confocal_core::scenario::builtin_scenario;
use confocal_core::solver::{amplitude_for_finesse, round_trip_operator};
use confocal_core::{
    band_rms, compute_psd, displacement_from_error, finesse_from_amplitude, fit_vibration_response,
    image_through_cavity, localized_supermode, piezo_gamma, sample_displacement,
    synthesize_white_noise, transmission_spectrum, CavityGeometry, GridSpec, ImageGrid,
    ImagingKernel, LockCalibration, ModeBasis, ParityFamily, TransmissionMask, WindowKind,
};

/// Print the verdict line and enforce both the value check and the
/// runtime budget.
fn verdict(criterion: &str, start: Instant, budget_s: f64, pass: bool, detail: &str) {
    let elapsed = start.elapsed().as_secs_f64();
    let in_budget = elapsed < budget_s;
    let ok = pass && in_budget;
    let line = format!(
        "[acceptance] {criterion}: {} ({detail}; {elapsed:.2} s of {budget_s:.0} s budget)\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    print!("{line}");
    assert!(ok, "{criterion}: {detail} (elapsed {elapsed:.2} s)");
}

#[test]
fn c01_finesse_linewidth_consistency() {
    let start = Instant::now();
    let science = science_cavity().unwrap().with_length(11.25e-3).unwrap();
    let science_report =
        finesse_from_amplitude(science.bare_round_trip_amplitude(), science.fsr()).unwrap();
    let survey = leads_cavity().unwrap();
    let survey_report =
        finesse_from_amplitude(survey.bare_round_trip_amplitude(), survey.fsr()).unwrap();
    let lw208 = science_report.linewidth * 1e-6;
    let lw181 = survey_report.linewidth * 1e-6;
    let pass = (science_report.finesse - 208.0).abs() < 0.5
        && (lw208 - 64.0).abs() < 1.0
        && (survey_report.finesse - 181.0).abs() < 0.5
        && (lw181 - 82.9).abs() < 1.0;
    verdict(
        "C1 finesse-linewidth consistency",
        start,
        1.0,
        pass,
        &format!(
            "F = {:.1} gives {:.2} MHz at 11.25 mm, F = {:.1} gives {:.2} MHz at 10 mm",
            science_report.finesse, lw208, survey_report.finesse, lw181
        ),
    );
}

#[test]
fn c02_confocal_waist() {
    let start = Instant::now();
    let w0 = science_cavity().unwrap().fundamental_waist();
    let pass = (w0 * 1e6 - 35.2).abs() < 0.5;
    verdict(
        "C2 confocal waist",
        start,
        1.0,
        pass,
        &format!("w0 = {:.4} um at L = R = 10 mm", w0 * 1e6),
    );
}

#[test]
fn c03_coating_limit_finesse() {
    let start = Instant::now();
    let coating = test_cavity().unwrap();
    let report =
        finesse_from_amplitude(coating.bare_round_trip_amplitude(), coating.fsr()).unwrap();
    let rho208 = amplitude_for_finesse(208.0).unwrap();
    let loss = 1.0 - rho208 / coating.bare_round_trip_amplitude();
    let pass = (report.finesse - 239.0).abs() < 1.0 && (loss - 0.0020).abs() < 0.0002;
    verdict(
        "C3 coating-limit finesse",
        start,
        1.0,
        pass,
        &format!(
            "coating F = {:.2}, excess amplitude loss to reach 208 = {:.5}",
            report.finesse, loss
        ),
    );
}

#[test]
fn c04_degeneracy_collapse() {
    let start = Instant::now();
    let confocal = science_cavity().unwrap();
    let basis = ModeBasis::new(confocal, ParityFamily::Even, 20).unwrap();
    let detunings = basis.relative_frequencies();
    let spread = detunings.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - detunings.iter().cloned().fold(f64::INFINITY, f64::min);

    let scenario = builtin_scenario("science-cavity").unwrap();
    let detuned = confocal
        .with_length(1.125 * confocal.mirror_radius)
        .unwrap();
    let detuned_basis =
        ModeBasis::new(detuned, ParityFamily::Even, SCIENCE_BASIS_ORDER).unwrap();
    let pump = scenario.resolve_pump(&detuned_basis).unwrap();
    let mask = TransmissionMask::identity(scenario.grid);
    let spectrum = transmission_spectrum(
        &detuned,
        &mask,
        &detuned_basis,
        &pump,
        (-8.0e9, 8.0e9),
        4001,
    )
    .unwrap();
    let peaks = spectrum.peaks.len();
    let pass = spread == 0.0 && peaks >= 3;
    verdict(
        "C4 degeneracy collapse",
        start,
        10.0,
        pass,
        &format!(
            "confocal even-family spread {spread:.1} Hz for n+m <= 20, \
             {peaks} resolved peaks at L/R = 1.125"
        ),
    );
}

#[test]
fn c05_supermode_localization() {
    let start = Instant::now();
    let geometry = science_cavity().unwrap();
    let w0 = geometry.fundamental_waist();
    let orders = [4u32, 8, 16, 36, 64];
    let mut waists = Vec::new();
    for &order in &orders {
        let basis = ModeBasis::new(geometry, ParityFamily::Even, order).unwrap();
        let (mode, _) = localized_supermode(&basis).unwrap();
        waists.push(mode.effective_waist);
    }
    let monotone = waists.windows(2).all(|w| w[1] < w[0]);
    // xi scales as w0/sqrt(N): the scaled ratio xi sqrt(N)/w0 must stay
    // within 20% of its central value across the range.
    let ratios: Vec<f64> = orders
        .iter()
        .zip(&waists)
        .map(|(&n, &xi)| xi * (n as f64).sqrt() / w0)
        .collect();
    let center = 1.47;
    let scaling = ratios.iter().all(|r| (r - center).abs() / center < 0.2);
    let preset = waists[3] * 1e6;
    let preset_ok = (preset - 9.5).abs() / 9.5 < 0.10;
    // Confirm the N = 64 supermode survives synthesis on the full grid.
    let big = ModeBasis::new(geometry, ParityFamily::Even, 64).unwrap();
    let (mode64, _) = localized_supermode(&big).unwrap();
    let grid = GridSpec::square(512, 0.5e-6).unwrap();
    let field = mode64.synthesize(&big, &grid).unwrap();
    let synth_ok = field.power() > 0.9;
    let pass = monotone && scaling && preset_ok && synth_ok;
    verdict(
        "C5 supermode localization",
        start,
        30.0,
        pass,
        &format!(
            "xi = {:.2} / {:.2} / {:.2} / {:.2} / {:.2} um for N = 4/8/16/36/64, preset xi = {preset:.2} um",
            waists[0] * 1e6,
            waists[1] * 1e6,
            waists[2] * 1e6,
            waists[3] * 1e6,
            waists[4] * 1e6
        ),
    );
}

#[test]
fn c06_finesse_map_ordering() {
    let start = Instant::now();
    let geometry = leads_cavity().unwrap();
    let basis = ModeBasis::new(geometry, ParityFamily::Even, LEADS_BASIS_ORDER).unwrap();
    let sites = leads_probe_sites();
    let positions: Vec<(f64, f64)> = sites.iter().map(|s| (s.x, s.y)).collect();
    let mut values = Vec::new();
    for convention in [GrapheneConvention::PerPass, GrapheneConvention::PerRoundTrip] {
        let mask = leads_device_mask(leads_device_grid(), convention).unwrap();
        let reports = confocal_core::finesse_map(&mask, &basis, &geometry, &positions).unwrap();
        values.push((convention, reports));
    }
    let mut pass = true;
    let mut details = Vec::new();
    for (convention, reports) in &values {
        let f: Vec<f64> = reports.iter().map(|r| r.finesse).collect();
        let (substrate, gap, hbn, tmd) = (f[0], f[1], f[2], f[3]);
        let ordered = substrate > hbn && hbn > tmd && gap > tmd;
        let bracket = match convention {
            GrapheneConvention::PerPass => (65.0..=90.0).contains(&tmd),
            GrapheneConvention::PerRoundTrip => (75.0..=95.0).contains(&tmd),
        };
        pass &= ordered && bracket;
        details.push(format!(
            "{}: {substrate:.1}/{gap:.1}/{hbn:.1}/{tmd:.1}",
            convention.name()
        ));
    }
    verdict(
        "C6 finesse map ordering",
        start,
        120.0,
        pass,
        &format!(
            "substrate/leads-gap/hBN/TMD finesse {}",
            details.join(" and ")
        ),
    );
}

#[test]
fn c07_imaging_parity() {
    let start = Instant::now();
    let geometry = science_cavity().unwrap();
    let basis = ModeBasis::new(geometry, ParityFamily::Even, SCIENCE_BASIS_ORDER).unwrap();
    let kernel = ImagingKernel::new(basis).unwrap();
    let spec = GridSpec::square(256, 1.4e-6).unwrap();
    let x0 = 50.0e-6;
    let mut scene = TransmissionMask::identity(spec);
    scene.fill_disk(x0, 0.0, 12.0e-6, 0.0, 0.0);
    let illumination = ImageGrid::uniform(spec, 1.0).unwrap();
    let image = image_through_cavity(&scene, &illumination, &kernel).unwrap();

    let peak = image
        .intensity
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut parity_defect = 0.0f64;
    let (h, w) = (spec.height, spec.width);
    for iy in 0..h {
        for ix in 0..w {
            let d = (image.intensity[(iy, ix)] - image.intensity[(h - 1 - iy, w - 1 - ix)]).abs();
            parity_defect = parity_defect.max(d);
        }
    }
    let parity_ok = parity_defect <= 1e-6 * peak;

    // Both mirror positions of the absorber must be dark relative to a
    // reference far from it.
    let dip_pos = image.value_at(x0, 0.0).unwrap();
    let dip_neg = image.value_at(-x0, 0.0).unwrap();
    let reference = image.value_at(0.0, x0).unwrap();
    let dips_ok = dip_pos < 0.6 * reference && dip_neg < 0.6 * reference;
    let pass = parity_ok && dips_ok;
    verdict(
        "C7 imaging parity",
        start,
        60.0,
        pass,
        &format!(
            "rotation defect {:.1e} of peak, twin dips {:.2}/{:.2} of reference",
            parity_defect / peak,
            dip_pos / reference,
            dip_neg / reference
        ),
    );
}

#[test]
fn c08_displacement_chain() {
    let start = Instant::now();
    let geometry = science_cavity().unwrap();
    let slope = 2.5e-7;
    let fsr = geometry.fsr();
    let laser = confocal_core::SPEED_OF_LIGHT / geometry.wavelength;
    let q = (laser / fsr).round() as u64;
    let cal = LockCalibration::new(slope, geometry.length, q, fsr, laser, 4.25e6).unwrap();
    let pm = |dnu: f64| displacement_from_error(dnu * slope, &cal).unwrap() * 1e12;
    let on = pm(4.25e6);
    let off = pm(3.73e6);
    let pass = (on - 110.6).abs() < 0.1 && (off - 97.0).abs() < 0.1;
    verdict(
        "C8 displacement chain",
        start,
        1.0,
        pass,
        &format!("4.25 MHz -> {on:.2} pm, 3.73 MHz -> {off:.2} pm"),
    );
}

#[test]
fn c09_psd_pipeline() {
    let start = Instant::now();
    let rate = 1.0e6;
    let sigma = 1.0;
    let trace = synthesize_white_noise(rate, 1 << 18, sigma, 12).unwrap();
    let psd = compute_psd(&trace, 4096, 2048, WindowKind::Hann).unwrap();
    let expected = 2.0 * sigma * sigma / rate;
    let in_band: Vec<f64> = psd
        .frequencies
        .iter()
        .zip(&psd.density)
        .filter(|(f, _)| **f > 1.0e3 && **f < 4.0e5)
        .map(|(_, d)| *d)
        .collect();
    let mean = in_band.iter().sum::<f64>() / in_band.len() as f64;
    let density_ok = (mean - expected).abs() / expected < 0.10;

    let std = trace.variance().sqrt();
    let full = band_rms(&psd, 0.0, psd.nyquist()).unwrap();
    let parseval_ok = (full - std).abs() / std < 0.05;

    let scenario = builtin_scenario("cryocooler-on").unwrap();
    let shaped = scenario.resolve_noise(7).unwrap();
    let shaped_psd = compute_psd(
        &shaped,
        scenario.analysis.psd_segment,
        scenario.analysis.psd_overlap,
        scenario.analysis.window,
    )
    .unwrap();
    let (lo, hi) = scenario.analysis.band;
    let v_rms = band_rms(&shaped_psd, lo, hi).unwrap();
    let cal = scenario.lock_calibration().unwrap();
    let shaped_pm = displacement_from_error(v_rms, &cal).unwrap() * 1e12;
    let shaped_ok = (shaped_pm - 110.0).abs() / 110.0 < 0.05;
    let pass = density_ok && parseval_ok && shaped_ok;
    verdict(
        "C9 psd pipeline",
        start,
        10.0,
        pass,
        &format!(
            "white density within {:.1}%, Parseval within {:.1}%, shaped band RMS {shaped_pm:.1} pm",
            100.0 * (mean - expected).abs() / expected,
            100.0 * (full - std).abs() / std
        ),
    );
}

#[test]
fn c10_drive_response_chain() {
    let start = Instant::now();
    let (gamma, _) = piezo_gamma(&[0.0, 9.63, 19.26], 780.0e-9).unwrap();
    let gamma_nm = gamma * 1e9;
    let gamma_ok = (gamma_nm - 40.5).abs() < 0.01;

    // Exact-arithmetic case: alpha 1 MHz/nm, beta 14.25 MHz, floor
    // 4.25 MHz leaves exactly 10 nm of sample motion.
    let alpha = 1.0e15;
    let drives: Vec<f64> = (1..=5).map(|i| i as f64 * 1e-9).collect();
    let responses: Vec<f64> = drives.iter().map(|x| alpha * x + 14.25e6).collect();
    let fit = fit_vibration_response(700.0, &drives, &responses).unwrap();
    let exact = sample_displacement(&fit, 4.25e6, None).unwrap();
    let exact_ok = (exact.value - 10.0e-9).abs() < 1e-15;

    // End-to-end synthetic injection of 6 nm recovered within 1 nm.
    let inject = 6.0e-9;
    let noise = synthesize_white_noise(1.0, 10, 0.2e6, 7).unwrap();
    let beta_true = 4.25e6 + alpha * inject;
    let noisy: Vec<f64> = (1..=10)
        .map(|i| alpha * i as f64 * 1e-9 + beta_true + noise.samples[i - 1])
        .collect();
    let drives10: Vec<f64> = (1..=10).map(|i| i as f64 * 1e-9).collect();
    let noisy_fit = fit_vibration_response(700.0, &drives10, &noisy).unwrap();
    let recovered = sample_displacement(&noisy_fit, 4.25e6, None).unwrap();
    let recover_ok = (recovered.value - inject).abs() < 1.0e-9;
    let pass = gamma_ok && exact_ok && recover_ok;
    verdict(
        "C10 drive-response chain",
        start,
        10.0,
        pass,
        &format!(
            "gamma {gamma_nm:.2} nm/V, exact case {:.3} nm, injected 6 nm recovered {:.2} nm",
            exact.value * 1e9,
            recovered.value * 1e9
        ),
    );
}

#[test]
fn c11_property_suites() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20260823);
    let mirror = 10.0e-3;
    let wavelength = 780.0e-9;
    let mut failures: Vec<String> = Vec::new();

    // Passivity: 400 random masked cavities, every eigenvalue within the
    // bare round-trip amplitude.
    let spec = GridSpec::square(104, 2.5e-6).unwrap();
    for i in 0..400 {
        let length = rng.gen_range(6.0e-3..14.0e-3);
        let upper = rng.gen_range(0.9..0.9995);
        let lower = rng.gen_range(0.9..0.9995);
        let excess = rng.gen_range(0.0..0.05);
        let order = rng.gen_range(4..9);
        let family = match rng.gen_range(0..3) {
            0 => ParityFamily::Even,
            1 => ParityFamily::Odd,
            _ => ParityFamily::All,
        };
        let geometry = CavityGeometry::new(mirror, length, upper, lower, wavelength)
            .unwrap()
            .with_excess_loss(excess)
            .unwrap();
        let basis = ModeBasis::new(geometry, family, order).unwrap();
        let mut mask = TransmissionMask::identity(spec);
        for _ in 0..rng.gen_range(1..4) {
            let x0 = rng.gen_range(-80.0e-6..80.0e-6);
            let y0 = rng.gen_range(-80.0e-6..80.0e-6);
            let w = rng.gen_range(5.0e-6..120.0e-6);
            let h = rng.gen_range(5.0e-6..120.0e-6);
            let amp = rng.gen_range(0.0..1.0);
            let phase = rng.gen_range(-3.0..3.0);
            mask.fill_rect(x0, x0 + w, y0, y0 + h, amp, phase);
        }
        let op = round_trip_operator(&geometry, &mask, &basis, 0.0).unwrap();
        let bound = geometry.bare_round_trip_amplitude() + 1e-9;
        let spectrum = op.eigendecompose().unwrap();
        if let Some(bad) = spectrum.eigenvalues.iter().find(|l| l.norm() > bound) {
            failures.push(format!("passivity case {i}: |lambda| = {}", bad.norm()));
        }
    }

    // Orthonormality: 200 synthesize-project round trips.
    let fine = GridSpec::square(160, 2.2e-6).unwrap();
    for i in 0..200 {
        let geometry =
            CavityGeometry::new(mirror, rng.gen_range(8.0e-3..12.0e-3), 0.997, 0.977, wavelength)
                .unwrap();
        let family = if rng.gen_bool(0.5) {
            ParityFamily::Even
        } else {
            ParityFamily::All
        };
        let basis = ModeBasis::new(geometry, family, rng.gen_range(2..7)).unwrap();
        let k = rng.gen_range(0..basis.len());
        let mut coeffs = vec![Complex64::new(0.0, 0.0); basis.len()];
        coeffs[k] = Complex64::new(1.0, 0.0);
        let field = basis.synthesize(&coeffs, &fine).unwrap();
        let back = basis.project(&field).unwrap();
        let defect = back
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let want = if j == k { 1.0 } else { 0.0 };
                (c - Complex64::new(want, 0.0)).norm()
            })
            .fold(0.0f64, f64::max);
        if defect >= 1e-6 {
            failures.push(format!("orthonormality case {i}: defect {defect:.2e}"));
        }
    }

    // Parity leakage: 200 random even fields projected on the odd family.
    for i in 0..200 {
        let geometry =
            CavityGeometry::new(mirror, rng.gen_range(8.0e-3..12.0e-3), 0.997, 0.977, wavelength)
                .unwrap();
        let order = rng.gen_range(2..7);
        let even = ModeBasis::new(geometry, ParityFamily::Even, order).unwrap();
        let odd = ModeBasis::new(geometry, ParityFamily::Odd, order + 1).unwrap();
        let mut coeffs = Vec::with_capacity(even.len());
        let mut norm = 0.0f64;
        for _ in 0..even.len() {
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            norm += c.norm_sqr();
            coeffs.push(c);
        }
        let field = even.synthesize(&coeffs, &fine).unwrap();
        let leak = odd
            .project(&field)
            .unwrap()
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            / norm.sqrt();
        if leak >= 1e-8 {
            failures.push(format!("parity case {i}: leakage {leak:.2e}"));
        }
    }

    // Fit shift invariance: 200 random lines.
    for i in 0..200 {
        let n = rng.gen_range(4..12);
        let slope = rng.gen_range(-5.0e15..5.0e15);
        let intercept = rng.gen_range(-2.0e7..2.0e7);
        let shift = rng.gen_range(-1.0e7..1.0e7);
        let drives: Vec<f64> = (0..n).map(|j| (j as f64 + 1.0) * 1.0e-9).collect();
        let responses: Vec<f64> = drives
            .iter()
            .map(|x| slope * x + intercept + rng.gen_range(-1.0e5..1.0e5))
            .collect();
        let shifted: Vec<f64> = responses.iter().map(|y| y + shift).collect();
        let base = fit_vibration_response(700.0, &drives, &responses).unwrap();
        let moved = fit_vibration_response(700.0, &drives, &shifted).unwrap();
        let beta_scale = base.beta.abs().max(shift.abs()).max(1.0);
        let alpha_scale = base.alpha.abs().max(1.0);
        if ((moved.beta - base.beta) - shift).abs() > 1e-9 * beta_scale
            || (moved.alpha - base.alpha).abs() > 1e-9 * alpha_scale
        {
            failures.push(format!("fit-shift case {i}"));
        }
    }

    // CLI byte determinism: identical seeds, identical files.
    let dir = tempfile::tempdir().unwrap();
    let preset_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    let scenario = preset_dir.join("cryocooler-on.toml");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_confocal"))
            .args([
                "--scenario",
                scenario.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "99",
                "lock-noise",
            ])
            .output()
            .unwrap();
        if !status.status.success() {
            failures.push("cli determinism: lock-noise run failed".to_string());
        }
        outputs.push((
            std::fs::read(out.join("lock_noise_report.txt")).unwrap_or_default(),
            std::fs::read(out.join("lock_noise_psd.csv")).unwrap_or_default(),
        ));
    }
    if outputs[0] != outputs[1] {
        failures.push("cli determinism: outputs differ between identical runs".to_string());
    }
    let loaded = load_mask(&{
        let out = dir.path().join("mask");
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_confocal"))
            .args(["--out", out.to_str().unwrap(), "gen-mask"])
            .output()
            .unwrap();
        assert!(status.status.success());
        out.join("leads-device.txt")
    });
    if loaded.is_err() {
        failures.push("cli determinism: generated mask failed to load".to_string());
    }

    let pass = failures.is_empty();
    verdict(
        "C11 property suites",
        start,
        300.0,
        pass,
        &format!(
            "1000 randomized instances over passivity/orthonormality/parity/fit-shift, \
             plus CLI byte determinism{}",
            if pass {
                String::new()
            } else {
                format!("; first failure: {}", failures[0])
            }
        ),
    );
}
