//! Text-format readers and writers: versioned mask files, two-column CSV
//! traces and spectra, PSD tables, image grids as CSV or 16-bit PGM.
//!
//! Every writer uses `{:.9e}` float formatting and `\n` line endings, so
//! identical inputs always produce byte-identical files. Loading a file
//! and saving it again is byte-idempotent: values quantize once at the
//! first save and are fixed points of the format afterwards.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::imaging::ImageGrid;
use crate::lock::{NoiseTrace, PsdSpec, WindowKind};
use crate::mask::{wrap_phase, TransmissionMask};
use crate::spectrum::Spectrum;

/// Canonical float formatting for all emitted files.
pub fn format_float(v: f64) -> String {
    format!("{v:.9e}")
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn parse_f64(path: &Path, token: &str, context: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(path, format!("{context}: bad number {token:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, format!("{context}: non-finite value {token:?}")));
    }
    Ok(v)
}

/// Write a mask as `MASK v1 <width> <height> <pitch_um>` followed by
/// amplitude rows and, when any phase is nonzero, a `PHASE` block.
pub fn save_mask(mask: &TransmissionMask, path: &Path) -> Result<()> {
    mask.validate()?;
    let spec = mask.spec;
    let mut out = String::new();
    writeln!(
        out,
        "MASK v1 {} {} {}",
        spec.width,
        spec.height,
        format_float(spec.pitch * 1e6)
    )
    .unwrap();
    let write_block = |out: &mut String, values: &Array2<f64>| {
        for iy in 0..spec.height {
            let row: Vec<String> = (0..spec.width)
                .map(|ix| format_float(values[(iy, ix)]))
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    };
    write_block(&mut out, &mask.amplitude);
    if mask.phase.iter().any(|p| *p != 0.0) {
        writeln!(out, "PHASE").unwrap();
        write_block(&mut out, &mask.phase);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a `MASK v1` file; value ranges are enforced on load.
pub fn load_mask(path: &Path) -> Result<TransmissionMask> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "MASK" || fields[1] != "v1" {
        return Err(parse_err(
            path,
            format!("header {header:?}; expected \"MASK v1 <width> <height> <pitch_um>\""),
        ));
    }
    let width: usize = fields[2]
        .parse()
        .map_err(|_| parse_err(path, format!("bad width {:?}", fields[2])))?;
    let height: usize = fields[3]
        .parse()
        .map_err(|_| parse_err(path, format!("bad height {:?}", fields[3])))?;
    let pitch_um = parse_f64(path, fields[4], "header pitch")?;
    if pitch_um <= 0.0 {
        return Err(parse_err(path, format!("pitch {pitch_um} um must be positive")));
    }
    let spec = GridSpec::new(width, height, pitch_um * 1e-6)?;

    fn read_block(
        lines: &mut std::str::Lines<'_>,
        path: &Path,
        name: &str,
        width: usize,
        height: usize,
    ) -> Result<Array2<f64>> {
        let mut block = Array2::<f64>::zeros((height, width));
        for iy in 0..height {
            let line = lines
                .next()
                .ok_or_else(|| parse_err(path, format!("{name} block ends at row {iy} of {height}")))?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != width {
                return Err(parse_err(
                    path,
                    format!("{name} row {iy} has {} values, expected {width}", tokens.len()),
                ));
            }
            for (ix, token) in tokens.iter().enumerate() {
                block[(iy, ix)] = parse_f64(path, token, &format!("{name} row {iy}"))?;
            }
        }
        Ok(block)
    }
    let amplitude = read_block(&mut lines, path, "amplitude", width, height)?;
    let mut phase = Array2::<f64>::zeros((height, width));
    match lines.next() {
        None => {}
        Some("PHASE") => {
            phase = read_block(&mut lines, path, "phase", width, height)?;
            if let Some(extra) = lines.next() {
                if !extra.trim().is_empty() {
                    return Err(parse_err(path, format!("trailing content {extra:?}")));
                }
            }
        }
        Some(extra) if extra.trim().is_empty() => {}
        Some(extra) => {
            return Err(parse_err(
                path,
                format!("expected \"PHASE\" or end of file, found {extra:?}"),
            ))
        }
    }
    for p in phase.iter_mut() {
        *p = wrap_phase(*p);
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TransmissionMask::new(spec, amplitude, phase, label)
}

/// Two-column CSV with a mandatory header; '#' lines are comments.
fn load_two_column(path: &Path, expected_header: &str) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != expected_header {
                return Err(parse_err(
                    path,
                    format!("header {line:?}; expected {expected_header:?}"),
                ));
            }
            header_seen = true;
            continue;
        }
        let mut parts = line.split(',');
        let a = parts
            .next()
            .ok_or_else(|| parse_err(path, format!("line {}: empty row", line_no + 1)))?;
        let b = parts
            .next()
            .ok_or_else(|| parse_err(path, format!("line {}: missing second column", line_no + 1)))?;
        if parts.next().is_some() {
            return Err(parse_err(path, format!("line {}: more than two columns", line_no + 1)));
        }
        rows.push((
            parse_f64(path, a.trim(), &format!("line {}", line_no + 1))?,
            parse_f64(path, b.trim(), &format!("line {}", line_no + 1))?,
        ));
    }
    if !header_seen {
        return Err(parse_err(path, format!("missing header {expected_header:?}")));
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    Ok(rows)
}

fn save_two_column(path: &Path, header: &str, rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{header}").unwrap();
    for (a, b) in rows {
        writeln!(out, "{},{}", format_float(a), format_float(b)).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub const TRACE_HEADER: &str = "time_s,volts";
pub const PSD_HEADER: &str = "freq_hz,density";
pub const SPECTRUM_HEADER: &str = "offset_hz,transmission";

/// Write a voltage trace as `time_s,volts` rows.
pub fn save_trace(trace: &NoiseTrace, path: &Path) -> Result<()> {
    let dt = 1.0 / trace.rate;
    save_two_column(
        path,
        TRACE_HEADER,
        trace
            .samples
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64 * dt, *v)),
    )
}

/// Read a `time_s,volts` trace; the time column must be uniform.
pub fn load_trace(path: &Path) -> Result<NoiseTrace> {
    let rows = load_two_column(path, TRACE_HEADER)?;
    if rows.len() < 2 {
        return Err(parse_err(path, "need at least two samples to fix the rate"));
    }
    let dt = (rows.last().unwrap().0 - rows[0].0) / (rows.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(parse_err(path, "time column does not increase"));
    }
    for pair in rows.windows(2) {
        let step = pair[1].0 - pair[0].0;
        if (step - dt).abs() > 1e-6 * dt {
            return Err(parse_err(
                path,
                format!("non-uniform sampling: step {step:.6e} s vs mean {dt:.6e} s"),
            ));
        }
    }
    let samples: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    NoiseTrace::new(1.0 / dt, samples, label)
}

/// Write a one-sided PSD as `freq_hz,density` rows, with the estimator
/// settings recorded in comment lines.
pub fn save_psd(psd: &PsdSpec, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(
        out,
        "# one-sided PSD, window {}, segment {}, overlap {}, segments {}",
        psd.window.name(),
        psd.segment_length,
        psd.overlap,
        psd.segments_averaged
    )
    .unwrap();
    writeln!(out, "{PSD_HEADER}").unwrap();
    for (f, d) in psd.frequencies.iter().zip(psd.density.iter()) {
        writeln!(out, "{},{}", format_float(*f), format_float(*d)).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a pre-computed `freq_hz,density` table as a one-sided PSD.
pub fn load_psd(path: &Path) -> Result<PsdSpec> {
    let rows = load_two_column(path, PSD_HEADER)?;
    for pair in rows.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(parse_err(path, "frequency column must strictly increase"));
        }
    }
    if let Some(bad) = rows.iter().find(|r| r.1 < 0.0) {
        return Err(parse_err(path, format!("negative density {} at {} Hz", bad.1, bad.0)));
    }
    let top = rows.last().unwrap().0;
    Ok(PsdSpec {
        frequencies: rows.iter().map(|r| r.0).collect(),
        density: rows.iter().map(|r| r.1).collect(),
        window: WindowKind::Rectangular,
        segment_length: 0,
        overlap: 0,
        segments_averaged: 1,
        rate: 2.0 * top,
    })
}

/// Write a transmission spectrum as `offset_hz,transmission` rows.
pub fn save_spectrum(spectrum: &Spectrum, path: &Path) -> Result<()> {
    save_two_column(
        path,
        SPECTRUM_HEADER,
        spectrum
            .offsets
            .iter()
            .zip(spectrum.transmission.iter())
            .map(|(o, t)| (*o, *t)),
    )
}

/// Write an image as CSV rows of intensity, one grid row per line.
pub fn save_image_csv(image: &ImageGrid, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(
        out,
        "# image {}x{} pitch_um {}",
        image.spec.width,
        image.spec.height,
        format_float(image.spec.pitch * 1e6)
    )
    .unwrap();
    for iy in 0..image.spec.height {
        let row: Vec<String> = (0..image.spec.width)
            .map(|ix| format_float(image.intensity[(iy, ix)]))
            .collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write an image as a binary 16-bit PGM (P5), scaled so the brightest
/// pixel maps to 65535.
pub fn save_image_pgm(image: &ImageGrid, path: &Path) -> Result<()> {
    let peak = image.intensity.iter().cloned().fold(0.0f64, f64::max);
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    let mut bytes = format!("P5\n{} {}\n65535\n", image.spec.width, image.spec.height).into_bytes();
    for iy in 0..image.spec.height {
        for ix in 0..image.spec.width {
            let v = (image.intensity[(iy, ix)] * scale).round().clamp(0.0, 65535.0) as u16;
            bytes.extend_from_slice(&v.to_be_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Write a plain-text report.
pub fn save_report(text: &str, path: &Path) -> Result<()> {
    let body = if text.ends_with('\n') {
        text.to_string()
    } else {
        format!("{text}\n")
    };
    std::fs::write(path, body)?;
    Ok(())
}
