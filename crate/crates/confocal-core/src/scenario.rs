//! Config-driven run descriptions: a TOML scenario file selects the
//! cavity, mode family, grid, mask, pump, and analysis settings.
//!
//! Parsing validates everything it can reach and reports every violation
//! at once rather than stopping at the first. Unit-bearing keys carry
//! their unit as a suffix (`length_mm`, `grid_pitch_um`, `band_lo_hz`);
//! an unsuffixed spelling is rejected with a pointer to the right key.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use toml::value::{Table, Value};

use crate::error::{Error, Result};
use crate::geometry::CavityGeometry;
use crate::grid::{FieldGrid, GridSpec};
use crate::io::{load_mask, load_trace};
use crate::lock::{synthesize_shaped_noise, synthesize_white_noise, LockCalibration, NoiseTrace, WindowKind};
use crate::mask::TransmissionMask;
use crate::modes::{ModeBasis, ParityFamily};
use crate::presets;
use crate::presets::GrapheneConvention;
use crate::solver::excess_loss_for_finesse;

/// Where the intracavity mask comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    Identity,
    File(PathBuf),
    LeadsDevice(GrapheneConvention),
}

/// Which field pumps the cavity.
#[derive(Debug, Clone, PartialEq)]
pub enum PumpSpec {
    Tem00,
    Point { x: f64, y: f64 },
    File(PathBuf),
}

/// Spectrum and PSD analysis settings.
#[derive(Debug, Clone)]
pub struct AnalysisSpec {
    /// Full width of the spectrum offset window, Hz.
    pub span: f64,
    pub bins: usize,
    /// RMS integration band, Hz.
    pub band: (f64, f64),
    pub psd_segment: usize,
    pub psd_overlap: usize,
    pub window: WindowKind,
    /// L/R values for degeneracy-collapse spectra.
    pub length_ratios: Vec<f64>,
}

/// Where the lock-noise trace comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    /// Servo-shaped synthetic trace with an exact in-band displacement RMS.
    Shaped {
        rate: f64,
        samples: usize,
        /// Target band RMS as cavity length displacement, m.
        target_band_rms: f64,
        corner: f64,
    },
    White {
        rate: f64,
        samples: usize,
        sigma: f64,
    },
    File(PathBuf),
}

/// Error-signal bookkeeping for the displacement conversion.
#[derive(Debug, Clone, Copy)]
pub struct LockSpec {
    /// Discriminator slope, V/Hz.
    pub slope: f64,
    /// Bare-cavity RMS frequency excursion, Hz.
    pub bare_rms: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub geometry: CavityGeometry,
    pub basis_order: u32,
    pub family: ParityFamily,
    pub grid: GridSpec,
    pub mask: MaskSource,
    pub pump: PumpSpec,
    pub analysis: AnalysisSpec,
    pub noise: NoiseSource,
    pub lock: LockSpec,
    pub output_dir: PathBuf,
}

impl Scenario {
    /// The science-cavity configuration every omitted block falls back
    /// to. The pump sits slightly off axis so synthesized spectra excite
    /// the transverse fan instead of the lone fundamental line.
    pub fn defaults() -> Scenario {
        Scenario {
            label: "science-cavity".into(),
            geometry: presets::science_cavity().expect("preset geometry"),
            basis_order: presets::SCIENCE_BASIS_ORDER,
            family: ParityFamily::Even,
            grid: GridSpec::square(512, 0.5e-6).expect("preset grid"),
            mask: MaskSource::Identity,
            pump: PumpSpec::Point {
                x: 10.0e-6,
                y: 6.0e-6,
            },
            analysis: AnalysisSpec {
                span: 16.0e9,
                bins: 4001,
                band: (30.0, 1.0e5),
                psd_segment: 8192,
                psd_overlap: 4096,
                window: WindowKind::Hann,
                length_ratios: vec![1.0, 1.125],
            },
            noise: NoiseSource::Shaped {
                rate: 2.4e5,
                samples: 1 << 19,
                target_band_rms: 110.0e-12,
                corner: 1000.0,
            },
            lock: LockSpec {
                slope: 2.5e-7,
                bare_rms: 4.25e6,
            },
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn basis(&self) -> Result<ModeBasis> {
        ModeBasis::new(self.geometry, self.family, self.basis_order)
    }

    pub fn resolve_mask(&self) -> Result<TransmissionMask> {
        match &self.mask {
            MaskSource::Identity => Ok(TransmissionMask::identity(self.grid)),
            MaskSource::File(path) => load_mask(path),
            MaskSource::LeadsDevice(convention) => {
                presets::leads_device_mask(self.grid, *convention)
            }
        }
    }

    /// The pump field sampled on the scenario grid.
    pub fn resolve_pump(&self, basis: &ModeBasis) -> Result<FieldGrid> {
        match &self.pump {
            PumpSpec::Tem00 => {
                let k = basis
                    .indices
                    .iter()
                    .position(|&(n, m)| n == 0 && m == 0)
                    .ok_or_else(|| {
                        Error::Input("family does not contain the fundamental mode".into())
                    })?;
                let mut coeffs = vec![Complex64::new(0.0, 0.0); basis.len()];
                coeffs[k] = Complex64::new(1.0, 0.0);
                basis.synthesize(&coeffs, &self.grid)
            }
            PumpSpec::Point { x, y } => {
                let coeffs = basis.point_projection(*x, *y)?;
                basis.synthesize(&coeffs, &self.grid)
            }
            PumpSpec::File(path) => {
                let mask = load_mask(path)?;
                let values = ndarray::Array2::from_shape_fn(
                    (mask.spec.height, mask.spec.width),
                    |(iy, ix)| mask.value(iy, ix),
                );
                FieldGrid::new(mask.spec, values)?.normalized()
            }
        }
    }

    /// Eq. (1)-style calibration assembled from the scenario geometry.
    pub fn lock_calibration(&self) -> Result<LockCalibration> {
        let fsr = self.geometry.fsr();
        let laser = crate::geometry::SPEED_OF_LIGHT / self.geometry.wavelength;
        let q = (laser / fsr).round() as u64;
        LockCalibration::new(
            self.lock.slope,
            self.geometry.length,
            q,
            fsr,
            laser,
            self.lock.bare_rms,
        )
    }

    /// The lock-noise trace in volts. Shaped synthesis converts the
    /// displacement target to volts through the lock calibration, so the
    /// in-band RMS is exact by construction.
    pub fn resolve_noise(&self, seed: u64) -> Result<NoiseTrace> {
        match &self.noise {
            NoiseSource::File(path) => load_trace(path),
            NoiseSource::White { rate, samples, sigma } => {
                synthesize_white_noise(*rate, *samples, *sigma, seed)
            }
            NoiseSource::Shaped {
                rate,
                samples,
                target_band_rms,
                corner,
            } => {
                let cal = self.lock_calibration()?;
                let dnu = target_band_rms * (cal.longitudinal_index as f64 * cal.fsr)
                    / cal.cavity_length;
                let volts = dnu * cal.slope;
                synthesize_shaped_noise(
                    *rate,
                    *samples,
                    self.analysis.band,
                    volts,
                    *corner,
                    seed,
                )
            }
        }
    }
}

/// Names `builtin_scenario` accepts.
pub const BUILTIN_SCENARIOS: &[&str] = &[
    "science-cavity",
    "test-cavity",
    "leads-device",
    "cryocooler-on",
    "cryocooler-off",
];

/// A shipped scenario by name.
pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    let mut scenario = Scenario::defaults();
    scenario.label = name.to_string();
    match name {
        "science-cavity" | "cryocooler-on" => {}
        "cryocooler-off" => {
            scenario.noise = NoiseSource::Shaped {
                rate: 2.4e5,
                samples: 1 << 19,
                target_band_rms: 97.0e-12,
                corner: 1000.0,
            };
            scenario.lock.bare_rms = 3.73e6;
        }
        "test-cavity" => {
            scenario.geometry = presets::test_cavity()?;
            scenario.basis_order = presets::TEST_BASIS_ORDER;
            scenario.grid = GridSpec::square(512, 0.7e-6)?;
        }
        "leads-device" => {
            scenario.geometry = presets::leads_cavity()?;
            scenario.basis_order = presets::LEADS_BASIS_ORDER;
            scenario.grid = presets::leads_device_grid();
            scenario.mask = MaskSource::LeadsDevice(GrapheneConvention::PerPass);
        }
        other => {
            return Err(Error::Input(format!(
                "unknown builtin scenario {other:?}; known: {}",
                BUILTIN_SCENARIOS.join(", ")
            )))
        }
    }
    Ok(scenario)
}

const UNIT_SUFFIXES: &[&str] = &["mm", "um", "nm", "pm", "hz", "ghz", "mhz", "v_per_hz"];

/// Collects violations while blocks are read.
struct Checker<'a> {
    violations: Vec<String>,
    dir: &'a Path,
}

impl<'a> Checker<'a> {
    fn push(&mut self, message: impl Into<String>) {
        self.violations.push(message.into());
    }

    fn unknown_key(&mut self, block: &str, key: &str, known: &[&str]) {
        let bases: Vec<&str> = [key, key.strip_prefix(&format!("{block}_")).unwrap_or(key)]
            .into_iter()
            .collect();
        for base in bases {
            for candidate in known {
                if let Some(rest) = candidate.strip_prefix(base) {
                    if let Some(suffix) = rest.strip_prefix('_') {
                        if UNIT_SUFFIXES.contains(&suffix) {
                            self.push(format!(
                                "[{block}] unknown key \"{key}\"; units belong in the key, \
                                 use \"{candidate}\""
                            ));
                            return;
                        }
                    }
                }
            }
        }
        self.push(format!("[{block}] unknown key \"{key}\""));
    }

    fn block<'t>(&mut self, root: &'t Table, name: &str, known: &[&str]) -> Option<&'t Table> {
        let value = root.get(name)?;
        let Some(table) = value.as_table() else {
            self.push(format!("[{name}] must be a table"));
            return None;
        };
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                self.unknown_key(name, key, known);
            }
        }
        Some(table)
    }

    fn f64(&mut self, block: &str, table: &Table, key: &str) -> Option<f64> {
        match table.get(key)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            other => {
                self.push(format!(
                    "[{block}] {key} must be a number, got {}",
                    other.type_str()
                ));
                None
            }
        }
    }

    fn positive(&mut self, block: &str, table: &Table, key: &str) -> Option<f64> {
        let v = self.f64(block, table, key)?;
        if !(v > 0.0) || !v.is_finite() {
            self.push(format!("[{block}] {key} must be positive, got {v}"));
            return None;
        }
        Some(v)
    }

    fn usize(&mut self, block: &str, table: &Table, key: &str) -> Option<usize> {
        match table.get(key)? {
            Value::Integer(v) if *v >= 0 => Some(*v as usize),
            other => {
                self.push(format!(
                    "[{block}] {key} must be a non-negative integer, got {other}"
                ));
                None
            }
        }
    }

    fn string<'t>(&mut self, block: &str, table: &'t Table, key: &str) -> Option<&'t str> {
        match table.get(key)? {
            Value::String(s) => Some(s.as_str()),
            other => {
                self.push(format!(
                    "[{block}] {key} must be a string, got {}",
                    other.type_str()
                ));
                None
            }
        }
    }

    /// Resolve a referenced file against the scenario directory and
    /// require it to exist now.
    fn file(&mut self, block: &str, key: &str, raw: &str) -> Option<PathBuf> {
        let path = self.dir.join(raw);
        if !path.is_file() {
            self.push(format!(
                "[{block}] {key} references {}, which does not exist",
                path.display()
            ));
            return None;
        }
        Some(path)
    }
}

/// Parse and fully validate a scenario file; omitted blocks keep the
/// science-cavity defaults.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let root: Value = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let Some(root) = root.as_table() else {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: "scenario must be a TOML table".into(),
        });
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut scenario = Scenario::defaults();
    scenario.label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut check = Checker {
        violations: Vec::new(),
        dir,
    };

    const BLOCKS: &[&str] = &[
        "cavity", "basis", "mask", "pump", "analysis", "noise", "lock", "output",
    ];
    for key in root.keys() {
        if !BLOCKS.contains(&key.as_str()) {
            check.push(format!("unknown block [{key}]"));
        }
    }

    read_cavity(&mut check, root, &mut scenario);
    read_basis(&mut check, root, &mut scenario);
    read_mask(&mut check, root, &mut scenario);
    read_pump(&mut check, root, &mut scenario);
    read_analysis(&mut check, root, &mut scenario);
    read_noise(&mut check, root, &mut scenario);
    read_lock(&mut check, root, &mut scenario);
    if let Some(table) = check.block(root, "output", &["directory"]) {
        if let Some(dir) = check.string("output", table, "directory") {
            scenario.output_dir = PathBuf::from(dir);
        }
    }

    cross_checks(&mut check, &scenario);

    if check.violations.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::Scenario {
            violations: check.violations,
        })
    }
}

fn read_cavity(check: &mut Checker, root: &Table, scenario: &mut Scenario) {
    const KNOWN: &[&str] = &[
        "mirror_radius_mm",
        "length_mm",
        "reflectivity_upper",
        "reflectivity_lower",
        "wavelength_nm",
        "excess_loss",
        "finesse_target",
    ];
    let Some(table) = check.block(root, "cavity", KNOWN) else {
        return;
    };
    let mirror = check
        .positive("cavity", table, "mirror_radius_mm")
        .map(|v| v * 1e-3)
        .unwrap_or(presets::MIRROR_RADIUS);
    let length = check
        .positive("cavity", table, "length_mm")
        .map(|v| v * 1e-3)
        .unwrap_or(mirror);
    let wavelength = check
        .positive("cavity", table, "wavelength_nm")
        .map(|v| v * 1e-9)
        .unwrap_or(presets::WAVELENGTH);
    let mut upper = presets::REFLECTIVITY_UPPER;
    let mut lower = presets::REFLECTIVITY_LOWER;
    for (key, slot) in [
        ("reflectivity_upper", &mut upper),
        ("reflectivity_lower", &mut lower),
    ] {
        if let Some(v) = check.f64("cavity", table, key) {
            if v > 0.0 && v < 1.0 {
                *slot = v;
            } else {
                check.push(format!("[cavity] {key} must lie in (0, 1), got {v}"));
            }
        }
    }
    let excess = check.f64("cavity", table, "excess_loss");
    let finesse = check.positive("cavity", table, "finesse_target");
    if excess.is_some() && finesse.is_some() {
        check.push("[cavity] excess_loss and finesse_target are mutually exclusive");
        return;
    }
    let geometry = CavityGeometry::new(mirror, length, upper, lower, wavelength)
        .and_then(|g| {
            if let Some(f) = finesse {
                let loss = excess_loss_for_finesse(upper, lower, f)?;
                g.with_excess_loss(loss)
            } else if let Some(e) = excess {
                g.with_excess_loss(e)
            } else {
                Ok(g)
            }
        });
    match geometry {
        Ok(g) => scenario.geometry = g,
        Err(e) => check.push(format!("[cavity] {e}")),
    }
}

fn read_basis(check: &mut Checker, root: &Table, scenario: &mut Scenario) {
    const KNOWN: &[&str] = &["max_order", "family", "grid_pixels", "grid_pitch_um"];
    let Some(table) = check.block(root, "basis", KNOWN) else {
        return;
    };
    if let Some(order) = check.usize("basis", table, "max_order") {
        if order > 400 {
            check.push(format!("[basis] max_order {order} is beyond the supported range"));
        } else {
            scenario.basis_order = order as u32;
        }
    }
    if let Some(name) = check.string("basis", table, "family") {
        match name {
            "even" => scenario.family = ParityFamily::Even,
            "odd" => scenario.family = ParityFamily::Odd,
            "all" => scenario.family = ParityFamily::All,
            other => check.push(format!(
                "[basis] family must be \"even\", \"odd\" or \"all\", got {other:?}"
            )),
        }
    }
    let pixels = check.usize("basis", table, "grid_pixels");
    let pitch = check.positive("basis", table, "grid_pitch_um").map(|v| v * 1e-6);
    if pixels.is_some() || pitch.is_some() {
        let pixels = pixels.unwrap_or(scenario.grid.width);
        let pitch = pitch.unwrap_or(scenario.grid.pitch);
        match GridSpec::square(pixels, pitch) {
            Ok(spec) => scenario.grid = spec,
            Err(e) => check.push(format!("[basis] {e}")),
        }
    }
}

fn read_mask(check: &mut Checker, root: &Table, scenario: &mut Scenario) {
    const KNOWN: &[&str] = &["builtin", "file", "graphene_convention"];
    let Some(table) = check.block(root, "mask", KNOWN) else {
        return;
    };
    let builtin = check.string("mask", table, "builtin").map(str::to_owned);
    let file = check.string("mask", table, "file").map(str::to_owned);
    if builtin.is_some() && file.is_some() {
        check.push("[mask] builtin and file are mutually exclusive");
        return;
    }
    let convention = match check.string("mask", table, "graphene_convention") {
        None => None,
        Some(name) => match GrapheneConvention::parse(name) {
            Some(c) => Some(c),
            None => {
                check.push(format!(
                    "[mask] graphene_convention must be \"per-pass\" or \"per-round-trip\", \
                     got {name:?}"
                ));
                None
            }
        },
    };
    if let Some(name) = builtin {
        if name == "leads-device" {
            scenario.mask =
                MaskSource::LeadsDevice(convention.unwrap_or(GrapheneConvention::PerPass));
        } else {
            check.push(format!("[mask] unknown builtin {name:?}; known: \"leads-device\""));
        }
    } else if let Some(raw) = file {
        if convention.is_some() {
            check.push("[mask] graphene_convention only applies to the builtin device");
        }
        if let Some(path) = check.file("mask", "file", &raw) {
            scenario.mask = MaskSource::File(path);
        }
    } else if convention.is_some() {
        check.push("[mask] graphene_convention given without builtin = \"leads-device\"");
    }
}

fn read_pump(check: &mut Checker, root: &Table, scenario: &mut Scenario) {
    const KNOWN: &[&str] = &["kind", "x_um", "y_um", "file"];
    let Some(table) = check.block(root, "pump", KNOWN) else {
        return;
    };
    let kind = check.string("pump", table, "kind").unwrap_or("tem00").to_owned();
    let x = check.f64("pump", table, "x_um").map(|v| v * 1e-6);
    let y = check.f64("pump", table, "y_um").map(|v| v * 1e-6);
    let file = check.string("pump", table, "file").map(str::to_owned);
    match kind.as_str() {
        "tem00" => {
            if x.is_some() || y.is_some() || file.is_some() {
                check.push("[pump] tem00 takes no position or file");
            }
            scenario.pump = PumpSpec::Tem00;
        }
        "point" => {
            if file.is_some() {
                check.push("[pump] point pump takes no file");
            }
            scenario.pump = PumpSpec::Point {
                x: x.unwrap_or(0.0),
                y: y.unwrap_or(0.0),
            };
        }
        "file" => match file {
            Some(raw) => {
                if let Some(path) = check.file("pump", "file", &raw) {
                    scenario.pump = PumpSpec::File(path);
                }
            }
            None => check.push("[pump] kind = \"file\" needs a file key"),
        },
        other => check.push(format!(
            "[pump] kind must be \"tem00\", \"point\" or \"file\", got {other:?}"
        )),
    }
}

fn read_analysis(check: &mut Checker, root: &Table, scenario: &mut Scenario) {
    const KNOWN: &[&str] = &[
        "span_ghz",
        "bins",
        "band_lo_hz",
        "band_hi_hz",
        "psd_segment",
        "psd_overlap",
        "window",
        "length_ratios",
    ];
    let Some(table) = check.block(root, "analysis", KNOWN) else {
        return;
    };
    if let Some(v) = check.positive("analysis", table, "span_ghz") {
        scenario.analysis.span = v * 1e9;
    }
    if let Some(v) = check.usize("analysis", table, "bins") {
        if v < 16 {
            check.push(format!("[analysis] bins {v} too few; need at least 16"));
        } else {
            scenario.analysis.bins = v;
        }
    }
    let lo = check.positive("analysis", table, "band_lo_hz");
    let hi = check.positive("analysis", table, "band_hi_hz");
    scenario.analysis.band = (
        lo.unwrap_or(scenario.analysis.band.0),
        hi.unwrap_or(scenario.analysis.band.1),
    );
    if let Some(v) = check.usize("analysis", table, "psd_segment") {
        scenario.analysis.psd_segment = v;
    }
    if let Some(v) = check.usize("analysis", table, "psd_overlap") {
        scenario.analysis.psd_overlap = v;
    }
    if let Some(name) = check.string("analysis", table, "window") {
        match name {
            "hann" => scenario.analysis.window = WindowKind::Hann,
            "rectangular" => scenario.analysis.window = WindowKind::Rectangular,
            other => check.push(format!(
                "[analysis] window must be \"hann\" or \"rectangular\", got {other:?}"
            )),
        }
    }
    if let Some(value) = table.get("length_ratios") {
        match value.as_array() {
            Some(items) => {
                let mut ratios = Vec::new();
                for item in items {
                    match item {
                        Value::Float(v) if *v > 0.0 => ratios.push(*v),
                        Value::Integer(v) if *v > 0 => ratios.push(*v as f64),
                        other => check.push(format!(
                            "[analysis] length_ratios entries must be positive numbers, got {other}"
                        )),
                    }
                }
                if !ratios.is_empty() {
                    scenario.analysis.length_ratios = ratios;
                }
            }
            None => check.push("[analysis] length_ratios must be an array"),
        }
    }
}

fn read_noise(check: &mut Checker, root: &Table, scenario: &mut Scenario) {
    const KNOWN: &[&str] = &[
        "kind",
        "rate_hz",
        "samples",
        "target_band_rms_pm",
        "corner_hz",
        "sigma_v",
        "file",
    ];
    let Some(table) = check.block(root, "noise", KNOWN) else {
        return;
    };
    let kind = check.string("noise", table, "kind").unwrap_or("shaped").to_owned();
    let rate = check.positive("noise", table, "rate_hz");
    let samples = check.usize("noise", table, "samples");
    match kind.as_str() {
        "shaped" => {
            let mut rate_v = 2.4e5;
            let mut samples_v = 1usize << 19;
            let mut target = 110.0e-12;
            let mut corner = 1000.0;
            if let NoiseSource::Shaped {
                rate: r,
                samples: s,
                target_band_rms: t,
                corner: c,
            } = scenario.noise
            {
                rate_v = r;
                samples_v = s;
                target = t;
                corner = c;
            }
            if let Some(v) = rate {
                rate_v = v;
            }
            if let Some(v) = samples {
                samples_v = v;
            }
            if let Some(v) = check.positive("noise", table, "target_band_rms_pm") {
                target = v * 1e-12;
            }
            if let Some(v) = check.positive("noise", table, "corner_hz") {
                corner = v;
            }
            scenario.noise = NoiseSource::Shaped {
                rate: rate_v,
                samples: samples_v,
                target_band_rms: target,
                corner,
            };
        }
        "white" => {
            let sigma = check.positive("noise", table, "sigma_v").unwrap_or(1.0);
            scenario.noise = NoiseSource::White {
                rate: rate.unwrap_or(1.0e6),
                samples: samples.unwrap_or(1 << 18),
                sigma,
            };
        }
        "file" => match check.string("noise", table, "file") {
            Some(raw) => {
                let raw = raw.to_owned();
                if let Some(path) = check.file("noise", "file", &raw) {
                    scenario.noise = NoiseSource::File(path);
                }
            }
            None => check.push("[noise] kind = \"file\" needs a file key"),
        },
        other => check.push(format!(
            "[noise] kind must be \"shaped\", \"white\" or \"file\", got {other:?}"
        )),
    }
}

fn read_lock(check: &mut Checker, root: &Table, scenario: &mut Scenario) {
    const KNOWN: &[&str] = &["slope_v_per_hz", "bare_rms_mhz"];
    let Some(table) = check.block(root, "lock", KNOWN) else {
        return;
    };
    if let Some(v) = check.positive("lock", table, "slope_v_per_hz") {
        scenario.lock.slope = v;
    }
    if let Some(v) = check.f64("lock", table, "bare_rms_mhz") {
        if v >= 0.0 {
            scenario.lock.bare_rms = v * 1e6;
        } else {
            check.push(format!("[lock] bare_rms_mhz must not be negative, got {v}"));
        }
    }
}

fn cross_checks(check: &mut Checker, scenario: &Scenario) {
    let (lo, hi) = scenario.analysis.band;
    if !(lo < hi) {
        check.push(format!("[analysis] band [{lo}, {hi}] Hz is empty"));
    }
    if scenario.analysis.psd_overlap >= scenario.analysis.psd_segment {
        check.push(format!(
            "[analysis] psd_overlap {} must be smaller than psd_segment {}",
            scenario.analysis.psd_overlap, scenario.analysis.psd_segment
        ));
    }
    match scenario.noise {
        NoiseSource::Shaped { rate, samples, .. } | NoiseSource::White { rate, samples, .. } => {
            if rate < 2.0 * hi {
                check.push(format!(
                    "[noise] rate_hz {rate} must be at least twice the band top {hi} Hz"
                ));
            }
            if samples < scenario.analysis.psd_segment {
                check.push(format!(
                    "[noise] samples {samples} shorter than one PSD segment {}",
                    scenario.analysis.psd_segment
                ));
            }
        }
        NoiseSource::File(_) => {}
    }
    match ModeBasis::new(scenario.geometry, scenario.family, scenario.basis_order) {
        Ok(basis) => {
            if let Err(e) = basis.check_pitch(&scenario.grid) {
                check.push(format!("[basis] {e}"));
            }
        }
        Err(e) => check.push(format!("[basis] {e}")),
    }
    if let PumpSpec::Point { x, y } = scenario.pump {
        let (hx, hy) = scenario.grid.half_extent();
        if x.abs() > hx || y.abs() > hy {
            check.push(format!(
                "[pump] point ({:.1}, {:.1}) um lies outside the grid extent ({:.1}, {:.1}) um",
                x * 1e6,
                y * 1e6,
                hx * 1e6,
                hy * 1e6
            ));
        }
    }
}
