//! Simulation and analysis library for length-tunable multimode optical
//! cavities with intracavity masks.
//!
//! The crate covers the full measurement chain of a scanning-mirror
//! confocal cavity: analytic mode ladders and Hermite-Gauss bases, masked
//! round-trip operators and their supermodes, finesse extraction and
//! spatial finesse maps, incoherent imaging through the cavity, and
//! Pound-Drever-Hall error-signal metrology of mirror displacement.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod imaging;
pub mod io;
pub mod lock;
pub mod presets;
pub mod fit;
pub mod mask;
pub mod modes;
pub mod scenario;
pub mod solver;
pub mod spectrum;

pub use error::{Error, Result};
pub use geometry::{CavityGeometry, SPEED_OF_LIGHT};
pub use grid::{FieldGrid, GridSpec};
pub use imaging::{image_through_cavity, resolution_and_fov, ImageGrid, ImagingKernel};
pub use lock::{
    band_rms, calibrate_slope, compute_psd, displacement_from_error, fit_vibration_response,
    pdh_error_signal, piezo_gamma, sample_displacement, synthesize_pdh_sweep,
    synthesize_shaped_noise, synthesize_white_noise, LockCalibration, NoiseTrace, PdhModel,
    PsdSpec, SampleDisplacement, VibrationFit, WindowKind,
};
pub use mask::TransmissionMask;
pub use modes::{ModeBasis, ParityFamily};
pub use presets::GrapheneConvention;
pub use scenario::{
    builtin_scenario, parse_scenario, AnalysisSpec, LockSpec, MaskSource, NoiseSource, PumpSpec,
    Scenario, BUILTIN_SCENARIOS,
};
pub use solver::{
    dominant_mode, excess_loss_for_finesse, finesse_from_amplitude, finesse_map,
    localized_supermode, mask_overlap_matrix, optimize_pump_coupling, round_trip_operator,
    supermode_project, FinesseReport, OperatorSpectrum, RoundTripOperator, Supermode,
};
pub use spectrum::{
    degeneracy_collapse_scan, finesse_from_spectrum, fit_lorentzian, transmission_spectrum,
    CollapsePoint, PeakAnnotation, PeakFit, Spectrum, SpectrumMethod,
};
