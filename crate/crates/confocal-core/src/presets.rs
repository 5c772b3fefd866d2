//! Shipped calibrations: cavity presets, basis truncation orders, and
//! the leads-device mask with its probe sites.
//!
//! The cavities share one mirror set (99.7%/97.7% coatings, 10 mm radius
//! of curvature, 780 nm). They differ in the excess round-trip loss used
//! to match a measured finesse.

use crate::error::Result;
use crate::geometry::CavityGeometry;
use crate::grid::GridSpec;
use crate::mask::TransmissionMask;
use crate::solver::{amplitude_for_finesse, excess_loss_for_finesse};

pub const MIRROR_RADIUS: f64 = 10.0e-3;
pub const WAVELENGTH: f64 = 780.0e-9;
pub const REFLECTIVITY_UPPER: f64 = 0.997;
pub const REFLECTIVITY_LOWER: f64 = 0.977;

/// Finesse of the length-tunable science cavity.
pub const SCIENCE_FINESSE: f64 = 208.0;
/// Cavity length at which the science spectrum is taken (L/R = 1.125).
pub const SCIENCE_SPECTRUM_LENGTH: f64 = 11.25e-3;
/// Finesse on bare substrate in the leads-device cooldown.
pub const LEADS_SUBSTRATE_FINESSE: f64 = 181.0;
/// Finesse on the hBN-only region, which fixes the hBN crossing loss.
pub const HBN_FINESSE: f64 = 120.0;
/// Round-trip intensity transmission through the graphene/TMD stack.
pub const GRAPHENE_ROUND_TRIP_TRANSMISSION: f64 = 0.98;

/// Family truncation orders the shipped scenarios use.
pub const SCIENCE_BASIS_ORDER: u32 = 36;
pub const TEST_BASIS_ORDER: u32 = 136;
pub const LEADS_BASIS_ORDER: u32 = 60;
pub const IMAGING_BASIS_ORDER: u32 = 140;

fn confocal_with_finesse(finesse: f64) -> Result<CavityGeometry> {
    let excess = excess_loss_for_finesse(REFLECTIVITY_UPPER, REFLECTIVITY_LOWER, finesse)?;
    CavityGeometry::new(
        MIRROR_RADIUS,
        MIRROR_RADIUS,
        REFLECTIVITY_UPPER,
        REFLECTIVITY_LOWER,
        WAVELENGTH,
    )?
    .with_excess_loss(excess)
}

/// Length-tunable science cavity at its confocal point, loss calibrated
/// to finesse 208.
pub fn science_cavity() -> Result<CavityGeometry> {
    confocal_with_finesse(SCIENCE_FINESSE)
}

/// Coating-limited confocal cavity with no excess loss (finesse 239).
pub fn test_cavity() -> Result<CavityGeometry> {
    CavityGeometry::new(
        MIRROR_RADIUS,
        MIRROR_RADIUS,
        REFLECTIVITY_UPPER,
        REFLECTIVITY_LOWER,
        WAVELENGTH,
    )
}

/// Confocal cavity of the leads-device cooldown, loss calibrated to the
/// bare-substrate finesse 181.
pub fn leads_cavity() -> Result<CavityGeometry> {
    confocal_with_finesse(LEADS_SUBSTRATE_FINESSE)
}

/// Amplitude transmission of one hBN crossing, chosen so the round-trip
/// amplitude drops from the substrate value (finesse 181) to the
/// hBN-region value (finesse 120) with the mask applied twice.
pub fn hbn_crossing_amplitude() -> f64 {
    let substrate = amplitude_for_finesse(LEADS_SUBSTRATE_FINESSE).expect("fixed finesse");
    let hbn = amplitude_for_finesse(HBN_FINESSE).expect("fixed finesse");
    (hbn / substrate).sqrt()
}

/// How the ~2% graphene/TMD stack absorption is counted per mask
/// crossing. The per-pass reading loses 2% of intensity at every
/// crossing; the per-round-trip reading spreads 2% over the whole round
/// trip (four crossings of amplitude).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrapheneConvention {
    PerPass,
    PerRoundTrip,
}

impl GrapheneConvention {
    pub fn crossing_amplitude(&self) -> f64 {
        match self {
            GrapheneConvention::PerPass => GRAPHENE_ROUND_TRIP_TRANSMISSION.sqrt(),
            GrapheneConvention::PerRoundTrip => GRAPHENE_ROUND_TRIP_TRANSMISSION.powf(0.25),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GrapheneConvention::PerPass => "per-pass",
            GrapheneConvention::PerRoundTrip => "per-round-trip",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "per-pass" => Some(GrapheneConvention::PerPass),
            "per-round-trip" => Some(GrapheneConvention::PerRoundTrip),
            _ => None,
        }
    }
}

/// Device footprint in the mask plane, all in meters.
pub const HBN_HALF_WIDTH: f64 = 18.0e-6;
pub const HBN_HALF_HEIGHT: f64 = 20.0e-6;
pub const TMD_BAND_INNER: f64 = 6.0e-6;
pub const TMD_BAND_OUTER: f64 = 18.0e-6;
pub const WIRE_INNER: f64 = 0.5e-6;
pub const WIRE_OUTER: f64 = 3.5e-6;
pub const WIRE_START: f64 = 20.0e-6;

/// Grid the shipped finesse-map scenario rasters the device on.
pub fn leads_device_grid() -> GridSpec {
    GridSpec::square(512, 0.25e-6).expect("fixed grid")
}

/// The leads-device mask: an hBN slab carrying two TMD/graphene bands,
/// contacted by two opaque 3 um wires with a 1 um gap, running from the
/// slab edge to the grid edge. The layout is centrosymmetric so that the
/// parity twin of every probe site lands in the same material.
pub fn leads_device_mask(
    spec: GridSpec,
    convention: GrapheneConvention,
) -> Result<TransmissionMask> {
    let a_hbn = hbn_crossing_amplitude();
    let a_stack = a_hbn * convention.crossing_amplitude();
    let mut mask = TransmissionMask::identity(spec);
    mask.fill_rect(
        -HBN_HALF_WIDTH,
        HBN_HALF_WIDTH,
        -HBN_HALF_HEIGHT,
        HBN_HALF_HEIGHT,
        a_hbn,
        0.0,
    );
    for sign in [-1.0, 1.0] {
        let (y0, y1) = (sign * TMD_BAND_INNER, sign * TMD_BAND_OUTER);
        mask.fill_rect(
            -HBN_HALF_WIDTH,
            HBN_HALF_WIDTH,
            y0.min(y1),
            y0.max(y1),
            a_stack,
            0.0,
        );
    }
    let edge = spec.half_extent().1 + spec.pitch;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            let (x0, x1) = (sx * WIRE_INNER, sx * WIRE_OUTER);
            let (y0, y1) = (sy * WIRE_START, sy * edge);
            mask.fill_rect(x0.min(x1), x0.max(x1), y0.min(y1), y0.max(y1), 0.0, 0.0);
        }
    }
    mask.label = format!("leads-device ({})", convention.name());
    mask.validate()?;
    Ok(mask)
}

/// A named probe position on the leads device.
#[derive(Debug, Clone, Copy)]
pub struct ProbeSite {
    pub label: &'static str,
    pub x: f64,
    pub y: f64,
}

/// The four sites the finesse map reports, in canonical order.
pub fn leads_probe_sites() -> [ProbeSite; 4] {
    [
        ProbeSite { label: "substrate", x: 30.0e-6, y: 0.0 },
        ProbeSite { label: "leads-gap", x: 0.0, y: 40.0e-6 },
        ProbeSite { label: "hBN", x: 12.0e-6, y: 0.0 },
        ProbeSite { label: "TMD", x: 0.0, y: 12.0e-6 },
    ]
}
