//! Two-mirror symmetric cavity geometry and the analytic Hermite-Gauss
//! frequency ladder.
//!
//! All lengths are stored in metres and frequencies in Hz. The stability
//! parameter g = 1 − L/R controls everything: the fundamental waist, the
//! transverse mode spacing, and where the transverse families collapse into
//! degenerate supermode families (g = 0, the confocal point).

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reject geometries closer to the stability boundary than this in |g|.
/// The waist formula has a (1 − g)^(-1/2) divergence at the planar limit;
/// erroring out here beats silently returning astronomically large waists.
const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityGeometry {
    /// Radius of curvature shared by both mirrors (m).
    pub mirror_radius: f64,
    /// Mirror separation (m).
    pub length: f64,
    /// Intensity reflectivity of the upper (input) mirror.
    pub reflectivity_upper: f64,
    /// Intensity reflectivity of the lower (output) mirror.
    pub reflectivity_lower: f64,
    /// Probe wavelength (m).
    pub wavelength: f64,
    /// Calibrated excess intensity loss per round trip, on top of the
    /// mirror coatings (substrate scatter, clipping, ...).
    pub excess_loss: f64,
}

impl CavityGeometry {
    pub fn new(
        mirror_radius: f64,
        length: f64,
        reflectivity_upper: f64,
        reflectivity_lower: f64,
        wavelength: f64,
    ) -> Result<Self> {
        let geom = CavityGeometry {
            mirror_radius,
            length,
            reflectivity_upper,
            reflectivity_lower,
            wavelength,
            excess_loss: 0.0,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Same geometry with a calibrated excess round-trip intensity loss.
    pub fn with_excess_loss(mut self, excess_loss: f64) -> Result<Self> {
        self.excess_loss = excess_loss;
        self.validate()?;
        Ok(self)
    }

    /// Same mirrors and wavelength at a different mirror separation.
    pub fn with_length(mut self, length: f64) -> Result<Self> {
        self.length = length;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mirror_radius", self.mirror_radius),
            ("length", self.length),
            ("wavelength", self.wavelength),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, r) in [
            ("reflectivity_upper", self.reflectivity_upper),
            ("reflectivity_lower", self.reflectivity_lower),
        ] {
            if !r.is_finite() || r <= 0.0 || r >= 1.0 {
                return Err(Error::Geometry(format!(
                    "{name} must lie strictly inside (0, 1), got {r}"
                )));
            }
        }
        if !self.excess_loss.is_finite() || self.excess_loss < 0.0 || self.excess_loss >= 1.0 {
            return Err(Error::Geometry(format!(
                "excess_loss must lie in [0, 1), got {}",
                self.excess_loss
            )));
        }
        let g = self.stability_g();
        if g * g >= 1.0 {
            return Err(Error::Unstable(format!(
                "g = {g:.6} outside (-1, 1); require 0 < L < 2R (L = {} m, R = {} m)",
                self.length, self.mirror_radius
            )));
        }
        if 1.0 - g.abs() < STABILITY_MARGIN {
            return Err(Error::Unstable(format!(
                "g = {g:.12} within {STABILITY_MARGIN:.0e} of the stability boundary; \
                 mode geometry diverges"
            )));
        }
        Ok(())
    }

    /// Stability parameter g = 1 − L/R (symmetric cavity, both mirrors).
    pub fn stability_g(&self) -> f64 {
        1.0 - self.length / self.mirror_radius
    }

    /// Free spectral range c/2L (Hz).
    pub fn fsr(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.length)
    }

    /// Round-trip time 2L/c (s).
    pub fn round_trip_time(&self) -> f64 {
        2.0 * self.length / SPEED_OF_LIGHT
    }

    /// TEM00 waist at the cavity midplane (m):
    /// w0^2 = (L lambda / 2 pi) sqrt((1+g)/(1-g)).
    pub fn fundamental_waist(&self) -> f64 {
        let g = self.stability_g();
        let w0_sq =
            self.length * self.wavelength / (2.0 * std::f64::consts::PI) * ((1.0 + g) / (1.0 - g)).sqrt();
        w0_sq.sqrt()
    }

    /// Round-trip Gouy factor arccos(g)/pi: the transverse mode spacing in
    /// units of the FSR. Exactly 0.5 in f64 at confocality.
    pub fn arccos_g_over_pi(&self) -> f64 {
        self.stability_g().acos() / std::f64::consts::PI
    }

    /// Transverse mode spacing (FSR/pi) arccos(g) (Hz), with the sign of g
    /// kept: past confocal (g < 0) the spacing exceeds FSR/2.
    pub fn transverse_mode_spacing(&self) -> f64 {
        self.fsr() * self.arccos_g_over_pi()
    }

    /// Resonance frequency of HG mode (q, n, m):
    /// nu = FSR (q + (n+m+1) arccos(g)/pi).
    ///
    /// At g = 0 the factor arccos(0)/pi is exactly 0.5 in f64, so the
    /// even- and odd-family degeneracies hold to the last bit.
    pub fn mode_frequency(&self, q: i64, n: u32, m: u32) -> Result<f64> {
        if q < 1 {
            return Err(Error::Input(format!("longitudinal index q must be >= 1, got {q}")));
        }
        Ok(self.fsr() * (q as f64 + f64::from(n + m + 1) * self.arccos_g_over_pi()))
    }

    /// Longitudinal index of the resonance nearest the probe laser.
    pub fn reference_q(&self) -> i64 {
        (SPEED_OF_LIGHT / self.wavelength / self.fsr()).round() as i64
    }

    /// Round-trip field amplitude of the bare cavity (no mask):
    /// sqrt(R1 R2 (1 − excess_loss)).
    pub fn bare_round_trip_amplitude(&self) -> f64 {
        (self.reflectivity_upper * self.reflectivity_lower * (1.0 - self.excess_loss)).sqrt()
    }

    /// Coating-limited round-trip amplitude sqrt(R1 R2), ignoring excess loss.
    pub fn coating_round_trip_amplitude(&self) -> f64 {
        (self.reflectivity_upper * self.reflectivity_lower).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn science_mirrors(length: f64) -> CavityGeometry {
        CavityGeometry::new(10.0e-3, length, 0.997, 0.977, 780.0e-9).unwrap()
    }

    #[test]
    fn fsr_examples() {
        assert!((science_mirrors(10.0e-3).fsr() - 14.9896229e9).abs() < 1.0);
        assert!((science_mirrors(11.25e-3).fsr() - 13.3241092e9).abs() < 1e3);
        // FSR depends on length only; use longer mirrors to stay stable
        let long = CavityGeometry::new(20.0e-3, 20.0e-3, 0.997, 0.977, 780.0e-9).unwrap();
        assert!((long.fsr() - 7.49481145e9).abs() < 1.0);
    }

    #[test]
    fn confocal_waist_is_35_2_um() {
        let w0 = science_mirrors(10.0e-3).fundamental_waist();
        assert!((w0 - 35.2336e-6).abs() < 0.01e-6, "w0 = {} m", w0);
    }

    /// Independent route: propagate the complex beam parameter through a
    /// half round trip (midplane -> mirror -> midplane) and solve the ABCD
    /// self-consistency equation for the waist. The symmetric mode must
    /// reproduce itself over the half trip; the full trip degenerates to -I
    /// at exactly confocal and cannot pin the waist there.
    fn abcd_waist(length: f64, radius: f64, wavelength: f64) -> f64 {
        // ray matrices: free space d, curved mirror focal length R/2
        let mul = |a: [f64; 4], b: [f64; 4]| {
            [
                a[0] * b[0] + a[1] * b[2],
                a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2],
                a[2] * b[1] + a[3] * b[3],
            ]
        };
        let free = |d: f64| [1.0, d, 0.0, 1.0];
        let mirror = [1.0, 0.0, -2.0 / radius, 1.0];
        let half = length / 2.0;
        let m = mul(free(half), mul(mirror, free(half)));
        let (a, b, c, d) = (m[0], m[1], m[2], m[3]);
        // q = (aq + b)/(cq + d), q purely imaginary at the waist plane:
        // c q^2 + (d - a) q - b = 0
        let disc = (d - a) * (d - a) + 4.0 * b * c;
        assert!(disc < 0.0, "cavity not stable in ABCD check");
        let q_im = (-disc).sqrt() / (2.0 * c.abs());
        (wavelength * q_im / std::f64::consts::PI).sqrt()
    }

    #[test]
    fn waist_matches_abcd_route_off_confocal() {
        for length in [8.0e-3, 10.0e-3, 11.25e-3, 15.0e-3] {
            let geom = science_mirrors(length);
            let direct = geom.fundamental_waist();
            let oracle = abcd_waist(length, 10.0e-3, 780.0e-9);
            assert!(
                (direct - oracle).abs() / oracle < 1e-12,
                "L = {length}: {direct} vs {oracle}"
            );
        }
    }

    #[test]
    fn transverse_spacing_past_confocal() {
        let geom = science_mirrors(11.25e-3);
        let spacing = geom.transverse_mode_spacing();
        assert!((spacing - 7.1934e9).abs() < 5e6, "spacing = {spacing}");
        // past confocal the spacing exceeds FSR/2
        assert!(spacing > geom.fsr() / 2.0);
    }

    #[test]
    fn confocal_families_degenerate_to_the_bit() {
        let geom = science_mirrors(10.0e-3);
        let q = 25641;
        let nu00 = geom.mode_frequency(q, 0, 0).unwrap();
        // (q, n+m=0) coincides exactly with (q-1, n+m=2), (q-2, n+m=4), ...
        for k in 1..6i64 {
            let s = 2 * k as u32;
            let nu = geom.mode_frequency(q - k, s, 0).unwrap();
            assert_eq!(nu, nu00, "even-family member q-{k}, s={s} not bit-identical");
        }
    }

    #[test]
    fn mode_frequency_rejects_unphysical_q() {
        let geom = science_mirrors(10.0e-3);
        assert!(matches!(geom.mode_frequency(0, 0, 0), Err(Error::Input(_))));
    }

    #[test]
    fn near_planar_geometry_rejected_before_divergence() {
        // L -> 0 drives g -> 1 where the waist diverges
        let err = CavityGeometry::new(10.0e-3, 10.0e-3 * 1e-12, 0.997, 0.977, 780.0e-9);
        assert!(matches!(err, Err(Error::Unstable(_))));
        // L >= 2R is outside the stability region altogether
        let err = CavityGeometry::new(10.0e-3, 20.0e-3, 0.997, 0.977, 780.0e-9);
        assert!(matches!(err, Err(Error::Unstable(_))));
    }

    #[test]
    fn monotone_in_length_where_stable() {
        let mut last_fsr = f64::INFINITY;
        let mut last_w0 = 0.0;
        for i in 1..=19 {
            let geom = science_mirrors(i as f64 * 1.0e-3 / 2.0); // 0.5 .. 9.5 mm, g in (0,1)
            assert!(geom.fsr() < last_fsr);
            assert!(geom.fundamental_waist() > last_w0);
            last_fsr = geom.fsr();
            last_w0 = geom.fundamental_waist();
        }
    }

    #[test]
    fn reference_q_ties_fsr_to_laser_frequency() {
        let geom = science_mirrors(10.0e-3);
        let q = geom.reference_q();
        assert_eq!(q, 25641);
        let nu_laser = SPEED_OF_LIGHT / geom.wavelength;
        assert!((q as f64 * geom.fsr() - nu_laser).abs() / nu_laser < 1e-4);
    }
}
