//! Thin complex-transmittance masks at the cavity midplane.
//!
//! A mask stores per-pixel field-amplitude transmittance in [0, 1] and a
//! phase in (-pi, pi]. Outside its grid the mask is transparent (t = 1), so
//! a mask only ever describes the deviation from an empty cavity.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone)]
pub struct TransmissionMask {
    pub spec: GridSpec,
    /// Field-amplitude transmittance per pixel, in [0, 1].
    pub amplitude: Array2<f64>,
    /// Phase per pixel in radians, in (-pi, pi].
    pub phase: Array2<f64>,
    pub label: String,
}

/// Wrap a phase into (-pi, pi].
pub fn wrap_phase(phi: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut p = phi % tau;
    if p <= -std::f64::consts::PI {
        p += tau;
    } else if p > std::f64::consts::PI {
        p -= tau;
    }
    p
}

impl TransmissionMask {
    pub fn new(
        spec: GridSpec,
        amplitude: Array2<f64>,
        phase: Array2<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let mask = TransmissionMask {
            spec,
            amplitude,
            phase,
            label: label.into(),
        };
        mask.validate()?;
        Ok(mask)
    }

    /// Fully transparent mask: the identity element for overlap building.
    pub fn identity(spec: GridSpec) -> Self {
        TransmissionMask {
            spec,
            amplitude: Array2::ones((spec.height, spec.width)),
            phase: Array2::zeros((spec.height, spec.width)),
            label: "identity".into(),
        }
    }

    pub fn uniform(spec: GridSpec, amplitude: f64, phase: f64) -> Result<Self> {
        let mut mask = TransmissionMask::identity(spec);
        mask.amplitude.fill(amplitude);
        mask.phase.fill(wrap_phase(phase));
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitude.dim() != (self.spec.height, self.spec.width)
            || self.phase.dim() != (self.spec.height, self.spec.width)
        {
            return Err(Error::GridMismatch(format!(
                "mask arrays {:?}/{:?} do not match grid {}x{}",
                self.amplitude.dim(),
                self.phase.dim(),
                self.spec.height,
                self.spec.width
            )));
        }
        for &a in self.amplitude.iter() {
            if !(0.0..=1.0).contains(&a) || !a.is_finite() {
                return Err(Error::MaskRange(format!(
                    "amplitude {a} outside [0, 1]"
                )));
            }
        }
        for &p in self.phase.iter() {
            if !p.is_finite() || p <= -std::f64::consts::PI || p > std::f64::consts::PI {
                return Err(Error::MaskRange(format!(
                    "phase {p} outside (-pi, pi]"
                )));
            }
        }
        Ok(())
    }

    /// Complex transmittance of a pixel.
    pub fn value(&self, iy: usize, ix: usize) -> Complex64 {
        Complex64::from_polar(self.amplitude[(iy, ix)], self.phase[(iy, ix)])
    }

    /// Bilinear sample of the complex transmittance; transparent outside
    /// the grid extent.
    pub fn sample(&self, x: f64, y: f64) -> Complex64 {
        let fx = x / self.spec.pitch + (self.spec.width as f64 - 1.0) / 2.0;
        let fy = y / self.spec.pitch + (self.spec.height as f64 - 1.0) / 2.0;
        if fx < 0.0 || fy < 0.0 || fx > self.spec.width as f64 - 1.0 || fy > self.spec.height as f64 - 1.0
        {
            return Complex64::new(1.0, 0.0);
        }
        let ix = (fx.floor() as usize).min(self.spec.width - 2);
        let iy = (fy.floor() as usize).min(self.spec.height - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = self.value(iy, ix);
        let v01 = self.value(iy, ix + 1);
        let v10 = self.value(iy + 1, ix);
        let v11 = self.value(iy + 1, ix + 1);
        v00 * (1.0 - tx) * (1.0 - ty) + v01 * tx * (1.0 - ty) + v10 * (1.0 - tx) * ty
            + v11 * tx * ty
    }

    fn region_apply(
        &mut self,
        mut inside: impl FnMut(f64, f64) -> bool,
        mut apply: impl FnMut(&mut f64, &mut f64),
    ) {
        for iy in 0..self.spec.height {
            let y = self.spec.y_at(iy);
            for ix in 0..self.spec.width {
                if inside(self.spec.x_at(ix), y) {
                    let (mut a, mut p) = (self.amplitude[(iy, ix)], self.phase[(iy, ix)]);
                    apply(&mut a, &mut p);
                    self.amplitude[(iy, ix)] = a;
                    self.phase[(iy, ix)] = p;
                }
            }
        }
    }

    /// Overwrite amplitude and phase where the pixel center falls in
    /// [x0, x1] x [y0, y1] (m).
    pub fn fill_rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, amplitude: f64, phase: f64) {
        let phase = wrap_phase(phase);
        self.region_apply(
            |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1,
            |a, p| {
                *a = amplitude;
                *p = phase;
            },
        );
    }

    /// Overwrite amplitude and phase inside a disk (m).
    pub fn fill_disk(&mut self, cx: f64, cy: f64, radius: f64, amplitude: f64, phase: f64) {
        let phase = wrap_phase(phase);
        let r2 = radius * radius;
        self.region_apply(
            |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r2,
            |a, p| {
                *a = amplitude;
                *p = phase;
            },
        );
    }

    /// Multiply the amplitude by `factor` where the pixel center falls in
    /// the rectangle: stacking an absorber on whatever is already there.
    pub fn attenuate_rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, factor: f64) {
        self.region_apply(
            |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1,
            |a, _| *a *= factor,
        );
    }

    /// Multiply the amplitude by a smooth Gaussian absorber
    /// 1 - depth * exp(-2 |r - r0|^2 / radius^2), with `radius` the 1/e^2
    /// radius of the dip profile.
    pub fn gaussian_dip(&mut self, cx: f64, cy: f64, depth: f64, radius: f64) {
        let r2 = radius * radius;
        for iy in 0..self.spec.height {
            let dy = self.spec.y_at(iy) - cy;
            for ix in 0..self.spec.width {
                let dx = self.spec.x_at(ix) - cx;
                let dip = 1.0 - depth * (-2.0 * (dx * dx + dy * dy) / r2).exp();
                self.amplitude[(iy, ix)] *= dip;
            }
        }
    }

    /// Largest deviation |t(r) - t(-r)| over the grid.
    pub fn centrosymmetry_defect(&self) -> f64 {
        let (h, w) = (self.spec.height, self.spec.width);
        let mut worst = 0.0f64;
        for iy in 0..h {
            for ix in 0..w {
                let d = (self.value(iy, ix) - self.value(h - 1 - iy, w - 1 - ix)).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Pixels with t != 1, as (iy, ix, 1 - t): the only pixels that
    /// contribute to overlap deviations from the identity.
    pub fn defect_pixels(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out = Vec::new();
        for iy in 0..self.spec.height {
            for ix in 0..self.spec.width {
                let t = self.value(iy, ix);
                if t != Complex64::new(1.0, 0.0) {
                    out.push((iy, ix, Complex64::new(1.0, 0.0) - t));
                }
            }
        }
        out
    }
}
