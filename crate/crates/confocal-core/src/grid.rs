//! Pixel grids for transverse fields, masks and images.
//!
//! Grids are centered on the cavity axis: pixel (ix, iy) sits at
//! x = (ix − (w−1)/2) · pitch, y = (iy − (h−1)/2) · pitch, so every grid is
//! symmetric under r → −r regardless of parity of the pixel counts. Arrays
//! are row-major with shape (height, width), i.e. indexed [iy, ix].

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Pixel pitch (m).
    pub pitch: f64,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, pitch: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input("grid dimensions must be nonzero".into()));
        }
        if !pitch.is_finite() || pitch <= 0.0 {
            return Err(Error::Input(format!("grid pitch must be positive, got {pitch}")));
        }
        Ok(GridSpec { width, height, pitch })
    }

    pub fn square(side: usize, pitch: f64) -> Result<Self> {
        GridSpec::new(side, side, pitch)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Pixel area (m^2), the quadrature weight.
    pub fn pixel_area(&self) -> f64 {
        self.pitch * self.pitch
    }

    pub fn x_at(&self, ix: usize) -> f64 {
        (ix as f64 - (self.width as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn y_at(&self, iy: usize) -> f64 {
        (iy as f64 - (self.height as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.width).map(|i| self.x_at(i)).collect()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        (0..self.height).map(|i| self.y_at(i)).collect()
    }

    /// Half-extent along x and y (m), measured to the outermost pixel center.
    pub fn half_extent(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) / 2.0 * self.pitch,
            (self.height as f64 - 1.0) / 2.0 * self.pitch,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (hx, hy) = self.half_extent();
        x.abs() <= hx + 0.5 * self.pitch && y.abs() <= hy + 0.5 * self.pitch
    }

    /// Pixel centers coincide where the grids overlap: same pitch and same
    /// parity of the pixel counts along each axis.
    pub fn commensurate_with(&self, other: &GridSpec) -> bool {
        let rel = (self.pitch - other.pitch).abs() / self.pitch.max(other.pitch);
        rel < 1e-12 && self.width % 2 == other.width % 2 && self.height % 2 == other.height % 2
    }
}

/// A complex transverse field sampled on a grid.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub spec: GridSpec,
    /// Shape (height, width), indexed [iy, ix].
    pub values: Array2<Complex64>,
}

impl FieldGrid {
    pub fn new(spec: GridSpec, values: Array2<Complex64>) -> Result<Self> {
        if values.dim() != (spec.height, spec.width) {
            return Err(Error::GridMismatch(format!(
                "value array {:?} does not match grid {}x{}",
                values.dim(),
                spec.height,
                spec.width
            )));
        }
        Ok(FieldGrid { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        FieldGrid {
            values: Array2::zeros((spec.height, spec.width)),
            spec,
        }
    }

    /// Total power: integral of |E|^2 over the grid.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.spec.pixel_area()
    }

    /// Quadrature inner product <self|other> = integral conj(self) * other.
    pub fn inner(&self, other: &FieldGrid) -> Result<Complex64> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch(
                "inner product requires identical grids".into(),
            ));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            acc += a.conj() * b;
        }
        Ok(acc * self.spec.pixel_area())
    }

    /// Scale so that power() == 1. Errors on an identically zero field.
    pub fn normalized(mut self) -> Result<Self> {
        let p = self.power();
        if p <= 0.0 || !p.is_finite() {
            return Err(Error::Input("cannot normalize a zero or non-finite field".into()));
        }
        let s = 1.0 / p.sqrt();
        self.values.mapv_inplace(|v| v * s);
        Ok(self)
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm_sqr())
    }

    /// Intensity centroid (m).
    pub fn centroid(&self) -> (f64, f64) {
        let mut total = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for iy in 0..self.spec.height {
            let y = self.spec.y_at(iy);
            for ix in 0..self.spec.width {
                let w = self.values[(iy, ix)].norm_sqr();
                total += w;
                cx += w * self.spec.x_at(ix);
                cy += w * y;
            }
        }
        if total == 0.0 {
            (0.0, 0.0)
        } else {
            (cx / total, cy / total)
        }
    }

    /// Central second moments of the intensity distribution: (mxx, myy, mxy).
    pub fn central_second_moments(&self) -> (f64, f64, f64) {
        let (cx, cy) = self.centroid();
        let mut total = 0.0;
        let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
        for iy in 0..self.spec.height {
            let dy = self.spec.y_at(iy) - cy;
            for ix in 0..self.spec.width {
                let dx = self.spec.x_at(ix) - cx;
                let w = self.values[(iy, ix)].norm_sqr();
                total += w;
                mxx += w * dx * dx;
                myy += w * dy * dy;
                mxy += w * dx * dy;
            }
        }
        if total == 0.0 {
            (0.0, 0.0, 0.0)
        } else {
            (mxx / total, myy / total, mxy / total)
        }
    }

    /// Fraction of total power in the outermost `ring` pixel rings.
    pub fn edge_power_fraction(&self, ring: usize) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let (h, w) = (self.spec.height, self.spec.width);
        let mut edge = 0.0;
        for iy in 0..h {
            for ix in 0..w {
                let on_edge =
                    iy < ring || ix < ring || iy + ring >= h || ix + ring >= w;
                if on_edge {
                    edge += self.values[(iy, ix)].norm_sqr();
                }
            }
        }
        edge / total
    }
}
