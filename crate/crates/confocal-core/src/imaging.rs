//! In-situ imaging through the degenerate mode family: point-spread
//! kernel, incoherent image formation with its parity doubling, and the
//! resolution / field-of-view figures of a family truncated at order N.
//!
//! The image model is incoherent: broad-spectrum illumination kills
//! interference between transverse modes, so intensities add. Each sample
//! point r' maps to |K(r, r')|^2 with K the family kernel, which carries a
//! twin image at -r' because every family mode has definite parity.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{FieldGrid, GridSpec};
use crate::mask::TransmissionMask;
use crate::modes::{ModeBasis, ParityFamily};

/// Largest family for which full images are assembled.
pub const IMAGE_MODE_LIMIT: usize = 2000;

/// A non-negative intensity map on a grid.
#[derive(Debug, Clone)]
pub struct ImageGrid {
    pub spec: GridSpec,
    /// Intensity per pixel, indexed [iy, ix].
    pub intensity: Array2<f64>,
}

impl ImageGrid {
    pub fn new(spec: GridSpec, intensity: Array2<f64>) -> Result<Self> {
        if intensity.dim() != (spec.height, spec.width) {
            return Err(Error::GridMismatch(format!(
                "intensity shape {:?} does not match grid {}x{}",
                intensity.dim(),
                spec.height,
                spec.width
            )));
        }
        if let Some(v) = intensity.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Input(format!("negative or NaN intensity {v}")));
        }
        Ok(ImageGrid { spec, intensity })
    }

    /// Constant illumination level over the whole grid.
    pub fn uniform(spec: GridSpec, level: f64) -> Result<Self> {
        if !(level >= 0.0) {
            return Err(Error::Input(format!("illumination level {level} < 0")));
        }
        Ok(ImageGrid {
            spec,
            intensity: Array2::from_elem((spec.height, spec.width), level),
        })
    }

    /// Integrated intensity times pixel area.
    pub fn total_energy(&self) -> f64 {
        self.intensity.sum() * self.spec.pixel_area()
    }

    /// Intensity at the pixel nearest (x, y).
    pub fn value_at(&self, x: f64, y: f64) -> Result<f64> {
        if !self.spec.contains(x, y) {
            return Err(Error::Input(format!(
                "({:.2e}, {:.2e}) m outside the image extent",
                x, y
            )));
        }
        let ix = (x / self.spec.pitch + (self.spec.width as f64 - 1.0) / 2.0).round() as usize;
        let iy = (y / self.spec.pitch + (self.spec.height as f64 - 1.0) / 2.0).round() as usize;
        Ok(self.intensity[(iy, ix)])
    }
}

/// The family point-spread kernel K(r, r') = sum_k u_k(r) u_k(r'),
/// applied without materializing the full two-point table.
#[derive(Debug, Clone)]
pub struct ImagingKernel {
    pub basis: ModeBasis,
}

impl ImagingKernel {
    /// The kernel of a single parity family. Mixed-parity bases are
    /// rejected: their kernel has no definite twin-image structure.
    pub fn new(basis: ModeBasis) -> Result<Self> {
        if basis.family == ParityFamily::All {
            return Err(Error::Input(
                "imaging kernel needs a single parity family (even or odd)".into(),
            ));
        }
        Ok(ImagingKernel { basis })
    }

    /// Raw kernel weights of a point source: c_k = u_k(r0).
    fn point_weights(&self, x0: f64, y0: f64) -> Vec<f64> {
        let px = self.basis.profile_table(&[x0]);
        let py = self.basis.profile_table(&[y0]);
        self.basis
            .indices
            .iter()
            .map(|&(n, m)| px[(n as usize, 0)] * py[(m as usize, 0)])
            .collect()
    }

    /// The field K(., r0) a point source at r0 produces, sampled on `spec`.
    pub fn point_response(&self, x0: f64, y0: f64, spec: &GridSpec) -> Result<FieldGrid> {
        let coeffs: Vec<Complex64> = self
            .point_weights(x0, y0)
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
        self.basis.synthesize(&coeffs, spec)
    }

    /// Total energy of the point response, integral |K(r, r0)|^2 dr, which
    /// collapses to sum_k u_k(r0)^2 by orthonormality.
    pub fn response_energy(&self, x0: f64, y0: f64) -> f64 {
        self.point_weights(x0, y0).iter().map(|v| v * v).sum()
    }
}

/// Mode overlap matrix W_kl = sum_r u_k(r) u_l(r) weight(r) dA over the
/// grid, for a non-negative real weight map.
pub(crate) fn weighted_mode_overlap(
    basis: &ModeBasis,
    spec: &GridSpec,
    weights: &Array2<f64>,
) -> Result<Array2<f64>> {
    basis.check_pitch(spec)?;
    if weights.dim() != (spec.height, spec.width) {
        return Err(Error::GridMismatch(format!(
            "weight shape {:?} does not match grid {}x{}",
            weights.dim(),
            spec.height,
            spec.width
        )));
    }
    let orders = basis.max_order as usize + 1;
    let k_count = basis.len();
    let px = basis.profile_table(&spec.x_coords());
    let py = basis.profile_table(&spec.y_coords());
    let area = spec.pixel_area();

    // per column, G[m, m'] = sum_iy w phi_m(y) phi_m'(y) dA
    let columns: Vec<Array2<f64>> = (0..spec.width)
        .into_par_iter()
        .map(|ix| {
            let mut g = Array2::<f64>::zeros((orders, orders));
            for m in 0..orders {
                for mp in m..orders {
                    let mut acc = 0.0;
                    for iy in 0..spec.height {
                        acc += weights[(iy, ix)] * py[(m, iy)] * py[(mp, iy)];
                    }
                    let acc = acc * area;
                    g[(m, mp)] = acc;
                    g[(mp, m)] = acc;
                }
            }
            g
        })
        .collect();

    let indices = &basis.indices;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    (0..k_count)
        .into_par_iter()
        .map(|k| {
            let (n, m) = (indices[k].0 as usize, indices[k].1 as usize);
            let mut row = vec![0.0; k_count];
            for (l, &(np, mp)) in indices.iter().enumerate() {
                let (np, mp) = (np as usize, mp as usize);
                let mut acc = 0.0;
                for (ix, g) in columns.iter().enumerate() {
                    acc += px[(n, ix)] * px[(np, ix)] * g[(m, mp)];
                }
                row[l] = acc;
            }
            row
        })
        .collect_into_vec(&mut rows);
    let mut w = Array2::<f64>::zeros((k_count, k_count));
    for (k, row) in rows.into_iter().enumerate() {
        for (l, v) in row.into_iter().enumerate() {
            w[(k, l)] = v;
        }
    }
    Ok(w)
}

/// Incoherent image of the masked sample plane seen through the family:
/// I_out(r) = sum_r' |K(r, r')|^2 |t(r')|^2 I_in(r') dA, evaluated on the
/// illumination grid. The output inherits the family parity, so every
/// feature appears twice, rotated 180 degrees about the axis.
pub fn image_through_cavity(
    mask: &TransmissionMask,
    illumination: &ImageGrid,
    kernel: &ImagingKernel,
) -> Result<ImageGrid> {
    let basis = &kernel.basis;
    if basis.len() > IMAGE_MODE_LIMIT {
        return Err(Error::Input(format!(
            "family of {} modes exceeds the imaging limit {IMAGE_MODE_LIMIT}",
            basis.len()
        )));
    }
    mask.validate()?;
    let spec = illumination.spec;
    let eps = 1e-9 * spec.pitch;
    if mask.spec.half_extent().0 > spec.half_extent().0 + eps
        || mask.spec.half_extent().1 > spec.half_extent().1 + eps
    {
        return Err(Error::Input(
            "mask extends beyond the illuminated region; enlarge the illumination grid".into(),
        ));
    }

    // source strength: illumination attenuated by the mask intensity
    let mut source = Array2::<f64>::zeros((spec.height, spec.width));
    for iy in 0..spec.height {
        for ix in 0..spec.width {
            let t = mask.sample(spec.x_at(ix), spec.y_at(iy)).norm();
            source[(iy, ix)] = t * t * illumination.intensity[(iy, ix)];
        }
    }
    let w = weighted_mode_overlap(basis, &spec, &source)?;

    // I_out(r) = u(r)^T W u(r), contracted separably column by column
    let orders = basis.max_order as usize + 1;
    let k_count = basis.len();
    let px = basis.profile_table(&spec.x_coords());
    let py = basis.profile_table(&spec.y_coords());
    let indices = &basis.indices;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    (0..spec.width)
        .into_par_iter()
        .map(|ix| {
            // u[m, l] = sum_n phi_n(x) W[(n,m), l]
            let mut u = Array2::<f64>::zeros((orders, k_count));
            for (k, &(n, m)) in indices.iter().enumerate() {
                let pn = px[(n as usize, ix)];
                let m = m as usize;
                for l in 0..k_count {
                    u[(m, l)] += pn * w[(k, l)];
                }
            }
            // t[m, m'] = sum_n' phi_n'(x) u[m, (n', m')]
            let mut t = Array2::<f64>::zeros((orders, orders));
            for (l, &(np, mp)) in indices.iter().enumerate() {
                let pn = px[(np as usize, ix)];
                let mp = mp as usize;
                for m in 0..orders {
                    t[(m, mp)] += pn * u[(m, l)];
                }
            }
            let mut col = vec![0.0; spec.height];
            for (iy, out) in col.iter_mut().enumerate() {
                let mut acc = 0.0;
                for m in 0..orders {
                    let pm = py[(m, iy)];
                    acc += pm * pm * t[(m, m)];
                    for mp in (m + 1)..orders {
                        acc += 2.0 * pm * py[(mp, iy)] * t[(m, mp)];
                    }
                }
                // exact zero weights can round to tiny negatives
                *out = acc.max(0.0);
            }
            col
        })
        .collect_into_vec(&mut columns);
    let mut intensity = Array2::<f64>::zeros((spec.height, spec.width));
    for (ix, col) in columns.into_iter().enumerate() {
        for (iy, v) in col.into_iter().enumerate() {
            intensity[(iy, ix)] = v;
        }
    }
    ImageGrid::new(spec, intensity)
}

/// Imaging figures of a family truncated at order N.
///
/// Resolution is the central intensity FWHM of the on-axis point response
/// of the basis family. The field of view is the diameter where the
/// point-response energy halves, evaluated for the union of both parity
/// families at the same order: broadband illumination addresses both
/// degenerate resonances, and the union is free of the on-axis ripple a
/// lone family shows.
pub fn resolution_and_fov(basis: &ModeBasis) -> Result<(f64, f64)> {
    if basis.family == ParityFamily::Odd {
        return Err(Error::Input(
            "odd-family point response vanishes on axis; resolution is undefined".into(),
        ));
    }
    let n_max = basis.max_order as usize;
    let w0 = basis.waist();
    let phi0 = axis_values(basis, n_max);
    let sq0: Vec<f64> = phi0.iter().map(|v| v * v).collect();
    // cumulative sum over m <= j of phi_m(0)^2
    let mut cum = vec![0.0; n_max + 1];
    let mut acc = 0.0;
    for (j, s) in sq0.iter().enumerate() {
        acc += s;
        cum[j] = acc;
    }

    // resolution: K(x, 0) over the even family, intensity half-width
    let samples = 16384usize;
    let x_max = 1.2 * w0;
    let xs: Vec<f64> = (0..samples)
        .map(|i| i as f64 * x_max / (samples - 1) as f64)
        .collect();
    let table = basis.profile_table(&xs);
    let mut kx = vec![0.0; samples];
    for n in (0..=n_max).step_by(2) {
        let weight: f64 = (0..=(n_max - n))
            .step_by(2)
            .map(|m| sq0[m])
            .sum();
        let a = phi0[n] * weight;
        for (i, k) in kx.iter_mut().enumerate() {
            *k += table[(n, i)] * a;
        }
    }
    let i0 = kx[0] * kx[0];
    if !(i0 > 0.0) {
        return Err(Error::Input("on-axis point response vanished".into()));
    }
    let intensity: Vec<f64> = kx.iter().map(|k| k * k / i0).collect();
    let half_x = first_crossing(&xs, &intensity, 0.5).ok_or_else(|| {
        Error::Resolution("point response never falls to half maximum".into())
    })?;
    let resolution = 2.0 * half_x;

    // field of view: all-parity response energy E(r) = sum_n phi_n(r)^2
    // cum[n_max - n], halved
    let r_max = 1.5 * w0 * ((n_max + 1) as f64).sqrt() + w0;
    let step = w0 / 200.0;
    let count = (r_max / step).ceil() as usize + 1;
    let rs: Vec<f64> = (0..count).map(|i| i as f64 * step).collect();
    let rtable = basis.profile_table(&rs);
    let mut energy = vec![0.0; count];
    for n in 0..=n_max {
        let weight = cum[n_max - n];
        if weight == 0.0 {
            continue;
        }
        for (i, e) in energy.iter_mut().enumerate() {
            let v = rtable[(n, i)];
            *e += v * v * weight;
        }
    }
    let e0 = energy[0];
    let normalized: Vec<f64> = energy.iter().map(|e| e / e0).collect();
    let r50 = first_crossing(&rs, &normalized, 0.5).ok_or_else(|| {
        Error::Resolution("point-response energy never falls to half".into())
    })?;
    Ok((resolution, 2.0 * r50))
}

/// phi_n(0) for n = 0..=n_max, from the on-axis recurrence.
fn axis_values(basis: &ModeBasis, n_max: usize) -> Vec<f64> {
    let table = basis.profile_table(&[0.0]);
    (0..=n_max).map(|n| table[(n, 0)]).collect()
}

/// First downward crossing of `level`, linearly interpolated.
fn first_crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    for i in 0..ys.len() - 1 {
        if ys[i] >= level && ys[i + 1] < level {
            let f = (ys[i] - level) / (ys[i] - ys[i + 1]);
            return Some(xs[i] + f * (xs[i + 1] - xs[i]));
        }
    }
    None
}
