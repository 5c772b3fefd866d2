//! Hermite-Gauss transverse mode basis of a symmetric cavity.
//!
//! Modes are indexed by (n, m) with total order s = n + m. Near confocality
//! the resonances group into parity families (s even or s odd), so a basis
//! is a family truncated at a maximum total order N. Midplane profiles are
//! separable products of 1D Hermite functions evaluated with a stable
//! three-term recurrence.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::CavityGeometry;
use crate::grid::{FieldGrid, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParityFamily {
    /// n + m even: the family that is degenerate at confocality.
    Even,
    /// n + m odd: interleaved half an FSR away at confocality.
    Odd,
    /// Both parities, used for broadband (spectrally integrating) imaging.
    All,
}

impl ParityFamily {
    pub fn accepts(&self, total_order: u32) -> bool {
        match self {
            ParityFamily::Even => total_order % 2 == 0,
            ParityFamily::Odd => total_order % 2 == 1,
            ParityFamily::All => true,
        }
    }
}

/// Orthonormal Hermite functions h_n(xi) (weight dxi), one row per order.
///
/// h_0 = pi^(-1/4) exp(-xi^2/2), h_1 = sqrt(2) xi h_0, and
/// h_{k+1} = sqrt(2/(k+1)) xi h_k - sqrt(k/(k+1)) h_{k-1}. The recurrence
/// keeps every intermediate at unit scale, so it is stable to high order.
pub fn hermite_functions(max_order: usize, xi: &[f64]) -> Array2<f64> {
    let mut table = Array2::zeros((max_order + 1, xi.len()));
    let norm0 = std::f64::consts::PI.powf(-0.25);
    for (j, &x) in xi.iter().enumerate() {
        table[(0, j)] = norm0 * (-x * x / 2.0).exp();
        if max_order >= 1 {
            table[(1, j)] = std::f64::consts::SQRT_2 * x * table[(0, j)];
        }
        for k in 1..max_order {
            let a = (2.0 / (k as f64 + 1.0)).sqrt();
            let b = (k as f64 / (k as f64 + 1.0)).sqrt();
            table[(k + 1, j)] = a * x * table[(k, j)] - b * table[(k - 1, j)];
        }
    }
    table
}

/// A truncated transverse mode family of a cavity geometry.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub geometry: CavityGeometry,
    pub family: ParityFamily,
    /// Maximum total order N; members have n + m <= N within the family.
    pub max_order: u32,
    /// (n, m) pairs, total order ascending, then n ascending.
    pub indices: Vec<(u32, u32)>,
    /// Longitudinal index of the reference (0,0) resonance.
    pub q_ref: i64,
}

impl ModeBasis {
    pub fn new(geometry: CavityGeometry, family: ParityFamily, max_order: u32) -> Result<Self> {
        let q_ref = geometry.reference_q();
        let mut indices = Vec::new();
        for s in 0..=max_order {
            if !family.accepts(s) {
                continue;
            }
            for n in 0..=s {
                indices.push((n, s - n));
            }
        }
        if indices.is_empty() {
            return Err(Error::Input(format!(
                "family truncated at total order {max_order} contains no modes"
            )));
        }
        Ok(ModeBasis {
            geometry,
            family,
            max_order,
            indices,
            q_ref,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Fundamental waist of the underlying geometry (m).
    pub fn waist(&self) -> f64 {
        self.geometry.fundamental_waist()
    }

    /// Longitudinal index assigned to member k: the branch that keeps the
    /// member closest to the reference resonance.
    pub fn member_q(&self, k: usize) -> i64 {
        let s = (self.indices[k].0 + self.indices[k].1) as f64;
        let shift = (s * self.geometry.arccos_g_over_pi()).round() as i64;
        self.q_ref - shift
    }

    /// Detuning of each member from the reference (0,0) resonance (Hz),
    /// with the longitudinal index of member_q. At exact confocality the
    /// even family evaluates to 0.0 without rounding error.
    pub fn relative_frequencies(&self) -> Vec<f64> {
        let fsr = self.geometry.fsr();
        let a = self.geometry.arccos_g_over_pi();
        self.indices
            .iter()
            .map(|&(n, m)| {
                let s = (n + m) as f64;
                fsr * (s * a - (s * a).round())
            })
            .collect()
    }

    /// Default evaluation grid: extent 6 w0 sqrt(N+1), at least 512 pixels
    /// per side, grown in powers of two until the pitch resolves
    /// w0/sqrt(N+1) with 4 pixels.
    pub fn default_grid(&self) -> Result<GridSpec> {
        let root = ((self.max_order + 1) as f64).sqrt();
        let extent = 6.0 * self.waist() * root;
        let mut side = 512usize;
        while extent / side as f64 > self.waist() / (4.0 * root) {
            side *= 2;
        }
        GridSpec::square(side, extent / side as f64)
    }

    /// Coarsest pitch that still resolves the highest-order member with 4
    /// pixels per oscillation.
    pub fn required_pitch(&self) -> f64 {
        self.waist() / (4.0 * ((self.max_order + 1) as f64).sqrt())
    }

    /// Smallest grid span that contains the highest-order member's tails.
    pub fn required_extent(&self) -> f64 {
        6.0 * self.waist() * ((self.max_order + 1) as f64).sqrt()
    }

    pub(crate) fn check_pitch(&self, spec: &GridSpec) -> Result<()> {
        let need = self.required_pitch();
        if spec.pitch > need {
            return Err(Error::Resolution(format!(
                "pitch {:.3e} m too coarse for total order {}; need <= {:.3e} m",
                spec.pitch, self.max_order, need
            )));
        }
        Ok(())
    }

    pub(crate) fn check_extent(&self, spec: &GridSpec) -> Result<()> {
        let need = self.required_extent();
        let span_x = spec.width as f64 * spec.pitch;
        let span_y = spec.height as f64 * spec.pitch;
        if span_x < need || span_y < need {
            return Err(Error::Resolution(format!(
                "grid span {:.3e} x {:.3e} m truncates total order {}; need >= {:.3e} m \
                 (or accept truncation explicitly)",
                span_x, span_y, self.max_order, need
            )));
        }
        Ok(())
    }

    /// 1D mode profiles phi_n(x) = 2^(1/4)/sqrt(w0) h_n(sqrt(2) x / w0),
    /// rows n = 0..=max_order, orthonormal under dx quadrature.
    pub fn profile_table(&self, coords: &[f64]) -> Array2<f64> {
        let w0 = self.waist();
        let xi: Vec<f64> = coords.iter().map(|&x| std::f64::consts::SQRT_2 * x / w0).collect();
        let mut table = hermite_functions(self.max_order as usize, &xi);
        let pref = 2.0f64.powf(0.25) / w0.sqrt();
        table.mapv_inplace(|v| v * pref);
        table
    }

    /// Midplane field of member k on the grid. The grid must resolve the
    /// basis (pitch rule) and, unless `allow_truncation`, contain its tails.
    pub fn evaluate_mode(
        &self,
        k: usize,
        spec: &GridSpec,
        allow_truncation: bool,
    ) -> Result<FieldGrid> {
        if k >= self.indices.len() {
            return Err(Error::Input(format!(
                "mode index {k} out of range for basis of {}",
                self.indices.len()
            )));
        }
        self.check_pitch(spec)?;
        if !allow_truncation {
            self.check_extent(spec)?;
        }
        let (n, m) = self.indices[k];
        let px = self.profile_table(&spec.x_coords());
        let py = self.profile_table(&spec.y_coords());
        let mut values = Array2::zeros((spec.height, spec.width));
        for iy in 0..spec.height {
            let fy = py[(m as usize, iy)];
            for ix in 0..spec.width {
                values[(iy, ix)] = Complex64::new(px[(n as usize, ix)] * fy, 0.0);
            }
        }
        FieldGrid::new(*spec, values)
    }

    /// Field synthesis Psi(r) = sum_k c_k u_k(r). Checks the pitch rule
    /// only; rendering onto a truncating window is allowed.
    pub fn synthesize(&self, coeffs: &[Complex64], spec: &GridSpec) -> Result<FieldGrid> {
        if coeffs.len() != self.indices.len() {
            return Err(Error::Input(format!(
                "coefficient vector length {} does not match basis size {}",
                coeffs.len(),
                self.indices.len()
            )));
        }
        self.check_pitch(spec)?;
        let px = self.profile_table(&spec.x_coords());
        let py = self.profile_table(&spec.y_coords());
        let orders = self.max_order as usize + 1;
        // coefficient matrix C[n, m], then values = Py^T (C^T Px)
        let mut c = Array2::<Complex64>::zeros((orders, orders));
        for (k, &(n, m)) in self.indices.iter().enumerate() {
            c[(n as usize, m as usize)] = coeffs[k];
        }
        let mut t = Array2::<Complex64>::zeros((orders, spec.width));
        for m in 0..orders {
            for ix in 0..spec.width {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..orders {
                    acc += c[(n, m)] * px[(n, ix)];
                }
                t[(m, ix)] = acc;
            }
        }
        let mut values = Array2::<Complex64>::zeros((spec.height, spec.width));
        for iy in 0..spec.height {
            for ix in 0..spec.width {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..orders {
                    acc += t[(m, ix)] * py[(m, iy)];
                }
                values[(iy, ix)] = acc;
            }
        }
        FieldGrid::new(*spec, values)
    }

    /// Quadrature projections c_k = <u_k|field> for every member.
    pub fn project(&self, field: &FieldGrid) -> Result<Vec<Complex64>> {
        self.check_pitch(&field.spec)?;
        let spec = field.spec;
        let px = self.profile_table(&spec.x_coords());
        let py = self.profile_table(&spec.y_coords());
        let orders = self.max_order as usize + 1;
        // D[m, ix] = sum_iy phi_m(y) E[iy, ix]
        let mut d = Array2::<Complex64>::zeros((orders, spec.width));
        for m in 0..orders {
            for ix in 0..spec.width {
                let mut acc = Complex64::new(0.0, 0.0);
                for iy in 0..spec.height {
                    acc += field.values[(iy, ix)] * py[(m, iy)];
                }
                d[(m, ix)] = acc;
            }
        }
        let area = spec.pixel_area();
        Ok(self
            .indices
            .iter()
            .map(|&(n, m)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for ix in 0..spec.width {
                    acc += d[(m as usize, ix)] * px[(n as usize, ix)];
                }
                acc * area
            })
            .collect())
    }

    /// Unit-norm coefficients of a point source at (x0, y0) projected onto
    /// the family: c_k proportional to u_k(x0, y0).
    pub fn point_projection(&self, x0: f64, y0: f64) -> Result<Vec<Complex64>> {
        let px = self.profile_table(&[x0]);
        let py = self.profile_table(&[y0]);
        let mut c: Vec<f64> = self
            .indices
            .iter()
            .map(|&(n, m)| px[(n as usize, 0)] * py[(m as usize, 0)])
            .collect();
        let norm: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Input(format!(
                "point projection at ({x0:.3e}, {y0:.3e}) m vanishes on this family"
            )));
        }
        for v in c.iter_mut() {
            *v /= norm;
        }
        Ok(c.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn confocal() -> CavityGeometry {
        CavityGeometry::new(10.0e-3, 10.0e-3, 0.997, 0.977, 780.0e-9).unwrap()
    }

    #[test]
    fn fundamental_is_normalized_gaussian_with_waist_radius() {
        let basis = ModeBasis::new(confocal(), ParityFamily::Even, 0).unwrap();
        let grid = basis.default_grid().unwrap();
        let f = basis.evaluate_mode(0, &grid, false).unwrap();
        assert!((f.power() - 1.0).abs() < 1e-6, "norm {}", f.power());
        // Gaussian second moment w0^2/4 per axis makes 2 sigma = w0
        let (mxx, myy, _) = f.central_second_moments();
        let w0 = basis.waist();
        assert!((2.0 * mxx.sqrt() - w0).abs() / w0 < 1e-3);
        assert!((2.0 * myy.sqrt() - w0).abs() / w0 < 1e-3);
    }

    #[test]
    fn odd_mode_vanishes_on_axis() {
        let basis = ModeBasis::new(confocal(), ParityFamily::Odd, 1).unwrap();
        // odd pixel count puts a pixel center exactly on the axis
        let grid = GridSpec::square(1025, basis.required_extent() / 1024.0).unwrap();
        assert_eq!(basis.indices[1], (1, 0));
        let f = basis.evaluate_mode(1, &grid, false).unwrap();
        let center = (grid.height / 2, grid.width / 2);
        assert_eq!(f.values[center], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn cross_order_overlap_vanishes_against_fine_grid_oracle() {
        let basis = ModeBasis::new(confocal(), ParityFamily::Even, 2).unwrap();
        let coarse = basis.default_grid().unwrap();
        let fine = GridSpec::square(coarse.width * 4, coarse.pitch / 4.0).unwrap();
        for spec in [coarse, fine] {
            let k20 = basis.indices.iter().position(|&i| i == (2, 0)).unwrap();
            let k02 = basis.indices.iter().position(|&i| i == (0, 2)).unwrap();
            let a = basis.evaluate_mode(k20, &spec, false).unwrap();
            let b = basis.evaluate_mode(k02, &spec, false).unwrap();
            assert!(a.inner(&b).unwrap().norm() < 1e-6);
            assert!((a.inner(&a).unwrap().re - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn orthonormality_across_small_family() {
        let basis = ModeBasis::new(confocal(), ParityFamily::Even, 10).unwrap();
        let grid = basis.default_grid().unwrap();
        let fields: Vec<_> = (0..basis.len())
            .map(|k| basis.evaluate_mode(k, &grid, false).unwrap())
            .collect();
        for k in 0..fields.len() {
            for l in k..fields.len() {
                let want = if k == l { 1.0 } else { 0.0 };
                let got = fields[k].inner(&fields[l]).unwrap();
                assert!(
                    (got.re - want).abs() < 1e-6 && got.im.abs() < 1e-12,
                    "({k},{l}) -> {got}"
                );
            }
        }
    }

    #[test]
    fn parity_is_exact_on_the_grid() {
        let basis = ModeBasis::new(confocal(), ParityFamily::All, 5).unwrap();
        let grid = GridSpec::square(64, basis.required_pitch()).unwrap();
        for k in 0..basis.len() {
            let (n, m) = basis.indices[k];
            let f = basis.evaluate_mode(k, &grid, true).unwrap();
            let sign = if (n + m) % 2 == 0 { 1.0 } else { -1.0 };
            for iy in 0..grid.height {
                for ix in 0..grid.width {
                    let a = f.values[(iy, ix)].re;
                    let b = f.values[(grid.height - 1 - iy, grid.width - 1 - ix)].re;
                    assert_eq!(a, sign * b, "parity broken for ({n},{m}) at ({iy},{ix})");
                }
            }
        }
    }

    #[test]
    fn grid_rule_violations_are_reported() {
        let basis = ModeBasis::new(confocal(), ParityFamily::Even, 12).unwrap();
        let coarse = GridSpec::square(512, basis.required_pitch() * 3.0).unwrap();
        match basis.evaluate_mode(0, &coarse, false) {
            Err(Error::Resolution(msg)) => assert!(msg.contains("pitch")),
            other => panic!("expected resolution error, got {other:?}"),
        }
        let small = GridSpec::square(32, basis.required_pitch()).unwrap();
        match basis.evaluate_mode(0, &small, false) {
            Err(Error::Resolution(msg)) => assert!(msg.contains("span")),
            other => panic!("expected resolution error, got {other:?}"),
        }
        assert!(basis.evaluate_mode(0, &small, true).is_ok());
    }

    #[test]
    fn synthesis_matches_projection_round_trip() {
        let basis = ModeBasis::new(confocal(), ParityFamily::Even, 6).unwrap();
        let grid = basis.default_grid().unwrap();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); basis.len()];
        coeffs[0] = Complex64::new(0.6, 0.0);
        coeffs[3] = Complex64::new(0.0, 0.8);
        let field = basis.synthesize(&coeffs, &grid).unwrap();
        let back = basis.project(&field).unwrap();
        for (a, b) in coeffs.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn even_family_is_exactly_degenerate_at_confocality() {
        let basis = ModeBasis::new(confocal(), ParityFamily::Even, 20).unwrap();
        for d in basis.relative_frequencies() {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn near_confocal_family_splitting_matches_mode_ladder() {
        let geom = CavityGeometry::new(10.0e-3, 11.25e-3, 0.997, 0.977, 780.0e-9).unwrap();
        let basis = ModeBasis::new(geom, ParityFamily::Even, 4).unwrap();
        let freqs = basis.relative_frequencies();
        let k2 = basis.indices.iter().position(|&i| i == (2, 0)).unwrap();
        // adjacent even-family member sits at 2 dnu_T - FSR from the head
        let expect = 2.0 * geom.transverse_mode_spacing() - geom.fsr();
        assert!((freqs[k2] - expect).abs() < 1.0, "{} vs {}", freqs[k2], expect);
        // and the branch choice keeps members within half an FSR
        for d in &freqs {
            assert!(d.abs() <= geom.fsr() / 2.0);
        }
    }

    #[test]
    fn point_projection_is_unit_norm_and_even(){
        let basis = ModeBasis::new(confocal(), ParityFamily::Even, 12).unwrap();
        let c = basis.point_projection(12.0e-6, 0.0).unwrap();
        let norm: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let c_mirror = basis.point_projection(-12.0e-6, 0.0).unwrap();
        for (a, b) in c.iter().zip(c_mirror.iter()) {
            assert!((a - b).norm() < 1e-12, "even family must not see the sign");
        }
    }
}
