//! Round-trip operators of masked cavities: overlap matrices, eigenmodes,
//! finesse extraction and localized supermodes.
//!
//! The mask enters through its deviation from full transparency: the
//! overlap matrix is assembled as B = I - sum over defect pixels of
//! (1 - t(r)) u_k(r) u_l(r) dA, so a transparent mask gives the exact
//! identity and pixels outside the mask grid never contribute.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, UPLO};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::CavityGeometry;
use crate::grid::{FieldGrid, GridSpec};
use crate::mask::TransmissionMask;
use crate::modes::{ModeBasis, ParityFamily};

/// Largest basis for which dense eigendecomposition is attempted.
pub const DENSE_EIG_LIMIT: usize = 2000;

/// Two eigenvalues whose moduli differ by less than this are treated as one
/// degenerate cluster when a seed picks the returned eigenvector.
pub const DEGENERACY_TOL: f64 = 1e-9;

const POWER_ITERATION_CAP: usize = 50_000;
const LANCZOS_CAP: usize = 600;

/// Mode-space overlap matrix B_kl = <u_k| t |u_l> by grid quadrature, with
/// the mask transparent outside its own grid.
pub fn mask_overlap_matrix(mask: &TransmissionMask, basis: &ModeBasis) -> Result<Array2<Complex64>> {
    mask.validate()?;
    basis.check_pitch(&mask.spec)?;
    let k_count = basis.len();
    let mut b = Array2::<Complex64>::eye(k_count);
    let defects = mask.defect_pixels();
    if defects.is_empty() {
        return Ok(b);
    }

    let orders = basis.max_order as usize + 1;
    let px = basis.profile_table(&mask.spec.x_coords());
    let py = basis.profile_table(&mask.spec.y_coords());
    let area = mask.spec.pixel_area();

    // group defects by column, preserving row order
    let mut columns: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); mask.spec.width];
    for &(iy, ix, d) in &defects {
        columns[ix].push((iy, d * area));
    }

    // per active column, the y-contraction G[m, m'] = sum_iy w phi_m phi_m'
    let active: Vec<(usize, Array2<Complex64>)> = columns
        .par_iter()
        .enumerate()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(ix, rows)| {
            let mut g = Array2::<Complex64>::zeros((orders, orders));
            for m in 0..orders {
                for mp in m..orders {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &(iy, w) in rows {
                        acc += w * (py[(m, iy)] * py[(mp, iy)]);
                    }
                    g[(m, mp)] = acc;
                    g[(mp, m)] = acc;
                }
            }
            (ix, g)
        })
        .collect();

    // rows of B in parallel; each entry is a fixed-order sum over columns,
    // so the result does not depend on the thread schedule
    let indices = &basis.indices;
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    (0..k_count)
        .into_par_iter()
        .map(|k| {
            let (n, m) = (indices[k].0 as usize, indices[k].1 as usize);
            let mut row = vec![Complex64::new(0.0, 0.0); k_count];
            for (l, &(np, mp)) in indices.iter().enumerate() {
                let (np, mp) = (np as usize, mp as usize);
                let mut acc = Complex64::new(0.0, 0.0);
                for (ix, g) in &active {
                    acc += px[(n, *ix)] * px[(np, *ix)] * g[(m, mp)];
                }
                row[l] = acc;
            }
            row
        })
        .collect_into_vec(&mut rows);
    for (k, row) in rows.into_iter().enumerate() {
        for (l, v) in row.into_iter().enumerate() {
            b[(k, l)] -= v;
        }
    }
    Ok(b)
}

/// Round-trip matrix over a mode basis, with the reference frequency and
/// probe detuning the phases were evaluated at.
#[derive(Debug, Clone)]
pub struct RoundTripOperator {
    pub basis: ModeBasis,
    pub matrix: Array2<Complex64>,
    /// Frequency of the reference (0,0) resonance (Hz).
    pub reference_frequency: f64,
    /// Probe detuning from the reference resonance (Hz).
    pub detuning: f64,
}

/// M = sqrt(R1 R2 (1 - excess_loss)) P B B: mirror losses, one round-trip
/// phase per mode, and the mask crossed twice per round trip.
pub fn round_trip_operator(
    geometry: &CavityGeometry,
    mask: &TransmissionMask,
    basis: &ModeBasis,
    detuning: f64,
) -> Result<RoundTripOperator> {
    if *geometry != basis.geometry {
        return Err(Error::Input(
            "operator geometry differs from the geometry the basis was built from".into(),
        ));
    }
    let b = mask_overlap_matrix(mask, basis)?;
    let bb = par_matmul(&b, &b);
    let amplitude = geometry.bare_round_trip_amplitude();
    let t_rt = geometry.round_trip_time();
    let detunings = basis.relative_frequencies();
    let mut matrix = bb;
    for (k, dk) in detunings.iter().enumerate() {
        let phase = 2.0 * std::f64::consts::PI * (dk - detuning) * t_rt;
        let factor = Complex64::from_polar(amplitude, phase);
        for l in 0..basis.len() {
            matrix[(k, l)] *= factor;
        }
    }
    Ok(RoundTripOperator {
        basis: basis.clone(),
        matrix,
        reference_frequency: geometry.mode_frequency(basis.q_ref, 0, 0)?,
        detuning,
    })
}

impl RoundTripOperator {
    /// Wrap an explicit matrix (tests, custom operators).
    pub fn from_matrix(basis: ModeBasis, matrix: Array2<Complex64>, detuning: f64) -> Result<Self> {
        if matrix.dim() != (basis.len(), basis.len()) {
            return Err(Error::Input(format!(
                "matrix {:?} does not match basis size {}",
                matrix.dim(),
                basis.len()
            )));
        }
        let reference_frequency = basis.geometry.mode_frequency(basis.q_ref, 0, 0)?;
        Ok(RoundTripOperator {
            basis,
            matrix,
            reference_frequency,
            detuning,
        })
    }

    /// Dense eigendecomposition (basis size capped at `DENSE_EIG_LIMIT`).
    pub fn eigendecompose(&self) -> Result<OperatorSpectrum> {
        let k = self.basis.len();
        if k > DENSE_EIG_LIMIT {
            return Err(Error::Input(format!(
                "dense eigendecomposition limited to {DENSE_EIG_LIMIT} modes, basis has {k}; \
                 use seeded dominant_mode"
            )));
        }
        let (eigenvalues, eigenvectors) = self
            .matrix
            .eig()
            .map_err(|e| Error::Convergence(format!("eigendecomposition failed: {e}")))?;
        Ok(OperatorSpectrum {
            eigenvalues,
            eigenvectors,
        })
    }
}

/// Eigenvalues and unit-norm eigenvectors (one per column) of a round-trip
/// matrix.
pub struct OperatorSpectrum {
    pub eigenvalues: Array1<Complex64>,
    pub eigenvectors: Array2<Complex64>,
}

impl OperatorSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Index of the eigenvalue of largest modulus.
    pub fn dominant_index(&self) -> usize {
        let mut best = 0;
        for j in 1..self.eigenvalues.len() {
            if self.eigenvalues[j].norm() > self.eigenvalues[best].norm() {
                best = j;
            }
        }
        best
    }

    /// Pick the mode a localized probe actually builds up: rank by seed
    /// overlap weighted with the resonant buildup 1/(1 - |lambda|)^2, so a
    /// lossy but well-matched eigenmode beats the global loss minimum.
    pub fn seeded_index(&self, seed: &[Complex64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..self.len() {
            let mut overlap = Complex64::new(0.0, 0.0);
            for i in 0..seed.len() {
                overlap += self.eigenvectors[(i, j)].conj() * seed[i];
            }
            let lam = self.eigenvalues[j].norm();
            let score = overlap.norm_sqr() / ((1.0 - lam) * (1.0 - lam));
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        best
    }

    /// Indices whose eigenvalue modulus matches index `j` within
    /// `DEGENERACY_TOL`.
    pub fn degenerate_cluster(&self, j: usize) -> Vec<usize> {
        let lam = self.eigenvalues[j].norm();
        (0..self.len())
            .filter(|&i| (self.eigenvalues[i].norm() - lam).abs() <= DEGENERACY_TOL)
            .collect()
    }
}

/// A coherent superposition of family modes with its measured footprint.
#[derive(Debug, Clone)]
pub struct Supermode {
    pub family: ParityFamily,
    /// Unit-norm coefficients, ordered as the basis indices.
    pub coefficients: Vec<Complex64>,
    /// Intensity centroid (m).
    pub center: (f64, f64),
    /// Effective waist xi measured from the synthesized intensity (m).
    pub effective_waist: f64,
}

impl Supermode {
    /// Normalize coefficients, synthesize on `spec`, measure centroid and
    /// effective waist.
    pub fn from_coefficients(
        basis: &ModeBasis,
        coefficients: &[Complex64],
        spec: &GridSpec,
    ) -> Result<Self> {
        let norm: f64 = coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::Input("supermode coefficients have zero norm".into()));
        }
        let coefficients: Vec<Complex64> = coefficients.iter().map(|c| c / norm).collect();
        let field = basis.synthesize(&coefficients, spec)?;
        let center = field.centroid();
        let effective_waist = effective_waist(&field)?;
        Ok(Supermode {
            family: basis.family,
            coefficients,
            center,
            effective_waist,
        })
    }

    pub fn synthesize(&self, basis: &ModeBasis, spec: &GridSpec) -> Result<FieldGrid> {
        basis.synthesize(&self.coefficients, spec)
    }
}

/// Effective waist of a field: principal-axis second moments of the
/// intensity, xi_i = 2 sigma_i per axis (the 1/e^2 radius for a Gaussian),
/// reported as the geometric mean of the two axes.
pub fn effective_waist(field: &FieldGrid) -> Result<f64> {
    let power = field.power();
    if power <= 0.0 || !power.is_finite() {
        return Err(Error::Input("effective waist of a zero field".into()));
    }
    let edge = field.edge_power_fraction(2);
    if edge >= 0.01 {
        return Err(Error::Clipping(format!(
            "{:.1}% of the power sits in the outermost 2-pixel ring; enlarge the grid",
            edge * 100.0
        )));
    }
    let (mxx, myy, mxy) = field.central_second_moments();
    let mean = (mxx + myy) / 2.0;
    let diff = (mxx - myy) / 2.0;
    let off = (diff * diff + mxy * mxy).sqrt();
    let (l1, l2) = (mean + off, mean - off);
    if l2 <= 0.0 {
        return Err(Error::Input("degenerate intensity distribution".into()));
    }
    Ok(2.0 * (l1 * l2).powf(0.25))
}

/// Largest-|lambda| eigenpair of the operator. A seed breaks degenerate
/// ties: within a cluster of equal-|lambda| eigenvalues the returned
/// supermode is the seed's projection onto the cluster span. Above the
/// dense limit the seed starts a power iteration instead.
pub fn dominant_mode(
    op: &RoundTripOperator,
    seed: Option<&[Complex64]>,
) -> Result<(Complex64, Supermode)> {
    let k = op.basis.len();
    if let Some(s) = seed {
        if s.len() != k {
            return Err(Error::Input(format!(
                "seed length {} does not match basis size {k}",
                s.len()
            )));
        }
    }
    let grid = op.basis.default_grid()?;
    if k <= DENSE_EIG_LIMIT {
        let spectrum = op.eigendecompose()?;
        let (value, coeffs) = match seed {
            None => {
                let j = spectrum.dominant_index();
                let coeffs: Vec<Complex64> =
                    (0..k).map(|i| spectrum.eigenvectors[(i, j)]).collect();
                (spectrum.eigenvalues[j], coeffs)
            }
            Some(s) => {
                let j = spectrum.seeded_index(s);
                let cluster = spectrum.degenerate_cluster(j);
                let coeffs = if cluster.len() == k {
                    s.to_vec()
                } else {
                    project_onto_cluster(&spectrum, &cluster, s)?
                };
                (spectrum.eigenvalues[j], coeffs)
            }
        };
        let supermode = Supermode::from_coefficients(&op.basis, &coeffs, &grid)?;
        Ok((value, supermode))
    } else {
        let start: Vec<Complex64> = match seed {
            Some(s) => s.to_vec(),
            None => deterministic_start(k),
        };
        let (value, coeffs) = power_iteration(&op.matrix, &start)?;
        let supermode = Supermode::from_coefficients(&op.basis, &coeffs, &grid)?;
        Ok((value, supermode))
    }
}

/// Project `seed` onto the span of the cluster eigenvectors by modified
/// Gram-Schmidt with one re-orthogonalization pass.
fn project_onto_cluster(
    spectrum: &OperatorSpectrum,
    cluster: &[usize],
    seed: &[Complex64],
) -> Result<Vec<Complex64>> {
    let k = seed.len();
    let mut ortho: Vec<Vec<Complex64>> = Vec::with_capacity(cluster.len());
    for &j in cluster {
        let mut v: Vec<Complex64> = (0..k).map(|i| spectrum.eigenvectors[(i, j)]).collect();
        for _ in 0..2 {
            for q in &ortho {
                let dot: Complex64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q.iter()) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-10 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            ortho.push(v);
        }
    }
    let mut proj = vec![Complex64::new(0.0, 0.0); k];
    for q in &ortho {
        let dot: Complex64 = q.iter().zip(seed.iter()).map(|(a, b)| a.conj() * b).sum();
        for (pi, qi) in proj.iter_mut().zip(q.iter()) {
            *pi += dot * qi;
        }
    }
    let norm: f64 = proj.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::Input(
            "seed has no projection onto the dominant eigenspace".into(),
        ));
    }
    for x in proj.iter_mut() {
        *x /= norm;
    }
    Ok(proj)
}

fn deterministic_start(k: usize) -> Vec<Complex64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    (0..k)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect()
}

fn power_iteration(
    matrix: &Array2<Complex64>,
    start: &[Complex64],
) -> Result<(Complex64, Vec<Complex64>)> {
    let k = start.len();
    let mut x = start.to_vec();
    normalize_in_place(&mut x)?;
    let mut mx = vec![Complex64::new(0.0, 0.0); k];
    for iter in 0..POWER_ITERATION_CAP {
        matvec(matrix, &x, &mut mx);
        let lambda: Complex64 = x.iter().zip(mx.iter()).map(|(a, b)| a.conj() * b).sum();
        let mut residual = 0.0f64;
        for i in 0..k {
            residual += (mx[i] - lambda * x[i]).norm_sqr();
        }
        let residual = residual.sqrt();
        if residual <= 1e-10 * lambda.norm().max(1e-300) {
            x = mx;
            normalize_in_place(&mut x)?;
            return Ok((lambda, x));
        }
        x.copy_from_slice(&mx);
        normalize_in_place(&mut x)?;
        if iter == POWER_ITERATION_CAP - 1 {
            return Err(Error::Convergence(format!(
                "power iteration did not converge in {POWER_ITERATION_CAP} steps \
                 (residual {residual:.3e})"
            )));
        }
    }
    unreachable!()
}

fn matvec(matrix: &Array2<Complex64>, x: &[Complex64], out: &mut [Complex64]) {
    let (rows, cols) = matrix.dim();
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..cols {
            acc += matrix[(i, j)] * x[j];
        }
        *o = acc;
    });
    debug_assert_eq!(rows, out.len());
}

fn normalize_in_place(x: &mut [Complex64]) -> Result<()> {
    let norm: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::Convergence("iteration vector collapsed to zero".into()));
    }
    for v in x.iter_mut() {
        *v /= norm;
    }
    Ok(())
}

/// Row-parallel matrix product with a fixed inner summation order, so the
/// result is identical for any thread count.
pub(crate) fn par_matmul(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (n, kk) = a.dim();
    let (_, m) = b.dim();
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![Complex64::new(0.0, 0.0); m];
            for p in 0..kk {
                let aip = a[(i, p)];
                if aip.norm_sqr() != 0.0 {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r += aip * b[(p, j)];
                    }
                }
            }
            row
        })
        .collect_into_vec(&mut rows);
    let mut out = Array2::zeros((n, m));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Finesse and equivalent linewidth extracted from a round-trip amplitude.
#[derive(Debug, Clone, Copy)]
pub struct FinesseReport {
    /// Probe position (m), when the report belongs to a map point.
    pub position: Option<(f64, f64)>,
    /// Dominant round-trip field amplitude |lambda|.
    pub round_trip_amplitude: f64,
    pub finesse: f64,
    /// FSR / finesse (Hz).
    pub linewidth: f64,
}

/// F = pi sqrt(|lambda|) / (1 - |lambda|), the exact Airy relation.
pub fn finesse_from_amplitude(amplitude: f64, fsr: f64) -> Result<FinesseReport> {
    if !(amplitude > 0.0 && amplitude < 1.0) {
        return Err(Error::Input(format!(
            "round-trip amplitude must lie in (0, 1), got {amplitude}; \
             >= 1 violates passivity"
        )));
    }
    let finesse = std::f64::consts::PI * amplitude.sqrt() / (1.0 - amplitude);
    Ok(FinesseReport {
        position: None,
        round_trip_amplitude: amplitude,
        finesse,
        linewidth: fsr / finesse,
    })
}

/// Round-trip amplitude that produces a given finesse (inverse of
/// `finesse_from_amplitude`).
pub fn amplitude_for_finesse(finesse: f64) -> Result<f64> {
    if !(finesse > 0.0) || !finesse.is_finite() {
        return Err(Error::Input(format!("finesse must be positive, got {finesse}")));
    }
    // F = pi x / (1 - x^2) with x = sqrt(amplitude)
    let pi = std::f64::consts::PI;
    let x = (-pi + (pi * pi + 4.0 * finesse * finesse).sqrt()) / (2.0 * finesse);
    Ok(x * x)
}

/// Excess intensity loss that calibrates a bare cavity with mirror
/// reflectivities r1, r2 to a measured finesse.
pub fn excess_loss_for_finesse(r1: f64, r2: f64, finesse: f64) -> Result<f64> {
    let target = amplitude_for_finesse(finesse)?;
    let coating = (r1 * r2).sqrt();
    if target > coating {
        return Err(Error::Calibration(format!(
            "finesse {finesse} requires round-trip amplitude {target:.6} above the \
             coating limit {coating:.6}"
        )));
    }
    Ok(1.0 - (target * target) / (r1 * r2))
}

/// Finesse at a list of probe positions: the round-trip operator is built
/// and decomposed once; each position seeds the eigenmode selection with a
/// point projection there.
pub fn finesse_map(
    mask: &TransmissionMask,
    basis: &ModeBasis,
    geometry: &CavityGeometry,
    positions: &[(f64, f64)],
) -> Result<Vec<FinesseReport>> {
    for &(x, y) in positions {
        if !mask.spec.contains(x, y) {
            return Err(Error::Input(format!(
                "probe position ({:.2}, {:.2}) um outside the mask extent",
                x * 1e6,
                y * 1e6
            )));
        }
    }
    let fsr = geometry.fsr();
    let op = round_trip_operator(geometry, mask, basis, 0.0)?;
    let mut out = Vec::with_capacity(positions.len());
    if basis.len() <= DENSE_EIG_LIMIT {
        let spectrum = op.eigendecompose()?;
        for &(x, y) in positions {
            let seed = basis.point_projection(x, y)?;
            let j = spectrum.seeded_index(&seed);
            let mut report = finesse_from_amplitude(spectrum.eigenvalues[j].norm(), fsr)?;
            report.position = Some((x, y));
            out.push(report);
        }
    } else {
        for &(x, y) in positions {
            let seed = basis.point_projection(x, y)?;
            let (value, _) = dominant_mode(&op, Some(&seed))?;
            let mut report = finesse_from_amplitude(value.norm(), fsr)?;
            report.position = Some((x, y));
            out.push(report);
        }
    }
    Ok(out)
}

/// Project a pump field onto the basis family and return the renormalized
/// supermode it excites.
pub fn supermode_project(pump: &FieldGrid, basis: &ModeBasis) -> Result<Supermode> {
    let coeffs = basis.project(pump)?;
    let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let pump_norm = pump.power().sqrt();
    if norm <= 1e-12 * pump_norm.max(1e-300) {
        return Err(Error::Input(
            "pump has no projection onto the mode family (degenerate input)".into(),
        ));
    }
    Supermode::from_coefficients(basis, &coeffs, &pump.spec)
}

/// Input field that maximizes coupling into the dominant supermode seeded
/// at `target`: the phase conjugate of its midplane field. Propagation to
/// the physical input plane is outside this model; the returned field is
/// the midplane pattern.
pub fn optimize_pump_coupling(
    mask: &TransmissionMask,
    basis: &ModeBasis,
    target: (f64, f64),
) -> Result<FieldGrid> {
    if !mask.spec.contains(target.0, target.1) {
        return Err(Error::Input(format!(
            "target ({:.2}, {:.2}) um outside the mask extent",
            target.0 * 1e6,
            target.1 * 1e6
        )));
    }
    let op = round_trip_operator(&basis.geometry.clone(), mask, basis, 0.0)?;
    let seed = basis.point_projection(target.0, target.1)?;
    let (_, supermode) = dominant_mode(&op, Some(&seed))?;
    let grid = basis.default_grid()?;
    let mut field = supermode.synthesize(basis, &grid)?;
    field.values.mapv_inplace(|v| v.conj());
    field.normalized()
}

/// Total-order position-variance matrix V_kl = <k| x^2 + y^2 |l> over the
/// family, in m^2. Couplings only exist between members differing by 2 in
/// one index.
pub fn variance_matrix_elements(basis: &ModeBasis) -> (Vec<f64>, Vec<(usize, usize, f64)>) {
    let unit = basis.waist().powi(2) / 4.0;
    let mut index = std::collections::HashMap::new();
    for (k, &nm) in basis.indices.iter().enumerate() {
        index.insert(nm, k);
    }
    let mut diag = Vec::with_capacity(basis.len());
    let mut couplings = Vec::new();
    for (k, &(n, m)) in basis.indices.iter().enumerate() {
        diag.push(((2 * n + 1) + (2 * m + 1)) as f64 * unit);
        for (dn, dm) in [(2u32, 0u32), (0, 2)] {
            if let Some(&l) = index.get(&(n + dn, m + dm)) {
                let a = if dn > 0 { n } else { m } as f64;
                couplings.push((k, l, ((a + 1.0) * (a + 2.0)).sqrt() * unit));
            }
        }
    }
    (diag, couplings)
}

/// Most localized supermode of the family: the minimum-eigenvalue vector of
/// the position-variance operator. Returns the supermode and the variance
/// eigenvalue <x^2 + y^2> (m^2); the analytic waist is 2 sqrt(variance/2).
pub fn localized_supermode(basis: &ModeBasis) -> Result<(Supermode, f64)> {
    let (diag, couplings) = variance_matrix_elements(basis);
    let k = basis.len();
    let (variance, coeffs) = if k <= DENSE_EIG_LIMIT {
        let mut v = Array2::<f64>::zeros((k, k));
        for (i, d) in diag.iter().enumerate() {
            v[(i, i)] = *d;
        }
        for &(i, j, c) in &couplings {
            v[(i, j)] = c;
            v[(j, i)] = c;
        }
        let (vals, vecs) = v
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Convergence(format!("variance eigensolve failed: {e}")))?;
        let coeffs: Vec<Complex64> = (0..k)
            .map(|i| Complex64::new(vecs[(i, 0)], 0.0))
            .collect();
        (vals[0], coeffs)
    } else {
        let (val, vec) = lanczos_smallest(&diag, &couplings)?;
        (val, vec.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
    };
    let xi_hint = 2.0 * (variance / 2.0).sqrt();
    let grid = localized_measure_grid(basis, xi_hint)?;
    let supermode = Supermode::from_coefficients(basis, &coeffs, &grid)?;
    Ok((supermode, variance))
}

/// Compact measurement grid for a mode localized on scale `xi`. Second
/// moments converge slowly in the sidelobe tails, so the span reaches
/// 40 xi unless the family envelope ends sooner.
fn localized_measure_grid(basis: &ModeBasis, xi: f64) -> Result<GridSpec> {
    let pitch = basis.required_pitch().min(xi / 8.0);
    let span = (40.0 * xi).min(basis.required_extent());
    let side = ((span / pitch).ceil() as usize).max(64);
    GridSpec::square(side, pitch)
}

/// Smallest eigenpair of the sparse symmetric variance operator by Lanczos
/// iteration on sigma I - V with full reorthogonalization.
fn lanczos_smallest(
    diag: &[f64],
    couplings: &[(usize, usize, f64)],
) -> Result<(f64, Vec<f64>)> {
    let k = diag.len();
    // Gershgorin upper bound of V
    let mut radius = vec![0.0f64; k];
    for &(i, j, c) in couplings {
        radius[i] += c.abs();
        radius[j] += c.abs();
    }
    let sigma = diag
        .iter()
        .zip(radius.iter())
        .map(|(d, r)| d + r)
        .fold(f64::NEG_INFINITY, f64::max);
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..k {
            y[i] = (sigma - diag[i]) * x[i];
        }
        for &(i, j, c) in couplings {
            y[i] -= c * x[j];
            y[j] -= c * x[i];
        }
    };

    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut w = vec![0.0f64; k];
    for step in 0..LANCZOS_CAP {
        q.push(v.clone());
        apply(&v, &mut w);
        let a: f64 = v.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
        alpha.push(a);
        for (wi, vi) in w.iter_mut().zip(v.iter()) {
            *wi -= a * vi;
        }
        if let Some(b_prev) = beta.last() {
            let prev = &q[q.len() - 2];
            for (wi, pi) in w.iter_mut().zip(prev.iter()) {
                *wi -= b_prev * pi;
            }
        }
        // full reorthogonalization keeps the basis clean at high step count
        for qv in &q {
            let dot: f64 = qv.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
            for (wi, qi) in w.iter_mut().zip(qv.iter()) {
                *wi -= dot * qi;
            }
        }
        let b: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        // convergence check on the current tridiagonal every few steps
        if step >= 8 && (step % 4 == 0 || b < 1e-14 * sigma) {
            let (theta, s) = tridiag_top_eigen(&alpha, &beta)?;
            let resid = b * s.last().copied().unwrap_or(0.0).abs();
            if resid <= 1e-12 * sigma || b < 1e-14 * sigma {
                let mut x = vec![0.0f64; k];
                for (qv, si) in q.iter().zip(s.iter()) {
                    for (xi, qi) in x.iter_mut().zip(qv.iter()) {
                        *xi += si * qi;
                    }
                }
                let norm: f64 = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                for t in x.iter_mut() {
                    *t /= norm;
                }
                return Ok((sigma - theta, x));
            }
        }
        if b < 1e-300 {
            return Err(Error::Convergence(
                "Lanczos basis terminated before convergence".into(),
            ));
        }
        beta.push(b);
        for (vi, wi) in v.iter_mut().zip(w.iter()) {
            *vi = wi / b;
        }
    }
    Err(Error::Convergence(format!(
        "Lanczos did not converge within {LANCZOS_CAP} steps"
    )))
}

/// Largest eigenpair of a symmetric tridiagonal matrix (alpha diagonal,
/// beta subdiagonal).
fn tridiag_top_eigen(alpha: &[f64], beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = alpha.len();
    let mut t = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let (vals, vecs) = t
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Convergence(format!("tridiagonal eigensolve failed: {e}")))?;
    let top = m - 1;
    Ok((vals[top], (0..m).map(|i| vecs[(i, top)]).collect()))
}
