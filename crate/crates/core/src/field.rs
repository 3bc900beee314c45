//! Sampled complex fields on the periodized cube `[-L/2, L/2)^N` and their
//! unitary discrete Fourier transforms.
//!
//! # Layout
//!
//! Both spatial samples and spectral coefficients are stored row-major with the
//! last axis varying fastest. Along every axis the storage index `i ∈ [0, n)`
//! maps to the signed lattice coordinate `k = i - n/2 ∈ [-n/2, n/2)`:
//!
//! * spatial sample `i` sits at `x = k·h`, with `h = L/n`;
//! * spectral coefficient `i` sits at `ξ = 2πk/L`.
//!
//! # Normalization
//!
//! The forward transform is
//!
//! ```text
//! c(ξ_q) = n^{-N/2} Σ_k f(x_k) exp(-i x_k·ξ_q),      x_k·ξ_q = 2π k·q / n
//! ```
//!
//! which is unitary, so `‖c‖₂ = ‖f‖₂` exactly in exact arithmetic. For `f`
//! supported inside the cube the continuum transform
//! `(2π)^{-N/2} ∫ f(x) e^{-i(x,ξ)} dx` is approximated by
//! `GridSpec::continuum_weight() · c(ξ_q)` with weight `(L / sqrt(2π n))^N`.
//! The inverse applies the conjugate kernel with the same `n^{-N/2}` factor.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Hard cap on total lattice points of any grid.
pub const MAX_GRID_POINTS: usize = 1 << 24;

/// Default cap on total lattice points accepted by [`direct_transform_reference`].
pub const DIRECT_TRANSFORM_CAP: usize = 4096;

const PARALLEL_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dims: usize,
    n: usize,
    extent: f64,
}

impl GridSpec {
    pub fn new(dims: usize, samples_per_dim: usize, extent: f64) -> Result<Self> {
        if !(1..=3).contains(&dims) {
            return Err(Error::InvalidGrid(format!("dims must be 1..=3, got {dims}")));
        }
        if samples_per_dim < 4 || !samples_per_dim.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "samples per dimension must be even and >= 4, got {samples_per_dim}"
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {extent}")));
        }
        let total = samples_per_dim
            .checked_pow(dims as u32)
            .unwrap_or(usize::MAX);
        if total > MAX_GRID_POINTS {
            return Err(Error::CapExceeded {
                what: "grid points",
                requested: total,
                cap: MAX_GRID_POINTS,
            });
        }
        Ok(Self {
            dims,
            n: samples_per_dim,
            extent,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn samples_per_dim(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n as f64
    }

    /// Lattice spacing of the frequency grid, `2π/L`.
    pub fn frequency_step(&self) -> f64 {
        2.0 * PI / self.extent
    }

    /// Largest frequency magnitude along one axis, `πn/L`.
    pub fn nyquist_radius(&self) -> f64 {
        PI * self.n as f64 / self.extent
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(L / sqrt(2π n))^N`: multiply a coefficient by this to approximate the continuum transform.
    pub fn continuum_weight(&self) -> f64 {
        (self.extent / (2.0 * PI * self.n as f64).sqrt()).powi(self.dims as i32)
    }

    /// Signed lattice coordinates of a flat index; unused axes are zero.
    pub fn lattice(&self, flat: usize) -> [i64; 3] {
        let mut out = [0i64; 3];
        let mut rest = flat;
        let half = (self.n / 2) as i64;
        for d in (0..self.dims).rev() {
            out[d] = (rest % self.n) as i64 - half;
            rest /= self.n;
        }
        out
    }

    pub fn flat_index(&self, lattice: &[i64]) -> Option<usize> {
        if lattice.len() != self.dims {
            return None;
        }
        let half = (self.n / 2) as i64;
        let mut flat = 0usize;
        for &k in lattice {
            let i = k + half;
            if i < 0 || i >= self.n as i64 {
                return None;
            }
            flat = flat * self.n + i as usize;
        }
        Some(flat)
    }

    /// `Σ k_d²` for the lattice point at `flat`.
    pub fn lattice_norm_sq(&self, flat: usize) -> u64 {
        self.lattice(flat)[..self.dims]
            .iter()
            .map(|&k| (k * k) as u64)
            .sum()
    }

    pub fn position(&self, flat: usize) -> [f64; 3] {
        let h = self.spacing();
        let k = self.lattice(flat);
        [k[0] as f64 * h, k[1] as f64 * h, k[2] as f64 * h]
    }

    /// `|x_k|`, computed as `h·sqrt(Σk²)` so that points on one lattice shell agree bitwise.
    pub fn radius(&self, flat: usize) -> f64 {
        self.spacing() * (self.lattice_norm_sq(flat) as f64).sqrt()
    }

    pub fn frequency(&self, flat: usize) -> [f64; 3] {
        let s = self.frequency_step();
        let k = self.lattice(flat);
        [k[0] as f64 * s, k[1] as f64 * s, k[2] as f64 * s]
    }

    /// `|ξ_k|²`, computed as `(2π/L)²·Σk²` so that points on one lattice shell agree bitwise.
    pub fn frequency_norm_sq(&self, flat: usize) -> f64 {
        let s = self.frequency_step();
        s * s * self.lattice_norm_sq(flat) as f64
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

fn check_finite(values: &[Complex64]) -> Result<()> {
    match values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    spec: GridSpec,
    samples: Vec<Complex64>,
}

impl SpatialField {
    pub fn new(spec: GridSpec, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != spec.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} samples, got {}",
                spec.len(),
                samples.len()
            )));
        }
        check_finite(&samples)?;
        Ok(Self { spec, samples })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            samples: vec![Complex64::new(0.0, 0.0); spec.len()],
        }
    }

    /// Samples `f` at every lattice point; `f` receives the first `dims` coordinates of `x_k`.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let samples = (0..spec.len())
            .map(|flat| {
                let x = spec.position(flat);
                f(&x[..spec.dims()])
            })
            .collect();
        Self::new(spec, samples)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Unweighted Euclidean norm of the sample vector.
    pub fn l2_norm(&self) -> f64 {
        l2(&self.samples)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            spec: self.spec,
            samples: self.samples.iter().map(|z| z * c).collect(),
        }
    }

    /// Periodic shift by a lattice vector: the output at `k + shift` is the input at `k`.
    pub fn shifted(&self, shift: &[i64]) -> Result<Self> {
        if shift.len() != self.spec.dims() {
            return Err(Error::InvalidParameter(format!(
                "shift has {} components, grid has {} dims",
                shift.len(),
                self.spec.dims()
            )));
        }
        let n = self.spec.samples_per_dim() as i64;
        let half = n / 2;
        let mut out = vec![Complex64::new(0.0, 0.0); self.samples.len()];
        for (flat, z) in self.samples.iter().enumerate() {
            let k = self.spec.lattice(flat);
            let moved: Vec<i64> = (0..shift.len())
                .map(|d| (k[d] + shift[d] + half).rem_euclid(n) - half)
                .collect();
            let target = self.spec.flat_index(&moved).expect("wrapped index is in range");
            out[target] = *z;
        }
        Ok(Self {
            spec: self.spec,
            samples: out,
        })
    }

    /// Same samples reinterpreted on a grid with identical lattice shape but different extent.
    pub fn with_extent(&self, extent: f64) -> Result<Self> {
        let spec = GridSpec::new(self.spec.dims(), self.spec.samples_per_dim(), extent)?;
        Ok(Self {
            spec,
            samples: self.samples.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    spec: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(spec: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != spec.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} coefficients, got {}",
                spec.len(),
                coeffs.len()
            )));
        }
        check_finite(&coeffs)?;
        Ok(Self { spec, coeffs })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            coeffs: vec![Complex64::new(0.0, 0.0); spec.len()],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn l2_norm(&self) -> f64 {
        l2(&self.coeffs)
    }
}

fn l2(values: &[Complex64]) -> f64 {
    values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// Cached FFT plans for one grid. Cheap to clone; reuse it across many transforms of
/// the same grid.
#[derive(Clone)]
pub struct FourierEngine {
    spec: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierEngine").field("spec", &self.spec).finish()
    }
}

impl FourierEngine {
    pub fn new(spec: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = spec.samples_per_dim();
        Self {
            spec,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn forward(&self, f: &SpatialField) -> Result<SpectralField> {
        self.spec.check_same(f.spec())?;
        let mut data = f.samples().to_vec();
        self.transform_in_place(&mut data, Direction::Forward);
        SpectralField::new(self.spec, data)
    }

    pub fn inverse(&self, g: &SpectralField) -> Result<SpatialField> {
        self.spec.check_same(g.spec())?;
        let mut data = g.coeffs().to_vec();
        self.transform_in_place(&mut data, Direction::Inverse);
        SpatialField::new(self.spec, data)
    }

    /// Unitary centered transform of raw data laid out as described in the module docs.
    pub(crate) fn inverse_raw(&self, data: &mut [Complex64]) {
        self.transform_in_place(data, Direction::Inverse);
    }

    fn transform_in_place(&self, data: &mut [Complex64], dir: Direction) {
        let spec = &self.spec;
        let n = spec.samples_per_dim();
        let dims = spec.dims();
        let plan = match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };

        // Centering: for even n, exp(∓2πi (i-n/2)(j-n/2)/n) equals the standard kernel
        // times (-1)^i (-1)^j (-1)^{n/2}, applied per axis.
        let global_sign = if (dims * n / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        let scale = (n as f64).powf(-(dims as f64) / 2.0);
        apply_checkerboard(data, spec, 1.0);

        for axis in 0..dims {
            let stride = n.pow((dims - 1 - axis) as u32);
            let block = n * stride;
            let process_block = |chunk: &mut [Complex64]| {
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
                for offset in 0..stride {
                    if stride == 1 {
                        plan.process_with_scratch(chunk, &mut scratch);
                        continue;
                    }
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = chunk[offset + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, v) in line.iter().enumerate() {
                        chunk[offset + i * stride] = *v;
                    }
                }
            };
            if data.len() >= PARALLEL_THRESHOLD {
                data.par_chunks_mut(block).for_each(process_block);
            } else {
                data.chunks_mut(block).for_each(process_block);
            }
        }

        apply_checkerboard(data, spec, global_sign * scale);
    }
}

/// Multiplies sample `flat` by `factor·(-1)^{Σ i_d}` where `i_d` are storage indices.
fn apply_checkerboard(data: &mut [Complex64], spec: &GridSpec, factor: f64) {
    let n = spec.samples_per_dim();
    let dims = spec.dims();
    let apply = |(flat, z): (usize, &mut Complex64)| {
        let mut rest = flat;
        let mut parity = 0usize;
        for _ in 0..dims {
            parity += rest % n;
            rest /= n;
        }
        let s = if parity.is_multiple_of(2) { factor } else { -factor };
        *z *= s;
    };
    if data.len() >= PARALLEL_THRESHOLD {
        data.par_iter_mut().enumerate().for_each(apply);
    } else {
        data.iter_mut().enumerate().for_each(apply);
    }
}

pub fn forward_transform(f: &SpatialField) -> Result<SpectralField> {
    FourierEngine::new(*f.spec()).forward(f)
}

pub fn inverse_transform(g: &SpectralField) -> Result<SpatialField> {
    FourierEngine::new(*g.spec()).inverse(g)
}

/// Brute-force evaluation of the forward transform by explicit summation over all
/// sample/frequency pairs, with the default cap of [`DIRECT_TRANSFORM_CAP`] points.
pub fn direct_transform_reference(f: &SpatialField) -> Result<SpectralField> {
    direct_transform_reference_with_cap(f, DIRECT_TRANSFORM_CAP)
}

pub fn direct_transform_reference_with_cap(f: &SpatialField, cap: usize) -> Result<SpectralField> {
    let spec = *f.spec();
    let total = spec.len();
    if total > cap {
        return Err(Error::CapExceeded {
            what: "direct transform points",
            requested: total,
            cap,
        });
    }
    let n = spec.samples_per_dim() as i64;
    let dims = spec.dims();
    // exp(-2πi r/n) for r in [0, n): the phase k·q is reduced mod n before lookup.
    let roots: Vec<Complex64> = (0..n)
        .map(|r| Complex64::from_polar(1.0, -2.0 * PI * r as f64 / n as f64))
        .collect();
    let lattices: Vec<[i64; 3]> = (0..total).map(|i| spec.lattice(i)).collect();
    let scale = (n as f64).powf(-(dims as f64) / 2.0);
    let coeffs = lattices
        .iter()
        .map(|q| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, sample) in lattices.iter().zip(f.samples()) {
                let dot: i64 = (0..dims).map(|d| k[d] * q[d]).sum();
                acc += sample * roots[dot.rem_euclid(n) as usize];
            }
            acc * scale
        })
        .collect();
    SpectralField::new(spec, coeffs)
}

/// Radial region selector for restricted norms. Boundary membership is explicit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialRegion {
    /// `|x| ≤ radius` when `inclusive`, else `|x| < radius`.
    Within { radius: f64, inclusive: bool },
    /// `|x| ≥ radius` when `inclusive`, else `|x| > radius`.
    Beyond { radius: f64, inclusive: bool },
}

impl RadialRegion {
    /// `|x| ≤ radius`.
    pub fn ball(radius: f64) -> Self {
        RadialRegion::Within {
            radius,
            inclusive: true,
        }
    }

    /// `|x| ≥ radius`.
    pub fn exterior(radius: f64) -> Self {
        RadialRegion::Beyond {
            radius,
            inclusive: true,
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            RadialRegion::Within { radius, .. } | RadialRegion::Beyond { radius, .. } => radius,
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        match *self {
            RadialRegion::Within { radius, inclusive } => {
                if inclusive {
                    r <= radius
                } else {
                    r < radius
                }
            }
            RadialRegion::Beyond { radius, inclusive } => {
                if inclusive {
                    r >= radius
                } else {
                    r > radius
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let r = self.radius();
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidParameter(format!("region radius must be >= 0, got {r}")));
        }
        Ok(())
    }
}

/// Riemann-sum norm `(Σ_{x_k ∈ region} |f(x_k)|² h^N)^{1/2}`.
pub fn restricted_l2_norm(f: &SpatialField, region: RadialRegion) -> Result<f64> {
    region.validate()?;
    let spec = f.spec();
    let cell = spec.spacing().powi(spec.dims() as i32);
    let sum: f64 = f
        .samples()
        .iter()
        .enumerate()
        .filter(|(flat, _)| region.contains(spec.radius(*flat)))
        .map(|(_, z)| z.norm_sqr())
        .sum();
    Ok((sum * cell).sqrt())
}

/// `max |f(x_k)|` over lattice points in the region; 0 when the region holds no point.
pub fn restricted_sup_norm(f: &SpatialField, region: RadialRegion) -> Result<f64> {
    region.validate()?;
    let spec = f.spec();
    Ok(f.samples()
        .iter()
        .enumerate()
        .filter(|(flat, _)| region.contains(spec.radius(*flat)))
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max))
}

// Binary fixture format: a 32-byte little-endian header
//   [0..8)   magic  b"PLXSPAT1" (spatial) or b"PLXSPEC1" (spectral)
//   [8..12)  dims   u32
//   [12..16) n      u32
//   [16..24) L      f64
//   [24..32) reserved, zero
// followed by n^N (re: f64, im: f64) pairs.

pub const SPATIAL_MAGIC: &[u8; 8] = b"PLXSPAT1";
pub const SPECTRAL_MAGIC: &[u8; 8] = b"PLXSPEC1";

fn write_raw<W: Write>(mut w: W, magic: &[u8; 8], spec: &GridSpec, values: &[Complex64]) -> Result<()> {
    let mut header = [0u8; 32];
    header[..8].copy_from_slice(magic);
    header[8..12].copy_from_slice(&(spec.dims() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(spec.samples_per_dim() as u32).to_le_bytes());
    header[16..24].copy_from_slice(&spec.extent().to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(values.len() * 16);
    for z in values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_raw<R: Read>(mut r: R, magic: &[u8; 8]) -> Result<(GridSpec, Vec<Complex64>)> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&header[..8]),
            String::from_utf8_lossy(magic)
        )));
    }
    let dims = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let extent = f64::from_le_bytes(header[16..24].try_into().unwrap());
    if header[24..].iter().any(|&b| b != 0) {
        return Err(Error::Format("reserved header bytes must be zero".into()));
    }
    let spec = GridSpec::new(dims, n, extent)?;
    let mut body = vec![0u8; spec.len() * 16];
    r.read_exact(&mut body)?;
    let values = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((spec, values))
}

impl SpatialField {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        write_raw(w, SPATIAL_MAGIC, &self.spec, &self.samples)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let (spec, values) = read_raw(r, SPATIAL_MAGIC)?;
        Self::new(spec, values)
    }
}

impl SpectralField {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        write_raw(w, SPECTRAL_MAGIC, &self.spec, &self.coeffs)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let (spec, values) = read_raw(r, SPECTRAL_MAGIC)?;
        Self::new(spec, values)
    }
}
