//! Smooth cutoff `φ`, annular bump `ψ(x) = φ(|x|) - φ(2|x|)`, its dyadic dilates
//! `ψ_j(x) = ψ(x/2^j)`, and a numerically tabulated radial profile of `ψ̂`.
//!
//! For a localization radius `r ∈ (0, 3)` the cutoff plateau ends at `a = (3-r)/3` and the
//! support ends at `b = 2(3-r)/3 = 2a`, so `χ_a ≤ φ ≤ χ_b`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{forward_transform, GridSpec, SpatialField, MAX_GRID_POINTS};
use crate::quadrature::{unit_sphere_area, GaussLegendre};

/// Smooth monotone step on [0, 1] that fills the gap between the plateau and the support edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionProfile {
    /// `s(u) = B(u) / (B(u) + B(1-u))`, `B(u) = exp(-1/u)` for `u > 0`, else 0.
    ExpBump,
}

impl TransitionProfile {
    pub fn name(&self) -> &'static str {
        match self {
            TransitionProfile::ExpBump => "exp_bump",
        }
    }

    /// Rises from 0 at `u = 0` to 1 at `u = 1`; all derivatives vanish at both ends.
    #[inline]
    pub fn step(&self, u: f64) -> f64 {
        match self {
            TransitionProfile::ExpBump => {
                let bump = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    let p = bump(u);
                    p / (p + bump(1.0 - u))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffFamily {
    r: f64,
    a: f64,
    b: f64,
    profile: TransitionProfile,
}

impl CutoffFamily {
    pub fn new(r: f64) -> Result<Self> {
        Self::with_profile(r, TransitionProfile::ExpBump)
    }

    pub fn with_profile(r: f64, profile: TransitionProfile) -> Result<Self> {
        if !(r > 0.0 && r < 3.0) {
            return Err(Error::InvalidParameter(format!(
                "localization radius r must lie in (0, 3), got {r}"
            )));
        }
        let a = (3.0 - r) / 3.0;
        Ok(Self {
            r,
            a,
            b: 2.0 * a,
            profile,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// End of the plateau `φ = 1`.
    pub fn inner(&self) -> f64 {
        self.a
    }

    /// Start of the zero region `φ = 0`.
    pub fn outer(&self) -> f64 {
        self.b
    }

    pub fn profile(&self) -> TransitionProfile {
        self.profile
    }

    #[inline]
    pub(crate) fn phi_unchecked(&self, t: f64) -> f64 {
        if t <= self.a {
            1.0
        } else if t >= self.b {
            0.0
        } else {
            self.profile.step((self.b - t) / (self.b - self.a))
        }
    }

    pub fn phi(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("phi needs t >= 0, got {t}")));
        }
        Ok(self.phi_unchecked(t))
    }

    /// Radial profile of `ψ`: `φ(ρ) - φ(2ρ)`.
    #[inline]
    pub fn psi_radial(&self, rho: f64) -> f64 {
        self.phi_unchecked(rho) - self.phi_unchecked(2.0 * rho)
    }

    /// Radial profile of `ψ_j`: `φ(ρ/2^j) - φ(ρ/2^{j-1})`.
    #[inline]
    pub fn psi_j_radial(&self, j: u32, rho: f64) -> f64 {
        let scale = 2f64.powi(j as i32);
        self.phi_unchecked(rho / scale) - self.phi_unchecked(2.0 * rho / scale)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn phi(fam: &CutoffFamily, t: f64) -> Result<f64> {
    fam.phi(t)
}

pub fn psi_j(fam: &CutoffFamily, j: u32, x: &[f64]) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidParameter("dyadic index j must be >= 1".into()));
    }
    Ok(fam.psi_j_radial(j, norm(x)))
}

/// `φ(|x|) + Σ_{j=1}^{J} ψ_j(x) - φ(|x|/2^J)`, which telescopes to zero.
pub fn partition_residual(fam: &CutoffFamily, x: &[f64], levels: u32) -> Result<f64> {
    if levels == 0 {
        return Err(Error::InvalidParameter("J must be >= 1".into()));
    }
    let rho = norm(x);
    let mut acc = fam.phi_unchecked(rho);
    for j in 1..=levels {
        acc += fam.psi_j_radial(j, rho);
    }
    Ok(acc - fam.phi_unchecked(rho / 2f64.powi(levels as i32)))
}

/// Grid used to tabulate `ψ̂`: spacing `b / samples_per_outer_radius`, `2^log2_len` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiHatResolution {
    pub samples_per_outer_radius: usize,
    pub log2_len: u32,
}

impl Default for PsiHatResolution {
    fn default() -> Self {
        Self {
            samples_per_outer_radius: 2048,
            log2_len: 20,
        }
    }
}

/// Radial samples `ψ̂(ρ_i)`, `ρ_i = i·Δρ`, for the unitary N-dimensional transform
/// `ψ̂(ξ) = (2π)^{-N/2} ∫ ψ(x) e^{-i(x,ξ)} dx`.
#[derive(Debug, Clone)]
pub struct PsiHatTable {
    dims: usize,
    step: f64,
    values: Vec<f64>,
    imag_max: f64,
    // tail[i] = |S^{N-1}| ∫_{ρ_i}^{ρ_last} |ψ̂(ρ)| ρ^{N-1} dρ (trapezoid)
    tail: Vec<f64>,
}

const INTERP_POINTS: usize = 8;
// (-1)^k C(7, k)
const BARY_WEIGHTS: [f64; INTERP_POINTS] = [1.0, -7.0, 21.0, -35.0, 35.0, -21.0, 7.0, -1.0];

impl PsiHatTable {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_radius(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    /// Largest imaginary part seen in the raw transform (zero for exact symmetry).
    pub fn imag_max(&self) -> f64 {
        self.imag_max
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `ψ̂(ρ)` by 8-point barycentric Lagrange interpolation; 0 beyond the table.
    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        let x = rho.abs() / self.step;
        let last = self.values.len() - 1;
        if x >= (last - INTERP_POINTS) as f64 {
            return 0.0;
        }
        let base = x.floor() as isize - 3;
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, w) in BARY_WEIGHTS.iter().enumerate() {
            let node = base + k as isize;
            let diff = x - node as f64;
            // ψ̂ is even, so negative nodes reflect.
            let v = self.values[node.unsigned_abs()];
            if diff == 0.0 {
                return v;
            }
            let t = w / diff;
            num += t * v;
            den += t;
        }
        num / den
    }

    /// `ψ̂_j(ζ) = 2^{jN} ψ̂(2^j |ζ|)`.
    #[inline]
    pub fn eval_dilated(&self, j: u32, zeta: f64) -> f64 {
        let s = 2f64.powi(j as i32);
        s.powi(self.dims as i32) * self.eval(s * zeta)
    }

    /// `∫_{|y| > ρ0} |ψ̂(y)| dy` over `R^N` (trapezoid on the table).
    pub fn tail_abs_integral(&self, rho0: f64) -> f64 {
        let rho0 = rho0.max(0.0);
        let x = rho0 / self.step;
        let last = self.values.len() - 1;
        if x >= last as f64 {
            return 0.0;
        }
        let i = x.floor() as usize;
        let integrand = |rho: f64, v: f64| v.abs() * rho.powi(self.dims as i32 - 1);
        let lo = integrand(i as f64 * self.step, self.values[i]);
        let hi = integrand((i + 1) as f64 * self.step, self.values[i + 1]);
        let frac = x - i as f64;
        let at = lo + (hi - lo) * frac;
        let partial = 0.5 * (at + hi) * (1.0 - frac) * self.step * unit_sphere_area(self.dims);
        partial + self.tail[i + 1]
    }

    /// Decay exponent `l` of the monotone envelope `max_{ρ' ≥ ρ} |ψ̂(ρ')|` against `1 + ρ`,
    /// fitted by least squares in log-log coordinates over the last decade before the
    /// envelope falls to `floor · peak`.
    pub fn tail_decay_exponent(&self, floor: f64) -> Option<f64> {
        let peak = self.peak();
        let mut env = vec![0.0; self.values.len()];
        let mut run = 0.0f64;
        for i in (0..self.values.len()).rev() {
            run = run.max(self.values[i].abs());
            env[i] = run;
        }
        let stop = env.iter().position(|&e| e < floor * peak)?;
        let rho_hi = stop as f64 * self.step;
        let rho_lo = rho_hi / 10.0;
        let pts: Vec<(f64, f64)> = (0..stop)
            .map(|i| (i as f64 * self.step, env[i]))
            .filter(|(rho, _)| *rho >= rho_lo)
            .map(|(rho, e)| ((1.0 + rho).ln(), e.ln()))
            .collect();
        if pts.len() < 12 {
            return None;
        }
        let (slope, _, _) = crate::multiplier::least_squares_line(&pts);
        Some(-slope)
    }

    /// Two-column CSV `rho,psi_hat_real`.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> Result<()> {
        writeln!(w, "rho,psi_hat_real")?;
        for (i, v) in self.values.iter().enumerate().step_by(stride.max(1)) {
            writeln!(w, "{},{}", i as f64 * self.step, v)?;
        }
        Ok(())
    }
}

/// Projection of the radial `ψ` onto one axis: `P(s) = ∫_{R^{N-1}} ψ(sqrt(s² + |y|²)) dy`.
/// By the projection-slice identity, `ψ̂_N(ρ e₁) = (2π)^{-(N-1)/2} · (1D unitary transform of P)(ρ)`.
fn axis_projection(fam: &CutoffFamily, dims: usize, s: f64, gl: &GaussLegendre) -> f64 {
    let b = fam.outer();
    let s = s.abs();
    if s >= b {
        return 0.0;
    }
    match dims {
        1 => fam.psi_radial(s),
        2 => {
            let ymax = (b * b - s * s).sqrt();
            2.0 * gl.integrate(0.0, ymax, 64, |y: f64| fam.psi_radial((s * s + y * y).sqrt()))
        }
        3 => 2.0 * PI * gl.integrate(s, b, 64, |r: f64| fam.psi_radial(r) * r),
        _ => unreachable!(),
    }
}

pub fn psi_hat_profile(fam: &CutoffFamily, dims: usize, res: PsiHatResolution) -> Result<PsiHatTable> {
    if !(1..=3).contains(&dims) {
        return Err(Error::InvalidParameter(format!("dims must be 1..=3, got {dims}")));
    }
    let n = 1usize
        .checked_shl(res.log2_len)
        .filter(|&n| n <= MAX_GRID_POINTS)
        .ok_or(Error::CapExceeded {
            what: "psi-hat table length",
            requested: 1usize.checked_shl(res.log2_len).unwrap_or(usize::MAX),
            cap: MAX_GRID_POINTS,
        })?;
    if res.samples_per_outer_radius < 64 {
        return Err(Error::Resolution(format!(
            "need >= 64 samples per outer radius, got {}",
            res.samples_per_outer_radius
        )));
    }
    let h = fam.outer() / res.samples_per_outer_radius as f64;
    let extent = n as f64 * h;
    // support [-b, b] must sit inside the cube with margin >= 4b on each side
    if extent / 2.0 < 5.0 * fam.outer() {
        return Err(Error::Resolution(format!(
            "table grid half-width {} is below 5x the outer radius {}",
            extent / 2.0,
            fam.outer()
        )));
    }
    let grid = GridSpec::new(1, n, extent)?;
    let gl = GaussLegendre::new(8);
    let half = n / 2;
    let support = res.samples_per_outer_radius + 1;
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..support.min(half) {
        let v = axis_projection(fam, dims, k as f64 * h, &gl);
        samples[half + k] = Complex64::new(v, 0.0);
        if k > 0 {
            samples[half - k] = Complex64::new(v, 0.0);
        }
    }
    let field = SpatialField::new(grid, samples)?;
    let coeffs = forward_transform(&field)?;
    let weight = grid.continuum_weight() * (2.0 * PI).powf(-((dims - 1) as f64) / 2.0);
    let mut values = Vec::with_capacity(half);
    let mut imag_max = 0.0f64;
    for q in 0..half {
        let z = coeffs.coeffs()[half + q] * weight;
        imag_max = imag_max.max(z.im.abs());
        values.push(z.re);
    }

    let step = grid.frequency_step();
    let area = unit_sphere_area(dims);
    let mut tail = vec![0.0; values.len()];
    for i in (0..values.len() - 1).rev() {
        let f = |k: usize| values[k].abs() * (k as f64 * step).powi(dims as i32 - 1);
        tail[i] = tail[i + 1] + 0.5 * (f(i) + f(i + 1)) * step * area;
    }

    Ok(PsiHatTable {
        dims,
        step,
        values,
        imag_max,
        tail,
    })
}
