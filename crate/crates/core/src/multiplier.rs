//! Localized multipliers `m_t^{τ,j}(ξ)`: the Fourier transform of the Riesz kernel of ball
//! radius `t` multiplied by the dyadic bump `ψ_j`, and audits of their size and decay.
//!
//! Throughout, `t` is the ball RADIUS in frequency space (spectral level `λ = t^{2m}`), and
//! `dist = ||ξ| - t|`. With `σ_t(η) = (1 - (|η|/t)^{2m})^{iτ}` on `|η| < t`,
//!
//! ```text
//! m_t^{τ,j}(ξ) = (2π)^{-N/2} ∫_{|η|<t} σ_t(η) ψ̂_j(ξ - η) dη,   ψ̂_j(ζ) = 2^{jN} ψ̂(2^j ζ),
//! ```
//!
//! which is the unitary transform of `K_t ψ_j` where `K̂_t = σ_t`. Because `ψ_j` vanishes
//! near the origin, `∫ ψ̂_j = 0`; this cancellation is what makes the multiplier small away
//! from the sphere `|ξ| = t` on both sides.
//!
//! The integral is evaluated in polar coordinates around the origin: composite
//! Gauss-Legendre in `|η|`, with a logarithmically graded panel at the sphere when `τ ≠ 0`
//! (the symbol's phase winds infinitely often there), and the sphere average of the radial
//! `ψ̂_j` done per dimension.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::decomposition::{psi_hat_profile, CutoffFamily, PsiHatResolution, PsiHatTable};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::symbols::symbol_from_gap;

/// Fewest quadrature nodes allowed per unit of `u = dist·2^j`.
pub const MIN_NODES_PER_UNIT_U: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Radial quadrature density, in nodes per `2^{-j}` of `|η|`.
    pub nodes_per_unit_u: usize,
    pub gl_order: usize,
    /// Width, in e-folds of `t - |η|`, of the graded panel at the sphere.
    pub graded_span: f64,
    /// Graded-panel Gauss-Legendre panels per e-fold.
    pub graded_panels_per_efold: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_unit_u: 16,
            gl_order: 8,
            graded_span: 40.0,
            graded_panels_per_efold: 2.0,
        }
    }
}

impl QuadratureSpec {
    /// Doubles every density; used for refinement cross-checks.
    pub fn refined(&self) -> Self {
        Self {
            nodes_per_unit_u: self.nodes_per_unit_u * 2,
            graded_panels_per_efold: self.graded_panels_per_efold * 2.0,
            ..*self
        }
    }
}

pub struct MultiplierLab {
    family: CutoffFamily,
    dims: usize,
    table: PsiHatTable,
    quad: QuadratureSpec,
    gl: GaussLegendre,
}

impl std::fmt::Debug for MultiplierLab {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiplierLab")
            .field("family", &self.family)
            .field("dims", &self.dims)
            .field("quad", &self.quad)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma21Check {
    /// `|m_t^j(ξ)|`.
    pub lhs: f64,
    /// `∫_{|y| > dist·2^j} |ψ̂(y)| dy`.
    pub rhs: f64,
}

impl Lemma21Check {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSample {
    pub j: u32,
    pub tau: f64,
    pub m_order: u32,
    pub t_values: Vec<f64>,
    pub xi_radii: Vec<f64>,
    /// Row-major: `values[it * xi_radii.len() + ix]`.
    pub values: Vec<Complex64>,
}

impl MultiplierSample {
    pub fn get(&self, it: usize, ix: usize) -> Complex64 {
        self.values[it * self.xi_radii.len() + ix]
    }

    /// CSV with columns `j,tau,t,xi_radius,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "j,tau,t,xi_radius,re,im")?;
        for (it, t) in self.t_values.iter().enumerate() {
            for (ix, xi) in self.xi_radii.iter().enumerate() {
                let v = self.get(it, ix);
                writeln!(w, "{},{},{},{},{},{}", self.j, self.tau, t, xi, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Sweep over `(t, |ξ|)` used to build the decay envelope in `u = 1 + dist·2^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySweep {
    pub t_values: Vec<f64>,
    pub u_max: f64,
    /// Linear spacing in `u` below `linear_until`.
    pub linear_step: f64,
    pub linear_until: f64,
    /// Logarithmic density above `linear_until`.
    pub per_decade: usize,
    pub fit_range: (f64, f64),
    pub fit_points: usize,
}

impl Default for DecaySweep {
    fn default() -> Self {
        Self {
            t_values: vec![2.0, 4.0, 8.0],
            u_max: 1200.0,
            linear_step: 0.25,
            linear_until: 50.0,
            per_decade: 120,
            fit_range: (10.0, 1000.0),
            fit_points: 25,
        }
    }
}

impl DecaySweep {
    fn u_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut u = 1.0;
        while u < self.linear_until.min(self.u_max) {
            out.push(u);
            u += self.linear_step;
        }
        let start = self.linear_until.max(1.0);
        let decades = (self.u_max / start).log10();
        let count = (decades * self.per_decade as f64).ceil() as usize;
        for i in 0..=count {
            out.push(start * 10f64.powf(decades * i as f64 / count.max(1) as f64));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub j: u32,
    pub tau: f64,
    /// Envelope value at `u = 1` (on the sphere).
    pub fitted_c: f64,
    /// Minus the least-squares slope of `log envelope` against `log u` over `range`.
    pub fitted_n: f64,
    /// Largest absolute log-domain deviation of the envelope from the fitted line.
    pub residual: f64,
    pub intercept: f64,
    pub range: (f64, f64),
    pub points: usize,
    /// Best `ε₀ ∈ (0, 1]` for the shape `(1 + ε₀ (u - 1))^{-n}` and its exponent.
    pub epsilon0: f64,
    pub epsilon_n: f64,
    /// `(u, envelope)` pairs used in the fit.
    pub envelope: Vec<(f64, f64)>,
}

impl DecayFit {
    pub fn csv_header() -> &'static str {
        "j,tau,C,n,residual"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.j, self.tau, self.fitted_c, self.fitted_n, self.residual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    /// `|∂_t m_t^{τ,j}(ξ)|` by central difference with step `dt`.
    pub lhs: f64,
    /// Same with step `dt/2`.
    pub lhs_refined: f64,
    /// `2^j / (1 + ε₀ dist 2^j)^n`.
    pub rhs_shape: f64,
    pub dt: f64,
}

/// `(slope, intercept, max |residual|)` of the least-squares line through `pts`.
pub fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).abs())
        .fold(0.0, f64::max);
    (slope, intercept, resid)
}

fn check_common(j: u32, tau: f64, m_order: u32, t: f64, xi: f64) -> Result<()> {
    if j == 0 || j > 20 {
        return Err(Error::InvalidParameter(format!("dyadic index j must be in 1..=20, got {j}")));
    }
    if m_order == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    if !tau.is_finite() {
        return Err(Error::InvalidParameter("tau must be finite".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(Error::InvalidParameter(format!("|xi| must be >= 0, got {xi}")));
    }
    Ok(())
}

impl MultiplierLab {
    pub fn new(family: CutoffFamily, dims: usize) -> Result<Self> {
        Self::with_options(family, dims, PsiHatResolution::default(), QuadratureSpec::default())
    }

    pub fn with_options(
        family: CutoffFamily,
        dims: usize,
        resolution: PsiHatResolution,
        quad: QuadratureSpec,
    ) -> Result<Self> {
        if quad.nodes_per_unit_u < MIN_NODES_PER_UNIT_U {
            return Err(Error::Resolution(format!(
                "quadrature has {} nodes per unit of dist*2^j; at least {MIN_NODES_PER_UNIT_U} are needed to resolve the 2^-j scale",
                quad.nodes_per_unit_u
            )));
        }
        if quad.gl_order < 2 || quad.graded_span <= 0.0 || quad.graded_panels_per_efold <= 0.0 {
            return Err(Error::InvalidParameter(format!("bad quadrature spec {quad:?}")));
        }
        let table = psi_hat_profile(&family, dims, resolution)?;
        Ok(Self {
            family,
            dims,
            table,
            quad,
            gl: GaussLegendre::new(quad.gl_order),
        })
    }

    /// Same ψ̂ table with a different quadrature density.
    pub fn with_quadrature(&self, quad: QuadratureSpec) -> Result<Self> {
        if quad.nodes_per_unit_u < MIN_NODES_PER_UNIT_U {
            return Err(Error::Resolution(format!(
                "quadrature has {} nodes per unit of dist*2^j; at least {MIN_NODES_PER_UNIT_U} are needed",
                quad.nodes_per_unit_u
            )));
        }
        Ok(Self {
            family: self.family,
            dims: self.dims,
            table: self.table.clone(),
            quad,
            gl: GaussLegendre::new(quad.gl_order),
        })
    }

    pub fn family(&self) -> &CutoffFamily {
        &self.family
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn table(&self) -> &PsiHatTable {
        &self.table
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    /// `∫_{S^{N-1}} ψ̂_j(|ξ - ρω|) dω` for `|ξ| = xi`.
    fn sphere_average(&self, j: u32, xi: f64, rho: f64) -> f64 {
        let table = &self.table;
        match self.dims {
            1 => table.eval_dilated(j, xi - rho) + table.eval_dilated(j, xi + rho),
            2 => {
                if xi == 0.0 || rho == 0.0 {
                    return 2.0 * PI * table.eval_dilated(j, xi.max(rho));
                }
                // entire, π-symmetric integrand in θ: trapezoid on [0, π], doubled
                let scale = 2f64.powi(j as i32) * self.family.outer();
                let half = (2.0 * scale * (xi * rho).sqrt()).ceil() as usize + 24;
                let dtheta = PI / half as f64;
                let mut acc = 0.0;
                for k in 0..=half {
                    let c = (k as f64 * dtheta).cos();
                    let d2 = (xi * xi + rho * rho - 2.0 * xi * rho * c).max(0.0);
                    let w = if k == 0 || k == half { 0.5 } else { 1.0 };
                    acc += w * table.eval_dilated(j, d2.sqrt());
                }
                2.0 * acc * dtheta
            }
            3 => {
                if xi == 0.0 || rho == 0.0 {
                    return 4.0 * PI * table.eval_dilated(j, xi.max(rho));
                }
                // (2π / (|ξ|ρ)) ∫_{||ξ|-ρ|}^{|ξ|+ρ} ψ̂_j(s) s ds
                let lo = (xi - rho).abs();
                let hi = xi + rho;
                let width = self.panel_width(j);
                let panels = ((hi - lo) / width).ceil().max(1.0) as usize;
                let s: f64 = self.gl.integrate(lo, hi, panels, |s| table.eval_dilated(j, s) * s);
                2.0 * PI * s / (xi * rho)
            }
            _ => unreachable!(),
        }
    }

    fn panel_width(&self, j: u32) -> f64 {
        self.quad.gl_order as f64 / self.quad.nodes_per_unit_u as f64 / 2f64.powi(j as i32)
    }

    pub fn compute_multiplier(&self, j: u32, tau: f64, m_order: u32, t: f64, xi_radius: f64) -> Result<Complex64> {
        check_common(j, tau, m_order, t, xi_radius)?;
        let dims = self.dims as i32;
        let two_m = 2.0 * m_order as f64;
        let width = self.panel_width(j);

        let radial = |rho: f64, sigma: Complex64| -> Complex64 {
            sigma * (rho.powi(dims - 1) * self.sphere_average(j, xi_radius, rho))
        };

        let graded = tau != 0.0;
        let delta = if graded { width.min(0.5 * t) } else { 0.0 };
        let body_end = t - delta;
        let panels = (body_end / width).ceil().max(1.0) as usize;
        let mut acc: Complex64 = self.gl.integrate(0.0, body_end, panels, |rho| {
            let gap = 1.0 - (rho / t).powf(two_m);
            radial(rho, symbol_from_gap(gap, tau))
        });

        if graded {
            // ρ = t - e^w on w ∈ [ln δ - span, ln δ]; the gap 1 - (ρ/t)^{2m} is formed from
            // s = t - ρ directly to keep relative accuracy as s → 0.
            let w_hi = delta.ln();
            let w_lo = w_hi - self.quad.graded_span;
            let graded_panels = (self.quad.graded_span * self.quad.graded_panels_per_efold).ceil() as usize;
            acc += self.gl.integrate(w_lo, w_hi, graded_panels, |w| {
                let s = w.exp();
                let rho = t - s;
                let gap = -(two_m * (-s / t).ln_1p()).exp_m1();
                radial(rho, symbol_from_gap(gap, tau)) * s
            });
        }

        Ok(acc * (2.0 * PI).powf(-(self.dims as f64) / 2.0))
    }

    pub fn lemma21_check(&self, j: u32, t: f64, xi_radius: f64) -> Result<Lemma21Check> {
        let lhs = self.compute_multiplier(j, 0.0, 1, t, xi_radius)?.norm();
        let dist = (xi_radius - t).abs();
        let rhs = self.table.tail_abs_integral(dist * 2f64.powi(j as i32));
        Ok(Lemma21Check { lhs, rhs })
    }

    pub fn sample(
        &self,
        j: u32,
        tau: f64,
        m_order: u32,
        t_values: &[f64],
        xi_radii: &[f64],
    ) -> Result<MultiplierSample> {
        if t_values.windows(2).any(|w| w[1] <= w[0]) || xi_radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("sample axes must be strictly increasing".into()));
        }
        let pairs: Vec<(f64, f64)> = t_values
            .iter()
            .flat_map(|&t| xi_radii.iter().map(move |&x| (t, x)))
            .collect();
        let values = pairs
            .par_iter()
            .map(|&(t, x)| self.compute_multiplier(j, tau, m_order, t, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiplierSample {
            j,
            tau,
            m_order,
            t_values: t_values.to_vec(),
            xi_radii: xi_radii.to_vec(),
            values,
        })
    }

    /// `(u, |m|)` over the sweep, both sides of the sphere for every `t`.
    pub fn decay_samples(&self, j: u32, tau: f64, m_order: u32, sweep: &DecaySweep) -> Result<Vec<(f64, f64)>> {
        let scale = 2f64.powi(j as i32);
        let mut points = Vec::new();
        for &t in &sweep.t_values {
            for u in sweep.u_values() {
                let dist = (u - 1.0) / scale;
                points.push((u, t, t + dist));
                if dist > 0.0 && dist <= t {
                    points.push((u, t, t - dist));
                }
            }
        }
        points
            .par_iter()
            .map(|&(u, t, xi)| Ok((u, self.compute_multiplier(j, tau, m_order, t, xi)?.norm())))
            .collect()
    }

    pub fn lemma22_decay_fit(&self, j: u32, tau: f64, m_order: u32, sweep: &DecaySweep) -> Result<DecayFit> {
        let (fit_lo, fit_hi) = sweep.fit_range;
        if !(fit_lo >= 1.0 && fit_hi > fit_lo) {
            return Err(Error::InvalidParameter(format!("bad fit range {:?}", sweep.fit_range)));
        }
        if sweep.u_max < fit_hi {
            return Err(Error::InvalidParameter(format!(
                "sweep reaches u = {} but the fit needs u up to {}",
                sweep.u_max, fit_hi
            )));
        }
        if sweep.fit_points < 12 {
            return Err(Error::InvalidParameter("decay fit needs >= 12 points".into()));
        }
        let mut samples = self.decay_samples(j, tau, m_order, sweep)?;
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        // monotone upper envelope: env(u) = max_{u' >= u} |m(u')|
        let mut env = vec![0.0; samples.len()];
        let mut run = 0.0f64;
        for i in (0..samples.len()).rev() {
            run = run.max(samples[i].1);
            env[i] = run;
        }
        let env_at = |u: f64| -> f64 {
            let idx = samples.partition_point(|s| s.0 < u);
            env[idx.min(env.len() - 1)]
        };
        let fitted_c = env[0];

        let ratio = (fit_hi / fit_lo).ln();
        let envelope: Vec<(f64, f64)> = (0..sweep.fit_points)
            .map(|i| {
                let u = fit_lo * (ratio * i as f64 / (sweep.fit_points - 1) as f64).exp();
                (u, env_at(u))
            })
            .collect();
        if envelope.iter().any(|&(_, e)| !(e > 0.0)) {
            return Err(Error::Resolution(
                "decay envelope reached exact zero inside the fit range".into(),
            ));
        }
        let loglog: Vec<(f64, f64)> = envelope.iter().map(|&(u, e)| (u.ln(), e.ln())).collect();
        let (slope, intercept, residual) = least_squares_line(&loglog);

        let mut best = (f64::INFINITY, 1.0, -slope);
        for k in 1..=100 {
            let eps = k as f64 / 100.0;
            let pts: Vec<(f64, f64)> = envelope
                .iter()
                .map(|&(u, e)| ((1.0 + eps * (u - 1.0)).ln(), e.ln()))
                .collect();
            let (s, _, r) = least_squares_line(&pts);
            if r < best.0 {
                best = (r, eps, -s);
            }
        }

        Ok(DecayFit {
            j,
            tau,
            fitted_c,
            fitted_n: -slope,
            residual,
            intercept,
            range: sweep.fit_range,
            points: envelope.len(),
            epsilon0: best.1,
            epsilon_n: best.2,
            envelope,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn lemma23_derivative_check(
        &self,
        j: u32,
        tau: f64,
        m_order: u32,
        t: f64,
        xi_radius: f64,
        dt: Option<f64>,
        fit: &DecayFit,
    ) -> Result<DerivativeCheck> {
        if !(t > 1.0) {
            return Err(Error::InvalidParameter(format!("derivative check needs t > 1, got {t}")));
        }
        let dt = dt.unwrap_or(1e-4 * t);
        if !(dt > 0.0 && dt < 0.5 * t) {
            return Err(Error::InvalidParameter(format!("dt must lie in (0, t/2), got {dt}")));
        }
        let diff = |h: f64| -> Result<f64> {
            let plus = self.compute_multiplier(j, tau, m_order, t + h, xi_radius)?;
            let minus = self.compute_multiplier(j, tau, m_order, t - h, xi_radius)?;
            Ok(((plus - minus) / (2.0 * h)).norm())
        };
        let lhs = diff(dt)?;
        let lhs_refined = diff(dt / 2.0)?;
        let change = (lhs - lhs_refined).abs() / lhs_refined.max(f64::MIN_POSITIVE);
        if change > 0.01 {
            return Err(Error::NotConverged {
                relative_change: change,
            });
        }
        let scale = 2f64.powi(j as i32);
        let dist = (xi_radius - t).abs();
        let rhs_shape = scale / (1.0 + fit.epsilon0 * dist * scale).powf(fit.epsilon_n);
        Ok(DerivativeCheck {
            lhs,
            lhs_refined,
            rhs_shape,
            dt,
        })
    }
}
