//! End-to-end audits: admissible test functions supported in `{|x| ≥ 3}`, the restricted
//! maximal-inequality ratio and its stability under refinement, and localization traces.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decomposition::TransitionProfile;
use crate::error::{Error, Result};
use crate::expansion::{convergence_profile, maximal_function_detailed, LambdaSchedule, ProfilePoint};
use crate::field::{
    restricted_l2_norm, FourierEngine, GridSpec, RadialRegion, SpatialField, SpectralField,
};
use crate::quadrature::{unit_sphere_area, GaussLegendre};

/// Radius of the ball on which admissible functions vanish.
pub const SUPPORT_RADIUS: f64 = 3.0;
/// Minimum distance kept between a support and the period boundary.
pub const MIN_MARGIN: f64 = 1.0;
pub const DEFAULT_EXTENT: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub enum TestFunctionKind {
    GaussianShell { center: f64, width: f64, amplitude: f64 },
    SmoothedAnnulusIndicator { edge_width: f64 },
    /// Random trigonometric polynomial on lattice frequencies `|ξ| ≤ bandwidth` (coefficient
    /// ℓ² norm `amplitude`), multiplied by the annulus window.
    RandomBandlimitedMasked { bandwidth: f64, seed: u64, amplitude: f64 },
    /// Compactly supported bump of radius `width` centered at `(center, 0, ..)`, scaled to
    /// continuum integral `mass`.
    NarrowBump { center: f64, width: f64, mass: f64 },
}

impl TestFunctionKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunctionKind::GaussianShell { .. } => "gaussian_shell",
            TestFunctionKind::SmoothedAnnulusIndicator { .. } => "smoothed_annulus_indicator",
            TestFunctionKind::RandomBandlimitedMasked { .. } => "random_bandlimited_masked",
            TestFunctionKind::NarrowBump { .. } => "narrow_bump",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionSpec {
    pub kind: TestFunctionKind,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Width of the window's rise and fall; `None` picks `min(0.5, (outer - inner)/4)`.
    pub taper: Option<f64>,
}

impl TestFunctionSpec {
    pub fn new(kind: TestFunctionKind, inner_radius: f64, outer_radius: f64) -> Self {
        Self {
            kind,
            inner_radius,
            outer_radius,
            taper: None,
        }
    }

    fn taper_width(&self) -> f64 {
        match (&self.kind, self.taper) {
            (TestFunctionKind::SmoothedAnnulusIndicator { edge_width }, _) => *edge_width,
            (_, Some(t)) => t,
            (_, None) => (0.25 * (self.outer_radius - self.inner_radius)).min(0.5),
        }
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        let (inner, outer) = (self.inner_radius, self.outer_radius);
        if !(inner.is_finite() && inner >= SUPPORT_RADIUS) {
            return Err(Error::InvalidParameter(format!(
                "inner_radius must be >= {SUPPORT_RADIUS}, got {inner}"
            )));
        }
        if !(outer.is_finite() && outer > inner) {
            return Err(Error::InvalidParameter(format!(
                "outer_radius must exceed inner_radius, got [{inner}, {outer}]"
            )));
        }
        let half = grid.extent() / 2.0;
        if outer + MIN_MARGIN > half {
            return Err(Error::InvalidParameter(format!(
                "support reaches |x| = {outer}; with margin {MIN_MARGIN} it must stay within L/2 = {half}"
            )));
        }
        let taper = self.taper_width();
        if !(taper > 0.0 && 2.0 * taper <= outer - inner) {
            return Err(Error::InvalidParameter(format!(
                "taper {taper} must be positive and at most half the annulus width {}",
                outer - inner
            )));
        }
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match self.kind {
            TestFunctionKind::GaussianShell { center, width, amplitude } => {
                positive("width", width)?;
                if !amplitude.is_finite() || !center.is_finite() {
                    return Err(Error::InvalidParameter("gaussian_shell parameters must be finite".into()));
                }
            }
            TestFunctionKind::SmoothedAnnulusIndicator { edge_width } => positive("edge_width", edge_width)?,
            TestFunctionKind::RandomBandlimitedMasked { bandwidth, amplitude, .. } => {
                positive("bandwidth", bandwidth)?;
                if bandwidth < grid.frequency_step() {
                    return Err(Error::InvalidParameter(format!(
                        "bandwidth {bandwidth} holds no nonzero lattice frequency (step {})",
                        grid.frequency_step()
                    )));
                }
                if !amplitude.is_finite() {
                    return Err(Error::InvalidParameter("amplitude must be finite".into()));
                }
            }
            TestFunctionKind::NarrowBump { center, width, mass } => {
                positive("width", width)?;
                if !mass.is_finite() {
                    return Err(Error::InvalidParameter("mass must be finite".into()));
                }
                if center - width < inner || center + width > outer {
                    return Err(Error::InvalidParameter(format!(
                        "narrow_bump support [{}, {}] leaves the annulus [{inner}, {outer}]",
                        center - width,
                        center + width
                    )));
                }
            }
        }
        Ok(())
    }

    /// Smooth radial window: 0 for `|x| ≤ inner` and `|x| ≥ outer`, 1 between the tapers.
    fn window(&self, rho: f64) -> f64 {
        let taper = self.taper_width();
        let step = |u: f64| TransitionProfile::ExpBump.step(u);
        step((rho - self.inner_radius) / taper) * step((self.outer_radius - rho) / taper)
    }
}

/// Unitary coefficients of `Σ_{|ξ_k| ≤ Ω} a_k e^{i ξ_k · x}` with `a_k` uniform in the unit
/// square, rescaled so `(Σ |a_k|²)^{1/2} = amplitude`. The draws run over the lattice box
/// `|k_d| ≤ Ω/step` in a fixed order, so every grid with the same `L` sees the same function.
fn bandlimited_coefficients(grid: &GridSpec, bandwidth: f64, seed: u64, amplitude: f64) -> Result<Vec<Complex64>> {
    let step = grid.frequency_step();
    let reach = (bandwidth / step).floor() as i64;
    if reach >= grid.samples_per_dim() as i64 / 2 {
        return Err(Error::InvalidParameter(format!(
            "bandwidth {bandwidth} reaches the grid's Nyquist radius {}",
            grid.nyquist_radius()
        )));
    }
    let dims = grid.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = Vec::new();
    let side = (2 * reach + 1) as usize;
    for idx in 0..side.pow(dims as u32) {
        let mut rest = idx;
        let mut k = [0i64; 3];
        for d in (0..dims).rev() {
            k[d] = (rest % side) as i64 - reach;
            rest /= side;
        }
        let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let norm_sq: i64 = k[..dims].iter().map(|v| v * v).sum();
        if (norm_sq as f64) * step * step <= bandwidth * bandwidth {
            drawn.push((k, z));
        }
    }
    let l2 = drawn.iter().map(|(_, z)| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = if l2 > 0.0 { amplitude / l2 } else { 0.0 };
    // unitary inverse carries n^{-N/2}
    let lift = (grid.samples_per_dim() as f64).powf(dims as f64 / 2.0);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (k, z) in drawn {
        let flat = grid.flat_index(&k[..dims]).expect("box lies inside the lattice");
        coeffs[flat] = z * (scale * lift);
    }
    Ok(coeffs)
}

/// Exact-bump integral `∫_{R^N} exp(-1/(1-|y|²)) dy` over the unit ball.
fn unit_bump_integral(dims: usize) -> f64 {
    let gl = GaussLegendre::new(16);
    let radial: f64 = gl.integrate(0.0, 1.0, 64, |s: f64| {
        if s >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - s * s)).exp() * s.powi(dims as i32 - 1)
        }
    });
    unit_sphere_area(dims) * radial
}

pub fn generate_test_function(spec: &TestFunctionSpec, grid: &GridSpec) -> Result<SpatialField> {
    spec.validate(grid)?;
    let dims = grid.dims();
    let field = match spec.kind {
        TestFunctionKind::GaussianShell { center, width, amplitude } => SpatialField::from_fn(*grid, |x| {
            let rho = norm(x);
            let g = (-(rho - center).powi(2) / (2.0 * width * width)).exp();
            Complex64::new(amplitude * g * spec.window(rho), 0.0)
        })?,
        TestFunctionKind::SmoothedAnnulusIndicator { .. } => {
            SpatialField::from_fn(*grid, |x| Complex64::new(spec.window(norm(x)), 0.0))?
        }
        TestFunctionKind::RandomBandlimitedMasked { bandwidth, seed, amplitude } => {
            let coeffs = bandlimited_coefficients(grid, bandwidth, seed, amplitude)?;
            let g = FourierEngine::new(*grid).inverse(&SpectralField::new(*grid, coeffs)?)?;
            let samples = g
                .samples()
                .iter()
                .enumerate()
                .map(|(flat, z)| z * spec.window(grid.radius(flat)))
                .collect();
            SpatialField::new(*grid, samples)?
        }
        TestFunctionKind::NarrowBump { center, width, mass } => {
            let height = mass / (width.powi(dims as i32) * unit_bump_integral(dims));
            SpatialField::from_fn(*grid, |x| {
                let d2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| if i == 0 { (v - center).powi(2) } else { v * v })
                    .sum::<f64>()
                    / (width * width);
                let v = if d2 < 1.0 { height * (-1.0 / (1.0 - d2)).exp() } else { 0.0 };
                Complex64::new(v, 0.0)
            })?
        }
    };
    // exact zeros inside the inner radius, whatever rounding did
    let mut samples = field.into_samples();
    for (flat, z) in samples.iter_mut().enumerate() {
        if grid.radius(flat) < spec.inner_radius {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    SpatialField::new(*grid, samples)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridProvenance {
    pub dims: usize,
    pub n: usize,
    pub extent: f64,
}

impl From<&GridSpec> for GridProvenance {
    fn from(g: &GridSpec) -> Self {
        Self {
            dims: g.dims(),
            n: g.samples_per_dim(),
            extent: g.extent(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleProvenance {
    pub mode: String,
    pub points: usize,
    pub refinement: usize,
}

impl From<&LambdaSchedule> for ScheduleProvenance {
    fn from(s: &LambdaSchedule) -> Self {
        Self {
            mode: s.mode().as_str().to_string(),
            points: s.len(),
            refinement: s.per_interval_refinement(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditResult {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    pub grid: GridProvenance,
    pub schedule: ScheduleProvenance,
}

impl AuditResult {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    /// Long-format rows `audit,metric,value`, with a header when `header` is set.
    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "audit,metric,value")?;
        }
        for (k, v) in &self.metrics {
            writeln!(w, "{},{},{}", self.name, k, v)?;
        }
        Ok(())
    }

    fn check_finite(self) -> Result<Self> {
        if let Some((k, v)) = self.metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("audit {} produced non-finite {k} = {v}", self.name)));
        }
        Ok(self)
    }
}

fn check_region(r: f64) -> Result<()> {
    if !(r > 0.0 && r < SUPPORT_RADIUS) {
        return Err(Error::InvalidParameter(format!(
            "audit radius r must satisfy 0 < r < {SUPPORT_RADIUS}, got {r}"
        )));
    }
    Ok(())
}

/// Rejects any nonzero sample with `|x| < 3`.
pub fn check_support(f: &SpatialField) -> Result<()> {
    let spec = f.spec();
    let offender = f
        .samples()
        .iter()
        .enumerate()
        .filter(|(flat, z)| z.norm() != 0.0 && spec.radius(*flat) < SUPPORT_RADIUS)
        .map(|(flat, z)| (spec.radius(flat), z.norm()))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match offender {
        Some((radius, magnitude)) => Err(Error::SupportViolation {
            radius,
            magnitude,
            bound: SUPPORT_RADIUS,
        }),
        None => Ok(()),
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 && rhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

pub fn theorem12_audit(f: &SpatialField, r: f64, sched: &LambdaSchedule, tau: f64, m_order: u32) -> Result<AuditResult> {
    check_region(r)?;
    check_support(f)?;
    let outcome = maximal_function_detailed(f, sched, tau, m_order)?;
    let lhs = restricted_l2_norm(&outcome.field, RadialRegion::ball(r))?.powi(2);
    let rhs = restricted_l2_norm(f, RadialRegion::exterior(SUPPORT_RADIUS))?.powi(2);
    let mut metrics = BTreeMap::new();
    metrics.insert("lhs".into(), lhs);
    metrics.insert("rhs".into(), rhs);
    metrics.insert("ratio".into(), ratio(lhs, rhs));
    metrics.insert("sampling_gap".into(), outcome.sampling_gap);
    metrics.insert("evaluations".into(), outcome.evaluations as f64);
    let mut params = BTreeMap::new();
    params.insert("r".into(), r.to_string());
    params.insert("tau".into(), tau.to_string());
    params.insert("m".into(), m_order.to_string());
    AuditResult {
        name: "theorem12".into(),
        params,
        metrics,
        grid: f.spec().into(),
        schedule: sched.into(),
    }
    .check_finite()
}

/// One resolution of a refinement ladder: grid size and per-interval schedule refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rung {
    pub n: usize,
    pub refinement: usize,
}

pub const DEFAULT_STABILITY_THRESHOLD: f64 = 1.5;

#[allow(clippy::too_many_arguments)]
pub fn theorem12_stability(
    family: &[TestFunctionSpec],
    dims: usize,
    extent: f64,
    r: f64,
    tau: f64,
    m_order: u32,
    ladder: &[Rung],
    threshold: f64,
) -> Result<AuditResult> {
    check_region(r)?;
    if ladder.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "refinement ladder needs >= 3 rungs, got {}",
            ladder.len()
        )));
    }
    if family.is_empty() {
        return Err(Error::InvalidParameter("test-function family is empty".into()));
    }
    if !(threshold >= 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must be >= 1, got {threshold}")));
    }
    let mut metrics = BTreeMap::new();
    let mut maxima = Vec::with_capacity(ladder.len());
    let mut last_sched = None;
    let mut last_grid = None;
    for (i, rung) in ladder.iter().enumerate() {
        let grid = GridSpec::new(dims, rung.n, extent)?;
        let sched = LambdaSchedule::exact_breakpoints(&grid, m_order, rung.refinement)?;
        let ratios = family
            .par_iter()
            .map(|spec| {
                let f = generate_test_function(spec, &grid)?;
                Ok(theorem12_audit(&f, r, &sched, tau, m_order)?.metrics["ratio"])
            })
            .collect::<Result<Vec<f64>>>()?;
        let max = ratios.iter().copied().fold(0.0, f64::max);
        metrics.insert(format!("rung{i}_n"), rung.n as f64);
        metrics.insert(format!("rung{i}_refinement"), rung.refinement as f64);
        metrics.insert(format!("rung{i}_max_ratio"), max);
        maxima.push(max);
        last_sched = Some(sched);
        last_grid = Some(grid);
    }
    let (first, last) = (maxima[0], maxima[maxima.len() - 1]);
    let stability = if first == 0.0 {
        if last != 0.0 {
            return Err(Error::Resolution(
                "first rung's ratio is zero but the last rung's is not; the coarsest grid does not resolve the family".into(),
            ));
        }
        0.0
    } else {
        last / first
    };
    metrics.insert("stability".into(), stability);
    metrics.insert("threshold".into(), threshold);
    metrics.insert("passed".into(), if stability <= threshold { 1.0 } else { 0.0 });

    let mut params = BTreeMap::new();
    params.insert("r".into(), r.to_string());
    params.insert("tau".into(), tau.to_string());
    params.insert("m".into(), m_order.to_string());
    params.insert("family_size".into(), family.len().to_string());
    params.insert(
        "family".into(),
        family.iter().map(|s| s.kind.name()).collect::<Vec<_>>().join(";"),
    );
    AuditResult {
        name: "theorem12_stability".into(),
        params,
        metrics,
        grid: last_grid.as_ref().expect("ladder is nonempty").into(),
        schedule: last_sched.as_ref().expect("ladder is nonempty").into(),
    }
    .check_finite()
}

/// Fraction of the peak used by the localization onset diagnostic.
pub const ONSET_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationTrace {
    pub result: AuditResult,
    pub profile: Vec<ProfilePoint>,
}

impl LocalizationTrace {
    /// CSV with columns `lambda,l2_restricted,sup_restricted`.
    pub fn write_profile_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,l2_restricted,sup_restricted")?;
        for p in &self.profile {
            writeln!(w, "{},{},{}", p.lambda, p.l2_restricted, p.sup_restricted)?;
        }
        Ok(())
    }
}

pub fn localization_trace(
    f: &SpatialField,
    r: f64,
    sched: &LambdaSchedule,
    tau: f64,
    m_order: u32,
) -> Result<LocalizationTrace> {
    check_region(r)?;
    check_support(f)?;
    let profile = convergence_profile(f, sched, tau, m_order, RadialRegion::ball(r))?;
    let peak = profile.iter().map(|p| p.l2_restricted).fold(0.0, f64::max);
    let terminal = profile.last().expect("schedule is nonempty").l2_restricted;
    let onset = profile
        .iter()
        .rev()
        .find(|p| peak > 0.0 && p.l2_restricted > ONSET_FRACTION * peak)
        .map_or(0.0, |p| p.lambda);
    let mut metrics = BTreeMap::new();
    metrics.insert("terminal_l2".into(), terminal);
    metrics.insert("peak_l2".into(), peak);
    metrics.insert("onset_lambda".into(), onset);
    let mut params = BTreeMap::new();
    params.insert("r".into(), r.to_string());
    params.insert("tau".into(), tau.to_string());
    params.insert("m".into(), m_order.to_string());
    let result = AuditResult {
        name: "localization".into(),
        params,
        metrics,
        grid: f.spec().into(),
        schedule: sched.into(),
    }
    .check_finite()?;
    Ok(LocalizationTrace { result, profile })
}

/// Relative agreement of two profiles sampled at the same `λ` values, restricted to values
/// where the coarse profile is at least `floor_fraction` of its peak and `λ` lies below both
/// grids' top lattice levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileComparison {
    pub max_relative_difference: f64,
    pub compared: usize,
}

pub fn compare_profiles(
    coarse: &[ProfilePoint],
    fine: &[ProfilePoint],
    band_limit: f64,
    floor_fraction: f64,
) -> Result<ProfileComparison> {
    if coarse.len() != fine.len() || coarse.iter().zip(fine).any(|(a, b)| a.lambda != b.lambda) {
        return Err(Error::InvalidParameter("profiles must share their lambda values".into()));
    }
    let peak = coarse.iter().map(|p| p.l2_restricted).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (a, b) in coarse.iter().zip(fine) {
        if a.lambda >= band_limit || a.l2_restricted < floor_fraction * peak || peak == 0.0 {
            continue;
        }
        worst = worst.max((a.l2_restricted - b.l2_restricted).abs() / b.l2_restricted.max(f64::MIN_POSITIVE));
        compared += 1;
    }
    Ok(ProfileComparison {
        max_relative_difference: worst,
        compared,
    })
}

/// Translation and dilation taking a ball `|x - x0| < r0` on which `f` vanishes to the
/// canonical frame where the support condition reads `|x| ≥ 3`. Only grid parameters change:
/// the samples are rolled so `x0` sits at the origin and the extent is scaled by `3/r0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFrame {
    pub shift: Vec<i64>,
    pub scale: f64,
    pub m_order: u32,
}

impl CanonicalFrame {
    /// Spectral level in the canonical frame for level `lambda` in the original one.
    pub fn map_lambda(&self, lambda: f64) -> f64 {
        lambda * self.scale.powi(-2 * self.m_order as i32)
    }

    /// Audit radius in the canonical frame for radius `r` around `x0`.
    pub fn map_radius(&self, r: f64) -> f64 {
        r * self.scale
    }
}

pub fn canonical_frame(f: &SpatialField, center: &[f64], r0: f64, m_order: u32) -> Result<(SpatialField, CanonicalFrame)> {
    let spec = f.spec();
    if center.len() != spec.dims() {
        return Err(Error::InvalidParameter("center dimension does not match the grid".into()));
    }
    if !(r0 > 0.0 && r0.is_finite()) || m_order == 0 {
        return Err(Error::InvalidParameter(format!("bad frame parameters r0={r0} m={m_order}")));
    }
    let h = spec.spacing();
    let mut shift = Vec::with_capacity(center.len());
    for &c in center {
        let k = (c / h).round();
        if (k * h - c).abs() > 1e-9 * h.max(c.abs()) {
            return Err(Error::InvalidParameter(format!("center component {c} is not a lattice point")));
        }
        shift.push(-(k as i64));
    }
    let scale = SUPPORT_RADIUS / r0;
    let moved = f.shifted(&shift)?.with_extent(spec.extent() * scale)?;
    Ok((
        moved,
        CanonicalFrame {
            shift,
            scale,
            m_order,
        },
    ))
}

/// Plane wave `e^{i ξ_k · x}` for the lattice mode `k`.
pub fn single_mode(grid: &GridSpec, mode: &[i64]) -> Result<SpatialField> {
    if mode.len() != grid.dims() {
        return Err(Error::InvalidParameter("mode dimension does not match the grid".into()));
    }
    let step = 2.0 * PI / grid.extent();
    SpatialField::from_fn(*grid, |x| {
        let phase: f64 = x.iter().zip(mode).map(|(a, &k)| a * step * k as f64).sum();
        Complex64::new(phase.cos(), phase.sin())
    })
}
