//! Partial integrals `E_λ^{iτ} f`, the maximal function `sup_λ |E_λ^{iτ} f|` and
//! convergence profiles in `λ`.
//!
//! On the lattice, `E_λ f` (τ = 0) is a step function of `λ`: it changes only when `λ`
//! crosses a shell level `|ξ_k|^{2m}`. The exact-breakpoint schedule visits every step,
//! so the maximum over it is the supremum over all `λ > 0` of the discrete model.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    restricted_l2_norm, restricted_sup_norm, FourierEngine, GridSpec, RadialRegion, SpatialField,
};
use crate::symbols::{apply_multiplier, spectral_level, symbol_at_level, SymbolParams};

/// Default number of samples per breakpoint interval when `τ ≠ 0`.
pub const DEFAULT_REFINEMENT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    ExactBreakpoints,
    Geometric,
    Explicit,
}

impl ScheduleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleMode::ExactBreakpoints => "exact",
            ScheduleMode::Geometric => "geometric",
            ScheduleMode::Explicit => "explicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSchedule {
    mode: ScheduleMode,
    values: Vec<f64>,
    per_interval_refinement: usize,
}

/// Sorted distinct `Σk²` over the lattice, including 0.
pub fn lattice_shells(grid: &GridSpec) -> Vec<u64> {
    // |k_d| ranges over 0..=n/2 on every axis (k = -n/2 is present).
    let half = grid.samples_per_dim() as u64 / 2;
    let mut shells = BTreeSet::new();
    let mut stack = vec![(0usize, 0u64)];
    while let Some((depth, acc)) = stack.pop() {
        if depth == grid.dims() {
            shells.insert(acc);
            continue;
        }
        for k in 0..=half {
            stack.push((depth + 1, acc + k * k));
        }
    }
    shells.into_iter().collect()
}

/// Sorted distinct spectral levels `|ξ_k|^{2m}` (including 0 for the DC shell), computed
/// exactly as [`crate::symbols::apply_multiplier`] computes them.
pub fn lattice_levels(grid: &GridSpec, m: u32) -> Vec<f64> {
    let step = grid.frequency_step();
    lattice_shells(grid)
        .into_iter()
        .map(|s| spectral_level(step * step * s as f64, m))
        .collect()
}

impl LambdaSchedule {
    /// Every positive lattice level plus a full-band sentinel at twice the top level.
    /// With `τ = 0` the symbol is constant on each `(b_i, b_{i+1}]`, so sampling its right
    /// endpoints and the sentinel covers every distinct `E_λ`. `refinement > 1` adds
    /// geometric interior points to each interval for `τ ≠ 0`.
    pub fn exact_breakpoints(grid: &GridSpec, m: u32, refinement: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        if refinement == 0 {
            return Err(Error::InvalidParameter("refinement must be >= 1".into()));
        }
        let mut anchors: Vec<f64> = lattice_levels(grid, m).into_iter().filter(|&v| v > 0.0).collect();
        let top = *anchors.last().expect("grid has nonzero frequencies");
        anchors.push(2.0 * top);
        let mut values = Vec::with_capacity(anchors.len() * refinement);
        for (i, &hi) in anchors.iter().enumerate() {
            if i > 0 && refinement > 1 {
                let lo = anchors[i - 1];
                let ratio = hi / lo;
                for k in 1..refinement {
                    values.push(lo * ratio.powf(k as f64 / refinement as f64));
                }
            }
            values.push(hi);
        }
        Self::checked(ScheduleMode::ExactBreakpoints, values, refinement)
    }

    pub fn geometric(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "geometric schedule needs 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        if points < 2 {
            return Err(Error::InvalidParameter("geometric schedule needs >= 2 points".into()));
        }
        let ratio = (hi / lo).ln() / (points - 1) as f64;
        let values = (0..points)
            .map(|i| if i == points - 1 { hi } else { lo * (ratio * i as f64).exp() })
            .collect();
        Self::checked(ScheduleMode::Geometric, values, 1)
    }

    /// Geometric schedule spanning half the first positive level up to twice the top level.
    pub fn geometric_for_grid(grid: &GridSpec, m: u32, points: usize) -> Result<Self> {
        let levels = lattice_levels(grid, m);
        let lo = levels[1] / 2.0;
        let hi = levels[levels.len() - 1] * 2.0;
        Self::geometric(lo, hi, points)
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        Self::checked(ScheduleMode::Explicit, values, 1)
    }

    fn checked(mode: ScheduleMode, values: Vec<f64>, per_interval_refinement: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySchedule);
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("schedule values must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("schedule values must be strictly increasing".into()));
        }
        Ok(Self {
            mode,
            values,
            per_interval_refinement,
        })
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn per_interval_refinement(&self) -> usize {
        self.per_interval_refinement
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn partial_integral(f: &SpatialField, p: &SymbolParams) -> Result<SpatialField> {
    let engine = FourierEngine::new(*f.spec());
    let coeffs = engine.forward(f)?;
    engine.inverse(&apply_multiplier(p, &coeffs))
}

/// Forward transform of `f` plus per-coefficient levels, reused across a λ sweep.
struct Sweep {
    engine: FourierEngine,
    coeffs: Vec<Complex64>,
    levels: Vec<f64>,
    tau: f64,
}

impl Sweep {
    fn new(f: &SpatialField, tau: f64, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        if !tau.is_finite() {
            return Err(Error::InvalidParameter("tau must be finite".into()));
        }
        let spec = *f.spec();
        let engine = FourierEngine::new(spec);
        let coeffs = engine.forward(f)?.into_coeffs();
        let levels = (0..spec.len())
            .map(|flat| spectral_level(spec.frequency_norm_sq(flat), m))
            .collect();
        Ok(Self {
            engine,
            coeffs,
            levels,
            tau,
        })
    }

    fn eval_into(&self, lambda: f64, out: &mut [Complex64]) {
        for ((o, c), level) in out.iter_mut().zip(&self.coeffs).zip(&self.levels) {
            *o = symbol_at_level(*level, lambda, self.tau) * c;
        }
        self.engine.inverse_raw(out);
    }
}

/// Result of a maximal-function sweep.
#[derive(Debug, Clone)]
pub struct MaximalOutcome {
    /// Pointwise maximum of `|E_λ^{iτ} f|` over the schedule, stored as a real field.
    pub field: SpatialField,
    /// Largest pointwise change between consecutive schedule samples that lie on the same
    /// continuous branch (no lattice level crossed between them). Zero for `τ = 0`. The true
    /// supremum over the sampled branches exceeds the reported maximum by at most about this
    /// amount; the reported field itself is a lower bound.
    pub sampling_gap: f64,
    pub evaluations: usize,
}

pub fn maximal_function(f: &SpatialField, sched: &LambdaSchedule, tau: f64, m: u32) -> Result<SpatialField> {
    Ok(maximal_function_detailed(f, sched, tau, m)?.field)
}

pub fn maximal_function_detailed(
    f: &SpatialField,
    sched: &LambdaSchedule,
    tau: f64,
    m: u32,
) -> Result<MaximalOutcome> {
    if sched.is_empty() {
        return Err(Error::EmptySchedule);
    }
    let sweep = Sweep::new(f, tau, m)?;
    let levels = lattice_levels(f.spec(), m);
    let values = sched.values();
    // branch id = number of lattice levels strictly below λ
    let branch: Vec<usize> = values.iter().map(|&l| levels.partition_point(|&v| v < l)).collect();
    let len = f.spec().len();

    let threads = rayon::current_num_threads().max(1);
    let chunk = values.len().div_ceil(threads * 4).max(1);
    let starts: Vec<usize> = (0..values.len()).step_by(chunk).collect();

    let (maxima, gap) = starts
        .par_iter()
        .map(|&start| {
            // chunks overlap by one sample so every consecutive pair is compared
            let end = (start + chunk).min(values.len() - 1);
            let mut best = vec![0.0f64; len];
            let mut cur = vec![Complex64::new(0.0, 0.0); len];
            let mut prev: Vec<Complex64> = Vec::new();
            let mut gap = 0.0f64;
            for i in start..=end {
                sweep.eval_into(values[i], &mut cur);
                for (b, z) in best.iter_mut().zip(&cur) {
                    *b = b.max(z.norm());
                }
                if i > start && branch[i] == branch[i - 1] {
                    let d = prev.iter().zip(&cur).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                    gap = gap.max(d);
                }
                std::mem::swap(&mut prev, &mut cur);
                if cur.len() != len {
                    cur = vec![Complex64::new(0.0, 0.0); len];
                }
            }
            (best, gap)
        })
        .reduce(
            || (vec![0.0f64; len], 0.0f64),
            |(mut a, ga), (b, gb)| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x = x.max(*y);
                }
                (a, ga.max(gb))
            },
        );

    let samples = maxima.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    Ok(MaximalOutcome {
        field: SpatialField::new(*f.spec(), samples)?,
        sampling_gap: if tau == 0.0 { 0.0 } else { gap },
        evaluations: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub lambda: f64,
    pub l2_restricted: f64,
    pub sup_restricted: f64,
}

pub fn convergence_profile(
    f: &SpatialField,
    sched: &LambdaSchedule,
    tau: f64,
    m: u32,
    region: RadialRegion,
) -> Result<Vec<ProfilePoint>> {
    if sched.is_empty() {
        return Err(Error::EmptySchedule);
    }
    let sweep = Sweep::new(f, tau, m)?;
    let spec = *f.spec();
    sched
        .values()
        .par_iter()
        .map(|&lambda| {
            let mut buf = vec![Complex64::new(0.0, 0.0); spec.len()];
            sweep.eval_into(lambda, &mut buf);
            let field = SpatialField::new(spec, buf)?;
            Ok(ProfilePoint {
                lambda,
                l2_restricted: restricted_l2_norm(&field, region)?,
                sup_restricted: restricted_sup_norm(&field, region)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{forward_transform, SpectralField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_field(spec: GridSpec, seed: u64) -> SpatialField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..spec.len())
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        SpatialField::new(spec, v).unwrap()
    }

    fn single_mode(spec: GridSpec, k: &[i64]) -> SpatialField {
        let mut coeffs = vec![c(0.0, 0.0); spec.len()];
        coeffs[spec.flat_index(k).unwrap()] = c(1.5, -0.5);
        crate::field::inverse_transform(&SpectralField::new(spec, coeffs).unwrap()).unwrap()
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn shells_1d_and_2d() {
        let g = GridSpec::new(1, 8, 1.0).unwrap();
        assert_eq!(lattice_shells(&g), vec![0, 1, 4, 9, 16]);
        let g2 = GridSpec::new(2, 4, 1.0).unwrap();
        assert_eq!(lattice_shells(&g2), vec![0, 1, 2, 4, 5, 8]);
    }

    #[test]
    fn exact_schedule_shape() {
        let g = GridSpec::new(1, 8, 2.0 * std::f64::consts::PI).unwrap();
        let s = LambdaSchedule::exact_breakpoints(&g, 1, 1).unwrap();
        assert_eq!(s.values(), &[1.0, 4.0, 9.0, 16.0, 32.0]);
        let r = LambdaSchedule::exact_breakpoints(&g, 1, 4).unwrap();
        assert_eq!(r.len(), 1 + 4 * 4);
        assert!(r.values().windows(2).all(|w| w[0] < w[1]));
        assert!(LambdaSchedule::exact_breakpoints(&g, 1, 0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(matches!(LambdaSchedule::explicit(vec![]), Err(Error::EmptySchedule)));
        assert!(LambdaSchedule::explicit(vec![1.0, 1.0]).is_err());
        assert!(LambdaSchedule::explicit(vec![-1.0, 1.0]).is_err());
        assert!(LambdaSchedule::geometric(1.0, 1.0, 4).is_err());
        let g = LambdaSchedule::geometric(1.0, 16.0, 5).unwrap();
        assert!((g.values()[2] - 4.0).abs() < 1e-12);
        assert_eq!(g.values()[4], 16.0);
    }

    #[test]
    fn band_limited_is_reproduced() {
        let g = GridSpec::new(2, 16, 8.0).unwrap();
        let f = single_mode(g, &[2, -1]);
        let lambda = g.frequency_norm_sq(g.flat_index(&[2, -1]).unwrap()) * 1.01;
        let p = SymbolParams::new(1, lambda, 0.0).unwrap();
        let out = partial_integral(&f, &p).unwrap();
        assert!(max_diff(out.samples(), f.samples()) < 1e-10);

        let p_low = SymbolParams::new(1, lambda / 1.02, 0.0).unwrap();
        let low = partial_integral(&f, &p_low).unwrap();
        assert!(low.l2_norm() < 1e-14);
    }

    #[test]
    fn maximal_of_single_mode_is_modulus() {
        let g = GridSpec::new(1, 32, 5.0).unwrap();
        let f = single_mode(g, &[3]);
        let s = LambdaSchedule::exact_breakpoints(&g, 1, 1).unwrap();
        let e = maximal_function(&f, &s, 0.0, 1).unwrap();
        for (a, b) in e.samples().iter().zip(f.samples()) {
            assert!((a.re - b.norm()).abs() < 1e-14);
            assert_eq!(a.im, 0.0);
        }
    }

    #[test]
    fn maximal_dominates_modulus_and_geometric() {
        let g = GridSpec::new(1, 64, 6.0).unwrap();
        let f = random_field(g, 5);
        let exact = maximal_function(&f, &LambdaSchedule::exact_breakpoints(&g, 1, 1).unwrap(), 0.0, 1).unwrap();
        for (a, b) in exact.samples().iter().zip(f.samples()) {
            assert!(a.re >= b.norm() - 1e-12);
        }
        let mut last_gap = f64::INFINITY;
        for pts in [16, 64, 512] {
            let geo = maximal_function(&f, &LambdaSchedule::geometric_for_grid(&g, 1, pts).unwrap(), 0.0, 1).unwrap();
            let mut gap = 0.0f64;
            for (a, b) in exact.samples().iter().zip(geo.samples()) {
                assert!(a.re >= b.re - 1e-12);
                gap = gap.max(a.re - b.re);
            }
            assert!(gap <= last_gap + 1e-12);
            last_gap = gap;
        }
        assert!(last_gap < 1e-12, "512-point geometric schedule hits every interval on n=64");
    }

    #[test]
    fn idempotent_and_contractive() {
        let g = GridSpec::new(2, 16, 4.0).unwrap();
        let f = random_field(g, 8);
        for &(lambda, tau) in &[(10.0, 0.0), (40.0, 0.0), (40.0, 1.5), (200.0, -3.0)] {
            let p = SymbolParams::new(1, lambda, tau).unwrap();
            let once = partial_integral(&f, &p).unwrap();
            assert!(once.l2_norm() <= f.l2_norm() * (1.0 + 1e-12));
            if tau == 0.0 {
                let twice = partial_integral(&once, &p).unwrap();
                assert!(max_diff(once.samples(), twice.samples()) < 1e-12);
            }
        }
    }

    #[test]
    fn translation_covariance() {
        let g = GridSpec::new(2, 16, 4.0).unwrap();
        let f = random_field(g, 11);
        let p = SymbolParams::new(2, 500.0, 0.7).unwrap();
        let shift = [3, -5];
        let a = partial_integral(&f.shifted(&shift).unwrap(), &p).unwrap();
        let b = partial_integral(&f, &p).unwrap().shifted(&shift).unwrap();
        assert!(max_diff(a.samples(), b.samples()) < 1e-12);
    }

    #[test]
    fn l2_convergence_through_breakpoints() {
        let g = GridSpec::new(1, 32, 3.0).unwrap();
        let f = random_field(g, 2);
        let s = LambdaSchedule::exact_breakpoints(&g, 1, 1).unwrap();
        let mut prev = f64::INFINITY;
        for &lambda in s.values() {
            let e = partial_integral(&f, &SymbolParams::new(1, lambda, 0.0).unwrap()).unwrap();
            let err: f64 = e
                .samples()
                .iter()
                .zip(f.samples())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err <= prev + 1e-12);
            prev = err;
        }
        assert!(prev <= 1e-10 * f.l2_norm());
    }

    #[test]
    fn refined_sweep_reports_gap() {
        let g = GridSpec::new(1, 32, 3.0).unwrap();
        let f = random_field(g, 4);
        let s = LambdaSchedule::exact_breakpoints(&g, 1, 8).unwrap();
        let out = maximal_function_detailed(&f, &s, 1.0, 1).unwrap();
        assert!(out.sampling_gap > 0.0 && out.sampling_gap.is_finite());
        assert_eq!(out.evaluations, s.len());
        let zero = maximal_function_detailed(&f, &s, 0.0, 1).unwrap();
        assert_eq!(zero.sampling_gap, 0.0);
    }

    #[test]
    fn profile_examples() {
        let g = GridSpec::new(1, 64, 16.0).unwrap();
        let s = LambdaSchedule::exact_breakpoints(&g, 1, 1).unwrap();
        let zero = convergence_profile(&SpatialField::zeros(g), &s, 0.0, 1, RadialRegion::ball(1.0)).unwrap();
        assert!(zero.iter().all(|p| p.l2_restricted == 0.0 && p.sup_restricted == 0.0));

        // a band-limited f vanishing on |x| <= 1 is not representable exactly, so check
        // the terminal entry against the restricted norm of f itself.
        let f = random_field(g, 6);
        let prof = convergence_profile(&f, &s, 0.0, 1, RadialRegion::ball(1.0)).unwrap();
        let last = prof.last().unwrap();
        let direct = restricted_l2_norm(&f, RadialRegion::ball(1.0)).unwrap();
        assert!((last.l2_restricted - direct).abs() < 1e-10);
        assert_eq!(prof.len(), s.len());
    }

    #[test]
    fn empty_schedule_rejected() {
        let g = GridSpec::new(1, 8, 1.0).unwrap();
        let empty = LambdaSchedule {
            mode: ScheduleMode::Explicit,
            values: vec![],
            per_interval_refinement: 1,
        };
        let f = SpatialField::zeros(g);
        assert!(matches!(maximal_function(&f, &empty, 0.0, 1), Err(Error::EmptySchedule)));
        let _ = forward_transform(&f).unwrap();
    }
}
