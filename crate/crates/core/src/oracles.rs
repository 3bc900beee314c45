//! Slow reference implementations. Nothing here calls into the FFT engine, the symbol
//! module or the multiplier lab; each oracle carries its own arithmetic so that agreement
//! with the fast path means something.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::decomposition::CutoffFamily;
use crate::error::{Error, Result};
use crate::field::{GridSpec, SpatialField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBudget {
    pub max_points: usize,
    pub max_seconds: f64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_points: 4096,
            max_seconds: 60.0,
        }
    }
}

impl OracleBudget {
    pub fn new(max_points: usize, max_seconds: f64) -> Result<Self> {
        if max_points == 0 || !(max_seconds > 0.0 && max_seconds.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "oracle budget must be positive, got {max_points} points / {max_seconds} s"
            )));
        }
        Ok(Self {
            max_points,
            max_seconds,
        })
    }

    fn admit(&self, what: &str, points: usize) -> Result<Deadline> {
        if points > self.max_points {
            return Err(Error::Budget(format!(
                "{what} needs {points} lattice points but the budget allows {}; raise max_points or shrink the grid",
                self.max_points
            )));
        }
        Ok(Deadline {
            start: Instant::now(),
            limit: Duration::from_secs_f64(self.max_seconds),
        })
    }
}

struct Deadline {
    start: Instant,
    limit: Duration,
}

impl Deadline {
    fn check(&self, what: &str) -> Result<()> {
        if self.start.elapsed() > self.limit {
            return Err(Error::Budget(format!(
                "{what} exceeded its {:.1} s wall-clock budget",
                self.limit.as_secs_f64()
            )));
        }
        Ok(())
    }
}

fn centered_coords(spec: &GridSpec) -> Vec<Vec<i64>> {
    let n = spec.samples_per_dim() as i64;
    let dims = spec.dims();
    (0..spec.len())
        .map(|flat| {
            let mut rest = flat as i64;
            let mut c = vec![0i64; dims];
            for d in (0..dims).rev() {
                c[d] = rest % n - n / 2;
                rest /= n;
            }
            c
        })
        .collect()
}

/// `(1 - level/λ)^{iτ}` on `level < λ`, else 0.
fn riesz_weight(level: f64, lambda: f64, tau: f64) -> Complex64 {
    if level >= lambda {
        Complex64::new(0.0, 0.0)
    } else {
        let phase = tau * (1.0 - level / lambda).ln();
        Complex64::new(phase.cos(), phase.sin())
    }
}

/// `E_λ^{iτ} f` by explicit nested summation:
/// coefficients `c_q = n^{-N/2} Σ_k f_k e^{-2πi k·q/n}`, then the weighted inverse sum.
pub fn direct_partial_sum(f: &SpatialField, m: u32, lambda: f64, tau: f64, budget: &OracleBudget) -> Result<SpatialField> {
    if m == 0 || !(lambda > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("bad symbol m={m} lambda={lambda} tau={tau}")));
    }
    let spec = *f.spec();
    let deadline = budget.admit("direct_partial_sum", spec.len())?;
    let coords = centered_coords(&spec);
    let n = spec.samples_per_dim() as f64;
    let norm = n.powf(-(spec.dims() as f64) / 2.0);
    let step = 2.0 * PI / spec.extent();
    let samples = f.samples();

    let mut weighted = Vec::with_capacity(coords.len());
    for q in &coords {
        deadline.check("direct_partial_sum")?;
        let level = q.iter().map(|&v| (step * v as f64).powi(2)).sum::<f64>().powi(m as i32);
        let w = riesz_weight(level, lambda, tau);
        if w == Complex64::new(0.0, 0.0) {
            weighted.push(w);
            continue;
        }
        let mut c = Complex64::new(0.0, 0.0);
        for (k, fk) in coords.iter().zip(samples) {
            let dot: i64 = k.iter().zip(q).map(|(a, b)| a * b).sum();
            let angle = -2.0 * PI * dot as f64 / n;
            c += fk * Complex64::new(angle.cos(), angle.sin());
        }
        weighted.push(w * c * norm);
    }

    let mut out = Vec::with_capacity(coords.len());
    for k in &coords {
        deadline.check("direct_partial_sum")?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (q, c) in coords.iter().zip(&weighted) {
            let dot: i64 = k.iter().zip(q).map(|(a, b)| a * b).sum();
            let angle = 2.0 * PI * dot as f64 / n;
            acc += c * Complex64::new(angle.cos(), angle.sin());
        }
        out.push(acc * norm);
    }
    SpatialField::new(spec, out)
}

/// One `λ` from each maximal interval on which the lattice ball is constant, plus a
/// full-band value.
pub fn representative_lambdas(spec: &GridSpec, m: u32) -> Vec<f64> {
    let step = 2.0 * PI / spec.extent();
    let mut shells: Vec<i64> = centered_coords(spec)
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .filter(|&s| s > 0)
        .collect();
    shells.sort_unstable();
    shells.dedup();
    let levels: Vec<f64> = shells
        .iter()
        .map(|&s| (step * step * s as f64).powi(m as i32))
        .collect();
    let mut out = vec![0.5 * levels[0]];
    for w in levels.windows(2) {
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(2.0 * levels[levels.len() - 1]);
    out
}

/// `max_λ |E_λ^{iτ} f|` over [`representative_lambdas`], each by [`direct_partial_sum`].
pub fn brute_force_maximal(f: &SpatialField, m: u32, tau: f64, budget: &OracleBudget) -> Result<Vec<f64>> {
    let mut best = vec![0.0f64; f.spec().len()];
    for lambda in representative_lambdas(f.spec(), m) {
        let e = direct_partial_sum(f, m, lambda, tau, budget)?;
        for (b, v) in best.iter_mut().zip(e.samples()) {
            *b = b.max(v.norm());
        }
    }
    Ok(best)
}

/// Tanh-sinh rule for `∫_0^t g(η) dη`, returning `(η, weight, gap)` with
/// `gap = 1 - (η/t)^{2m}` evaluated without cancellation near `η = t`.
fn tanh_sinh_ball(t: f64, m: u32, step: f64, span: f64) -> Vec<(f64, f64, f64)> {
    let count = (span / step).ceil() as i64;
    let mut nodes = Vec::with_capacity(2 * count as usize + 1);
    for i in -count..=count {
        let s = i as f64 * step;
        let u = PI * s.sinh();
        // η/t = 1/(1+e^{-u})
        let frac = 1.0 / (1.0 + (-u).exp());
        let eta = t * frac;
        let weight = t * PI * s.cosh() * frac * (1.0 / (1.0 + u.exp())) * step;
        let gap = -(-2.0 * m as f64 * (-u).exp().ln_1p()).exp_m1();
        if weight > 0.0 && weight.is_finite() && gap > 0.0 {
            nodes.push((eta, weight, gap));
        }
    }
    nodes
}

fn bessel_j0(z: f64) -> f64 {
    // (1/π)∫_0^π cos(z sin θ) dθ, trapezoid on a π-periodic analytic integrand
    let count = (z.abs() / 2.0).ceil() as usize + 24;
    let h = PI / count as f64;
    let acc: f64 = (0..count).map(|k| (z * (k as f64 * h).sin()).cos()).sum();
    acc * h / PI
}

/// Samples of `Θ = K_t ψ_j` on a uniform spatial lattice, with `K̂_t = σ_t`.
#[derive(Debug, Clone)]
pub struct SpacesideKernel {
    dims: usize,
    spacing: f64,
    positions: Vec<[f64; 2]>,
    values: Vec<Complex64>,
}

impl SpacesideKernel {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(position, Θ(position))` for the nonzero lattice samples.
    pub fn samples(&self) -> impl Iterator<Item = (&[f64], Complex64)> + '_ {
        self.positions
            .iter()
            .zip(&self.values)
            .map(move |(p, v)| (&p[..self.dims], *v))
    }

    /// `(2π)^{-N/2} h^N Σ_x Θ(x) e^{-i x·ξ}`.
    pub fn multiplier(&self, xi: &[f64]) -> Complex64 {
        assert_eq!(xi.len(), self.dims);
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, v) in self.positions.iter().zip(&self.values) {
            let dot: f64 = p[..self.dims].iter().zip(xi).map(|(a, b)| a * b).sum();
            acc += v * Complex64::new(dot.cos(), -dot.sin());
        }
        acc * self.spacing.powi(self.dims as i32) * (2.0 * PI).powf(-(self.dims as f64) / 2.0)
    }
}

/// Tanh-sinh step used for the ball integral.
pub const KERNEL_NODE_STEP: f64 = 1.0 / 512.0;

#[allow(clippy::too_many_arguments)]
pub fn spaceside_localized_kernel(
    j: u32,
    tau: f64,
    m_order: u32,
    t: f64,
    fam: &CutoffFamily,
    dims: usize,
    spacing: f64,
    budget: &OracleBudget,
) -> Result<SpacesideKernel> {
    if !(1..=2).contains(&dims) {
        return Err(Error::InvalidParameter(format!("space-side oracle supports N = 1, 2; got {dims}")));
    }
    if j == 0 || m_order == 0 || !tau.is_finite() || !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bad kernel parameters j={j} m={m_order} tau={tau} t={t}"
        )));
    }
    let scale = 2f64.powi(j as i32);
    let inner = fam.inner() * scale / 2.0;
    let outer = fam.outer() * scale;
    let wave_limit = PI / (2.0 * t);
    let bump_limit = (outer - inner) / 64.0;
    if !(spacing > 0.0 && spacing <= wave_limit && spacing <= bump_limit) {
        return Err(Error::Resolution(format!(
            "spacing {spacing} must be <= {wave_limit:.4} (kernel oscillation at t = {t}) and <= {bump_limit:.4} (ψ_j transition)"
        )));
    }
    let per_axis = (outer / spacing).floor() as i64;
    let estimate = match dims {
        1 => 2 * (per_axis - (inner / spacing).ceil() as i64 + 1).max(0) as usize,
        _ => (PI * (outer * outer - inner * inner) / (spacing * spacing)).ceil() as usize,
    };
    let deadline = budget.admit("spaceside_localized_kernel", estimate)?;

    let nodes = tanh_sinh_ball(t, m_order, KERNEL_NODE_STEP, 4.0);
    let weighted: Vec<(f64, Complex64)> = nodes
        .iter()
        .map(|&(eta, w, gap)| {
            let phase = tau * gap.ln();
            (eta, Complex64::new(phase.cos(), phase.sin()) * w)
        })
        .collect();

    let kernel = |r: f64| -> Complex64 {
        match dims {
            1 => {
                let s: Complex64 = weighted.iter().map(|&(eta, w)| w * (r * eta).cos()).sum();
                s * (2.0 / (2.0 * PI).sqrt())
            }
            _ => weighted.iter().map(|&(eta, w)| w * (eta * bessel_j0(r * eta))).sum(),
        }
    };
    let psi = |r: f64| fam.psi_j_radial(j, r);

    let mut positions = Vec::new();
    let mut values = Vec::new();
    match dims {
        1 => {
            for k in -per_axis..=per_axis {
                let x = k as f64 * spacing;
                let p = psi(x.abs());
                if p != 0.0 {
                    positions.push([x, 0.0]);
                    values.push(kernel(x.abs()) * p);
                }
            }
        }
        _ => {
            // K depends on |x| only; evaluate once per integer shell k1² + k2².
            let mut cache = std::collections::HashMap::new();
            for k1 in -per_axis..=per_axis {
                deadline.check("spaceside_localized_kernel")?;
                for k2 in -per_axis..=per_axis {
                    let shell = k1 * k1 + k2 * k2;
                    let r = (shell as f64).sqrt() * spacing;
                    let p = psi(r);
                    if p == 0.0 {
                        continue;
                    }
                    let kv = *cache.entry(shell).or_insert_with(|| kernel(r));
                    positions.push([k1 as f64 * spacing, k2 as f64 * spacing]);
                    values.push(kv * p);
                }
            }
        }
    }
    deadline.check("spaceside_localized_kernel")?;
    Ok(SpacesideKernel {
        dims,
        spacing,
        positions,
        values,
    })
}
