//! Sufficient condition for a unique invariant measure, the dissipativity decomposition behind
//! it, and Monte Carlo evidence from coupled and independent ensembles.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::{sample_ball_pair, Dynamics, VolatilitySpec};
use crate::error::{invalid, HjmmError, Result};
use crate::noise::NoiseModel;
use crate::solver::{
    compare_moments, config_dynamics, probe_names, probe_statistics, run_ensemble, run_exp_euler, MomentComparison,
    SimConfig, Stepper,
};
use crate::stats::{linear_fit, LinearFit};
use crate::weighted_spaces::{embedding_bound, lp_norm_of, lp_nu_norm, sup_abs, Curve, ExpSumProfile, Grid};

/// `[f, g] = ‖g‖^{2−p} ∫ f g |g|^{p−2} e^{νx} dx`, taken as 0 when `g` vanishes.
pub fn semi_inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    if **f.grid() != **g.grid() {
        return Err(HjmmError::GridMismatch);
    }
    Ok(semi_inner_of(g.grid(), f.values(), g.values()))
}

fn semi_inner_of(grid: &Grid, f: &[f64], g: &[f64]) -> f64 {
    let p = grid.params().p();
    let ng = lp_norm_of(grid, g);
    if ng == 0.0 {
        return 0.0;
    }
    let w = grid.weights();
    let integral: f64 = if p == 2.0 {
        f.iter().zip(g).zip(w).map(|((a, b), w)| w * a * b).sum()
    } else {
        f.iter()
            .zip(g)
            .zip(w)
            .map(|((a, b), w)| w * a * b * b.abs().powf(p - 2.0))
            .sum()
    };
    ng.powf(2.0 - p) * integral
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativityReport {
    pub nu: f64,
    pub p: f64,
    pub n_gamma: f64,
    pub g_bar_norm: f64,
    pub g_hat_sup: f64,
    /// Drift contribution `2(p/νq)^{1/q}‖ĝ‖_∞‖ḡ‖_{ν,p}`.
    pub omega1: f64,
    /// Generator contribution `−ν/p`.
    pub omega2: f64,
    /// Diffusion contribution `(p−1)N²‖ĝ‖²_∞`.
    pub omega3: f64,
    /// `ω₁ + ω₂ + ω₃`; decay rates in `(0, −sum)` are admissible when it is negative.
    pub sum: f64,
    /// Left side `ω₁ + ω₃` of the sufficient condition.
    pub condition_lhs: f64,
    /// Right side `ν/2`.
    pub condition_rhs: f64,
    pub condition_holds: bool,
    /// Midpoint of the admissible interval.
    pub omega: Option<f64>,
    /// Smallest Yosida index from which the decay `omega` is guaranteed.
    pub n0: Option<u64>,
}

impl DissipativityReport {
    /// Yosida index threshold for a given decay rate, `None` outside the admissible interval.
    pub fn n0_for(&self, omega: f64) -> Option<u64> {
        if !(omega > 0.0 && omega < -self.sum) {
            return None;
        }
        let a = self.omega1 + self.omega3 + omega;
        let w2 = -self.omega2;
        let n = a * w2 / (w2 - a);
        Some((n.ceil().max(1.0)) as u64)
    }

    /// `nω₂/(n−ω₂)`, the bound on `[A_n z, z]/‖z‖²`.
    pub fn yosida_bound(&self, n: f64) -> f64 {
        n * self.omega2 / (n - self.omega2)
    }
}

/// Evaluates the invariant-measure condition for a time-independent dominated volatility.
/// `n_gamma` is the constant relating the γ-norm to its integral surrogate.
pub fn check_invariant_condition(spec: &VolatilitySpec, n_gamma: f64) -> Result<DissipativityReport> {
    if spec.time_dependent {
        return Err(invalid("the invariant-measure condition needs a time-independent volatility"));
    }
    if !(n_gamma.is_finite() && n_gamma > 0.0) {
        return Err(invalid(format!("n_gamma must be positive, got {n_gamma}")));
    }
    let g_bar = spec
        .g_bar
        .as_ref()
        .ok_or_else(|| invalid("the volatility has no integrable dominator"))?;
    let params = *spec.grid().params();
    let (nu, p) = (params.nu(), params.p());
    let g_bar_norm = lp_nu_norm(g_bar);
    let g_hat_sup = sup_abs(&spec.g_hat);
    let omega1 = 2.0 * embedding_bound(&params) * g_hat_sup * g_bar_norm;
    let omega2 = -nu / p;
    let omega3 = (p - 1.0) * n_gamma * n_gamma * g_hat_sup * g_hat_sup;
    let sum = omega1 + omega2 + omega3;
    let condition_lhs = omega1 + omega3;
    let mut report = DissipativityReport {
        nu,
        p,
        n_gamma,
        g_bar_norm,
        g_hat_sup,
        omega1,
        omega2,
        omega3,
        sum,
        condition_lhs,
        condition_rhs: nu / 2.0,
        condition_holds: condition_lhs < nu / 2.0,
        omega: None,
        n0: None,
    };
    if sum < 0.0 {
        let omega = -sum / 2.0;
        report.omega = Some(omega);
        report.n0 = report.n0_for(omega);
    }
    Ok(report)
}

/// First-order upwind discretization of `d/dx` with zero inflow beyond `x_max`.
#[derive(Debug, Clone)]
pub struct UpwindGenerator {
    grid: Arc<Grid>,
}

impl UpwindGenerator {
    pub fn new(grid: Arc<Grid>) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        let n = z.len();
        (0..n)
            .map(|i| {
                let next = if i + 1 < n { z[i + 1] } else { 0.0 };
                (next - z[i]) / h
            })
            .collect()
    }

    /// `(nI − A_h)^{-1} z` by back substitution; the matrix is upper bidiagonal.
    pub fn resolvent(&self, n: f64, z: &[f64]) -> Result<Vec<f64>> {
        if !(n.is_finite() && n > 0.0) {
            return Err(invalid(format!("Yosida index must be positive, got {n}")));
        }
        let h = self.grid.spacing();
        let diag = n + 1.0 / h;
        let mut y = vec![0.0; z.len()];
        let mut next = 0.0;
        for i in (0..z.len()).rev() {
            y[i] = (z[i] + next / h) / diag;
            next = y[i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(HjmmError::LinearSolve("non-finite resolvent value".into()));
        }
        Ok(y)
    }

    /// `A_n z = n A_h (nI − A_h)^{-1} z = n² (nI − A_h)^{-1} z − n z`.
    pub fn yosida_apply(&self, n: f64, z: &[f64]) -> Result<Vec<f64>> {
        let y = self.resolvent(n, z)?;
        Ok(y.iter().zip(z).map(|(y, z)| n * n * y - n * z).collect())
    }

    /// `[A_n z, z] / ‖z‖²`, `None` for `z = 0`.
    pub fn yosida_ratio(&self, n: f64, z: &[f64]) -> Result<Option<f64>> {
        let nz = lp_norm_of(&self.grid, z);
        if nz == 0.0 {
            return Ok(None);
        }
        let az = self.yosida_apply(n, z)?;
        Ok(Some(semi_inner_of(&self.grid, &az, z) / (nz * nz)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YosidaSample {
    pub n: f64,
    pub samples: usize,
    pub max_ratio: f64,
    pub bound: f64,
}

/// Largest `[A_n z, z]/‖z‖²` over random decaying curves `z`.
pub fn yosida_sample(grid: &Arc<Grid>, n: f64, samples: usize, seed: u64) -> Result<YosidaSample> {
    let gen = UpwindGenerator::new(grid.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = f64::NEG_INFINITY;
    for _ in 0..samples {
        let z = ExpSumProfile::random(&mut rng, grid.params()).sample(grid);
        if let Some(r) = gen.yosida_ratio(n, z.values())? {
            max_ratio = max_ratio.max(r);
        }
    }
    let omega2 = -grid.params().nu() / grid.params().p();
    Ok(YosidaSample {
        n,
        samples,
        max_ratio,
        bound: n * omega2 / (n - omega2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativitySample {
    pub n: f64,
    pub pairs: usize,
    /// Largest `([A_n z + F(f₁) − F(f₂), z] + (p−1)N²γ(G(f₁) − G(f₂))²)/‖z‖²`.
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

/// Samples the left side of the dissipativity inequality, normalized by `‖f₁ − f₂‖²`, over
/// random pairs in the ball of radius `radius`.
pub fn dissipativity_sample(
    spec: &VolatilitySpec,
    n_gamma: f64,
    n: f64,
    pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<DissipativitySample> {
    if n.is_nan() || n < 1.0 {
        return Err(invalid(format!("Yosida index must be at least 1, got {n}")));
    }
    let grid = spec.grid().clone();
    let p = grid.params().p();
    let k2 = p * (p - 1.0);
    let gen = UpwindGenerator::new(grid.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = f64::NEG_INFINITY;
    let mut total = 0.0;
    let mut used = 0usize;
    for _ in 0..pairs {
        let (f1, f2) = sample_ball_pair(&mut rng, &grid, radius);
        let z = f1.sub(&f2)?;
        let nz = lp_nu_norm(&z);
        if nz == 0.0 {
            continue;
        }
        let az = gen.yosida_apply(n, z.values())?;
        let df = spec.drift(0.0, &f1).sub(&spec.drift(0.0, &f2))?;
        let lhs: Vec<f64> = az.iter().zip(df.values()).map(|(a, b)| a + b).collect();
        let gamma = spec.diffusion(0.0, &f1).sub(&spec.diffusion(0.0, &f2))?.gamma_norm();
        let value = semi_inner_of(&grid, &lhs, z.values()) + k2 / p * n_gamma * n_gamma * gamma * gamma;
        let ratio = value / (nz * nz);
        max_ratio = max_ratio.max(ratio);
        total += ratio;
        used += 1;
    }
    Ok(DissipativitySample {
        n,
        pairs: used,
        max_ratio,
        mean_ratio: total / used.max(1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub mean_distance: Vec<f64>,
    /// Path average of `log ‖r_a(t) − r_b(t)‖`, over the prefix where every distance is positive.
    pub mean_log_distance: Vec<f64>,
    /// Fit of `mean_log_distance` against time; `None` when fewer than two points are positive.
    pub fit: Option<LinearFit>,
    /// `slope ± 2·standard error`.
    pub slope_band: Option<(f64, f64)>,
    pub condition_holds: Option<bool>,
}

/// Runs solutions from `config.r0` and `r0_b` on the same noise path up to `config.t_end`
/// and fits the decay of their distance.
pub fn coupling_decay(config: &SimConfig, r0_b: &Curve, n_paths: usize) -> Result<CouplingReport> {
    config.validate()?;
    if **r0_b.grid() != **config.grid() {
        return Err(HjmmError::GridMismatch);
    }
    if n_paths == 0 {
        return Err(invalid("at least one path is needed"));
    }
    let steps = config.steps()?;
    let dynamics = config_dynamics(config)?;
    let semigroup = config.semigroup()?;
    let grid = config.grid();
    let d = config.spec.dim_h();
    let per_path = run_ensemble(n_paths, |i| {
        let mut noise = NoiseModel::new(d, config.seed, i)?;
        let mut stepper = Stepper::new(dynamics.as_ref(), &semigroup, config.dt)?;
        let mut a = config.r0.values().to_vec();
        let mut b = r0_b.values().to_vec();
        let mut next = vec![0.0; a.len()];
        let mut dw = vec![0.0; d];
        let mut diff = vec![0.0; a.len()];
        let mut dist = Vec::with_capacity(steps + 1);
        let distance = |a: &[f64], b: &[f64], diff: &mut [f64]| {
            for ((o, x), y) in diff.iter_mut().zip(a).zip(b) {
                *o = x - y;
            }
            lp_norm_of(grid, diff)
        };
        dist.push(distance(&a, &b, &mut diff));
        for k in 0..steps {
            let t = k as f64 * config.dt;
            noise.sample_increment_into(config.dt, &mut dw)?;
            stepper.step(t, &a, &dw, &mut next)?;
            std::mem::swap(&mut a, &mut next);
            stepper.step(t, &b, &dw, &mut next)?;
            std::mem::swap(&mut b, &mut next);
            dist.push(distance(&a, &b, &mut diff));
        }
        Ok(dist)
    })?;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * config.dt).collect();
    let mean_distance: Vec<f64> = (0..=steps)
        .map(|k| per_path.iter().map(|d| d[k]).sum::<f64>() / n_paths as f64)
        .collect();
    let positive = (0..=steps)
        .take_while(|&k| per_path.iter().all(|d| d[k] > 0.0))
        .count();
    let mean_log_distance: Vec<f64> = (0..positive)
        .map(|k| per_path.iter().map(|d| d[k].ln()).sum::<f64>() / n_paths as f64)
        .collect();
    let fit = (positive >= 3).then(|| linear_fit(&times[..positive], &mean_log_distance));
    let condition_holds = check_invariant_condition(&config.spec, config.picard.n_gamma)
        .ok()
        .map(|r| r.condition_holds);
    Ok(CouplingReport {
        n_paths,
        times,
        mean_distance,
        mean_log_distance,
        slope_band: fit.map(|f| (f.slope - 2.0 * f.slope_std_error, f.slope + 2.0 * f.slope_std_error)),
        fit,
        condition_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantStats {
    pub burn_in: f64,
    pub n_paths: usize,
    pub probes: Vec<f64>,
    /// `first` holds the ensemble started at `config.r0`, `second` the one started at `r0_b`.
    pub comparisons: Vec<MomentComparison>,
    pub max_z: f64,
    pub agree: bool,
    pub condition_holds: Option<bool>,
}

/// Independent ensembles from `config.r0` and `r0_b`, compared at `config.t_end` through the
/// first two moments of the norm and of the probe values.
pub fn empirical_invariant_stats(
    config: &SimConfig,
    r0_b: &Curve,
    probes: &[f64],
    n_paths: usize,
    z_max: f64,
) -> Result<InvariantStats> {
    config.validate()?;
    if **r0_b.grid() != **config.grid() {
        return Err(HjmmError::GridMismatch);
    }
    if n_paths < 2 {
        return Err(invalid("at least two paths are needed"));
    }
    let steps = config.steps()?;
    let dynamics = config_dynamics(config)?;
    let semigroup = config.semigroup()?;
    let d = config.spec.dim_h();
    let run = |r0: &Curve, stream: u64| -> Result<Vec<f64>> {
        let mut noise = NoiseModel::new(d, config.seed, stream)?;
        let p = run_exp_euler(dynamics.as_ref(), &semigroup, r0, 0.0, config.dt, steps, &mut noise, usize::MAX, None)?;
        probe_statistics(p.final_curve(), probes)
    };
    let n = n_paths as u64;
    let first = run_ensemble(n_paths, |i| run(&config.r0, i))?;
    let second = run_ensemble(n_paths, |i| run(r0_b, n + i))?;
    let comparisons = compare_moments(&probe_names(probes), &first, &second);
    let max_z = comparisons.iter().map(|c| c.z_score).fold(0.0, f64::max);
    let condition_holds = check_invariant_condition(&config.spec, config.picard.n_gamma)
        .ok()
        .map(|r| r.condition_holds);
    Ok(InvariantStats {
        burn_in: config.t_end,
        n_paths,
        probes: probes.to_vec(),
        comparisons,
        max_z,
        agree: max_z <= z_max,
        condition_holds,
    })
}
