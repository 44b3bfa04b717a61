use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_g, truncate_coefficients, Dynamics, VolatilitySpec};
use crate::error::{invalid, Result};
use crate::noise::NoiseModel;
use crate::semigroup::ShiftSemigroup;
use crate::weighted_spaces::{embedding_bound, lp_nu_norm, Curve, ExpSumProfile, Grid, NormKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TheoreticalFormula,
    EmpiricalSample,
    /// Both a formula value and an empirical estimate are available; the formula is used.
    FormulaAndSample,
}

/// A constant with whatever is known about it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theoretical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl Constant {
    pub fn theoretical(value: f64, formula: impl Into<String>) -> Self {
        Self {
            value,
            provenance: Provenance::TheoreticalFormula,
            formula: Some(formula.into()),
            theoretical: Some(value),
            empirical: None,
            samples: None,
        }
    }

    /// `value` is the maximum over `samples` sampled ratios.
    pub fn empirical(value: f64, samples: usize) -> Self {
        Self {
            value,
            provenance: Provenance::EmpiricalSample,
            formula: None,
            theoretical: None,
            empirical: Some(value),
            samples: Some(samples),
        }
    }

    fn with_sample(mut self, value: f64, samples: usize) -> Self {
        self.empirical = Some(value);
        self.samples = Some(samples);
        if self.theoretical.is_some() {
            self.provenance = Provenance::FormulaAndSample;
        } else {
            self.value = value;
            self.provenance = Provenance::EmpiricalSample;
        }
        self
    }

    fn merge(theoretical: Option<(f64, String)>, empirical: Option<(f64, usize)>) -> Option<Self> {
        match (theoretical, empirical) {
            (Some((v, f)), Some((e, n))) => Some(Constant::theoretical(v, f).with_sample(e, n)),
            (Some((v, f)), None) => Some(Constant::theoretical(v, f)),
            (None, Some((e, n))) => Some(Constant::empirical(e, n)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub l_f: Option<Constant>,
    pub l_g: Option<Constant>,
    pub lbar_f: Option<Constant>,
    pub lbar_g: Option<Constant>,
    pub k_maximal: Option<Constant>,
    pub n_gamma: Constant,
}

impl ConstantsReport {
    /// Formula values only, available when the volatility is dominated.
    pub fn theoretical(spec: &VolatilitySpec, n_gamma: f64) -> Self {
        let pair = |v: Option<f64>, f: &str| v.map(|v| (v, f.to_string()));
        Self {
            l_f: Constant::merge(pair(theoretical_lipschitz_f(spec), FORMULA_L_F), None),
            l_g: Constant::merge(pair(Some(theoretical_lipschitz_g(spec, n_gamma)), FORMULA_L_G), None),
            lbar_f: Constant::merge(pair(theoretical_growth_f(spec), FORMULA_LBAR_F), None),
            lbar_g: Constant::merge(pair(theoretical_growth_g(spec, n_gamma), FORMULA_LBAR_G), None),
            k_maximal: None,
            n_gamma: Constant::theoretical(n_gamma, "configured"),
        }
    }

    pub fn c_t(&self, t: f64, beta: f64) -> Result<f64> {
        contraction_constant(self, t, beta)
    }
}

const FORMULA_L_F: &str = "4 (p/(nu q))^(1/q) ||g_hat||_inf ||g_bar||_{nu,p}";
const FORMULA_L_G: &str = "N ||g_hat||_inf";
const FORMULA_LBAR_F: &str = "(p/(nu q))^(1/q) ||g_bar||_{nu,p}^2";
const FORMULA_LBAR_G: &str = "N ||g_bar||_{nu,p}";
const FORMULA_TRUNCATED: &str = "3 x global constant";

fn sup_norm(c: &Curve) -> f64 {
    c.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn theoretical_lipschitz_f(spec: &VolatilitySpec) -> Option<f64> {
    let g_bar = spec.g_bar.as_ref()?;
    Some(4.0 * embedding_bound(spec.grid().params()) * sup_norm(&spec.g_hat) * lp_nu_norm(g_bar))
}

pub fn theoretical_lipschitz_g(spec: &VolatilitySpec, n_gamma: f64) -> f64 {
    n_gamma * sup_norm(&spec.g_hat)
}

pub fn theoretical_growth_f(spec: &VolatilitySpec) -> Option<f64> {
    let g_bar = lp_nu_norm(spec.g_bar.as_ref()?);
    Some(embedding_bound(spec.grid().params()) * g_bar * g_bar)
}

pub fn theoretical_growth_g(spec: &VolatilitySpec, n_gamma: f64) -> Option<f64> {
    Some(n_gamma * lp_nu_norm(spec.g_bar.as_ref()?))
}

/// `C(T) = e^{βT} (2 L_F² T² + 2 K T L_G²)^{1/2}`.
pub fn contraction_constant(report: &ConstantsReport, t: f64, beta: f64) -> Result<f64> {
    let need = |c: &Option<Constant>, name: &str| {
        c.as_ref()
            .map(|c| c.value)
            .ok_or_else(|| invalid(format!("{name} is not available in the constants report")))
    };
    let l_f = need(&report.l_f, "L_F")?;
    let l_g = need(&report.l_g, "L_G")?;
    let k = need(&report.k_maximal, "K")?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid(format!("horizon must be nonnegative, got {t}")));
    }
    Ok((beta * t).exp() * (2.0 * l_f * l_f * t * t + 2.0 * k * t * l_g * l_g).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LipschitzMode {
    F,
    G,
    TruncatedF { level: f64 },
    TruncatedG { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub empirical: f64,
    pub samples: usize,
    pub theoretical: Option<f64>,
    pub formula: Option<String>,
}

/// A pair of curves in the `L^p_ν` ball of radius `radius`. Half of the pairs are close
/// together so that ratios probe the local slope as well as the global one.
pub fn sample_ball_pair<R: Rng + ?Sized>(rng: &mut R, grid: &Arc<Grid>, radius: f64) -> (Curve, Curve) {
    let params = grid.params();
    let draw = |rng: &mut R, r: f64| {
        let c = ExpSumProfile::random(rng, params).sample(grid);
        let n = lp_nu_norm(&c);
        if n > 0.0 {
            c.scaled(r / n)
        } else {
            c
        }
    };
    let r1 = radius * rng.random::<f64>();
    let f1 = draw(rng, r1);
    let f2 = if rng.random_bool(0.5) {
        let r2 = radius * rng.random::<f64>();
        draw(rng, r2)
    } else {
        let eps = radius * 10f64.powf(-1.0 - 3.0 * rng.random::<f64>());
        let mut f2 = f1.add(&draw(rng, eps)).expect("same grid");
        let n = lp_nu_norm(&f2);
        if n > radius {
            f2 = f2.scaled(radius / n);
        }
        f2
    };
    (f1, f2)
}

fn drift_or_diffusion_distance<D: Dynamics>(d: &D, diffusion: bool, f1: &Curve, f2: &Curve) -> f64 {
    if diffusion {
        d.diffusion(0.0, f1).sub(&d.diffusion(0.0, f2)).expect("same grid").gamma_norm()
    } else {
        lp_nu_norm(&d.drift(0.0, f1).sub(&d.drift(0.0, f2)).expect("same grid"))
    }
}

fn max_ratio<D: Dynamics>(d: &D, diffusion: bool, n_samples: usize, radius: f64, seed: u64, grid: &Arc<Grid>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..n_samples {
        let (f1, f2) = sample_ball_pair(&mut rng, grid, radius);
        let dist = lp_nu_norm(&f1.sub(&f2).expect("same grid"));
        if dist > 0.0 {
            best = best.max(drift_or_diffusion_distance(d, diffusion, &f1, &f2) / dist);
        }
    }
    best
}

/// Empirical `max ‖Φ(f₁) − Φ(f₂)‖ / ‖f₁ − f₂‖` over random pairs in the ball of radius
/// `radius`, together with the formula value when the volatility is dominated.
pub fn estimate_lipschitz(
    spec: &VolatilitySpec,
    mode: LipschitzMode,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if n_samples < 2 {
        return Err(invalid("at least two samples are needed"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    let grid = spec.grid();
    let (empirical, theoretical, formula) = match mode {
        LipschitzMode::F => (
            max_ratio(spec, false, n_samples, radius, seed, grid),
            theoretical_lipschitz_f(spec),
            FORMULA_L_F,
        ),
        LipschitzMode::G => (
            max_ratio(spec, true, n_samples, radius, seed, grid),
            Some(theoretical_lipschitz_g(spec, 1.0)),
            FORMULA_L_G,
        ),
        LipschitzMode::TruncatedF { level } => (
            max_ratio(&truncate_coefficients(spec, level, NormKind::Lp)?, false, n_samples, radius, seed, grid),
            theoretical_lipschitz_f(spec).map(|l| 3.0 * l),
            FORMULA_TRUNCATED,
        ),
        LipschitzMode::TruncatedG { level } => (
            max_ratio(&truncate_coefficients(spec, level, NormKind::Lp)?, true, n_samples, radius, seed, grid),
            Some(3.0 * theoretical_lipschitz_g(spec, 1.0)),
            FORMULA_TRUNCATED,
        ),
    };
    Ok(LipschitzEstimate {
        empirical,
        samples: n_samples,
        formula: theoretical.map(|_| formula.to_string()),
        theoretical,
    })
}

/// Empirical `max ‖Φ(f)‖ / (1 + ‖f‖²)^{1/2}` over random `f` in the ball of radius `radius`.
pub fn estimate_linear_growth<D: Dynamics>(
    dynamics: &D,
    grid: &Arc<Grid>,
    diffusion: bool,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..n_samples {
        let (f, _) = sample_ball_pair(&mut rng, grid, radius);
        let image = if diffusion {
            dynamics.diffusion(0.0, &f).gamma_norm()
        } else {
            lp_nu_norm(&dynamics.drift(0.0, &f))
        };
        best = best.max(image / (1.0 + lp_nu_norm(&f).powi(2)).sqrt());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaximalSettings {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub n_kernels: usize,
}

impl Default for MaximalSettings {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 0.05,
            n_paths: 200,
            n_kernels: 4,
        }
    }
}

/// Estimates `K` in `E sup_t ‖∫₀ᵗ S(t−r) ξ dW‖² ≤ K E ∫₀ᵀ ‖ξ‖²_γ` using frozen integrands
/// `ξ = G(f)` and Monte Carlo stochastic convolutions. Returns the largest ratio and the
/// number of simulated paths.
pub fn estimate_maximal_constant(spec: &VolatilitySpec, settings: MaximalSettings, seed: u64) -> Result<(f64, usize)> {
    let grid = spec.grid();
    if !(settings.dt > 0.0 && settings.horizon >= settings.dt) || settings.n_paths == 0 || settings.n_kernels == 0 {
        return Err(invalid("maximal-inequality settings need 0 < dt <= horizon and positive counts"));
    }
    // The step is snapped to the nearest positive multiple of the grid spacing.
    let steps_per_dt = ((settings.dt / grid.spacing()).round() as usize).max(1);
    let dt = steps_per_dt as f64 * grid.spacing();
    let steps = ((settings.horizon / dt).round() as usize).max(1);
    let horizon = steps as f64 * dt;
    let semigroup = ShiftSemigroup::zero_extension(grid.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.len();
    let d = spec.dim_h();
    let mut best = 0.0f64;
    let mut paths = 0;
    for k in 0..settings.n_kernels {
        let f = if k == 0 {
            Curve::zeros(grid.clone())
        } else {
            ExpSumProfile::random(&mut rng, grid.params()).sample(grid).scaled(rng.random_range(0.0..3.0))
        };
        let op = apply_g(spec, 0.0, &f)?;
        let gamma = op.gamma_norm();
        if gamma == 0.0 {
            continue;
        }
        let mut sup_sq = 0.0;
        let mut dw = vec![0.0; d];
        let mut z = vec![0.0; n];
        let mut next = vec![0.0; n];
        for path in 0..settings.n_paths {
            let mut noise = NoiseModel::new(d, seed, ((k as u64) << 32) | path as u64)?;
            z.fill(0.0);
            let mut path_sup = 0.0f64;
            for _ in 0..steps {
                noise.sample_increment_into(dt, &mut dw)?;
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi += op.kernel()[i * d..(i + 1) * d].iter().zip(&dw).map(|(a, b)| a * b).sum::<f64>();
                }
                semigroup.shift_lattice_into(steps_per_dt, &z, &mut next);
                std::mem::swap(&mut z, &mut next);
                path_sup = path_sup.max(crate::weighted_spaces::lp_norm_of(grid, &z));
            }
            sup_sq += path_sup * path_sup;
            paths += 1;
        }
        best = best.max(sup_sq / settings.n_paths as f64 / (horizon * gamma * gamma));
    }
    Ok((best, paths))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSettings {
    pub n_samples: usize,
    pub radius: f64,
    pub n_gamma: f64,
    pub maximal: MaximalSettings,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        Self {
            n_samples: 200,
            radius: 2.0,
            n_gamma: 1.0,
            maximal: MaximalSettings::default(),
        }
    }
}

/// Formula values where available plus empirical estimates of every constant.
pub fn estimate_constants(spec: &VolatilitySpec, settings: EstimateSettings, seed: u64) -> Result<ConstantsReport> {
    let mut report = ConstantsReport::theoretical(spec, settings.n_gamma);
    let lf = estimate_lipschitz(spec, LipschitzMode::F, settings.n_samples, settings.radius, seed)?;
    let lg = estimate_lipschitz(spec, LipschitzMode::G, settings.n_samples, settings.radius, seed ^ 1)?;
    let grid = spec.grid();
    let n = settings.n_samples;
    let gf = estimate_linear_growth(spec, grid, false, n, settings.radius, seed ^ 2);
    let gg = estimate_linear_growth(spec, grid, true, n, settings.radius, seed ^ 3);
    let add = |c: Option<Constant>, v: f64| Some(match c {
        Some(c) => c.with_sample(v, n),
        None => Constant::empirical(v, n),
    });
    report.l_f = add(report.l_f, lf.empirical);
    report.l_g = add(report.l_g, settings.n_gamma * lg.empirical);
    report.lbar_f = add(report.lbar_f, gf);
    report.lbar_g = add(report.lbar_g, settings.n_gamma * gg);
    let (k, paths) = estimate_maximal_constant(spec, settings.maximal, seed ^ 4)?;
    report.k_maximal = Some(Constant::empirical(k, paths));
    Ok(report)
}
