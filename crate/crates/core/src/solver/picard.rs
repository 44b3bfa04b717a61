//! Picard iteration of the discretized mild-solution map on contraction windows.

use serde::{Deserialize, Serialize};

use super::{Recorder, SimConfig, Stepper};
use crate::coefficients::{
    contraction_constant, estimate_maximal_constant, truncate_coefficients, Constant, ConstantsReport, Dynamics,
    MaximalSettings,
};
use crate::error::{invalid, HjmmError, Result};
use crate::noise::NoisePath;
use crate::semigroup::ShiftSemigroup;
use crate::weighted_spaces::{lp_norm_of, Curve};

/// Initial iterate of the Picard sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PicardInit {
    /// `v⁰(t) = u_a` for every time on the window.
    #[default]
    Constant,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Window length; `None` picks the largest lattice window with `C(T₀) ≤ 1/2`.
    pub window: Option<f64>,
    /// Maximal-inequality constant; estimated by Monte Carlo when absent.
    pub k_override: Option<f64>,
    pub n_gamma: f64,
    pub init: PicardInit,
    pub maximal: MaximalSettings,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 60,
            window: None,
            k_override: None,
            n_gamma: 1.0,
            init: PicardInit::Constant,
            maximal: MaximalSettings::default(),
        }
    }
}

/// The converged path on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardWindow {
    /// States at the `steps + 1` lattice times of the window.
    pub states: Vec<Vec<f64>>,
    /// Updates that moved the path by more than `tol`.
    pub iterations: usize,
    pub distances: Vec<f64>,
    /// `d_{k+1}/d_k` for the updates whose previous distance is above roundoff.
    pub ratios: Vec<f64>,
}

impl PicardWindow {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub start: f64,
    pub steps: usize,
    pub iterations: usize,
    pub max_ratio: f64,
    pub last_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardDiagnostics {
    pub window_steps: usize,
    pub window_length: f64,
    pub c_t0: Option<f64>,
    pub k_used: Option<f64>,
    pub junctions_bitwise: bool,
    pub windows: Vec<WindowReport>,
}

/// Iterates `v ↦ Φ(v)`, `Φ(v)(t_j) = S(t_j − a)u_a + Σ_{i<j} S(t_j − t_i)[F(v_i)dt + G(v_i)ΔW_i]`,
/// on the window starting at `t_a` whose increments are `noise`.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve<D: Dynamics + ?Sized>(
    dynamics: &D,
    semigroup: &ShiftSemigroup,
    u_a: &Curve,
    t_a: f64,
    noise: &NoisePath,
    tol: f64,
    max_iter: usize,
    init: PicardInit,
) -> Result<PicardWindow> {
    if **u_a.grid() != **semigroup.grid() {
        return Err(HjmmError::GridMismatch);
    }
    if noise.dim_h() != dynamics.dim_h() {
        return Err(HjmmError::DimensionMismatch {
            expected: dynamics.dim_h(),
            got: noise.dim_h(),
        });
    }
    if tol.is_nan() || tol <= 0.0 || max_iter == 0 {
        return Err(invalid("picard needs tol > 0 and max_iter >= 1"));
    }
    let grid = u_a.grid();
    let dt = noise.dt();
    let m = noise.steps();
    let n = grid.len();
    let mut stepper = Stepper::new(dynamics, semigroup, dt)?;
    let first = match init {
        PicardInit::Constant => u_a.values().to_vec(),
        PicardInit::Zero => vec![0.0; n],
    };
    let mut v = vec![first; m + 1];
    v[0] = u_a.values().to_vec();
    let mut next = v.clone();
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let mut diff = vec![0.0; n];
    for k in 1..=max_iter {
        for j in 1..=m {
            let (done, rest) = next.split_at_mut(j);
            stepper.step_from(t_a + (j - 1) as f64 * dt, &done[j - 1], &v[j - 1], noise.increment(j - 1), &mut rest[0])?;
        }
        let mut dist = 0.0f64;
        let mut scale = 0.0f64;
        for (a, b) in next.iter().zip(&v) {
            for ((d, x), y) in diff.iter_mut().zip(a).zip(b) {
                *d = x - y;
            }
            dist = dist.max(lp_norm_of(grid, &diff));
            scale = scale.max(lp_norm_of(grid, a));
        }
        if let Some(&prev) = distances.last() {
            if prev > 1e-13 * (1.0 + scale) {
                ratios.push(dist / prev);
            }
        }
        distances.push(dist);
        std::mem::swap(&mut v, &mut next);
        if dist <= tol {
            return Ok(PicardWindow {
                states: v,
                iterations: k - 1,
                distances,
                ratios,
            });
        }
    }
    Err(HjmmError::PicardNonConvergence {
        window_start: t_a,
        iterations: max_iter,
        last_ratio: ratios.last().copied().unwrap_or(f64::NAN),
        last_distance: distances.last().copied().unwrap_or(f64::NAN),
    })
}

/// Largest `m ≤ max_steps` with `C(m·dt) ≤ 1/2` at `β = 0`.
pub fn auto_window_steps(report: &ConstantsReport, dt: f64, max_steps: usize) -> Result<usize> {
    let mut best = 0;
    for m in 1..=max_steps {
        if contraction_constant(report, m as f64 * dt, 0.0)? <= 0.5 {
            best = m;
        } else {
            break;
        }
    }
    if best == 0 {
        return Err(invalid(format!(
            "C(dt) = {} exceeds 1/2 already for a single step; reduce dt",
            contraction_constant(report, dt, 0.0)?
        )));
    }
    Ok(best)
}

/// Formula Lipschitz constants and `K` (given or estimated) for the auto-window.
fn window_constants(config: &SimConfig) -> Result<ConstantsReport> {
    let settings = &config.picard;
    let mut report = ConstantsReport::theoretical(&config.spec, settings.n_gamma);
    if report.l_f.is_none() {
        return Err(invalid(
            "automatic picard windows need global Lipschitz constants; set an explicit window for this volatility",
        ));
    }
    report.k_maximal = Some(match settings.k_override {
        Some(k) => Constant::theoretical(k, "configured"),
        None => {
            let horizon_steps = ((settings.maximal.horizon.min(config.t_end) / config.dt).round() as usize).max(1);
            let maximal = MaximalSettings {
                dt: config.dt,
                horizon: horizon_steps as f64 * config.dt,
                ..settings.maximal
            };
            let (k, paths) = estimate_maximal_constant(&config.spec, maximal, config.seed ^ 0x6b)?;
            Constant::empirical(k, paths)
        }
    });
    Ok(report)
}

/// Solves on consecutive windows `[kT₀, (k+1)T₀]`, each started from the end of the previous.
pub fn concatenate_windows(config: &SimConfig) -> Result<crate::solver::PathResult> {
    config.validate()?;
    match config.truncation {
        Some(n) => concatenate_with(config, &truncate_coefficients(config.spec.as_ref(), n, config.truncation_norm)?),
        None => concatenate_with(config, config.spec.as_ref()),
    }
}

fn concatenate_with<D: Dynamics + ?Sized>(config: &SimConfig, dynamics: &D) -> Result<crate::solver::PathResult> {
    let settings = &config.picard;
    let steps = config.steps()?;
    let (window_steps, report, c_t0) = match settings.window {
        Some(w) => {
            let m = (w / config.dt).round();
            if m < 1.0 || (w / config.dt - m).abs() > 1e-9 * m {
                return Err(invalid(format!("picard window {w} is not a multiple of dt {}", config.dt)));
            }
            (m as usize, None, None)
        }
        None => {
            let report = window_constants(config)?;
            let m = auto_window_steps(&report, config.dt, steps)?;
            let c = contraction_constant(&report, m as f64 * config.dt, 0.0)?;
            (m, Some(report), Some(c))
        }
    };
    let semigroup = config.semigroup()?;
    let noise = config.noise()?.sample_path(config.dt, steps)?;
    let grid = config.grid().clone();
    let mut recorder = Recorder::new(grid.clone(), config.snapshot_stride, config.truncation.map(|n| (n, config.truncation_norm)));
    recorder.record(0.0, config.r0.values(), false);
    let mut start = 0;
    let mut u_a = config.r0.clone();
    let mut windows = Vec::new();
    let mut junctions_bitwise = true;
    while start < steps {
        let len = window_steps.min(steps - start);
        let t_a = start as f64 * config.dt;
        let w = picard_solve(
            dynamics,
            &semigroup,
            &u_a,
            t_a,
            &noise.window(start, len),
            settings.tol,
            settings.max_iter,
            settings.init,
        )?;
        junctions_bitwise &= w.states[0] == u_a.values();
        for (j, s) in w.states.iter().enumerate().skip(1) {
            recorder.record((start + j) as f64 * config.dt, s, start + j == steps);
        }
        windows.push(WindowReport {
            start: t_a,
            steps: len,
            iterations: w.iterations,
            max_ratio: w.max_ratio(),
            last_distance: *w.distances.last().expect("at least one iteration"),
        });
        u_a = Curve::from_trusted(grid.clone(), w.states[len].clone());
        start += len;
    }
    let mut result = recorder.finish();
    result.picard = Some(PicardDiagnostics {
        window_steps,
        window_length: window_steps as f64 * config.dt,
        c_t0,
        k_used: report.as_ref().and_then(|r| r.k_maximal.as_ref()).map(|k| k.value),
        junctions_bitwise,
        windows,
    });
    result.diagnostics = report;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{ExponentialFactor, VolatilitySpec};
    use crate::noise::NoiseModel;
    use crate::solver::{simulate, Scheme};
    use crate::weighted_spaces::{Grid, SpaceParams};
    use std::sync::Arc;

    fn setup() -> (Arc<Grid>, Arc<VolatilitySpec>, Curve) {
        let g = Grid::new(SpaceParams::new(2.0, 2.0).unwrap(), 10.0, 200).unwrap();
        let spec = VolatilitySpec::exponential(
            g.clone(),
            vec![
                ExponentialFactor { sigma: 0.6, lambda: 1.5, level: 0.7, slope: 0.3 },
                ExponentialFactor { sigma: 0.3, lambda: 2.0, level: 0.2, slope: 0.5 },
            ],
            2,
            None,
        )
        .unwrap();
        let r0 = Curve::from_fn(g.clone(), |x| 0.5 * (-1.5 * x).exp() * (1.0 + x.sin())).unwrap();
        (g, Arc::new(spec), r0)
    }

    #[test]
    fn transport_only_converges_after_one_update() {
        let (g, _, r0) = setup();
        let zero = VolatilitySpec::zero(g.clone(), 1).unwrap();
        let sg = ShiftSemigroup::zero_extension(g.clone());
        let noise = NoiseModel::new(1, 1, 0).unwrap().sample_path(0.1, 10).unwrap();
        let w = picard_solve(&zero, &sg, &r0, 0.0, &noise, 1e-8, 60, PicardInit::Constant).unwrap();
        assert_eq!(w.iterations, 1);
        for (j, s) in w.states.iter().enumerate() {
            assert_eq!(s.as_slice(), sg.shift(j as f64 * 0.1, &r0).unwrap().values());
        }
    }

    #[test]
    fn fixed_point_is_the_euler_path() {
        let (_, spec, r0) = setup();
        let mut cfg = SimConfig::new(spec, r0, 2.0, 0.1, 4);
        cfg.picard.window = Some(0.5);
        cfg.scheme = Scheme::Picard;
        let picard = simulate(&cfg).unwrap();
        cfg.scheme = Scheme::ExpEuler;
        let euler = simulate(&cfg).unwrap();
        let diag = picard.picard.as_ref().unwrap();
        assert_eq!(diag.windows.len(), 4);
        assert!(diag.junctions_bitwise);
        for (a, b) in picard.curves.iter().zip(&euler.curves) {
            assert!(crate::weighted_spaces::lp_nu_norm(&a.sub(b).unwrap()) < 1e-7);
        }
    }

    #[test]
    fn auto_window_respects_contraction() {
        let (_, spec, r0) = setup();
        let mut cfg = SimConfig::new(spec, r0, 2.0, 0.05, 4);
        cfg.scheme = Scheme::Picard;
        cfg.picard.k_override = Some(2.0);
        let p = simulate(&cfg).unwrap();
        let d = p.picard.unwrap();
        assert!(d.c_t0.unwrap() <= 0.5);
        let report = p.diagnostics.unwrap();
        if d.window_steps < 40 {
            let next = contraction_constant(&report, (d.window_steps + 1) as f64 * 0.05, 0.0).unwrap();
            assert!(next > 0.5);
        }
        assert!(d.windows.iter().all(|w| w.max_ratio <= 0.6));
    }

    #[test]
    fn distinct_initial_iterates_agree() {
        let (_, spec, r0) = setup();
        let mut cfg = SimConfig::new(spec, r0, 1.0, 0.05, 8);
        cfg.scheme = Scheme::Picard;
        cfg.picard.window = Some(0.25);
        let a = simulate(&cfg).unwrap();
        cfg.picard.init = PicardInit::Zero;
        let b = simulate(&cfg).unwrap();
        let tol = cfg.picard.tol;
        for (x, y) in a.curves.iter().zip(&b.curves) {
            assert!(crate::weighted_spaces::lp_nu_norm(&x.sub(y).unwrap()) <= 2.0 * tol);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let (g, spec, r0) = setup();
        let sg = ShiftSemigroup::zero_extension(g);
        let noise = NoiseModel::new(2, 1, 0).unwrap().sample_path(0.05, 20).unwrap();
        match picard_solve(spec.as_ref(), &sg, &r0, 0.0, &noise, 1e-14, 2, PicardInit::Zero) {
            Err(HjmmError::PicardNonConvergence { iterations, last_distance, .. }) => {
                assert_eq!(iterations, 2);
                assert!(last_distance > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
