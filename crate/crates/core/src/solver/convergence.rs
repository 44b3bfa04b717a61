//! Strong self-convergence in the time step and the Markov restart test.

use serde::Serialize;

use super::{config_dynamics, run_ensemble, run_exp_euler, PathCursor, SimConfig};
use crate::error::{invalid, Result};
use crate::noise::NoiseModel;
use crate::stats::{linear_fit, LinearFit, Moments};
use crate::weighted_spaces::{lp_nu_norm, lp_norm_of, Curve};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub reference_dt: f64,
    pub dts: Vec<f64>,
    /// Root-mean-square `‖u^{dt}(T) − u^{ref}(T)‖_{ν,p}` over the paths.
    pub errors: Vec<f64>,
    /// Slope of `log error` against `log dt`; positive for a converging scheme.
    pub order: f64,
    pub fit: LinearFit,
    pub n_paths: usize,
}

/// Compares runs with `dt = config.dt · 2^{k+3}`, `k = 0..levels`, against a reference run at
/// `config.dt`. Coarse increments are sums of the reference increments.
pub fn convergence_study(config: &SimConfig, levels: usize, n_paths: usize) -> Result<ConvergenceReport> {
    config.validate()?;
    if levels < 2 || n_paths == 0 {
        return Err(invalid("a convergence study needs at least two levels and one path"));
    }
    let factors: Vec<usize> = (0..levels).map(|k| 1usize << (k + 3)).collect();
    let ref_steps = config.steps()?;
    let coarsest = *factors.last().expect("levels >= 2");
    if ref_steps % coarsest != 0 {
        return Err(invalid(format!(
            "t_end must be a multiple of the coarsest step {}",
            config.dt * coarsest as f64
        )));
    }
    let dynamics = config_dynamics(config)?;
    let semigroup = config.semigroup()?;
    let d = config.spec.dim_h();
    let per_path = run_ensemble(n_paths, |path| {
        let fine = NoiseModel::new(d, config.seed, path)?.sample_path(config.dt, ref_steps)?;
        let final_of = |noise: &crate::noise::NoisePath| -> Result<Vec<f64>> {
            let p = run_exp_euler(
                dynamics.as_ref(),
                &semigroup,
                &config.r0,
                0.0,
                noise.dt(),
                noise.steps(),
                &mut PathCursor::new(noise),
                usize::MAX,
                None,
            )?;
            Ok(p.final_curve().values().to_vec())
        };
        let reference = final_of(&fine)?;
        factors
            .iter()
            .map(|&f| {
                let coarse = final_of(&fine.coarsen(f)?)?;
                let diff: Vec<f64> = coarse.iter().zip(&reference).map(|(a, b)| a - b).collect();
                Ok(lp_norm_of(config.grid(), &diff).powi(2))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let dts: Vec<f64> = factors.iter().map(|&f| config.dt * f as f64).collect();
    let errors: Vec<f64> = (0..levels)
        .map(|k| (per_path.iter().map(|e| e[k]).sum::<f64>() / n_paths as f64).sqrt())
        .collect();
    let log_dt: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let log_err: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&log_dt, &log_err);
    Ok(ConvergenceReport {
        reference_dt: config.dt,
        dts,
        errors,
        order: fit.slope,
        fit,
        n_paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentComparison {
    pub statistic: String,
    pub first: Moments,
    pub second: Moments,
    pub z_score: f64,
}

/// First and second moments of each statistic column compared across two samples.
pub(crate) fn compare_moments(names: &[String], first: &[Vec<f64>], second: &[Vec<f64>]) -> Vec<MomentComparison> {
    let mut comparisons = Vec::new();
    for (k, name) in names.iter().enumerate() {
        for power in [1, 2] {
            let column = |rows: &[Vec<f64>]| -> Vec<f64> { rows.iter().map(|r| r[k].powi(power)).collect() };
            let a = Moments::of(&column(first));
            let b = Moments::of(&column(second));
            comparisons.push(MomentComparison {
                statistic: format!("{name}^{power}"),
                z_score: a.z_score(&b),
                first: a,
                second: b,
            });
        }
    }
    comparisons
}

pub(crate) fn probe_names(probes: &[f64]) -> Vec<String> {
    let mut names = vec!["norm".to_string()];
    names.extend(probes.iter().map(|x| format!("probe_x{x}")));
    names
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovReport {
    pub restart_time: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub comparisons: Vec<MomentComparison>,
    pub max_z: f64,
    pub passed: bool,
}

/// Statistics of a terminal curve: the norm and the curve at each probe maturity.
pub(crate) fn probe_statistics(curve: &Curve, probes: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![lp_nu_norm(curve)];
    for &x in probes {
        out.push(curve.interpolate(x)?);
    }
    Ok(out)
}

/// Straight runs to `t_end` against runs stopped at `restart`, then continued from the stopped
/// curve with a fresh noise stream. First and second moments of the norm and of the probe
/// values at `t_end` must agree within `z_max` standard errors. `first` holds the straight
/// runs and `second` the restarted ones.
pub fn markov_restart_test(
    config: &SimConfig,
    restart: f64,
    probes: &[f64],
    n_paths: usize,
    z_max: f64,
) -> Result<MarkovReport> {
    config.validate()?;
    let steps = config.steps()?;
    let first = (restart / config.dt).round() as usize;
    if first == 0 || first >= steps || (restart / config.dt - first as f64).abs() > 1e-9 * first as f64 {
        return Err(invalid("restart time must be a lattice time strictly inside (0, t_end)"));
    }
    if n_paths < 2 {
        return Err(invalid("at least two paths are needed"));
    }
    let dynamics = config_dynamics(config)?;
    let semigroup = config.semigroup()?;
    let d = config.spec.dim_h();
    let n = n_paths as u64;
    let run = |r0: &Curve, t0: f64, steps: usize, stream: u64| -> Result<Curve> {
        let mut noise = NoiseModel::new(d, config.seed, stream)?;
        let p = run_exp_euler(dynamics.as_ref(), &semigroup, r0, t0, config.dt, steps, &mut noise, usize::MAX, None)?;
        Ok(p.final_curve().clone())
    };
    let straight = run_ensemble(n_paths, |i| probe_statistics(&run(&config.r0, 0.0, steps, i)?, probes))?;
    let restarted = run_ensemble(n_paths, |i| {
        let mid = run(&config.r0, 0.0, first, n + i)?;
        probe_statistics(&run(&mid, restart, steps - first, 2 * n + i)?, probes)
    })?;
    let comparisons = compare_moments(&probe_names(probes), &straight, &restarted);
    let max_z = comparisons.iter().map(|c| c.z_score).fold(0.0, f64::max);
    Ok(MarkovReport {
        restart_time: restart,
        t_end: config.t_end,
        n_paths,
        comparisons,
        max_z,
        passed: max_z <= z_max,
    })
}
