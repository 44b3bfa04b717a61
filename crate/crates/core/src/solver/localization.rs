//! Truncation levels and the discrete stopping times `τ_n`.

use serde::Serialize;

use super::{run_ensemble, simulate, PathResult, SimConfig};
use crate::error::{invalid, Result};
use crate::stats::Moments;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub levels: Vec<f64>,
    pub tau_hit: Vec<Option<f64>>,
    /// Whether the paths at consecutive levels agree bitwise up to and including `τ` of
    /// the smaller level (the whole path when it is never hit).
    pub agree_before_tau: Vec<bool>,
    #[serde(skip)]
    pub paths: Vec<PathResult>,
}

/// Index of the first snapshot where two paths differ bitwise.
pub fn first_divergence(a: &PathResult, b: &PathResult) -> Option<usize> {
    let common = a.curves.len().min(b.curves.len());
    (0..common)
        .find(|&k| a.curves[k] != b.curves[k])
        .or((a.curves.len() != b.curves.len()).then_some(common))
}

/// Simulates with truncated coefficients at each level, sharing the noise.
pub fn localization_run(config: &SimConfig, levels: &[f64]) -> Result<LocalizationReport> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) || levels[0] <= 0.0 {
        return Err(invalid("truncation levels must be positive and strictly increasing"));
    }
    let paths = levels
        .iter()
        .map(|&n| {
            let cfg = SimConfig {
                truncation: Some(n),
                snapshot_stride: 1,
                ..config.clone()
            };
            simulate(&cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let agree_before_tau = paths
        .windows(2)
        .map(|w| match (first_divergence(&w[0], &w[1]), w[0].tau_step) {
            (None, _) => true,
            (Some(k), Some(tau)) => k > tau,
            (Some(_), None) => false,
        })
        .collect();
    Ok(LocalizationReport {
        levels: levels.to_vec(),
        tau_hit: paths.iter().map(|p| p.tau_hit).collect(),
        agree_before_tau,
        paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriRow {
    pub level: f64,
    /// Monte Carlo estimate of `E sup_{t≤T} ‖u^n(t)‖²`.
    pub sup_sq: Moments,
    pub hit_fraction: f64,
}

/// `E sup_t ‖u^n(t)‖²` per truncation level over `n_paths` independent streams.
pub fn apriori_table(config: &SimConfig, levels: &[f64], n_paths: usize) -> Result<Vec<AprioriRow>> {
    levels
        .iter()
        .map(|&n| {
            let samples = run_ensemble(n_paths, |path| {
                let cfg = SimConfig {
                    truncation: Some(n),
                    snapshot_stride: usize::MAX,
                    ..config.with_stream(path)
                };
                let p = simulate(&cfg)?;
                let sup = p.norms.iter().fold(0.0f64, |m, v| m.max(*v));
                Ok((sup * sup, p.tau_hit.is_some()))
            })?;
            let sq: Vec<f64> = samples.iter().map(|s| s.0).collect();
            Ok(AprioriRow {
                level: n,
                sup_sq: Moments::of(&sq),
                hit_fraction: samples.iter().filter(|s| s.1).count() as f64 / n_paths.max(1) as f64,
            })
        })
        .collect()
}
