//! Mild-solution solvers: exponential Euler stepping, Picard windows and localization.

mod convergence;
mod localization;
mod picard;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use convergence::{
    convergence_study, markov_restart_test, ConvergenceReport, MarkovReport, MomentComparison,
};
pub(crate) use convergence::{compare_moments, probe_names, probe_statistics};
pub use localization::{apriori_table, first_divergence, localization_run, AprioriRow, LocalizationReport};
pub use picard::{
    auto_window_steps, concatenate_windows, picard_solve, PicardDiagnostics, PicardInit, PicardSettings,
    PicardWindow, WindowReport,
};

use crate::coefficients::{truncate_coefficients, ConstantsReport, Dynamics, VolatilitySpec};
use crate::error::{invalid, HjmmError, Result};
use crate::noise::{NoiseModel, NoisePath};
use crate::semigroup::{Extension, ShiftSemigroup};
use crate::weighted_spaces::{lp_norm_of, Curve, Grid, NormKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExpEuler,
    Picard,
}

/// Everything that determines a simulated path.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: Arc<VolatilitySpec>,
    pub r0: Curve,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub scheme: Scheme,
    pub picard: PicardSettings,
    pub truncation: Option<f64>,
    pub truncation_norm: NormKind,
    pub extension: Extension,
    /// Keep every `snapshot_stride`-th curve (the final curve is always kept).
    pub snapshot_stride: usize,
}

impl SimConfig {
    pub fn new(spec: Arc<VolatilitySpec>, r0: Curve, t_end: f64, dt: f64, seed: u64) -> Self {
        Self {
            spec,
            r0,
            t_end,
            dt,
            seed,
            stream_id: 0,
            scheme: Scheme::ExpEuler,
            picard: PicardSettings::default(),
            truncation: None,
            truncation_norm: NormKind::Lp,
            extension: Extension::Zero,
            snapshot_stride: 1,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.r0.grid()
    }

    /// Number of grid cells the shift moves per time step.
    pub fn lattice_steps_per_dt(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {}", self.dt)));
        }
        match self.grid().lattice_steps(self.dt) {
            Some(m) if m >= 1 => Ok(m),
            _ => Err(invalid(format!(
                "time step {} is not a positive multiple of the grid spacing {}",
                self.dt,
                self.grid().spacing()
            ))),
        }
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(invalid(format!("t_end must be positive, got {}", self.t_end)));
        }
        let ratio = self.t_end / self.dt;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(format!("t_end {} is not a multiple of dt {}", self.t_end, self.dt)));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if **self.spec.grid() != **self.grid() {
            return Err(HjmmError::GridMismatch);
        }
        self.lattice_steps_per_dt()?;
        self.steps()?;
        if let Some(n) = self.truncation {
            if !(n.is_finite() && n > 0.0) {
                return Err(invalid(format!("truncation level must be positive, got {n}")));
            }
        }
        ShiftSemigroup::new(self.grid().clone(), self.extension)?;
        Ok(())
    }

    pub fn semigroup(&self) -> Result<ShiftSemigroup> {
        ShiftSemigroup::new(self.grid().clone(), self.extension)
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.spec.dim_h(), self.seed, self.stream_id)
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            stream_id,
            ..self.clone()
        }
    }
}

/// Output of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    /// Time of every step, starting at the initial time.
    pub times: Vec<f64>,
    /// `‖u(t_k)‖_{ν,p}` for every step.
    pub norms: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    #[serde(skip)]
    pub curves: Vec<Curve>,
    /// First time the truncation norm reaches the truncation level.
    pub tau_hit: Option<f64>,
    pub tau_step: Option<usize>,
    pub diagnostics: Option<ConstantsReport>,
    pub picard: Option<PicardDiagnostics>,
}

impl PathResult {
    pub fn final_curve(&self) -> &Curve {
        self.curves.last().expect("a path has at least one snapshot")
    }
}

/// Supplies Brownian increments step by step.
pub trait IncrementSource {
    fn next_increment(&mut self, dt: f64, out: &mut [f64]) -> Result<()>;
}

impl IncrementSource for NoiseModel {
    fn next_increment(&mut self, dt: f64, out: &mut [f64]) -> Result<()> {
        self.sample_increment_into(dt, out)
    }
}

/// Reads increments of a frozen path in order.
pub struct PathCursor<'a> {
    path: &'a NoisePath,
    next: usize,
}

impl<'a> PathCursor<'a> {
    pub fn new(path: &'a NoisePath) -> Self {
        Self { path, next: 0 }
    }
}

impl IncrementSource for PathCursor<'_> {
    fn next_increment(&mut self, dt: f64, out: &mut [f64]) -> Result<()> {
        if (dt - self.path.dt()).abs() > 1e-12 * dt {
            return Err(invalid(format!("noise path has step {}, solver uses {dt}", self.path.dt())));
        }
        if self.next >= self.path.steps() {
            return Err(invalid("noise path is shorter than the simulation"));
        }
        out.copy_from_slice(self.path.increment(self.next));
        self.next += 1;
        Ok(())
    }
}

/// Reusable buffers for `u ↦ S(dt)[u + F(t,u)dt + G(t,u)ΔW]` on a fixed grid.
pub(crate) struct Stepper<'a, D: ?Sized> {
    dynamics: &'a D,
    semigroup: &'a ShiftSemigroup,
    shift: usize,
    dt: f64,
    drift: Vec<f64>,
    kernel: Vec<f64>,
    work: Vec<f64>,
}

impl<'a, D: Dynamics + ?Sized> Stepper<'a, D> {
    pub(crate) fn new(dynamics: &'a D, semigroup: &'a ShiftSemigroup, dt: f64) -> Result<Self> {
        let grid = semigroup.grid();
        let shift = grid
            .lattice_steps(dt)
            .filter(|m| *m >= 1)
            .ok_or_else(|| invalid(format!("time step {dt} is not a positive multiple of the grid spacing")))?;
        let n = grid.len();
        Ok(Self {
            dynamics,
            semigroup,
            shift,
            dt,
            drift: vec![0.0; n],
            kernel: vec![0.0; n * dynamics.dim_h()],
            work: vec![0.0; n],
        })
    }

    /// Writes the pre-shift increment `u + F dt + G ΔW` evaluated at `at` into `work`,
    /// added to `base`.
    fn increment(&mut self, t: f64, base: &[f64], at: &[f64], dw: &[f64]) {
        let grid = self.semigroup.grid();
        self.dynamics.evaluate(t, grid, at, &mut self.drift, &mut self.kernel);
        let d = dw.len();
        for (i, (out, b)) in self.work.iter_mut().zip(base).enumerate() {
            let k = &self.kernel[i * d..(i + 1) * d];
            let noise: f64 = k.iter().zip(dw).map(|(a, b)| a * b).sum();
            *out = b + self.drift[i] * self.dt + noise;
        }
    }

    pub(crate) fn step(&mut self, t: f64, state: &[f64], dw: &[f64], out: &mut [f64]) -> Result<()> {
        self.step_from(t, state, state, dw, out)
    }

    /// `S(dt)[base + F(t,at)dt + G(t,at)ΔW]`, the building block of both schemes.
    pub(crate) fn step_from(&mut self, t: f64, base: &[f64], at: &[f64], dw: &[f64], out: &mut [f64]) -> Result<()> {
        self.increment(t, base, at, dw);
        if let Some(i) = self.work.iter().position(|v| !v.is_finite()) {
            return Err(HjmmError::NumericalAbort {
                t,
                detail: format!("non-finite value at node {i}"),
            });
        }
        self.semigroup.shift_lattice_into(self.shift, &self.work, out);
        Ok(())
    }
}

/// One exponential Euler step `S(dt)[u + F(t,u)dt + G(t,u)ΔW]` with a fresh increment.
pub fn step_exp_euler<D: Dynamics + ?Sized>(
    dynamics: &D,
    semigroup: &ShiftSemigroup,
    state: &Curve,
    t: f64,
    dt: f64,
    noise: &mut dyn IncrementSource,
) -> Result<Curve> {
    if **state.grid() != **semigroup.grid() {
        return Err(HjmmError::GridMismatch);
    }
    let mut dw = vec![0.0; dynamics.dim_h()];
    noise.next_increment(dt, &mut dw)?;
    let mut stepper = Stepper::new(dynamics, semigroup, dt)?;
    let mut out = vec![0.0; state.values().len()];
    stepper.step(t, state.values(), &dw, &mut out)?;
    Ok(Curve::from_trusted(state.grid().clone(), out))
}

/// Path recorder shared by the schemes.
pub(crate) struct Recorder {
    grid: Arc<Grid>,
    stride: usize,
    tau_level: Option<(f64, NormKind)>,
    result: PathResult,
}

impl Recorder {
    pub(crate) fn new(grid: Arc<Grid>, stride: usize, tau_level: Option<(f64, NormKind)>) -> Self {
        Self {
            grid,
            stride: stride.max(1),
            tau_level,
            result: PathResult {
                times: Vec::new(),
                norms: Vec::new(),
                snapshot_times: Vec::new(),
                curves: Vec::new(),
                tau_hit: None,
                tau_step: None,
                diagnostics: None,
                picard: None,
            },
        }
    }

    pub(crate) fn record(&mut self, t: f64, values: &[f64], is_last: bool) {
        let k = self.result.times.len();
        self.result.times.push(t);
        self.result.norms.push(lp_norm_of(&self.grid, values));
        if let Some((level, kind)) = self.tau_level {
            if self.result.tau_hit.is_none() && kind.norm_of(&self.grid, values) >= level {
                self.result.tau_hit = Some(t);
                self.result.tau_step = Some(k);
            }
        }
        if k.is_multiple_of(self.stride) || is_last {
            self.result.snapshot_times.push(t);
            self.result.curves.push(Curve::from_trusted(self.grid.clone(), values.to_vec()));
        }
    }

    pub(crate) fn finish(self) -> PathResult {
        self.result
    }
}

/// Runs `steps` exponential Euler steps from `r0` at time `t0`.
#[allow(clippy::too_many_arguments)]
pub fn run_exp_euler<D: Dynamics + ?Sized>(
    dynamics: &D,
    semigroup: &ShiftSemigroup,
    r0: &Curve,
    t0: f64,
    dt: f64,
    steps: usize,
    noise: &mut dyn IncrementSource,
    stride: usize,
    tau_level: Option<(f64, NormKind)>,
) -> Result<PathResult> {
    if **r0.grid() != **semigroup.grid() {
        return Err(HjmmError::GridMismatch);
    }
    let mut stepper = Stepper::new(dynamics, semigroup, dt)?;
    let mut recorder = Recorder::new(r0.grid().clone(), stride, tau_level);
    let mut state = r0.values().to_vec();
    let mut next = vec![0.0; state.len()];
    let mut dw = vec![0.0; dynamics.dim_h()];
    recorder.record(t0, &state, steps == 0);
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        noise.next_increment(dt, &mut dw)?;
        stepper.step(t, &state, &dw, &mut next)?;
        std::mem::swap(&mut state, &mut next);
        recorder.record(t0 + (k + 1) as f64 * dt, &state, k + 1 == steps);
    }
    Ok(recorder.finish())
}

/// Simulates with caller-supplied dynamics; the volatility in `config` only fixes the grid,
/// noise dimension and diagnostics.
pub fn simulate_dynamics<D: Dynamics + ?Sized>(config: &SimConfig, dynamics: &D) -> Result<PathResult> {
    config.validate()?;
    let semigroup = config.semigroup()?;
    let steps = config.steps()?;
    let mut noise = NoiseModel::new(dynamics.dim_h(), config.seed, config.stream_id)?;
    let tau = config.truncation.map(|n| (n, config.truncation_norm));
    run_exp_euler(
        dynamics,
        &semigroup,
        &config.r0,
        0.0,
        config.dt,
        steps,
        &mut noise,
        config.snapshot_stride,
        tau,
    )
}

/// The volatility coefficients, truncated when `config` sets a level.
pub(crate) fn config_dynamics(config: &SimConfig) -> Result<Box<dyn Dynamics + '_>> {
    Ok(match config.truncation {
        Some(n) => Box::new(truncate_coefficients(config.spec.as_ref(), n, config.truncation_norm)?),
        None => Box::new(config.spec.as_ref()),
    })
}

/// Full path for `config`, with truncated coefficients when a truncation level is set.
pub fn simulate(config: &SimConfig) -> Result<PathResult> {
    config.validate()?;
    let mut result = match config.scheme {
        Scheme::ExpEuler => simulate_dynamics(config, config_dynamics(config)?.as_ref())?,
        Scheme::Picard => concatenate_windows(config)?,
    };
    if result.diagnostics.is_none() {
        result.diagnostics = Some(ConstantsReport::theoretical(&config.spec, config.picard.n_gamma));
    }
    Ok(result)
}

/// Runs `f` for paths `0..n_paths` in parallel; results keep path order.
pub fn run_ensemble<T, F>(n_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..n_paths as u64).into_par_iter().map(&f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{apply_f, ExponentialFactor};
    use crate::weighted_spaces::{lp_nu_norm, SpaceParams};

    fn grid() -> Arc<Grid> {
        Grid::new(SpaceParams::new(2.0, 2.0).unwrap(), 10.0, 200).unwrap()
    }

    fn spec(g: &Arc<Grid>, slope: f64) -> Arc<VolatilitySpec> {
        Arc::new(
            VolatilitySpec::exponential(
                g.clone(),
                vec![ExponentialFactor { sigma: 0.5, lambda: 1.5, level: 0.8, slope }],
                2,
                None,
            )
            .unwrap(),
        )
    }

    #[test]
    fn zero_volatility_is_exact_transport() {
        let g = grid();
        let zero = Arc::new(VolatilitySpec::zero(g.clone(), 1).unwrap());
        let r0 = Curve::from_fn(g.clone(), |x| 0.03 + 0.01 * (-x).exp()).unwrap();
        let mut cfg = SimConfig::new(zero, r0.clone(), 2.0, 0.1, 1);
        cfg.extension = Extension::ConstantLast;
        let path = simulate(&cfg).unwrap();
        let s = cfg.semigroup().unwrap();
        for (t, c) in path.snapshot_times.iter().zip(&path.curves) {
            assert_eq!(c, &s.shift(*t, &r0).unwrap());
        }
        let flat = Curve::from_fn(g, |_| 0.04).unwrap();
        cfg.r0 = flat.clone();
        for c in &simulate(&cfg).unwrap().curves {
            assert_eq!(c, &flat);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let g = grid();
        let r0 = Curve::from_fn(g.clone(), |x| 0.02 * (-x).exp()).unwrap();
        let cfg = SimConfig::new(spec(&g, 0.4), r0, 1.0, 0.05, 17);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = simulate(&cfg.with_stream(1)).unwrap();
        assert_ne!(other.final_curve(), simulate(&cfg).unwrap().final_curve());
    }

    #[test]
    fn drift_only_step_definition() {
        let g = grid();
        let s = spec(&g, 0.0);
        let r0 = Curve::from_fn(g.clone(), |x| (-x).exp() * x.cos()).unwrap();
        let sg = ShiftSemigroup::zero_extension(g.clone());
        struct DriftOnly(Arc<VolatilitySpec>);
        impl Dynamics for DriftOnly {
            fn dim_h(&self) -> usize {
                self.0.dim_h()
            }
            fn evaluate(&self, t: f64, grid: &Grid, state: &[f64], drift: &mut [f64], kernel: &mut [f64]) {
                self.0.evaluate(t, grid, state, drift, kernel);
                kernel.fill(0.0);
            }
        }
        let dt = 0.1;
        let mut noise = NoiseModel::new(2, 3, 0).unwrap();
        let u1 = step_exp_euler(&DriftOnly(s.clone()), &sg, &r0, 0.0, dt, &mut noise).unwrap();
        let f = apply_f(&s, 0.0, &r0).unwrap();
        let m = g.lattice_steps(dt).unwrap();
        for i in 0..g.len() {
            let expect = if i + m < g.len() {
                r0.values()[i + m] + dt * f.values()[i + m]
            } else {
                0.0
            };
            assert_eq!(u1.values()[i], expect);
        }
    }

    #[test]
    fn rejects_off_lattice_steps_and_nan() {
        let g = grid();
        let r0 = Curve::zeros(g.clone());
        let cfg = SimConfig::new(spec(&g, 0.4), r0.clone(), 1.0, 0.07, 1);
        assert!(simulate(&cfg).is_err());
        let cfg = SimConfig::new(spec(&g, 0.4), r0, 1.0, 0.3, 1);
        assert!(cfg.steps().is_err());

        struct Blowup;
        impl Dynamics for Blowup {
            fn dim_h(&self) -> usize {
                1
            }
            fn evaluate(&self, t: f64, _: &Grid, _: &[f64], drift: &mut [f64], kernel: &mut [f64]) {
                drift.fill(if t > 0.25 { f64::NAN } else { 1.0 });
                kernel.fill(0.0);
            }
        }
        let cfg = SimConfig::new(spec(&g, 0.0), Curve::zeros(g.clone()), 1.0, 0.1, 1);
        match simulate_dynamics(&cfg, &Blowup) {
            Err(HjmmError::NumericalAbort { t, .. }) => assert!((t - 0.3).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stride_and_norms() {
        let g = grid();
        let r0 = Curve::from_fn(g.clone(), |x| 0.02 * (-x).exp()).unwrap();
        let mut cfg = SimConfig::new(spec(&g, 0.4), r0, 1.0, 0.05, 2);
        cfg.snapshot_stride = 3;
        let p = simulate(&cfg).unwrap();
        assert_eq!(p.times.len(), 21);
        assert_eq!(p.norms.len(), 21);
        assert_eq!(p.snapshot_times.len(), 8);
        assert!((p.snapshot_times.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(p.times.windows(2).all(|w| w[1] > w[0]));
        assert!((p.norms[20] - lp_nu_norm(p.final_curve())).abs() < 1e-15);
    }

    #[test]
    fn frozen_path_matches_live_stream() {
        let g = grid();
        let r0 = Curve::from_fn(g.clone(), |x| 0.02 * (-x).exp()).unwrap();
        let cfg = SimConfig::new(spec(&g, 0.4), r0.clone(), 1.0, 0.05, 5);
        let live = simulate(&cfg).unwrap();
        let path = cfg.noise().unwrap().sample_path(0.05, 20).unwrap();
        let frozen = run_exp_euler(
            cfg.spec.as_ref(),
            &cfg.semigroup().unwrap(),
            &r0,
            0.0,
            0.05,
            20,
            &mut PathCursor::new(&path),
            1,
            None,
        )
        .unwrap();
        assert_eq!(live.curves, frozen.curves);
    }
}
