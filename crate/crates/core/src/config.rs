//! JSON run configuration shared by the command-line verbs and the C interface.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coefficients::{ExponentialFactor, MaximalSettings, TimeModulation, VolatilitySpec};
use crate::error::{HjmmError, Result};
use crate::semigroup::Extension;
use crate::solver::{PicardInit, PicardSettings, Scheme, SimConfig};
use crate::weighted_spaces::{Curve, Grid, NormKind, SpaceParams};

fn config_error(e: impl std::fmt::Display) -> HjmmError {
    HjmmError::Config(e.to_string())
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub space: SpaceSection,
    #[serde(default)]
    pub grid: GridSection,
    pub volatility: VolatilitySection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub run: RunSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    pub nu: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Defaults to `40/ν`.
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_cells")]
    pub n_cells: usize,
}

fn default_cells() -> usize {
    512
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_max: None,
            n_cells: default_cells(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Zero,
    Exponential,
    Spectral,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolatilitySection {
    pub family: Family,
    #[serde(default)]
    pub params: Value,
    /// Constant relating the γ-norm to its integral surrogate.
    #[serde(rename = "N", default = "one")]
    pub n_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZeroParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExponentialParams {
    factors: Vec<ExponentialFactor>,
    #[serde(default)]
    modulation: Option<TimeModulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectralParams {
    sigma: f64,
    lambda: f64,
    #[serde(default = "one")]
    level: f64,
    #[serde(default)]
    slope: f64,
    #[serde(default = "one")]
    decay: f64,
    #[serde(default)]
    lambda_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearFactor {
    sigma: f64,
    lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    factors: Vec<LinearFactor>,
}

fn typed_params<T: for<'de> Deserialize<'de>>(family: Family, params: &Value) -> Result<T> {
    let v = if params.is_null() {
        Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_json::from_value(v).map_err(|e| config_error(format!("volatility params for {family:?}: {e}")))
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("plain data serializes")
}

impl VolatilitySection {
    /// Parameters with every default filled in.
    fn materialized(&self) -> Result<Value> {
        Ok(match self.family {
            Family::Zero => to_value(&typed_params::<ZeroParams>(self.family, &self.params)?),
            Family::Exponential => to_value(&typed_params::<ExponentialParams>(self.family, &self.params)?),
            Family::Spectral => to_value(&typed_params::<SpectralParams>(self.family, &self.params)?),
            Family::Linear => to_value(&typed_params::<LinearParams>(self.family, &self.params)?),
        })
    }

    pub fn build(&self, grid: Arc<Grid>, dim_h: usize) -> Result<VolatilitySpec> {
        match self.family {
            Family::Zero => {
                typed_params::<ZeroParams>(self.family, &self.params)?;
                VolatilitySpec::zero(grid, dim_h)
            }
            Family::Exponential => {
                let p: ExponentialParams = typed_params(self.family, &self.params)?;
                VolatilitySpec::exponential(grid, p.factors, dim_h, p.modulation)
            }
            Family::Spectral => {
                let p: SpectralParams = typed_params(self.family, &self.params)?;
                VolatilitySpec::spectral(grid, dim_h, p.sigma, p.lambda, p.level, p.slope, p.decay, p.lambda_step)
            }
            Family::Linear => {
                let p: LinearParams = typed_params(self.family, &self.params)?;
                VolatilitySpec::linear(grid, p.factors.iter().map(|f| (f.sigma, f.lambda)).collect(), dim_h)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_dim")]
    pub dim_h: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dim() -> usize {
    1
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { dim_h: 1, seed: 0 }
    }
}

/// Initial forward curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCurve {
    #[default]
    Zero,
    Flat { value: f64 },
    /// `level · e^{−rate·x}`.
    Exponential { level: f64, rate: f64 },
    /// `β₀ + (β₁ + β₂ x/τ) e^{−x/τ}`.
    NelsonSiegel { beta0: f64, beta1: f64, beta2: f64, tau: f64 },
    /// One value per grid node.
    Values { values: Vec<f64> },
}

impl InitialCurve {
    pub fn build(&self, grid: Arc<Grid>) -> Result<Curve> {
        match *self {
            InitialCurve::Zero => Ok(Curve::zeros(grid)),
            InitialCurve::Flat { value } => Curve::from_fn(grid, |_| value),
            InitialCurve::Exponential { level, rate } => Curve::from_fn(grid, |x| level * (-rate * x).exp()),
            InitialCurve::NelsonSiegel { beta0, beta1, beta2, tau } => {
                if tau.is_nan() || tau <= 0.0 {
                    return Err(config_error("Nelson-Siegel tau must be positive"));
                }
                Curve::from_fn(grid, |x| beta0 + (beta1 + beta2 * x / tau) * (-x / tau).exp())
            }
            InitialCurve::Values { ref values } => Curve::new(grid, values.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Window length; `null` chooses it automatically.
    #[serde(default)]
    pub window: Option<f64>,
    /// Maximal-inequality constant; `null` estimates it.
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub init: PicardInit,
    #[serde(default)]
    pub maximal: MaximalSettings,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    60
}

impl Default for PicardSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            window: None,
            k: None,
            init: PicardInit::default(),
            maximal: MaximalSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub scheme: Scheme,
    /// Defaults to the grid spacing.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub snapshots_stride: usize,
    #[serde(default)]
    pub truncation_n: Option<f64>,
    #[serde(default)]
    pub truncation_norm: NormKind,
    #[serde(default)]
    pub extension: Extension,
    pub r0: InitialCurve,
    #[serde(default)]
    pub picard: PicardSection,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub estimate: EstimateExperiment,
    pub converge: ConvergeExperiment,
    pub couple: CoupleExperiment,
    pub invariant_stats: InvariantExperiment,
    pub bond_price: BondExperiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateExperiment {
    pub n_samples: usize,
    pub radius: f64,
    pub maximal: MaximalSettings,
}

impl Default for EstimateExperiment {
    fn default() -> Self {
        Self {
            n_samples: 200,
            radius: 2.0,
            maximal: MaximalSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeExperiment {
    pub levels: usize,
    pub n_paths: usize,
}

impl Default for ConvergeExperiment {
    fn default() -> Self {
        Self { levels: 3, n_paths: 32 }
    }
}

/// The second ensemble starts at `r0_b`; the first at `run.r0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoupleExperiment {
    pub r0_b: InitialCurve,
    pub n_paths: usize,
}

impl Default for CoupleExperiment {
    fn default() -> Self {
        Self {
            r0_b: InitialCurve::Zero,
            n_paths: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantExperiment {
    pub r0_b: InitialCurve,
    pub n_paths: usize,
    pub probes: Vec<f64>,
    pub z_max: f64,
}

impl Default for InvariantExperiment {
    fn default() -> Self {
        Self {
            r0_b: InitialCurve::Zero,
            n_paths: 1000,
            probes: vec![0.5, 1.0, 2.0],
            z_max: 4.0,
        }
    }
}

/// Absolute maturities priced at every snapshot time that precedes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BondExperiment {
    pub maturities: Vec<f64>,
}

impl Default for BondExperiment {
    fn default() -> Self {
        Self {
            maturities: vec![1.0, 2.0, 5.0],
        }
    }
}

/// A configuration resolved into library objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: Arc<Grid>,
    pub spec: Arc<VolatilitySpec>,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(config_error)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn params(&self) -> Result<SpaceParams> {
        SpaceParams::new(self.space.nu, self.space.p)
    }

    /// The same configuration with every default written out.
    pub fn effective(&self) -> Result<Self> {
        let params = self.params()?;
        let mut out = self.clone();
        let x_max = self.grid.x_max.unwrap_or_else(|| params.default_x_max());
        out.grid.x_max = Some(x_max);
        out.run.dt = Some(self.run.dt.unwrap_or(x_max / self.grid.n_cells as f64));
        out.volatility.params = self.volatility.materialized()?;
        Ok(out)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let eff = self.effective()?;
        let params = eff.params()?;
        let grid = Grid::new(params, eff.grid.x_max.expect("materialized"), eff.grid.n_cells)?;
        let spec = Arc::new(eff.volatility.build(grid.clone(), eff.noise.dim_h)?);
        let r0 = eff.run.r0.build(grid.clone())?;
        let run = &eff.run;
        let p = &run.picard;
        let mut sim = SimConfig::new(spec.clone(), r0, run.t_end, run.dt.expect("materialized"), eff.noise.seed);
        sim.scheme = run.scheme;
        sim.snapshot_stride = run.snapshots_stride;
        sim.truncation = run.truncation_n;
        sim.truncation_norm = run.truncation_norm;
        sim.extension = run.extension;
        sim.picard = PicardSettings {
            tol: p.tol,
            max_iter: p.max_iter,
            window: p.window,
            k_override: p.k,
            n_gamma: eff.volatility.n_gamma,
            init: p.init,
            maximal: p.maximal,
        };
        sim.validate()?;
        Ok(Resolved { grid, spec, sim })
    }
}
