use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HjmmError, Result};
use crate::weighted_spaces::{Curve, Grid};

/// The volatility `g(t, x, u) ∈ H`, written into `out` in the coordinates of `H`.
pub trait Volatility: Send + Sync + Debug {
    fn dim_h(&self) -> usize;

    fn time_dependent(&self) -> bool {
        false
    }

    fn eval(&self, t: f64, x: f64, u: f64, out: &mut [f64]);
}

/// `sup |d²/du² tanh(u)|`, attained where `tanh u = 1/√3`.
const TANH_SECOND_DERIVATIVE_MAX: f64 = 0.769_800_358_919_501;

/// One coordinate `σ e^{−λx} (level + slope·tanh u)` of the exponential family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialFactor {
    pub sigma: f64,
    pub lambda: f64,
    #[serde(default = "one")]
    pub level: f64,
    #[serde(default)]
    pub slope: f64,
}

fn one() -> f64 {
    1.0
}

impl ExponentialFactor {
    /// State-independent factor `σ e^{−λx}`.
    pub fn new(sigma: f64, lambda: f64) -> Self {
        Self {
            sigma,
            lambda,
            level: 1.0,
            slope: 0.0,
        }
    }

    fn amplitude(&self) -> f64 {
        self.sigma.abs() * (self.level.abs() + self.slope.abs())
    }

    fn lipschitz_amplitude(&self) -> f64 {
        self.sigma.abs() * self.slope.abs()
    }
}

/// Multiplies the volatility by `1 + amplitude·sin(frequency·t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeModulation {
    pub amplitude: f64,
    pub frequency: f64,
}

impl TimeModulation {
    fn factor(&self, t: f64) -> f64 {
        1.0 + self.amplitude * (self.frequency * t).sin()
    }

    fn bound(&self) -> f64 {
        1.0 + self.amplitude.abs()
    }
}

#[derive(Debug, Clone)]
pub struct ExponentialVolatility {
    factors: Vec<ExponentialFactor>,
    dim_h: usize,
    modulation: Option<TimeModulation>,
}

impl Volatility for ExponentialVolatility {
    fn dim_h(&self) -> usize {
        self.dim_h
    }

    fn time_dependent(&self) -> bool {
        self.modulation.is_some()
    }

    fn eval(&self, t: f64, x: f64, u: f64, out: &mut [f64]) {
        let m = self.modulation.map_or(1.0, |m| m.factor(t));
        let th = u.tanh();
        for (o, f) in out.iter_mut().zip(&self.factors) {
            *o = m * f.sigma * (-f.lambda * x).exp() * (f.level + f.slope * th);
        }
        for o in out.iter_mut().skip(self.factors.len()) {
            *o = 0.0;
        }
    }
}

/// `σ_j e^{−λ_j x} u`: linear in the curve value, hence only locally Lipschitz drift.
#[derive(Debug, Clone)]
pub struct LinearVolatility {
    factors: Vec<(f64, f64)>,
    dim_h: usize,
}

impl Volatility for LinearVolatility {
    fn dim_h(&self) -> usize {
        self.dim_h
    }

    fn eval(&self, _t: f64, x: f64, u: f64, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for (o, &(sigma, lambda)) in out.iter_mut().zip(&self.factors) {
            *o = sigma * (-lambda * x).exp() * u;
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZeroVolatility {
    dim_h: usize,
}

impl Volatility for ZeroVolatility {
    fn dim_h(&self) -> usize {
        self.dim_h
    }

    fn eval(&self, _t: f64, _x: f64, _u: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// A volatility together with its dominating functions and derivative bounds.
///
/// `g_bar` is `None` for volatilities that are not bounded uniformly in `u`
/// (the locally Lipschitz setting).
#[derive(Debug, Clone)]
pub struct VolatilitySpec {
    pub g: Arc<dyn Volatility>,
    pub g_bar: Option<Curve>,
    pub g_hat: Curve,
    pub k1: f64,
    pub k2: f64,
    pub time_dependent: bool,
    grid: Arc<Grid>,
}

impl VolatilitySpec {
    pub fn custom(
        grid: Arc<Grid>,
        g: Arc<dyn Volatility>,
        g_bar: Option<Curve>,
        g_hat: Curve,
        k1: f64,
        k2: f64,
    ) -> Result<Self> {
        for c in g_bar.iter().chain(std::iter::once(&g_hat)) {
            if **c.grid() != *grid {
                return Err(HjmmError::GridMismatch);
            }
        }
        if !(k1 >= 0.0 && k2 >= 0.0) {
            return Err(invalid("derivative bounds must be nonnegative"));
        }
        let time_dependent = g.time_dependent();
        Ok(Self {
            g,
            g_bar,
            g_hat,
            k1,
            k2,
            time_dependent,
            grid,
        })
    }

    pub fn zero(grid: Arc<Grid>, dim_h: usize) -> Result<Self> {
        if dim_h == 0 {
            return Err(invalid("dim_h must be at least 1"));
        }
        let z = Curve::zeros(grid.clone());
        Self::custom(grid, Arc::new(ZeroVolatility { dim_h }), Some(z.clone()), z, 0.0, 0.0)
    }

    /// Exponential family with explicit coordinates; coordinates beyond `factors.len()`
    /// up to `dim_h` are zero.
    pub fn exponential(
        grid: Arc<Grid>,
        factors: Vec<ExponentialFactor>,
        dim_h: usize,
        modulation: Option<TimeModulation>,
    ) -> Result<Self> {
        if factors.is_empty() {
            return Err(invalid("exponential family needs at least one factor"));
        }
        if factors.len() > dim_h {
            return Err(HjmmError::DimensionMismatch {
                expected: dim_h,
                got: factors.len(),
            });
        }
        for f in &factors {
            if ![f.sigma, f.lambda, f.level, f.slope].iter().all(|v| v.is_finite()) || f.lambda < 0.0 {
                return Err(invalid(format!("invalid exponential factor {f:?}")));
            }
        }
        let m = modulation.map_or(1.0, |m| m.bound());
        // ‖g‖_H ≤ Σ_j |g_j|, so sums of the coordinate envelopes dominate both g and ∂_x g.
        let envelope = |amp: &dyn Fn(&ExponentialFactor) -> f64| {
            let values = grid
                .nodes()
                .map(|x| m * factors.iter().map(|f| amp(f) * (-f.lambda * x).exp()).sum::<f64>())
                .collect();
            Curve::new(grid.clone(), values)
        };
        let g_bar = envelope(&|f| f.amplitude())?;
        let g_hat = envelope(&|f| f.lipschitz_amplitude())?;
        let slope_norm = factors
            .iter()
            .map(|f| f.lipschitz_amplitude().powi(2))
            .sum::<f64>()
            .sqrt();
        let g = ExponentialVolatility {
            factors,
            dim_h,
            modulation,
        };
        Self::custom(
            grid,
            Arc::new(g),
            Some(g_bar),
            g_hat,
            m * slope_norm,
            m * slope_norm * TANH_SECOND_DERIVATIVE_MAX,
        )
    }

    /// Exponential family with one coordinate per basis vector of `H`:
    /// `σ_j = σ (j+1)^{−decay}`, `λ_j = λ + j·lambda_step`.
    #[allow(clippy::too_many_arguments)]
    pub fn spectral(
        grid: Arc<Grid>,
        dim_h: usize,
        sigma: f64,
        lambda: f64,
        level: f64,
        slope: f64,
        decay: f64,
        lambda_step: f64,
    ) -> Result<Self> {
        let factors = (0..dim_h)
            .map(|j| ExponentialFactor {
                sigma: sigma * ((j + 1) as f64).powf(-decay),
                lambda: lambda + j as f64 * lambda_step,
                level,
                slope,
            })
            .collect();
        Self::exponential(grid, factors, dim_h, None)
    }

    /// `g_j(x, u) = σ_j e^{−λ_j x} u`. Not dominated uniformly in `u`.
    pub fn linear(grid: Arc<Grid>, factors: Vec<(f64, f64)>, dim_h: usize) -> Result<Self> {
        if factors.is_empty() || factors.len() > dim_h {
            return Err(invalid("linear family needs between 1 and dim_h factors"));
        }
        let g_hat = Curve::new(
            grid.clone(),
            grid.nodes()
                .map(|x| factors.iter().map(|(s, l)| s.abs() * (-l * x).exp()).sum())
                .collect(),
        )?;
        let k1 = factors.iter().map(|(s, _)| s * s).sum::<f64>().sqrt();
        Self::custom(
            grid,
            Arc::new(LinearVolatility { factors, dim_h }),
            None,
            g_hat,
            k1,
            0.0,
        )
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim_h(&self) -> usize {
        self.g.dim_h()
    }

    pub fn is_dominated(&self) -> bool {
        self.g_bar.is_some()
    }

    /// Samples `(t, x, u)` and reports the largest violation of
    /// `‖g‖_H ≤ |ḡ(x)|` and `‖g(u) − g(v)‖_H ≤ |ĝ(x)||u − v|` (nonpositive when both hold).
    pub fn check_dominance<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n_samples: usize,
        u_range: f64,
    ) -> Result<DominanceCheck> {
        let d = self.dim_h();
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut worst_bar = f64::NEG_INFINITY;
        let mut worst_hat = f64::NEG_INFINITY;
        let x_max = self.grid.x_max();
        for _ in 0..n_samples {
            let t = rng.random_range(0.0..10.0);
            let x = rng.random_range(0.0..=x_max);
            let u = rng.random_range(-u_range..u_range);
            let v = rng.random_range(-u_range..u_range);
            self.g.eval(t, x, u, &mut a);
            self.g.eval(t, x, v, &mut b);
            let norm_a = a.iter().map(|c| c * c).sum::<f64>().sqrt();
            let diff = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            if let Some(g_bar) = &self.g_bar {
                worst_bar = worst_bar.max(norm_a - g_bar.interpolate(x)?.abs());
            }
            worst_hat = worst_hat.max(diff - self.g_hat.interpolate(x)?.abs() * (u - v).abs());
        }
        Ok(DominanceCheck {
            samples: n_samples,
            max_excess_bar: self.g_bar.as_ref().map(|_| worst_bar),
            max_excess_hat: worst_hat,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceCheck {
    pub samples: usize,
    pub max_excess_bar: Option<f64>,
    pub max_excess_hat: f64,
}

impl DominanceCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_excess_bar.is_none_or(|e| e <= tol) && self.max_excess_hat <= tol
    }
}
