//! HJMM coefficients: the diffusion operator `G`, the no-arbitrage drift `F`, their
//! radial truncations and the constants that control them.

mod constants;
mod volatility;

use std::sync::Arc;

pub use constants::{
    contraction_constant, estimate_constants, estimate_linear_growth, estimate_lipschitz,
    estimate_maximal_constant, sample_ball_pair, theoretical_growth_f, theoretical_growth_g,
    theoretical_lipschitz_f, theoretical_lipschitz_g, Constant, ConstantsReport, EstimateSettings,
    LipschitzEstimate, LipschitzMode, MaximalSettings, Provenance,
};
pub use volatility::{
    DominanceCheck, ExponentialFactor, ExponentialVolatility, LinearVolatility, TimeModulation,
    Volatility, VolatilitySpec, ZeroVolatility,
};

use crate::error::{HjmmError, Result};
use crate::weighted_spaces::{derivative_of, lp_norm_of, Curve, Grid, NormKind};

/// Right-hand side of the mild equation on a grid: the drift curve and the kernel
/// `κ(x_i) ∈ H` of the diffusion operator, stored node-major (`kernel[i·d + j]`).
pub trait Dynamics: Send + Sync {
    fn dim_h(&self) -> usize;

    fn time_dependent(&self) -> bool {
        false
    }

    fn evaluate(&self, t: f64, grid: &Grid, state: &[f64], drift: &mut [f64], kernel: &mut [f64]);

    fn drift(&self, t: f64, f: &Curve) -> Curve {
        let n = f.grid().len();
        let mut drift = vec![0.0; n];
        let mut kernel = vec![0.0; n * self.dim_h()];
        self.evaluate(t, f.grid(), f.values(), &mut drift, &mut kernel);
        Curve::from_trusted(f.grid().clone(), drift)
    }

    fn diffusion(&self, t: f64, f: &Curve) -> DiffusionOperator {
        let n = f.grid().len();
        let mut drift = vec![0.0; n];
        let mut kernel = vec![0.0; n * self.dim_h()];
        self.evaluate(t, f.grid(), f.values(), &mut drift, &mut kernel);
        DiffusionOperator {
            grid: f.grid().clone(),
            dim_h: self.dim_h(),
            kernel,
        }
    }
}

impl<T: Dynamics + ?Sized> Dynamics for &T {
    fn dim_h(&self) -> usize {
        (**self).dim_h()
    }

    fn time_dependent(&self) -> bool {
        (**self).time_dependent()
    }

    fn evaluate(&self, t: f64, grid: &Grid, state: &[f64], drift: &mut [f64], kernel: &mut [f64]) {
        (**self).evaluate(t, grid, state, drift, kernel)
    }
}

impl<T: Dynamics + ?Sized> Dynamics for Arc<T> {
    fn dim_h(&self) -> usize {
        (**self).dim_h()
    }

    fn time_dependent(&self) -> bool {
        (**self).time_dependent()
    }

    fn evaluate(&self, t: f64, grid: &Grid, state: &[f64], drift: &mut [f64], kernel: &mut [f64]) {
        (**self).evaluate(t, grid, state, drift, kernel)
    }
}

impl Dynamics for VolatilitySpec {
    fn dim_h(&self) -> usize {
        self.g.dim_h()
    }

    fn time_dependent(&self) -> bool {
        self.time_dependent
    }

    fn evaluate(&self, t: f64, grid: &Grid, state: &[f64], drift: &mut [f64], kernel: &mut [f64]) {
        kernel_into(self.g.as_ref(), t, grid, state, kernel);
        drift_from_kernel(grid.spacing(), self.g.dim_h(), kernel, drift);
    }
}

pub(crate) fn kernel_into(g: &dyn Volatility, t: f64, grid: &Grid, state: &[f64], out: &mut [f64]) {
    let d = g.dim_h();
    for (i, (chunk, &u)) in out.chunks_mut(d).zip(state).enumerate() {
        g.eval(t, grid.node(i), u, chunk);
    }
}

/// `F(x_i) = ⟨κ(x_i), ∫₀^{x_i} κ⟩_H` with the inner integral by cumulative trapezoid.
pub(crate) fn drift_from_kernel(h: f64, d: usize, kernel: &[f64], drift: &mut [f64]) {
    let mut integral = vec![0.0; d];
    drift[0] = 0.0;
    for i in 1..drift.len() {
        let (prev, cur) = (&kernel[(i - 1) * d..i * d], &kernel[i * d..(i + 1) * d]);
        let mut dot = 0.0;
        for j in 0..d {
            integral[j] += 0.5 * h * (prev[j] + cur[j]);
            dot += cur[j] * integral[j];
        }
        drift[i] = dot;
    }
}

/// `G(t, f)`: the map `h ↦ ⟨κ(·), h⟩_H` from `H` to curves.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator {
    grid: Arc<Grid>,
    dim_h: usize,
    kernel: Vec<f64>,
}

impl DiffusionOperator {
    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Node-major kernel values, `kernel[i·d + j] = ⟨κ(x_i), e_j⟩`.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn apply(&self, h: &[f64]) -> Result<Curve> {
        if h.len() != self.dim_h {
            return Err(HjmmError::DimensionMismatch {
                expected: self.dim_h,
                got: h.len(),
            });
        }
        let values = self
            .kernel
            .chunks(self.dim_h)
            .map(|k| k.iter().zip(h).map(|(a, b)| a * b).sum())
            .collect();
        Ok(Curve::from_trusted(self.grid.clone(), values))
    }

    fn pointwise_norms(&self) -> Vec<f64> {
        self.kernel
            .chunks(self.dim_h)
            .map(|k| k.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// `(∫ ‖κ(x)‖_H^p e^{νx} dx)^{1/p}`, the computable stand-in for the γ-radonifying norm.
    pub fn gamma_norm(&self) -> f64 {
        lp_norm_of(&self.grid, &self.pointwise_norms())
    }

    /// `‖κ‖ + ‖Dκ‖` with both terms weighted H-valued norms.
    pub fn gamma_norm_sobolev(&self) -> f64 {
        let n = self.grid.len();
        let d = self.dim_h;
        let h = self.grid.spacing();
        let mut column = vec![0.0; n];
        let mut dcol = vec![0.0; n];
        let mut dsq = vec![0.0; n];
        for j in 0..d {
            for (c, row) in column.iter_mut().zip(self.kernel.chunks_exact(d)) {
                *c = row[j];
            }
            derivative_of(h, &column, &mut dcol);
            for (s, v) in dsq.iter_mut().zip(&dcol) {
                *s += v * v;
            }
        }
        let dnorm: Vec<f64> = dsq.iter().map(|v| v.sqrt()).collect();
        self.gamma_norm() + lp_norm_of(&self.grid, &dnorm)
    }

    pub fn sub(&self, other: &DiffusionOperator) -> Result<DiffusionOperator> {
        if *self.grid != *other.grid {
            return Err(HjmmError::GridMismatch);
        }
        if self.dim_h != other.dim_h {
            return Err(HjmmError::DimensionMismatch {
                expected: self.dim_h,
                got: other.dim_h,
            });
        }
        Ok(DiffusionOperator {
            grid: self.grid.clone(),
            dim_h: self.dim_h,
            kernel: self.kernel.iter().zip(&other.kernel).map(|(a, b)| a - b).collect(),
        })
    }
}

fn check_grid(spec: &VolatilitySpec, f: &Curve) -> Result<()> {
    if **f.grid() != **spec.grid() {
        return Err(HjmmError::GridMismatch);
    }
    Ok(())
}

pub fn apply_g(spec: &VolatilitySpec, t: f64, f: &Curve) -> Result<DiffusionOperator> {
    check_grid(spec, f)?;
    let d = spec.dim_h();
    let mut kernel = vec![0.0; f.grid().len() * d];
    kernel_into(spec.g.as_ref(), t, f.grid(), f.values(), &mut kernel);
    Ok(DiffusionOperator {
        grid: f.grid().clone(),
        dim_h: d,
        kernel,
    })
}

pub fn gamma_norm(spec: &VolatilitySpec, t: f64, f: &Curve) -> Result<f64> {
    Ok(apply_g(spec, t, f)?.gamma_norm())
}

pub fn apply_f(spec: &VolatilitySpec, t: f64, f: &Curve) -> Result<Curve> {
    check_grid(spec, f)?;
    Ok(spec.drift(t, f))
}

/// Coefficients evaluated at the radial retraction of the state onto the ball of radius `level`.
#[derive(Debug, Clone)]
pub struct Truncated<D> {
    inner: D,
    level: f64,
    norm: NormKind,
}

pub fn truncate_coefficients<D: Dynamics>(inner: D, level: f64, norm: NormKind) -> Result<Truncated<D>> {
    if !(level.is_finite() && level > 0.0) {
        return Err(crate::error::invalid(format!("truncation level must be positive, got {level}")));
    }
    Ok(Truncated { inner, level, norm })
}

impl<D> Truncated<D> {
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn inner(&self) -> &D {
        &self.inner
    }

    /// The retraction `n·f/‖f‖` for `‖f‖ > n`, identity otherwise.
    pub fn retract(&self, f: &Curve) -> Curve {
        let r = self.norm.norm(f);
        if r > self.level {
            f.scaled(self.level / r)
        } else {
            f.clone()
        }
    }
}

impl<D: Dynamics> Dynamics for Truncated<D> {
    fn dim_h(&self) -> usize {
        self.inner.dim_h()
    }

    fn time_dependent(&self) -> bool {
        self.inner.time_dependent()
    }

    fn evaluate(&self, t: f64, grid: &Grid, state: &[f64], drift: &mut [f64], kernel: &mut [f64]) {
        let r = self.norm.norm_of(grid, state);
        if r > self.level {
            let c = self.level / r;
            let scaled: Vec<f64> = state.iter().map(|v| v * c).collect();
            self.inner.evaluate(t, grid, &scaled, drift, kernel);
        } else {
            self.inner.evaluate(t, grid, state, drift, kernel);
        }
    }
}
