//! Discretized weighted spaces `L^p_ν` and `W^{1,p}_ν` on a truncated maturity axis.
//!
//! The half line `[0, ∞)` is cut at `x_max` and sampled on a uniform grid. Norms use a
//! product trapezoid rule: `|f|^p` is interpolated linearly between nodes and integrated
//! exactly against `e^{νx}`, so the nodal weights are positive and sum to
//! `∫₀^{x_max} e^{νx} dx` up to rounding.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HjmmError, Result};

/// Weight exponent `ν` and integrability exponent `p` (with conjugate `q`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    nu: f64,
    p: f64,
}

impl SpaceParams {
    pub fn new(nu: f64, p: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(invalid(format!("nu must be positive, got {nu}")));
        }
        if !(p.is_finite() && p >= 2.0) {
            return Err(invalid(format!("p must be at least 2, got {p}")));
        }
        Ok(Self { nu, p })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent, `1/p + 1/q = 1`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Default truncation of the maturity axis, `40/ν`.
    pub fn default_x_max(&self) -> f64 {
        40.0 / self.nu
    }
}

/// Constant of the continuous embedding `L^p_ν ⊂ L¹`: `‖f‖_{L¹} ≤ (p/(νq))^{1/q} ‖f‖_{ν,p}`.
pub fn embedding_bound(params: &SpaceParams) -> f64 {
    let q = params.q();
    (params.p / (params.nu * q)).powf(1.0 / q)
}

/// Explicit constant `C(ν,p)` with `sup e^{νx}|f|^p ≤ C^p ‖f‖^p_{W^{1,p}_ν}`.
///
/// Read off the additive bound `(p−1+ν)‖f‖^p + ‖Df‖^p`, which is at most
/// `max(p−1+ν, 1) (‖f‖ + ‖Df‖)^p`.
pub fn sobolev_sup_constant(params: &SpaceParams) -> f64 {
    (params.p - 1.0 + params.nu).max(1.0).powf(1.0 / params.p)
}

/// Uniform grid `0 = x_0 < … < x_N = x_max` carrying the space parameters and quadrature weights.
#[derive(Debug, Clone)]
pub struct Grid {
    params: SpaceParams,
    x_max: f64,
    n_cells: usize,
    h: f64,
    weights: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.x_max == other.x_max && self.n_cells == other.n_cells
    }
}

impl Grid {
    pub fn new(params: SpaceParams, x_max: f64, n_cells: usize) -> Result<Arc<Self>> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(invalid(format!("x_max must be positive, got {x_max}")));
        }
        if n_cells < 2 {
            return Err(invalid(format!("n_cells must be at least 2, got {n_cells}")));
        }
        let h = x_max / n_cells as f64;
        let a = params.nu * h;
        let (left, right) = cell_weights(a);
        let mut weights = vec![0.0; n_cells + 1];
        for k in 0..n_cells {
            let scale = h * (params.nu * k as f64 * h).exp();
            weights[k] += scale * left;
            weights[k + 1] += scale * right;
        }
        Ok(Arc::new(Self {
            params,
            x_max,
            n_cells,
            h,
            weights,
        }))
    }

    /// Grid with the default truncation `x_max = 40/ν`.
    pub fn with_default_extent(params: SpaceParams, n_cells: usize) -> Result<Arc<Self>> {
        Self::new(params, params.default_x_max(), n_cells)
    }

    pub fn params(&self) -> &SpaceParams {
        &self.params
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Quadrature weights for `∫ φ(x) e^{νx} dx`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫₀^{x_max} e^{νx} dx`.
    pub fn weight_integral(&self) -> f64 {
        (self.params.nu * self.x_max).exp_m1() / self.params.nu
    }

    /// Number of grid cells spanned by `t`, if `t` is a lattice multiple of the spacing.
    pub fn lattice_steps(&self, t: f64) -> Option<usize> {
        let s = t / self.h;
        let m = s.round();
        if m >= 0.0 && (s - m).abs() <= 1e-9 * s.abs().max(1.0) {
            Some(m as usize)
        } else {
            None
        }
    }
}

/// Integrals of `e^{a s}(1-s)` and `e^{a s} s` over `s ∈ [0,1]`.
fn cell_weights(a: f64) -> (f64, f64) {
    if a.abs() < 1e-3 {
        let a2 = a * a;
        (
            0.5 + a / 6.0 + a2 / 24.0 + a2 * a / 120.0,
            0.5 + a / 3.0 + a2 / 8.0 + a2 * a / 30.0,
        )
    } else {
        let em1 = a.exp_m1();
        ((em1 - a) / (a * a), (a * a.exp() - em1) / (a * a))
    }
}

/// A function sampled at the nodes of a [`Grid`].
#[derive(Debug, Clone)]
pub struct Curve {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Curve {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.values == other.values
    }
}

/// Emitted when a curve carries non-negligible mass at the truncation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailWarning {
    pub ratio: f64,
    pub tolerance: f64,
}

impl Curve {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(HjmmError::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("curve value at node {i} is not finite")));
        }
        Ok(Self { grid, values })
    }

    /// Wraps values known to be finite. Used on the hot path of the solver.
    pub(crate) fn from_trusted(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn params(&self) -> &SpaceParams {
        self.grid.params()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_trusted(self.grid.clone(), self.values.iter().map(|v| c * v).collect())
    }

    pub fn combine(&self, other: &Curve, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if *self.grid != *other.grid {
            return Err(HjmmError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Self::new(self.grid.clone(), values)
    }

    pub fn sub(&self, other: &Curve) -> Result<Self> {
        self.combine(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Curve) -> Result<Self> {
        self.combine(other, |a, b| a + b)
    }

    /// Linear interpolation at `x ∈ [0, x_max]`.
    pub fn interpolate(&self, x: f64) -> Result<f64> {
        let g = &self.grid;
        if !(0.0..=g.x_max() * (1.0 + 1e-12)).contains(&x) {
            return Err(HjmmError::OutOfRange(format!(
                "x = {x} outside [0, {}]",
                g.x_max()
            )));
        }
        let s = (x / g.spacing()).min(g.n_cells() as f64);
        let k = (s.floor() as usize).min(g.n_cells() - 1);
        let frac = s - k as f64;
        if frac == 0.0 {
            return Ok(self.values[k]);
        }
        Ok(self.values[k] + frac * (self.values[k + 1] - self.values[k]))
    }

    /// `|f(x_N)|^p e^{ν x_N} h / ‖f‖^p_{ν,p}`; zero for the zero curve.
    pub fn tail_ratio(&self) -> f64 {
        let g = &self.grid;
        let p = g.params().p();
        let last = *self.values.last().expect("grid has at least three nodes");
        let tail = last.abs().powf(p) * (g.params().nu() * g.x_max()).exp() * g.spacing();
        let total = lp_nu_norm(self).powf(p);
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    pub fn tail_warning(&self, tolerance: f64) -> Option<TailWarning> {
        let ratio = self.tail_ratio();
        (ratio > tolerance).then_some(TailWarning { ratio, tolerance })
    }
}

pub(crate) fn weighted_pth_power(grid: &Grid, values: &[f64]) -> f64 {
    let p = grid.params().p();
    let w = grid.weights();
    if p == 2.0 {
        values.iter().zip(w).map(|(v, w)| w * v * v).sum()
    } else {
        values.iter().zip(w).map(|(v, w)| w * v.abs().powf(p)).sum()
    }
}

pub(crate) fn lp_norm_of(grid: &Grid, values: &[f64]) -> f64 {
    weighted_pth_power(grid, values).powf(1.0 / grid.params().p())
}

/// `‖f‖_{ν,p} = (∫|f|^p e^{νx} dx)^{1/p}`.
pub fn lp_nu_norm(f: &Curve) -> f64 {
    lp_norm_of(&f.grid, &f.values)
}

pub(crate) fn trapezoid(h: f64, values: &[f64]) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Unweighted trapezoid integral of `|f|`.
pub fn l1_norm(f: &Curve) -> f64 {
    let abs: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
    trapezoid(f.grid.spacing(), &abs)
}

pub(crate) fn derivative_of(h: f64, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    let inv = 0.5 / h;
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) * inv;
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) * inv;
    }
    out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) * inv;
}

/// Second-order finite-difference stand-in for the weak derivative `Df`.
pub fn weak_derivative(f: &Curve) -> Curve {
    let mut out = vec![0.0; f.values.len()];
    derivative_of(f.grid.spacing(), &f.values, &mut out);
    Curve::from_trusted(f.grid.clone(), out)
}

/// `‖f‖_{W^{1,p}_ν} = ‖f‖_{ν,p} + ‖Df‖_{ν,p}`.
pub fn w1p_nu_norm(f: &Curve) -> f64 {
    lp_nu_norm(f) + lp_nu_norm(&weak_derivative(f))
}

/// Grid maximum of `e^{νx}|f(x)|^p`.
pub fn sup_weighted(f: &Curve) -> f64 {
    let nu = f.params().nu();
    let p = f.params().p();
    f.grid
        .nodes()
        .zip(&f.values)
        .map(|(x, v)| (nu * x).exp() * v.abs().powf(p))
        .fold(0.0, f64::max)
}

/// Grid maximum of `|f(x)|`.
pub fn sup_abs(f: &Curve) -> f64 {
    f.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Which norm a radial truncation or distance is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Lp,
    Sobolev,
}

impl NormKind {
    pub fn norm(&self, f: &Curve) -> f64 {
        match self {
            NormKind::Lp => lp_nu_norm(f),
            NormKind::Sobolev => w1p_nu_norm(f),
        }
    }

    pub(crate) fn norm_of(&self, grid: &Grid, values: &[f64]) -> f64 {
        match self {
            NormKind::Lp => lp_norm_of(grid, values),
            NormKind::Sobolev => {
                let mut d = vec![0.0; values.len()];
                derivative_of(grid.spacing(), values, &mut d);
                lp_norm_of(grid, values) + lp_norm_of(grid, &d)
            }
        }
    }
}

/// One term `a e^{−λx} cos(ωx + φ)` of an [`ExpSumProfile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTerm {
    pub amplitude: f64,
    pub rate: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// A smooth decaying function given in closed form, so the same curve can be sampled on
/// several grids. Used for random test curves and for initial forward curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSumProfile {
    pub terms: Vec<ProfileTerm>,
}

impl ExpSumProfile {
    pub fn eval(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * (-t.rate * x).exp() * (t.frequency * x + t.phase).cos())
            .sum()
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> Curve {
        let values = grid.nodes().map(|x| self.eval(x)).collect();
        Curve::from_trusted(grid.clone(), values)
    }

    /// Random profile decaying strictly faster than `e^{−νx/p}`, so that it belongs to
    /// `W^{1,p}_ν` and has a negligible tail at the default truncation.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, params: &SpaceParams) -> Self {
        let nu = params.nu();
        let min_rate = nu * (1.0 / params.p() + 0.3);
        let n_terms = rng.random_range(1..=3);
        let terms = (0..n_terms)
            .map(|_| ProfileTerm {
                amplitude: rng.random_range(-1.0..1.0),
                rate: min_rate + rng.random_range(0.0..1.5) * nu,
                frequency: rng.random_range(0.0..2.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        Self { terms }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| ProfileTerm {
                    amplitude: c * t.amplitude,
                    ..*t
                })
                .collect(),
        }
    }
}
