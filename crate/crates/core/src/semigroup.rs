//! The shift semigroup `S(t)f(x) = f(t + x)` acting on grid curves.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, HjmmError, Result};
use crate::weighted_spaces::{weak_derivative, Curve, Grid, SpaceParams};

/// How a curve is continued beyond `x_max` when shifted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extension {
    #[default]
    Zero,
    ConstantLast,
    ExponentialDecay { rate: f64 },
}

#[derive(Debug, Clone)]
pub struct ShiftSemigroup {
    grid: Arc<Grid>,
    extension: Extension,
}

impl ShiftSemigroup {
    pub fn new(grid: Arc<Grid>, extension: Extension) -> Result<Self> {
        if let Extension::ExponentialDecay { rate } = extension {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(invalid(format!("extension decay rate must be nonnegative, got {rate}")));
            }
        }
        Ok(Self { grid, extension })
    }

    pub fn zero_extension(grid: Arc<Grid>) -> Self {
        Self {
            grid,
            extension: Extension::Zero,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    fn extend(&self, last: f64, beyond: f64) -> f64 {
        match self.extension {
            Extension::Zero => 0.0,
            Extension::ConstantLast => last,
            Extension::ExponentialDecay { rate } => last * (-rate * beyond).exp(),
        }
    }

    /// `S(t)f`. Lattice multiples of the spacing move values by whole indices; other
    /// times interpolate linearly.
    pub fn shift(&self, t: f64, f: &Curve) -> Result<Curve> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid(format!("shift time must be nonnegative, got {t}")));
        }
        if **f.grid() != *self.grid {
            return Err(HjmmError::GridMismatch);
        }
        let mut out = vec![0.0; self.grid.len()];
        match self.grid.lattice_steps(t) {
            Some(m) => self.shift_lattice_into(m, f.values(), &mut out),
            None => self.shift_interpolated_into(t, f.values(), &mut out),
        }
        Ok(Curve::from_trusted(self.grid.clone(), out))
    }

    /// Index shift by `m` cells.
    pub(crate) fn shift_lattice_into(&self, m: usize, src: &[f64], dst: &mut [f64]) {
        let n = src.len();
        let last = src[n - 1];
        let h = self.grid.spacing();
        for (i, out) in dst.iter_mut().enumerate().take(n) {
            let j = i + m;
            *out = if j < n {
                src[j]
            } else {
                self.extend(last, (j - (n - 1)) as f64 * h)
            };
        }
    }

    fn shift_interpolated_into(&self, t: f64, src: &[f64], dst: &mut [f64]) {
        let n = src.len();
        let h = self.grid.spacing();
        let x_max = self.grid.x_max();
        let last = src[n - 1];
        for (i, d) in dst.iter_mut().enumerate() {
            let x = i as f64 * h + t;
            *d = if x > x_max {
                self.extend(last, x - x_max)
            } else {
                let s = x / h;
                let k = (s.floor() as usize).min(n - 2);
                let frac = s - k as f64;
                src[k] + frac * (src[k + 1] - src[k])
            };
        }
    }
}

/// Operator-norm bound `‖S(t)‖ ≤ e^{−νt/p}` on `L^p_ν`.
pub fn contraction_bound(t: f64, params: &SpaceParams) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid(format!("time must be nonnegative, got {t}")));
    }
    Ok((-params.nu() * t / params.p()).exp())
}

/// Growth exponent `β = −ν/p` of the shift semigroup.
pub fn growth_exponent(params: &SpaceParams) -> f64 {
    -params.nu() / params.p()
}

/// Generator `Af = Df`.
pub fn generator_apply(f: &Curve) -> Curve {
    weak_derivative(f)
}
