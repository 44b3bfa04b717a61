//! Zero-coupon bond prices from a forward curve and the change from Musiela to HJM coordinates.

use serde::Serialize;

use crate::error::{invalid, HjmmError, Result};
use crate::solver::PathResult;
use crate::weighted_spaces::Curve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BondQuote {
    pub t: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub price: f64,
    /// Continuously compounded yield, undefined at `T = t`.
    #[serde(rename = "yield")]
    pub yield_: Option<f64>,
}

/// Trapezoid integral of the curve over `[0, tau]`, the last cell cut at `tau` with the
/// interpolated end value.
pub fn integrate_to(curve: &Curve, tau: f64) -> Result<f64> {
    let g = curve.grid();
    if !(tau >= 0.0 && tau <= g.x_max() * (1.0 + 1e-12)) {
        return Err(HjmmError::OutOfRange(format!(
            "time to maturity {tau} outside [0, {}]",
            g.x_max()
        )));
    }
    let h = g.spacing();
    let v = curve.values();
    let full = ((tau / h).floor() as usize).min(g.n_cells());
    let mut total: f64 = (0..full).map(|k| 0.5 * h * (v[k] + v[k + 1])).sum();
    let rest = tau - full as f64 * h;
    if rest > 0.0 && full < g.n_cells() {
        total += 0.5 * rest * (v[full] + curve.interpolate(tau)?);
    }
    Ok(total)
}

/// `P(t, T) = exp(−∫₀^{T−t} r(t)(x) dx)` for the Musiela curve `curve` observed at time `t`.
pub fn bond_price(curve: &Curve, t: f64, maturity: f64) -> Result<BondQuote> {
    if !t.is_finite() || !maturity.is_finite() {
        return Err(invalid("valuation time and maturity must be finite"));
    }
    if maturity < t {
        return Err(invalid(format!("maturity {maturity} precedes valuation time {t}")));
    }
    let tau = maturity - t;
    let integral = integrate_to(curve, tau)?;
    let price = (-integral).exp();
    Ok(BondQuote {
        t,
        maturity,
        price,
        yield_: (tau > 0.0).then(|| integral / tau),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardSeries {
    #[serde(rename = "T")]
    pub maturity: f64,
    pub times: Vec<f64>,
    /// `f(t, T) = r(t)(T − t)` at each snapshot time.
    pub values: Vec<f64>,
}

/// The HJM forward rate for a fixed maturity read off the path snapshots.
pub fn musiela_to_hjm(path: &PathResult, maturity: f64) -> Result<ForwardSeries> {
    let mut values = Vec::with_capacity(path.curves.len());
    for (t, curve) in path.snapshot_times.iter().zip(&path.curves) {
        let x = maturity - t;
        if x < 0.0 {
            return Err(HjmmError::OutOfRange(format!(
                "maturity {maturity} precedes snapshot time {t}"
            )));
        }
        values.push(curve.interpolate(x)?);
    }
    Ok(ForwardSeries {
        maturity,
        times: path.snapshot_times.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::VolatilitySpec;
    use crate::solver::{simulate, SimConfig};
    use crate::weighted_spaces::{Grid, SpaceParams};
    use std::sync::Arc;

    fn grid() -> Arc<Grid> {
        Grid::new(SpaceParams::new(1.0, 2.0).unwrap(), 10.0, 1024).unwrap()
    }

    #[test]
    fn closed_form_prices() {
        let g = grid();
        let flat = Curve::from_fn(g.clone(), |_| 0.05).unwrap();
        let q = bond_price(&flat, 0.0, 0.0).unwrap();
        assert_eq!(q.price, 1.0);
        assert!(q.yield_.is_none());
        let q = bond_price(&flat, 1.0, 3.0).unwrap();
        assert!((q.price / (-0.1f64).exp() - 1.0).abs() < 1e-12);
        assert!((q.yield_.unwrap() - 0.05).abs() < 1e-12);
        let decaying = Curve::from_fn(g.clone(), |x| 0.05 * (-x).exp()).unwrap();
        let exact = (-0.05 * (1.0 - (-1.0f64).exp())).exp();
        let q = bond_price(&decaying, 0.0, 1.0).unwrap();
        assert!((q.price / exact - 1.0).abs() < 1e-6, "{q:?}");
        // off-lattice maturity through the partial cell
        let exact = (-0.05 * (1.0 - (-1.2345f64).exp())).exp();
        let q = bond_price(&decaying, 0.0, 1.2345).unwrap();
        assert!((q.price / exact - 1.0).abs() < 1e-6, "{q:?}");
    }

    #[test]
    fn rejects_out_of_range() {
        let g = grid();
        let flat = Curve::from_fn(g, |_| 0.05).unwrap();
        assert!(bond_price(&flat, 0.0, 10.5).is_err());
        assert!(bond_price(&flat, 2.0, 1.0).is_err());
        assert!(bond_price(&flat, 0.0, 10.0).is_ok());
    }

    #[test]
    fn prices_decrease_in_maturity() {
        let g = grid();
        let c = Curve::from_fn(g, |x| 0.02 + 0.03 * (-0.5 * x).exp()).unwrap();
        let prices: Vec<f64> = (0..40).map(|k| bond_price(&c, 0.0, 0.25 * k as f64).unwrap().price).collect();
        assert!(prices.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_volatility_forward_is_constant() {
        let g = Grid::new(SpaceParams::new(1.0, 2.0).unwrap(), 10.0, 200).unwrap();
        let spec = Arc::new(VolatilitySpec::zero(g.clone(), 1).unwrap());
        let r0 = Curve::from_fn(g.clone(), |x| 0.03 + 0.01 * x.sin()).unwrap();
        let mut cfg = SimConfig::new(spec, r0.clone(), 2.0, g.spacing(), 1);
        cfg.snapshot_stride = 1;
        let path = simulate(&cfg).unwrap();
        for maturity in [2.0, 3.7, 8.0] {
            let s = musiela_to_hjm(&path, maturity).unwrap();
            let f0 = r0.interpolate(maturity).unwrap();
            assert_eq!(s.values[0], f0);
            assert!(s.values.iter().all(|v| (v - f0).abs() < 1e-12), "{s:?}");
        }
        assert!(musiela_to_hjm(&path, 1.0).is_err());
    }
}
