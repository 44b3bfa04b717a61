use std::sync::Arc;

use hjmm::coefficients::{apply_f, apply_g, sample_ball_pair, ExponentialFactor, VolatilitySpec};
use hjmm::ergodicity::{semi_inner_product, UpwindGenerator};
use hjmm::finance::bond_price;
use hjmm::noise::NoiseModel;
use hjmm::semigroup::ShiftSemigroup;
use hjmm::solver::{simulate, SimConfig};
use hjmm::weighted_spaces::{
    embedding_bound, l1_norm, lp_nu_norm, sup_abs, sup_weighted, w1p_nu_norm, weak_derivative, Curve, ExpSumProfile,
    Grid, SpaceParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PARAMS: [(f64, f64); 5] = [(1.0, 2.0), (2.0, 2.0), (0.5, 2.0), (1.0, 3.0), (1.5, 4.5)];

fn space(k: usize) -> SpaceParams {
    SpaceParams::new(PARAMS[k].0, PARAMS[k].1).unwrap()
}

fn grid(k: usize, n_cells: usize) -> Arc<Grid> {
    Grid::with_default_extent(space(k), n_cells).unwrap()
}

fn profile(k: usize, seed: u64) -> ExpSumProfile {
    ExpSumProfile::random(&mut ChaCha8Rng::seed_from_u64(seed), &space(k))
}

/// Ten times the change of `q` between 256 and 512 cells.
fn grid_tol(k: usize, q: impl Fn(&Arc<Grid>) -> f64) -> f64 {
    10.0 * (q(&grid(k, 512)) - q(&grid(k, 256))).abs()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

fn spec(k: usize, sigma: f64, slope: f64, n_cells: usize) -> VolatilitySpec {
    let g = grid(k, n_cells);
    let lam = g.params().nu() / g.params().p() + 1.0;
    VolatilitySpec::exponential(
        g,
        vec![
            ExponentialFactor { sigma, lambda: lam, level: 0.5, slope },
            ExponentialFactor { sigma: 0.5 * sigma, lambda: lam + 0.7, level: 0.2, slope: 2.0 * slope },
        ],
        2,
        None,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norms_are_homogeneous_and_subadditive(k in 0..PARAMS.len(), s1: u64, s2: u64, c in -5.0f64..5.0) {
        let g = grid(k, 256);
        let f = profile(k, s1).sample(&g);
        let h = profile(k, s2).sample(&g);
        prop_assert!(close(lp_nu_norm(&f.scaled(c)), c.abs() * lp_nu_norm(&f), 1e-12));
        prop_assert!(close(w1p_nu_norm(&f.scaled(c)), c.abs() * w1p_nu_norm(&f), 1e-12));
        let sum = f.add(&h).unwrap();
        prop_assert!(lp_nu_norm(&sum) <= (lp_nu_norm(&f) + lp_nu_norm(&h)) * (1.0 + 1e-12));
        prop_assert!(w1p_nu_norm(&sum) <= (w1p_nu_norm(&f) + w1p_nu_norm(&h)) * (1.0 + 1e-12));
    }

    #[test]
    fn l1_embedding(k in 0..PARAMS.len(), seed: u64) {
        let prof = profile(k, seed);
        let emb = embedding_bound(&space(k));
        let f = prof.sample(&grid(k, 512));
        let tol = grid_tol(k, |g| l1_norm(&prof.sample(g))) + emb * grid_tol(k, |g| lp_nu_norm(&prof.sample(g)));
        prop_assert!(l1_norm(&f) <= emb * lp_nu_norm(&f) + tol);
    }

    #[test]
    fn weighted_sup_bound(k in 0..PARAMS.len(), seed: u64) {
        let prof = profile(k, seed);
        let (nu, p) = PARAMS[k];
        let rhs = |g: &Arc<Grid>| {
            let f = prof.sample(g);
            (p - 1.0 + nu) * lp_nu_norm(&f).powf(p) + lp_nu_norm(&weak_derivative(&f)).powf(p)
        };
        let lhs = |g: &Arc<Grid>| sup_weighted(&prof.sample(g));
        let g = grid(k, 512);
        prop_assert!(lhs(&g) <= rhs(&g) + grid_tol(k, lhs) + grid_tol(k, rhs));
    }

    #[test]
    fn sup_bounded_by_derivative_mass(k in 0..PARAMS.len(), seed: u64) {
        let prof = profile(k, seed);
        let lhs = |g: &Arc<Grid>| sup_abs(&prof.sample(g));
        let rhs = |g: &Arc<Grid>| l1_norm(&weak_derivative(&prof.sample(g)));
        let g = grid(k, 512);
        prop_assert!(lhs(&g) <= rhs(&g) + grid_tol(k, lhs) + grid_tol(k, rhs));
    }

    #[test]
    fn shift_contracts_on_the_lattice(k in 0..PARAMS.len(), seed: u64, m in 0usize..400) {
        let g = grid(k, 256);
        let sg = ShiftSemigroup::zero_extension(g.clone());
        let f = profile(k, seed).sample(&g);
        let t = m as f64 * g.spacing();
        let s = sg.shift(t, &f).unwrap();
        let (nu, p) = PARAMS[k];
        let bound = (-nu * t / p).exp();
        prop_assert!(lp_nu_norm(&s) <= bound * lp_nu_norm(&f) * (1.0 + 1e-12));
        prop_assert!(w1p_nu_norm(&s) <= bound * w1p_nu_norm(&f) * (1.0 + 1e-12));
    }

    #[test]
    fn semigroup_law_is_exact_on_the_lattice(k in 0..PARAMS.len(), seed: u64, a in 0usize..200, b in 0usize..200) {
        let g = grid(k, 256);
        let sg = ShiftSemigroup::zero_extension(g.clone());
        let f = profile(k, seed).sample(&g);
        let h = g.spacing();
        let same = sg.shift(0.0, &f).unwrap();
        prop_assert_eq!(same.values(), f.values());
        let twice = sg.shift(a as f64 * h, &sg.shift(b as f64 * h, &f).unwrap()).unwrap();
        let once = sg.shift((a + b) as f64 * h, &f).unwrap();
        prop_assert_eq!(twice.values(), once.values());
    }

    #[test]
    fn noise_streams_are_reproducible(seed: u64, stream in 0u64..1000, dim_h in 1usize..8) {
        let mut a = NoiseModel::new(dim_h, seed, stream).unwrap();
        let mut b = NoiseModel::new(dim_h, seed, stream).unwrap();
        let mut c = NoiseModel::new(dim_h, seed, stream + 1).unwrap();
        for _ in 0..20 {
            let x = a.sample_increment(0.01).unwrap();
            prop_assert_eq!(x.len(), dim_h);
            prop_assert_eq!(&x, &b.sample_increment(0.01).unwrap());
            prop_assert_ne!(x, c.sample_increment(0.01).unwrap());
        }
    }

    #[test]
    fn volatility_is_dominated(k in 0..PARAMS.len(), sigma in 0.05f64..2.0, slope in 0.0f64..1.5, seed: u64) {
        let s = spec(k, sigma, slope, 128);
        let check = s.check_dominance(&mut ChaCha8Rng::seed_from_u64(seed), 10_000, 20.0).unwrap();
        prop_assert!(check.holds(1e-12), "{check:?}");
    }

    #[test]
    fn coefficients_are_lipschitz(k in 0..PARAMS.len(), sigma in 0.05f64..2.0, slope in 0.0f64..1.5, seed: u64) {
        let s = spec(k, sigma, slope, 256);
        let g = s.grid().clone();
        let (f1, f2) = sample_ball_pair(&mut ChaCha8Rng::seed_from_u64(seed), &g, 2.0);
        let dist = lp_nu_norm(&f1.sub(&f2).unwrap());
        let ghat_sup = sup_abs(&s.g_hat);
        let gbar = lp_nu_norm(s.g_bar.as_ref().unwrap());
        let df = lp_nu_norm(&apply_f(&s, 0.0, &f1).unwrap().sub(&apply_f(&s, 0.0, &f2).unwrap()).unwrap());
        prop_assert!(df <= 4.0 * embedding_bound(g.params()) * ghat_sup * gbar * dist * (1.0 + 1e-9));
        let dg = apply_g(&s, 0.0, &f1).unwrap().sub(&apply_g(&s, 0.0, &f2).unwrap()).unwrap().gamma_norm();
        prop_assert!(dg <= ghat_sup * dist * (1.0 + 1e-9));
    }

    #[test]
    fn semi_inner_product_axioms(k in 0..PARAMS.len(), s1: u64, s2: u64) {
        let g = grid(k, 256);
        let f = profile(k, s1).sample(&g);
        let h = profile(k, s2).sample(&g);
        let nf = lp_nu_norm(&f);
        let nh = lp_nu_norm(&h);
        prop_assert!(close(semi_inner_product(&f, &f).unwrap(), nf * nf, 1e-12));
        let fh = semi_inner_product(&f, &h).unwrap();
        prop_assert!(fh * fh <= nf * nf * nh * nh * (1.0 + 1e-12));
        prop_assert_eq!(semi_inner_product(&f, &Curve::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn yosida_bound(k in 0..PARAMS.len(), seed: u64, n in prop::sample::select(vec![1.0, 10.0, 100.0])) {
        let g = grid(k, 256);
        let (nu, p) = PARAMS[k];
        let h = g.spacing();
        let omega2 = -nu / p;
        let tol = ((-nu * h / p).exp_m1() / h - omega2).abs();
        let z = profile(k, seed).sample(&g);
        let ratio = UpwindGenerator::new(g).yosida_ratio(n, z.values()).unwrap().unwrap();
        prop_assert!(ratio <= n * omega2 / (n - omega2) + tol, "{ratio}");
    }

    #[test]
    fn bond_prices_are_positive_and_decreasing(seed: u64, base in 0.0f64..0.1) {
        let g = Grid::new(SpaceParams::new(1.0, 2.0).unwrap(), 10.0, 256).unwrap();
        let prof = profile(0, seed);
        let c = Curve::from_fn(g, |x| base + 0.05 * prof.eval(x).powi(2)).unwrap();
        let mut last = 1.0;
        for j in 1..=40 {
            let q = bond_price(&c, 1.0, 1.0 + 0.25 * j as f64).unwrap();
            prop_assert!(q.price > 0.0 && q.price <= last);
            last = q.price;
        }
    }

    #[test]
    fn simulation_is_deterministic(seed: u64, slope in 0.0f64..1.0) {
        let s = Arc::new(spec(1, 0.5, slope, 64));
        let r0 = profile(1, seed).sample(s.grid());
        let dt = s.grid().spacing();
        let cfg = SimConfig::new(s, r0, 8.0 * dt, dt, seed);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        prop_assert_eq!(a.final_curve().values(), b.final_curve().values());
        prop_assert_eq!(a.norms, b.norms);
    }
}
