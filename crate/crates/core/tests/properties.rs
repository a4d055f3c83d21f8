use num_complex::Complex64;
use proptest::prelude::*;

use dnls::convergence::{delta_bar, evolve_pair};
use dnls::dynamics::{g_site, integrate, p_site, Scheme, SchemeConfig};
use dnls::hopping::{convolve, convolve_fourier, HoppingPotential};
use dnls::lattice::{truncate, Field, InitialData, LatticeShape, Site};
use dnls::observables::{
    flux_field, flux_m, growth_bound_report, hamiltonian, particle_number, weighted_norm, FluxForm,
    WeightSpec,
};
use dnls::sampling::{sample_gaussian, sample_gibbs, GaussianSpec, GibbsSpec};

fn field(shape: LatticeShape, seed: u64) -> Field {
    sample_gaussian(&GaussianSpec::flat(1.0), shape, seed).unwrap()
}

fn site_in(shape: LatticeShape, raw: &[i64]) -> Site {
    let l = shape.half_width() as i64;
    Site::new(
        raw.iter()
            .take(shape.dim())
            .map(|c| c.rem_euclid(2 * l + 1) - l)
            .collect(),
    )
}

fn config(scheme: Scheme, dt: f64, t_end: f64, lambda: f64) -> SchemeConfig {
    SchemeConfig {
        scheme,
        dt,
        t_end,
        snapshot_stride: 1,
        lambda,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wrap_add_is_an_abelian_group(
        d in 1usize..4, l in 0usize..6,
        a in prop::collection::vec(-50i64..50, 3),
        b in prop::collection::vec(-50i64..50, 3),
        c in prop::collection::vec(-50i64..50, 3),
    ) {
        let s = LatticeShape::new(d, l).unwrap();
        let (x, y, z) = (site_in(s, &a), site_in(s, &b), site_in(s, &c));
        let o = s.origin();
        prop_assert_eq!(s.wrap_add(&x, &y).unwrap(), s.wrap_add(&y, &x).unwrap());
        prop_assert_eq!(
            s.wrap_add(&s.wrap_add(&x, &y).unwrap(), &z).unwrap(),
            s.wrap_add(&x, &s.wrap_add(&y, &z).unwrap()).unwrap()
        );
        prop_assert_eq!(s.wrap_add(&x, &o).unwrap(), x.clone());
        let neg = s.wrap_sub(&o, &x).unwrap();
        prop_assert_eq!(s.wrap_add(&x, &neg).unwrap(), o);
    }

    #[test]
    fn embedding_is_periodic(
        d in 1usize..3, l in 0usize..5, seed in any::<u64>(),
        z in prop::collection::vec(-30i64..30, 2), shift in prop::collection::vec(-3i64..3, 2),
    ) {
        let s = LatticeShape::new(d, l).unwrap();
        let gen = InitialData::PowerEnvelope { exponent: 0.5, scale: 1.5, seed };
        let f = truncate(&gen, s).unwrap();
        let z: Vec<i64> = z[..d].to_vec();
        let moved: Vec<i64> = z.iter().zip(&shift).map(|(c, k)| c + k * s.side() as i64).collect();
        prop_assert_eq!(f.embed_lookup(&z), f.embed_lookup(&moved));
    }

    #[test]
    fn truncation_respects_the_envelope(
        d in 1usize..3, l in 0usize..12, seed in any::<u64>(), p in 0.0f64..2.0, c in 0.1f64..4.0,
    ) {
        let s = LatticeShape::new(d, l).unwrap();
        let gen = InitialData::PowerEnvelope { exponent: p, scale: c, seed };
        let f = truncate(&gen, s).unwrap();
        let norm = weighted_norm(&f, &WeightSpec::Power { p }).unwrap();
        prop_assert!(norm <= c * (1.0 + 1e-12));
    }

    #[test]
    fn dump_round_trip(d in 1usize..3, l in 0usize..5, seed in any::<u64>()) {
        let f = field(LatticeShape::new(d, l).unwrap(), seed);
        let back = Field::read_dump(f.to_dump_string().as_bytes()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn fourier_route_matches_stencil(d in 1usize..3, l in 1usize..10, seed in any::<u64>()) {
        let s = LatticeShape::new(d, l).unwrap();
        let a = HoppingPotential::standard_laplacian(d).unwrap();
        let f = field(s, seed);
        let direct = convolve(&a, &f).unwrap();
        let spectral = convolve_fourier(&a, &f).unwrap();
        prop_assert!(direct.max_abs_diff(&spectral).unwrap() <= 1e-12 * f.max_abs().max(1.0));
    }

    #[test]
    fn convolution_is_local(
        l in 2usize..7, seed in any::<u64>(), raw in prop::collection::vec(-20i64..20, 2),
        far in prop::collection::vec(-20i64..20, 2),
    ) {
        let s = LatticeShape::new(2, l).unwrap();
        let a = HoppingPotential::standard_laplacian(2).unwrap();
        let f = field(s, seed);
        let x = site_in(s, &raw);
        let y = site_in(s, &far);
        prop_assume!(s.torus_dist_inf(&x, &y).unwrap() > 1);
        let mut vals = f.values().to_vec();
        vals[s.index_of(&y).unwrap()] += Complex64::new(5.0, -2.0);
        let g = Field::new(s, vals).unwrap();
        prop_assert_eq!(convolve(&a, &f).unwrap().get(&x).unwrap(), convolve(&a, &g).unwrap().get(&x).unwrap());
    }

    #[test]
    fn g_and_p_are_local(
        l in 3usize..8, seed in any::<u64>(), raw in prop::collection::vec(-20i64..20, 1),
        far in prop::collection::vec(-20i64..20, 1), lambda in -2.0f64..2.0,
    ) {
        let s = LatticeShape::new(1, l).unwrap();
        let a = HoppingPotential::standard_laplacian(1).unwrap();
        let f = field(s, seed);
        let x = site_in(s, &raw);
        let y = site_in(s, &far);
        let dist = s.torus_dist_inf(&x, &y).unwrap();
        let mut vals = f.values().to_vec();
        vals[s.index_of(&y).unwrap()] *= Complex64::new(0.3, 1.7);
        let g = Field::new(s, vals).unwrap();
        if dist > 1 {
            prop_assert_eq!(g_site(&f, &a, lambda, &x).unwrap(), g_site(&g, &a, lambda, &x).unwrap());
        }
        if dist > 2 {
            prop_assert_eq!(p_site(&f, &a, lambda, &x).unwrap(), p_site(&g, &a, lambda, &x).unwrap());
        }
    }

    #[test]
    fn strang_conserves_particle_number(l in 1usize..20, seed in any::<u64>(), lambda in -2.0f64..2.0) {
        let s = LatticeShape::new(1, l).unwrap();
        let a = HoppingPotential::standard_laplacian(1).unwrap();
        let f = field(s, seed);
        let traj = integrate(&f, &a, &config(Scheme::Strang, 1e-2, 2.0, lambda), &mut []).unwrap();
        let n0 = particle_number(&f);
        for g in traj.snapshots() {
            prop_assert!((particle_number(g) - n0).abs() <= 1e-10 * n0);
        }
    }

    #[test]
    fn flux_balance_and_forms(
        d in 1usize..3, l in 1usize..6, seed in any::<u64>(), eps in 0.01f64..0.5,
        raw in prop::collection::vec(-20i64..20, 2),
    ) {
        let s = LatticeShape::new(d, l).unwrap();
        let a = HoppingPotential::standard_laplacian(d).unwrap();
        let f = field(s, seed);
        let scale = f.max_abs().powi(2) * s.volume() as f64;
        let total: f64 = flux_field(&f, &a).unwrap().iter().sum();
        prop_assert!(total.abs() <= 1e-12 * scale);
        let x = site_in(s, &raw);
        let m1 = flux_m(&f, &a, eps, &x, FluxForm::Direct).unwrap();
        let m2 = flux_m(&f, &a, eps, &x, FluxForm::Antisymmetrized).unwrap();
        prop_assert!((m1 - m2).abs() <= 1e-12 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Centered differences along an RK4 trajectory reproduce `-i G` and `P`:
    /// the mismatch is the O(dt²) difference error, so halving dt cuts it ~4x.
    #[test]
    fn time_derivatives_match_g_and_p(l in 3usize..10, seed in any::<u64>(), lambda in 0.0f64..1.5) {
        let s = LatticeShape::new(1, l).unwrap();
        let a = HoppingPotential::standard_laplacian(1).unwrap();
        let f = field(s, seed);
        // mismatch at t = 10 dt0 for step dt0 / m
        let errors = |m: usize| {
            let dt = 2e-3 / m as f64;
            let traj = integrate(&f, &a, &config(Scheme::Rk4, dt, 0.04, lambda), &mut []).unwrap();
            let snaps = traj.snapshots();
            let j = 10 * m;
            s.sites()
                .map(|x| {
                    let prev = snaps[j - 1].get(&x).unwrap();
                    let cur = snaps[j].get(&x).unwrap();
                    let next = snaps[j + 1].get(&x).unwrap();
                    let first = (next - prev) / (2.0 * dt);
                    let second = (next - 2.0 * cur + prev) / (dt * dt);
                    let g = g_site(&snaps[j], &a, lambda, &x).unwrap();
                    let p = p_site(&snaps[j], &a, lambda, &x).unwrap();
                    ((first + Complex64::i() * g).norm(), (second - p).norm())
                })
                .collect::<Vec<_>>()
        };
        let coarse = errors(1);
        let fine = errors(2);
        // cancellation noise of the second difference at the fine step
        let noise = 1e-7 * f.max_abs().max(1.0);
        for ((c1, c2), (f1, f2)) in coarse.into_iter().zip(fine) {
            prop_assert!(f1 <= c1 / 3.0 + noise, "first: {c1:e} -> {f1:e}");
            prop_assert!(f2 <= c2 / 3.0 + noise, "second: {c2:e} -> {f2:e}");
        }
    }

    #[test]
    fn local_density_bound_holds_on_defocusing_runs(
        l in 4usize..16, seed in any::<u64>(), lambda in 0.0f64..2.0, eps in 0.05f64..0.5,
        raw in prop::collection::vec(-20i64..20, 1),
    ) {
        let s = LatticeShape::new(1, l).unwrap();
        let a = HoppingPotential::standard_laplacian(1).unwrap();
        let f = field(s, seed);
        let traj = integrate(&f, &a, &SchemeConfig { snapshot_stride: 10, ..config(Scheme::Strang, 1e-3, 2.0, lambda) }, &mut []).unwrap();
        let r = growth_bound_report(&traj, &a, eps, &site_in(s, &raw), 2.0).unwrap();
        prop_assert!(r.pass, "max ratio {}", r.max_ratio());
    }

    #[test]
    fn truncations_agree_at_time_zero(l in 2usize..8, extra in 1usize..4, seed in any::<u64>(), k in 0usize..2) {
        let a = HoppingPotential::standard_laplacian(1).unwrap();
        let gen = InitialData::PowerEnvelope { exponent: 0.3, scale: 1.0, seed };
        let small = LatticeShape::new(1, l).unwrap();
        let big = LatticeShape::new(1, l + extra).unwrap();
        let pair = evolve_pair(&gen, &a, small, big, &config(Scheme::Rk4, 1e-2, 0.1, 1.0)).unwrap();
        prop_assert_eq!(pair.delta_bar(k, 0.0).unwrap(), 0.0);
        let big_traj = pair.big().unwrap();
        prop_assert_eq!(delta_bar(&big_traj, &pair.small, k, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn hamiltonian_is_real_and_gauge_invariant(l in 1usize..8, seed in any::<u64>(), theta in 0.0f64..6.3) {
        let s = LatticeShape::new(1, l).unwrap();
        let a = HoppingPotential::standard_laplacian(1).unwrap();
        let f = field(s, seed);
        let rot = Field::new(s, f.values().iter().map(|v| v * Complex64::from_polar(1.0, theta)).collect()).unwrap();
        let h0 = hamiltonian(&f, &a, 0.7).unwrap();
        let h1 = hamiltonian(&rot, &a, 0.7).unwrap();
        prop_assert!((h0 - h1).abs() <= 1e-12 * h0.abs().max(1.0));
    }

    #[test]
    fn samplers_are_deterministic(l in 0usize..6, seed in any::<u64>()) {
        let s = LatticeShape::new(1, l).unwrap();
        prop_assert_eq!(field(s, seed), field(s, seed));
        let spec = GibbsSpec { beta: 1.0, mu: -1.0, lambda: 1.0, proposal_sigma: 0.5, burn_in: 5, thinning: 2 };
        let a = HoppingPotential::standard_laplacian(1).unwrap();
        let r1 = sample_gibbs(&spec, &a, s, seed, 3).unwrap();
        let r2 = sample_gibbs(&spec, &a, s, seed, 3).unwrap();
        prop_assert_eq!(r1, r2);
    }
}
