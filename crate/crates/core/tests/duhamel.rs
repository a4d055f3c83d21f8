use num_complex::Complex64;

use dnls::dynamics::{
    duhamel_residual_first, duhamel_residual_second, integrate, Scheme, SchemeConfig, Trajectory,
};
use dnls::hopping::{dispersion, FourierPlan, HoppingPotential};
use dnls::lattice::{derive_seed, Field, LatticeShape};
use dnls::sampling::{sample_gaussian, GaussianSpec};

fn lap1() -> HoppingPotential {
    HoppingPotential::standard_laplacian(1).unwrap()
}

/// `e^{-i t α*} ψ0` evaluated mode by mode, independently of any stepper.
fn linear_exact(psi0: &Field, pot: &HoppingPotential, times: &[f64]) -> Vec<Field> {
    let shape = psi0.shape();
    let plan = FourierPlan::new(shape);
    let omega = dispersion(pot, shape).unwrap();
    let mut hat = psi0.values().to_vec();
    plan.forward(&mut hat);
    times
        .iter()
        .map(|&t| {
            let mut v: Vec<Complex64> = hat
                .iter()
                .zip(omega.dft_values())
                .map(|(h, w)| h * Complex64::from_polar(1.0, -w * t))
                .collect();
            plan.inverse(&mut v);
            Field::new(shape, v).unwrap()
        })
        .collect()
}

#[test]
fn strang_residual_is_small_on_unit_time() {
    let shape = LatticeShape::new(1, 32).unwrap();
    let f0 = sample_gaussian(&GaussianSpec::flat(1.0), shape, 77).unwrap();
    let cfg = SchemeConfig {
        scheme: Scheme::Strang,
        dt: 1e-3,
        t_end: 1.0,
        snapshot_stride: 10,
        lambda: 1.0,
    };
    let traj = integrate(&f0, &lap1(), &cfg, &mut []).unwrap();
    for k in 0..5 {
        let x = shape.site_at((derive_seed(11, k) % shape.volume() as u64) as usize);
        let r = duhamel_residual_first(&traj, &lap1(), 1.0, &x, 1.0).unwrap();
        assert!(r <= 1e-6, "site {x:?}: {r:e}");
    }
}

#[test]
fn linear_oracle_satisfies_second_order_form() {
    let shape = LatticeShape::new(1, 16).unwrap();
    let pot = lap1();
    let f0 = sample_gaussian(&GaussianSpec::flat(1.0), shape, 5).unwrap();
    let h = 0.01;
    let times: Vec<f64> = (0..=100).map(|j| j as f64 * h).collect();
    let traj = Trajectory::new(h, linear_exact(&f0, &pot, &times)).unwrap();
    for x in shape.sites() {
        let r = duhamel_residual_second(&traj, &pot, 0.0, &x, 1.0).unwrap();
        assert!(r <= 1e-8, "site {x:?}: {r:e}");
    }
}

#[test]
fn residual_shrinks_at_quadrature_order_for_exact_data() {
    let shape = LatticeShape::new(1, 8).unwrap();
    let pot = lap1();
    let f0 = sample_gaussian(&GaussianSpec::flat(1.0), shape, 9).unwrap();
    let t = 2.0;
    let residual = |h: f64, second: bool| {
        let n = (t / h).round() as usize;
        let times: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
        let traj = Trajectory::new(h, linear_exact(&f0, &pot, &times)).unwrap();
        shape
            .sites()
            .map(|x| {
                if second {
                    duhamel_residual_second(&traj, &pot, 0.0, &x, t).unwrap()
                } else {
                    duhamel_residual_first(&traj, &pot, 0.0, &x, t).unwrap()
                }
            })
            .fold(0.0, f64::max)
    };
    for second in [false, true] {
        let coarse = residual(0.2, second);
        let fine = residual(0.1, second);
        // composite Simpson: error ratio 2^4 under halving
        assert!(
            coarse / fine > 12.0,
            "second={second}: {coarse:e} -> {fine:e}"
        );
    }
}
