//! Right-hand side of the finite periodic DNLS, time steppers, trajectories and
//! Duhamel residuals.
//!
//! The equation is `i dψ/dt = α * ψ + λ |ψ|² ψ`, written as `dψ/dt = -i G(ψ)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hopping::{dispersion, FourierPlan, HoppingError, HoppingPotential, Stencil};
use crate::lattice::{Field, LatticeError, LatticeShape, Site};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid scheme configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite field value encountered at t = {t}")]
    BlowUp { t: f64 },
    #[error("time {t} is not on the snapshot grid (spacing {spacing})")]
    OffGrid { t: f64, spacing: f64 },
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Hopping(#[from] HoppingError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Onsite half rotation, exact Fourier linear step, onsite half rotation.
    Strang,
    /// Classical fourth-order Runge–Kutta on the full right-hand side.
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strang" => Ok(Scheme::Strang),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub lambda: f64,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(DynamicsError::InvalidConfig(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(DynamicsError::InvalidConfig(
                "snapshot_stride must be at least 1".into(),
            ));
        }
        if !self.lambda.is_finite() {
            return Err(DynamicsError::InvalidConfig("lambda must be finite".into()));
        }
        self.step_count().map(|_| ())
    }

    /// Number of steps; `t_end` must be a whole number of snapshot intervals.
    pub fn step_count(&self) -> Result<usize, DynamicsError> {
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(DynamicsError::InvalidConfig(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        let n = n as usize;
        if !n.is_multiple_of(self.snapshot_stride) {
            return Err(DynamicsError::InvalidConfig(format!(
                "{n} steps are not a multiple of the snapshot stride {}",
                self.snapshot_stride
            )));
        }
        Ok(n)
    }

    pub fn snapshot_spacing(&self) -> f64 {
        self.dt * self.snapshot_stride as f64
    }
}

/// Snapshots of a run on the uniform grid `t_j = j · dt · stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    shape: LatticeShape,
    spacing: f64,
    times: Vec<f64>,
    snapshots: Vec<Field>,
}

impl Trajectory {
    /// Assembles a trajectory; every snapshot must live on `shape`.
    pub fn new(spacing: f64, snapshots: Vec<Field>) -> Result<Self, DynamicsError> {
        let first = snapshots.first().ok_or(DynamicsError::EmptyTrajectory)?;
        let shape = first.shape();
        if let Some(bad) = snapshots.iter().find(|f| f.shape() != shape) {
            return Err(LatticeError::ShapeMismatch(shape, bad.shape()).into());
        }
        if !(spacing > 0.0) {
            return Err(DynamicsError::InvalidConfig(
                "spacing must be positive".into(),
            ));
        }
        let times = (0..snapshots.len()).map(|j| j as f64 * spacing).collect();
        Ok(Self {
            shape,
            spacing,
            times,
            snapshots,
        })
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[Field] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn initial(&self) -> &Field {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("trajectory is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// Grid index of `t`, tolerating rounding of `1e-9` grid spacings.
    pub fn index_of_time(&self, t: f64) -> Result<usize, DynamicsError> {
        let j = (t / self.spacing).round();
        if j < 0.0 || (j * self.spacing - t).abs() > 1e-9 * self.spacing || j as usize >= self.len()
        {
            return Err(DynamicsError::OffGrid {
                t,
                spacing: self.spacing,
            });
        }
        Ok(j as usize)
    }

    /// Whether two trajectories share shape-independent grid data.
    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.len() == other.len() && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
    }
}

/// Per-step callback receiving the current time and field.
pub trait Observer {
    fn observe(&mut self, t: f64, field: &Field);
}

impl<F: FnMut(f64, &Field)> Observer for F {
    fn observe(&mut self, t: f64, field: &Field) {
        self(t, field)
    }
}

/// `G_x(ψ) = Σ_y α(x - y) ψ(y) + λ |ψ(x)|² ψ(x)`.
pub fn g_site(
    field: &Field,
    pot: &HoppingPotential,
    lambda: f64,
    x: &Site,
) -> Result<Complex64, DynamicsError> {
    let shape = field.shape();
    pot.check_fits(shape)?;
    shape.check(x)?;
    Ok(local_conv(field, pot, x.coords()) + onsite(field.get(x)?, lambda))
}

fn onsite(v: Complex64, lambda: f64) -> Complex64 {
    lambda * v.norm_sqr() * v
}

/// `Σ_z α(z) ψ(x - z)` read straight off the kernel without a full stencil.
fn local_conv(field: &Field, pot: &HoppingPotential, x: &[i64]) -> Complex64 {
    local_conv_of(field.shape(), pot, x, |i| field.values()[i])
}

fn local_conv_of<F: Fn(usize) -> Complex64>(
    shape: LatticeShape,
    pot: &HoppingPotential,
    x: &[i64],
    value: F,
) -> Complex64 {
    let mut z = vec![0i64; x.len()];
    pot.offsets()
        .filter(|(_, a)| *a != 0.0)
        .map(|(y, a)| {
            for ((zi, xi), yi) in z.iter_mut().zip(x).zip(&y) {
                *zi = xi - yi;
            }
            a * value(shape.index_wrapped(&z))
        })
        .sum()
}

/// `dψ/dt = -i G(ψ)` at every site.
pub fn rhs(field: &Field, pot: &HoppingPotential, lambda: f64) -> Result<Field, DynamicsError> {
    let stencil = Stencil::new(pot, field.shape())?;
    let mut out = vec![ZERO; field.values().len()];
    rhs_into(&stencil, lambda, field.values(), &mut out);
    Ok(Field::from_raw(field.shape(), out))
}

fn rhs_into(stencil: &Stencil, lambda: f64, psi: &[Complex64], out: &mut [Complex64]) {
    stencil.apply(psi, out);
    for (o, &p) in out.iter_mut().zip(psi) {
        *o = -I * (*o + onsite(p, lambda));
    }
}

/// Second time derivative `P^x(ψ)`:
/// `-(α*(α*ψ)) - λ α*(|ψ|²ψ) - 2λ|ψ|²(α*ψ) - λ²|ψ|⁴ψ + λψ²(α*ψ̄)` at `x`.
pub fn p_site(
    field: &Field,
    pot: &HoppingPotential,
    lambda: f64,
    x: &Site,
) -> Result<Complex64, DynamicsError> {
    let shape = field.shape();
    pot.check_fits(shape)?;
    shape.check(x)?;
    let xs = x.coords();
    let vals = field.values();
    let psi_x = field.get(x)?;
    // α*(α*ψ)(x) needs α*ψ on the ℓ-ball around x
    let conv_at = |i: usize| local_conv(field, pot, shape.site_at(i).coords());
    let double = local_conv_of(shape, pot, xs, conv_at);
    let cubic = local_conv_of(shape, pot, xs, |i| onsite(vals[i], 1.0));
    let conv = local_conv(field, pot, xs);
    let conv_conj = local_conv_of(shape, pot, xs, |i| vals[i].conj());
    let m = psi_x.norm_sqr();
    Ok(
        -double - lambda * cubic - 2.0 * lambda * m * conv - lambda * lambda * m * m * psi_x
            + lambda * psi_x * psi_x * conv_conj,
    )
}

/// Reusable stepping machinery for one `(kernel, box, λ, dt)` combination.
#[derive(Debug, Clone)]
pub struct Propagator {
    scheme: Scheme,
    lambda: f64,
    dt: f64,
    stencil: Stencil,
    linear: Option<(FourierPlan, Vec<Complex64>)>,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

impl Propagator {
    pub fn new(
        pot: &HoppingPotential,
        shape: LatticeShape,
        scheme: Scheme,
        lambda: f64,
        dt: f64,
    ) -> Result<Self, DynamicsError> {
        let stencil = Stencil::new(pot, shape)?;
        let linear = match scheme {
            Scheme::Strang if !stencil.is_empty() => {
                let w = dispersion(pot, shape)?;
                let phases = w
                    .dft_values()
                    .iter()
                    .map(|&om| Complex64::from_polar(1.0, -om * dt))
                    .collect();
                Some((FourierPlan::new(shape), phases))
            }
            _ => None,
        };
        let v = shape.volume();
        Ok(Self {
            scheme,
            lambda,
            dt,
            stencil,
            linear,
            k: std::array::from_fn(|_| vec![ZERO; v]),
            tmp: vec![ZERO; v],
        })
    }

    pub fn shape(&self) -> LatticeShape {
        self.stencil.shape()
    }

    /// Advances `psi` in place by one step.
    pub fn step(&mut self, psi: &mut [Complex64]) {
        match self.scheme {
            Scheme::Strang => self.step_strang(psi),
            Scheme::Rk4 => self.step_rk4(psi),
        }
    }

    fn rotate(&self, psi: &mut [Complex64], h: f64) {
        if self.lambda == 0.0 {
            return;
        }
        for v in psi.iter_mut() {
            *v *= Complex64::from_polar(1.0, -self.lambda * v.norm_sqr() * h);
        }
    }

    fn step_strang(&mut self, psi: &mut [Complex64]) {
        let half = 0.5 * self.dt;
        self.rotate(psi, half);
        if let Some((plan, phases)) = &self.linear {
            plan.forward(psi);
            psi.iter_mut().zip(phases).for_each(|(v, p)| *v *= p);
            plan.inverse(psi);
        }
        self.rotate(psi, half);
    }

    fn step_rk4(&mut self, psi: &mut [Complex64]) {
        let dt = self.dt;
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        rhs_into(&self.stencil, self.lambda, psi, k1);
        for ((t, p), k) in tmp.iter_mut().zip(psi.iter()).zip(k1.iter()) {
            *t = p + 0.5 * dt * k;
        }
        rhs_into(&self.stencil, self.lambda, tmp, k2);
        for ((t, p), k) in tmp.iter_mut().zip(psi.iter()).zip(k2.iter()) {
            *t = p + 0.5 * dt * k;
        }
        rhs_into(&self.stencil, self.lambda, tmp, k3);
        for ((t, p), k) in tmp.iter_mut().zip(psi.iter()).zip(k3.iter()) {
            *t = p + dt * k;
        }
        rhs_into(&self.stencil, self.lambda, tmp, k4);
        for (i, p) in psi.iter_mut().enumerate() {
            *p += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// One Strang step: `e^{-iλ|ψ|²dt/2}`, then `e^{-iω dt}` in Fourier space, then
/// the onsite half rotation again.
pub fn step_strang(
    field: &Field,
    pot: &HoppingPotential,
    lambda: f64,
    dt: f64,
) -> Result<Field, DynamicsError> {
    one_step(field, pot, Scheme::Strang, lambda, dt)
}

/// One classical Runge–Kutta step of `dψ/dt = -i G(ψ)`.
pub fn step_rk4(
    field: &Field,
    pot: &HoppingPotential,
    lambda: f64,
    dt: f64,
) -> Result<Field, DynamicsError> {
    one_step(field, pot, Scheme::Rk4, lambda, dt)
}

fn one_step(
    field: &Field,
    pot: &HoppingPotential,
    scheme: Scheme,
    lambda: f64,
    dt: f64,
) -> Result<Field, DynamicsError> {
    let mut prop = Propagator::new(pot, field.shape(), scheme, lambda, dt)?;
    let mut out = field.clone();
    prop.step(out.values_mut());
    Ok(out)
}

/// Runs the configured scheme from `field0` to `t_end`, keeping every
/// `snapshot_stride`-th state. Observers see the initial state and every step.
pub fn integrate(
    field0: &Field,
    pot: &HoppingPotential,
    config: &SchemeConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory, DynamicsError> {
    config.validate()?;
    let steps = config.step_count()?;
    let mut prop = Propagator::new(pot, field0.shape(), config.scheme, config.lambda, config.dt)?;
    let mut state = field0.clone();
    for obs in observers.iter_mut() {
        obs.observe(0.0, &state);
    }
    let mut snapshots = Vec::with_capacity(steps / config.snapshot_stride + 1);
    snapshots.push(state.clone());
    for n in 1..=steps {
        prop.step(state.values_mut());
        let t = n as f64 * config.dt;
        if !state.is_finite() {
            return Err(DynamicsError::BlowUp { t });
        }
        for obs in observers.iter_mut() {
            obs.observe(t, &state);
        }
        if n % config.snapshot_stride == 0 {
            snapshots.push(state.clone());
        }
    }
    Trajectory::new(config.snapshot_spacing(), snapshots)
}

/// Composite Simpson on an even number of uniform intervals, trapezoid otherwise.
pub(crate) fn grid_integral(values: &[Complex64], h: f64) -> Complex64 {
    let n = values.len().saturating_sub(1);
    if n == 0 {
        return ZERO;
    }
    if n.is_multiple_of(2) {
        let mut acc = values[0] + values[n];
        for (j, v) in values.iter().enumerate().take(n).skip(1) {
            acc += if j % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        acc * (h / 3.0)
    } else {
        let inner: Complex64 = values[1..n].iter().sum();
        (0.5 * (values[0] + values[n]) + inner) * h
    }
}

/// `|ψ_t(x) - ψ_0(x) + i ∫_0^t G_x(ψ_s) ds|` with the integral on the snapshot grid.
pub fn duhamel_residual_first(
    traj: &Trajectory,
    pot: &HoppingPotential,
    lambda: f64,
    x: &Site,
    t: f64,
) -> Result<f64, DynamicsError> {
    let j = traj.index_of_time(t)?;
    let g = traj.snapshots[..=j]
        .iter()
        .map(|f| g_site(f, pot, lambda, x))
        .collect::<Result<Vec<_>, _>>()?;
    let integral = grid_integral(&g, traj.spacing);
    let psi_t = traj.snapshots[j].get(x)?;
    let psi_0 = traj.snapshots[0].get(x)?;
    Ok((psi_t - psi_0 + I * integral).norm())
}

/// `|ψ_t(x) - ψ_0(x) + i t G_x(ψ_0) - ∫_0^t (t - s) P^x(ψ_s) ds|`.
pub fn duhamel_residual_second(
    traj: &Trajectory,
    pot: &HoppingPotential,
    lambda: f64,
    x: &Site,
    t: f64,
) -> Result<f64, DynamicsError> {
    let j = traj.index_of_time(t)?;
    let t_grid = traj.times[j];
    let integrand = traj.snapshots[..=j]
        .iter()
        .zip(&traj.times)
        .map(|(f, &s)| p_site(f, pot, lambda, x).map(|p| (t_grid - s) * p))
        .collect::<Result<Vec<_>, _>>()?;
    let integral = grid_integral(&integrand, traj.spacing);
    let psi_t = traj.snapshots[j].get(x)?;
    let psi_0 = traj.snapshots[0].get(x)?;
    let g0 = g_site(&traj.snapshots[0], pot, lambda, x)?;
    Ok((psi_t - psi_0 + I * t_grid * g0 - integral).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{truncate, InitialData};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lap1() -> HoppingPotential {
        HoppingPotential::standard_laplacian(1).unwrap()
    }

    fn rand_field(shape: LatticeShape, seed: u64) -> Field {
        truncate(
            &InitialData::PowerEnvelope {
                exponent: 0.0,
                scale: 1.0,
                seed,
            },
            shape,
        )
        .unwrap()
    }

    #[test]
    fn g_site_examples() {
        let s = LatticeShape::new(1, 5).unwrap();
        let a = lap1();
        assert_eq!(
            g_site(&Field::zeros(s), &a, 1.0, &s.origin()).unwrap(),
            c(0.0, 0.0)
        );
        let delta = Field::delta(s, &s.origin(), c(1.0, 0.0)).unwrap();
        assert_eq!(g_site(&delta, &a, 1.0, &s.origin()).unwrap(), c(2.0, 0.0));
        assert_eq!(
            g_site(&delta, &a, 1.0, &Site::new(vec![1])).unwrap(),
            c(-0.5, 0.0)
        );
        assert_eq!(
            g_site(&delta, &a, 1.0, &Site::new(vec![-1])).unwrap(),
            c(-0.5, 0.0)
        );

        let f = rand_field(s, 3);
        let conv = crate::hopping::convolve(&a, &f).unwrap();
        for x in s.sites() {
            let g = g_site(&f, &a, 0.0, &x).unwrap();
            assert!((g - conv.get(&x).unwrap()).norm() < 1e-15);
        }
    }

    #[test]
    fn rhs_examples() {
        let s = LatticeShape::new(1, 4).unwrap();
        let a = lap1();
        assert_eq!(rhs(&Field::zeros(s), &a, 1.0).unwrap().max_abs(), 0.0);
        let cst = Field::constant(s, c(0.7, 0.0)).unwrap();
        let lambda = 1.3;
        let r = rhs(&cst, &a, lambda).unwrap();
        let expect = c(0.0, -lambda * 0.7f64.powi(3));
        assert!(r.values().iter().all(|v| (v - expect).norm() < 1e-15));

        let delta = Field::delta(s, &s.origin(), c(1.0, 0.0)).unwrap();
        let r = rhs(&delta, &a, 0.0).unwrap();
        assert_eq!(r.get(&s.origin()).unwrap(), c(0.0, -1.0));
        assert_eq!(r.get(&Site::new(vec![1])).unwrap(), c(0.0, 0.5));
        assert_eq!(r.get(&Site::new(vec![2])).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn p_site_examples() {
        let s = LatticeShape::new(1, 5).unwrap();
        let a = lap1();
        assert_eq!(
            p_site(&Field::zeros(s), &a, 1.0, &s.origin()).unwrap(),
            c(0.0, 0.0)
        );
        let delta = Field::delta(s, &s.origin(), c(1.0, 0.0)).unwrap();
        let p = p_site(&delta, &a, 1.0, &s.origin()).unwrap();
        // -3/2 - 1 - 2 - 1 + 1
        assert!((p - c(-4.5, 0.0)).norm() < 1e-15);

        let f = rand_field(s, 9);
        let conv = crate::hopping::convolve(&a, &f).unwrap();
        let conv2 = crate::hopping::convolve(&a, &conv).unwrap();
        for x in s.sites() {
            let p = p_site(&f, &a, 0.0, &x).unwrap();
            assert!((p + conv2.get(&x).unwrap()).norm() < 1e-14);
        }
    }

    #[test]
    fn g_and_p_are_local() {
        let s = LatticeShape::new(2, 6).unwrap();
        let a = HoppingPotential::standard_laplacian(2).unwrap();
        let f = rand_field(s, 21);
        let x = Site::new(vec![2, -3]);
        let g0 = g_site(&f, &a, 0.8, &x).unwrap();
        let p0 = p_site(&f, &a, 0.8, &x).unwrap();
        let mut far1 = f.clone();
        let mut far2 = f.clone();
        for site in s.sites() {
            let d = s.torus_dist_inf(&x, &site).unwrap();
            let i = s.index_of(&site).unwrap();
            if d > 1 {
                far1.values_mut()[i] += c(3.0, 1.0);
            }
            if d > 2 {
                far2.values_mut()[i] -= c(0.5, 2.0);
            }
        }
        assert_eq!(g_site(&far1, &a, 0.8, &x).unwrap(), g0);
        assert_eq!(p_site(&far2, &a, 0.8, &x).unwrap(), p0);
    }

    #[test]
    fn strang_linear_step_is_exact_propagator() {
        let s = LatticeShape::new(1, 6).unwrap();
        let a = lap1();
        let f = rand_field(s, 4);
        let dt = 0.37;
        let stepped = step_strang(&f, &a, 0.0, dt).unwrap();
        // exact: multiply each Fourier mode by e^{-iω dt}
        let w = dispersion(&a, s).unwrap();
        let plan = FourierPlan::new(s);
        let mut data = f.values().to_vec();
        plan.forward(&mut data);
        for (v, om) in data.iter_mut().zip(w.dft_values()) {
            *v *= Complex64::from_polar(1.0, -om * dt);
        }
        plan.inverse(&mut data);
        let exact = Field::new(s, data).unwrap();
        assert!(stepped.max_abs_diff(&exact).unwrap() < 1e-14);
    }

    #[test]
    fn strang_zero_kernel_is_exact_rotation() {
        let s = LatticeShape::new(1, 5).unwrap();
        let zero = HoppingPotential::zero(1).unwrap();
        let f = rand_field(s, 8);
        for dt in [1e-3, 0.1, 2.5] {
            let g = step_strang(&f, &zero, 1.0, dt).unwrap();
            for (a, b) in g.values().iter().zip(f.values()) {
                let exact = b * Complex64::from_polar(1.0, -b.norm_sqr() * dt);
                assert!((a - exact).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn strang_conserves_norm_per_step() {
        let s = LatticeShape::new(1, 16).unwrap();
        let f = rand_field(s, 12);
        let g = step_strang(&f, &lap1(), 1.0, 0.01).unwrap();
        let n0: f64 = f.values().iter().map(|v| v.norm_sqr()).sum();
        let n1: f64 = g.values().iter().map(|v| v.norm_sqr()).sum();
        assert!(((n1 - n0) / n0).abs() < 1e-12);
    }

    #[test]
    fn rk4_zero_field_stays_zero() {
        let s = LatticeShape::new(1, 3).unwrap();
        let out = step_rk4(&Field::zeros(s), &lap1(), 1.0, 0.1).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn integrate_t_end_zero_returns_initial_only() {
        let s = LatticeShape::new(1, 3).unwrap();
        let f = rand_field(s, 1);
        let cfg = SchemeConfig {
            scheme: Scheme::Strang,
            dt: 0.01,
            t_end: 0.0,
            snapshot_stride: 5,
            lambda: 1.0,
        };
        let mut count = 0;
        let mut obs = |_t: f64, _f: &Field| count += 1;
        let traj = integrate(&f, &lap1(), &cfg, &mut [&mut obs]).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.initial(), &f);
        assert_eq!(count, 1);
    }

    #[test]
    fn integrate_grid_and_observers() {
        let s = LatticeShape::new(1, 3).unwrap();
        let f = rand_field(s, 1);
        let cfg = SchemeConfig {
            scheme: Scheme::Rk4,
            dt: 0.01,
            t_end: 0.5,
            snapshot_stride: 5,
            lambda: 1.0,
        };
        let mut times = Vec::new();
        let mut obs = |t: f64, _f: &Field| times.push(t);
        let traj = integrate(&f, &lap1(), &cfg, &mut [&mut obs]).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(times.len(), 51);
        assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
        assert!((traj.final_time() - 0.5).abs() < 1e-12);
        assert!(traj.index_of_time(0.26).is_err());
        assert_eq!(traj.index_of_time(0.3).unwrap(), 6);
    }

    #[test]
    fn integrate_rejects_bad_configs() {
        let s = LatticeShape::new(1, 3).unwrap();
        let f = rand_field(s, 1);
        let mut cfg = SchemeConfig {
            scheme: Scheme::Strang,
            dt: 0.0,
            t_end: 1.0,
            snapshot_stride: 1,
            lambda: 1.0,
        };
        assert!(integrate(&f, &lap1(), &cfg, &mut []).is_err());
        cfg.dt = 0.3;
        assert!(integrate(&f, &lap1(), &cfg, &mut []).is_err());
        cfg.dt = 0.1;
        cfg.snapshot_stride = 3;
        assert!(integrate(&f, &lap1(), &cfg, &mut []).is_err());
    }

    #[test]
    fn integrate_reports_blow_up() {
        // focusing RK4 with a huge step diverges
        let s = LatticeShape::new(1, 2).unwrap();
        let f = Field::constant(s, c(10.0, 0.0)).unwrap();
        let cfg = SchemeConfig {
            scheme: Scheme::Rk4,
            dt: 1.0,
            t_end: 200.0,
            snapshot_stride: 1,
            lambda: 1.0,
        };
        match integrate(&f, &lap1(), &cfg, &mut []) {
            Err(DynamicsError::BlowUp { t }) => assert!(t > 0.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn duhamel_residuals_vanish_trivially() {
        let s = LatticeShape::new(1, 4).unwrap();
        let cfg = SchemeConfig {
            scheme: Scheme::Strang,
            dt: 0.01,
            t_end: 0.2,
            snapshot_stride: 2,
            lambda: 1.0,
        };
        let zero = integrate(&Field::zeros(s), &lap1(), &cfg, &mut []).unwrap();
        for &t in zero.times() {
            assert_eq!(
                duhamel_residual_first(&zero, &lap1(), 1.0, &s.origin(), t).unwrap(),
                0.0
            );
            assert_eq!(
                duhamel_residual_second(&zero, &lap1(), 1.0, &s.origin(), t).unwrap(),
                0.0
            );
        }
        let traj = integrate(&rand_field(s, 2), &lap1(), &cfg, &mut []).unwrap();
        assert_eq!(
            duhamel_residual_first(&traj, &lap1(), 1.0, &s.origin(), 0.0).unwrap(),
            0.0
        );
        assert_eq!(
            duhamel_residual_second(&traj, &lap1(), 1.0, &s.origin(), 0.0).unwrap(),
            0.0
        );
        assert!(matches!(
            duhamel_residual_first(&traj, &lap1(), 1.0, &s.origin(), 0.015),
            Err(DynamicsError::OffGrid { .. })
        ));
    }

    #[test]
    fn grid_integral_rules() {
        // Simpson is exact for cubics, trapezoid for linear functions
        let h = 0.25;
        let cubic: Vec<Complex64> = (0..=4)
            .map(|j| {
                let t = j as f64 * h;
                c(t * t * t, 0.0)
            })
            .collect();
        assert!((grid_integral(&cubic, h).re - 0.25).abs() < 1e-15);
        let lin: Vec<Complex64> = (0..=3).map(|j| c(j as f64 * h, 0.0)).collect();
        assert!((grid_integral(&lin, h).re - 0.75f64.powi(2) / 2.0).abs() < 1e-15);
        assert_eq!(grid_integral(&[c(1.0, 0.0)], h), c(0.0, 0.0));
    }
}
