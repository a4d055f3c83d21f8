//! Cross-box disagreement, finite speed of propagation and two-scheme
//! discrepancy diagnostics.
//!
//! Differences between runs on nested boxes decay faster than any exponential in
//! the box size, far below the rounding floor of a direct subtraction. For RK4 the
//! pair is therefore evolved jointly as `(ψ^L, D)` with
//! `ψ^{L'} = Embed(ψ^L) + D` on the larger box; RK4 commutes with this linear
//! change of variables, so `D` is the scheme's own difference computed to full
//! relative precision.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{integrate, DynamicsError, Scheme, SchemeConfig, Trajectory};
use crate::hopping::{HoppingError, HoppingPotential, Stencil};
use crate::lattice::{truncate, Field, InitialData, LatticeError, LatticeShape, Site};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvergenceError {
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectories do not share a time grid")]
    GridMismatch,
    #[error("trajectories do not start from the same state")]
    InitialMismatch,
    #[error("site {0:?} lies outside the smaller box")]
    SiteOutside(Vec<i64>),
    #[error("need at least {need} points for a fit, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Hopping(#[from] HoppingError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

fn grid_len(a: &Trajectory, b: &Trajectory, t: f64) -> Result<usize, ConvergenceError> {
    if !a.same_grid(b) {
        return Err(ConvergenceError::GridMismatch);
    }
    Ok(a.index_of_time(t)? + 1)
}

/// `Δ_x^L(t) = max_{s ≤ t} |ψ_s^{big}(x) - ψ_s^{small}(x)|`, with `x` taken by
/// its Z^d coordinates in both boxes.
pub fn delta_site(
    big: &Trajectory,
    small: &Trajectory,
    x: &Site,
    t: f64,
) -> Result<f64, ConvergenceError> {
    let n = grid_len(big, small, t)?;
    if !small.shape().contains(x.coords()) || !big.shape().contains(x.coords()) {
        return Err(ConvergenceError::SiteOutside(x.0.clone()));
    }
    let ib = big.shape().index_of(x)?;
    let is = small.shape().index_of(x)?;
    Ok(big.snapshots()[..n]
        .iter()
        .zip(&small.snapshots()[..n])
        .map(|(b, s)| (b.values()[ib] - s.values()[is]).norm())
        .fold(0.0, f64::max))
}

/// `Δ̄_k^L(t) = max_{|x|_∞ ≤ k} Δ_x^L(t)`.
pub fn delta_bar(
    big: &Trajectory,
    small: &Trajectory,
    k: usize,
    t: f64,
) -> Result<f64, ConvergenceError> {
    let window = window_shape(small.shape(), k)?;
    let mut worst = 0.0f64;
    for x in window.sites() {
        worst = worst.max(delta_site(big, small, &x, t)?);
    }
    Ok(worst)
}

fn window_shape(shape: LatticeShape, k: usize) -> Result<LatticeShape, ConvergenceError> {
    if k > shape.half_width() {
        return Err(ConvergenceError::InvalidConfig(format!(
            "window half-width {k} exceeds box half-width {}",
            shape.half_width()
        )));
    }
    Ok(LatticeShape::new(shape.dim(), k)?)
}

/// `d^L(t) = max_{s ≤ t, x} |ψ_s(x) - ψ_0(x)|`.
pub fn drift(traj: &Trajectory, t: f64) -> Result<f64, ConvergenceError> {
    let n = traj.index_of_time(t)? + 1;
    let first = traj.initial();
    Ok(traj.snapshots()[..n]
        .iter()
        .map(|f| f.max_abs_diff(first).expect("same shape"))
        .fold(0.0, f64::max))
}

/// `δ_n(t) = max_{s ≤ t, |x|_∞ ≤ 2nℓ} |ψ_s^A(x) - ψ_s^B(x)|`; the window is
/// capped at the box.
pub fn uniqueness_delta(
    a: &Trajectory,
    b: &Trajectory,
    n: usize,
    range: usize,
    t: f64,
) -> Result<f64, ConvergenceError> {
    if a.shape() != b.shape() {
        return Err(LatticeError::ShapeMismatch(a.shape(), b.shape()).into());
    }
    let len = grid_len(a, b, t)?;
    if a.initial() != b.initial() {
        return Err(ConvergenceError::InitialMismatch);
    }
    let shape = a.shape();
    let radius = (2 * n * range).min(shape.half_width()) as i64;
    let idx: Vec<usize> = (0..shape.volume())
        .filter(|&i| shape.site_at(i).sup_norm() <= radius)
        .collect();
    Ok(a.snapshots()[..len]
        .iter()
        .zip(&b.snapshots()[..len])
        .flat_map(|(fa, fb)| {
            idx.iter()
                .map(move |&i| (fa.values()[i] - fb.values()[i]).norm())
        })
        .fold(0.0, f64::max))
}

/// A run on a small box paired with `D = ψ^{big} - Embed(ψ^{small})` on the big box.
#[derive(Debug, Clone)]
pub struct PairTrajectory {
    pub small: Trajectory,
    pub diff: Trajectory,
}

impl PairTrajectory {
    /// `Δ̄_k` read from the difference snapshots.
    pub fn delta_bar(&self, k: usize, t: f64) -> Result<f64, ConvergenceError> {
        let window = window_shape(self.small.shape(), k)?;
        let n = self.diff.index_of_time(t)? + 1;
        let big = self.diff.shape();
        let idx: Vec<usize> = window
            .sites()
            .map(|x| big.index_of(&x))
            .collect::<Result<_, _>>()?;
        Ok(self.diff.snapshots()[..n]
            .iter()
            .flat_map(|f| idx.iter().map(move |&i| f.values()[i].norm()))
            .fold(0.0, f64::max))
    }

    /// The big-box trajectory `Embed(ψ^{small}) + D`, up to rounding.
    pub fn big(&self) -> Result<Trajectory, ConvergenceError> {
        let shape = self.diff.shape();
        let snaps = self
            .small
            .snapshots()
            .iter()
            .zip(self.diff.snapshots())
            .map(|(s, d)| {
                Field::from_fn(shape, |z| {
                    s.embed_lookup(z) + d.get(&Site::new(z.to_vec())).unwrap()
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trajectory::new(self.small.spacing(), snaps)?)
    }
}

/// Joint RK4 system for `(u, D)` where `u` lives on the small box and
/// `φ = Embed(u)` on the big one.
struct DiffSystem {
    lambda: f64,
    small: Stencil,
    big: Stencil,
    /// small-box index of every big-box site after periodic reduction
    embed: Vec<usize>,
    /// big-box sites where `(A'φ)(x)` and `(Aψ)(x mod)` can differ
    boundary: Vec<usize>,
}

impl DiffSystem {
    fn new(
        pot: &HoppingPotential,
        small: LatticeShape,
        big: LatticeShape,
        lambda: f64,
    ) -> Result<Self, ConvergenceError> {
        let small_st = Stencil::new(pot, small)?;
        let big_st = Stencil::new(pot, big)?;
        let inner = big.half_width() as i64 - pot.range() as i64;
        let mut embed = Vec::with_capacity(big.volume());
        let mut boundary = Vec::new();
        for i in 0..big.volume() {
            let x = big.site_at(i);
            embed.push(small.index_of(&small.reduce_coords(x.coords()))?);
            if small != big && x.sup_norm() > inner {
                boundary.push(i);
            }
        }
        Ok(Self {
            lambda,
            small: small_st,
            big: big_st,
            embed,
            boundary,
        })
    }

    fn rhs_u(&self, u: &[Complex64], out: &mut [Complex64]) {
        self.small.apply(u, out);
        for (o, p) in out.iter_mut().zip(u) {
            *o = -I * (*o + self.lambda * p.norm_sqr() * p);
        }
    }

    fn rhs_d(
        &self,
        u: &[Complex64],
        d: &[Complex64],
        phi: &mut [Complex64],
        out: &mut [Complex64],
    ) {
        for (p, &j) in phi.iter_mut().zip(&self.embed) {
            *p = u[j];
        }
        self.big.apply(d, out);
        for &x in &self.boundary {
            out[x] += self.big.apply_at(phi, x) - self.small.apply_at(u, self.embed[x]);
        }
        let lambda = self.lambda;
        for ((o, &f), &e) in out.iter_mut().zip(phi.iter()).zip(d) {
            // |f + e|²(f + e) - |f|²f
            let nl = 2.0 * f.norm_sqr() * e
                + f * f * e.conj()
                + 2.0 * f * e.norm_sqr()
                + e * e * f.conj()
                + e.norm_sqr() * e;
            *o = -I * (*o + lambda * nl);
        }
    }
}

struct DiffStepper {
    sys: DiffSystem,
    dt: f64,
    ku: [Vec<Complex64>; 4],
    kd: [Vec<Complex64>; 4],
    tu: Vec<Complex64>,
    td: Vec<Complex64>,
    phi: Vec<Complex64>,
}

impl DiffStepper {
    fn new(sys: DiffSystem, dt: f64) -> Self {
        let vs = sys.small.shape().volume();
        let vb = sys.big.shape().volume();
        Self {
            sys,
            dt,
            ku: std::array::from_fn(|_| vec![ZERO; vs]),
            kd: std::array::from_fn(|_| vec![ZERO; vb]),
            tu: vec![ZERO; vs],
            td: vec![ZERO; vb],
            phi: vec![ZERO; vb],
        }
    }

    fn step(&mut self, u: &mut [Complex64], d: &mut [Complex64]) {
        let dt = self.dt;
        let coeffs = [0.5 * dt, 0.5 * dt, dt];
        self.sys.rhs_u(u, &mut self.ku[0]);
        self.sys.rhs_d(u, d, &mut self.phi, &mut self.kd[0]);
        for (s, &h) in coeffs.iter().enumerate() {
            for ((t, p), k) in self.tu.iter_mut().zip(u.iter()).zip(&self.ku[s]) {
                *t = p + h * k;
            }
            for ((t, p), k) in self.td.iter_mut().zip(d.iter()).zip(&self.kd[s]) {
                *t = p + h * k;
            }
            self.sys.rhs_u(&self.tu, &mut self.ku[s + 1]);
            self.sys
                .rhs_d(&self.tu, &self.td, &mut self.phi, &mut self.kd[s + 1]);
        }
        let w = dt / 6.0;
        let [k1, k2, k3, k4] = &self.ku;
        for (i, p) in u.iter_mut().enumerate() {
            *p += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let [k1, k2, k3, k4] = &self.kd;
        for (i, p) in d.iter_mut().enumerate() {
            *p += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

fn run_diff(
    u0: &Field,
    d0: Field,
    pot: &HoppingPotential,
    cfg: &SchemeConfig,
) -> Result<PairTrajectory, ConvergenceError> {
    cfg.validate()?;
    if cfg.scheme != Scheme::Rk4 {
        return Err(ConvergenceError::InvalidConfig(
            "joint difference evolution requires the rk4 scheme".into(),
        ));
    }
    let steps = cfg.step_count()?;
    let sys = DiffSystem::new(pot, u0.shape(), d0.shape(), cfg.lambda)?;
    let mut stepper = DiffStepper::new(sys, cfg.dt);
    let mut u = u0.values().to_vec();
    let big = d0.shape();
    let mut d = d0.into_values();
    let mut small_snaps = vec![u0.clone()];
    let mut diff_snaps = vec![Field::new(big, d.clone())?];
    for n in 1..=steps {
        stepper.step(&mut u, &mut d);
        if !(u
            .iter()
            .chain(&d)
            .all(|v| v.re.is_finite() && v.im.is_finite()))
        {
            return Err(DynamicsError::BlowUp {
                t: n as f64 * cfg.dt,
            }
            .into());
        }
        if n % cfg.snapshot_stride == 0 {
            small_snaps.push(Field::new(u0.shape(), u.clone())?);
            diff_snaps.push(Field::new(big, d.clone())?);
        }
    }
    let h = cfg.snapshot_spacing();
    Ok(PairTrajectory {
        small: Trajectory::new(h, small_snaps)?,
        diff: Trajectory::new(h, diff_snaps)?,
    })
}

/// Evolves `gen` on `small` and `big` boxes and returns the small run with the
/// difference on the big box. RK4 uses the joint difference system; Strang
/// falls back to subtracting two independent runs.
pub fn evolve_pair(
    gen: &InitialData,
    pot: &HoppingPotential,
    small: LatticeShape,
    big: LatticeShape,
    cfg: &SchemeConfig,
) -> Result<PairTrajectory, ConvergenceError> {
    if small.dim() != big.dim() || small.half_width() > big.half_width() {
        return Err(ConvergenceError::InvalidConfig(format!(
            "box {small} is not inside {big}"
        )));
    }
    let u0 = truncate(gen, small)?;
    let psi0 = truncate(gen, big)?;
    let d0 = Field::from_fn(big, |z| {
        psi0.get(&Site::new(z.to_vec())).unwrap() - u0.embed_lookup(z)
    })?;
    match cfg.scheme {
        Scheme::Rk4 => run_diff(&u0, d0, pot, cfg),
        Scheme::Strang => {
            let a = integrate(&u0, pot, cfg, &mut [])?;
            let b = integrate(&psi0, pot, cfg, &mut [])?;
            let diff = a
                .snapshots()
                .iter()
                .zip(b.snapshots())
                .map(|(s, l)| {
                    Field::from_fn(big, |z| {
                        l.get(&Site::new(z.to_vec())).unwrap() - s.embed_lookup(z)
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(PairTrajectory {
                diff: Trajectory::new(a.spacing(), diff)?,
                small: a,
            })
        }
    }
}

/// Evolves `base` and `base + perturbation` on one box with RK4, returning the
/// base run and the difference computed without cancellation.
pub fn evolve_perturbation(
    base: &Field,
    perturbation: &Field,
    pot: &HoppingPotential,
    cfg: &SchemeConfig,
) -> Result<PairTrajectory, ConvergenceError> {
    if base.shape() != perturbation.shape() {
        return Err(LatticeError::ShapeMismatch(base.shape(), perturbation.shape()).into());
    }
    run_diff(base, perturbation.clone(), pot, cfg)
}

/// Which larger box each listed `L` is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// `L` against `L + 1`.
    #[default]
    Consecutive,
    /// `L` against the next entry of the list.
    NextListed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub generator: InitialData,
    pub dim: usize,
    pub l_list: Vec<usize>,
    pub k: usize,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub pairing: Pairing,
}

impl SweepConfig {
    pub fn validate(&self, pot: &HoppingPotential) -> Result<(), ConvergenceError> {
        if self.l_list.is_empty() {
            return Err(ConvergenceError::InvalidConfig("L_list is empty".into()));
        }
        if !self.l_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(ConvergenceError::InvalidConfig(
                "L_list must be strictly increasing".into(),
            ));
        }
        if self.k > self.l_list[0] {
            return Err(ConvergenceError::InvalidConfig(format!(
                "k = {} exceeds min(L_list) = {}",
                self.k, self.l_list[0]
            )));
        }
        if self.pairing == Pairing::NextListed && self.l_list.len() < 2 {
            return Err(ConvergenceError::InvalidConfig(
                "next-listed pairing needs two boxes".into(),
            ));
        }
        if pot.dim() != self.dim {
            return Err(HoppingError::DimensionMismatch {
                kernel: pot.dim(),
                lattice: self.dim,
            }
            .into());
        }
        self.scheme.validate()?;
        Ok(())
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        match self.pairing {
            Pairing::Consecutive => self.l_list.iter().map(|&l| (l, l + 1)).collect(),
            Pairing::NextListed => self.l_list.windows(2).map(|w| (w[0], w[1])).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    #[serde(rename = "L")]
    pub l: usize,
    pub l_big: usize,
    pub delta_bar: Option<f64>,
    pub drift: Option<f64>,
    pub runtime: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub k: usize,
    pub t: f64,
    pub entries: Vec<SweepEntry>,
    /// Least-squares fit of `ln Δ̄` against `L` on the tail half.
    pub fit: Option<LinearFit>,
    /// `exp(-slope)` of the tail fit.
    #[serde(rename = "A")]
    pub a: Option<f64>,
    /// Smallest listed `L` from which every `Δ̄ ≤ 2^{-L}`.
    #[serde(rename = "L0")]
    pub l0: Option<usize>,
    pub partial: bool,
}

impl DisagreementReport {
    pub fn deltas(&self) -> Vec<Option<f64>> {
        self.entries.iter().map(|e| e.delta_bar).collect()
    }

    /// Whether `Δ̄` is strictly decreasing along the list.
    pub fn strictly_decreasing(&self) -> bool {
        let d: Option<Vec<f64>> = self.deltas().into_iter().collect();
        d.is_some_and(|d| d.windows(2).all(|w| w[1] < w[0]))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("L,delta_bar\n");
        for e in &self.entries {
            match e.delta_bar {
                Some(v) => s.push_str(&format!("{},{v:e}\n", e.l)),
                None => s.push_str(&format!("{},\n", e.l)),
            }
        }
        s
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        points: n,
    })
}

/// Tail-half fit of `ln Δ̄` against `L`; requires four positive points.
pub fn fit_tail(ls: &[usize], deltas: &[f64]) -> Result<LinearFit, ConvergenceError> {
    let start = ls.len() / 2;
    let pts: Vec<(f64, f64)> = ls[start..]
        .iter()
        .zip(&deltas[start..])
        .filter(|(_, &d)| d > 0.0)
        .map(|(&l, &d)| (l as f64, d.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(ConvergenceError::TooFewPoints {
            need: 4,
            got: pts.len(),
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    least_squares(&x, &y).ok_or(ConvergenceError::TooFewPoints { need: 4, got: 0 })
}

/// Smallest listed `L` such that every listed `L' ≥ L` has `Δ̄ ≤ 2^{-L'}`.
pub fn threshold_l0(ls: &[usize], deltas: &[f64]) -> Option<usize> {
    let mut l0 = None;
    for (&l, &d) in ls.iter().zip(deltas).rev() {
        if d <= 2f64.powi(-(l as i32)) {
            l0 = Some(l);
        } else {
            break;
        }
    }
    l0
}

/// Runs every box pair of the sweep in parallel and fits the decay of `Δ̄_k`.
pub fn l_sweep(
    config: &SweepConfig,
    pot: &HoppingPotential,
) -> Result<DisagreementReport, ConvergenceError> {
    config.validate(pot)?;
    let t = config.scheme.t_end;
    let entries: Vec<SweepEntry> = config
        .pairs()
        .into_par_iter()
        .map(|(l, lb)| {
            let start = Instant::now();
            let result = (|| -> Result<(f64, f64), ConvergenceError> {
                let small = LatticeShape::new(config.dim, l)?;
                let big = LatticeShape::new(config.dim, lb)?;
                let pair = evolve_pair(&config.generator, pot, small, big, &config.scheme)?;
                Ok((pair.delta_bar(config.k, t)?, drift(&pair.small, t)?))
            })();
            let runtime = start.elapsed().as_secs_f64();
            match result {
                Ok((db, dr)) => SweepEntry {
                    l,
                    l_big: lb,
                    delta_bar: Some(db),
                    drift: Some(dr),
                    runtime,
                    error: None,
                },
                Err(e) => SweepEntry {
                    l,
                    l_big: lb,
                    delta_bar: None,
                    drift: None,
                    runtime,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let partial = entries.iter().any(|e| e.error.is_some());
    let done: Vec<(usize, f64)> = entries
        .iter()
        .filter_map(|e| e.delta_bar.map(|d| (e.l, d)))
        .collect();
    let (ls, ds): (Vec<usize>, Vec<f64>) = done.into_iter().unzip();
    let fit = fit_tail(&ls, &ds).ok();
    let a = fit.as_ref().map(|f| (-f.slope).exp());
    let l0 = if partial {
        None
    } else {
        threshold_l0(&ls, &ds)
    };
    Ok(DisagreementReport {
        k: config.k,
        t,
        entries,
        fit,
        a,
        l0,
        partial,
    })
}

/// Strang and RK4 runs of the same data on one time grid.
pub fn scheme_pair(
    field0: &Field,
    pot: &HoppingPotential,
    dt: f64,
    t_end: f64,
    snapshot_stride: usize,
    lambda: f64,
) -> Result<(Trajectory, Trajectory), ConvergenceError> {
    let cfg = |scheme| SchemeConfig {
        scheme,
        dt,
        t_end,
        snapshot_stride,
        lambda,
    };
    let a = integrate(field0, pot, &cfg(Scheme::Strang), &mut [])?;
    let b = integrate(field0, pot, &cfg(Scheme::Rk4), &mut [])?;
    Ok((a, b))
}

/// Slope of `ln δ` against `ln dt`.
pub fn fit_order(dts: &[f64], deltas: &[f64]) -> Option<f64> {
    if deltas.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let x: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = deltas.iter().map(|v| v.ln()).collect();
    least_squares(&x, &y).map(|f| f.slope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub n: usize,
    pub t: f64,
    pub dts: Vec<f64>,
    pub deltas: Vec<f64>,
    pub order: Option<f64>,
}

/// `δ_n(T)` between Strang and RK4 for each `dt`, all on the snapshot spacing
/// of the coarsest step.
pub fn uniqueness_study(
    field0: &Field,
    pot: &HoppingPotential,
    lambda: f64,
    t_end: f64,
    dts: &[f64],
    n: usize,
) -> Result<UniquenessReport, ConvergenceError> {
    let coarse = dts.iter().copied().fold(0.0, f64::max);
    let deltas = dts
        .par_iter()
        .map(|&dt| {
            let stride = (coarse / dt).round() as usize;
            let (a, b) = scheme_pair(field0, pot, dt, t_end, stride.max(1), lambda)?;
            uniqueness_delta(&a, &b, n, pot.range(), t_end)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(UniquenessReport {
        n,
        t: t_end,
        dts: dts.to_vec(),
        order: fit_order(dts, &deltas),
        deltas,
    })
}
