//! Conserved quantities, local particle numbers and their flux, the growth
//! bound on local density, and weighted supremum norms.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::hopping::{HoppingError, HoppingPotential, Stencil};
use crate::lattice::{Field, InitialData, LatticeError, LatticeShape, Site};

/// Slack allowed in every bound ratio to absorb rounding.
pub const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservablesError {
    #[error("localization rate ε = {eps} must lie in (0, {max})")]
    InvalidEpsilon { eps: f64, max: f64 },
    #[error("weight parameter must be positive, got {0}")]
    InvalidWeight(f64),
    #[error("initial quantity vanishes but the trajectory does not; ratio undefined")]
    UndefinedRatio,
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Hopping(#[from] HoppingError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

impl From<std::io::Error> for ObservablesError {
    fn from(e: std::io::Error) -> Self {
        ObservablesError::Io(e.to_string())
    }
}

/// Localization rate and center of a local particle number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationParams {
    pub eps: f64,
    pub center: Site,
}

impl LocalizationParams {
    pub fn new(eps: f64, center: Site, pot: &HoppingPotential) -> Result<Self, ObservablesError> {
        check_eps(eps, pot)?;
        Ok(Self { eps, center })
    }
}

/// `ε` must be positive and, for a kernel of range `ℓ ≥ 1`, below `1/(2ℓ)`.
pub fn check_eps(eps: f64, pot: &HoppingPotential) -> Result<(), ObservablesError> {
    let max = if pot.range() == 0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * pot.range() as f64)
    };
    if !(eps > 0.0 && eps < max) {
        return Err(ObservablesError::InvalidEpsilon { eps, max });
    }
    Ok(())
}

pub fn particle_number(field: &Field) -> f64 {
    field.values().iter().map(|v| v.norm_sqr()).sum()
}

/// `Σ_{x,y} α(x-y) ψ(x) ψ(y)* + (λ/2) Σ_x |ψ(x)|⁴`, real by symmetry of `α`.
pub fn hamiltonian(
    field: &Field,
    pot: &HoppingPotential,
    lambda: f64,
) -> Result<f64, ObservablesError> {
    Ok(hamiltonian_complex(field, pot, lambda)?.re)
}

/// The Hamiltonian before discarding its (rounding-level) imaginary part.
pub fn hamiltonian_complex(
    field: &Field,
    pot: &HoppingPotential,
    lambda: f64,
) -> Result<Complex64, ObservablesError> {
    let stencil = Stencil::new(pot, field.shape())?;
    let psi = field.values();
    let mut conv = vec![Complex64::new(0.0, 0.0); psi.len()];
    stencil.apply(psi, &mut conv);
    let kinetic: Complex64 = psi.iter().zip(&conv).map(|(p, c)| p * c.conj()).sum();
    let quartic: f64 = psi.iter().map(|p| p.norm_sqr() * p.norm_sqr()).sum();
    Ok(kinetic + 0.5 * lambda * quartic)
}

/// `S_ε = Σ_{x ∈ Λ_L} e^{-ε|x|_∞}`.
pub fn s_eps(shape: LatticeShape, eps: f64) -> f64 {
    // count sites on each sup-norm shell
    let d = shape.dim() as i32;
    (0..=shape.half_width() as i64)
        .map(|r| {
            let shell = if r == 0 {
                1.0
            } else {
                ((2 * r + 1) as f64).powi(d) - ((2 * r - 1) as f64).powi(d)
            };
            shell * (-eps * r as f64).exp()
        })
        .sum()
}

/// `e^{-ε dist(x, y)}` for every `y`, in storage order.
pub fn torus_weights(
    shape: LatticeShape,
    eps: f64,
    x: &Site,
) -> Result<Vec<f64>, ObservablesError> {
    shape.check(x)?;
    let mut y = vec![0i64; shape.dim()];
    Ok((0..shape.volume())
        .map(|i| {
            shape.coords_into(i, &mut y);
            (-eps * shape.torus_dist_unchecked(x.coords(), &y) as f64).exp()
        })
        .collect())
}

/// `N_{ε,x} = Σ_y e^{-ε dist(x,y)} |ψ(y)|²`.
pub fn local_particle_number(field: &Field, eps: f64, x: &Site) -> Result<f64, ObservablesError> {
    let w = torus_weights(field.shape(), eps, x)?;
    Ok(weighted_mass(field, &w))
}

fn weighted_mass(field: &Field, w: &[f64]) -> f64 {
    field
        .values()
        .iter()
        .zip(w)
        .map(|(v, w)| w * v.norm_sqr())
        .sum()
}

/// `Q_{ε,x} = N_{ε,x} / S_ε`.
pub fn local_density(field: &Field, eps: f64, x: &Site) -> Result<f64, ObservablesError> {
    Ok(local_particle_number(field, eps, x)? / s_eps(field.shape(), eps))
}

/// `F_y = Σ_{x'} α(y - x') i (ψ(y)ψ(x')* - ψ(y)*ψ(x'))`.
pub fn flux_f(field: &Field, pot: &HoppingPotential, y: &Site) -> Result<f64, ObservablesError> {
    let stencil = Stencil::new(pot, field.shape())?;
    let i = field.shape().index_of(y)?;
    Ok(flux_at(&stencil, field.values(), i))
}

/// `F_y` at every site, in storage order.
pub fn flux_field(field: &Field, pot: &HoppingPotential) -> Result<Vec<f64>, ObservablesError> {
    let stencil = Stencil::new(pot, field.shape())?;
    let psi = field.values();
    Ok((0..psi.len()).map(|i| flux_at(&stencil, psi, i)).collect())
}

fn flux_at(stencil: &Stencil, psi: &[Complex64], y: usize) -> f64 {
    // i(ab* - a*b) = -2 Im(ab*)
    stencil
        .neighbors(y)
        .map(|(xp, a)| -2.0 * a * (psi[y] * psi[xp].conj()).im)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxForm {
    /// `Σ_y e^{-ε dist(x,y)} F_y`.
    Direct,
    /// `½ Σ_{y,x'} (e^{-ε dist(x,y)} - e^{-ε dist(x,x')}) α(y-x') i(ψ(y)ψ(x')* - ψ(y)*ψ(x'))`.
    Antisymmetrized,
}

/// `M_ε(x)`, the time derivative of `N_{ε,x}`.
pub fn flux_m(
    field: &Field,
    pot: &HoppingPotential,
    eps: f64,
    x: &Site,
    form: FluxForm,
) -> Result<f64, ObservablesError> {
    let stencil = Stencil::new(pot, field.shape())?;
    let w = torus_weights(field.shape(), eps, x)?;
    Ok(flux_m_with(&stencil, field.values(), &w, form))
}

fn flux_m_with(stencil: &Stencil, psi: &[Complex64], w: &[f64], form: FluxForm) -> f64 {
    match form {
        FluxForm::Direct => (0..psi.len())
            .map(|y| w[y] * flux_at(stencil, psi, y))
            .sum(),
        FluxForm::Antisymmetrized => {
            0.5 * (0..psi.len())
                .map(|y| {
                    stencil
                        .neighbors(y)
                        .map(|(xp, a)| (w[y] - w[xp]) * a * -2.0 * (psi[y] * psi[xp].conj()).im)
                        .sum::<f64>()
                })
                .sum::<f64>()
        }
    }
}

/// `C = c · ℓ · e^{εℓ/2} · ‖α‖_∞ · (2ℓ+1)^d`.
pub fn growth_constant(pot: &HoppingPotential, eps: f64, c_const: f64) -> f64 {
    let l = pot.range() as f64;
    c_const * l * (eps * l / 2.0).exp() * pot.sup_norm() * (2.0 * l + 1.0).powi(pot.dim() as i32)
}

/// Growth rate `ε̃ = ε · C` of the local density bound.
pub fn eps_tilde(pot: &HoppingPotential, eps: f64, c_const: f64) -> f64 {
    eps * growth_constant(pot, eps, c_const)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthBoundReport {
    pub eps: f64,
    pub center: Site,
    pub c_const: f64,
    pub eps_tilde: f64,
    pub times: Vec<f64>,
    /// `Q_t / (e^{ε̃t} Q_0)` per snapshot.
    pub ratios: Vec<f64>,
    /// Smallest rate `r ≥ 0` with `Q_t ≤ e^{rt} Q_0` on every snapshot.
    pub fitted_rate: f64,
    pub pass: bool,
    /// First time with a ratio above tolerance.
    pub first_violation: Option<f64>,
}

impl GrowthBoundReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks `Q_{ε,x}(ψ_t) ≤ e^{ε̃t} Q_{ε,x}(ψ_0)` on every snapshot.
pub fn growth_bound_report(
    traj: &Trajectory,
    pot: &HoppingPotential,
    eps: f64,
    x: &Site,
    c_const: f64,
) -> Result<GrowthBoundReport, ObservablesError> {
    check_eps(eps, pot)?;
    let shape = traj.shape();
    let w = torus_weights(shape, eps, x)?;
    let s = s_eps(shape, eps);
    let q: Vec<f64> = traj
        .snapshots()
        .iter()
        .map(|f| weighted_mass(f, &w) / s)
        .collect();
    let rate = eps_tilde(pot, eps, c_const);
    let (ratios, fitted_rate) = exponential_ratios(traj.times(), &q, rate)?;
    let first_violation = first_above(traj.times(), &ratios);
    Ok(GrowthBoundReport {
        eps,
        center: x.clone(),
        c_const,
        eps_tilde: rate,
        times: traj.times().to_vec(),
        ratios,
        fitted_rate,
        pass: first_violation.is_none(),
        first_violation,
    })
}

/// Ratios `v_t / (e^{rate·t} v_0)` and the smallest admissible rate. A zero
/// series passes with unit ratios.
fn exponential_ratios(
    times: &[f64],
    v: &[f64],
    rate: f64,
) -> Result<(Vec<f64>, f64), ObservablesError> {
    let v0 = v[0];
    if v0 == 0.0 {
        if v.iter().all(|&q| q == 0.0) {
            return Ok((vec![1.0; v.len()], 0.0));
        }
        return Err(ObservablesError::UndefinedRatio);
    }
    let ratios = times
        .iter()
        .zip(v)
        .map(|(&t, &q)| q / ((rate * t).exp() * v0))
        .collect();
    let fitted = times
        .iter()
        .zip(v)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &q)| (q / v0).ln() / t)
        .fold(0.0, f64::max);
    Ok((ratios, fitted))
}

fn first_above(times: &[f64], ratios: &[f64]) -> Option<f64> {
    times
        .iter()
        .zip(ratios)
        .find(|(_, &r)| !(r <= 1.0 + RATIO_TOLERANCE))
        .map(|(&t, _)| t)
}

/// Weight `Φ` of a weighted supremum norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightSpec {
    /// `Φ(x) = e^{-q|x|_∞}`.
    Exponential { q: f64 },
    /// `Φ(x) = ⟨x⟩^{-p}`.
    Power { p: f64 },
}

impl WeightSpec {
    pub fn validate(&self) -> Result<(), ObservablesError> {
        let v = match *self {
            WeightSpec::Exponential { q } => q,
            WeightSpec::Power { p } => p,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(ObservablesError::InvalidWeight(v));
        }
        Ok(())
    }

    /// `Φ(z)` at a point of Z^d.
    pub fn phi(&self, z: &[i64]) -> f64 {
        match *self {
            WeightSpec::Exponential { q } => {
                let r = z.iter().map(|c| c.abs()).max().unwrap_or(0);
                (-q * r as f64).exp()
            }
            WeightSpec::Power { p } => crate::lattice::japanese_bracket(z).powf(-p),
        }
    }
}

/// `max_x Φ(x) |ψ(x)|` using the box coordinates of each site.
pub fn weighted_norm(field: &Field, spec: &WeightSpec) -> Result<f64, ObservablesError> {
    spec.validate()?;
    let shape = field.shape();
    let mut z = vec![0i64; shape.dim()];
    Ok(field
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            shape.coords_into(i, &mut z);
            spec.phi(&z) * v.norm()
        })
        .fold(0.0, f64::max))
}

/// `max_{|z|_∞ ≤ radius} Φ(z) |ψ(z)|` for initial data on Z^d.
pub fn weighted_norm_generator(
    gen: &InitialData,
    dim: usize,
    radius: usize,
    spec: &WeightSpec,
) -> Result<f64, ObservablesError> {
    let shape = LatticeShape::new(dim, radius)?;
    spec.validate()?;
    let mut z = vec![0i64; dim];
    Ok((0..shape.volume())
        .map(|i| {
            shape.coords_into(i, &mut z);
            spec.phi(&z) * gen.value(&z).norm()
        })
        .fold(0.0, f64::max))
}

/// `sup_x Σ_y e^{-(ε/2) dist(x,y)} Φ(x)/Φ(y)` over the box.
pub fn weighted_prefactor(
    shape: LatticeShape,
    eps: f64,
    spec: &WeightSpec,
) -> Result<f64, ObservablesError> {
    spec.validate()?;
    if !(eps > 0.0) {
        return Err(ObservablesError::InvalidEpsilon {
            eps,
            max: f64::INFINITY,
        });
    }
    let v = shape.volume();
    let d = shape.dim();
    let mut coords = vec![0i64; v * d];
    for i in 0..v {
        shape.coords_into(i, &mut coords[i * d..(i + 1) * d]);
    }
    let phi: Vec<f64> = (0..v)
        .map(|i| spec.phi(&coords[i * d..(i + 1) * d]))
        .collect();
    let decay: Vec<f64> = (0..=shape.half_width())
        .map(|r| (-0.5 * eps * r as f64).exp())
        .collect();
    let row = |x: usize| -> f64 {
        let cx = &coords[x * d..(x + 1) * d];
        (0..v)
            .map(|y| {
                let r = shape.torus_dist_unchecked(cx, &coords[y * d..(y + 1) * d]) as usize;
                decay[r] / phi[y]
            })
            .sum::<f64>()
            * phi[x]
    };
    Ok((0..v).map(row).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedBoundReport {
    pub eps: f64,
    pub c_const: f64,
    pub weight: WeightSpec,
    pub eps_tilde: f64,
    pub prefactor: f64,
    pub times: Vec<f64>,
    /// `‖ψ_t‖_Φ / (e^{ε̃t} · prefactor · ‖ψ_0‖_Φ)` per snapshot.
    pub ratios: Vec<f64>,
    pub pass: bool,
    pub first_violation: Option<f64>,
}

/// Checks `‖ψ_t‖_Φ ≤ e^{ε̃t} · prefactor · ‖ψ_0‖_Φ` on every snapshot.
pub fn weighted_bound_check(
    traj: &Trajectory,
    pot: &HoppingPotential,
    eps: f64,
    spec: &WeightSpec,
    c_const: f64,
) -> Result<WeightedBoundReport, ObservablesError> {
    check_eps(eps, pot)?;
    let prefactor = weighted_prefactor(traj.shape(), eps, spec)?;
    let norms = traj
        .snapshots()
        .iter()
        .map(|f| weighted_norm(f, spec))
        .collect::<Result<Vec<_>, _>>()?;
    let rate = eps_tilde(pot, eps, c_const);
    let (mut ratios, _) = exponential_ratios(traj.times(), &norms, rate)?;
    if norms[0] != 0.0 {
        ratios.iter_mut().for_each(|r| *r /= prefactor);
    }
    let first_violation = first_above(traj.times(), &ratios);
    Ok(WeightedBoundReport {
        eps,
        c_const,
        weight: *spec,
        eps_tilde: rate,
        prefactor,
        times: traj.times().to_vec(),
        ratios,
        pass: first_violation.is_none(),
        first_violation,
    })
}

/// A requested `(ε, x)` probe of the observable series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub eps: f64,
    pub site: Site,
}

/// Accumulates the CSV series `t, N_L, H_L` plus, per probe,
/// `N_eps, Q_eps, M_eps, bound_ratio`.
#[derive(Debug)]
pub struct SeriesRecorder {
    pot: HoppingPotential,
    stencil: Stencil,
    lambda: f64,
    eps_rates: Vec<f64>,
    probes: Vec<Probe>,
    weights: Vec<Vec<f64>>,
    s: Vec<f64>,
    q0: Vec<Option<f64>>,
    rows: Vec<Vec<f64>>,
}

impl SeriesRecorder {
    pub fn new(
        pot: &HoppingPotential,
        shape: LatticeShape,
        lambda: f64,
        probes: Vec<Probe>,
        c_const: f64,
    ) -> Result<Self, ObservablesError> {
        let stencil = Stencil::new(pot, shape)?;
        let mut weights = Vec::with_capacity(probes.len());
        let mut s = Vec::with_capacity(probes.len());
        let mut eps_rates = Vec::with_capacity(probes.len());
        for p in &probes {
            check_eps(p.eps, pot)?;
            weights.push(torus_weights(shape, p.eps, &p.site)?);
            s.push(s_eps(shape, p.eps));
            eps_rates.push(eps_tilde(pot, p.eps, c_const));
        }
        Ok(Self {
            pot: pot.clone(),
            stencil,
            lambda,
            eps_rates,
            q0: vec![None; probes.len()],
            probes,
            weights,
            s,
            rows: Vec::new(),
        })
    }

    pub fn record(&mut self, t: f64, field: &Field) -> Result<(), ObservablesError> {
        let mut row = vec![
            t,
            particle_number(field),
            hamiltonian(field, &self.pot, self.lambda)?,
        ];
        for (k, w) in self.weights.iter().enumerate() {
            let n = weighted_mass(field, w);
            let q = n / self.s[k];
            let m = flux_m_with(&self.stencil, field.values(), w, FluxForm::Direct);
            let q0 = *self.q0[k].get_or_insert(q);
            let ratio = if q0 == 0.0 {
                if q == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                q / ((self.eps_rates[k] * t).exp() * q0)
            };
            row.extend([n, q, m, ratio]);
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "N_L".into(), "H_L".into()];
        for p in &self.probes {
            let tag = format!(
                "eps={}@{}",
                p.eps,
                p.site
                    .coords()
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            );
            for col in ["N_eps", "Q_eps", "M_eps", "bound_ratio"] {
                h.push(format!("{col}[{tag}]"));
            }
        }
        h
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Column `name` of the header, if present.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header().iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ObservablesError> {
        writeln!(w, "{}", self.header().join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, Scheme, SchemeConfig};
    use crate::lattice::truncate;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lap(d: usize) -> HoppingPotential {
        HoppingPotential::standard_laplacian(d).unwrap()
    }

    fn noise(shape: LatticeShape, seed: u64) -> Field {
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

    fn run(field: &Field, pot: &HoppingPotential, lambda: f64, t_end: f64) -> Trajectory {
        let cfg = SchemeConfig {
            scheme: Scheme::Strang,
            dt: 0.01,
            t_end,
            snapshot_stride: 10,
            lambda,
        };
        integrate(field, pot, &cfg, &mut []).unwrap()
    }

    #[test]
    fn particle_number_examples() {
        let s = LatticeShape::new(1, 2).unwrap();
        assert_eq!(particle_number(&Field::zeros(s)), 0.0);
        let a = c(0.6, -0.8);
        assert!(
            (particle_number(&Field::delta(s, &s.origin(), a).unwrap()) - a.norm_sqr()).abs()
                < 1e-15
        );
        let k = c(1.5, 0.5);
        let n = particle_number(&Field::constant(s, k).unwrap());
        assert!((n - 5.0 * k.norm_sqr()).abs() < 1e-14);
    }

    #[test]
    fn hamiltonian_examples() {
        let s = LatticeShape::new(1, 4).unwrap();
        assert_eq!(hamiltonian(&Field::zeros(s), &lap(1), 1.0).unwrap(), 0.0);
        let a = c(1.2, 0.3);
        let lambda = 0.7;
        let h = hamiltonian(&Field::delta(s, &s.origin(), a).unwrap(), &lap(1), lambda).unwrap();
        let expect = a.norm_sqr() + 0.5 * lambda * a.norm_sqr().powi(2);
        assert!((h - expect).abs() < 1e-14);
        let f = noise(LatticeShape::new(2, 5).unwrap(), 3);
        let hc = hamiltonian_complex(&f, &lap(2), 1.0).unwrap();
        assert!(hc.im.abs() <= 1e-12);
    }

    #[test]
    fn s_eps_examples() {
        let s = LatticeShape::new(2, 3).unwrap();
        assert_eq!(s_eps(s, 0.0), 49.0);
        let s1 = LatticeShape::new(1, 6).unwrap();
        let eps = 0.13;
        let geo = 1.0 + 2.0 * (1..=6).map(|r| (-eps * r as f64).exp()).sum::<f64>();
        assert!((s_eps(s1, eps) - geo).abs() < 1e-14);
        // brute force over the box
        let brute: f64 = s.sites().map(|x| (-eps * x.sup_norm() as f64).exp()).sum();
        assert!((s_eps(s, eps) - brute).abs() < 1e-12);
        assert!(s_eps(s, 0.1) > s_eps(s, 0.2));
    }

    #[test]
    fn local_particle_number_examples() {
        let s = LatticeShape::new(1, 5).unwrap();
        let delta = Field::delta(s, &s.origin(), c(1.0, 0.0)).unwrap();
        for x in s.sites() {
            let n = local_particle_number(&delta, 0.2, &x).unwrap();
            let d = s.torus_dist_inf(&x, &s.origin()).unwrap();
            assert!((n - (-0.2 * d as f64).exp()).abs() < 1e-15);
        }
        let f = noise(s, 5);
        let n0 = local_particle_number(&f, 0.0, &s.origin()).unwrap();
        assert!((n0 - particle_number(&f)).abs() < 1e-13);
        for x in s.sites() {
            assert!(local_particle_number(&f, 0.3, &x).unwrap() >= f.get(&x).unwrap().norm_sqr());
        }
    }

    #[test]
    fn local_density_examples() {
        let s = LatticeShape::new(2, 3).unwrap();
        assert_eq!(
            local_density(&Field::zeros(s), 0.1, &s.origin()).unwrap(),
            0.0
        );
        let m = 0.8;
        let f = Field::from_fn(s, |z| {
            Complex64::from_polar(m, z[0] as f64 * 0.7 + z[1] as f64)
        })
        .unwrap();
        let q = local_density(&f, 0.2, &Site::new(vec![1, -2])).unwrap();
        assert!((q - m * m).abs() < 1e-14);
        assert!(local_density(&noise(s, 2), 0.2, &s.origin()).unwrap() > 0.0);
    }

    #[test]
    fn flux_f_examples() {
        let s = LatticeShape::new(1, 6).unwrap();
        let real = Field::from_fn(s, |z| c(z[0] as f64 * 0.3 - 1.0, 0.0)).unwrap();
        assert!(flux_field(&real, &lap(1))
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let delta = Field::delta(s, &Site::new(vec![2]), c(0.3, 0.9)).unwrap();
        assert!(flux_field(&delta, &lap(1))
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let s2 = LatticeShape::new(2, 5).unwrap();
        let f = noise(s2, 17);
        let total: f64 = flux_field(&f, &lap(2)).unwrap().iter().sum();
        assert!(total.abs() <= 1e-12 * particle_number(&f));
        let y = Site::new(vec![1, 1]);
        let all = flux_field(&f, &lap(2)).unwrap();
        assert_eq!(
            flux_f(&f, &lap(2), &y).unwrap(),
            all[s2.index_of(&y).unwrap()]
        );
    }

    #[test]
    fn flux_f_matches_bracket_form() {
        // evaluate i(ψ(y)ψ(x')* - ψ(y)*ψ(x')) literally
        let s = LatticeShape::new(1, 4).unwrap();
        let f = noise(s, 23);
        let a = lap(1);
        let i = c(0.0, 1.0);
        for y in s.sites() {
            let mut acc = c(0.0, 0.0);
            for xp in s.sites() {
                let z = s.wrap_sub(&y, &xp).unwrap();
                let al = a.coefficient(z.coords());
                let (py, px) = (f.get(&y).unwrap(), f.get(&xp).unwrap());
                acc += al * i * (py * px.conj() - py.conj() * px);
            }
            assert!(acc.im.abs() < 1e-14);
            assert!((acc.re - flux_f(&f, &a, &y).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn flux_m_examples() {
        let s = LatticeShape::new(2, 4).unwrap();
        let f = noise(s, 31);
        let a = lap(2);
        let x = Site::new(vec![-1, 3]);
        for form in [FluxForm::Direct, FluxForm::Antisymmetrized] {
            assert!(flux_m(&f, &a, 0.0, &x, form).unwrap().abs() < 1e-12);
        }
        let scale = particle_number(&f);
        for eps in [0.05, 0.2, 0.45] {
            let d = flux_m(&f, &a, eps, &x, FluxForm::Direct).unwrap();
            let anti = flux_m(&f, &a, eps, &x, FluxForm::Antisymmetrized).unwrap();
            assert!((d - anti).abs() <= 1e-12 * scale);
        }
        let real = Field::constant(s, c(2.0, 0.0)).unwrap();
        assert_eq!(flux_m(&real, &a, 0.2, &x, FluxForm::Direct).unwrap(), 0.0);
    }

    #[test]
    fn flux_m_is_time_derivative_of_local_number() {
        // dN/dt = M along the exact flow; compare with the RHS directly
        let s = LatticeShape::new(1, 8).unwrap();
        let f = noise(s, 41);
        let a = lap(1);
        let x = Site::new(vec![3]);
        let eps = 0.3;
        let dpsi = crate::dynamics::rhs(&f, &a, 1.0).unwrap();
        let w = torus_weights(s, eps, &x).unwrap();
        let dn: f64 = f
            .values()
            .iter()
            .zip(dpsi.values())
            .zip(&w)
            .map(|((p, dp), w)| w * 2.0 * (p.conj() * dp).re)
            .sum();
        let m = flux_m(&f, &a, eps, &x, FluxForm::Direct).unwrap();
        assert!((dn - m).abs() < 1e-13);
    }

    #[test]
    fn growth_bound_trivial_cases() {
        let s = LatticeShape::new(1, 8).unwrap();
        let zero = run(&Field::zeros(s), &lap(1), 1.0, 1.0);
        assert!(
            growth_bound_report(&zero, &lap(1), 0.1, &s.origin(), 2.0)
                .unwrap()
                .pass
        );

        let alpha0 = HoppingPotential::zero(1).unwrap();
        let traj = run(&noise(s, 3), &alpha0, 1.0, 2.0);
        let rep = growth_bound_report(&traj, &alpha0, 0.1, &s.origin(), 2.0).unwrap();
        assert!(rep.pass);
        assert!(rep.ratios.iter().all(|r| (r - 1.0).abs() < 1e-12));

        assert!(matches!(
            growth_bound_report(&traj, &lap(1), 0.6, &s.origin(), 2.0),
            Err(ObservablesError::InvalidEpsilon { .. })
        ));
    }

    #[test]
    fn growth_bound_holds_on_defocusing_runs() {
        let s = LatticeShape::new(1, 16).unwrap();
        for seed in 0..3 {
            let traj = run(&noise(s, seed), &lap(1), 1.0, 3.0);
            for x in [s.origin(), Site::new(vec![5])] {
                let rep = growth_bound_report(&traj, &lap(1), 0.1, &x, 2.0).unwrap();
                assert!(rep.pass, "violated at {:?}", rep.first_violation);
                assert!(rep.fitted_rate <= rep.eps_tilde);
            }
        }
    }

    #[test]
    fn eps_tilde_formula() {
        // d=1 standard Laplacian: ℓ=1, ‖α‖=1, 3 offsets
        let e = eps_tilde(&lap(1), 0.1, 2.0);
        assert!((e - 0.1 * 2.0 * 0.05f64.exp() * 3.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_norm_examples() {
        let s = LatticeShape::new(2, 4).unwrap();
        let specs = [
            WeightSpec::Exponential { q: 0.3 },
            WeightSpec::Power { p: 1.5 },
        ];
        let a = c(-0.4, 1.1);
        for spec in &specs {
            assert_eq!(weighted_norm(&Field::zeros(s), spec).unwrap(), 0.0);
            let d = Field::delta(s, &s.origin(), a).unwrap();
            assert!((weighted_norm(&d, spec).unwrap() - a.norm()).abs() < 1e-15);
        }
        let cst = Field::constant(s, a).unwrap();
        assert!((weighted_norm(&cst, &specs[1]).unwrap() - a.norm()).abs() < 1e-15);
        assert!(weighted_norm(&cst, &WeightSpec::Power { p: 0.0 }).is_err());

        let gen = InitialData::Constant { value: a };
        let n = weighted_norm_generator(&gen, 2, 10, &specs[1]).unwrap();
        assert!((n - a.norm()).abs() < 1e-15);
    }

    #[test]
    fn weighted_prefactor_examples() {
        let s = LatticeShape::new(1, 10).unwrap();
        let eps = 0.2;
        let flat = weighted_prefactor(s, eps, &WeightSpec::Power { p: 1e-300 }).unwrap();
        assert!((flat - s_eps(s, eps / 2.0)).abs() < 1e-12);
        assert!(weighted_prefactor(s, eps, &WeightSpec::Exponential { q: 0.05 }).unwrap() >= 1.0);

        let vals: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&l| {
                weighted_prefactor(
                    LatticeShape::new(1, l).unwrap(),
                    0.4,
                    &WeightSpec::Power { p: 0.5 },
                )
                .unwrap()
            })
            .collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let gaps: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps[2] < gaps[0]);
    }

    #[test]
    fn weighted_bound_examples() {
        let s = LatticeShape::new(1, 16).unwrap();
        let a = lap(1);
        let spec = WeightSpec::Power { p: 0.5 };
        let zero = run(&Field::zeros(s), &a, 1.0, 1.0);
        assert!(
            weighted_bound_check(&zero, &a, 0.1, &spec, 2.0)
                .unwrap()
                .pass
        );
        let delta = Field::delta(s, &s.origin(), c(1.0, 0.0)).unwrap();
        let lin = run(&delta, &a, 0.0, 3.0);
        assert!(
            weighted_bound_check(&lin, &a, 0.1, &spec, 2.0)
                .unwrap()
                .pass
        );
        let nl = run(&noise(s, 7), &a, 1.0, 3.0);
        let rep =
            weighted_bound_check(&nl, &a, 0.1, &WeightSpec::Exponential { q: 0.02 }, 2.0).unwrap();
        assert!(rep.pass);
        assert!(rep.ratios[0] <= 1.0);
    }

    #[test]
    fn series_recorder_columns() {
        let s = LatticeShape::new(1, 6).unwrap();
        let a = lap(1);
        let probes = vec![
            Probe {
                eps: 0.1,
                site: s.origin(),
            },
            Probe {
                eps: 0.2,
                site: Site::new(vec![2]),
            },
        ];
        let mut rec = SeriesRecorder::new(&a, s, 1.0, probes, 2.0).unwrap();
        let f = noise(s, 1);
        rec.record(0.0, &f).unwrap();
        rec.record(0.5, &f).unwrap();
        assert_eq!(rec.header().len(), 3 + 8);
        assert_eq!(rec.rows()[0][6], 1.0);
        let q = rec.column("Q_eps[eps=0.1@0]").unwrap();
        assert!((q[0] - local_density(&f, 0.1, &s.origin()).unwrap()).abs() < 1e-15);
        let mut out = Vec::new();
        rec.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("t,N_L,H_L,N_eps[eps=0.1@0]"));
    }
}
