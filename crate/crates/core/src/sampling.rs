//! Random initial data: stationary Gaussian fields built from independent
//! Fourier modes, single-site Metropolis chains for the grand-canonical Gibbs
//! measure, and sample statistics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hopping::{dispersion, FourierPlan, HoppingError, HoppingPotential, Stencil};
use crate::lattice::{derive_seed, japanese_bracket, Field, LatticeError, LatticeShape, Site};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("spectral density is negative ({value}) at mode {mode}")]
    NegativeDensity { mode: usize, value: f64 },
    #[error("spectral density is not symmetric under k -> -k at mode {0}")]
    AsymmetricDensity(usize),
    #[error("tabulated density has {got} entries, box needs {expected}")]
    DensityLength { expected: usize, got: usize },
    #[error("invalid Gibbs parameters: {0}")]
    InvalidGibbs(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("samples live on different boxes")]
    MixedShapes,
    #[error("sample groups must be non-empty and of equal size")]
    UnequalGroups,
    #[error(transparent)]
    Hopping(#[from] HoppingError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Variance of each Fourier mode of a stationary complex Gaussian field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectralDensity {
    /// Every mode has variance `variance`; sites are i.i.d.
    Flat { variance: f64 },
    /// `1 / (β (ω(k) - μ))`, the free-field Gibbs covariance.
    FreeGibbs {
        beta: f64,
        mu: f64,
        kernel: HoppingPotential,
    },
    /// Values per mode in DFT index order.
    Tabulated { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub density: SpectralDensity,
}

impl GaussianSpec {
    pub fn flat(variance: f64) -> Self {
        Self {
            density: SpectralDensity::Flat { variance },
        }
    }

    /// Mode variances in DFT index order, validated nonnegative and even.
    pub fn mode_variances(&self, shape: LatticeShape) -> Result<Vec<f64>, SamplingError> {
        let v = shape.volume();
        let values = match &self.density {
            SpectralDensity::Flat { variance } => vec![*variance; v],
            SpectralDensity::FreeGibbs { beta, mu, kernel } => {
                let w = dispersion(kernel, shape)?;
                w.dft_values()
                    .iter()
                    .map(|om| 1.0 / (beta * (om - mu)))
                    .collect()
            }
            SpectralDensity::Tabulated { values } => {
                if values.len() != v {
                    return Err(SamplingError::DensityLength {
                        expected: v,
                        got: values.len(),
                    });
                }
                values.clone()
            }
        };
        for (i, &s) in values.iter().enumerate() {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SamplingError::NegativeDensity { mode: i, value: s });
            }
        }
        let side = shape.side();
        let mut idx = vec![0usize; shape.dim()];
        for (i, &s) in values.iter().enumerate() {
            let mut rem = i;
            for c in idx.iter_mut().rev() {
                *c = rem % side;
                rem /= side;
            }
            let mirror = idx
                .iter()
                .fold(0usize, |acc, &c| acc * side + (side - c) % side);
            if (values[mirror] - s).abs() > 1e-12 * s.abs().max(1e-300) {
                return Err(SamplingError::AsymmetricDensity(i));
            }
        }
        Ok(values)
    }

    /// Covariance `E ψ(x) ψ(0)*` as a field over `x`.
    pub fn covariance(&self, shape: LatticeShape) -> Result<Field, SamplingError> {
        let mut data: Vec<Complex64> = self
            .mode_variances(shape)?
            .into_iter()
            .map(|s| Complex64::new(s, 0.0))
            .collect();
        FourierPlan::new(shape).inverse(&mut data);
        // DFT index j holds lag j mod S
        let side = shape.side() as i64;
        Ok(Field::from_fn(shape, |z| {
            let j = z.iter().fold(0usize, |acc, &c| {
                acc * side as usize + c.rem_euclid(side) as usize
            });
            data[j]
        })?)
    }
}

/// One field with the given spectral law: `ψ = √V · IFFT(√S · ξ)` with
/// independent standard complex normal `ξ`.
pub fn sample_gaussian(
    spec: &GaussianSpec,
    shape: LatticeShape,
    seed: u64,
) -> Result<Field, SamplingError> {
    let variances = spec.mode_variances(shape)?;
    let plan = FourierPlan::new(shape);
    Ok(sample_with(&variances, &plan, seed))
}

/// `count` independent fields with seeds derived from `seed`.
pub fn sample_gaussian_many(
    spec: &GaussianSpec,
    shape: LatticeShape,
    seed: u64,
    count: usize,
) -> Result<Vec<Field>, SamplingError> {
    let variances = spec.mode_variances(shape)?;
    let plan = FourierPlan::new(shape);
    Ok((0..count)
        .into_par_iter()
        .map(|i| sample_with(&variances, &plan, derive_seed(seed, i as u64)))
        .collect())
}

fn sample_with(variances: &[f64], plan: &FourierPlan, seed: u64) -> Field {
    let shape = plan.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root_half = std::f64::consts::FRAC_1_SQRT_2;
    let scale = (shape.volume() as f64).sqrt();
    let mut data: Vec<Complex64> = variances
        .iter()
        .map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * (root_half * s.sqrt() * scale)
        })
        .collect();
    plan.inverse(&mut data);
    Field::from_raw(shape, data)
}

/// Grand-canonical measure `∝ exp(-β (H - μ N))` and its Metropolis chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsSpec {
    pub beta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub proposal_sigma: f64,
    pub burn_in: usize,
    pub thinning: usize,
}

impl GibbsSpec {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |m: &str| Err(SamplingError::InvalidGibbs(m.to_string()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive (defocusing)");
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite");
        }
        if !(self.proposal_sigma > 0.0 && self.proposal_sigma.is_finite()) {
            return bad("proposal_sigma must be positive");
        }
        if self.thinning == 0 {
            return bad("thinning must be at least 1");
        }
        Ok(())
    }
}

/// Output of one Metropolis chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsRun {
    pub samples: Vec<Field>,
    pub proposed: u64,
    pub accepted: u64,
    pub seed: u64,
    /// Sweep count at which each sample was taken.
    pub positions: Vec<usize>,
}

/// Fraction of accepted single-site moves.
pub fn acceptance_diag(run: &GibbsRun) -> f64 {
    if run.proposed == 0 {
        return 0.0;
    }
    run.accepted as f64 / run.proposed as f64
}

struct Chain {
    spec: GibbsSpec,
    stencil: Stencil,
    alpha0: f64,
    psi: Vec<Complex64>,
    rng: ChaCha8Rng,
    proposed: u64,
    accepted: u64,
}

impl Chain {
    fn new(
        spec: &GibbsSpec,
        pot: &HoppingPotential,
        shape: LatticeShape,
        seed: u64,
    ) -> Result<Self, SamplingError> {
        let stencil = Stencil::restricted(pot, shape)?;
        Ok(Self {
            spec: *spec,
            stencil,
            alpha0: pot.coefficient(&vec![0; shape.dim()]),
            psi: vec![Complex64::new(0.0, 0.0); shape.volume()],
            rng: ChaCha8Rng::seed_from_u64(seed),
            proposed: 0,
            accepted: 0,
        })
    }

    fn sweep(&mut self) {
        let v = self.psi.len();
        let start = self.rng.gen_range(0..v);
        for n in 0..v {
            self.update((start + n) % v);
        }
    }

    fn update(&mut self, x: usize) {
        let GibbsSpec {
            beta,
            mu,
            lambda,
            proposal_sigma,
            ..
        } = self.spec;
        let old = self.psi[x];
        let dre: f64 = self.rng.sample(StandardNormal);
        let dim: f64 = self.rng.sample(StandardNormal);
        let delta = Complex64::new(dre, dim) * proposal_sigma;
        let new = old + delta;
        let h: Complex64 = self
            .stencil
            .neighbors(x)
            .filter(|&(y, _)| y != x)
            .map(|(y, a)| a * self.psi[y])
            .sum();
        let (m_old, m_new) = (old.norm_sqr(), new.norm_sqr());
        let d_energy = (self.alpha0 - mu) * (m_new - m_old)
            + 2.0 * (delta * h.conj()).re
            + 0.5 * lambda * (m_new * m_new - m_old * m_old);
        self.proposed += 1;
        let u: f64 = self.rng.gen();
        if d_energy <= 0.0 || u < (-beta * d_energy).exp() {
            self.psi[x] = new;
            self.accepted += 1;
        }
    }
}

/// Runs one chain from the zero field: `burn_in` sweeps, then one sample every
/// `thinning` sweeps.
pub fn sample_gibbs(
    spec: &GibbsSpec,
    pot: &HoppingPotential,
    shape: LatticeShape,
    seed: u64,
    n_samples: usize,
) -> Result<GibbsRun, SamplingError> {
    spec.validate()?;
    let mut chain = Chain::new(spec, pot, shape, seed)?;
    for _ in 0..spec.burn_in {
        chain.sweep();
    }
    let mut samples = Vec::with_capacity(n_samples);
    let mut positions = Vec::with_capacity(n_samples);
    let mut sweeps = spec.burn_in;
    for _ in 0..n_samples {
        for _ in 0..spec.thinning {
            chain.sweep();
        }
        sweeps += spec.thinning;
        samples.push(Field::from_raw(shape, chain.psi.clone()));
        positions.push(sweeps);
    }
    Ok(GibbsRun {
        samples,
        proposed: chain.proposed,
        accepted: chain.accepted,
        seed,
        positions,
    })
}

/// Independent chains with derived seeds, each contributing `per_chain` samples.
pub fn sample_gibbs_chains(
    spec: &GibbsSpec,
    pot: &HoppingPotential,
    shape: LatticeShape,
    seed: u64,
    chains: usize,
    per_chain: usize,
) -> Result<Vec<GibbsRun>, SamplingError> {
    (0..chains)
        .into_par_iter()
        .map(|c| sample_gibbs(spec, pot, shape, derive_seed(seed, c as u64), per_chain))
        .collect()
}

/// Adjusts `proposal_sigma` towards acceptance `target` with short pilot runs.
pub fn tune_proposal(
    spec: &GibbsSpec,
    pot: &HoppingPotential,
    shape: LatticeShape,
    seed: u64,
    target: f64,
    rounds: usize,
    sweeps_per_round: usize,
) -> Result<GibbsSpec, SamplingError> {
    spec.validate()?;
    let mut tuned = *spec;
    let mut chain = Chain::new(spec, pot, shape, seed)?;
    for _ in 0..rounds {
        let (p0, a0) = (chain.proposed, chain.accepted);
        for _ in 0..sweeps_per_round {
            chain.sweep();
        }
        let acc = (chain.accepted - a0) as f64 / (chain.proposed - p0).max(1) as f64;
        tuned.proposal_sigma *= (2.0 * (acc - target)).exp();
        chain.spec = tuned;
    }
    Ok(tuned)
}

/// Two-sided normal tail mass beyond three standard deviations.
pub const THREE_SIGMA_RATE: f64 = 2.699_796e-3;

/// Smallest `k` with `P(Binomial(n, p) > k) <= level`.
pub fn binomial_upper(n: usize, p: f64, level: f64) -> usize {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut cdf = pmf;
    let mut k = 0;
    while 1.0 - cdf > level && k < n {
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        k += 1;
        cdf += pmf;
    }
    k
}

/// Per-site empirical moments `E|ψ(x)|^ξ` with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub xi: f64,
    pub samples: usize,
    pub per_site_moments: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub max_moment: f64,
    pub max_site: Site,
    /// Mean of all per-site moments.
    pub pooled: f64,
}

impl MomentStats {
    /// Root-mean-square of the per-site standard errors.
    pub fn pooled_se(&self) -> f64 {
        let n = self.standard_errors.len() as f64;
        (self.standard_errors.iter().map(|s| s * s).sum::<f64>() / n).sqrt()
    }

    /// Number of sites whose moment lies more than `k` pooled standard errors
    /// from the pooled mean.
    pub fn outliers(&self, k: f64) -> usize {
        let se = self.pooled_se();
        self.per_site_moments
            .iter()
            .filter(|&&m| (m - self.pooled).abs() > k * se)
            .count()
    }

    pub fn outlier_fraction(&self, k: f64) -> f64 {
        self.outliers(k) as f64 / self.per_site_moments.len() as f64
    }
}

fn common_shape(samples: &[Field]) -> Result<LatticeShape, SamplingError> {
    let shape = samples
        .first()
        .ok_or(SamplingError::TooFewSamples { need: 1, got: 0 })?
        .shape();
    if samples.iter().any(|f| f.shape() != shape) {
        return Err(SamplingError::MixedShapes);
    }
    Ok(shape)
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, std_dev(values) / n.sqrt())
}

/// `E|ψ(x)|^ξ` per site, its maximum over the box and standard errors.
pub fn moment_sup(samples: &[Field], xi: f64) -> Result<MomentStats, SamplingError> {
    if samples.len() < 2 {
        return Err(SamplingError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    common_shape(samples)?;
    let groups: Vec<&[Field]> = samples.chunks(1).collect();
    grouped_moments(&groups, xi)
}

/// Like [`moment_sup`] for correlated samples: standard errors come from the
/// spread of the per-group means, e.g. one group per Markov chain.
pub fn moment_sup_grouped(groups: &[&[Field]], xi: f64) -> Result<MomentStats, SamplingError> {
    if groups.len() < 2 {
        return Err(SamplingError::TooFewSamples {
            need: 2,
            got: groups.len(),
        });
    }
    let size = groups[0].len();
    if size == 0 || groups.iter().any(|g| g.len() != size) {
        return Err(SamplingError::UnequalGroups);
    }
    grouped_moments(groups, xi)
}

fn grouped_moments(groups: &[&[Field]], xi: f64) -> Result<MomentStats, SamplingError> {
    let shape = groups[0][0].shape();
    if groups
        .iter()
        .flat_map(|g| g.iter())
        .any(|f| f.shape() != shape)
    {
        return Err(SamplingError::MixedShapes);
    }
    let v = shape.volume();
    let mut moments = Vec::with_capacity(v);
    let mut ses = Vec::with_capacity(v);
    let mut column = vec![0.0; groups.len()];
    for x in 0..v {
        for (c, g) in column.iter_mut().zip(groups) {
            *c = g.iter().map(|f| f.values()[x].norm().powf(xi)).sum::<f64>() / g.len() as f64;
        }
        let (m, se) = mean_se(&column);
        moments.push(m);
        ses.push(se);
    }
    let (arg, &max) =
        moments.iter().enumerate().fold(
            (0, &0.0),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    let pooled = moments.iter().sum::<f64>() / v as f64;
    Ok(MomentStats {
        xi,
        samples: groups.iter().map(|g| g.len()).sum(),
        per_site_moments: moments,
        standard_errors: ses,
        max_moment: max,
        max_site: shape.site_at(arg),
        pooled,
    })
}

/// Sites with `|ψ(x)| > ⟨x⟩^{1/a}`, grouped by sup-norm radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationStats {
    pub a: f64,
    pub count: usize,
    pub sites: Vec<Site>,
    /// Entry `r` holds `(violations, sites)` on the shell `|x|_∞ = r`.
    pub violations_by_radius: Vec<(usize, usize)>,
}

impl ViolationStats {
    /// Accumulates another sample's counts.
    pub fn merge(&mut self, other: &ViolationStats) {
        self.count += other.count;
        self.sites.extend(other.sites.iter().cloned());
        for (a, b) in self
            .violations_by_radius
            .iter_mut()
            .zip(&other.violations_by_radius)
        {
            a.0 += b.0;
            a.1 += b.1;
        }
    }

    /// Violation frequency per shell.
    pub fn frequencies(&self) -> Vec<f64> {
        self.violations_by_radius
            .iter()
            .map(|&(v, n)| if n == 0 { 0.0 } else { v as f64 / n as f64 })
            .collect()
    }
}

pub fn power_law_violations(sample: &Field, a: f64) -> ViolationStats {
    let shape = sample.shape();
    let mut by_radius = vec![(0usize, 0usize); shape.half_width() + 1];
    let mut sites = Vec::new();
    let exponent = 1.0 / a;
    for (i, v) in sample.values().iter().enumerate() {
        let x = shape.site_at(i);
        let r = x.sup_norm() as usize;
        by_radius[r].1 += 1;
        if v.norm() > japanese_bracket(x.coords()).powf(exponent) {
            by_radius[r].0 += 1;
            sites.push(x);
        }
    }
    ViolationStats {
        a,
        count: sites.len(),
        sites,
        violations_by_radius: by_radius,
    }
}

/// Chebyshev bound `E|ψ|^ξ / ⟨r⟩^{ξ/a}` on the violation frequency at radius
/// `r` along a coordinate axis.
pub fn chebyshev_bound(moment: f64, xi: f64, a: f64, r: usize) -> f64 {
    (moment / (1.0 + (r as f64).powi(2)).sqrt().powf(xi / a)).min(1.0)
}

/// `E ψ(x) ψ(x + r)*` at every `x`, with standard errors of the real and
/// imaginary parts combined in quadrature.
pub fn two_point(
    samples: &[Field],
    lag: &Site,
) -> Result<(Vec<Complex64>, Vec<f64>), SamplingError> {
    if samples.len() < 2 {
        return Err(SamplingError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let shape = common_shape(samples)?;
    let mut means = Vec::with_capacity(shape.volume());
    let mut ses = Vec::with_capacity(shape.volume());
    let mut re = vec![0.0; samples.len()];
    let mut im = vec![0.0; samples.len()];
    for x in shape.sites() {
        let y = shape.reduce_coords(
            &x.coords()
                .iter()
                .zip(lag.coords())
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>(),
        );
        let (ix, iy) = (shape.index_of(&x)?, shape.index_of(&y)?);
        for (k, f) in samples.iter().enumerate() {
            let p = f.values()[ix] * f.values()[iy].conj();
            re[k] = p.re;
            im[k] = p.im;
        }
        let (mr, sr) = mean_se(&re);
        let (mi, si) = mean_se(&im);
        means.push(Complex64::new(mr, mi));
        ses.push(sr.hypot(si));
    }
    Ok((means, ses))
}

/// `max_x |ψ(x)| ⟨x⟩^{-exponent}` over the box.
pub fn weighted_sup(field: &Field, exponent: f64) -> f64 {
    let shape = field.shape();
    field
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.norm() * japanese_bracket(shape.site_at(i).coords()).powf(-exponent))
        .fold(0.0, f64::max)
}

/// Median and its bootstrap standard error from `resamples` deterministic draws.
pub fn median_with_se(values: &[f64], seed: u64, resamples: usize) -> (f64, f64) {
    let med = median(values);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; values.len()];
    let boots: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.gen_range(0..values.len())];
            }
            median(&buf)
        })
        .collect();
    (med, std_dev(&boots))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Aggregate statistics written by the `stats` experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub moments: MomentStats,
    pub violations: ViolationStats,
    /// `E ψ(x) ψ(x + e_1)*` averaged over sites.
    pub two_point_nearest: Complex64,
}

pub fn sample_stats(samples: &[Field], xi: f64, a: f64) -> Result<SampleStats, SamplingError> {
    let moments = moment_sup(samples, xi)?;
    let mut violations = power_law_violations(&samples[0], a);
    for f in &samples[1..] {
        violations.merge(&power_law_violations(f, a));
    }
    let shape = samples[0].shape();
    let mut lag = vec![0i64; shape.dim()];
    lag[0] = 1;
    let (tp, _) = two_point(samples, &Site::new(lag))?;
    let two_point_nearest = tp.iter().sum::<Complex64>() / tp.len() as f64;
    Ok(SampleStats {
        moments,
        violations,
        two_point_nearest,
    })
}
