use std::path::Path;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::convergence::{l_sweep, uniqueness_study, SweepConfig};
use crate::dynamics::{integrate, Trajectory};
use crate::hopping::HoppingPotential;
use crate::lattice::{derive_seed, truncate, Field, LatticeShape, Site};
use crate::observables::{
    growth_bound_report, hamiltonian, particle_number, weighted_bound_check, Probe, SeriesRecorder,
};
use crate::sampling::{
    acceptance_diag, binomial_upper, mean_se, moment_sup_grouped, sample_gaussian,
    sample_gaussian_many, sample_gibbs_chains, sample_stats, tune_proposal, MomentStats,
    SampleStats, SpectralDensity, THREE_SIGMA_RATE,
};

use super::config::{Experiment, InitialSection, RunConfig};
use super::output::{Check, RunWriter};
use super::CliError;

/// Stream indices of [`derive_seed`] reserved for single draws.
const INITIAL_STREAM: u64 = u64::MAX;
const TUNING_STREAM: u64 = u64::MAX - 1;

/// Significance of the outlier-count rule for site uniformity.
const UNIFORM_LEVEL: f64 = 1e-3;
const SE_MULTIPLE: f64 = 3.0;
/// Consecutive samples per batch of the split-half stationarity check.
const BATCH: usize = 5;

pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    pub timing: Value,
}

impl Outcome {
    fn new(results: Value, checks: Vec<Check>) -> Self {
        Self {
            results,
            checks,
            timing: Value::Null,
        }
    }
}

pub fn dispatch(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    match cfg.experiment {
        Experiment::Simulate => simulate(cfg, out),
        Experiment::Conserve => conserve(cfg, out),
        Experiment::BoundCheck => bound_check(cfg, out),
        Experiment::SweepL => sweep(cfg, out),
        Experiment::Uniqueness => uniqueness(cfg, out),
        Experiment::SampleGaussian => gaussian(cfg, out),
        Experiment::SampleGibbs => gibbs(cfg, out),
        Experiment::Stats => stats(cfg, out),
    }
}

fn initial_field(cfg: &RunConfig, shape: LatticeShape) -> Result<Field, CliError> {
    if let Some(gen) = cfg.initial.generator(shape.dim(), cfg.seed) {
        return Ok(truncate(&gen, shape)?);
    }
    match &cfg.initial {
        InitialSection::Gaussian => Ok(sample_gaussian(
            &cfg.gaussian.spec(),
            shape,
            derive_seed(cfg.seed, INITIAL_STREAM),
        )?),
        InitialSection::Dump { path } => {
            let field = read_field(path)?;
            if field.shape() != shape {
                return Err(CliError::Config(format!(
                    "{} holds a field on {}, expected {shape}",
                    path.display(),
                    field.shape()
                )));
            }
            Ok(field)
        }
        _ => unreachable!("generator sections handled above"),
    }
}

fn read_field(path: &Path) -> Result<Field, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Field::read_dump(std::io::BufReader::new(f))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn probes(cfg: &RunConfig) -> Vec<Probe> {
    let mut v = Vec::new();
    for &eps in &cfg.observe.eps {
        for site in cfg.probe_sites() {
            v.push(Probe {
                eps,
                site: Site::new(site),
            });
        }
    }
    v
}

/// Integrates the configured run and writes `series.csv` from its snapshots.
fn evolve(
    cfg: &RunConfig,
    out: &mut RunWriter,
) -> Result<(HoppingPotential, Trajectory, SeriesRecorder), CliError> {
    let shape = cfg.shape()?;
    let pot = cfg.potential()?;
    let field0 = initial_field(cfg, shape)?;
    let scheme = cfg.dynamics.scheme_config();
    scheme.validate()?;
    let mut rec =
        SeriesRecorder::new(&pot, shape, scheme.lambda, probes(cfg), cfg.observe.c_const)?;
    let traj = integrate(&field0, &pot, &scheme, &mut [])?;
    for (f, &t) in traj.snapshots().iter().zip(traj.times()) {
        rec.record(t, f)?;
    }
    let mut csv = Vec::new();
    rec.write_csv(&mut csv)?;
    out.write("series.csv", &csv)?;
    Ok((pot, traj, rec))
}

fn summary(traj: &Trajectory, pot: &HoppingPotential, lambda: f64) -> Result<Value, CliError> {
    let (first, last) = (traj.initial(), traj.last());
    Ok(json!({
        "snapshots": traj.len(),
        "t_final": traj.final_time(),
        "N_initial": particle_number(first),
        "N_final": particle_number(last),
        "H_initial": hamiltonian(first, pot, lambda)?,
        "H_final": hamiltonian(last, pot, lambda)?,
        "max_abs_final": last.max_abs(),
    }))
}

fn simulate(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    let (pot, traj, _) = evolve(cfg, out)?;
    if cfg.observe.dump_fields {
        for (j, f) in traj.snapshots().iter().enumerate() {
            out.write_field(&format!("fields/snapshot_{j:06}.txt"), f)?;
        }
    }
    let mut results = summary(&traj, &pot, cfg.dynamics.lambda)?;
    results["steps"] = json!(cfg.dynamics.scheme_config().step_count()?);
    Ok(Outcome::new(results, Vec::new()))
}

fn relative_drift(series: &[f64]) -> f64 {
    let v0 = series[0];
    let scale = if v0 == 0.0 { 1.0 } else { v0.abs() };
    series.iter().map(|v| (v - v0).abs()).fold(0.0, f64::max) / scale
}

fn conserve(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    let (pot, traj, rec) = evolve(cfg, out)?;
    let tol = cfg.conserve;
    let n_drift = relative_drift(&rec.column("N_L").expect("series has N_L"));
    let h_drift = relative_drift(&rec.column("H_L").expect("series has H_L"));
    let mut checks = vec![
        Check::new(
            "n_conservation",
            "particle number is conserved",
            n_drift <= tol.n_tol,
            format!("max relative drift {n_drift:e} (tol {:e})", tol.n_tol),
        ),
        Check::new(
            "h_conservation",
            "Hamiltonian is conserved",
            h_drift <= tol.h_tol,
            format!("max relative drift {h_drift:e} (tol {:e})", tol.h_tol),
        ),
    ];
    let mut results = summary(&traj, &pot, cfg.dynamics.lambda)?;
    results["n_drift"] = json!(n_drift);
    results["h_drift"] = json!(h_drift);
    if pot.sup_norm() == 0.0 {
        let lambda = cfg.dynamics.lambda;
        let psi0 = traj.initial().values();
        let mut err = 0.0f64;
        for (f, &t) in traj.snapshots().iter().zip(traj.times()) {
            for (v, p) in f.values().iter().zip(psi0) {
                let exact = p * Complex64::from_polar(1.0, -lambda * p.norm_sqr() * t);
                err = err.max((v - exact).norm());
            }
        }
        results["exact_error"] = json!(err);
        checks.push(Check::new(
            "onsite_exact",
            "zero hopping gives the exact onsite phase rotation",
            err <= tol.exact_tol,
            format!("max error {err:e} (tol {:e})", tol.exact_tol),
        ));
    }
    Ok(Outcome::new(results, checks))
}

fn bound_check(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    let (pot, traj, _) = evolve(cfg, out)?;
    let c = cfg.observe.c_const;
    let mut checks = Vec::new();
    let mut local = Vec::new();
    for p in probes(cfg) {
        let r = growth_bound_report(&traj, &pot, p.eps, &p.site, c)?;
        checks.push(Check::new(
            &format!("local_density_bound[eps={}@{:?}]", p.eps, p.site.coords()),
            "local particle number grows at most like exp(eps_tilde t)",
            r.pass,
            format!(
                "max ratio {:.12} (rate {:e}, fitted {:e})",
                r.max_ratio(),
                r.eps_tilde,
                r.fitted_rate
            ),
        ));
        local.push(r);
    }
    let mut weighted = Vec::new();
    if let Some(spec) = cfg.observe.weight {
        for &eps in &cfg.observe.eps {
            let r = weighted_bound_check(&traj, &pot, eps, &spec, c)?;
            let max = r.ratios.iter().copied().fold(0.0, f64::max);
            checks.push(Check::new(
                &format!("weighted_bound[eps={eps}]"),
                "weighted sup norm grows at most like prefactor exp(eps_tilde t)",
                r.pass,
                format!("max ratio {max:.12} (prefactor {:e})", r.prefactor),
            ));
            weighted.push(r);
        }
    }
    out.write_json(
        "bound.json",
        &json!({ "local": local, "weighted": weighted }),
    )?;
    let results = json!({
        "max_local_ratio": local.iter().map(|r| r.max_ratio()).fold(0.0, f64::max),
        "probes": local.len(),
        "weighted_checks": weighted.len(),
    });
    Ok(Outcome::new(results, checks))
}

fn sweep(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    let pot = cfg.potential()?;
    let generator = cfg
        .initial
        .generator(cfg.lattice.d, cfg.seed)
        .ok_or_else(|| {
            CliError::Config("sweep-L needs initial data defined on the whole lattice".into())
        })?;
    let sc = SweepConfig {
        generator,
        dim: cfg.lattice.d,
        l_list: cfg.sweep.l_list.clone(),
        k: cfg.sweep.k,
        scheme: cfg.dynamics.scheme_config(),
        pairing: cfg.sweep.pairing,
    };
    sc.validate(&pot)?;
    let report = l_sweep(&sc, &pot)?;
    let runtimes: Vec<Value> = report
        .entries
        .iter()
        .map(|e| json!({ "L": e.l, "runtime": e.runtime }))
        .collect();
    let mut doc = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(entries) = doc["entries"].as_array_mut() {
        for e in entries {
            if let Some(m) = e.as_object_mut() {
                m.remove("runtime");
            }
        }
    }
    out.write_json("sweep.json", &doc)?;
    out.write("sweep.csv", report.to_csv().as_bytes())?;
    let deltas = report.deltas();
    let checks = vec![
        Check::new(
            "sweep_complete",
            "every box pair evolved without error",
            !report.partial,
            report
                .entries
                .iter()
                .filter_map(|e| e.error.as_ref().map(|m| format!("L={}: {m}", e.l)))
                .collect::<Vec<_>>()
                .join("; "),
        ),
        Check::new(
            "delta_decreasing",
            "truncation disagreement decreases with L",
            report.strictly_decreasing(),
            format!("{deltas:?}"),
        ),
    ];
    let results = json!({
        "delta_bar": deltas,
        "A": report.a,
        "L0": report.l0,
        "fit": report.fit,
    });
    Ok(Outcome {
        results,
        checks,
        timing: json!({ "entries": runtimes }),
    })
}

fn uniqueness(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    let shape = cfg.shape()?;
    let pot = cfg.potential()?;
    let field0 = initial_field(cfg, shape)?;
    let u = &cfg.uniqueness;
    if u.dts.len() < 2 {
        return Err(CliError::Config(
            "uniqueness needs at least two step sizes".into(),
        ));
    }
    let report = uniqueness_study(
        &field0,
        &pot,
        cfg.dynamics.lambda,
        cfg.dynamics.t_end,
        &u.dts,
        u.n,
    )?;
    out.write_json("uniqueness.json", &report)?;
    let pass = report.order.is_some_and(|o| o >= u.min_order);
    let checks = vec![Check::new(
        "scheme_order",
        "independent schemes converge to one solution at second order",
        pass,
        format!(
            "deltas {:?}, order {:?} (min {})",
            report.deltas, report.order, u.min_order
        ),
    )];
    let results = json!({ "deltas": report.deltas, "order": report.order });
    Ok(Outcome::new(results, checks))
}

fn write_samples(out: &mut RunWriter, samples: &[Field]) -> Result<(), CliError> {
    for (i, f) in samples.iter().enumerate() {
        out.write_field(&format!("samples/sample_{i:05}.txt"), f)?;
    }
    Ok(())
}

fn uniformity_check(m: &MomentStats) -> Check {
    let sites = m.per_site_moments.len();
    let count = m.outliers(SE_MULTIPLE);
    let allowed = binomial_upper(sites, THREE_SIGMA_RATE, UNIFORM_LEVEL);
    Check::new(
        "moment_uniformity",
        "per-site moments are translation invariant",
        count <= allowed,
        format!(
            "{count} of {sites} sites beyond {SE_MULTIPLE} SE of the pooled moment {:e} (allowed {allowed})",
            m.pooled
        ),
    )
}

fn stats_results(s: &SampleStats) -> Value {
    json!({
        "samples": s.moments.samples,
        "pooled_moment": s.moments.pooled,
        "max_moment": s.moments.max_moment,
        "max_site": s.moments.max_site,
        "violations": s.violations.count,
        "two_point_nearest": s.two_point_nearest,
    })
}

/// Pooled `E|ψ|^4 / (E|ψ|^2)^2` with a leave-one-sample-out jackknife error.
fn kurtosis_jackknife(samples: &[Field]) -> (f64, f64) {
    let sums: Vec<(f64, f64, f64)> = samples
        .iter()
        .map(|f| {
            let (mut a, mut b) = (0.0, 0.0);
            for v in f.values() {
                let z = v.norm_sqr();
                a += z;
                b += z * z;
            }
            (a, b, f.values().len() as f64)
        })
        .collect();
    let ratio = |a: f64, b: f64, n: f64| (b / n) / (a / n).powi(2);
    let (ta, tb, tn) = sums.iter().fold((0.0, 0.0, 0.0), |acc, s| {
        (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2)
    });
    let loo: Vec<f64> = sums
        .iter()
        .map(|s| ratio(ta - s.0, tb - s.1, tn - s.2))
        .collect();
    let n = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / n;
    let var = loo.iter().map(|r| (r - mean).powi(2)).sum::<f64>() * (n - 1.0) / n;
    (ratio(ta, tb, tn), var.sqrt())
}

fn gaussian(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    let shape = cfg.shape()?;
    let count = cfg.gaussian.samples;
    if count < 2 {
        return Err(CliError::Config(
            "sample-gaussian needs at least two samples".into(),
        ));
    }
    let samples = sample_gaussian_many(&cfg.gaussian.spec(), shape, cfg.seed, count)?;
    write_samples(out, &samples)?;
    let s = sample_stats(&samples, cfg.stats.xi, cfg.stats.a)?;
    out.write_json("stats.json", &s)?;
    let mut checks = vec![uniformity_check(&s.moments)];
    let mut results = stats_results(&s);
    if let SpectralDensity::Flat { .. } = cfg.gaussian.density {
        let (r, se) = kurtosis_jackknife(&samples);
        results["kurtosis_ratio"] = json!(r);
        checks.push(Check::new(
            "gaussian_law",
            "complex Gaussian fourth moment is twice the squared second moment",
            (r - 2.0).abs() <= SE_MULTIPLE * se,
            format!("ratio {r:.6} +- {se:.6}"),
        ));
    }
    Ok(Outcome::new(results, checks))
}

/// Site-averaged moment per sample, batched within chain halves.
fn half_batches(chain: &[Field], xi: f64) -> (Vec<f64>, Vec<f64>) {
    let m: Vec<f64> = chain
        .iter()
        .map(|f| {
            f.values().iter().map(|v| v.norm().powf(xi)).sum::<f64>() / f.values().len() as f64
        })
        .collect();
    let half = m.len() / 2;
    let batch = |v: &[f64]| -> Vec<f64> {
        v.chunks_exact(BATCH)
            .map(|c| c.iter().sum::<f64>() / BATCH as f64)
            .collect()
    };
    (batch(&m[..half]), batch(&m[half..2 * half]))
}

fn gibbs(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    let shape = cfg.shape()?;
    let pot = cfg.potential()?;
    let g = cfg.gibbs;
    if g.chains == 0 || g.samples_per_chain == 0 {
        return Err(CliError::Config(
            "sample-gibbs needs chains and samples_per_chain of at least 1".into(),
        ));
    }
    let mut spec = g.spec();
    spec.validate()?;
    if g.tune_rounds > 0 {
        let seed = derive_seed(cfg.seed, TUNING_STREAM);
        spec = tune_proposal(
            &spec,
            &pot,
            shape,
            seed,
            g.target_acceptance,
            g.tune_rounds,
            20,
        )?;
    }
    let runs = sample_gibbs_chains(&spec, &pot, shape, cfg.seed, g.chains, g.samples_per_chain)?;
    let acceptance: Vec<f64> = runs.iter().map(acceptance_diag).collect();
    let samples: Vec<Field> = runs
        .iter()
        .flat_map(|r| r.samples.iter().cloned())
        .collect();
    write_samples(out, &samples)?;
    let mut checks = Vec::new();
    let mut results = json!({ "proposal_sigma": spec.proposal_sigma, "acceptance": acceptance });
    if samples.len() >= 2 {
        let s = sample_stats(&samples, cfg.stats.xi, cfg.stats.a)?;
        out.write_json("stats.json", &s)?;
        let chains: Vec<&[Field]> = runs.iter().map(|r| r.samples.as_slice()).collect();
        let m = if chains.len() >= 2 {
            moment_sup_grouped(&chains, cfg.stats.xi)?
        } else {
            s.moments.clone()
        };
        checks.push(uniformity_check(&m));
        if let Value::Object(m) = stats_results(&s) {
            results.as_object_mut().expect("object").extend(m);
        }
    }
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for r in &runs {
        let (a, b) = half_batches(&r.samples, cfg.stats.xi);
        first.extend(a);
        second.extend(b);
    }
    if first.len() >= 2 {
        let (m1, s1) = mean_se(&first);
        let (m2, s2) = mean_se(&second);
        let se = s1.hypot(s2);
        checks.push(Check::new(
            "stationarity",
            "first and second halves of each chain agree",
            (m1 - m2).abs() <= SE_MULTIPLE * se,
            format!("site-averaged moment {m1:e} vs {m2:e} (se {se:e})"),
        ));
    }
    Ok(Outcome::new(results, checks))
}

fn stats(cfg: &RunConfig, out: &mut RunWriter) -> Result<Outcome, CliError> {
    let dir = cfg.stats.input.as_ref().ok_or_else(|| {
        CliError::Config("stats needs stats.input, a directory of field dumps".into())
    })?;
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    if paths.len() < 2 {
        return Err(CliError::Config(format!(
            "{} holds fewer than two field dumps",
            dir.display()
        )));
    }
    let samples = paths
        .iter()
        .map(|p| read_field(p))
        .collect::<Result<Vec<_>, _>>()?;
    let s = sample_stats(&samples, cfg.stats.xi, cfg.stats.a)?;
    out.write_json("stats.json", &s)?;
    Ok(Outcome::new(
        stats_results(&s),
        vec![uniformity_check(&s.moments)],
    ))
}
