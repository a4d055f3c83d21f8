//! Run configuration: a JSON document whose sections mirror the flag paths.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::convergence::Pairing;
use crate::dynamics::{Scheme, SchemeConfig};
use crate::hopping::HoppingPotential;
use crate::lattice::{InitialData, LatticeShape};
use crate::observables::WeightSpec;
use crate::sampling::{GaussianSpec, GibbsSpec, SpectralDensity};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Conserve,
    BoundCheck,
    #[serde(rename = "sweep-L")]
    SweepL,
    Uniqueness,
    SampleGaussian,
    SampleGibbs,
    Stats,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Conserve => "conserve",
            Experiment::BoundCheck => "bound-check",
            Experiment::SweepL => "sweep-L",
            Experiment::Uniqueness => "uniqueness",
            Experiment::SampleGaussian => "sample-gaussian",
            Experiment::SampleGibbs => "sample-gibbs",
            Experiment::Stats => "stats",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub observe: ObserveSection,
    #[serde(default)]
    pub conserve: ConserveSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub uniqueness: UniquenessSection,
    #[serde(default)]
    pub gaussian: GaussianSection,
    #[serde(default)]
    pub gibbs: GibbsSection,
    #[serde(default)]
    pub stats: StatsSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("dnls-run")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self { d: 1, l: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSection {
    /// Sup-norm Laplacian: `1` at the origin, `-1/(2d)` on all `3^d - 1` neighbours.
    #[default]
    Laplacian,
    NearestNeighbor,
    Zero,
    /// Kernel file in the `d ℓ` header plus coefficient format.
    File {
        path: PathBuf,
    },
    /// Dense coefficients over `[-ℓ, ℓ]^d`, row-major.
    Dense {
        range: usize,
        coeffs: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSection {
    Constant {
        value: Complex64,
    },
    Delta {
        #[serde(default)]
        site: Option<Vec<i64>>,
        amplitude: Complex64,
    },
    PlaneWave {
        wavevector: Vec<f64>,
        amplitude: Complex64,
    },
    /// Seed defaults to the run seed.
    PowerEnvelope {
        exponent: f64,
        scale: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// One draw of the `gaussian` section's law.
    Gaussian,
    /// A field dump on the configured box.
    Dump {
        path: PathBuf,
    },
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection::Delta {
            site: None,
            amplitude: Complex64::new(1.0, 0.0),
        }
    }
}

impl InitialSection {
    /// Initial data on Z^d, when the section describes one.
    pub fn generator(&self, d: usize, run_seed: u64) -> Option<InitialData> {
        Some(match self {
            InitialSection::Constant { value } => InitialData::Constant { value: *value },
            InitialSection::Delta { site, amplitude } => InitialData::Delta {
                site: site.clone().unwrap_or_else(|| vec![0; d]),
                amplitude: *amplitude,
            },
            InitialSection::PlaneWave {
                wavevector,
                amplitude,
            } => InitialData::PlaneWave {
                wavevector: wavevector.clone(),
                amplitude: *amplitude,
            },
            InitialSection::PowerEnvelope {
                exponent,
                scale,
                seed,
            } => InitialData::PowerEnvelope {
                exponent: *exponent,
                scale: *scale,
                seed: seed.unwrap_or(run_seed),
            },
            InitialSection::Gaussian | InitialSection::Dump { .. } => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub lambda: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Strang,
            dt: 1e-3,
            t_end: 1.0,
            stride: 10,
            lambda: 1.0,
        }
    }
}

impl DynamicsSection {
    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            scheme: self.scheme,
            dt: self.dt,
            t_end: self.t_end,
            snapshot_stride: self.stride,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserveSection {
    pub eps: Vec<f64>,
    /// Probe sites; empty means the origin.
    pub sites: Vec<Vec<i64>>,
    pub c_const: f64,
    pub weight: Option<WeightSpec>,
    /// Write every snapshot under `fields/` (simulate only).
    pub dump_fields: bool,
}

impl Default for ObserveSection {
    fn default() -> Self {
        Self {
            eps: vec![0.1],
            sites: Vec::new(),
            c_const: 2.0,
            weight: None,
            dump_fields: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConserveSection {
    /// Bound on `max_t |N_t - N_0| / N_0`.
    pub n_tol: f64,
    /// Bound on `max_t |H_t - H_0| / |H_0|`.
    pub h_tol: f64,
    /// Bound on the error against the exact onsite rotation when `α ≡ 0`.
    pub exact_tol: f64,
}

impl Default for ConserveSection {
    fn default() -> Self {
        Self {
            n_tol: 1e-10,
            h_tol: 1e-4,
            exact_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "L_list")]
    pub l_list: Vec<usize>,
    pub k: usize,
    pub pairing: Pairing,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            l_list: vec![8, 12, 16, 20, 24],
            k: 4,
            pairing: Pairing::Consecutive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessSection {
    pub dts: Vec<f64>,
    pub n: usize,
    /// Smallest accepted fitted order of `δ_n` in `dt`.
    pub min_order: f64,
}

impl Default for UniquenessSection {
    fn default() -> Self {
        Self {
            dts: vec![4e-3, 2e-3, 1e-3],
            n: 2,
            min_order: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSection {
    pub density: SpectralDensity,
    pub samples: usize,
}

impl Default for GaussianSection {
    fn default() -> Self {
        Self {
            density: SpectralDensity::Flat { variance: 1.0 },
            samples: 100,
        }
    }
}

impl GaussianSection {
    pub fn spec(&self) -> GaussianSpec {
        GaussianSpec {
            density: self.density.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsSection {
    pub beta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub proposal_sigma: f64,
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
    pub samples_per_chain: usize,
    /// Pilot rounds of proposal tuning; zero keeps `proposal_sigma`.
    pub tune_rounds: usize,
    pub target_acceptance: f64,
}

impl Default for GibbsSection {
    fn default() -> Self {
        Self {
            beta: 1.0,
            mu: -1.0,
            lambda: 1.0,
            proposal_sigma: 0.5,
            burn_in: 1000,
            thinning: 5,
            chains: 32,
            samples_per_chain: 20,
            tune_rounds: 20,
            target_acceptance: 0.3,
        }
    }
}

impl GibbsSection {
    pub fn spec(&self) -> GibbsSpec {
        GibbsSpec {
            beta: self.beta,
            mu: self.mu,
            lambda: self.lambda,
            proposal_sigma: self.proposal_sigma,
            burn_in: self.burn_in,
            thinning: self.thinning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub xi: f64,
    pub a: f64,
    /// Directory of field dumps read by the `stats` experiment.
    pub input: Option<PathBuf>,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            xi: 3.5,
            a: 2.0 / 0.9,
            input: None,
        }
    }
}

impl RunConfig {
    /// Builds the configuration from an optional file plus overrides applied in
    /// order, each a dotted path and a value.
    pub fn assemble(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let mut doc = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for (path, value) in overrides {
            set_path(&mut doc, path, value.clone())?;
        }
        if doc.get("experiment").is_none() {
            return Err(CliError::Config("no experiment given".into()));
        }
        serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn shape(&self) -> Result<LatticeShape, CliError> {
        LatticeShape::new(self.lattice.d, self.lattice.l)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn potential(&self) -> Result<HoppingPotential, CliError> {
        let d = self.lattice.d;
        let pot = match &self.kernel {
            KernelSection::Laplacian => HoppingPotential::standard_laplacian(d),
            KernelSection::NearestNeighbor => HoppingPotential::nearest_neighbor_laplacian(d),
            KernelSection::Zero => HoppingPotential::zero(d),
            KernelSection::Dense { range, coeffs } => {
                HoppingPotential::new(d, *range, coeffs.clone())
            }
            KernelSection::File { path } => {
                let f = std::fs::File::open(path).map_err(|e| {
                    CliError::Config(format!("cannot open {}: {e}", path.display()))
                })?;
                HoppingPotential::read_kernel(std::io::BufReader::new(f))
            }
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        if pot.dim() != d {
            return Err(CliError::Config(format!(
                "kernel dimension {} does not match lattice dimension {d}",
                pot.dim()
            )));
        }
        Ok(pot)
    }

    /// Probe sites, defaulting to the origin.
    pub fn probe_sites(&self) -> Vec<Vec<i64>> {
        if self.observe.sites.is_empty() {
            vec![vec![0; self.lattice.d]]
        } else {
            self.observe.sites.clone()
        }
    }
}

/// Sets `doc.a.b.c = value`, creating objects along the way.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!(
            "malformed override path `{path}`"
        )));
    }
    for (i, key) in keys.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            _ => {
                return Err(CliError::Config(format!(
                    "override `{path}`: `{}` is not a section",
                    keys[..i].join(".")
                )))
            }
        };
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Flag values are JSON when they parse as JSON and strings otherwise.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_sections() {
        let mut doc = json!({"experiment": "simulate"});
        set_path(&mut doc, "dynamics.dt", json!(0.01)).unwrap();
        assert_eq!(doc["dynamics"]["dt"], json!(0.01));
        assert!(set_path(&mut doc, "dynamics.dt.x", json!(1)).is_err());
        assert!(set_path(&mut doc, "a..b", json!(1)).is_err());
    }

    #[test]
    fn values_fall_back_to_strings() {
        assert_eq!(parse_value("1e-3"), json!(1e-3));
        assert_eq!(parse_value("[1,2]"), json!([1, 2]));
        assert_eq!(parse_value("rk4"), json!("rk4"));
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = RunConfig::assemble(None, &[("experiment".into(), json!("sweep-L"))]).unwrap();
        assert_eq!(cfg.experiment, Experiment::SweepL);
        assert_eq!(cfg.lattice, LatticeSection::default());
        let back = serde_json::to_value(&cfg).unwrap();
        assert_eq!(back["experiment"], json!("sweep-L"));
        assert_eq!(back["sweep"]["L_list"], json!([8, 12, 16, 20, 24]));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let o = [
            ("experiment".to_string(), json!("simulate")),
            ("dynamics.dtt".to_string(), json!(1.0)),
        ];
        assert!(matches!(
            RunConfig::assemble(None, &o),
            Err(CliError::Config(_))
        ));
        assert!(RunConfig::assemble(None, &[]).is_err());
    }
}
