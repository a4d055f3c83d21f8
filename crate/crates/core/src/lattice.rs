//! Periodic box geometry, fields on the box, and deterministic initial data on Z^d.
//!
//! The box of half-width `L` holds the sites `{-L, ..., L}^d` with addition taken
//! modulo the odd side `2L + 1`. Fields are stored row-major over the coordinates
//! shifted into `[0, 2L + 1)`, first coordinate most significant.

use std::fmt;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("lattice dimension must be at least 1")]
    ZeroDimension,
    #[error("site {coords:?} is not in the box of half-width {half_width} (dimension {dim})")]
    InvalidSite {
        coords: Vec<i64>,
        dim: usize,
        half_width: usize,
    },
    #[error("expected {expected} field values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("non-finite field value at site {0:?}")]
    NonFinite(Vec<i64>),
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(LatticeShape, LatticeShape),
    #[error("field dump parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LatticeError {
    fn from(e: std::io::Error) -> Self {
        LatticeError::Io(e.to_string())
    }
}

/// The periodic box `Λ_L = {-L, ..., L}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeShape {
    dim: usize,
    half_width: usize,
}

impl fmt::Display for LatticeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d={} L={}", self.dim, self.half_width)
    }
}

impl LatticeShape {
    pub fn new(dim: usize, half_width: usize) -> Result<Self, LatticeError> {
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        Ok(Self { dim, half_width })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Side length `2L + 1`, always odd.
    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn volume(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn contains(&self, coords: &[i64]) -> bool {
        let l = self.half_width as i64;
        coords.len() == self.dim && coords.iter().all(|&c| -l <= c && c <= l)
    }

    pub fn check(&self, site: &Site) -> Result<(), LatticeError> {
        if self.contains(site.coords()) {
            Ok(())
        } else {
            Err(LatticeError::InvalidSite {
                coords: site.coords().to_vec(),
                dim: self.dim,
                half_width: self.half_width,
            })
        }
    }

    /// Representative of `z` modulo `2L + 1` in `[-L, L]`.
    pub fn reduce(&self, z: i64) -> i64 {
        let s = self.side() as i64;
        let l = self.half_width as i64;
        (z + l).rem_euclid(s) - l
    }

    pub fn reduce_coords(&self, z: &[i64]) -> Site {
        Site(z.iter().map(|&c| self.reduce(c)).collect())
    }

    /// Storage index of in-box coordinates. Caller guarantees `contains`.
    pub(crate) fn index_unchecked(&self, coords: &[i64]) -> usize {
        let s = self.side();
        let l = self.half_width as i64;
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * s + (c + l) as usize)
    }

    /// Storage index of an arbitrary point of Z^d after periodic reduction.
    pub(crate) fn index_wrapped(&self, z: &[i64]) -> usize {
        let s = self.side() as i64;
        let l = self.half_width as i64;
        z.iter().fold(0usize, |acc, &c| {
            acc * s as usize + (c + l).rem_euclid(s) as usize
        })
    }

    pub fn index_of(&self, site: &Site) -> Result<usize, LatticeError> {
        self.check(site)?;
        Ok(self.index_unchecked(site.coords()))
    }

    pub(crate) fn coords_into(&self, mut index: usize, out: &mut [i64]) {
        let s = self.side();
        let l = self.half_width as i64;
        for c in out.iter_mut().rev() {
            *c = (index % s) as i64 - l;
            index /= s;
        }
    }

    pub fn site_at(&self, index: usize) -> Site {
        let mut coords = vec![0; self.dim];
        self.coords_into(index, &mut coords);
        Site(coords)
    }

    /// All sites in storage order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.volume()).map(move |i| self.site_at(i))
    }

    pub fn origin(&self) -> Site {
        Site(vec![0; self.dim])
    }

    /// Coordinatewise `x + y` reduced modulo `2L + 1` into `[-L, L]`.
    pub fn wrap_add(&self, x: &Site, y: &Site) -> Result<Site, LatticeError> {
        self.check(x)?;
        self.check(y)?;
        Ok(Site(
            x.0.iter()
                .zip(&y.0)
                .map(|(&a, &b)| self.reduce(a + b))
                .collect(),
        ))
    }

    pub fn wrap_sub(&self, x: &Site, y: &Site) -> Result<Site, LatticeError> {
        self.check(x)?;
        self.check(y)?;
        Ok(Site(
            x.0.iter()
                .zip(&y.0)
                .map(|(&a, &b)| self.reduce(a - b))
                .collect(),
        ))
    }

    pub(crate) fn torus_dist_unchecked(&self, x: &[i64], y: &[i64]) -> i64 {
        let s = self.side() as i64;
        x.iter()
            .zip(y)
            .map(|(&a, &b)| {
                let d = (a - b).abs();
                d.min(s - d)
            })
            .max()
            .unwrap_or(0)
    }

    /// Minimum-image sup-norm distance on the torus; lies in `[0, L]`.
    pub fn torus_dist_inf(&self, x: &Site, y: &Site) -> Result<i64, LatticeError> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.torus_dist_unchecked(x.coords(), y.coords()))
    }

    /// Sites within torus distance `r` of `x`, each listed once.
    pub fn ball(&self, x: &Site, r: usize) -> Result<Vec<Site>, LatticeError> {
        self.check(x)?;
        let r = r.min(self.half_width) as i64;
        let width = (2 * r + 1) as usize;
        let count = width.pow(self.dim as u32);
        let mut out = Vec::with_capacity(count);
        let mut offset = vec![0i64; self.dim];
        for n in 0..count {
            let mut rem = n;
            for c in offset.iter_mut().rev() {
                *c = (rem % width) as i64 - r;
                rem /= width;
            }
            out.push(Site(
                x.0.iter()
                    .zip(&offset)
                    .map(|(&a, &b)| self.reduce(a + b))
                    .collect(),
            ));
        }
        Ok(out)
    }
}

/// A lattice point, either in a box or in Z^d depending on context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site(coords)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// `⟨x⟩ = (1 + |x|²)^{1/2}` with the Euclidean norm.
    pub fn japanese_bracket(&self) -> f64 {
        japanese_bracket(&self.0)
    }
}

impl From<Vec<i64>> for Site {
    fn from(v: Vec<i64>) -> Self {
        Site(v)
    }
}

pub(crate) fn japanese_bracket(coords: &[i64]) -> f64 {
    let r2: f64 = coords.iter().map(|&c| (c as f64) * (c as f64)).sum();
    (1.0 + r2).sqrt()
}

/// A complex amplitude on every site of a periodic box.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: LatticeShape,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(shape: LatticeShape, values: Vec<Complex64>) -> Result<Self, LatticeError> {
        if values.len() != shape.volume() {
            return Err(LatticeError::WrongLength {
                expected: shape.volume(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LatticeError::NonFinite(shape.site_at(i).0));
        }
        Ok(Self { shape, values })
    }

    /// Skips the finiteness scan; used by integrators that check separately.
    pub(crate) fn from_raw(shape: LatticeShape, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), shape.volume());
        Self { shape, values }
    }

    pub fn zeros(shape: LatticeShape) -> Self {
        Self::from_raw(shape, vec![Complex64::new(0.0, 0.0); shape.volume()])
    }

    pub fn constant(shape: LatticeShape, c: Complex64) -> Result<Self, LatticeError> {
        Self::new(shape, vec![c; shape.volume()])
    }

    pub fn delta(
        shape: LatticeShape,
        at: &Site,
        amplitude: Complex64,
    ) -> Result<Self, LatticeError> {
        let idx = shape.index_of(at)?;
        let mut f = Self::zeros(shape);
        f.values[idx] = amplitude;
        Field::new(shape, f.values)
    }

    pub fn from_fn<F>(shape: LatticeShape, mut f: F) -> Result<Self, LatticeError>
    where
        F: FnMut(&[i64]) -> Complex64,
    {
        let mut coords = vec![0; shape.dim()];
        let values = (0..shape.volume())
            .map(|i| {
                shape.coords_into(i, &mut coords);
                f(&coords)
            })
            .collect();
        Self::new(shape, values)
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, site: &Site) -> Result<Complex64, LatticeError> {
        Ok(self.values[self.shape.index_of(site)?])
    }

    /// Value of the periodic extension at an arbitrary point of Z^d.
    pub fn embed_lookup(&self, z: &[i64]) -> Complex64 {
        self.values[self.shape.index_wrapped(z)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Sup-norm distance to another field on the same box.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64, LatticeError> {
        if self.shape != other.shape {
            return Err(LatticeError::ShapeMismatch(self.shape, other.shape));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Writes the `d L` header and one `x1 … xd re im` line per site.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<(), LatticeError> {
        writeln!(w, "{} {}", self.shape.dim, self.shape.half_width)?;
        let mut coords = vec![0; self.shape.dim];
        for (i, v) in self.values.iter().enumerate() {
            self.shape.coords_into(i, &mut coords);
            for c in &coords {
                write!(w, "{c} ")?;
            }
            writeln!(w, "{:e} {:e}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn to_dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ascii")
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self, LatticeError> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(LatticeError::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let header = header?;
        let mut it = header.split_whitespace();
        let parse_usize = |s: Option<&str>, what: &str| -> Result<usize, LatticeError> {
            s.ok_or_else(|| LatticeError::Parse {
                line: 1,
                msg: format!("missing {what}"),
            })?
            .parse()
            .map_err(|e| LatticeError::Parse {
                line: 1,
                msg: format!("bad {what}: {e}"),
            })
        };
        let dim = parse_usize(it.next(), "d")?;
        let half_width = parse_usize(it.next(), "L")?;
        let shape = LatticeShape::new(dim, half_width)?;
        let mut values = vec![Complex64::new(0.0, 0.0); shape.volume()];
        let mut seen = vec![false; shape.volume()];
        for (n, line) in lines {
            let line = line?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            let perr = |msg: String| LatticeError::Parse { line: n + 1, msg };
            if toks.len() != dim + 2 {
                return Err(perr(format!(
                    "expected {} columns, got {}",
                    dim + 2,
                    toks.len()
                )));
            }
            let coords = toks[..dim]
                .iter()
                .map(|t| t.parse::<i64>().map_err(|e| perr(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            if !shape.contains(&coords) {
                return Err(perr(format!("site {coords:?} outside the box")));
            }
            let re: f64 = toks[dim].parse().map_err(|e| perr(format!("{e}")))?;
            let im: f64 = toks[dim + 1].parse().map_err(|e| perr(format!("{e}")))?;
            let idx = shape.index_unchecked(&coords);
            values[idx] = Complex64::new(re, im);
            seen[idx] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(LatticeError::Parse {
                line: 0,
                msg: format!("missing site {:?}", shape.site_at(i).0),
            });
        }
        Field::new(shape, values)
    }
}

/// Deterministic initial data on Z^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    Constant {
        value: Complex64,
    },
    Delta {
        site: Vec<i64>,
        amplitude: Complex64,
    },
    /// `amplitude · exp(i 2π k·z)`, with `k` in cycles per site.
    PlaneWave {
        wavevector: Vec<f64>,
        amplitude: Complex64,
    },
    /// `scale · ⟨z⟩^exponent · u(z)` with `|u| ≤ 1` drawn from a counter-based
    /// hash of `(seed, z)`.
    PowerEnvelope {
        exponent: f64,
        scale: f64,
        seed: u64,
    },
}

impl InitialData {
    pub fn value(&self, z: &[i64]) -> Complex64 {
        match self {
            InitialData::Constant { value } => *value,
            InitialData::Delta { site, amplitude } => {
                if site.as_slice() == z {
                    *amplitude
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            InitialData::PlaneWave {
                wavevector,
                amplitude,
            } => {
                let phase: f64 = wavevector
                    .iter()
                    .zip(z)
                    .map(|(k, &c)| k * c as f64)
                    .sum::<f64>()
                    * std::f64::consts::TAU;
                amplitude * Complex64::from_polar(1.0, phase)
            }
            InitialData::PowerEnvelope {
                exponent,
                scale,
                seed,
            } => {
                let (u1, u2) = site_uniforms(*seed, z);
                let radius = u1.sqrt();
                let u = Complex64::from_polar(radius, std::f64::consts::TAU * u2);
                scale * japanese_bracket(z).powf(*exponent) * u
            }
        }
    }

    /// Exponent `p` of the declared bound `|ψ(z)| ≤ C ⟨z⟩^p`.
    pub fn envelope_exponent(&self) -> f64 {
        match self {
            InitialData::PowerEnvelope { exponent, .. } => *exponent,
            _ => 0.0,
        }
    }

    /// Constant `C` of the declared bound `|ψ(z)| ≤ C ⟨z⟩^p`.
    pub fn envelope_constant(&self) -> f64 {
        match self {
            InitialData::Constant { value } => value.norm(),
            InitialData::Delta { amplitude, .. } => amplitude.norm(),
            InitialData::PlaneWave { amplitude, .. } => amplitude.norm(),
            InitialData::PowerEnvelope { scale, .. } => scale.abs(),
        }
    }
}

/// Restriction of Z^d initial data to the box.
pub fn truncate(gen: &InitialData, shape: LatticeShape) -> Result<Field, LatticeError> {
    Field::from_fn(shape, |z| gen.value(z))
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for stream `index` of a parent seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

fn site_uniforms(seed: u64, z: &[i64]) -> (f64, f64) {
    let mut h = splitmix64(seed);
    for &c in z {
        h = splitmix64(h ^ (c as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    }
    let a = splitmix64(h);
    let b = splitmix64(a);
    let to_unit = |v: u64| (v >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (to_unit(a), to_unit(b))
}
