//! Finite-range symmetric hopping kernels, periodic convolution and the Fourier
//! dispersion relation of the linear part of the dynamics.

use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::{Field, LatticeError, LatticeShape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoppingError {
    #[error("hopping kernel needs dimension at least 1")]
    ZeroDimension,
    #[error("expected {expected} coefficients for range {range} in dimension {dim}, got {got}")]
    WrongLength {
        dim: usize,
        range: usize,
        expected: usize,
        got: usize,
    },
    #[error("kernel is not symmetric: α({offset:?}) = {value} but α(-y) = {mirror}")]
    Asymmetric {
        offset: Vec<i64>,
        value: f64,
        mirror: f64,
    },
    #[error("non-finite kernel coefficient at offset {0:?}")]
    NonFinite(Vec<i64>),
    #[error("offset {offset:?} lies outside range {range}")]
    OffsetOutOfRange { offset: Vec<i64>, range: usize },
    #[error("kernel of range {range} does not fit in a box of half-width {half_width}")]
    KernelTooLarge { range: usize, half_width: usize },
    #[error("kernel dimension {kernel} does not match lattice dimension {lattice}")]
    DimensionMismatch { kernel: usize, lattice: usize },
    #[error("kernel file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

impl From<std::io::Error> for HoppingError {
    fn from(e: std::io::Error) -> Self {
        HoppingError::Io(e.to_string())
    }
}

/// A real kernel `α` supported on offsets `[-ℓ, ℓ]^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoppingPotential {
    dim: usize,
    range: usize,
    coeffs: Vec<f64>,
}

impl HoppingPotential {
    /// Builds and validates a kernel from its dense coefficient table.
    pub fn new(dim: usize, range: usize, coeffs: Vec<f64>) -> Result<Self, HoppingError> {
        if dim == 0 {
            return Err(HoppingError::ZeroDimension);
        }
        let expected = (2 * range + 1).pow(dim as u32);
        if coeffs.len() != expected {
            return Err(HoppingError::WrongLength {
                dim,
                range,
                expected,
                got: coeffs.len(),
            });
        }
        let pot = Self { dim, range, coeffs };
        pot.validate()?;
        Ok(pot)
    }

    /// Builds a kernel from sparse `(offset, value)` entries; other offsets are zero.
    pub fn from_entries(
        dim: usize,
        range: usize,
        entries: &[(Vec<i64>, f64)],
    ) -> Result<Self, HoppingError> {
        if dim == 0 {
            return Err(HoppingError::ZeroDimension);
        }
        let width = 2 * range + 1;
        let mut coeffs = vec![0.0; width.pow(dim as u32)];
        for (offset, value) in entries {
            let idx =
                offset_index(dim, range, offset).ok_or_else(|| HoppingError::OffsetOutOfRange {
                    offset: offset.clone(),
                    range,
                })?;
            coeffs[idx] = *value;
        }
        Self::new(dim, range, coeffs)
    }

    /// `α(0) = 1`, `α(y) = -1/(2d)` for every `|y|_∞ = 1` (sup-norm neighbourhood,
    /// which includes diagonal offsets when `d ≥ 2`).
    pub fn standard_laplacian(dim: usize) -> Result<Self, HoppingError> {
        if dim == 0 {
            return Err(HoppingError::ZeroDimension);
        }
        let n = 3usize.pow(dim as u32);
        let centre = n / 2;
        let coeffs = (0..n)
            .map(|i| {
                if i == centre {
                    1.0
                } else {
                    -1.0 / (2.0 * dim as f64)
                }
            })
            .collect();
        Self::new(dim, 1, coeffs)
    }

    /// `α(0) = 1`, `α(±e_i) = -1/(2d)`: the ℓ¹ nearest-neighbour Laplacian.
    pub fn nearest_neighbor_laplacian(dim: usize) -> Result<Self, HoppingError> {
        if dim == 0 {
            return Err(HoppingError::ZeroDimension);
        }
        let mut entries = vec![(vec![0; dim], 1.0)];
        for axis in 0..dim {
            for sign in [-1, 1] {
                let mut y = vec![0; dim];
                y[axis] = sign;
                entries.push((y, -1.0 / (2.0 * dim as f64)));
            }
        }
        Self::from_entries(dim, 1, &entries)
    }

    /// The kernel `α ≡ 0`; the dynamics reduces to independent onsite rotations.
    pub fn zero(dim: usize) -> Result<Self, HoppingError> {
        Self::new(dim, 0, vec![0.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn coefficient(&self, offset: &[i64]) -> f64 {
        offset_index(self.dim, self.range, offset)
            .map(|i| self.coeffs[i])
            .unwrap_or(0.0)
    }

    /// Symmetry `α(y) = α(-y)` and finiteness of every coefficient.
    pub fn validate(&self) -> Result<(), HoppingError> {
        for (i, &v) in self.coeffs.iter().enumerate() {
            if !v.is_finite() {
                return Err(HoppingError::NonFinite(self.offset_at(i)));
            }
        }
        let n = self.coeffs.len();
        for i in 0..n {
            // the table is point-symmetric about its centre: -y sits at n-1-i
            let (v, m) = (self.coeffs[i], self.coeffs[n - 1 - i]);
            if v != m {
                return Err(HoppingError::Asymmetric {
                    offset: self.offset_at(i),
                    value: v,
                    mirror: m,
                });
            }
        }
        Ok(())
    }

    /// `‖α‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.coeffs.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn offsets(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.offset_at(i), v))
    }

    /// Offsets carrying a nonzero coefficient, in storage order.
    pub fn nonzero_offsets(&self) -> Vec<(Vec<i64>, f64)> {
        self.offsets().filter(|(_, v)| *v != 0.0).collect()
    }

    fn offset_at(&self, mut i: usize) -> Vec<i64> {
        let width = 2 * self.range + 1;
        let mut y = vec![0; self.dim];
        for c in y.iter_mut().rev() {
            *c = (i % width) as i64 - self.range as i64;
            i /= width;
        }
        y
    }

    /// Whether `2ℓ + 1 ≤ 2L + 1`, i.e. the kernel does not overlap itself on the torus.
    pub fn fits(&self, shape: LatticeShape) -> bool {
        self.range <= shape.half_width()
    }

    pub fn check_fits(&self, shape: LatticeShape) -> Result<(), HoppingError> {
        if self.dim != shape.dim() {
            return Err(HoppingError::DimensionMismatch {
                kernel: self.dim,
                lattice: shape.dim(),
            });
        }
        if !self.fits(shape) {
            return Err(HoppingError::KernelTooLarge {
                range: self.range,
                half_width: shape.half_width(),
            });
        }
        Ok(())
    }

    /// Writes the `d ell` header and one `y1 … yd alpha` line per nonzero offset.
    pub fn write_kernel<W: Write>(&self, mut w: W) -> Result<(), HoppingError> {
        writeln!(w, "{} {}", self.dim, self.range)?;
        for (y, v) in self.nonzero_offsets() {
            for c in &y {
                write!(w, "{c} ")?;
            }
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    pub fn to_kernel_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_kernel(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii")
    }

    /// Reads the kernel file format; rejects asymmetric kernels.
    pub fn read_kernel<R: BufRead>(r: R) -> Result<Self, HoppingError> {
        let mut dim = None;
        let mut range = 0usize;
        let mut entries = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() || toks[0].starts_with('#') {
                continue;
            }
            let perr = |msg: String| HoppingError::Parse { line: n + 1, msg };
            match dim {
                None => {
                    if toks.len() != 2 {
                        return Err(perr("header must be `d ell`".into()));
                    }
                    dim = Some(toks[0].parse::<usize>().map_err(|e| perr(e.to_string()))?);
                    range = toks[1].parse::<usize>().map_err(|e| perr(e.to_string()))?;
                }
                Some(d) => {
                    if toks.len() != d + 1 {
                        return Err(perr(format!("expected {} columns", d + 1)));
                    }
                    let y = toks[..d]
                        .iter()
                        .map(|t| t.parse::<i64>().map_err(|e| perr(e.to_string())))
                        .collect::<Result<Vec<_>, _>>()?;
                    let v: f64 = toks[d].parse().map_err(|e| perr(format!("{e}")))?;
                    entries.push((y, v));
                }
            }
        }
        let dim = dim.ok_or(HoppingError::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        Self::from_entries(dim, range, &entries)
    }

    /// Hex SHA-256 of the kernel file serialisation.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_kernel_string().as_bytes()))
    }
}

fn offset_index(dim: usize, range: usize, offset: &[i64]) -> Option<usize> {
    if offset.len() != dim {
        return None;
    }
    let r = range as i64;
    let width = 2 * range + 1;
    let mut idx = 0;
    for &c in offset {
        if c < -r || c > r {
            return None;
        }
        idx = idx * width + (c + r) as usize;
    }
    Some(idx)
}

/// Precomputed periodic stencil: for each nonzero offset `z`, the weight `α(z)`
/// and the storage index of `x - z` for every site `x`.
#[derive(Debug, Clone)]
pub struct Stencil {
    shape: LatticeShape,
    taps: Vec<Tap>,
}

#[derive(Debug, Clone)]
struct Tap {
    weight: f64,
    source: Vec<usize>,
}

impl Stencil {
    pub fn new(pot: &HoppingPotential, shape: LatticeShape) -> Result<Self, HoppingError> {
        pot.check_fits(shape)?;
        Ok(Self::build(pot, shape))
    }

    /// Stencil of the kernel precomposed with the box embedding: offsets outside
    /// `[-L, L]^d` are dropped. Equal to [`Stencil::new`] whenever the kernel fits.
    pub fn restricted(pot: &HoppingPotential, shape: LatticeShape) -> Result<Self, HoppingError> {
        if pot.dim() != shape.dim() {
            return Err(HoppingError::DimensionMismatch {
                kernel: pot.dim(),
                lattice: shape.dim(),
            });
        }
        Ok(Self::build(pot, shape))
    }

    fn build(pot: &HoppingPotential, shape: LatticeShape) -> Self {
        let mut coords = vec![0i64; shape.dim()];
        let mut shifted = vec![0i64; shape.dim()];
        let taps = pot
            .nonzero_offsets()
            .into_iter()
            .filter(|(z, _)| shape.contains(z))
            .map(|(offset, weight)| {
                let source = (0..shape.volume())
                    .map(|i| {
                        shape.coords_into(i, &mut coords);
                        for ((s, c), o) in shifted.iter_mut().zip(&coords).zip(&offset) {
                            *s = c - o;
                        }
                        shape.index_wrapped(&shifted)
                    })
                    .collect();
                Tap { weight, source }
            })
            .collect();
        Self { shape, taps }
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `out(x) = Σ_z α(z) input(x - z)`.
    pub fn apply(&self, input: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for tap in &self.taps {
            for (o, &src) in out.iter_mut().zip(&tap.source) {
                *o += tap.weight * input[src];
            }
        }
    }

    /// Convolution evaluated at a single storage index.
    pub fn apply_at(&self, input: &[Complex64], x: usize) -> Complex64 {
        self.taps
            .iter()
            .map(|tap| tap.weight * input[tap.source[x]])
            .sum()
    }

    /// `(index of x - z, α(z))` over the nonzero offsets.
    pub(crate) fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.taps.iter().map(move |t| (t.source[x], t.weight))
    }
}

/// Periodic convolution `(α * ψ)(x) = Σ_y α(x - y) ψ(y)` by direct stencil.
pub fn convolve(pot: &HoppingPotential, field: &Field) -> Result<Field, HoppingError> {
    let stencil = Stencil::new(pot, field.shape())?;
    let mut out = vec![Complex64::new(0.0, 0.0); field.values().len()];
    stencil.apply(field.values(), &mut out);
    Ok(Field::from_raw(field.shape(), out))
}

/// Multi-dimensional DFT over the storage index, one axis at a time.
/// Forward is unnormalised with `e^{-i2π k·j/S}`; inverse carries `1/V`.
#[derive(Clone)]
pub struct FourierPlan {
    shape: LatticeShape,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierPlan")
            .field("shape", &self.shape)
            .finish()
    }
}

impl FourierPlan {
    pub fn new(shape: LatticeShape) -> Self {
        let mut planner = FftPlanner::new();
        let s = shape.side();
        Self {
            shape,
            forward: planner.plan_fft_forward(s),
            inverse: planner.plan_fft_inverse(s),
        }
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(&self.forward, data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(&self.inverse, data);
        let scale = 1.0 / self.shape.volume() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn transform(&self, fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let s = self.shape.side();
        let v = self.shape.volume();
        debug_assert_eq!(data.len(), v);
        if s == 1 {
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); s];
        let mut stride = 1;
        for _ in 0..self.shape.dim() {
            if stride == 1 {
                fft.process(data);
            } else {
                let block = stride * s;
                for start in (0..v).step_by(block) {
                    for inner in 0..stride {
                        let base = start + inner;
                        for (k, l) in line.iter_mut().enumerate() {
                            *l = data[base + k * stride];
                        }
                        fft.process(&mut line);
                        for (k, l) in line.iter().enumerate() {
                            data[base + k * stride] = *l;
                        }
                    }
                }
            }
            stride *= s;
        }
    }
}

/// `ω(k) = Σ_y α(y) cos(2π k·y / (2L + 1))` on the dual box.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispersion {
    shape: LatticeShape,
    // indexed by DFT index, i.e. k reduced into [0, S)
    values: Vec<f64>,
}

impl Dispersion {
    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    /// `ω(k)` for a mode `k` given in any representative; periodic in each coordinate.
    pub fn value(&self, k: &[i64]) -> f64 {
        let s = self.shape.side() as i64;
        let idx = k.iter().fold(0usize, |acc, &c| {
            acc * s as usize + c.rem_euclid(s) as usize
        });
        self.values[idx]
    }

    /// Values in DFT index order, matching [`FourierPlan`] output.
    pub fn dft_values(&self) -> &[f64] {
        &self.values
    }
}

pub fn dispersion(pot: &HoppingPotential, shape: LatticeShape) -> Result<Dispersion, HoppingError> {
    pot.check_fits(shape)?;
    let s = shape.side();
    let taps = pot.nonzero_offsets();
    let mut k = vec![0i64; shape.dim()];
    let values = (0..shape.volume())
        .map(|idx| {
            let mut rem = idx;
            for c in k.iter_mut().rev() {
                *c = (rem % s) as i64;
                rem /= s;
            }
            taps.iter()
                .map(|(y, a)| {
                    let dot: i64 = y.iter().zip(&k).map(|(a, b)| a * b).sum();
                    // reduce before scaling to keep the argument small
                    let m = dot.rem_euclid(s as i64) as f64;
                    a * (std::f64::consts::TAU * m / s as f64).cos()
                })
                .sum()
        })
        .collect();
    Ok(Dispersion { shape, values })
}

/// Convolution through the Fourier route: inverse ∘ multiply-by-ω ∘ forward.
pub fn convolve_fourier(pot: &HoppingPotential, field: &Field) -> Result<Field, HoppingError> {
    let disp = dispersion(pot, field.shape())?;
    let plan = FourierPlan::new(field.shape());
    let mut data = field.values().to_vec();
    plan.forward(&mut data);
    data.iter_mut()
        .zip(disp.dft_values())
        .for_each(|(v, w)| *v *= w);
    plan.inverse(&mut data);
    Ok(Field::from_raw(field.shape(), data))
}
