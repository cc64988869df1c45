//! Uniform torus discretization of ℝⁿ.
//!
//! A [`GridSpec`] describes the torus `[0, 2πT)ⁿ` sampled with
//! `points_per_dim` points per axis. Its dual lattice is `(1/T)ℤⁿ`, so the
//! integer lattice used by the frequency-uniform decomposition embeds
//! exactly whenever `T` is an integer.
//!
//! Frequency-domain samples carry the continuous normalization
//! `f̂(ξ) = ∫ e^{-iξ·x} f(x) dx`, discretized as `cell_volume · DFT`, and the
//! inverse carries the `(2π)^{-n}` factor, so `inverse ∘ forward` is the
//! identity on samples.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions supported by the grid.
pub const MAX_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub points_per_dim: usize,
    pub period: f64,
}

impl GridSpec {
    /// Torus of period `2π·scale` per axis.
    pub fn new(n: usize, points_per_dim: usize, scale: f64) -> Result<Self> {
        Self::with_period(n, points_per_dim, 2.0 * PI * scale)
    }

    pub fn with_period(n: usize, points_per_dim: usize, period: f64) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::Config(format!("dimension n={n} not in 1..={MAX_DIM}")));
        }
        if points_per_dim < 4 || !points_per_dim.is_power_of_two() {
            return Err(Error::Config(format!(
                "points_per_dim={points_per_dim} must be a power of two >= 4"
            )));
        }
        if n == 2 && points_per_dim > 1 << 9 {
            return Err(Error::Config(format!(
                "points_per_dim={points_per_dim} exceeds 512 in two dimensions"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Config(format!("period {period} must be positive")));
        }
        Ok(Self {
            n,
            points_per_dim,
            period,
        })
    }

    /// Scale factor `T` with `period = 2πT`.
    pub fn scale(&self) -> f64 {
        self.period / (2.0 * PI)
    }

    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points_per_dim as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(self.n as i32)
    }

    /// Spacing of the frequency lattice, `1/T`.
    pub fn frequency_step(&self) -> f64 {
        1.0 / self.scale()
    }

    /// Largest representable positive frequency, `(points/2 - 1)/T`.
    pub fn max_frequency(&self) -> f64 {
        (self.points_per_dim / 2 - 1) as f64 * self.frequency_step()
    }

    /// Signed lattice index of FFT bin `k` along one axis.
    pub fn signed_index(&self, k: usize) -> i64 {
        let p = self.points_per_dim;
        if k < p / 2 {
            k as i64
        } else {
            k as i64 - p as i64
        }
    }

    /// FFT bin of a signed lattice index along one axis, if representable
    /// without wrapping.
    pub fn bin_of_signed(&self, j: i64) -> Option<usize> {
        let half = (self.points_per_dim / 2) as i64;
        if j < -half || j >= half {
            return None;
        }
        Some(j.rem_euclid(self.points_per_dim as i64) as usize)
    }

    /// Flat index → per-axis indices (axis 0 is slowest).
    pub fn unflatten(&self, idx: usize) -> [usize; MAX_DIM] {
        let p = self.points_per_dim;
        let mut out = [0usize; MAX_DIM];
        let mut rem = idx;
        for axis in (0..self.n).rev() {
            out[axis] = rem % p;
            rem /= p;
        }
        out
    }

    pub fn flatten(&self, ks: &[usize]) -> usize {
        ks.iter()
            .take(self.n)
            .fold(0usize, |acc, &k| acc * self.points_per_dim + k)
    }

    /// Spatial coordinate of a sample, wrapped into `[-period/2, period/2)`.
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let ks = self.unflatten(idx);
        let h = self.spacing();
        for axis in 0..self.n {
            out[axis] = self.signed_index(ks[axis]) as f64 * h;
        }
    }

    pub fn point_vec(&self, idx: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        self.point(idx, &mut v);
        v
    }

    /// Frequency of a bin.
    pub fn frequency(&self, idx: usize, out: &mut [f64]) {
        let ks = self.unflatten(idx);
        let d = self.frequency_step();
        for axis in 0..self.n {
            out[axis] = self.signed_index(ks[axis]) as f64 * d;
        }
    }

    pub fn frequency_vec(&self, idx: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        self.frequency(idx, &mut v);
        v
    }

    /// Bin holding the frequency `lattice / T` for integer `lattice`.
    pub fn bin_of_lattice(&self, lattice: &[i64]) -> Option<usize> {
        let mut ks = [0usize; MAX_DIM];
        for axis in 0..self.n {
            ks[axis] = self.bin_of_signed(lattice[axis])?;
        }
        Some(self.flatten(&ks[..self.n]))
    }

    /// Bin of the integer frequency `nu` (requires integer scale).
    pub fn bin_of_integer_frequency(&self, nu: &[i64]) -> Option<usize> {
        let t = self.scale();
        let tr = t.round();
        if (t - tr).abs() > 1e-9 {
            return None;
        }
        let scaled: Vec<i64> = nu.iter().map(|&v| v * tr as i64).collect();
        self.bin_of_lattice(&scaled)
    }

    /// Ceiling on the number of dyadic levels whose annuli meet the grid.
    pub fn dyadic_levels(&self) -> usize {
        let r = self.max_frequency() * (self.n as f64).sqrt();
        (r.log2().ceil().max(1.0)) as usize + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Space,
    Frequency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Complex samples on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub samples: Vec<C64>,
    pub domain: Domain,
}

impl GridFunction {
    pub fn zeros(spec: GridSpec, domain: Domain) -> Self {
        Self {
            spec,
            samples: vec![C64::new(0.0, 0.0); spec.len()],
            domain,
        }
    }

    pub fn from_samples(spec: GridSpec, samples: Vec<C64>, domain: Domain) -> Result<Self> {
        if samples.len() != spec.len() {
            return Err(Error::Contract(format!(
                "{} samples for a grid of {}",
                samples.len(),
                spec.len()
            )));
        }
        Ok(Self {
            spec,
            samples,
            domain,
        })
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> C64) -> Self {
        let mut x = vec![0.0; spec.n];
        let samples = (0..spec.len())
            .map(|i| {
                spec.point(i, &mut x);
                f(&x)
            })
            .collect();
        Self {
            spec,
            samples,
            domain: Domain::Space,
        }
    }

    /// Frequency-domain function with `f̂(ξ)` sampled at every bin.
    pub fn from_spectrum_fn(spec: GridSpec, f: impl Fn(&[f64]) -> C64) -> Self {
        let mut xi = vec![0.0; spec.n];
        let samples = (0..spec.len())
            .map(|i| {
                spec.frequency(i, &mut xi);
                f(&xi)
            })
            .collect();
        Self {
            spec,
            samples,
            domain: Domain::Frequency,
        }
    }

    /// Space-domain function from Fourier series coefficients,
    /// `f(x) = Σ c_k e^{iξ_k·x}`.
    pub fn from_series(spec: GridSpec, coefficients: Vec<C64>) -> Result<Self> {
        let vol = spec.volume();
        let hat: Vec<C64> = coefficients.into_iter().map(|c| c * vol).collect();
        let g = Self::from_samples(spec, hat, Domain::Frequency)?;
        transform(&g, Direction::Inverse)
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            spec: self.spec,
            samples: self.samples.iter().map(|v| v * c).collect(),
            domain: self.domain,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            spec: self.spec,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            domain: self.domain,
        })
    }

    pub fn mul_pointwise(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            spec: self.spec,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a * b)
                .collect(),
            domain: self.domain,
        })
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec || self.domain != other.domain {
            return Err(Error::Contract(
                "grid functions live on different grids or domains".into(),
            ));
        }
        Ok(())
    }

    pub fn require(&self, domain: Domain) -> Result<()> {
        if self.domain != domain {
            return Err(Error::Contract(format!(
                "expected a {domain:?}-domain function, got {:?}",
                self.domain
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Relative max deviation `max|a-b| / max(max|b|, tiny)`.
    pub fn relative_error(&self, reference: &Self) -> f64 {
        let diff = self
            .samples
            .iter()
            .zip(&reference.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        diff / reference.max_abs().max(1e-300)
    }

    /// Rotation by whole grid cells, `f(x + shift·h)`.
    pub fn grid_shift(&self, shift: &[i64]) -> Self {
        let spec = self.spec;
        let p = spec.points_per_dim as i64;
        let mut out = vec![C64::new(0.0, 0.0); spec.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let ks = spec.unflatten(i);
            let mut src = [0usize; MAX_DIM];
            for axis in 0..spec.n {
                src[axis] = (ks[axis] as i64 + shift[axis]).rem_euclid(p) as usize;
            }
            *o = self.samples[spec.flatten(&src[..spec.n])];
        }
        Self {
            spec,
            samples: out,
            domain: self.domain,
        }
    }

    /// Translation `f(· + a)` by an arbitrary vector, exact for band-limited
    /// samples (phase shift of the spectrum).
    pub fn translate(&self, a: &[f64]) -> Result<Self> {
        self.require(Domain::Space)?;
        let mut hat = transform(self, Direction::Forward)?;
        modulate_spectrum(&mut hat, a);
        transform(&hat, Direction::Inverse)
    }
}

/// Multiplies a spectrum by `e^{iξ·a}`.
pub fn modulate_spectrum(hat: &mut GridFunction, a: &[f64]) {
    let spec = hat.spec;
    let mut xi = vec![0.0; spec.n];
    for (i, v) in hat.samples.iter_mut().enumerate() {
        spec.frequency(i, &mut xi);
        let phase: f64 = xi.iter().zip(a).map(|(x, y)| x * y).sum();
        *v *= C64::from_polar(1.0, phase);
    }
}

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// Unnormalized n-dimensional DFT in place (row-major, axis 0 slowest).
pub fn fft_nd(data: &mut [C64], n: usize, points: usize, inverse: bool) {
    let fft = plan(points, inverse);
    if n == 1 {
        fft.process(data);
        return;
    }
    // rows (last axis, contiguous)
    for row in data.chunks_mut(points) {
        fft.process(row);
    }
    // columns
    let mut col = vec![C64::new(0.0, 0.0); points];
    for c in 0..points {
        for r in 0..points {
            col[r] = data[r * points + c];
        }
        fft.process(&mut col);
        for r in 0..points {
            data[r * points + c] = col[r];
        }
    }
}

/// Forward (space → frequency) or inverse (frequency → space) transform.
pub fn transform(f: &GridFunction, direction: Direction) -> Result<GridFunction> {
    let spec = f.spec;
    let (expected, target, inverse) = match direction {
        Direction::Forward => (Domain::Space, Domain::Frequency, false),
        Direction::Inverse => (Domain::Frequency, Domain::Space, true),
    };
    if f.domain != expected {
        return Err(Error::Contract(format!(
            "{direction:?} transform needs a {expected:?}-domain input, got {:?}",
            f.domain
        )));
    }
    let mut data = f.samples.clone();
    fft_nd(&mut data, spec.n, spec.points_per_dim, inverse);
    let scale = if inverse {
        1.0 / spec.volume()
    } else {
        spec.cell_volume()
    };
    for v in &mut data {
        *v *= scale;
    }
    Ok(GridFunction {
        spec,
        samples: data,
        domain: target,
    })
}

pub type Evaluator = Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>;

/// A function of frequency, optionally with a known support ball.
#[derive(Clone)]
pub struct SpectrumSampler {
    evaluator: Evaluator,
    pub support_radius: Option<f64>,
}

impl std::fmt::Debug for SpectrumSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumSampler")
            .field("support_radius", &self.support_radius)
            .finish_non_exhaustive()
    }
}

impl SpectrumSampler {
    pub fn new(f: impl Fn(&[f64]) -> C64 + Send + Sync + 'static) -> Self {
        Self {
            evaluator: Arc::new(f),
            support_radius: None,
        }
    }

    pub fn real(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(move |xi| C64::new(f(xi), 0.0))
    }

    pub fn with_support(mut self, radius: f64) -> Self {
        self.support_radius = Some(radius);
        self
    }

    pub fn constant(c: C64) -> Self {
        Self::new(move |_| c)
    }

    pub fn eval(&self, xi: &[f64]) -> C64 {
        if let Some(r) = self.support_radius {
            let norm2: f64 = xi.iter().map(|v| v * v).sum();
            if norm2 > r * r {
                return C64::new(0.0, 0.0);
            }
        }
        (self.evaluator)(xi)
    }

    /// `ξ ↦ self(ξ - shift)`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        shifted(self, shift)
    }
}

/// Multiplies the spectrum of `hat` by `m`.
pub fn multiply_spectrum(hat: &mut GridFunction, m: &SpectrumSampler) {
    let spec = hat.spec;
    let mut xi = vec![0.0; spec.n];
    for (i, v) in hat.samples.iter_mut().enumerate() {
        if *v == C64::new(0.0, 0.0) {
            continue;
        }
        spec.frequency(i, &mut xi);
        *v *= m.eval(&xi);
    }
}

/// `m(D)f = F⁻¹[m · Ff]`.
pub fn apply_multiplier(m: &SpectrumSampler, f: &GridFunction) -> Result<GridFunction> {
    f.require(Domain::Space)?;
    let mut hat = transform(f, Direction::Forward)?;
    multiply_spectrum(&mut hat, m);
    transform(&hat, Direction::Inverse)
}

/// `□_μ f = κ(D - μ) f` for an integer lattice point `μ`.
pub fn box_project(mu: &[i64], kappa: &SpectrumSampler, f: &GridFunction) -> Result<GridFunction> {
    if kappa.support_radius.is_none() {
        return Err(Error::Contract("box window needs a compact support".into()));
    }
    let shift: Vec<f64> = mu.iter().map(|&v| v as f64).collect();
    apply_multiplier(&shifted(kappa, &shift), f)
}

/// `ξ ↦ m(ξ - shift)`. The support ball is not centred at the origin any
/// more, so the result carries no radius; the inner check still applies.
pub fn shifted(m: &SpectrumSampler, shift: &[f64]) -> SpectrumSampler {
    let inner = m.clone();
    let shift = shift.to_vec();
    SpectrumSampler::new(move |xi| {
        let mut buf = [0.0; MAX_DIM];
        for a in 0..shift.len() {
            buf[a] = xi[a] - shift[a];
        }
        inner.eval(&buf[..shift.len()])
    })
}

/// Sum of `|f̂|²` over bins with `|ξ| > radius`, relative to the total.
pub fn spectral_mass_beyond(hat: &GridFunction, radius: f64) -> f64 {
    let spec = hat.spec;
    let mut xi = vec![0.0; spec.n];
    let mut outside = 0.0;
    let mut total = 0.0;
    for (i, v) in hat.samples.iter().enumerate() {
        let w = v.norm_sqr();
        total += w;
        spec.frequency(i, &mut xi);
        if xi.iter().map(|a| a * a).sum::<f64>().sqrt() > radius {
            outside += w;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (outside / total).sqrt()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileHeader {
    n: usize,
    points_per_dim: usize,
    period: f64,
    domain_tag: Domain,
}

impl GridFunction {
    /// Writes the `.gridfn` format: one JSON header line followed by
    /// little-endian `f64` `(re, im)` pairs in row-major order.
    pub fn write_to(&self, mut w: impl std::io::Write) -> Result<()> {
        let header = FileHeader {
            n: self.spec.n,
            points_per_dim: self.spec.points_per_dim,
            period: self.spec.period,
            domain_tag: self.domain,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(16 * self.samples.len());
        for v in &self.samples {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl std::io::Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("missing header line".into()))?;
        let header: FileHeader = serde_json::from_slice(&bytes[..split])?;
        let spec = GridSpec::with_period(header.n, header.points_per_dim, header.period)?;
        let body = &bytes[split + 1..];
        if body.len() != 16 * spec.len() {
            return Err(Error::Parse(format!(
                "expected {} sample bytes, found {}",
                16 * spec.len(),
                body.len()
            )));
        }
        let samples = body
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        Self::from_samples(spec, samples, header.domain_tag)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_function(spec: GridSpec, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..spec.len())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        GridFunction::from_samples(spec, samples, Domain::Space).unwrap()
    }

    #[test]
    fn constant_has_spectrum_at_origin_only() {
        let spec = GridSpec::new(1, 64, 1.0).unwrap();
        let f = GridFunction::from_fn(spec, |_| C64::new(1.0, 0.0));
        let hat = transform(&f, Direction::Forward).unwrap();
        for (i, v) in hat.samples.iter().enumerate() {
            if i == 0 {
                assert!((v.re - spec.volume()).abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn exponential_has_single_bin() {
        let spec = GridSpec::new(2, 32, 1.0).unwrap();
        let nu = [3.0, -5.0];
        let f = GridFunction::from_fn(spec, |x| C64::from_polar(1.0, nu[0] * x[0] + nu[1] * x[1]));
        let hat = transform(&f, Direction::Forward).unwrap();
        let bin = spec.bin_of_integer_frequency(&[3, -5]).unwrap();
        for (i, v) in hat.samples.iter().enumerate() {
            if i == bin {
                assert!((v.re - spec.volume()).abs() < 1e-9);
            } else {
                assert!(v.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn round_trip_and_domain_contract() {
        let spec = GridSpec::new(1, 256, 2.0).unwrap();
        let f = random_function(spec, 1);
        let back = transform(&transform(&f, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
        assert!(back.relative_error(&f) < 1e-12);
        assert!(matches!(transform(&f, Direction::Inverse), Err(Error::Contract(_))));
    }

    #[test]
    fn multiplier_on_exponential() {
        let spec = GridSpec::new(1, 128, 1.0).unwrap();
        let f = GridFunction::from_fn(spec, |x| C64::from_polar(1.0, 7.0 * x[0]));
        let m = SpectrumSampler::new(|xi| C64::new(xi[0].sin(), xi[0].cos()));
        let g = apply_multiplier(&m, &f).unwrap();
        let expect = f.scaled(C64::new(7f64.sin(), 7f64.cos()));
        assert!(g.relative_error(&expect) < 1e-12);
        let one = apply_multiplier(&SpectrumSampler::constant(C64::new(1.0, 0.0)), &f).unwrap();
        assert!(one.relative_error(&f) < 1e-12);
        let zero = apply_multiplier(&SpectrumSampler::constant(C64::new(0.0, 0.0)), &f).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn box_projection_counts_active_lattice_points() {
        let spec = GridSpec::new(1, 256, 1.0).unwrap();
        let band = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coefs = (0..spec.len())
            .map(|i| {
                if spec.signed_index(i).abs() <= band {
                    C64::new(rng.random_range(-1.0..1.0), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        let f = GridFunction::from_series(spec, coefs).unwrap();
        let kappa = SpectrumSampler::real(|xi| if xi[0].abs() < 1.0 { 1.0 - xi[0].abs() } else { 0.0 })
            .with_support(1.0);
        let mut active = 0;
        for mu in -40..=40 {
            let g = box_project(&[mu], &kappa, &f).unwrap();
            if g.max_abs() > 1e-12 {
                active += 1;
            }
        }
        assert!(active <= 2 * (band + 1) + 1);
        assert!(box_project(&[0], &SpectrumSampler::constant(C64::new(1.0, 0.0)), &f).is_err());
    }

    #[test]
    fn file_format_round_trip() {
        let spec = GridSpec::new(2, 8, 1.5).unwrap();
        let f = random_function(spec, 9);
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let first_line = buf.split(|&b| b == b'\n').next().unwrap();
        let header: serde_json::Value = serde_json::from_slice(first_line).unwrap();
        assert_eq!(header["domain_tag"], "space");
        let back = GridFunction::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert!(GridFunction::read_from(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(GridSpec::new(1, 100, 1.0).is_err());
        assert!(GridSpec::new(3, 16, 1.0).is_err());
        assert!(GridSpec::new(2, 1024, 1.0).is_err());
        assert!(GridSpec::new(1, 2, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn parseval(seed in 0u64..1000, log_points in 3usize..9, scale in 0.5f64..4.0) {
            let spec = GridSpec::new(1, 1 << log_points, scale).unwrap();
            let f = random_function(spec, seed);
            let hat = transform(&f, Direction::Forward).unwrap();
            let space: f64 = f.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() * spec.cell_volume();
            let freq: f64 = hat.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / spec.volume();
            prop_assert!((space - freq).abs() <= 1e-12 * space);
        }

        #[test]
        fn multipliers_commute(seed in 0u64..1000, mu in -5i64..5) {
            let spec = GridSpec::new(1, 128, 1.0).unwrap();
            let f = random_function(spec, seed);
            let a = SpectrumSampler::real(|xi| (-xi[0] * xi[0] / 50.0).exp());
            let kappa = SpectrumSampler::real(|xi| (1.0 - xi[0].abs()).max(0.0)).with_support(1.0);
            let ab = box_project(&[mu], &kappa, &apply_multiplier(&a, &f).unwrap()).unwrap();
            let ba = apply_multiplier(&a, &box_project(&[mu], &kappa, &f).unwrap()).unwrap();
            let scale = f.max_abs();
            for (x, y) in ab.samples.iter().zip(&ba.samples) {
                prop_assert!((x - y).norm() <= 1e-12 * scale);
            }
        }

        #[test]
        fn projections_are_linear(seed in 0u64..1000, c in -3.0f64..3.0) {
            let spec = GridSpec::new(1, 64, 1.0).unwrap();
            let f = random_function(spec, seed);
            let g = random_function(spec, seed + 1);
            let m = SpectrumSampler::real(|xi| 1.0 / (1.0 + xi[0].abs()));
            let lhs = apply_multiplier(&m, &f.scaled(C64::new(c, 0.0)).add(&g).unwrap()).unwrap();
            let rhs = apply_multiplier(&m, &f).unwrap().scaled(C64::new(c, 0.0))
                .add(&apply_multiplier(&m, &g).unwrap()).unwrap();
            prop_assert!(lhs.relative_error(&rhs) < 1e-12);
        }
    }
}
