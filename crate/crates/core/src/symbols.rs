//! Symbols `σ(x, ξ_1, …, ξ_N)`, their `S^m_{0,0}` seminorms and the test
//! and extremal constructions.
//!
//! Frequencies are passed flattened: `Ξ = (ξ_1, …, ξ_N)` is a slice of
//! length `N·n` with slot `j` at `Ξ[j·n..(j+1)·n]`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{csv_error, enumerate_d, rademacher_sign, LatticeSetD, Variant};
use crate::grid::SpectrumSampler;
use crate::partitions::{make_uniform_window, UniformKind, UniformWindow, WindowVariant};
use crate::spaces::japanese_bracket;

pub type FrequencyEvaluator = Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>;
pub type PointEvaluator = Arc<dyn Fn(&[f64], &[f64]) -> C64 + Send + Sync>;

/// Smooth `2π`-periodic factor `a(x)` of an x-dependent test symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Amplitude {
    /// `e^{ik·x}`.
    Exponential { frequency: Vec<i64> },
    /// `Π_i (1-r²)/(1-2r cos x_i + r²)`, with Fourier coefficients `r^{Σ|k_i|}`.
    Poisson { radius: f64 },
}

impl Amplitude {
    pub fn eval(&self, x: &[f64]) -> C64 {
        match self {
            Self::Exponential { frequency } => {
                let phase: f64 = frequency.iter().zip(x).map(|(k, t)| *k as f64 * t).sum();
                C64::from_polar(1.0, phase)
            }
            Self::Poisson { radius } => {
                let r = *radius;
                let v: f64 = x
                    .iter()
                    .map(|t| (1.0 - r * r) / (1.0 - 2.0 * r * t.cos() + r * r))
                    .product();
                C64::new(v, 0.0)
            }
        }
    }

    /// `(2π)^{-n} ∫_{[0,2π]ⁿ} a(x) e^{-ik·x} dx`.
    pub fn fourier_coefficient(&self, k: &[i64]) -> C64 {
        match self {
            Self::Exponential { frequency } => {
                if frequency.as_slice() == k {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            Self::Poisson { radius } => {
                let total: i64 = k.iter().map(|v| v.abs()).sum();
                C64::new(radius.powi(total as i32), 0.0)
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::Exponential { frequency } if frequency.len() != n => Err(Error::Config(format!(
                "amplitude frequency has {} entries for n = {n}",
                frequency.len()
            ))),
            Self::Poisson { radius } if !(*radius > 0.0 && *radius < 1.0) => Err(Error::Config(
                format!("Poisson radius {radius} must lie in (0, 1)"),
            )),
            _ => Ok(()),
        }
    }
}

/// `Σ_Μ c_Μ ⟨Μ⟩^m Π φ(ξ_j - μ_j)`, optionally multiplied by `φ(ξ_1)` with the
/// lattice running over slots `2..N` only.
#[derive(Clone, Debug)]
pub struct LatticeSum {
    pub coefficients: BTreeMap<Vec<i64>, C64>,
    pub window: UniformWindow,
    pub order: f64,
    pub leading_window: bool,
    weighted: HashMap<Vec<i64>, C64>,
}

impl LatticeSum {
    pub fn new(
        coefficients: BTreeMap<Vec<i64>, C64>,
        window: UniformWindow,
        order: f64,
        leading_window: bool,
    ) -> Self {
        let weighted = coefficients
            .iter()
            .map(|(mu, c)| {
                let bracket = japanese_bracket(&mu.iter().map(|&v| v as f64).collect::<Vec<_>>());
                (mu.clone(), c * bracket.powf(order))
            })
            .collect();
        Self {
            coefficients,
            window,
            order,
            leading_window,
            weighted,
        }
    }

    /// Number of lattice slots per key.
    pub fn slots(&self, multilinearity: usize) -> usize {
        if self.leading_window {
            multilinearity - 1
        } else {
            multilinearity
        }
    }

    fn lattice_part<'a>(&self, xi: &'a [f64], n: usize) -> &'a [f64] {
        if self.leading_window {
            &xi[n..]
        } else {
            xi
        }
    }

    fn leading_factor(&self, xi: &[f64], n: usize) -> f64 {
        if self.leading_window {
            self.window.eval(&xi[..n])
        } else {
            1.0
        }
    }

    /// Evaluation through the few lattice points whose windows contain `Ξ`.
    pub fn eval(&self, xi: &[f64], n: usize) -> C64 {
        let lead = self.leading_factor(xi, n);
        if lead == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let part = self.lattice_part(xi, n);
        let b = self.window.support_box;
        let mut ranges = Vec::with_capacity(part.len());
        for &t in part {
            let lo = (t - b).ceil() as i64;
            let hi = (t + b).floor() as i64;
            if lo > hi {
                return C64::new(0.0, 0.0);
            }
            ranges.push((lo, hi));
        }
        let mut key: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        let mut total = C64::new(0.0, 0.0);
        let mut local = vec![0.0; n];
        loop {
            if let Some(c) = self.weighted.get(&key) {
                let mut w = 1.0;
                for (slot, chunk) in key.chunks(n).enumerate() {
                    for a in 0..n {
                        local[a] = part[slot * n + a] - chunk[a] as f64;
                    }
                    w *= self.window.eval(&local);
                    if w == 0.0 {
                        break;
                    }
                }
                total += c * w;
            }
            // advance the odometer
            let mut axis = 0;
            loop {
                if axis == key.len() {
                    return total * lead;
                }
                if key[axis] < ranges[axis].1 {
                    key[axis] += 1;
                    break;
                }
                key[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }

    /// Brute-force sum over every stored coefficient.
    pub fn explicit_sum(&self, xi: &[f64], n: usize) -> C64 {
        let lead = self.leading_factor(xi, n);
        let part = self.lattice_part(xi, n);
        let mut total = C64::new(0.0, 0.0);
        for (mu, c) in &self.coefficients {
            let bracket = japanese_bracket(&mu.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let mut w = 1.0;
            for (slot, chunk) in mu.chunks(n).enumerate() {
                let local: Vec<f64> = (0..n).map(|a| part[slot * n + a] - chunk[a] as f64).collect();
                w *= self.window.eval(&local);
            }
            total += c * bracket.powf(self.order) * w;
        }
        total * lead
    }

    /// Writes `(μ-tuple, re, im)` rows.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let width = self.coefficients.keys().next().map_or(0, |k| k.len());
        let mut header: Vec<String> = (0..width).map(|i| format!("mu{i}")).collect();
        header.push("re".into());
        header.push("im".into());
        out.write_record(&header).map_err(csv_error)?;
        for (mu, c) in &self.coefficients {
            let mut row: Vec<String> = mu.iter().map(|v| v.to_string()).collect();
            row.push(format!("{:e}", c.re));
            row.push(format!("{:e}", c.im));
            out.write_record(&row).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads a coefficient table written by [`LatticeSum::write_csv`].
pub fn read_coefficients_csv(r: impl std::io::Read) -> Result<BTreeMap<Vec<i64>, C64>> {
    let mut reader = csv::Reader::from_reader(r);
    let width = reader.headers().map_err(csv_error)?.len();
    if width < 3 {
        return Err(Error::Parse("coefficient table needs μ columns plus re, im".into()));
    }
    let mut out = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let parse_err = |i: usize| Error::Parse(format!("row {}: bad field `{}`", line + 2, field(i)));
        let mu = (0..width - 2)
            .map(|i| field(i).parse::<i64>().map_err(|_| parse_err(i)))
            .collect::<Result<Vec<_>>>()?;
        let re = field(width - 2).parse::<f64>().map_err(|_| parse_err(width - 2))?;
        let im = field(width - 1).parse::<f64>().map_err(|_| parse_err(width - 1))?;
        out.insert(mu, C64::new(re, im));
    }
    Ok(out)
}

#[derive(Clone)]
pub enum Structure {
    Constant(C64),
    /// `Π m_j(ξ_j)`.
    Separable(Vec<SpectrumSampler>),
    /// `a(x) Π m_j(ξ_j)`.
    Oscillatory {
        amplitude: Amplitude,
        multipliers: Vec<SpectrumSampler>,
    },
    /// x-independent `m(Ξ)`.
    Frequency(FrequencyEvaluator),
    General(PointEvaluator),
    LatticeSum(LatticeSum),
    /// `σ(x,Ξ) Π φ(ξ_j - ν_j)`.
    Piece {
        base: Box<Symbol>,
        window: UniformWindow,
        nu: Vec<i64>,
    },
}

impl std::fmt::Debug for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Separable(m) => write!(f, "Separable({} slots)", m.len()),
            Self::Oscillatory { amplitude, .. } => write!(f, "Oscillatory({amplitude:?})"),
            Self::Frequency(_) => write!(f, "Frequency"),
            Self::General(_) => write!(f, "General"),
            Self::LatticeSum(l) => write!(f, "LatticeSum({} terms)", l.coefficients.len()),
            Self::Piece { nu, base, .. } => write!(f, "Piece({nu:?}, {:?})", base.structure),
        }
    }
}

/// How a symbol depends on `x`.
pub enum XDependence<'a> {
    Independent,
    /// `σ(x,Ξ) = a(x) τ(Ξ)`.
    Factored(&'a Amplitude, Symbol),
    General,
}

#[derive(Clone, Debug)]
pub struct Symbol {
    pub multilinearity: usize,
    pub n: usize,
    pub structure: Structure,
}

impl Symbol {
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> C64 {
        let n = self.n;
        match &self.structure {
            Structure::Constant(c) => *c,
            Structure::Separable(ms) => ms
                .iter()
                .enumerate()
                .map(|(j, m)| m.eval(&xi[j * n..(j + 1) * n]))
                .product(),
            Structure::Oscillatory {
                amplitude,
                multipliers,
            } => {
                let m: C64 = multipliers
                    .iter()
                    .enumerate()
                    .map(|(j, m)| m.eval(&xi[j * n..(j + 1) * n]))
                    .product();
                if m == C64::new(0.0, 0.0) {
                    m
                } else {
                    amplitude.eval(x) * m
                }
            }
            Structure::Frequency(f) => f(xi),
            Structure::General(f) => f(x, xi),
            Structure::LatticeSum(l) => l.eval(xi, n),
            Structure::Piece { base, window, nu } => {
                let w = piece_window(window, nu, xi, n);
                if w == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    base.eval(x, xi) * w
                }
            }
        }
    }

    pub fn x_independent(&self) -> bool {
        match &self.structure {
            Structure::Oscillatory { .. } | Structure::General(_) => false,
            Structure::Piece { base, .. } => base.x_independent(),
            _ => true,
        }
    }

    pub fn x_dependence(&self) -> XDependence<'_> {
        match &self.structure {
            Structure::Oscillatory {
                amplitude,
                multipliers,
            } => XDependence::Factored(
                amplitude,
                Symbol {
                    multilinearity: self.multilinearity,
                    n: self.n,
                    structure: Structure::Separable(multipliers.clone()),
                },
            ),
            Structure::General(_) => XDependence::General,
            Structure::Piece { base, window, nu } => match base.x_dependence() {
                XDependence::Factored(a, inner) => XDependence::Factored(
                    a,
                    Symbol {
                        multilinearity: self.multilinearity,
                        n: self.n,
                        structure: Structure::Piece {
                            base: Box::new(inner),
                            window: window.clone(),
                            nu: nu.clone(),
                        },
                    },
                ),
                other => other,
            },
            _ => XDependence::Independent,
        }
    }

    /// Frequency dimension `N·n`.
    pub fn frequency_dim(&self) -> usize {
        self.multilinearity * self.n
    }

    /// `σ_Ν = σ Π φ(ξ_j - ν_j)`.
    pub fn piece(&self, window: &UniformWindow, nu: &[i64]) -> Symbol {
        Symbol {
            multilinearity: self.multilinearity,
            n: self.n,
            structure: Structure::Piece {
                base: Box::new(self.clone()),
                window: window.clone(),
                nu: nu.to_vec(),
            },
        }
    }

    pub fn lattice_sum(&self) -> Option<&LatticeSum> {
        match &self.structure {
            Structure::LatticeSum(l) => Some(l),
            _ => None,
        }
    }
}

pub(crate) fn piece_window(window: &UniformWindow, nu: &[i64], xi: &[f64], n: usize) -> f64 {
    let mut w = 1.0;
    let mut local = [0.0; 2];
    for (j, chunk) in nu.chunks(n).enumerate() {
        for a in 0..n {
            local[a] = xi[j * n + a] - chunk[a] as f64;
        }
        w *= window.eval(&local[..n]);
        if w == 0.0 {
            break;
        }
    }
    w
}

fn check_shape(multilinearity: usize, n: usize) -> Result<()> {
    if multilinearity == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    if n == 0 || n > crate::grid::MAX_DIM {
        return Err(Error::Config(format!("dimension n = {n} not supported")));
    }
    Ok(())
}

pub fn constant_symbol(multilinearity: usize, n: usize, c: C64) -> Result<Symbol> {
    check_shape(multilinearity, n)?;
    Ok(Symbol {
        multilinearity,
        n,
        structure: Structure::Constant(c),
    })
}

pub fn separable_symbol(n: usize, multipliers: Vec<SpectrumSampler>) -> Result<Symbol> {
    check_shape(multipliers.len(), n)?;
    Ok(Symbol {
        multilinearity: multipliers.len(),
        n,
        structure: Structure::Separable(multipliers),
    })
}

pub fn oscillatory_symbol(
    n: usize,
    amplitude: Amplitude,
    multipliers: Vec<SpectrumSampler>,
) -> Result<Symbol> {
    check_shape(multipliers.len(), n)?;
    amplitude.validate(n)?;
    Ok(Symbol {
        multilinearity: multipliers.len(),
        n,
        structure: Structure::Oscillatory {
            amplitude,
            multipliers,
        },
    })
}

pub fn frequency_symbol(
    multilinearity: usize,
    n: usize,
    f: impl Fn(&[f64]) -> C64 + Send + Sync + 'static,
) -> Result<Symbol> {
    check_shape(multilinearity, n)?;
    Ok(Symbol {
        multilinearity,
        n,
        structure: Structure::Frequency(Arc::new(f)),
    })
}

pub fn general_symbol(
    multilinearity: usize,
    n: usize,
    f: impl Fn(&[f64], &[f64]) -> C64 + Send + Sync + 'static,
) -> Result<Symbol> {
    check_shape(multilinearity, n)?;
    Ok(Symbol {
        multilinearity,
        n,
        structure: Structure::General(Arc::new(f)),
    })
}

/// `⟨Ξ⟩^m = (1 + |ξ_1|² + … + |ξ_N|²)^{m/2}`.
pub fn bracket_symbol(multilinearity: usize, n: usize, order: f64) -> Result<Symbol> {
    frequency_symbol(multilinearity, n, move |xi| {
        C64::new(japanese_bracket(xi).powf(order), 0.0)
    })
}

/// Per-slot multipliers available from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MultiplierSpec {
    One,
    /// `⟨ξ⟩^m`.
    Bracket { order: f64 },
    /// `e^{-|ξ|²/(2w²)}`.
    Gaussian { width: f64 },
    /// `e^{ih·ξ}`, i.e. translation by `h`.
    Shift { by: Vec<f64> },
}

impl MultiplierSpec {
    pub fn sampler(&self) -> SpectrumSampler {
        match self.clone() {
            Self::One => SpectrumSampler::constant(C64::new(1.0, 0.0)),
            Self::Bracket { order } => {
                SpectrumSampler::real(move |xi| japanese_bracket(xi).powf(order))
            }
            Self::Gaussian { width } => SpectrumSampler::real(move |xi| {
                let r2: f64 = xi.iter().map(|v| v * v).sum();
                (-r2 / (2.0 * width * width)).exp()
            }),
            Self::Shift { by } => SpectrumSampler::new(move |xi| {
                C64::from_polar(1.0, by.iter().zip(xi).map(|(a, b)| a * b).sum())
            }),
        }
    }
}

/// Configuration form of the test symbols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSymbolSpec {
    Constant {
        #[serde(rename = "N")]
        multilinearity: usize,
        n: usize,
        #[serde(default = "unit")]
        re: f64,
        #[serde(default)]
        im: f64,
    },
    Separable {
        n: usize,
        multipliers: Vec<MultiplierSpec>,
    },
    OscillatoryX {
        n: usize,
        amplitude: Amplitude,
        multipliers: Vec<MultiplierSpec>,
    },
    Bracket {
        #[serde(rename = "N")]
        multilinearity: usize,
        n: usize,
        order: f64,
    },
}

fn unit() -> f64 {
    1.0
}

pub fn make_test_symbol(spec: &TestSymbolSpec) -> Result<Symbol> {
    match spec {
        TestSymbolSpec::Constant {
            multilinearity,
            n,
            re,
            im,
        } => constant_symbol(*multilinearity, *n, C64::new(*re, *im)),
        TestSymbolSpec::Separable { n, multipliers } => {
            separable_symbol(*n, multipliers.iter().map(|m| m.sampler()).collect())
        }
        TestSymbolSpec::OscillatoryX {
            n,
            amplitude,
            multipliers,
        } => oscillatory_symbol(
            *n,
            amplitude.clone(),
            multipliers.iter().map(|m| m.sampler()).collect(),
        ),
        TestSymbolSpec::Bracket {
            multilinearity,
            n,
            order,
        } => bracket_symbol(*multilinearity, *n, *order),
    }
}

/// `c_Μ = Π e^{-i|μ_j|^{a_j}}` over the stored slots, times the Rademacher
/// sign `r_{μ_2+…+μ_N}(ω)` when a seed is given.
pub fn sharpness_coefficients(
    set: &LatticeSetD,
    chirps: &[f64],
    seed: Option<u64>,
) -> Result<BTreeMap<Vec<i64>, C64>> {
    let offset = match set.variant {
        Variant::Nec1 => 0,
        Variant::Nec2 => 1,
    };
    if chirps.len() != set.multilinearity {
        return Err(Error::Config(format!(
            "{} chirp exponents for N = {}",
            chirps.len(),
            set.multilinearity
        )));
    }
    let mut out = BTreeMap::new();
    for m in set.members() {
        let mut phase = 0.0;
        for j in 0..set.slots() {
            let r = crate::extremal::norm_i(set.slot(m, j));
            phase -= r.powf(chirps[j + offset]);
        }
        let sign = seed.map_or(1.0, |s| rademacher_sign(s, &set.tail_sum(m)));
        out.insert(m.to_vec(), C64::from_polar(sign, phase));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SharpnessParams {
    pub variant: Variant,
    pub level: u32,
    pub delta: f64,
    pub gap: u32,
    #[serde(rename = "N")]
    pub multilinearity: usize,
    pub n: usize,
    pub order: f64,
}

/// The lattice-sum symbol `σ_ℓ` on the exact set `D_ℓ`, built from
/// `coefficients` (all of modulus at most 1) and the narrow window `φ`.
pub fn make_sharpness_symbol(
    params: &SharpnessParams,
    coefficients: impl FnOnce(&LatticeSetD) -> Result<BTreeMap<Vec<i64>, C64>>,
) -> Result<(Symbol, LatticeSetD)> {
    let set = enumerate_d(
        params.variant,
        params.level,
        params.delta,
        params.gap,
        params.multilinearity,
        params.n,
    )?;
    let coefs = coefficients(&set)?;
    if let Some((mu, c)) = coefs.iter().find(|(_, c)| c.norm() > 1.0 + 1e-12) {
        return Err(Error::Config(format!("|c_Μ| = {} > 1 at {mu:?}", c.norm())));
    }
    let window = make_uniform_window(UniformKind::Phi, WindowVariant::S4, params.n);
    let lattice = LatticeSum::new(coefs, window, params.order, params.variant == Variant::Nec2);
    Ok((
        Symbol {
            multilinearity: params.multilinearity,
            n: params.n,
            structure: Structure::LatticeSum(lattice),
        },
        set,
    ))
}

/// Points `(x, Ξ)` at which seminorms are sampled.
#[derive(Clone, Debug, Default)]
pub struct SampleGrid {
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SampleGrid {
    /// Regular grid: `x_per_axis` points on `[0,2π)ⁿ` times `per_axis` points
    /// on `[-radius, radius]^{Nn}`.
    pub fn regular(
        multilinearity: usize,
        n: usize,
        radius: f64,
        per_axis: usize,
        x_per_axis: usize,
    ) -> Self {
        let xs = tensor_grid(n, x_per_axis, |i| 2.0 * PI * i as f64 / x_per_axis as f64);
        let step = if per_axis > 1 {
            2.0 * radius / (per_axis - 1) as f64
        } else {
            0.0
        };
        let xis = tensor_grid(multilinearity * n, per_axis, |i| -radius + i as f64 * step);
        let mut points = Vec::with_capacity(xs.len() * xis.len());
        for x in &xs {
            for xi in &xis {
                points.push((x.clone(), xi.clone()));
            }
        }
        Self { points }
    }

    /// Frequencies `centre + offset` at `x = 0` for every pair.
    pub fn around(centres: &[Vec<f64>], offsets: &[Vec<f64>], n: usize) -> Self {
        let mut points = Vec::new();
        for c in centres {
            for o in offsets {
                let xi: Vec<f64> = c.iter().zip(o).map(|(a, b)| a + b).collect();
                points.push((vec![0.0; n], xi));
            }
        }
        Self { points }
    }
}

fn tensor_grid(dim: usize, per_axis: usize, coord: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; dim];
            for a in (0..dim).rev() {
                p[a] = coord(idx % per_axis);
                idx /= per_axis;
            }
            p
        })
        .collect()
}

/// Derivative orders: `alpha` in `x`, `beta[j]` in `ξ_j`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndexTuple {
    pub alpha: Vec<u32>,
    pub beta: Vec<Vec<u32>>,
}

impl MultiIndexTuple {
    pub fn total(&self) -> u32 {
        self.alpha.iter().sum::<u32>() + self.beta.iter().flatten().sum::<u32>()
    }

    pub fn is_zero(&self) -> bool {
        self.total() == 0
    }
}

impl std::fmt::Display for MultiIndexTuple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |v: &[u32]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "({}", join(&self.alpha))?;
        for b in &self.beta {
            write!(f, ";{}", join(b))?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeminormReport {
    pub order: f64,
    pub max_order: u32,
    pub values: BTreeMap<MultiIndexTuple, f64>,
}

impl SeminormReport {
    pub fn get(&self, t: &MultiIndexTuple) -> Option<f64> {
        self.values.get(t).copied()
    }

    /// Largest entry over all tuples.
    pub fn max(&self) -> f64 {
        self.values.values().copied().fold(0.0, f64::max)
    }
}

/// Multi-indices in `ℕⁿ` with `|γ| ≤ m`.
fn indices_up_to(n: usize, m: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    loop {
        if cur.iter().sum::<u32>() <= m {
            out.push(cur.clone());
        }
        let mut a = 0;
        loop {
            if a == n {
                return out;
            }
            if cur[a] < m {
                cur[a] += 1;
                break;
            }
            cur[a] = 0;
            a += 1;
        }
    }
}

/// Central-difference step for a derivative of total order `k`: `1e-3` up
/// to second order, `ε_mach^{1/(k+2)}` beyond (balances truncation against
/// rounding, which grows like `h^{-k}`).
pub fn difference_step(k: u32) -> f64 {
    if k <= 2 {
        1e-3
    } else {
        f64::EPSILON.powf(1.0 / (k as f64 + 2.0))
    }
}

fn binomial(k: u32, i: u32) -> f64 {
    (0..i).fold(1.0, |acc, t| acc * (k - t) as f64 / (t + 1) as f64)
}

/// `∂^α_x ∂^β_Ξ σ` at one point by tensorized central differences.
fn mixed_derivative(
    sigma: &Symbol,
    x: &[f64],
    xi: &[f64],
    orders: &[u32],
    h: f64,
) -> Result<C64> {
    let n = sigma.n;
    let vars: Vec<(usize, u32)> = orders
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(v, &k)| (v, k))
        .collect();
    let evaluate = |xp: &[f64], xip: &[f64]| -> Result<C64> {
        let v = sigma.eval(xp, xip);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            let mut point = xp.to_vec();
            point.extend_from_slice(xip);
            Err(Error::Evaluation { point })
        }
    };
    if vars.is_empty() {
        return evaluate(x, xi);
    }
    let mut total = C64::new(0.0, 0.0);
    let mut xp = x.to_vec();
    let mut xip = xi.to_vec();
    let mut counters = vec![0u32; vars.len()];
    loop {
        let mut weight = 1.0;
        for (c, &(v, k)) in counters.iter().zip(&vars) {
            let offset = (k as f64 / 2.0 - *c as f64) * h;
            if v < n {
                xp[v] = x[v] + offset;
            } else {
                xip[v - n] = xi[v - n] + offset;
            }
            weight *= binomial(k, *c) * if c % 2 == 0 { 1.0 } else { -1.0 };
        }
        total += evaluate(&xp, &xip)? * weight;
        let mut a = 0;
        loop {
            if a == vars.len() {
                let k: u32 = vars.iter().map(|v| v.1).sum();
                return Ok(total / h.powi(k as i32));
            }
            if counters[a] < vars[a].1 {
                counters[a] += 1;
                break;
            }
            counters[a] = 0;
            a += 1;
        }
    }
}

/// `sup |∂^α_x ∂^{β_1}_{ξ_1}⋯∂^{β_N}_{ξ_N} σ| / (1 + Σ|ξ_j|)^m` over the
/// sample grid for every tuple with `|α|, |β_j| ≤ M`.
pub fn seminorm_estimate(
    sigma: &Symbol,
    order: f64,
    max_order: u32,
    grid: &SampleGrid,
) -> Result<SeminormReport> {
    use rayon::prelude::*;
    let n = sigma.n;
    let single = indices_up_to(n, max_order);
    let mut tuples = vec![MultiIndexTuple {
        alpha: vec![],
        beta: vec![],
    }];
    for slot in 0..=sigma.multilinearity {
        let mut next = Vec::new();
        for t in &tuples {
            for g in &single {
                let mut t = t.clone();
                if slot == 0 {
                    t.alpha = g.clone();
                } else {
                    t.beta.push(g.clone());
                }
                next.push(t);
            }
        }
        tuples = next;
    }
    let values = tuples
        .par_iter()
        .map(|t| {
            let mut orders = t.alpha.clone();
            orders.extend(t.beta.iter().flatten());
            let h = difference_step(t.total());
            let mut sup = 0.0f64;
            for (x, xi) in &grid.points {
                let d = mixed_derivative(sigma, x, xi, &orders, h)?;
                let weight = (1.0 + slot_norms(xi, n)).powf(order);
                sup = sup.max(d.norm() / weight);
            }
            Ok((t.clone(), sup))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(SeminormReport {
        order,
        max_order,
        values,
    })
}

/// `Σ_j |ξ_j|`.
pub fn slot_norms(xi: &[f64], n: usize) -> f64 {
    xi.chunks(n)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum()
}
