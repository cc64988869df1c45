//! `T_σ(f_1,…,f_N)` by direct quadrature and through the lattice expansion
//! `Σ_Μ Σ_Ν P_{Ν,Μ}(x) Π φ̃(D-ν_j) f_j(x+μ_j)`.
//!
//! On the grid the defining integral becomes
//! `vol^{-N} Σ_Ξ e^{ix·(ξ_1+…+ξ_N)} σ(x,Ξ) Π f̂_j(ξ_j)` over frequency bins,
//! restricted to the bins where the inputs are non-negligible.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{fit_slope, SlopeFit};
use crate::grid::{
    apply_multiplier, transform, Direction, Domain, GridFunction, GridSpec, SpectrumSampler,
};
use crate::partitions::{
    band_project, make_uniform_window, support_annulus, UniformKind, UniformWindow, WindowFamily,
    WindowVariant,
};
use crate::symbols::{Structure, Symbol, XDependence};

/// Default ceiling on symbol evaluations (or quadrature samples).
pub const DEFAULT_BUDGET: u128 = 500_000_000;

/// Bins with `|f̂| ≤ ACTIVE_THRESHOLD · max|f̂|` are treated as empty.
pub const ACTIVE_THRESHOLD: f64 = 1e-14;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

struct Prepared {
    spec: GridSpec,
    hats: Vec<GridFunction>,
    active: Vec<Vec<usize>>,
    /// Signed frequency index per axis of every bin.
    signed: Vec<[i64; 2]>,
}

impl Prepared {
    fn new(sigma: &Symbol, inputs: &[GridFunction]) -> Result<Self> {
        if inputs.len() != sigma.multilinearity {
            return Err(Error::Contract(format!(
                "symbol is {}-linear, got {} inputs",
                sigma.multilinearity,
                inputs.len()
            )));
        }
        let spec = inputs[0].spec;
        if spec.n != sigma.n {
            return Err(Error::Contract(format!(
                "symbol dimension {} does not match grid dimension {}",
                sigma.n, spec.n
            )));
        }
        let mut hats = Vec::with_capacity(inputs.len());
        let mut active = Vec::with_capacity(inputs.len());
        for f in inputs {
            inputs[0].check_compatible(f)?;
            f.require(Domain::Space)?;
            let hat = transform(f, Direction::Forward)?;
            let peak = hat.max_abs();
            let cut = ACTIVE_THRESHOLD * peak;
            let bins: Vec<usize> = if peak == 0.0 {
                Vec::new()
            } else {
                (0..spec.len()).filter(|&i| hat.samples[i].norm() > cut).collect()
            };
            hats.push(hat);
            active.push(bins);
        }
        let signed = (0..spec.len())
            .map(|i| {
                let ks = spec.unflatten(i);
                let mut s = [0i64; 2];
                for a in 0..spec.n {
                    s[a] = spec.signed_index(ks[a]);
                }
                s
            })
            .collect();
        Ok(Self {
            spec,
            hats,
            active,
            signed,
        })
    }

    fn tuple_count(&self) -> u128 {
        self.active.iter().map(|a| a.len() as u128).product()
    }

    /// Bin of `Σ_j ξ_j`, folded onto the grid.
    fn fold(&self, sums: &[i64]) -> usize {
        let p = self.spec.points_per_dim as i64;
        let mut ks = [0usize; 2];
        for a in 0..self.spec.n {
            ks[a] = sums[a].rem_euclid(p) as usize;
        }
        self.spec.flatten(&ks[..self.spec.n])
    }

    fn zero_output(&self) -> GridFunction {
        GridFunction::zeros(self.spec, Domain::Space)
    }
}

fn guard(required: u128, budget: u128) -> Result<()> {
    if required > budget {
        Err(Error::CostGuard { required, budget })
    } else {
        Ok(())
    }
}

/// Splits `0..len` into at most 64 contiguous ranges of equal size.
fn fixed_chunks(len: usize) -> Vec<std::ops::Range<usize>> {
    let size = len.div_ceil(64).max(1);
    (0..len).step_by(size).map(|s| s..(s + size).min(len)).collect()
}

/// Visits every active tuple whose first bin lies in `first`, passing the
/// bin indices.
fn for_each_tuple(
    active: &[Vec<usize>],
    first: std::ops::Range<usize>,
    mut visit: impl FnMut(&[usize]),
) {
    let slots = active.len();
    let mut pos = vec![0usize; slots];
    let mut bins = vec![0usize; slots];
    for i0 in first {
        pos[1..].iter_mut().for_each(|p| *p = 0);
        bins[0] = active[0][i0];
        loop {
            for j in 1..slots {
                bins[j] = active[j][pos[j]];
            }
            visit(&bins);
            let mut j = slots - 1;
            loop {
                if j == 0 {
                    break;
                }
                pos[j] += 1;
                if pos[j] < active[j].len() {
                    break;
                }
                pos[j] = 0;
                j -= 1;
            }
            if j == 0 {
                break;
            }
        }
    }
}

/// Spectrum of `T_τ(f)` for x-independent `τ`, already scaled by
/// `vol^{-(N-1)}` so that the inverse transform yields the output.
fn independent_spectrum(tau: &Symbol, prep: &Prepared) -> Vec<C64> {
    let spec = prep.spec;
    let n = spec.n;
    let nn = tau.frequency_dim();
    let x0 = vec![0.0; n];
    let step = spec.frequency_step();
    let partial: Vec<Vec<C64>> = fixed_chunks(prep.active[0].len())
        .into_par_iter()
        .map(|range| {
            let mut out = vec![ZERO; spec.len()];
            let mut xi = vec![0.0; nn];
            for_each_tuple(&prep.active, range, |bins| {
                let mut amp = C64::new(1.0, 0.0);
                let mut sums = [0i64; 2];
                for (j, &b) in bins.iter().enumerate() {
                    amp *= prep.hats[j].samples[b];
                    let s = prep.signed[b];
                    for a in 0..n {
                        xi[j * n + a] = s[a] as f64 * step;
                        sums[a] += s[a];
                    }
                }
                let v = tau.eval(&x0, &xi);
                if v != ZERO {
                    out[prep.fold(&sums[..n])] += v * amp;
                }
            });
            out
        })
        .collect();
    let mut total = vec![ZERO; spec.len()];
    for part in partial {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    let scale = spec.volume().powi(1 - tau.multilinearity as i32);
    total.iter_mut().for_each(|v| *v *= scale);
    total
}

fn spectrum_to_output(spec: GridSpec, samples: Vec<C64>) -> Result<GridFunction> {
    transform(
        &GridFunction::from_samples(spec, samples, Domain::Frequency)?,
        Direction::Inverse,
    )
}

fn multiply_by_amplitude(out: &mut GridFunction, amplitude: &crate::symbols::Amplitude) {
    let spec = out.spec;
    let mut x = vec![0.0; spec.n];
    for (i, v) in out.samples.iter_mut().enumerate() {
        spec.point(i, &mut x);
        *v *= amplitude.eval(&x);
    }
}

/// Integer phase table `e^{2πi k/points}`.
fn unit_roots(points: usize) -> Vec<C64> {
    (0..points)
        .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / points as f64))
        .collect()
}

/// `e^{ix·ξ}` for grid point `ks` and summed signed frequency index `sums`.
fn grid_phase(roots: &[C64], ks: &[usize], sums: &[i64]) -> C64 {
    let p = roots.len() as i64;
    let mut idx = 0i64;
    for (k, s) in ks.iter().zip(sums) {
        idx += *k as i64 * s;
    }
    roots[idx.rem_euclid(p) as usize]
}

/// Discrete quadrature of the defining integral. x-independent symbols
/// are grouped by output frequency; symbols of the form `a(x)τ(Ξ)` reuse
/// that path; any other symbol is summed point by point.
pub fn apply_direct(sigma: &Symbol, inputs: &[GridFunction]) -> Result<GridFunction> {
    apply_direct_with_budget(sigma, inputs, DEFAULT_BUDGET)
}

pub fn apply_direct_with_budget(
    sigma: &Symbol,
    inputs: &[GridFunction],
    budget: u128,
) -> Result<GridFunction> {
    let prep = Prepared::new(sigma, inputs)?;
    let tuples = prep.tuple_count();
    if tuples == 0 {
        return Ok(prep.zero_output());
    }
    match sigma.x_dependence() {
        XDependence::Independent => {
            guard(tuples, budget)?;
            spectrum_to_output(prep.spec, independent_spectrum(sigma, &prep))
        }
        XDependence::Factored(amplitude, tau) => {
            guard(tuples, budget)?;
            let mut out = spectrum_to_output(prep.spec, independent_spectrum(&tau, &prep))?;
            multiply_by_amplitude(&mut out, amplitude);
            Ok(out)
        }
        XDependence::General => {
            guard(tuples * prep.spec.len() as u128, budget)?;
            general_direct(sigma, &prep)
        }
    }
}

fn general_direct(sigma: &Symbol, prep: &Prepared) -> Result<GridFunction> {
    let spec = prep.spec;
    let n = spec.n;
    let nn = sigma.frequency_dim();
    let step = spec.frequency_step();
    let roots = unit_roots(spec.points_per_dim);
    let scale = spec.volume().powi(-(sigma.multilinearity as i32));
    let samples: Vec<C64> = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let x = spec.point_vec(i);
            let ks = spec.unflatten(i);
            let mut xi = vec![0.0; nn];
            let mut acc = ZERO;
            for_each_tuple(&prep.active, 0..prep.active[0].len(), |bins| {
                let mut amp = C64::new(1.0, 0.0);
                let mut sums = [0i64; 2];
                for (j, &b) in bins.iter().enumerate() {
                    amp *= prep.hats[j].samples[b];
                    let s = prep.signed[b];
                    for a in 0..n {
                        xi[j * n + a] = s[a] as f64 * step;
                        sums[a] += s[a];
                    }
                }
                let v = sigma.eval(&x, &xi);
                if v != ZERO {
                    acc += v * amp * grid_phase(&roots, &ks[..n], &sums[..n]);
                }
            });
            acc * scale
        })
        .collect();
    GridFunction::from_samples(spec, samples, Domain::Space)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianMethod {
    /// Exact differentiation of the trigonometric interpolant.
    Spectral,
    /// Second-order central differences on the quadrature grid.
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    /// Truncation `|Μ|_∞ ≤ radius`.
    pub radius: usize,
    /// Integration-by-parts order `M`.
    pub order: u32,
    /// Quadrature points per axis on `[-π, π]`.
    pub quadrature: usize,
    pub laplacian: LaplacianMethod,
    pub budget: u128,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            radius: 96,
            order: 2,
            quadrature: 256,
            laplacian: LaplacianMethod::Spectral,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl ExpansionConfig {
    /// Smallest admissible quadrature size for the truncation radius.
    pub fn quadrature_floor(&self) -> usize {
        (2 * self.radius + 2).max(16)
    }

    fn validate(&self) -> Result<()> {
        let floor = self.quadrature_floor();
        if self.quadrature < floor {
            return Err(Error::Resolution {
                points: self.quadrature,
                floor,
            });
        }
        if !self.quadrature.is_power_of_two() {
            return Err(Error::Config(format!(
                "quadrature size {} must be a power of two",
                self.quadrature
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DecompositionPlan {
    /// Active `Ν`, flattened `N·n` tuples in lexicographic order.
    pub active: Vec<Vec<i64>>,
    /// `φ`, supported in `[-1,1]ⁿ`.
    pub window: UniformWindow,
    /// `φ̃`, equal to 1 on `[-1,1]ⁿ`.
    pub tilde: UniformWindow,
    pub config: ExpansionConfig,
    pub multilinearity: usize,
    pub n: usize,
}

fn uniform_pair(n: usize) -> (UniformWindow, UniformWindow) {
    (
        make_uniform_window(UniformKind::Phi, WindowVariant::S3, n),
        make_uniform_window(UniformKind::PhiTilde, WindowVariant::S3, n),
    )
}

fn cartesian(sets: &[Vec<Vec<i64>>]) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![vec![]];
    for set in sets {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for prefix in &out {
            for v in set {
                let mut t = prefix.clone();
                t.extend_from_slice(v);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

/// Plan whose active set is every `Ν` for which some `φ(ξ_j - ν_j)` meets an
/// active bin of `f_j`.
pub fn make_plan(
    sigma: &Symbol,
    inputs: &[GridFunction],
    config: ExpansionConfig,
) -> Result<DecompositionPlan> {
    config.validate()?;
    let prep = Prepared::new(sigma, inputs)?;
    let n = sigma.n;
    let step = prep.spec.frequency_step();
    let slots: Vec<Vec<Vec<i64>>> = prep
        .active
        .iter()
        .map(|bins| {
            let mut set = BTreeSet::new();
            for &b in bins {
                let s = prep.signed[b];
                let ranges: Vec<(i64, i64)> = (0..n)
                    .map(|a| {
                        let t = s[a] as f64 * step;
                        ((t - 1.0).ceil() as i64, (t + 1.0).floor() as i64)
                    })
                    .collect();
                for nu in cartesian(
                    &ranges
                        .iter()
                        .map(|&(lo, hi)| (lo..=hi).map(|v| vec![v]).collect())
                        .collect::<Vec<_>>(),
                ) {
                    set.insert(nu);
                }
            }
            set.into_iter().collect()
        })
        .collect();
    let (window, tilde) = uniform_pair(n);
    Ok(DecompositionPlan {
        active: cartesian(&slots),
        window,
        tilde,
        config,
        multilinearity: sigma.multilinearity,
        n,
    })
}

/// Plan covering inputs with spectra in `|ξ_j|_∞ ≤ band`.
pub fn plan_for_band(
    multilinearity: usize,
    n: usize,
    band: f64,
    config: ExpansionConfig,
) -> Result<DecompositionPlan> {
    config.validate()?;
    let reach = band.floor() as i64 + 1;
    let single: Vec<Vec<i64>> = cartesian(&vec![(-reach..=reach).map(|v| vec![v]).collect(); n]);
    let (window, tilde) = uniform_pair(n);
    Ok(DecompositionPlan {
        active: cartesian(&vec![single; multilinearity]),
        window,
        tilde,
        config,
        multilinearity,
        n,
    })
}

/// The pieces `σ_Ν = σ Π φ(ξ_j - ν_j)` of the plan.
pub fn decompose_symbol(sigma: &Symbol, plan: &DecompositionPlan) -> Vec<Symbol> {
    plan.active
        .iter()
        .map(|nu| sigma.piece(&plan.window, nu))
        .collect()
}

/// Fourier coefficients of one piece over `Ν + [-π,π]^{Nn}`, indexed by
/// `Μ ∈ [-R,R]^{Nn}` in row-major order.
#[derive(Clone, Debug, Serialize)]
pub struct CoefficientTable {
    pub nu: Vec<i64>,
    pub order: u32,
    pub radius: usize,
    pub dim: usize,
    /// Coefficients of `(I-Δ)^M σ_Ν`.
    pub q: Vec<C64>,
    /// `⟨Μ⟩^{-2M} q`.
    pub p: Vec<C64>,
    /// Coefficients of `σ_Ν` by direct quadrature.
    pub p_direct: Vec<C64>,
}

impl CoefficientTable {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn index(&self, mu: &[i64]) -> Option<usize> {
        let r = self.radius as i64;
        let mut idx = 0usize;
        for &m in mu {
            if m.abs() > r {
                return None;
            }
            idx = idx * self.side() + (m + r) as usize;
        }
        Some(idx)
    }

    pub fn mu_of(&self, mut idx: usize) -> Vec<i64> {
        let mut mu = vec![0i64; self.dim];
        for a in (0..self.dim).rev() {
            mu[a] = (idx % self.side()) as i64 - self.radius as i64;
            idx /= self.side();
        }
        mu
    }
}

/// In-place DFT of a `q^d` tensor along every axis.
fn fft_tensor(data: &mut [C64], dim: usize, q: usize, inverse: bool) {
    use rustfft::FftPlanner;
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(q)
    } else {
        planner.plan_fft_forward(q)
    };
    let mut line = vec![ZERO; q];
    for axis in 0..dim {
        let stride = q.pow((dim - 1 - axis) as u32);
        let outer = data.len() / (stride * q);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * stride * q + s;
                for (t, l) in line.iter_mut().enumerate() {
                    *l = data[base + t * stride];
                }
                fft.process(&mut line);
                for (t, l) in line.iter().enumerate() {
                    data[base + t * stride] = *l;
                }
            }
        }
    }
}

fn piece_parts(piece: &Symbol) -> Result<(&Symbol, &UniformWindow, &[i64])> {
    match &piece.structure {
        Structure::Piece { base, window, nu } => Ok((base, window, nu)),
        _ => Err(Error::Contract("coefficients need a localized piece σ_Ν".into())),
    }
}

/// `P_{Ν,Μ}(x) = (2π)^{-Nn} ∫_{Ν+[-π,π]^{Nn}} e^{-iΜ·Υ} σ_Ν(x,Υ) dΥ` by the
/// trapezoid rule, together with the coefficients of `(I-Δ)^M σ_Ν`.
pub fn symbol_fourier_coefficients(
    piece: &Symbol,
    x: &[f64],
    config: &ExpansionConfig,
) -> Result<CoefficientTable> {
    config.validate()?;
    let (_, window, nu) = piece_parts(piece)?;
    let dim = piece.frequency_dim();
    let qn = config.quadrature;
    let total = (qn as u128).pow(dim as u32);
    guard(total, config.budget)?;
    let h = 2.0 * PI / qn as f64;
    // only nodes inside the window's support box carry mass
    let inside: Vec<usize> = (0..qn)
        .filter(|&k| (-PI + k as f64 * h).abs() < window.support_box)
        .collect();
    let mut samples = vec![ZERO; total as usize];
    let mut upsilon = vec![0.0; dim];
    let mut pos = vec![0usize; dim];
    'outer: loop {
        let mut flat = 0usize;
        for a in 0..dim {
            let k = inside[pos[a]];
            upsilon[a] = nu[a] as f64 - PI + k as f64 * h;
            flat = flat * qn + k;
        }
        samples[flat] = piece.eval(x, &upsilon);
        for a in (0..dim).rev() {
            pos[a] += 1;
            if pos[a] < inside.len() {
                continue 'outer;
            }
            pos[a] = 0;
        }
        break;
    }
    if let Some(bad) = samples.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
        let mut point = x.to_vec();
        point.push(bad as f64);
        return Err(Error::Evaluation { point });
    }
    let mut direct = samples.clone();
    fft_tensor(&mut direct, dim, qn, false);
    let differentiated = match config.laplacian {
        // quadrature of the differentiated interpolant reduces to weighting
        // its coefficients by (1+|k|²)^M
        LaplacianMethod::Spectral => None,
        LaplacianMethod::FiniteDifference => {
            let mut s = samples;
            for _ in 0..config.order {
                s = identity_minus_laplacian(&s, dim, qn, h);
            }
            fft_tensor(&mut s, dim, qn, false);
            Some(s)
        }
    };
    let side = 2 * config.radius + 1;
    let count = side.pow(dim as u32);
    let norm = (qn as f64).powi(-(dim as i32));
    let mut table = CoefficientTable {
        nu: nu.to_vec(),
        order: config.order,
        radius: config.radius,
        dim,
        q: Vec::with_capacity(count),
        p: Vec::with_capacity(count),
        p_direct: Vec::with_capacity(count),
    };
    for idx in 0..count {
        let mu = table.mu_of(idx);
        let mut flat = 0usize;
        let mut parity = 0i64;
        let mut norm2 = 0.0;
        for &m in &mu {
            flat = flat * qn + m.rem_euclid(qn as i64) as usize;
            parity += m;
            norm2 += (m * m) as f64;
        }
        // nodes sit at Ν - π + kh: e^{-iΜ·Υ} = e^{-iΜ·Ν} (-1)^{ΣΜ} e^{-2πiΜ·k/Q}
        let shift: f64 = mu.iter().zip(nu).map(|(m, v)| (m * v) as f64).sum();
        let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let sign = C64::from_polar(sign, -shift);
        let weight = (1.0 + norm2).powi(config.order as i32);
        let p_direct = direct[flat] * sign * norm;
        let q = match &differentiated {
            None => p_direct * weight,
            Some(d) => d[flat] * sign * norm,
        };
        table.q.push(q);
        table.p.push(q / weight);
        table.p_direct.push(p_direct);
    }
    Ok(table)
}

fn identity_minus_laplacian(s: &[C64], dim: usize, q: usize, h: f64) -> Vec<C64> {
    let mut out = s.to_vec();
    let inv = 1.0 / (h * h);
    for (idx, o) in out.iter_mut().enumerate() {
        for axis in 0..dim {
            let stride = q.pow((dim - 1 - axis) as u32);
            let coord = (idx / stride) % q;
            let up = if coord + 1 == q { idx + stride - q * stride } else { idx + stride };
            let down = if coord == 0 { idx + (q - 1) * stride } else { idx - stride };
            *o -= (s[up] - 2.0 * s[idx] + s[down]) * inv;
        }
    }
    out
}

/// Contracts axis 0 of a `[m, rest]` tensor with `e[μ][t]`, giving `[rest, t]`.
fn contract_leading(tensor: &[C64], m: usize, e: &[C64], cols: usize) -> Vec<C64> {
    let rest = tensor.len() / m;
    let mut out = vec![ZERO; rest * cols];
    for mu in 0..m {
        let row = &e[mu * cols..(mu + 1) * cols];
        let slab = &tensor[mu * rest..(mu + 1) * rest];
        for (r, &v) in slab.iter().enumerate() {
            if v == ZERO {
                continue;
            }
            let dst = &mut out[r * cols..(r + 1) * cols];
            for (d, &w) in dst.iter_mut().zip(row) {
                *d += v * w;
            }
        }
    }
    out
}

/// Contributions `(output bin, value)` of one `Ν` to the expansion spectrum:
/// `S_R(Ξ) Π φ̃(ξ_j-ν_j) Π f̂_j(ξ_j)` with `S_R = Σ_{|Μ|≤R} P_{Ν,Μ} e^{iΜ·Ξ}`.
fn piece_contributions(
    p: &[C64],
    nu: &[i64],
    radius: usize,
    tilde: &UniformWindow,
    prep: &Prepared,
    coords: &[Vec<Vec<bool>>],
) -> Vec<(usize, C64)> {
    let spec = prep.spec;
    let n = spec.n;
    let dim = nu.len();
    let step = spec.frequency_step();
    let points = spec.points_per_dim;
    let side = 2 * radius + 1;
    // per axis: grid coordinates inside the tilde window that some active bin uses
    let mut axes: Vec<Vec<usize>> = Vec::with_capacity(dim);
    for a in 0..dim {
        let (j, c) = (a / n, a % n);
        let list: Vec<usize> = (0..points)
            .filter(|&k| {
                coords[j][c][k] && {
                    let t = spec.signed_index(k) as f64 * step - nu[a] as f64;
                    t.abs() < tilde.support_box
                }
            })
            .collect();
        if list.is_empty() {
            return Vec::new();
        }
        axes.push(list);
    }
    let mut tensor = p.to_vec();
    for (a, list) in axes.iter().enumerate() {
        let mut e = Vec::with_capacity(side * list.len());
        for mu in -(radius as i64)..=radius as i64 {
            for &k in list {
                let t = spec.signed_index(k) as f64 * step;
                let w = tilde.profile(t - nu[a] as f64);
                e.push(C64::from_polar(w, mu as f64 * t));
            }
        }
        tensor = contract_leading(&tensor, side, &e, list.len());
    }
    // walk the product of the axis lists (row-major, matching the tensor)
    let mut out = Vec::new();
    let mut pos = vec![0usize; dim];
    let mut ks = [0usize; 2];
    for &value in &tensor {
        let mut amp = value;
        let mut sums = [0i64; 2];
        for j in 0..nu.len() / n {
            for c in 0..n {
                ks[c] = axes[j * n + c][pos[j * n + c]];
                sums[c] += spec.signed_index(ks[c]);
            }
            let f = prep.hats[j].samples[spec.flatten(&ks[..n])];
            amp *= f;
        }
        if amp != ZERO {
            out.push((prep.fold(&sums[..n]), amp));
        }
        for a in (0..dim).rev() {
            pos[a] += 1;
            if pos[a] < axes[a].len() {
                break;
            }
            pos[a] = 0;
        }
    }
    out
}

/// Per slot and axis, which grid coordinates occur among the active bins.
fn active_coordinates(prep: &Prepared) -> Vec<Vec<Vec<bool>>> {
    let spec = prep.spec;
    prep.active
        .iter()
        .map(|bins| {
            let mut used = vec![vec![false; spec.points_per_dim]; spec.n];
            for &b in bins {
                let ks = spec.unflatten(b);
                for c in 0..spec.n {
                    used[c][ks[c]] = true;
                }
            }
            used
        })
        .collect()
}

fn expansion_spectrum(
    tau: &Symbol,
    prep: &Prepared,
    plan: &DecompositionPlan,
    x: &[f64],
) -> Result<Vec<C64>> {
    let coords = active_coordinates(prep);
    let parts: Vec<Vec<(usize, C64)>> = plan
        .active
        .par_iter()
        .map(|nu| {
            let piece = tau.piece(&plan.window, nu);
            let table = symbol_fourier_coefficients(&piece, x, &plan.config)?;
            Ok(piece_contributions(
                &table.p,
                nu,
                plan.config.radius,
                &plan.tilde,
                prep,
                &coords,
            ))
        })
        .collect::<Result<_>>()?;
    let spec = prep.spec;
    let mut total = vec![ZERO; spec.len()];
    for part in parts {
        for (bin, v) in part {
            total[bin] += v;
        }
    }
    Ok(total)
}

fn check_plan(sigma: &Symbol, plan: &DecompositionPlan) -> Result<()> {
    if plan.multilinearity != sigma.multilinearity || plan.n != sigma.n {
        return Err(Error::Contract(format!(
            "plan is for N = {}, n = {}; symbol has N = {}, n = {}",
            plan.multilinearity, plan.n, sigma.multilinearity, sigma.n
        )));
    }
    plan.config.validate()
}

/// `Σ_{|Μ|_∞≤R} Σ_Ν P_{Ν,Μ}(x) Π φ̃(D-ν_j) f_j(x+μ_j)`, assembled in
/// frequency: every product term is a bin-wise multiple of `Π f̂_j`.
pub fn apply_via_expansion(
    sigma: &Symbol,
    inputs: &[GridFunction],
    plan: &DecompositionPlan,
) -> Result<GridFunction> {
    check_plan(sigma, plan)?;
    let prep = Prepared::new(sigma, inputs)?;
    if prep.tuple_count() == 0 {
        return Ok(prep.zero_output());
    }
    let per_table = (plan.config.quadrature as u128).pow(sigma.frequency_dim() as u32);
    let tables = plan.active.len() as u128 * per_table;
    let spec = prep.spec;
    let vol_scale = spec.volume().powi(1 - sigma.multilinearity as i32);
    let x0 = vec![0.0; sigma.n];
    match sigma.x_dependence() {
        XDependence::Independent => {
            guard(tables, plan.config.budget)?;
            let mut s = expansion_spectrum(sigma, &prep, plan, &x0)?;
            s.iter_mut().for_each(|v| *v *= vol_scale);
            spectrum_to_output(spec, s)
        }
        XDependence::Factored(amplitude, tau) => {
            guard(tables, plan.config.budget)?;
            let mut s = expansion_spectrum(&tau, &prep, plan, &x0)?;
            s.iter_mut().for_each(|v| *v *= vol_scale);
            let mut out = spectrum_to_output(spec, s)?;
            multiply_by_amplitude(&mut out, amplitude);
            Ok(out)
        }
        XDependence::General => {
            guard(tables * spec.len() as u128, plan.config.budget)?;
            let roots = unit_roots(spec.points_per_dim);
            let scale = spec.volume().powi(-(sigma.multilinearity as i32));
            let mut samples = Vec::with_capacity(spec.len());
            for i in 0..spec.len() {
                let x = spec.point_vec(i);
                let ks = spec.unflatten(i);
                let s = expansion_spectrum(sigma, &prep, plan, &x)?;
                let mut acc = ZERO;
                for (b, v) in s.iter().enumerate() {
                    if *v != ZERO {
                        let sb = prep.signed[b];
                        acc += v * grid_phase(&roots, &ks[..spec.n], &sb[..spec.n]);
                    }
                }
                samples.push(acc * scale);
            }
            GridFunction::from_samples(spec, samples, Domain::Space)
        }
    }
}

/// The same truncated expansion evaluated literally in space, as a product
/// of shifted box projections. Meant for small radii.
pub fn apply_via_expansion_spatial(
    sigma: &Symbol,
    inputs: &[GridFunction],
    plan: &DecompositionPlan,
) -> Result<GridFunction> {
    check_plan(sigma, plan)?;
    let prep = Prepared::new(sigma, inputs)?;
    let spec = prep.spec;
    let n = spec.n;
    let (amplitude, tau) = match sigma.x_dependence() {
        XDependence::Independent => (None, sigma.clone()),
        XDependence::Factored(a, tau) => (Some(a.clone()), tau),
        XDependence::General => {
            return Err(Error::Unsupported(
                "spatial expansion needs x-independent coefficients".into(),
            ))
        }
    };
    let r = plan.config.radius as i64;
    let mus: Vec<Vec<i64>> = cartesian(&vec![(-r..=r).map(|v| vec![v]).collect(); n]);
    let side = (2 * r + 1) as usize;
    let per_slot = side.pow(n as u32);
    let x0 = vec![0.0; n];
    let mut out = vec![ZERO; spec.len()];
    let mut cache: std::collections::HashMap<(usize, Vec<i64>), Vec<GridFunction>> =
        std::collections::HashMap::new();
    for nu in &plan.active {
        let table = symbol_fourier_coefficients(&tau.piece(&plan.window, nu), &x0, &plan.config)?;
        for j in 0..sigma.multilinearity {
            let key = (j, nu[j * n..(j + 1) * n].to_vec());
            if !cache.contains_key(&key) {
                let centre: Vec<f64> = key.1.iter().map(|&v| v as f64).collect();
                let tilde = plan.tilde.clone();
                let mut list = Vec::with_capacity(per_slot);
                for mu in &mus {
                    let (c, shift) = (centre.clone(), mu.clone());
                    let t = tilde.clone();
                    let m = SpectrumSampler::new(move |xi| {
                        let local: Vec<f64> = xi.iter().zip(&c).map(|(a, b)| a - b).collect();
                        let phase: f64 = shift.iter().zip(xi).map(|(a, b)| *a as f64 * b).sum();
                        C64::from_polar(t.eval(&local), phase)
                    });
                    list.push(apply_multiplier(&m, &inputs[j])?);
                }
                cache.insert(key, list);
            }
        }
        let boxed: Vec<&Vec<GridFunction>> = (0..sigma.multilinearity)
            .map(|j| &cache[&(j, nu[j * n..(j + 1) * n].to_vec())])
            .collect();
        let big_mus = cartesian(&vec![mus.clone(); sigma.multilinearity]);
        for big in &big_mus {
            let p = table.p[table.index(big).expect("Μ inside the table")];
            if p == ZERO {
                continue;
            }
            let mut prod = vec![p; spec.len()];
            for (j, slot) in boxed.iter().enumerate() {
                let mu = &big[j * n..(j + 1) * n];
                let idx = mus.iter().position(|m| m == mu).expect("μ in range");
                for (o, v) in prod.iter_mut().zip(&slot[idx].samples) {
                    *o *= v;
                }
            }
            for (o, v) in out.iter_mut().zip(prod) {
                *o += v;
            }
        }
    }
    let mut result = GridFunction::from_samples(spec, out, Domain::Space)?;
    if let Some(a) = amplitude {
        multiply_by_amplitude(&mut result, &a);
    }
    Ok(result)
}

/// `x ↦ Q_{Ν,Μ}(x)` on the grid, one quadrature per grid point.
pub fn coefficient_field(
    sigma: &Symbol,
    nu: &[i64],
    mu: &[i64],
    window: &UniformWindow,
    config: &ExpansionConfig,
    spec: &GridSpec,
) -> Result<GridFunction> {
    let piece = sigma.piece(window, nu);
    let per_point = (config.quadrature as u128).pow(sigma.frequency_dim() as u32);
    guard(per_point * spec.len() as u128, config.budget.max(per_point * 4096))?;
    let samples = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let x = spec.point_vec(i);
            let table = symbol_fourier_coefficients(&piece, &x, config)?;
            let idx = table.index(mu).ok_or(Error::Index {
                what: "Μ",
                index: mu.iter().map(|v| v.abs()).max().unwrap_or(0),
                max: config.radius as i64,
            })?;
            Ok(table.q[idx])
        })
        .collect::<Result<Vec<_>>>()?;
    GridFunction::from_samples(*spec, samples, Domain::Space)
}

#[derive(Clone, Debug, Serialize)]
pub struct BandDecay {
    pub levels: Vec<usize>,
    /// `‖ψ_{ℓ₀}(D) Q_{Ν,Μ}‖_∞` per level.
    pub values: Vec<f64>,
    /// Levels whose band is numerically empty.
    pub skipped: Vec<usize>,
    pub fit: Option<SlopeFit>,
}

/// Relative size below which a band of `Q_{Ν,Μ}` counts as empty.
pub const EMPTY_BAND: f64 = 1e-13;

/// `‖ψ_{ℓ₀}(D) Q_{Ν,Μ}‖_∞` for the listed levels and the log₂ slope over
/// the non-empty ones.
pub fn coefficient_band_decay(
    field: &GridFunction,
    family: &WindowFamily,
    levels: &[usize],
) -> Result<BandDecay> {
    let scale = field.max_abs();
    let mut out = BandDecay {
        levels: Vec::new(),
        values: Vec::new(),
        skipped: Vec::new(),
        fit: None,
    };
    for &level in levels {
        let v = band_project(level, family, field)?.max_abs();
        if v <= EMPTY_BAND * scale {
            out.skipped.push(level);
        } else {
            out.levels.push(level);
            out.values.push(v);
        }
    }
    if out.levels.len() >= 3 {
        let pairs: Vec<(f64, f64)> = out
            .levels
            .iter()
            .zip(&out.values)
            .map(|(l, v)| (*l as f64, *v))
            .collect();
        out.fit = Some(fit_slope(&pairs)?);
    }
    Ok(out)
}

/// `d = ⌈log₂(N+1)⌉ + 2`.
pub fn support_constant(multilinearity: usize) -> u32 {
    ((multilinearity + 1) as f64).log2().ceil() as u32 + 2
}

/// Half-width `2^{ℓ₀+d}` of the box containing the spectrum of
/// `Q_{ℓ₀,Ν,Μ} Π □_{ν_j} F_j` around `ν_1+…+ν_N`, after checking that it
/// covers the convolution of the factor supports.
pub fn containment_half_width(
    family: &WindowFamily,
    level: usize,
    multilinearity: usize,
    tilde: &UniformWindow,
) -> Result<f64> {
    let d = support_constant(multilinearity);
    let half = f64::powi(2.0, (level as u32 + d) as i32);
    let (_, outer) = support_annulus(family.kind, level);
    let needed = outer + multilinearity as f64 * tilde.support_box;
    if half < needed {
        return Err(Error::Contract(format!(
            "2^(ℓ₀+d) = {half} does not cover the supports ({needed})"
        )));
    }
    Ok(half)
}

/// Largest `|ℱ[g]|` outside `centre + [-w,w]ⁿ`, relative to `max|ℱ[g]|`.
pub fn spectrum_outside_box(g: &GridFunction, centre: &[f64], half_width: f64) -> Result<f64> {
    let hat = transform(g, Direction::Forward)?;
    let spec = g.spec;
    let peak = hat.max_abs();
    if peak == 0.0 {
        return Ok(0.0);
    }
    let mut xi = vec![0.0; spec.n];
    let mut worst = 0.0f64;
    for (i, v) in hat.samples.iter().enumerate() {
        spec.frequency(i, &mut xi);
        if xi.iter().zip(centre).any(|(a, c)| (a - c).abs() > half_width) {
            worst = worst.max(v.norm());
        }
    }
    Ok(worst / peak)
}

/// `□_ν f = φ̃(D-ν) f`.
pub fn tilde_box(tilde: &UniformWindow, nu: &[i64], f: &GridFunction) -> Result<GridFunction> {
    let centre: Vec<f64> = nu.iter().map(|&v| v as f64).collect();
    let t = tilde.clone();
    let m = SpectrumSampler::real(move |xi| {
        let local: Vec<f64> = xi.iter().zip(&centre).map(|(a, b)| a - b).collect();
        t.eval(&local)
    });
    apply_multiplier(&m, f)
}

/// Levels `(ℓ₀, ℓ_1, …, ℓ_N)`, output band `k` and shift `Μ` selecting one
/// remainder term.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemainderIndex {
    pub levels: Vec<usize>,
    pub k: usize,
    pub mu: Vec<i64>,
}

/// Does `ψ_k`'s support annulus meet `ν + [-w,w]ⁿ`?
fn annulus_meets_box(family: &WindowFamily, k: usize, nu: &[i64], w: f64) -> bool {
    let (inner, outer) = support_annulus(family.kind, k);
    let mut near = 0.0;
    let mut far = 0.0;
    for &c in nu {
        let (lo, hi) = (c as f64 - w, c as f64 + w);
        let close = if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            -hi
        } else {
            0.0
        };
        near += close * close;
        far += lo.abs().max(hi.abs()).powi(2);
    }
    near.sqrt() <= outer && far.sqrt() >= inner
}

/// `R_{𝒍,k} = Σ_{Ν: ν_1+…+ν_N ∈ Λ_{k,ℓ₀}} Q_{ℓ₀,Ν,Μ} Π □_{ν_j} F^j_{ℓ_j,μ_j}`
/// with `F^j_{ℓ_j,μ_j} = ψ_{ℓ_j}(D) f_j(· + μ_j)`.
pub fn remainder_term(
    sigma: &Symbol,
    inputs: &[GridFunction],
    plan: &DecompositionPlan,
    family: &WindowFamily,
    index: &RemainderIndex,
) -> Result<GridFunction> {
    check_plan(sigma, plan)?;
    let big_n = sigma.multilinearity;
    let n = sigma.n;
    if index.levels.len() != big_n + 1 || index.mu.len() != big_n * n {
        return Err(Error::Contract("remainder index has the wrong shape".into()));
    }
    let spec = inputs[0].spec;
    let l0 = index.levels[0];
    let half = containment_half_width(family, l0, big_n, &plan.tilde)?;
    let pieces: Vec<GridFunction> = (0..big_n)
        .map(|j| {
            let shift: Vec<f64> = index.mu[j * n..(j + 1) * n].iter().map(|&v| v as f64).collect();
            band_project(index.levels[j + 1], family, &inputs[j].translate(&shift)?)
        })
        .collect::<Result<_>>()?;
    let x0 = vec![0.0; n];
    let (amplitude_band, tau) = match sigma.x_dependence() {
        XDependence::Independent => (None, Some(sigma.clone())),
        XDependence::Factored(a, tau) => {
            let field = GridFunction::from_fn(spec, |x| a.eval(x));
            (Some(band_project(l0, family, &field)?), Some(tau))
        }
        XDependence::General => (None, None),
    };
    let mut out = vec![ZERO; spec.len()];
    let mut boxes: std::collections::HashMap<(usize, Vec<i64>), GridFunction> =
        std::collections::HashMap::new();
    for nu in &plan.active {
        let mut total = vec![0i64; n];
        for j in 0..big_n {
            for a in 0..n {
                total[a] += nu[j * n + a];
            }
        }
        if !annulus_meets_box(family, index.k, &total, half) {
            continue;
        }
        let q_band: GridFunction = match (&tau, &amplitude_band) {
            (Some(t), band) => {
                let table = symbol_fourier_coefficients(&t.piece(&plan.window, nu), &x0, &plan.config)?;
                let q = table.q[table.index(&index.mu).expect("Μ inside the table")];
                match band {
                    Some(b) => b.scaled(q),
                    None => {
                        let psi0 = family.eval(l0, &x0);
                        GridFunction::from_fn(spec, |_| q * psi0)
                    }
                }
            }
            (None, _) => {
                let field =
                    coefficient_field(sigma, nu, &index.mu, &plan.window, &plan.config, &spec)?;
                band_project(l0, family, &field)?
            }
        };
        let mut prod = q_band.samples;
        for j in 0..big_n {
            let key = (j, nu[j * n..(j + 1) * n].to_vec());
            if !boxes.contains_key(&key) {
                let b = tilde_box(&plan.tilde, &key.1, &pieces[j])?;
                boxes.insert(key.clone(), b);
            }
            for (o, v) in prod.iter_mut().zip(&boxes[&key].samples) {
                *o *= v;
            }
        }
        for (o, v) in out.iter_mut().zip(prod) {
            *o += v;
        }
    }
    GridFunction::from_samples(spec, out, Domain::Space)
}
