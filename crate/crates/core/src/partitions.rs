//! Littlewood–Paley families and frequency-uniform windows.
//!
//! Every window is built from the C^∞ step
//! `s(u) = e^{-1/u} / (e^{-1/u} + e^{-1/(1-u)})`, which is exactly 0 for
//! `u ≤ 0`, exactly 1 for `u ≥ 1` and satisfies `s(u) + s(1-u) = 1`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, fft_nd, Direction, GridFunction, GridSpec, SpectrumSampler};

/// C^∞ step from 0 (at `u ≤ 0`) to 1 (at `u ≥ 1`).
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Annuli `2^{k-1} ≤ |ξ| ≤ 2^{k+1}`, consecutive windows overlap.
    GenericLp,
    /// Plateau `2^{ℓ∓1/4}`, support `2^{ℓ∓3/4}`.
    SharpLp,
    /// Plateau `2^{ℓ∓1/8}`, support `2^{ℓ∓1/4}`. Not a partition of unity.
    SharpLpTilde,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic_lp" | "generic" => Ok(Self::GenericLp),
            "sharp_lp" | "sharp" => Ok(Self::SharpLp),
            "sharp_lp_tilde" | "tilde" => Ok(Self::SharpLpTilde),
            other => Err(Error::Parse(format!("unknown window family `{other}`"))),
        }
    }
}

// radial cut-offs: 1 near the origin, 0 far away
fn generic_cutoff(r: f64) -> f64 {
    1.0 - smooth_step(r - 1.0)
}

fn sharp_cutoff(r: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    1.0 - smooth_step((r.log2() - 0.25) / 0.5)
}

fn tilde_window(level: usize, r: f64) -> f64 {
    if level == 0 {
        if r <= 0.0 {
            return 1.0;
        }
        return smooth_step((0.25 - r.log2()) / 0.125);
    }
    if r <= 0.0 {
        return 0.0;
    }
    let u = (r.log2() - level as f64).abs();
    smooth_step((0.25 - u) / 0.125)
}

/// Radial value of window `k` of a family at `|ξ| = r`.
pub fn radial_window(kind: FamilyKind, k: usize, r: f64) -> f64 {
    match kind {
        FamilyKind::GenericLp => {
            if k == 0 {
                generic_cutoff(r)
            } else {
                generic_cutoff(r / f64::powi(2.0, k as i32))
                    - generic_cutoff(r / f64::powi(2.0, k as i32 - 1))
            }
        }
        FamilyKind::SharpLp => {
            if k == 0 {
                sharp_cutoff(r)
            } else {
                sharp_cutoff(r / f64::powi(2.0, k as i32))
                    - sharp_cutoff(r / f64::powi(2.0, k as i32 - 1))
            }
        }
        FamilyKind::SharpLpTilde => tilde_window(k, r),
    }
}

/// Support annulus `[inner, outer]` of window `k`.
pub fn support_annulus(kind: FamilyKind, k: usize) -> (f64, f64) {
    let l = k as f64;
    match (kind, k) {
        (FamilyKind::GenericLp, 0) => (0.0, 2.0),
        (FamilyKind::GenericLp, _) => (f64::powf(2.0, l - 1.0), f64::powf(2.0, l + 1.0)),
        (FamilyKind::SharpLp, 0) => (0.0, f64::powf(2.0, 0.75)),
        (FamilyKind::SharpLp, _) => (f64::powf(2.0, l - 0.75), f64::powf(2.0, l + 0.75)),
        (FamilyKind::SharpLpTilde, 0) => (0.0, f64::powf(2.0, 0.25)),
        (FamilyKind::SharpLpTilde, _) => (f64::powf(2.0, l - 0.25), f64::powf(2.0, l + 0.25)),
    }
}

/// Annulus on which window `k` equals 1, where the family prescribes one.
pub fn plateau_annulus(kind: FamilyKind, k: usize) -> Option<(f64, f64)> {
    let l = k as f64;
    match (kind, k) {
        (FamilyKind::GenericLp, _) => None,
        (FamilyKind::SharpLp, 0) => Some((0.0, f64::powf(2.0, 0.25))),
        (FamilyKind::SharpLp, _) => Some((f64::powf(2.0, l - 0.25), f64::powf(2.0, l + 0.25))),
        (FamilyKind::SharpLpTilde, 0) => Some((0.0, f64::powf(2.0, 0.125))),
        (FamilyKind::SharpLpTilde, _) => {
            Some((f64::powf(2.0, l - 0.125), f64::powf(2.0, l + 0.125)))
        }
    }
}

/// A truncated dyadic family `{ψ_k}_{k=0..=K}`.
#[derive(Clone, Debug)]
pub struct WindowFamily {
    pub kind: FamilyKind,
    pub max_level: usize,
    pub windows: Vec<SpectrumSampler>,
}

impl WindowFamily {
    pub fn window(&self, k: usize) -> Result<&SpectrumSampler> {
        self.windows.get(k).ok_or(Error::Index {
            what: "window level",
            index: k as i64,
            max: self.max_level as i64,
        })
    }

    pub fn eval(&self, k: usize, xi: &[f64]) -> f64 {
        self.windows[k].eval(xi).re
    }

    /// Radius below which the truncated family sums to one.
    pub fn coverage_radius(&self) -> f64 {
        let k = self.max_level as f64;
        match self.kind {
            FamilyKind::GenericLp => f64::powf(2.0, k),
            FamilyKind::SharpLp => f64::powf(2.0, k + 0.25),
            FamilyKind::SharpLpTilde => 0.0,
        }
    }

    /// Copy with window `k` replaced by zero.
    pub fn without_window(&self, k: usize) -> Self {
        let mut out = self.clone();
        if k < out.windows.len() {
            out.windows[k] = SpectrumSampler::constant(C64::new(0.0, 0.0));
        }
        out
    }
}

/// `ψ_k(D) f`.
pub fn band_project(k: usize, family: &WindowFamily, f: &GridFunction) -> Result<GridFunction> {
    apply_multiplier(family.window(k)?, f)
}

/// Builds the family of `kind` with levels `0..=max_level`.
///
/// When a grid is given, levels whose annulus lies entirely beyond the
/// grid's Nyquist frequency are rejected.
pub fn make_lp_family(
    kind: FamilyKind,
    max_level: usize,
    grid: Option<&GridSpec>,
) -> Result<WindowFamily> {
    if max_level < 1 {
        return Err(Error::Config("max level K must be at least 1".into()));
    }
    if let Some(spec) = grid {
        let (inner, _) = support_annulus(kind, max_level);
        let reach = spec.max_frequency() * (spec.n as f64).sqrt();
        if inner > reach {
            return Err(Error::Config(format!(
                "level {max_level} starts at |ξ| = {inner:.3}, beyond the grid reach {reach:.3}"
            )));
        }
    }
    let windows = (0..=max_level)
        .map(|k| {
            let (_, outer) = support_annulus(kind, k);
            SpectrumSampler::real(move |xi| {
                let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                radial_window(kind, k, r)
            })
            .with_support(outer)
        })
        .collect();
    Ok(WindowFamily {
        kind,
        max_level,
        windows,
    })
}

/// Smallest level count so that the family covers every frequency of `spec`.
pub fn levels_for_grid(kind: FamilyKind, spec: &GridSpec) -> usize {
    let reach = spec.max_frequency() * (spec.n as f64).sqrt();
    let mut k = 1;
    loop {
        let family_reach = match kind {
            FamilyKind::GenericLp => f64::powi(2.0, k as i32),
            _ => f64::powf(2.0, k as f64 + 0.25),
        };
        if family_reach >= reach {
            return k;
        }
        k += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformKind {
    Phi,
    PhiTilde,
    KappaWiener,
}

/// Which construction the uniform window follows: the Fourier-series
/// windows (`[-1,1]ⁿ` / `[-3,3]ⁿ`) or the narrow extremal windows
/// (`[-1/4,1/4]ⁿ` / `[-1/2,1/2]ⁿ`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowVariant {
    S3,
    S4,
}

/// Tensor-product window `Π w(ξ_i)` with compact support.
#[derive(Clone, Debug)]
pub struct UniformWindow {
    pub kind: UniformKind,
    pub variant: WindowVariant,
    pub n: usize,
    /// Half-width of the support box per axis.
    pub support_box: f64,
    amplitude: f64,
}

fn unit_bump(t: f64) -> f64 {
    let a = t.abs();
    if a >= 1.0 {
        0.0
    } else {
        smooth_step(1.0 - a)
    }
}

/// Lower bound required of `|F⁻¹φ|` on `[-1,1]ⁿ` for the narrow window.
pub const NARROW_INVERSE_FLOOR: f64 = 1.05;

impl UniformWindow {
    /// One-dimensional profile.
    pub fn profile(&self, t: f64) -> f64 {
        let a = t.abs();
        match (self.kind, self.variant) {
            (UniformKind::Phi, WindowVariant::S3) | (UniformKind::KappaWiener, _) => unit_bump(t),
            (UniformKind::PhiTilde, WindowVariant::S3) => {
                if a <= 1.0 {
                    1.0
                } else {
                    smooth_step((3.0 - a) / 2.0)
                }
            }
            (UniformKind::Phi, WindowVariant::S4) => self.amplitude * unit_bump(4.0 * t),
            (UniformKind::PhiTilde, WindowVariant::S4) => {
                if a <= 0.25 {
                    1.0
                } else {
                    smooth_step((0.5 - a) / 0.25)
                }
            }
        }
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        let mut v = 1.0;
        for &t in xi {
            if t.abs() >= self.support_box {
                return 0.0;
            }
            v *= self.profile(t);
        }
        v
    }

    pub fn sampler(&self) -> SpectrumSampler {
        let w = self.clone();
        SpectrumSampler::real(move |xi| w.eval(xi))
            .with_support(self.support_box * (self.n as f64).sqrt())
    }

    /// `∫ w(t) dt` of the one-dimensional profile (trapezoid rule, exact
    /// up to rounding for these compactly supported smooth profiles).
    pub fn profile_integral(&self) -> f64 {
        let m = 8192;
        let a = self.support_box;
        let h = 2.0 * a / m as f64;
        (0..=m).map(|i| self.profile(-a + i as f64 * h)).sum::<f64>() * h
    }

    /// One-dimensional `F⁻¹w(x) = (2π)⁻¹ ∫ w(t) e^{ixt} dt` (the profiles
    /// are even, so the value is real).
    pub fn inverse_fourier_1d(&self, x: f64) -> f64 {
        profile_inverse_fourier(|t| self.profile(t), self.support_box, x)
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
}

fn profile_inverse_fourier(w: impl Fn(f64) -> f64, half_width: f64, x: f64) -> f64 {
    let m = 4096;
    let h = 2.0 * half_width / m as f64;
    let s: f64 = (0..=m)
        .map(|i| {
            let t = -half_width + i as f64 * h;
            w(t) * (x * t).cos()
        })
        .sum();
    s * h / (2.0 * PI)
}

pub fn make_uniform_window(kind: UniformKind, variant: WindowVariant, n: usize) -> UniformWindow {
    let support_box = match (kind, variant) {
        (UniformKind::Phi, WindowVariant::S3) | (UniformKind::KappaWiener, _) => 1.0,
        (UniformKind::PhiTilde, WindowVariant::S3) => 3.0,
        (UniformKind::Phi, WindowVariant::S4) => 0.25,
        (UniformKind::PhiTilde, WindowVariant::S4) => 0.5,
    };
    let amplitude = if (kind, variant) == (UniformKind::Phi, WindowVariant::S4) {
        // min over |x| ≤ 1 of the unscaled inverse transform sits at |x| = 1
        let base = (0..=64)
            .map(|i| profile_inverse_fourier(|t| unit_bump(4.0 * t), 0.25, i as f64 / 64.0))
            .fold(f64::INFINITY, f64::min);
        NARROW_INVERSE_FLOOR / base
    } else {
        1.0
    };
    UniformWindow {
        kind,
        variant,
        n,
        support_box,
        amplitude,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Frequency where the worst deviation occurred.
    pub location: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub order: usize,
    /// `sup_ξ 2^{k·order} |∂^order ψ_k|` along the first axis, per level.
    pub per_level: Vec<f64>,
    pub fitted_constant: f64,
    /// max/min of `per_level` over `k ≥ 1`.
    pub variation: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub derivatives: Vec<DerivativeCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, dev: f64, tol: f64, loc: Option<Vec<f64>>) {
        self.checks.push(Check {
            name: name.into(),
            max_deviation: dev,
            tolerance: tol,
            passed: dev <= tol,
            location: loc,
        });
    }
}

struct Worst {
    dev: f64,
    at: Option<Vec<f64>>,
}

impl Worst {
    fn new() -> Self {
        Self { dev: 0.0, at: None }
    }
    fn update(&mut self, dev: f64, xi: &[f64]) {
        if dev > self.dev || (dev.is_nan() && !self.dev.is_nan()) {
            self.dev = dev;
            self.at = Some(xi.to_vec());
        }
    }
}

pub const PARTITION_TOLERANCE: f64 = 1e-12;

/// Checks a dyadic family bin by bin on `grid` and its derivative bounds by
/// spectral differentiation along the first axis.
pub fn verify_family(family: &WindowFamily, grid: &GridSpec) -> VerificationReport {
    let mut report = VerificationReport::default();
    let kind = family.kind;
    let kmax = family.max_level;
    let mut xi = vec![0.0; grid.n];

    let mut partition = Worst::new();
    let mut support = Worst::new();
    let mut plateau = Worst::new();
    let mut negative = Worst::new();
    let coverage = family.coverage_radius();
    let values_at = |xi: &[f64]| -> Vec<f64> { (0..=kmax).map(|k| family.eval(k, xi)).collect() };

    for i in 0..grid.len() {
        grid.frequency(i, &mut xi);
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let vals = values_at(&xi);
        if kind != FamilyKind::SharpLpTilde && r <= coverage {
            let s: f64 = vals.iter().sum();
            partition.update((s - 1.0).abs(), &xi);
        }
        for (k, &v) in vals.iter().enumerate() {
            let (inner, outer) = support_annulus(kind, k);
            if (r < inner || r > outer) && v != 0.0 {
                support.update(v.abs(), &xi);
            }
            if let Some((a, b)) = plateau_annulus(kind, k) {
                if r >= a && r <= b {
                    plateau.update((v - 1.0).abs(), &xi);
                }
            }
            if v < 0.0 {
                negative.update(-v, &xi);
            }
        }
    }
    if kind != FamilyKind::SharpLpTilde {
        report.push("partition_of_unity", partition.dev, PARTITION_TOLERANCE, partition.at);
    }
    report.push("support", support.dev, 0.0, support.at);
    if kind != FamilyKind::GenericLp {
        report.push("plateau", plateau.dev, 0.0, plateau.at);
    }
    report.push("nonnegative", negative.dev, 0.0, negative.at);

    let orders = [1, 2];
    let sups = derivative_sups(family, &orders);
    for (idx, &order) in orders.iter().enumerate() {
        let per_level = sups.iter().map(|level| level[idx]).collect();
        report.derivatives.push(derivative_check(order, per_level));
    }
    report
}

/// Pointwise `ψ_k ψ̃_ℓ = δ_{kℓ} ψ̃_ℓ` on the grid.
pub fn verify_tilde_products(
    sharp: &WindowFamily,
    tilde: &WindowFamily,
    grid: &GridSpec,
) -> Check {
    let mut worst = Worst::new();
    let mut xi = vec![0.0; grid.n];
    let kmax = sharp.max_level.min(tilde.max_level);
    for i in 0..grid.len() {
        grid.frequency(i, &mut xi);
        for l in 0..=kmax {
            let t = tilde.eval(l, &xi);
            if t == 0.0 {
                continue;
            }
            for k in 0..=sharp.max_level {
                let expected = if k == l { t } else { 0.0 };
                let dev = (sharp.eval(k, &xi) * t - expected).abs();
                worst.update(dev, &xi);
            }
        }
    }
    Check {
        name: "tilde_products".into(),
        max_deviation: worst.dev,
        tolerance: 0.0,
        passed: worst.dev == 0.0,
        location: worst.at,
    }
}

/// Samples per level for the derivative check; each level is resolved on
/// its own interval `[-2^{k+2}, 2^{k+2}]`.
const DERIVATIVE_POINTS: usize = 1 << 13;

/// `sup |∂^order ψ_k| · 2^{k·order}` for every level and each order in `orders`.
fn derivative_sups(family: &WindowFamily, orders: &[usize]) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    let points = DERIVATIVE_POINTS;
    (0..=family.max_level)
        .into_par_iter()
        .map(|k| {
            let half = f64::powi(2.0, k as i32 + 2);
            let step = 2.0 * half / points as f64;
            let mut spectrum: Vec<C64> = (0..points)
                .map(|i| {
                    let t = -half + i as f64 * step;
                    C64::new(radial_window(family.kind, k, t.abs()), 0.0)
                })
                .collect();
            fft_nd(&mut spectrum, 1, points, false);
            orders
                .iter()
                .map(|&order| {
                    let mut data: Vec<C64> = spectrum
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let j = if i < points / 2 {
                                i as f64
                            } else {
                                i as f64 - points as f64
                            };
                            let w = PI * j / half;
                            v * C64::new(0.0, w).powu(order as u32) / points as f64
                        })
                        .collect();
                    fft_nd(&mut data, 1, points, true);
                    let sup = data.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
                    sup * f64::powi(2.0, (k * order) as i32)
                })
                .collect()
        })
        .collect()
}

fn derivative_check(order: usize, per_level: Vec<f64>) -> DerivativeCheck {
    let fitted_constant = per_level.iter().cloned().fold(0.0, f64::max);
    let upper = &per_level[1..];
    let max = upper.iter().cloned().fold(0.0, f64::max);
    let min = upper.iter().cloned().fold(f64::INFINITY, f64::min);
    DerivativeCheck {
        order,
        per_level,
        fitted_constant,
        variation: max / min,
    }
}

/// Checks a uniform window's defining properties on `grid` frequencies.
pub fn verify_window(window: &UniformWindow, grid: &GridSpec) -> VerificationReport {
    let mut report = VerificationReport::default();
    let n = window.n;
    let mut xi = vec![0.0; grid.n];
    let mut support = Worst::new();
    let mut lattice_sum = Worst::new();
    let mut plateau = Worst::new();
    let mut range = Worst::new();
    let reach = window.support_box.ceil() as i64;
    for i in 0..grid.len() {
        grid.frequency(i, &mut xi);
        let v = window.eval(&xi);
        if xi.iter().any(|t| t.abs() > window.support_box) && v != 0.0 {
            support.update(v.abs(), &xi);
        }
        match window.kind {
            UniformKind::Phi if window.variant == WindowVariant::S3 => {
                let s = lattice_window_sum(window, &xi, reach);
                lattice_sum.update((s - 1.0).abs(), &xi);
            }
            UniformKind::KappaWiener => {
                let s = lattice_window_sum(window, &xi, reach);
                lattice_sum.update((1.0 - s).max(0.0), &xi);
            }
            UniformKind::PhiTilde => {
                let inner = if window.variant == WindowVariant::S3 {
                    1.0
                } else {
                    0.25
                };
                if xi.iter().all(|t| t.abs() <= inner) {
                    plateau.update((v - 1.0).abs(), &xi);
                }
                if !(0.0..=1.0).contains(&v) {
                    range.update(v.abs(), &xi);
                }
            }
            _ => {}
        }
    }
    report.push("support", support.dev, 0.0, support.at);
    match window.kind {
        UniformKind::Phi if window.variant == WindowVariant::S3 => {
            report.push("lattice_sum", lattice_sum.dev, PARTITION_TOLERANCE, lattice_sum.at)
        }
        UniformKind::KappaWiener => {
            report.push("lattice_sum_lower_bound", lattice_sum.dev, PARTITION_TOLERANCE, lattice_sum.at)
        }
        UniformKind::PhiTilde => {
            report.push("plateau", plateau.dev, 0.0, plateau.at);
            report.push("range", range.dev, 0.0, range.at);
        }
        UniformKind::Phi => {
            // |F⁻¹φ| ≥ 1 on [-1,1]ⁿ, tensorized
            let min1 = (0..=200)
                .map(|i| window.inverse_fourier_1d(-1.0 + i as f64 / 100.0).abs())
                .fold(f64::INFINITY, f64::min);
            let min = min1.powi(n as i32);
            report.push("inverse_lower_bound", (1.0 - min).max(0.0), 0.0, None);
        }
    }
    report
}

/// `Σ_{ν ∈ ℤⁿ} w(ξ - ν)`.
pub fn lattice_window_sum(window: &UniformWindow, xi: &[f64], reach: i64) -> f64 {
    let n = xi.len();
    let mut total = 0.0;
    let base: Vec<i64> = xi.iter().map(|t| t.round() as i64).collect();
    let side = (2 * reach + 1) as usize;
    let count = side.pow(n as u32);
    let mut shifted = vec![0.0; n];
    for c in 0..count {
        let mut rem = c;
        for a in 0..n {
            let off = (rem % side) as i64 - reach;
            rem /= side;
            shifted[a] = xi[a] - (base[a] + off) as f64;
        }
        total += window.eval(&shifted);
    }
    total
}

/// `‖F⁻¹ψ̃_ℓ‖_{L¹}` computed on the torus `spec` for each level.
pub fn inverse_l1_norms(family: &WindowFamily, spec: &GridSpec) -> Result<Vec<f64>> {
    (0..=family.max_level)
        .map(|k| {
            let w = family.window(k)?;
            let hat = GridFunction::from_spectrum_fn(*spec, |xi| w.eval(xi));
            let g = crate::grid::transform(&hat, Direction::Inverse)?;
            Ok(g.samples.iter().map(|v| v.norm()).sum::<f64>() * spec.cell_volume())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smooth_step_is_complementary() {
        for i in 0..=1000 {
            let u = i as f64 / 1000.0;
            assert!((smooth_step(u) + smooth_step(1.0 - u) - 1.0).abs() < 1e-15);
        }
        assert_eq!(smooth_step(-0.5), 0.0);
        assert_eq!(smooth_step(1.5), 1.0);
    }

    #[test]
    fn generic_family_sums_to_one_at_random_frequencies() {
        let k = 10;
        let fam = make_lp_family(FamilyKind::GenericLp, k, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bound = f64::powi(2.0, k as i32 - 1);
        for _ in 0..1000 {
            let xi = [rng.random_range(-bound..bound)];
            let s: f64 = (0..=k).map(|j| fam.eval(j, &xi)).sum();
            assert!((s - 1.0).abs() < 1e-12, "sum {s} at {xi:?}");
        }
    }

    #[test]
    fn sharp_family_plateau_and_support_values() {
        let fam = make_lp_family(FamilyKind::SharpLp, 8, None).unwrap();
        assert_eq!(fam.eval(3, &[8.0]), 1.0);
        assert_eq!(fam.eval(3, &[32.0]), 0.0);
        assert_eq!(fam.eval(3, &[0.0, -8.0]), 1.0);
    }

    #[test]
    fn dilation_structure_of_generic_family() {
        for k in 2..8 {
            for i in 0..200 {
                let r = 0.05 * i as f64;
                let a = radial_window(FamilyKind::GenericLp, k, r * f64::powi(2.0, k as i32 - 1));
                let b = radial_window(FamilyKind::GenericLp, 1, r);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn verification_passes_for_generic_family() {
        let grid = GridSpec::new(1, 1 << 12, 4.0).unwrap();
        let fam = make_lp_family(FamilyKind::GenericLp, 9, Some(&grid)).unwrap();
        let rep = verify_family(&fam, &grid);
        assert!(rep.passed(), "{rep:?}");
        let c = rep.check("partition_of_unity").unwrap();
        assert!(c.max_deviation < 1e-12);
        for d in &rep.derivatives {
            assert!(d.fitted_constant.is_finite());
            assert!(d.variation < 2.0, "order {} variation {}", d.order, d.variation);
        }
    }

    #[test]
    fn deleted_window_is_located() {
        let grid = GridSpec::new(1, 1 << 10, 2.0).unwrap();
        let fam = make_lp_family(FamilyKind::GenericLp, 7, Some(&grid))
            .unwrap()
            .without_window(4);
        let rep = verify_family(&fam, &grid);
        let c = rep.check("partition_of_unity").unwrap();
        assert!(!c.passed);
        let at = c.location.clone().unwrap();
        let r = at[0].abs();
        assert!((8.0..=32.0).contains(&r), "gap located at {r}");
    }

    #[test]
    fn family_beyond_nyquist_is_rejected() {
        let grid = GridSpec::new(1, 64, 1.0).unwrap();
        assert!(make_lp_family(FamilyKind::GenericLp, 12, Some(&grid)).is_err());
        assert!(make_lp_family(FamilyKind::GenericLp, 0, None).is_err());
    }

    #[test]
    fn uniform_windows_have_their_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = make_uniform_window(UniformKind::Phi, WindowVariant::S3, 1);
        for _ in 0..1000 {
            let xi = [rng.random_range(-50.0..50.0)];
            assert!((lattice_window_sum(&phi, &xi, 1) - 1.0).abs() < 1e-12);
        }
        let tilde = make_uniform_window(UniformKind::PhiTilde, WindowVariant::S3, 2);
        assert_eq!(tilde.eval(&[0.5, 0.5]), 1.0);
        let narrow = make_uniform_window(UniformKind::Phi, WindowVariant::S4, 1);
        let min = (0..=100)
            .map(|i| narrow.inverse_fourier_1d(-1.0 + 0.02 * i as f64).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 1.0, "min {min}");
        assert_eq!(narrow.eval(&[0.25]), 0.0);
    }

    #[test]
    fn window_verification_reports() {
        let grid = GridSpec::new(1, 1 << 10, 8.0).unwrap();
        for (k, v) in [
            (UniformKind::Phi, WindowVariant::S3),
            (UniformKind::PhiTilde, WindowVariant::S3),
            (UniformKind::Phi, WindowVariant::S4),
            (UniformKind::PhiTilde, WindowVariant::S4),
            (UniformKind::KappaWiener, WindowVariant::S3),
        ] {
            let w = make_uniform_window(k, v, 1);
            let rep = verify_window(&w, &grid);
            assert!(rep.passed(), "{k:?} {v:?}: {rep:?}");
        }
    }

    #[test]
    fn sharp_and_tilde_products() {
        let grid = GridSpec::new(1, 1 << 12, 8.0).unwrap();
        let sharp = make_lp_family(FamilyKind::SharpLp, 7, Some(&grid)).unwrap();
        let tilde = make_lp_family(FamilyKind::SharpLpTilde, 7, Some(&grid)).unwrap();
        let c = verify_tilde_products(&sharp, &tilde, &grid);
        assert!(c.passed, "{c:?}");
        assert!(verify_family(&tilde, &grid).passed());
        assert!(verify_family(&sharp, &grid).passed());
    }

    #[test]
    fn tilde_inverse_l1_norms_are_uniform() {
        let grid = GridSpec::new(1, 1 << 14, 64.0).unwrap();
        let tilde = make_lp_family(FamilyKind::SharpLpTilde, 6, Some(&grid)).unwrap();
        let norms = inverse_l1_norms(&tilde, &grid).unwrap();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "{norms:?}");
    }
}
