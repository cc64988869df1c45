//! Discrete quasi-norms on the torus grid.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::Exponent;
use crate::grid::{
    fft_nd, spectral_mass_beyond, transform, Direction, Domain, GridFunction, GridSpec,
};
use crate::partitions::{UniformWindow, WindowFamily};

/// `(Σ|a_j|^q)^{1/q}`, or `max|a_j|` for `q = ∞`.
pub fn lq_norm(magnitudes: &[f64], q: Exponent) -> f64 {
    match q {
        Exponent::Infinite => magnitudes.iter().fold(0.0, |m, v| m.max(v.abs())),
        Exponent::Finite(_) => {
            let qf = q.to_f64();
            magnitudes.iter().map(|v| v.abs().powf(qf)).sum::<f64>().powf(1.0 / qf)
        }
    }
}

/// `ℓ^q` norm of a complex sequence.
pub fn lq_norm_complex(a: &[C64], q: Exponent) -> f64 {
    let mags: Vec<f64> = a.iter().map(|v| v.norm()).collect();
    lq_norm(&mags, q)
}

/// `L^p` norm of pointwise magnitudes sampled on `spec`.
pub fn lp_norm_of_magnitudes(spec: &GridSpec, magnitudes: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinite => magnitudes.iter().fold(0.0, |m, v| m.max(*v)),
        Exponent::Finite(_) => {
            let pf = p.to_f64();
            (magnitudes.iter().map(|v| v.powf(pf)).sum::<f64>() * spec.cell_volume())
                .powf(1.0 / pf)
        }
    }
}

/// Riemann sum `(cell_volume · Σ|f|^p)^{1/p}`, grid maximum for `p = ∞`.
pub fn lp_norm(f: &GridFunction, p: Exponent) -> Result<f64> {
    f.require(Domain::Space)?;
    let mags: Vec<f64> = f.samples.iter().map(|v| v.norm()).collect();
    Ok(lp_norm_of_magnitudes(&f.spec, &mags, p))
}

/// Dyadic scales and mollifier of the truncated maximal function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaximalConfig {
    pub t_levels: Vec<f64>,
}

impl Default for MaximalConfig {
    fn default() -> Self {
        Self {
            t_levels: (0..=10).map(|j| f64::powi(2.0, -j)).collect(),
        }
    }
}

impl MaximalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_levels.is_empty() {
            return Err(Error::Config("maximal function needs at least one t level".into()));
        }
        for w in self.t_levels.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Config("t levels must be strictly decreasing".into()));
            }
        }
        if self.t_levels.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::Config("t levels must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Fourier transform of the Gaussian mollifier, `φ̂(ξ) = e^{-|ξ|²/2}`,
    /// so `∫φ = 1`.
    pub fn mollifier_hat(xi2: f64) -> f64 {
        (-0.5 * xi2).exp()
    }
}

/// `max_t |φ_t * f|` pointwise, from the spectrum of `f`.
pub fn maximal_function(hat: &GridFunction, cfg: &MaximalConfig) -> Result<Vec<f64>> {
    hat.require(Domain::Frequency)?;
    cfg.validate()?;
    let spec = hat.spec;
    let xi2: Vec<f64> = (0..spec.len())
        .map(|i| spec.frequency_vec(i).iter().map(|v| v * v).sum())
        .collect();
    let scale = 1.0 / spec.volume();
    let levels: Vec<Vec<f64>> = cfg
        .t_levels
        .par_iter()
        .map(|&t| {
            let mut data: Vec<C64> = hat
                .samples
                .iter()
                .zip(&xi2)
                .map(|(v, w)| v * (MaximalConfig::mollifier_hat(t * t * w) * scale))
                .collect();
            fft_nd(&mut data, spec.n, spec.points_per_dim, true);
            data.iter().map(|v| v.norm()).collect()
        })
        .collect();
    let mut out = vec![0.0f64; spec.len()];
    for level in &levels {
        for (o, v) in out.iter_mut().zip(level) {
            *o = o.max(*v);
        }
    }
    Ok(out)
}

/// `‖sup_t |φ_t * f|‖_{L^p}` with `t` restricted to `cfg.t_levels`.
pub fn local_hardy_norm(f: &GridFunction, p: Exponent, cfg: &MaximalConfig) -> Result<f64> {
    if p.is_infinite() {
        return Err(Error::Unsupported(
            "h^p is not defined for p = ∞; use bmo_norm".into(),
        ));
    }
    f.require(Domain::Space)?;
    let hat = transform(f, Direction::Forward)?;
    let m = maximal_function(&hat, cfg)?;
    Ok(lp_norm_of_magnitudes(&f.spec, &m, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockNorm {
    Lp,
    Hp,
}

#[derive(Clone, Debug, Serialize)]
pub struct BesovReport {
    /// `2^{ks}·‖ψ_k(D)f‖` per level.
    pub per_block: Vec<f64>,
    pub value: f64,
}

/// Relative spectral mass tolerated beyond the family's coverage radius.
pub const COVERAGE_TOLERANCE: f64 = 1e-10;

/// `‖2^{ks}‖ψ_k(D)f‖_{X}‖_{ℓ^q}` with `X = L^p` or `h^p` (grid maximum at
/// `p = ∞`).
pub fn besov_norm(
    f: &GridFunction,
    p: Exponent,
    q: Exponent,
    s: f64,
    family: &WindowFamily,
    block: BlockNorm,
    cfg: &MaximalConfig,
) -> Result<BesovReport> {
    f.require(Domain::Space)?;
    let hat = transform(f, Direction::Forward)?;
    let radius = family.coverage_radius();
    let mass = spectral_mass_beyond(&hat, radius);
    if mass > COVERAGE_TOLERANCE {
        return Err(Error::Coverage { radius, mass });
    }
    let spec = f.spec;
    let per_block: Vec<f64> = (0..=family.max_level)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let w = family.window(k)?;
            let mut block_hat = hat.clone();
            let mut xi = vec![0.0; spec.n];
            for (i, v) in block_hat.samples.iter_mut().enumerate() {
                spec.frequency(i, &mut xi);
                *v *= w.eval(&xi);
            }
            let norm = match (block, p) {
                (BlockNorm::Hp, Exponent::Finite(_)) => {
                    let m = maximal_function(&block_hat, cfg)?;
                    lp_norm_of_magnitudes(&spec, &m, p)
                }
                _ => lp_norm(&transform(&block_hat, Direction::Inverse)?, p)?,
            };
            Ok(f64::powf(2.0, k as f64 * s) * norm)
        })
        .collect::<Result<_>>()?;
    let value = lq_norm(&per_block, q);
    Ok(BesovReport { per_block, value })
}

/// `sup_k ‖ψ_k(D) f‖_{L^p}`.
pub fn band_sup_norm(f: &GridFunction, p: Exponent, family: &WindowFamily) -> Result<f64> {
    let rep = besov_norm(
        f,
        p,
        Exponent::Infinite,
        0.0,
        family,
        BlockNorm::Lp,
        &MaximalConfig::default(),
    )?;
    Ok(rep.value)
}

/// Dyadic bmo norm: sup of mean oscillations over dyadic grid cubes of side
/// at most 1 plus sup of mean `|f|` over dyadic cubes of side at least 1.
pub fn bmo_norm(f: &GridFunction) -> Result<f64> {
    f.require(Domain::Space)?;
    let spec = f.spec;
    let points = spec.points_per_dim;
    let levels = points.trailing_zeros() as usize;
    let mut oscillation: f64 = 0.0;
    let mut average: f64 = 0.0;
    let mut any_large = false;
    for j in 0..=levels {
        let side = spec.period / f64::powi(2.0, j as i32);
        let small = side <= 1.0;
        let large = side >= 1.0;
        if !small && !large {
            continue;
        }
        let cells = points >> j;
        let (osc, avg) = dyadic_level_stats(f, cells);
        if small {
            oscillation = oscillation.max(osc);
        }
        if large {
            any_large = true;
            average = average.max(avg);
        }
    }
    if !any_large {
        average = dyadic_level_stats(f, points).1;
    }
    Ok(oscillation + average)
}

// max over cubes of `cells` samples per axis of (mean |f - f_Q|, mean |f|)
fn dyadic_level_stats(f: &GridFunction, cells: usize) -> (f64, f64) {
    let spec = f.spec;
    let points = spec.points_per_dim;
    let per_axis = points / cells;
    let cubes = per_axis.pow(spec.n as u32);
    let mut osc: f64 = 0.0;
    let mut avg: f64 = 0.0;
    let mut members = Vec::with_capacity(cells.pow(spec.n as u32));
    for c in 0..cubes {
        members.clear();
        let (cy, cx) = (c / per_axis, c % per_axis);
        if spec.n == 1 {
            members.extend((0..cells).map(|i| f.samples[c * cells + i]));
        } else {
            for r in 0..cells {
                let row = (cy * cells + r) * points + cx * cells;
                members.extend_from_slice(&f.samples[row..row + cells]);
            }
        }
        let count = members.len() as f64;
        let mean: C64 = members.iter().sum::<C64>() / count;
        let dev = members.iter().map(|v| (v - mean).norm()).sum::<f64>() / count;
        let abs = members.iter().map(|v| v.norm()).sum::<f64>() / count;
        osc = osc.max(dev);
        avg = avg.max(abs);
    }
    (osc, avg)
}

/// Integer lattice points `μ` whose box `μ + supp κ` meets the support of
/// `hat`.
pub fn active_lattice(hat: &GridFunction, kappa: &UniformWindow) -> Vec<Vec<i64>> {
    let spec = hat.spec;
    let reach = kappa.support_box;
    let threshold = hat.max_abs() * 1e-14;
    let mut set = std::collections::BTreeSet::new();
    let mut xi = vec![0.0; spec.n];
    let mut local = vec![0.0; spec.n];
    for (i, v) in hat.samples.iter().enumerate() {
        if v.norm() <= threshold || v.norm() == 0.0 {
            continue;
        }
        spec.frequency(i, &mut xi);
        let lo: Vec<i64> = xi.iter().map(|t| (t - reach).floor() as i64).collect();
        let hi: Vec<i64> = xi.iter().map(|t| (t + reach).ceil() as i64).collect();
        let side: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect();
        let count: usize = side.iter().product();
        for c in 0..count {
            let mut rem = c;
            let mut mu = Vec::with_capacity(spec.n);
            for a in 0..spec.n {
                let m = lo[a] + (rem % side[a]) as i64;
                rem /= side[a];
                local[a] = xi[a] - m as f64;
                mu.push(m);
            }
            if kappa.eval(&local) != 0.0 {
                set.insert(mu);
            }
        }
    }
    set.into_iter().collect()
}

pub fn japanese_bracket(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|a| a * a).sum::<f64>()).sqrt()
}

/// `‖‖⟨μ⟩^s □_μ f(x)‖_{ℓ^q_μ}‖_{L^p_x}` over the active lattice.
pub fn wiener_amalgam_norm(
    f: &GridFunction,
    p: Exponent,
    q: Exponent,
    s: f64,
    kappa: &UniformWindow,
) -> Result<f64> {
    f.require(Domain::Space)?;
    let spec = f.spec;
    let hat = transform(f, Direction::Forward)?;
    let lattice = active_lattice(&hat, kappa);
    let pieces: Vec<Vec<f64>> = lattice
        .par_iter()
        .map(|mu| {
            let shift: Vec<f64> = mu.iter().map(|&m| m as f64).collect();
            let weight = japanese_bracket(&shift).powf(s);
            let mut xi = vec![0.0; spec.n];
            let mut data: Vec<C64> = hat
                .samples
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    spec.frequency(i, &mut xi);
                    for (a, b) in xi.iter_mut().zip(&shift) {
                        *a -= b;
                    }
                    v * (kappa.eval(&xi) / spec.volume())
                })
                .collect();
            fft_nd(&mut data, spec.n, spec.points_per_dim, true);
            data.iter().map(|v| v.norm() * weight).collect()
        })
        .collect();
    let mut acc = vec![0.0f64; spec.len()];
    match q {
        Exponent::Infinite => {
            for piece in &pieces {
                for (a, v) in acc.iter_mut().zip(piece) {
                    *a = a.max(*v);
                }
            }
        }
        Exponent::Finite(_) => {
            let qf = q.to_f64();
            for piece in &pieces {
                for (a, v) in acc.iter_mut().zip(piece) {
                    *a += v.powf(qf);
                }
            }
            for a in &mut acc {
                *a = a.powf(1.0 / qf);
            }
        }
    }
    Ok(lp_norm_of_magnitudes(&spec, &acc, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Lp,
    Besov,
    BesovHpVariant,
    LocalHardy,
    Bmo,
    WienerAmalgam,
    /// `sup_k ‖ψ_k(D)f‖_{L^p}`.
    BandSup,
}

impl std::str::FromStr for Space {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lp" => Self::Lp,
            "besov" => Self::Besov,
            "besov_hp" | "besov_hp_variant" => Self::BesovHpVariant,
            "local_hardy" | "hp" => Self::LocalHardy,
            "bmo" => Self::Bmo,
            "wiener" | "wiener_amalgam" => Self::WienerAmalgam,
            "band_sup" => Self::BandSup,
            other => return Err(Error::Parse(format!("unknown space `{other}`"))),
        })
    }
}

/// A quasi-norm with its indices.
#[derive(Clone, Debug, Serialize)]
pub struct NormRequest {
    pub space: Space,
    pub p: Exponent,
    pub q: Exponent,
    pub s: f64,
}

impl NormRequest {
    pub fn new(space: Space, p: Exponent, q: Exponent, s: f64) -> Self {
        Self { space, p, q, s }
    }
}

/// Windows shared by the function-space estimators.
#[derive(Clone, Debug)]
pub struct NormContext {
    pub family: WindowFamily,
    pub kappa: UniformWindow,
    pub maximal: MaximalConfig,
}

impl NormContext {
    pub fn evaluate(&self, req: &NormRequest, f: &GridFunction) -> Result<f64> {
        match req.space {
            Space::Lp => lp_norm(f, req.p),
            Space::Besov | Space::BesovHpVariant => {
                let block = if req.space == Space::Besov {
                    BlockNorm::Lp
                } else {
                    BlockNorm::Hp
                };
                besov_norm(f, req.p, req.q, req.s, &self.family, block, &self.maximal)
                    .map(|r| r.value)
            }
            Space::LocalHardy => local_hardy_norm(f, req.p, &self.maximal),
            Space::Bmo => bmo_norm(f),
            Space::WienerAmalgam => wiener_amalgam_norm(f, req.p, req.q, req.s, &self.kappa),
            Space::BandSup => band_sup_norm(f, req.p, &self.family),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbeddingRatio {
    pub max_ratio: f64,
    pub arg_max: Option<usize>,
    pub ratios: Vec<Option<f64>>,
    /// Indices skipped because the source norm vanished.
    pub skipped: Vec<usize>,
}

/// `max_f ‖f‖_to / ‖f‖_from` over a set of functions.
pub fn embedding_ratio(
    functions: &[GridFunction],
    from: &NormRequest,
    to: &NormRequest,
    ctx: &NormContext,
) -> Result<EmbeddingRatio> {
    let mut ratios = Vec::with_capacity(functions.len());
    let mut skipped = Vec::new();
    let mut max_ratio = 0.0;
    let mut arg_max = None;
    for (i, f) in functions.iter().enumerate() {
        let denom = ctx.evaluate(from, f)?;
        if denom <= 1e-300 {
            skipped.push(i);
            ratios.push(None);
            continue;
        }
        let r = ctx.evaluate(to, f)? / denom;
        if r > max_ratio || arg_max.is_none() {
            max_ratio = r;
            arg_max = Some(i);
        }
        ratios.push(Some(r));
    }
    Ok(EmbeddingRatio {
        max_ratio,
        arg_max,
        ratios,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::{make_lp_family, make_uniform_window, FamilyKind, UniformKind, WindowVariant};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn banded(spec: GridSpec, lo: f64, hi: f64, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefs = (0..spec.len())
            .map(|i| {
                let r = spec.frequency_vec(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                if r >= lo && r <= hi {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        GridFunction::from_series(spec, coefs).unwrap()
    }

    #[test]
    fn lq_examples() {
        let a = [3.0, 4.0];
        assert_eq!(lq_norm(&a, Exponent::integer(1)), 7.0);
        assert_eq!(lq_norm(&a, Exponent::Infinite), 4.0);
        assert_eq!(lq_norm(&a, Exponent::integer(2)), 5.0);
    }

    #[test]
    fn lp_of_constants_and_parseval() {
        let spec = GridSpec::new(1, 64, 1.0).unwrap();
        let c = C64::new(0.6, -0.8);
        let f = GridFunction::from_fn(spec, |_| c);
        let two = lp_norm(&f, Exponent::integer(2)).unwrap();
        assert!((two - (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((lp_norm(&f, Exponent::Infinite).unwrap() - 1.0).abs() < 1e-15);

        let g = banded(spec, 0.0, 20.0, 3);
        let hat = transform(&g, Direction::Forward).unwrap();
        let parseval = (hat.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / spec.volume()).sqrt();
        assert!((lp_norm(&g, Exponent::integer(2)).unwrap() - parseval).abs() < 1e-10 * parseval);
    }

    #[test]
    fn besov_single_block() {
        let spec = GridSpec::new(1, 1024, 4.0).unwrap();
        let fam = make_lp_family(FamilyKind::SharpLp, 7, Some(&spec)).unwrap();
        let f = banded(spec, f64::powf(2.0, 4.75), f64::powf(2.0, 5.25), 11);
        let s = 0.7;
        let p = Exponent::integer(3);
        let rep = besov_norm(&f, p, Exponent::integer(2), s, &fam, BlockNorm::Lp, &MaximalConfig::default())
            .unwrap();
        let oracle = f64::powf(2.0, 5.0 * s) * lp_norm(&f, p).unwrap();
        assert!((rep.value - oracle).abs() < 1e-10 * oracle);
        let zero = GridFunction::zeros(spec, Domain::Space);
        let rep0 = besov_norm(&zero, p, p, s, &fam, BlockNorm::Lp, &MaximalConfig::default()).unwrap();
        assert_eq!(rep0.value, 0.0);
    }

    #[test]
    fn besov_coverage_error() {
        let spec = GridSpec::new(1, 256, 1.0).unwrap();
        let fam = make_lp_family(FamilyKind::GenericLp, 3, Some(&spec)).unwrap();
        let f = banded(spec, 30.0, 40.0, 1);
        let err = besov_norm(&f, Exponent::integer(2), Exponent::integer(2), 0.0, &fam, BlockNorm::Lp, &MaximalConfig::default());
        assert!(matches!(err, Err(Error::Coverage { .. })));
    }

    #[test]
    fn local_hardy_properties() {
        let spec = GridSpec::new(1, 512, 2.0).unwrap();
        let f = GridFunction::from_fn(spec, |x| C64::new((-x[0] * x[0]).exp(), 0.0));
        let cfg = MaximalConfig::default();
        let two = Exponent::integer(2);
        let h = local_hardy_norm(&f, two, &cfg).unwrap();
        let finest = MaximalConfig { t_levels: vec![f64::powi(2.0, -10)] };
        let lower = local_hardy_norm(&f, two, &finest).unwrap();
        assert!(h >= lower && lower > 0.9 * lp_norm(&f, two).unwrap());
        let h2 = local_hardy_norm(&f.scaled(C64::new(2.0, 0.0)), two, &cfg).unwrap();
        assert!((h2 - 2.0 * h).abs() < 1e-12 * h);
        let g = banded(spec, 0.0, 30.0, 5);
        let one = Exponent::integer(1);
        let base = local_hardy_norm(&g, one, &cfg).unwrap();
        let moved = local_hardy_norm(&g.grid_shift(&[37]), one, &cfg).unwrap();
        assert!((base - moved).abs() < 1e-10 * base);
        assert!(local_hardy_norm(&g, Exponent::Infinite, &cfg).is_err());
        assert!(MaximalConfig { t_levels: vec![0.5, 0.5] }.validate().is_err());
    }

    #[test]
    fn bmo_properties() {
        let spec = GridSpec::new(1, 256, 1.0).unwrap();
        let c = C64::new(-1.5, 2.0);
        let f = GridFunction::from_fn(spec, |_| c);
        assert!((bmo_norm(&f).unwrap() - c.norm()).abs() < 1e-12);
        let g = banded(spec, 0.0, 20.0, 8);
        let base = bmo_norm(&g).unwrap();
        let shifted = bmo_norm(&g.add(&f).unwrap()).unwrap();
        assert!((shifted - base).abs() <= c.norm() + 1e-12);
        let spec2 = GridSpec::new(2, 32, 1.0).unwrap();
        let h = GridFunction::from_fn(spec2, |_| c);
        assert!((bmo_norm(&h).unwrap() - c.norm()).abs() < 1e-12);
    }

    #[test]
    fn bmo_bounded_by_sup() {
        let spec = GridSpec::new(1, 512, 1.0).unwrap();
        for seed in 0..100 {
            let g = banded(spec, 0.0, 40.0, seed);
            let ratio = bmo_norm(&g).unwrap() / lp_norm(&g, Exponent::Infinite).unwrap();
            assert!(ratio <= 2.0 + 1e-12, "seed {seed}: {ratio}");
        }
    }

    #[test]
    fn wiener_of_exponential() {
        let spec = GridSpec::new(1, 256, 1.0).unwrap();
        let kappa = make_uniform_window(UniformKind::KappaWiener, WindowVariant::S3, 1);
        let nu = 7.0;
        let f = GridFunction::from_fn(spec, |x| C64::from_polar(1.0, nu * x[0]));
        for (p, q) in [(1, 1), (2, 2), (3, 1)] {
            let p = Exponent::integer(p);
            let q = Exponent::integer(q);
            let value = wiener_amalgam_norm(&f, p, q, 0.0, &kappa).unwrap();
            let seq: Vec<f64> = (-20..=20).map(|m| kappa.eval(&[nu - m as f64])).collect();
            let oracle = lq_norm(&seq, q) * spec.volume().powf(1.0 / p.to_f64());
            assert!((value - oracle).abs() < 1e-10 * oracle);
        }
        let zero = GridFunction::zeros(spec, Domain::Space);
        assert_eq!(
            wiener_amalgam_norm(&zero, Exponent::integer(2), Exponent::integer(2), 0.0, &kappa).unwrap(),
            0.0
        );
    }

    #[test]
    fn wiener_monotonicity_fitted_constant() {
        let spec = GridSpec::new(1, 256, 1.0).unwrap();
        let kappa = make_uniform_window(UniformKind::KappaWiener, WindowVariant::S3, 1);
        let mut ratios = Vec::new();
        for seed in 0..100 {
            let f = banded(spec, 0.0, 16.0, seed);
            let small = wiener_amalgam_norm(&f, Exponent::integer(1), Exponent::integer(1), 0.0, &kappa).unwrap();
            let large = wiener_amalgam_norm(&f, Exponent::integer(2), Exponent::integer(2), 0.0, &kappa).unwrap();
            ratios.push(large / small);
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max.is_finite() && max / min < 5.0, "{min} .. {max}");
    }

    #[test]
    fn embedding_ratio_skips_zero() {
        let spec = GridSpec::new(1, 128, 1.0).unwrap();
        let ctx = NormContext {
            family: make_lp_family(FamilyKind::GenericLp, 6, Some(&spec)).unwrap(),
            kappa: make_uniform_window(UniformKind::KappaWiener, WindowVariant::S3, 1),
            maximal: MaximalConfig::default(),
        };
        let fs = vec![GridFunction::zeros(spec, Domain::Space), banded(spec, 0.0, 20.0, 1)];
        let two = Exponent::integer(2);
        let from = NormRequest::new(Space::Besov, two, Exponent::integer(1), 0.0);
        let to = NormRequest::new(Space::Besov, two, two, 0.0);
        let r = embedding_ratio(&fs, &from, &to, &ctx).unwrap();
        assert_eq!(r.skipped, vec![0]);
        assert!(r.max_ratio <= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lq_monotone_in_q(v in proptest::collection::vec(-10.0f64..10.0, 1..20), a in 1i64..8, b in 1i64..8) {
            let (lo, hi) = (a.min(b), a.max(b));
            let small = lq_norm(&v, Exponent::ratio(lo, 2));
            let large = lq_norm(&v, Exponent::ratio(hi, 2));
            prop_assert!(large <= small * (1.0 + 1e-15));
            prop_assert!(lq_norm(&v, Exponent::Infinite) <= large * (1.0 + 1e-15));
        }

        #[test]
        fn besov_quasi_triangle(seed in 0u64..500, p2 in 1i64..6, q2 in 1i64..6, s in -1.0f64..1.0) {
            let spec = GridSpec::new(1, 256, 1.0).unwrap();
            let fam = make_lp_family(FamilyKind::GenericLp, 7, Some(&spec)).unwrap();
            let p = Exponent::ratio(p2, 2);
            let q = Exponent::ratio(q2, 2);
            let f = banded(spec, 0.0, 60.0, seed);
            let g = banded(spec, 0.0, 60.0, seed + 1000);
            let cfg = MaximalConfig::default();
            let norm = |h: &GridFunction| besov_norm(h, p, q, s, &fam, BlockNorm::Lp, &cfg).unwrap().value;
            let r = p.to_f64().min(q.to_f64()).min(1.0);
            let lhs = norm(&f.add(&g).unwrap()).powf(r);
            let rhs = norm(&f).powf(r) + norm(&g).powf(r);
            prop_assert!(lhs <= rhs + 1e-9 * rhs);
            let scaled = norm(&f.scaled(C64::new(0.0, 2.0)));
            prop_assert!((scaled - 2.0 * norm(&f)).abs() <= 1e-9 * scaled, "{} vs {}", scaled, norm(&f));
        }
    }
}
