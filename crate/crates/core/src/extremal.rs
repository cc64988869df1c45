//! Lacunary-phase test functions, the shell lattices `D_ℓ`, their weighted
//! coefficient sums and Rademacher signs.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{level_gap_holds, wainger_threshold, Exponent};
use crate::grid::{transform, Direction, GridFunction, GridSpec};
use crate::partitions::{make_uniform_window, UniformKind, UniformWindow, WindowVariant};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaingerParams {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    pub v_max: f64,
    pub p: Exponent,
    pub n: usize,
}

impl WaingerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::Config(format!("a = {} must lie in (0, 1)", self.a)));
        }
        if !(self.b > 0.0) {
            return Err(Error::Config(format!("b = {} must be positive", self.b)));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Config(format!("ε = {} must be non-negative", self.eps)));
        }
        if !(self.v_max >= 1.0) {
            return Err(Error::Config(format!("V_max = {} must be at least 1", self.v_max)));
        }
        Ok(())
    }

    /// `b > (1-a)(n/2 - n/p) + n/2`.
    pub fn above_threshold(&self) -> bool {
        self.b > wainger_threshold(self.a, self.p, self.n)
    }

    /// `e^{-ε|ν|} |ν|^{-b} e^{i|ν|^a}`.
    pub fn coefficient(&self, nu: &[i64]) -> C64 {
        let r = norm_i(nu);
        C64::from_polar((-self.eps * r).exp() * r.powf(-self.b), r.powf(self.a))
    }
}

pub fn norm_i(v: &[i64]) -> f64 {
    v.iter().map(|&a| (a * a) as f64).sum::<f64>().sqrt()
}

/// Cut-off window `K·φ̃(ξ)` used around every lattice frequency, with `K`
/// chosen so that the spatial cut-off equals 1 at the origin.
pub fn wainger_cutoff(spec: &GridSpec) -> (UniformWindow, f64) {
    let tilde = make_uniform_window(UniformKind::PhiTilde, WindowVariant::S4, spec.n);
    let mut total = 0.0;
    let mut xi = vec![0.0; spec.n];
    for i in 0..spec.len() {
        spec.frequency(i, &mut xi);
        total += tilde.eval(&xi);
    }
    (tilde, spec.volume() / total)
}

/// `f_{a,b,ε}` truncated to `0 < |ν| ≤ V_max`, i.e.
/// `Σ_ν e^{-ε|ν|}|ν|^{-b}e^{i|ν|^a} e^{iν·x} Φ(x)` with `Φ = F⁻¹[K·φ̃]`.
pub fn make_wainger(params: &WaingerParams, spec: &GridSpec) -> Result<GridFunction> {
    params.validate()?;
    if params.n != spec.n {
        return Err(Error::Config(format!(
            "parameters are {}-dimensional, grid is {}-dimensional",
            params.n, spec.n
        )));
    }
    if spec.scale().fract().abs() > 1e-12 {
        return Err(Error::Config("lattice frequencies need an integer torus scale".into()));
    }
    let reach = params.v_max + 0.5;
    if reach > spec.max_frequency() {
        return Err(Error::Config(format!(
            "V_max = {} exceeds the grid band {}",
            params.v_max,
            spec.max_frequency()
        )));
    }
    let (tilde, k) = wainger_cutoff(spec);
    let hat = GridFunction::from_spectrum_fn(*spec, |xi| {
        let nu: Vec<i64> = xi.iter().map(|t| t.round() as i64).collect();
        let r = norm_i(&nu);
        if r == 0.0 || r > params.v_max {
            return C64::new(0.0, 0.0);
        }
        let local: Vec<f64> = xi.iter().zip(&nu).map(|(a, b)| a - *b as f64).collect();
        let w = tilde.eval(&local);
        if w == 0.0 {
            return C64::new(0.0, 0.0);
        }
        params.coefficient(&nu) * (k * w)
    });
    transform(&hat, Direction::Inverse)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `μ_1 + … + μ_N = 0`, `|μ_2| ≈ 2^ℓ`, `|μ_j| ≈ 2^{ℓ-L}` for `j ≥ 3`.
    Nec1,
    /// `|μ_2 + … + μ_N| ≈ 2^ℓ`, `|μ_j| ≈ 2^{ℓ-L}` for `j ≥ 3`.
    Nec2,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nec1" => Ok(Self::Nec1),
            "nec2" => Ok(Self::Nec2),
            other => Err(Error::Parse(format!("unknown lattice variant `{other}`"))),
        }
    }
}

/// Members of `D_ℓ`, stored as flattened tuples of `slots · n` integers.
/// For `nec1` the slots are `μ_1..μ_N`, for `nec2` they are `μ_2..μ_N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeSetD {
    pub variant: Variant,
    pub level: u32,
    pub delta: f64,
    pub gap: u32,
    pub multilinearity: usize,
    pub n: usize,
    members: Vec<i64>,
}

impl LatticeSetD {
    pub fn slots(&self) -> usize {
        match self.variant {
            Variant::Nec1 => self.multilinearity,
            Variant::Nec2 => self.multilinearity - 1,
        }
    }

    pub fn stride(&self) -> usize {
        self.slots() * self.n
    }

    pub fn len(&self) -> usize {
        self.members.len() / self.stride()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = &[i64]> {
        self.members.chunks_exact(self.stride())
    }

    /// Slot `j` (0-based within the stored tuple) of a member.
    pub fn slot<'a>(&self, member: &'a [i64], j: usize) -> &'a [i64] {
        &member[j * self.n..(j + 1) * self.n]
    }

    /// `μ_2 + … + μ_N` of a member.
    pub fn tail_sum(&self, member: &[i64]) -> Vec<i64> {
        let first = match self.variant {
            Variant::Nec1 => 1,
            Variant::Nec2 => 0,
        };
        let mut out = vec![0; self.n];
        for j in first..self.slots() {
            for (o, v) in out.iter_mut().zip(self.slot(member, j)) {
                *o += v;
            }
        }
        out
    }

    /// Sorted copy of the member tuples.
    pub fn sorted_members(&self) -> Vec<Vec<i64>> {
        let mut v: Vec<Vec<i64>> = self.members().map(|m| m.to_vec()).collect();
        v.sort();
        v
    }

    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let first = match self.variant {
            Variant::Nec1 => 1,
            Variant::Nec2 => 2,
        };
        let mut header = Vec::new();
        for j in 0..self.slots() {
            for a in 0..self.n {
                header.push(if self.n == 1 {
                    format!("mu{}", j + first)
                } else {
                    format!("mu{}_{}", j + first, a + 1)
                });
            }
        }
        out.write_record(&header).map_err(csv_error)?;
        for m in self.members() {
            out.write_record(m.iter().map(|v| v.to_string())).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Integer points with `2^{c-δ} ≤ |μ| ≤ 2^{c+δ}`.
pub fn shell(center: f64, delta: f64, n: usize) -> Vec<Vec<i64>> {
    let lo = f64::powf(2.0, center - delta);
    let hi = f64::powf(2.0, center + delta);
    let (lo2, hi2) = (lo * lo, hi * hi);
    let r = hi.floor() as i64;
    let mut out = Vec::new();
    match n {
        1 => {
            for v in -r..=r {
                let d = (v * v) as f64;
                if d >= lo2 && d <= hi2 {
                    out.push(vec![v]);
                }
            }
        }
        _ => {
            for a in -r..=r {
                for b in -r..=r {
                    let d = (a * a + b * b) as f64;
                    if d >= lo2 && d <= hi2 {
                        out.push(vec![a, b]);
                    }
                }
            }
        }
    }
    out
}

fn in_shell(v: &[i64], center: f64, delta: f64) -> bool {
    let r = norm_i(v);
    r >= f64::powf(2.0, center - delta) && r <= f64::powf(2.0, center + delta)
}

/// Exhaustive enumeration of `D_ℓ`. Fails if the containment
/// `2^{ℓ-2δ} ≤ |·| ≤ 2^{ℓ+2δ}` (of `μ_2+…+μ_N` for `nec1`, of `μ_2` for
/// `nec2`) is violated by any member.
pub fn enumerate_d(
    variant: Variant,
    level: u32,
    delta: f64,
    gap: u32,
    multilinearity: usize,
    n: usize,
) -> Result<LatticeSetD> {
    if multilinearity < 2 {
        return Err(Error::Config("N must be at least 2".into()));
    }
    if level <= gap {
        return Err(Error::Config(format!("ℓ = {level} must exceed L = {gap}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("δ = {delta} must lie in (0, 1)")));
    }
    if n == 0 || n > 2 {
        return Err(Error::Config(format!("n = {n} not supported")));
    }
    if !level_gap_holds(delta, multilinearity, gap as usize) {
        return Err(Error::Config(format!(
            "level gap L = {gap} too small for δ = {delta}, N = {multilinearity}"
        )));
    }
    let l = level as f64;
    let main = shell(l, delta, n);
    let lower = shell(l - gap as f64, delta, n);
    let others = multilinearity - 2;
    let mut set = LatticeSetD {
        variant,
        level,
        delta,
        gap,
        multilinearity,
        n,
        members: Vec::new(),
    };
    let combos = lower.len().pow(others as u32);
    let mut tail = vec![0i64; n];
    let mut member = Vec::with_capacity(set.stride());
    for head in &main {
        for c in 0..combos {
            // decode the choice of μ_3..μ_N
            let mut picks = Vec::with_capacity(others);
            let mut rem = c;
            for _ in 0..others {
                picks.push(&lower[rem % lower.len()]);
                rem /= lower.len();
            }
            tail.iter_mut().for_each(|t| *t = 0);
            for p in &picks {
                for (t, v) in tail.iter_mut().zip(p.iter()) {
                    *t += v;
                }
            }
            member.clear();
            match variant {
                Variant::Nec1 => {
                    // head = μ_2; μ_1 = -(μ_2 + … + μ_N)
                    let total: Vec<i64> = head.iter().zip(&tail).map(|(a, b)| a + b).collect();
                    if !in_shell(&total, l, 2.0 * delta) {
                        return Err(Error::Config(format!(
                            "containment fails for μ_2 = {head:?}: |μ_2+…+μ_N| = {:.3}",
                            norm_i(&total)
                        )));
                    }
                    member.extend(total.iter().map(|v| -v));
                    member.extend_from_slice(head);
                }
                Variant::Nec2 => {
                    // head = ν = μ_2 + … + μ_N; μ_2 = ν - (μ_3 + … + μ_N)
                    let mu2: Vec<i64> = head.iter().zip(&tail).map(|(a, b)| a - b).collect();
                    if !in_shell(&mu2, l, 2.0 * delta) {
                        return Err(Error::Config(format!(
                            "containment fails for ν = {head:?}: |μ_2| = {:.3}",
                            norm_i(&mu2)
                        )));
                    }
                    member.extend_from_slice(&mu2);
                }
            }
            for p in &picks {
                member.extend_from_slice(p);
            }
            set.members.extend_from_slice(&member);
        }
    }
    if set.is_empty() {
        return Err(Error::Config(format!(
            "D_ℓ is empty for ℓ = {level}, δ = {delta}; try a larger δ"
        )));
    }
    Ok(set)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SumWeights {
    pub order: f64,
    /// `b_1..b_N`; for `nec2` the first entry is ignored.
    pub decay: Vec<f64>,
    pub eps: f64,
}

impl SumWeights {
    /// `⟨Μ⟩^m Π e^{-ε|μ_j|}|μ_j|^{-b_j}` over the stored slots.
    pub fn weight(&self, set: &LatticeSetD, member: &[i64]) -> f64 {
        let offset = match set.variant {
            Variant::Nec1 => 0,
            Variant::Nec2 => 1,
        };
        let bracket = (1.0 + member.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt();
        let mut w = bracket.powf(self.order);
        for j in 0..set.slots() {
            let r = norm_i(set.slot(member, j));
            w *= (-self.eps * r).exp() * r.powf(-self.decay[j + offset]);
        }
        w
    }

    fn validate(&self, set: &LatticeSetD) -> Result<()> {
        if self.decay.len() != set.multilinearity {
            return Err(Error::Config(format!(
                "{} decay exponents for N = {}",
                self.decay.len(),
                set.multilinearity
            )));
        }
        Ok(())
    }
}

/// `Σ_{Μ∈D_ℓ} ⟨Μ⟩^m Π e^{-ε|μ_j|}|μ_j|^{-b_j}`.
pub fn coefficient_sum_total(set: &LatticeSetD, weights: &SumWeights) -> Result<f64> {
    weights.validate(set)?;
    Ok(set.members().map(|m| weights.weight(set, m)).sum())
}

/// `d_ν = Σ_{Μ∈D_ℓ, μ_2+…+μ_N=ν} ⟨Μ⟩^m Π e^{-ε|μ_j|}|μ_j|^{-b_j}`.
pub fn coefficient_sum_per_nu(
    set: &LatticeSetD,
    weights: &SumWeights,
) -> Result<BTreeMap<Vec<i64>, f64>> {
    weights.validate(set)?;
    let mut out: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for m in set.members() {
        *out.entry(set.tail_sum(m)).or_default() += weights.weight(set, m);
    }
    Ok(out)
}

/// Bijection `ℤⁿ → ℕ` used to give every lattice index its own stream.
pub fn lattice_index(nu: &[i64]) -> u64 {
    let fold = |v: i64| -> u64 {
        if v >= 0 {
            2 * v as u64
        } else {
            (-2 * v - 1) as u64
        }
    };
    match nu {
        [a] => fold(*a),
        [a, b] => {
            let (x, y) = (fold(*a), fold(*b));
            (x + y) * (x + y + 1) / 2 + y
        }
        _ => panic!("lattice indices are one- or two-dimensional"),
    }
}

/// Deterministic Rademacher sign `r_ν(ω)` for sample `seed`.
pub fn rademacher_sign(seed: u64, nu: &[i64]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lattice_index(nu));
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

pub fn rademacher_sample(seed: u64, indices: &[Vec<i64>]) -> BTreeMap<Vec<i64>, f64> {
    indices
        .iter()
        .map(|nu| (nu.clone(), rademacher_sign(seed, nu)))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct KhintchineCheck {
    pub p: f64,
    /// `(E ‖Σ r_ν a_ν e^{iν·x}‖^p_{L^p([-1,1]^n)})^{1/p}`.
    pub average: f64,
    /// `(Σ|a_ν|²)^{1/2}`.
    pub l2: f64,
    pub ratio: f64,
}

/// Monte-Carlo Khintchine comparison over `samples` seeds starting at
/// `seed`, with `[-1,1]^n` sampled by `points` points per axis.
pub fn khintchine_check(
    coefficients: &BTreeMap<Vec<i64>, f64>,
    p: f64,
    seed: u64,
    samples: usize,
    points: usize,
) -> KhintchineCheck {
    use rayon::prelude::*;
    let n = coefficients.keys().next().map_or(1, |k| k.len());
    let h = 2.0 / points as f64;
    let xs: Vec<f64> = (0..points).map(|i| -1.0 + (i as f64 + 0.5) * h).collect();
    let cell = h.powi(n as i32);
    let total_points = points.pow(n as u32);
    let entries: Vec<(&Vec<i64>, f64)> = coefficients.iter().map(|(k, v)| (k, *v)).collect();
    let moments: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let sample_seed = seed.wrapping_add(s as u64);
            let signed: Vec<(&Vec<i64>, f64)> = entries
                .iter()
                .map(|(k, v)| (*k, v * rademacher_sign(sample_seed, k)))
                .collect();
            let mut acc = 0.0;
            for idx in 0..total_points {
                let x = [xs[idx % points], xs[(idx / points) % points]];
                let value: C64 = signed
                    .iter()
                    .map(|(k, v)| {
                        let phase: f64 = k.iter().zip(&x).map(|(a, b)| *a as f64 * b).sum();
                        C64::from_polar(*v, phase)
                    })
                    .sum();
                acc += value.norm().powf(p);
            }
            acc * cell
        })
        .collect();
    let mean = moments.iter().sum::<f64>() / samples as f64;
    let average = mean.powf(1.0 / p);
    let l2 = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    KhintchineCheck {
        p,
        average,
        l2,
        ratio: average / l2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::lp_norm;

    #[test]
    fn nec1_small_example() {
        let set = enumerate_d(Variant::Nec1, 5, 0.5, 0, 2, 1).unwrap();
        assert_eq!(set.len(), 46);
        let mut expected: Vec<Vec<i64>> = (23..=45)
            .flat_map(|m| [vec![-m, m], vec![m, -m]])
            .collect();
        expected.sort();
        assert_eq!(set.sorted_members(), expected);
        for m in set.members() {
            let total: i64 = m.iter().sum();
            assert_eq!(total, 0);
        }
    }

    #[test]
    fn containment_violation_is_reported() {
        assert!(enumerate_d(Variant::Nec1, 8, 0.5, 1, 3, 1).is_err());
        assert!(enumerate_d(Variant::Nec1, 8, 0.5, 3, 3, 1).is_ok());
        assert!(enumerate_d(Variant::Nec1, 2, 0.5, 3, 3, 1).is_err());
    }

    #[test]
    fn nec2_members_and_sums() {
        let set = enumerate_d(Variant::Nec2, 7, 0.5, 3, 3, 1).unwrap();
        let w = SumWeights {
            order: -0.5,
            decay: vec![0.0, 0.3, 0.2],
            eps: 0.01,
        };
        let total = coefficient_sum_total(&set, &w).unwrap();
        let per_nu = coefficient_sum_per_nu(&set, &w).unwrap();
        let grouped: f64 = per_nu.values().sum();
        assert!((grouped - total).abs() <= 1e-12 * total);
        for (nu, _) in &per_nu {
            assert!(in_shell(nu, 7.0, 0.5));
        }
    }

    #[test]
    fn unit_weights_count_members() {
        let set = enumerate_d(Variant::Nec1, 6, 0.5, 3, 3, 1).unwrap();
        let w = SumWeights {
            order: 0.0,
            decay: vec![0.0; 3],
            eps: 0.0,
        };
        assert_eq!(coefficient_sum_total(&set, &w).unwrap(), set.len() as f64);
    }

    #[test]
    fn two_dimensional_shells() {
        let set = enumerate_d(Variant::Nec1, 4, 0.5, 0, 2, 2).unwrap();
        for m in set.members() {
            assert_eq!(m[0] + m[2], 0);
            assert_eq!(m[1] + m[3], 0);
        }
    }

    #[test]
    fn wainger_hand_sum() {
        let spec = GridSpec::new(1, 64, 1.0).unwrap();
        let params = WaingerParams {
            a: 0.5,
            b: 0.7,
            eps: 0.0,
            v_max: 2.0,
            p: Exponent::integer(4),
            n: 1,
        };
        let f = make_wainger(&params, &spec).unwrap();
        for i in [0usize, 5, 17, 40] {
            let x = spec.point_vec(i)[0];
            let oracle: C64 = [-2i64, -1, 1, 2]
                .iter()
                .map(|&v| {
                    let r = v.abs() as f64;
                    C64::from_polar(r.powf(-0.7), r.powf(0.5) + v as f64 * x)
                })
                .sum();
            assert!((f.samples[i] - oracle).norm() < 1e-12);
        }
        let damped = make_wainger(&WaingerParams { eps: 50.0, ..params.clone() }, &spec).unwrap();
        assert!(damped.max_abs() < 1e-20);
        let wide = WaingerParams { v_max: 40.0, ..params };
        assert!(make_wainger(&wide, &spec).is_err());
    }

    #[test]
    fn wainger_norm_monotone_in_eps() {
        let spec = GridSpec::new(1, 1 << 12, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for j in 2..8 {
            let params = WaingerParams {
                a: 0.3,
                b: 0.8,
                eps: f64::powi(2.0, -j),
                v_max: 1500.0,
                p: Exponent::integer(4),
                n: 1,
            };
            let f = make_wainger(&params, &spec).unwrap();
            let norm = lp_norm(&f, Exponent::integer(2)).unwrap();
            assert!(norm >= prev * (1.0 - 1e-12) || prev.is_infinite());
            prev = norm;
        }
    }

    #[test]
    fn signs_are_deterministic_and_balanced() {
        let idx: Vec<Vec<i64>> = (-20..20).map(|v| vec![v]).collect();
        assert_eq!(rademacher_sample(42, &idx), rademacher_sample(42, &idx));
        let nu = [3i64];
        let mean: f64 = (0..10_000).map(|s| rademacher_sign(s, &nu)).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.05, "{mean}");
        let mut seen = std::collections::HashSet::new();
        for a in -30..30 {
            for b in -30..30 {
                assert!(seen.insert(lattice_index(&[a, b])));
            }
        }
    }

    #[test]
    fn khintchine_bracket() {
        let coefs: BTreeMap<Vec<i64>, f64> =
            (20..60).map(|v| (vec![v], 1.0 / (v as f64).sqrt())).collect();
        for p in [1.0, 2.0, 4.0] {
            let c = khintchine_check(&coefs, p, 7, 200, 512);
            assert!(c.ratio >= 0.3 && c.ratio <= 3.0, "p = {p}: {}", c.ratio);
        }
    }
}
