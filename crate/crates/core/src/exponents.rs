//! Exact arithmetic on Lebesgue and smoothness indices.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Parses `"3/4"`, `"-2"`, `"0.375"` or `"1e-2"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational64> {
    let t = text.trim();
    let bad = || Error::Parse(format!("`{text}` is not a rational number"));
    if let Some((a, b)) = t.split_once('/') {
        let num: i64 = a.trim().parse().map_err(|_| bad())?;
        let den: i64 = b.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        return Ok(Rational64::new(num, den));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut value = Rational64::from_integer(all.parse::<i64>().map_err(|_| bad())?);
    let shift = exp - frac_part.len() as i32;
    let ten = Rational64::from_integer(10);
    if shift.unsigned_abs() > 18 {
        return Err(bad());
    }
    for _ in 0..shift.unsigned_abs() {
        value = if shift > 0 { value * ten } else { value / ten };
    }
    Ok(if neg { -value } else { value })
}

/// A Lebesgue exponent in `(0, ∞]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Exponent {
    Finite(Rational64),
    Infinite,
}

impl Exponent {
    pub fn new(value: Rational64) -> Result<Self> {
        if value <= Rational64::zero() {
            return Err(Error::Config(format!("exponent {value} must be positive")));
        }
        Ok(Self::Finite(value))
    }

    pub fn integer(v: i64) -> Self {
        Self::new(Rational64::from_integer(v)).expect("positive integer exponent")
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Self::new(Rational64::new(num, den)).expect("positive exponent")
    }

    /// `1/p`, with `1/∞ = 0`.
    pub fn reciprocal(&self) -> Rational64 {
        match self {
            Self::Finite(v) => v.recip(),
            Self::Infinite => Rational64::zero(),
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Self::Infinite)
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Self::Finite(v) => v.to_f64().unwrap_or(f64::NAN),
            Self::Infinite => f64::INFINITY,
        }
    }

    /// `p'`: `∞` for `p ≤ 1`, `1` for `p = ∞`, `p/(p-1)` otherwise.
    pub fn conjugate(&self) -> Self {
        match self {
            Self::Infinite => Self::integer(1),
            Self::Finite(v) if *v <= Rational64::one() => Self::Infinite,
            Self::Finite(v) => Self::Finite(v / (v - Rational64::one())),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "infinity" | "∞" => Ok(Self::Infinite),
            other => Self::new(parse_rational(other)?),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(serde_json::Number),
    Text(String),
}

impl NumberOrText {
    fn text(self) -> String {
        match self {
            Self::Number(n) => n.to_string(),
            Self::Text(t) => t,
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        NumberOrText::deserialize(d)?
            .text()
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for exact smoothness indices written as numbers or strings.
pub mod exact {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Rational64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational64, D::Error> {
        parse_rational(&NumberOrText::deserialize(d)?.text()).map_err(serde::de::Error::custom)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(
            v: &[Rational64],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|r| r.to_string()))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<Rational64>, D::Error> {
            Vec::<NumberOrText>::deserialize(d)?
                .into_iter()
                .map(|v| parse_rational(&v.text()).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

fn half(n: usize) -> Rational64 {
    Rational64::new(n as i64, 2)
}

/// `n/p`, with `n/∞ = 0`.
pub fn scaled_reciprocal(p: Exponent, n: usize) -> Rational64 {
    p.reciprocal() * Rational64::from_integer(n as i64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Functionals {
    #[serde(with = "exact")]
    pub alpha: Rational64,
    #[serde(with = "exact")]
    pub beta: Rational64,
    #[serde(with = "exact")]
    pub theta: Rational64,
}

/// `α(p) = n/2 - min{n/2, n/p}`, `β(p) = n/2 - max{n/2, n/p}`,
/// `θ(p) = n/2 - β(p)`.
pub fn exponent_functionals(p: Exponent, n: usize) -> Functionals {
    let h = half(n);
    let np = scaled_reciprocal(p, n);
    let beta = h - h.max(np);
    Functionals {
        alpha: h - h.min(np),
        beta,
        theta: h - beta,
    }
}

/// Exponents and smoothness indices of a multilinear estimate
/// `B^{s_1}_{p_1,q_1} × … × B^{s_N}_{p_N,q_N} → B^s_{p,q}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentProfile {
    #[serde(rename = "N")]
    pub multilinearity: usize,
    pub n: usize,
    pub p: Exponent,
    pub p_j: Vec<Exponent>,
    pub q: Exponent,
    pub q_j: Vec<Exponent>,
    #[serde(with = "exact")]
    pub s: Rational64,
    #[serde(with = "exact::list")]
    pub s_j: Vec<Rational64>,
}

impl ExponentProfile {
    /// Profile with all `q` exponents equal to 2.
    pub fn new(
        n: usize,
        p: Exponent,
        p_j: Vec<Exponent>,
        s: Rational64,
        s_j: Vec<Rational64>,
    ) -> Result<Self> {
        let two = Exponent::integer(2);
        let profile = Self {
            multilinearity: p_j.len(),
            n,
            p,
            q_j: vec![two; p_j.len()],
            p_j,
            q: two,
            s,
            s_j,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: Self = serde_json::from_str(text)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        let big_n = self.multilinearity;
        if big_n < 2 {
            return Err(Error::Config(format!("N = {big_n} must be at least 2")));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        for (name, len) in [
            ("p_j", self.p_j.len()),
            ("q_j", self.q_j.len()),
            ("s_j", self.s_j.len()),
        ] {
            if len != big_n {
                return Err(Error::Config(format!("{name} has {len} entries, N = {big_n}")));
            }
        }
        Ok(())
    }

    /// `1/p ≤ Σ 1/p_j` and `1/q ≤ Σ 1/q_j`.
    pub fn holder_conditions(&self) -> bool {
        let sum_p: Rational64 = self.p_j.iter().map(|p| p.reciprocal()).sum();
        let sum_q: Rational64 = self.q_j.iter().map(|q| q.reciprocal()).sum();
        self.p.reciprocal() <= sum_p && self.q.reciprocal() <= sum_q
    }
}

/// `m = min{n/p, n/2} - Σ max{n/p_j, n/2} + Σ s_j - s`.
pub fn critical_order(profile: &ExponentProfile) -> Rational64 {
    let n = profile.n;
    let h = half(n);
    let lead = scaled_reciprocal(profile.p, n).min(h);
    let penalty: Rational64 = profile
        .p_j
        .iter()
        .map(|&p| scaled_reciprocal(p, n).max(h))
        .sum();
    let shift: Rational64 = profile.s_j.iter().sum();
    lead - penalty + shift - profile.s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothnessCheck {
    pub sufficient: bool,
    pub necessary: bool,
    /// `max{n/p_j, n/2} - s_j` for each slot, then `s + max{n/p', n/2}`.
    pub margins: Vec<f64>,
}

/// Compares the profile with `s_j < max{n/p_j, n/2}`, `s > -max{n/p', n/2}`
/// (strict, sufficient) and their non-strict counterparts (necessary).
pub fn check_smoothness_conditions(profile: &ExponentProfile) -> SmoothnessCheck {
    let n = profile.n;
    let h = half(n);
    let mut exact_margins: Vec<Rational64> = profile
        .p_j
        .iter()
        .zip(&profile.s_j)
        .map(|(&p, s)| scaled_reciprocal(p, n).max(h) - s)
        .collect();
    let target = scaled_reciprocal(profile.p.conjugate(), n).max(h);
    exact_margins.push(profile.s + target);
    SmoothnessCheck {
        sufficient: exact_margins.iter().all(|m| m.is_positive()),
        necessary: exact_margins.iter().all(|m| !m.is_negative()),
        margins: exact_margins.iter().map(to_f64).collect(),
    }
}

pub fn to_f64(r: &Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Decay exponent `b = (1-a)(n/2 - n/p) + n/2 + ε_j` of the lacunary
/// functions used for slot `j`.
pub fn wainger_decay(a: f64, p: Exponent, n: usize, eps_j: f64) -> f64 {
    let nf = n as f64;
    (1.0 - a) * (nf / 2.0 - nf * to_f64(&p.reciprocal())) + nf / 2.0 + eps_j
}

/// Smallest `b` for which the lacunary functions stay bounded in `L^p`.
pub fn wainger_threshold(a: f64, p: Exponent, n: usize) -> f64 {
    wainger_decay(a, p, n, 0.0)
}

/// Smallest integer `L ≥ 0` so that shells `2^{ℓ-δ} ≤ |μ| ≤ 2^{ℓ+δ}`
/// perturbed by `N-2` vectors of size at most `2^{ℓ-L+δ}` stay within
/// `2^{ℓ-2δ} ≤ |·| ≤ 2^{ℓ+2δ}` for every `ℓ`.
pub fn minimal_level_gap(delta: f64, multilinearity: usize) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("δ = {delta} must lie in (0, 1)")));
    }
    let others = multilinearity.saturating_sub(2) as f64;
    for gap in 0..64 {
        if level_gap_holds(delta, multilinearity, gap) {
            return Ok(gap);
        }
        if others == 0.0 {
            break;
        }
    }
    Err(Error::Config(format!("no level gap works for δ = {delta}")))
}

pub fn level_gap_holds(delta: f64, multilinearity: usize, gap: usize) -> bool {
    let others = multilinearity.saturating_sub(2) as f64;
    let pert = others * f64::powf(2.0, delta - gap as f64);
    f64::powf(2.0, -delta) - pert >= f64::powf(2.0, -2.0 * delta)
        && f64::powf(2.0, delta) + pert <= f64::powf(2.0, 2.0 * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(a: i64, b: i64) -> Rational64 {
        Rational64::new(a, b)
    }

    #[test]
    fn conjugates() {
        assert_eq!(Exponent::ratio(1, 2).conjugate(), Exponent::Infinite);
        assert_eq!(Exponent::integer(2).conjugate(), Exponent::integer(2));
        assert_eq!(Exponent::ratio(4, 3).conjugate(), Exponent::integer(4));
        assert_eq!(Exponent::Infinite.conjugate(), Exponent::integer(1));
    }

    #[test]
    fn functionals_at_known_points() {
        assert_eq!(exponent_functionals(Exponent::Infinite, 1).alpha, r(1, 2));
        let two = exponent_functionals(Exponent::integer(2), 3);
        assert_eq!((two.alpha, two.beta, two.theta), (r(0, 1), r(0, 1), r(3, 2)));
        let one = exponent_functionals(Exponent::integer(1), 1);
        assert_eq!((one.beta, one.theta), (r(-1, 2), r(1, 1)));
    }

    #[test]
    fn critical_orders() {
        let two = Exponent::integer(2);
        let zero = Rational64::zero();
        let prof = ExponentProfile::new(1, two, vec![two, two], zero, vec![zero, zero]).unwrap();
        assert_eq!(critical_order(&prof), r(-1, 2));
        let inf = Exponent::Infinite;
        let prof =
            ExponentProfile::new(1, Exponent::integer(1), vec![inf, inf], zero, vec![zero, zero])
                .unwrap();
        assert_eq!(critical_order(&prof), r(-1, 2));
        let mut shifted = prof.clone();
        shifted.s += Rational64::one();
        assert_eq!(critical_order(&shifted), critical_order(&prof) - 1);
    }

    #[test]
    fn smoothness_conditions() {
        let two = Exponent::integer(2);
        let prof = ExponentProfile::new(1, two, vec![two, two], r(-2, 5), vec![r(2, 5), r(2, 5)])
            .unwrap();
        let c = check_smoothness_conditions(&prof);
        assert!(c.sufficient && c.necessary);
        let edge =
            ExponentProfile::new(1, two, vec![two, two], r(-2, 5), vec![r(1, 2), r(2, 5)]).unwrap();
        let c = check_smoothness_conditions(&edge);
        assert!(!c.sufficient && c.necessary);
        assert_eq!(c.margins[0], 0.0);
        let out =
            ExponentProfile::new(1, two, vec![two, two], r(-2, 5), vec![r(3, 2), r(2, 5)]).unwrap();
        let c = check_smoothness_conditions(&out);
        assert!(!c.sufficient && !c.necessary);
    }

    #[test]
    fn parsing() {
        assert_eq!("3/4".parse::<Exponent>().unwrap(), Exponent::ratio(3, 4));
        assert_eq!("0.75".parse::<Exponent>().unwrap(), Exponent::ratio(3, 4));
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::Infinite);
        assert!("0".parse::<Exponent>().is_err());
        assert!("-1".parse::<Exponent>().is_err());
        assert!("abc".parse::<Exponent>().is_err());
        assert_eq!(parse_rational("-0.4").unwrap(), r(-2, 5));
        assert_eq!(parse_rational("1e-2").unwrap(), r(1, 100));
    }

    #[test]
    fn json_profile() {
        let text = r#"{"N":2,"n":1,"p":"2","p_j":["2","2"],"q":"2","q_j":["2","2"],"s":0,"s_j":[0.4,"1/2"]}"#;
        let prof = ExponentProfile::from_json(text).unwrap();
        assert_eq!(prof.s_j, vec![r(2, 5), r(1, 2)]);
        let back = serde_json::to_string(&prof).unwrap();
        assert_eq!(ExponentProfile::from_json(&back).unwrap(), prof);
        let bad = r#"{"N":2,"n":1,"p":"2","p_j":["2"],"q":"2","q_j":["2","2"],"s":0,"s_j":[0,0]}"#;
        assert!(ExponentProfile::from_json(bad).is_err());
        let unknown = r#"{"N":2,"n":1,"p":"2","p_j":["2","2"],"q":"2","q_j":["2","2"],"s":0,"s_j":[0,0],"x":1}"#;
        assert!(ExponentProfile::from_json(unknown).is_err());
    }

    #[test]
    fn level_gaps() {
        assert_eq!(minimal_level_gap(0.5, 3).unwrap(), 3);
        assert_eq!(minimal_level_gap(0.5, 2).unwrap(), 0);
        assert!(minimal_level_gap(1.5, 2).is_err());
    }

    fn exponent() -> impl Strategy<Value = Exponent> {
        prop_oneof![
            (1i64..40, 1i64..40).prop_map(|(a, b)| Exponent::ratio(a, b)),
            Just(Exponent::Infinite),
        ]
    }

    proptest! {
        #[test]
        fn functional_identities(p in exponent(), n in 1usize..4) {
            let f = exponent_functionals(p, n);
            let h = half(n);
            let np = scaled_reciprocal(p, n);
            prop_assert_eq!(f.theta + f.beta, h);
            prop_assert_eq!(f.alpha - f.beta, h.max(np) - h.min(np));
        }

        #[test]
        fn conjugate_is_involution(a in 1i64..60, b in 1i64..60) {
            prop_assume!(a > b);
            let p = Exponent::ratio(a, b);
            prop_assert_eq!(p.conjugate().conjugate(), p);
        }

        #[test]
        fn critical_order_monotone(
            n in 1usize..4,
            p in exponent(),
            p1 in exponent(),
            p2 in exponent(),
            bump in 1i64..10,
            s1 in -5i64..5,
        ) {
            let zero = Rational64::zero();
            let base = ExponentProfile::new(n, p, vec![p1, p2], zero, vec![r(s1, 3), zero]).unwrap();
            // larger 1/p_1 never increases m
            let inv = p1.reciprocal() + r(bump, 7);
            let smaller = Exponent::new(inv.recip()).unwrap();
            let mut worse = base.clone();
            worse.p_j[0] = smaller;
            prop_assert!(critical_order(&worse) <= critical_order(&base));
            let mut smoother = base.clone();
            smoother.s_j[0] += r(bump, 5);
            prop_assert!(critical_order(&smoother) >= critical_order(&base));
        }
    }
}
