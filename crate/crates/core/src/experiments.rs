//! Measurement harness: dyadic slope fits and the sharpness, ratio, decay
//! and embedding studies.
//!
//! Every study returns an [`ExperimentReport`]. Levels are processed in
//! parallel and collected in level order, and all randomness is drawn from
//! named sub-streams of one seed, so reruns are byte-identical.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use num_rational::Rational64;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{
    critical_order, exponent_functionals, minimal_level_gap, to_f64, wainger_decay,
    wainger_threshold, Exponent, ExponentProfile,
};
use crate::extremal::{
    coefficient_sum_per_nu, coefficient_sum_total, csv_error, enumerate_d, khintchine_check,
    make_wainger, LatticeSetD, SumWeights, Variant, WaingerParams,
};
use crate::grid::{box_project, transform, Direction, GridFunction, GridSpec};
use crate::operator::{
    apply_direct, coefficient_band_decay, coefficient_field, make_plan, remainder_term,
    ExpansionConfig, LaplacianMethod, RemainderIndex, DEFAULT_BUDGET,
};
use crate::partitions::{
    band_project, levels_for_grid, make_lp_family, make_uniform_window, radial_window,
    FamilyKind, UniformKind, WindowVariant,
};
use crate::spaces::{
    besov_norm, embedding_ratio, local_hardy_norm, lp_norm, lp_norm_of_magnitudes, lq_norm,
    BlockNorm, MaximalConfig, NormContext, NormRequest, Space,
};
use crate::symbols::{
    make_sharpness_symbol, make_test_symbol, sharpness_coefficients, Amplitude, MultiplierSpec,
    SharpnessParams, TestSymbolSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest residual in log₂ units.
    pub max_abs_residual: f64,
}

/// Least-squares line through `(level, log₂ value)`.
pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 3 {
        return Err(Error::Fit(format!("{} points, need at least 3", pairs.len())));
    }
    if let Some((level, value)) = pairs.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit(format!("value {value} at level {level} is not positive")));
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|(l, v)| (*l, v.log2())).collect();
    let count = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / count;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all levels coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_abs_residual = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok(SlopeFit {
        slope,
        intercept,
        max_abs_residual,
    })
}

/// 64-bit FNV-1a, used to turn sub-stream names into seeds.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator for sub-stream `index` of the stream `name` under `seed`.
pub fn substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(name));
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// How a report's rows are judged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// `|slope - theory| ≤ tolerance` and residual below the cap.
    Slope {
        theory: f64,
        tolerance: f64,
        residual_cap: Option<f64>,
    },
    /// `slope ≤ bound + tolerance`; a report whose levels are all empty
    /// passes trivially.
    SlopeAtMost { bound: f64, tolerance: f64 },
    /// `max/min` of the measured values at most `factor`.
    Stability { factor: f64 },
    /// Every `measured/theory` inside `[low, high]`.
    Bracket { low: f64, high: f64 },
    /// Mean growth factor per row, minus one, inside the given limits.
    Growth { below: Option<f64>, above: Option<f64> },
    /// All parts pass.
    Parts,
    /// Recorded, never judged.
    Informational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub level: f64,
    pub measured: f64,
    pub theory: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub parameters: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub fit: Option<SlopeFit>,
    pub criterion: Criterion,
    /// The number the criterion is applied to (slope, spread, growth, …).
    pub statistic: Option<f64>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
    pub parts: Vec<ExperimentReport>,
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

impl ExperimentReport {
    /// Judges `(level, value)` data against `criterion` and fills in the
    /// theory column.
    pub fn judge(
        name: &str,
        parameters: serde_json::Value,
        data: &[(f64, f64)],
        criterion: Criterion,
    ) -> Self {
        let mut report = Self {
            name: name.to_string(),
            parameters,
            rows: Vec::new(),
            fit: None,
            criterion: criterion.clone(),
            statistic: None,
            verdict: Verdict::Fail,
            notes: Vec::new(),
            parts: Vec::new(),
        };
        let fit = match fit_slope(data) {
            Ok(f) => Some(f),
            Err(e) => {
                if !matches!(criterion, Criterion::Informational | Criterion::Parts)
                    && !data.is_empty()
                {
                    report.notes.push(e.to_string());
                }
                None
            }
        };
        let theory_line = |slope: f64| -> Vec<f64> {
            let logs: Vec<f64> = data.iter().map(|(_, v)| v.log2()).collect();
            let count = data.len() as f64;
            let mx = data.iter().map(|(l, _)| l).sum::<f64>() / count;
            let my = logs.iter().sum::<f64>() / count;
            data.iter().map(|(l, _)| f64::powf(2.0, my + slope * (l - mx))).collect()
        };
        let theory: Vec<f64> = match &criterion {
            Criterion::Slope { theory, .. } => theory_line(*theory),
            Criterion::SlopeAtMost { bound, .. } => theory_line(*bound),
            Criterion::Stability { .. } => {
                let mean = data.iter().map(|(_, v)| v.log2()).sum::<f64>() / data.len() as f64;
                vec![f64::powf(2.0, mean); data.len()]
            }
            Criterion::Growth { .. } => vec![data.first().map_or(0.0, |d| d.1); data.len()],
            Criterion::Bracket { .. } | Criterion::Parts | Criterion::Informational => {
                fit.as_ref().map_or(vec![f64::NAN; data.len()], |f| {
                    data.iter()
                        .map(|(l, _)| f64::powf(2.0, f.intercept + f.slope * l))
                        .collect()
                })
            }
        };
        report.rows = data
            .iter()
            .zip(theory)
            .map(|(&(level, measured), theory)| ReportRow {
                level,
                measured,
                theory,
            })
            .collect();
        let (statistic, verdict) = match &criterion {
            Criterion::Slope {
                theory,
                tolerance,
                residual_cap,
            } => match &fit {
                Some(f) => (
                    Some(f.slope),
                    pass_if(
                        (f.slope - theory).abs() <= *tolerance
                            && residual_cap.is_none_or(|cap| f.max_abs_residual <= cap),
                    ),
                ),
                None => (None, Verdict::Fail),
            },
            Criterion::SlopeAtMost { bound, tolerance } => match &fit {
                Some(f) => (Some(f.slope), pass_if(f.slope <= bound + tolerance)),
                None if data.is_empty() => (None, Verdict::Pass),
                None => (None, Verdict::Fail),
            },
            Criterion::Stability { factor } => {
                let hi = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
                let lo = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
                let spread = hi / lo;
                (
                    Some(spread),
                    pass_if(lo > 0.0 && spread.is_finite() && spread <= *factor),
                )
            }
            Criterion::Bracket { low, high } => {
                let ok = report
                    .rows
                    .iter()
                    .all(|r| (*low..=*high).contains(&(r.measured / r.theory)));
                let worst = report
                    .rows
                    .iter()
                    .map(|r| r.measured / r.theory)
                    .fold(None, |acc: Option<f64>, v| {
                        Some(acc.map_or(v, |a| if (v.ln()).abs() > (a.ln()).abs() { v } else { a }))
                    });
                (worst, pass_if(ok && !data.is_empty()))
            }
            Criterion::Growth { below, above } => {
                if data.len() < 2 || !(data[0].1 > 0.0) {
                    (None, Verdict::Fail)
                } else {
                    let steps = (data.len() - 1) as f64;
                    let rate = (data[data.len() - 1].1 / data[0].1).powf(1.0 / steps) - 1.0;
                    let ok = below.is_none_or(|b| rate < b) && above.is_none_or(|a| rate > a);
                    (Some(rate), pass_if(ok))
                }
            }
            Criterion::Parts | Criterion::Informational => (None, Verdict::Pass),
        };
        report.fit = fit;
        report.statistic = statistic;
        report.verdict = verdict;
        report
    }

    /// A report that only aggregates `parts`.
    pub fn composite(name: &str, parameters: serde_json::Value, parts: Vec<Self>) -> Self {
        let mut report = Self::judge(name, parameters, &[], Criterion::Parts);
        report.verdict = pass_if(parts.iter().all(|p| p.passed()));
        report.parts = parts;
        report
    }

    /// Attaches sub-reports; they count towards the verdict unless
    /// informational.
    pub fn with_parts(mut self, parts: Vec<Self>) -> Self {
        if parts.iter().any(|p| !p.passed()) {
            self.verdict = Verdict::Fail;
        }
        self.parts.extend(parts);
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// One line: name, verdict and the judged statistic.
    pub fn summary(&self) -> String {
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        let stat = self.statistic.map_or(String::new(), |s| format!(" statistic={s:.4}"));
        format!("{verdict} {}{stat}", self.name)
    }

    fn flatten<'a>(&'a self, out: &mut Vec<&'a Self>) {
        out.push(self);
        for p in &self.parts {
            p.flatten(out);
        }
    }

    /// Rows as CSV with columns `level,measured,theory,log2_measured`; a
    /// report with parts gets a leading `series` column naming the owner
    /// of each row.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut all = Vec::new();
        self.flatten(&mut all);
        let series = all.len() > 1;
        let mut header = vec!["level", "measured", "theory", "log2_measured"];
        if series {
            header.insert(0, "series");
        }
        out.write_record(&header).map_err(csv_error)?;
        for report in all {
            for row in &report.rows {
                let mut record = vec![
                    row.level.to_string(),
                    row.measured.to_string(),
                    row.theory.to_string(),
                    row.measured.log2().to_string(),
                ];
                if series {
                    record.insert(0, report.name.clone());
                }
                out.write_record(&record).map_err(csv_error)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn params_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

/// `n = 1`, `N = 2`, `p = 1`, `p_1 = p_2 = 2`, all smoothness zero: the
/// profile whose critical order is `-1/2`.
pub fn default_profile() -> ExponentProfile {
    ExponentProfile::new(
        1,
        Exponent::integer(1),
        vec![Exponent::integer(2); 2],
        Rational64::zero(),
        vec![Rational64::zero(); 2],
    )
    .expect("valid default profile")
}

fn range(lo: u32, hi: u32) -> Vec<u32> {
    (lo..=hi).collect()
}

/// Symbol order, decay exponents and level gap shared by the two sharpness
/// studies.
#[derive(Clone, Debug, Serialize)]
struct Construction {
    order: f64,
    decay: Vec<f64>,
    chirps: Vec<f64>,
    delta: f64,
    gap: u32,
    levels: Vec<u32>,
}

#[allow(clippy::too_many_arguments)]
fn resolve_construction(
    profile: &ExponentProfile,
    order: Option<f64>,
    decay: &Option<Vec<f64>>,
    chirps: &[f64],
    margins: &[f64],
    delta: f64,
    gap: Option<u32>,
    levels: Vec<u32>,
) -> Result<Construction> {
    profile.validate()?;
    let big_n = profile.multilinearity;
    let fill = |v: &[f64], default: f64, what: &str| -> Result<Vec<f64>> {
        match v.len() {
            0 => Ok(vec![default; big_n]),
            k if k == big_n => Ok(v.to_vec()),
            k => Err(Error::Config(format!("{what} has {k} entries, N = {big_n}"))),
        }
    };
    let chirps = fill(chirps, 0.5, "chirps")?;
    let margins = fill(margins, 0.02, "margins")?;
    let decay = match decay {
        Some(d) => fill(d, 0.0, "decay")?,
        None => chirps
            .iter()
            .zip(&profile.p_j)
            .zip(&margins)
            .map(|((&a, &p), &e)| wainger_decay(a, p, profile.n, e))
            .collect(),
    };
    let gap = match gap {
        Some(g) => g,
        None => minimal_level_gap(delta, big_n)? as u32,
    };
    if levels.len() < 3 {
        return Err(Error::Config(format!(
            "{} levels, a slope fit needs at least 3",
            levels.len()
        )));
    }
    Ok(Construction {
        order: order.unwrap_or_else(|| to_f64(&critical_order(profile))),
        decay,
        chirps,
        delta,
        gap,
        levels,
    })
}

fn smallest(ladder: &[f64]) -> Result<f64> {
    ladder
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        .filter(|v| *v >= 0.0)
        .ok_or_else(|| Error::Config("the damping ladder must be non-empty and non-negative".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpnessMode {
    /// Lattice coefficient sums only.
    Combinatorial,
    /// Operator-norm ratios of the extremal symbols and inputs, compared
    /// with the coefficient sums.
    Pipeline,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessConfig {
    pub profile: ExponentProfile,
    pub mode: SharpnessMode,
    /// Defaults to 6..=12 (combinatorial) or 5..=8 (pipeline).
    pub levels: Option<Vec<u32>>,
    /// Defaults to 0.5 (combinatorial) or 0.1 (pipeline).
    pub delta: Option<f64>,
    /// Level gap `L`; the smallest admissible one by default.
    pub gap: Option<u32>,
    /// Chirp exponents `a_j` (0.5 each by default).
    pub chirps: Vec<f64>,
    /// Margins `ε_j` above the decay threshold (0.02 each by default).
    pub margins: Vec<f64>,
    /// Overrides the critical order of the profile.
    pub order: Option<f64>,
    /// Overrides the decay exponents derived from the chirps and margins.
    pub decay: Option<Vec<f64>>,
    /// Damping ladder; the slope test uses the smallest value.
    pub damping: Vec<f64>,
    pub grid_points: usize,
    pub grid_scale: f64,
    pub tolerance: Option<f64>,
    pub residual_cap: f64,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self {
            profile: default_profile(),
            mode: SharpnessMode::Combinatorial,
            levels: None,
            delta: None,
            gap: None,
            chirps: Vec::new(),
            margins: Vec::new(),
            order: None,
            decay: None,
            damping: vec![f64::powi(2.0, -10), f64::powi(2.0, -16), f64::powi(2.0, -22)],
            grid_points: 1 << 13,
            grid_scale: 8.0,
            tolerance: None,
            residual_cap: 1.0,
        }
    }
}

fn coefficient_sums(
    variant: Variant,
    c: &Construction,
    big_n: usize,
    n: usize,
    damping: &[f64],
) -> Result<Vec<(LatticeSetD, Vec<f64>)>> {
    c.levels
        .par_iter()
        .map(|&level| {
            let set = enumerate_d(variant, level, c.delta, c.gap, big_n, n)?;
            let sums = damping
                .iter()
                .map(|&eps| {
                    let weights = SumWeights {
                        order: c.order,
                        decay: c.decay.clone(),
                        eps,
                    };
                    coefficient_sum_total(&set, &weights)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((set, sums))
        })
        .collect()
}

/// Growth in `ℓ` of `Σ_{Μ∈D_ℓ} ⟨Μ⟩^m Π e^{-ε|μ_j|}|μ_j|^{-b_j}` against
/// `m - Σ b_j + (N-1)n`; in pipeline mode also the growth of
/// `‖T_{σ_ℓ}(f_{1,ℓ},…)‖_{B^s_{p,q}} / Π ‖f_{j,ℓ}‖_{B^{s_j}_{p_j,q_j}}`
/// against the measured coefficient-sum slope.
pub fn run_sharpness_s(config: &SharpnessConfig) -> Result<ExperimentReport> {
    let profile = &config.profile;
    let pipeline = config.mode == SharpnessMode::Pipeline;
    let levels = config
        .levels
        .clone()
        .unwrap_or_else(|| if pipeline { range(5, 8) } else { range(6, 12) });
    let delta = config.delta.unwrap_or(if pipeline { 0.1 } else { 0.5 });
    if config.decay.is_none() {
        if let Some(p) = profile
            .p_j
            .iter()
            .find(|p| p.is_infinite() || to_f64(&p.reciprocal()) >= 1.0)
        {
            return Err(Error::Config(format!(
                "p_j = {p} outside (1, ∞); give explicit decay exponents"
            )));
        }
    }
    let c = resolve_construction(
        profile,
        config.order,
        &config.decay,
        &config.chirps,
        &config.margins,
        delta,
        config.gap,
        levels,
    )?;
    let big_n = profile.multilinearity;
    let n = profile.n;
    let eps = smallest(&config.damping)?;
    let theory = c.order - c.decay.iter().sum::<f64>() + ((big_n - 1) * n) as f64;
    let tolerance = config.tolerance.unwrap_or(if pipeline { 0.3 } else { 0.15 });
    let params = serde_json::json!({ "config": params_json(config), "construction": params_json(&c) });

    let mut ladder: Vec<f64> = config.damping.clone();
    ladder.sort_by(|a, b| b.total_cmp(a));
    ladder.dedup();
    let sums = coefficient_sums(Variant::Nec1, &c, big_n, n, &ladder)?;
    let at = |eps: f64| -> Vec<(f64, f64)> {
        let k = ladder.iter().position(|v| *v == eps).expect("ladder entry");
        c.levels
            .iter()
            .zip(&sums)
            .map(|(&l, (_, s))| (l as f64, s[k]))
            .collect()
    };
    let mut combinatorial = ExperimentReport::judge(
        "sharpness_s/coefficient_sum",
        params.clone(),
        &at(eps),
        Criterion::Slope {
            theory,
            tolerance: if pipeline { 0.15 } else { tolerance },
            residual_cap: Some(config.residual_cap),
        },
    );
    let cardinality: Vec<(f64, f64)> = c
        .levels
        .iter()
        .zip(&sums)
        .map(|(&l, (set, _))| (l as f64, set.len() as f64))
        .collect();
    let mut informational = vec![ExperimentReport::judge(
        "sharpness_s/cardinality",
        serde_json::Value::Null,
        &cardinality,
        Criterion::Informational,
    )];
    for &e in ladder.iter().filter(|e| **e != eps) {
        informational.push(ExperimentReport::judge(
            &format!("sharpness_s/coefficient_sum/eps={e}"),
            serde_json::Value::Null,
            &at(e),
            Criterion::Informational,
        ));
    }
    combinatorial.parts = informational;
    if !pipeline {
        combinatorial.name = "sharpness_s".into();
        return Ok(combinatorial);
    }

    let Some(sum_fit) = combinatorial.fit.clone() else {
        return Err(Error::Fit("coefficient sums could not be fitted".into()));
    };
    let spec = GridSpec::new(n, config.grid_points, config.grid_scale)?;
    let besov = make_lp_family(FamilyKind::SharpLp, levels_for_grid(FamilyKind::SharpLp, &spec), Some(&spec))?;
    let maximal = MaximalConfig::default();
    let ratios = c
        .levels
        .par_iter()
        .map(|&level| -> Result<f64> {
            let sharp = SharpnessParams {
                variant: Variant::Nec1,
                level,
                delta: c.delta,
                gap: c.gap,
                multilinearity: big_n,
                n,
                order: c.order,
            };
            let (sigma, _) =
                make_sharpness_symbol(&sharp, |set| sharpness_coefficients(set, &c.chirps, None))?;
            let top = (level + 1) as usize;
            let tilde = make_lp_family(FamilyKind::SharpLpTilde, top, None)?;
            let reach = (spec.max_frequency() - 1.0).floor();
            let v_max = f64::powi(2.0, level as i32 + 1).min(reach);
            if v_max < f64::powf(2.0, level as f64 + 0.25) + 1.0 {
                return Err(Error::Config(format!(
                    "grid band {} too small for level {level}",
                    spec.max_frequency()
                )));
            }
            let inputs = (0..big_n)
                .map(|j| {
                    let wainger = make_wainger(
                        &WaingerParams {
                            a: c.chirps[j],
                            b: c.decay[j],
                            eps,
                            v_max,
                            p: profile.p_j[j],
                            n,
                        },
                        &spec,
                    )?;
                    let band = if j < 2 { level } else { level - c.gap };
                    band_project(band as usize, &tilde, &wainger)
                })
                .collect::<Result<Vec<_>>>()?;
            let output = apply_direct(&sigma, &inputs)?;
            let numerator = besov_norm(
                &output,
                profile.p,
                profile.q,
                to_f64(&profile.s),
                &besov,
                BlockNorm::Lp,
                &maximal,
            )?
            .value;
            let mut denominator = 1.0;
            for (j, f) in inputs.iter().enumerate() {
                denominator *= besov_norm(
                    f,
                    profile.p_j[j],
                    profile.q_j[j],
                    to_f64(&profile.s_j[j]),
                    &besov,
                    BlockNorm::Lp,
                    &maximal,
                )?
                .value;
            }
            Ok(numerator / denominator)
        })
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<(f64, f64)> = c.levels.iter().map(|&l| l as f64).zip(ratios).collect();
    let mut report = ExperimentReport::judge(
        "sharpness_s",
        params,
        &data,
        Criterion::Slope {
            theory: sum_fit.slope,
            tolerance,
            residual_cap: Some(config.residual_cap),
        },
    );
    report.notes.push(format!(
        "coefficient-sum slope {:.4}, formula {theory:.4}",
        sum_fit.slope
    ));
    Ok(report.with_parts(vec![combinatorial]))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KhintchineConfig {
    pub level: u32,
    pub exponents: Vec<f64>,
    pub samples: usize,
    pub points: usize,
}

impl Default for KhintchineConfig {
    fn default() -> Self {
        Self {
            level: 7,
            exponents: vec![1.0, 2.0, 4.0],
            samples: 200,
            points: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessSjConfig {
    pub profile: ExponentProfile,
    pub levels: Vec<u32>,
    pub delta: f64,
    pub gap: Option<u32>,
    pub chirps: Vec<f64>,
    pub margins: Vec<f64>,
    pub order: Option<f64>,
    pub decay: Option<Vec<f64>>,
    pub damping: f64,
    pub tolerance: f64,
    pub residual_cap: f64,
    pub seed: u64,
    pub khintchine: Option<KhintchineConfig>,
}

impl Default for SharpnessSjConfig {
    fn default() -> Self {
        Self {
            profile: default_profile(),
            levels: range(6, 12),
            delta: 0.5,
            gap: None,
            chirps: Vec::new(),
            margins: Vec::new(),
            order: None,
            decay: None,
            damping: f64::powi(2.0, -22),
            tolerance: 0.15,
            residual_cap: 1.0,
            seed: 0,
            khintchine: None,
        }
    }
}

/// `m - Σ_{j≥2} b_j + (N-2)n + n/2`.
pub fn sj_theory_slope(order: f64, decay: &[f64], multilinearity: usize, n: usize) -> f64 {
    order - decay.iter().skip(1).sum::<f64>()
        + (multilinearity as f64 - 2.0) * n as f64
        + n as f64 / 2.0
}

/// Growth in `ℓ` of `(Σ_ν |d_ν|²)^{1/2}` over the `nec2` lattices.
pub fn run_sharpness_sj(config: &SharpnessSjConfig) -> Result<ExperimentReport> {
    let profile = &config.profile;
    let c = resolve_construction(
        profile,
        config.order,
        &config.decay,
        &config.chirps,
        &config.margins,
        config.delta,
        config.gap,
        config.levels.clone(),
    )?;
    let big_n = profile.multilinearity;
    let n = profile.n;
    let weights = SumWeights {
        order: c.order,
        decay: c.decay.clone(),
        eps: config.damping,
    };
    let theory = sj_theory_slope(c.order, &c.decay, big_n, n);
    let params = serde_json::json!({ "config": params_json(config), "construction": params_json(&c) });
    let values = c
        .levels
        .par_iter()
        .map(|&level| -> Result<f64> {
            let set = enumerate_d(Variant::Nec2, level, c.delta, c.gap, big_n, n)?;
            let d = coefficient_sum_per_nu(&set, &weights)?;
            Ok(d.values().map(|v| v * v).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<(f64, f64)> = c.levels.iter().map(|&l| l as f64).zip(values).collect();
    let mut report = ExperimentReport::judge(
        "sharpness_sj",
        params,
        &data,
        Criterion::Slope {
            theory,
            tolerance: config.tolerance,
            residual_cap: Some(config.residual_cap),
        },
    );
    if let Some(k) = &config.khintchine {
        if k.level <= c.gap {
            return Err(Error::Config(format!(
                "Khintchine level {} must exceed L = {}",
                k.level, c.gap
            )));
        }
        let set = enumerate_d(Variant::Nec2, k.level, c.delta, c.gap, big_n, n)?;
        let d = coefficient_sum_per_nu(&set, &weights)?;
        let rows: Vec<(f64, f64, f64)> = k
            .exponents
            .iter()
            .map(|&p| {
                let check = khintchine_check(&d, p, config.seed, k.samples, k.points);
                (p, check.average, check.l2)
            })
            .collect();
        let data: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
        let mut part = ExperimentReport::judge(
            "sharpness_sj/khintchine",
            params_json(k),
            &data,
            Criterion::Bracket { low: 0.3, high: 3.0 },
        );
        for (row, r) in part.rows.iter_mut().zip(&rows) {
            row.theory = r.2;
        }
        let ok = part
            .rows
            .iter()
            .all(|r| (0.3..=3.0).contains(&(r.measured / r.theory)));
        part.verdict = pass_if(ok);
        part.statistic = part
            .rows
            .iter()
            .map(|r| r.measured / r.theory)
            .max_by(|a, b| a.ln().abs().total_cmp(&b.ln().abs()));
        report = report.with_parts(vec![part]);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypropMode {
    /// `ℓ²_τ` inner norm.
    L2,
    /// `ℓ¹_τ` inner norm with the extra `R^{n/2}`.
    L1,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeypropConfig {
    pub n: usize,
    /// `p_1..p_N`, all finite; `1/p_0 = Σ 1/p_j`.
    pub exponents: Vec<Exponent>,
    pub radii: Vec<u32>,
    /// `R_j = round(factor_j · R)`.
    pub factors: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub grid_scale: f64,
    pub modes: Vec<KeypropMode>,
    pub tolerance: f64,
}

impl Default for KeypropConfig {
    fn default() -> Self {
        Self {
            n: 1,
            exponents: vec![Exponent::integer(2); 2],
            radii: vec![4, 8, 16, 32],
            factors: vec![1.0; 2],
            trials: 8,
            seed: 0,
            grid_scale: 2.0,
            modes: vec![KeypropMode::L2, KeypropMode::L1],
            tolerance: 0.15,
        }
    }
}

fn lattice_ball(lo: f64, hi: f64, n: usize, closed_hi: bool) -> Vec<Vec<i64>> {
    let r = hi.ceil() as i64;
    let mut out = Vec::new();
    let mut push = |v: Vec<i64>| {
        let norm = v.iter().map(|&a| (a * a) as f64).sum::<f64>().sqrt();
        if norm >= lo && (norm < hi || (closed_hi && norm <= hi)) {
            out.push(v);
        }
    };
    if n == 1 {
        for a in -r..=r {
            push(vec![a]);
        }
    } else {
        for a in -r..=r {
            for b in -r..=r {
                push(vec![a, b]);
            }
        }
    }
    out
}

/// Space-domain function whose Fourier series has independent complex
/// Gaussian coefficients on the bins with `keep(|ξ|)`.
fn random_series(spec: GridSpec, rng: &mut ChaCha8Rng, keep: impl Fn(f64) -> bool) -> GridFunction {
    let coefficients = (0..spec.len())
        .map(|i| {
            let r = spec.frequency_vec(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            if keep(r) {
                C64::new(re, im)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    GridFunction::from_series(spec, coefficients).expect("one coefficient per bin")
}

/// Random band-limited function with spectrum on `R ≤ |ξ| ≤ 2R - 1`.
fn shell_function(spec: GridSpec, radius: f64, rng: &mut ChaCha8Rng) -> GridFunction {
    random_series(spec, rng, |r| r >= radius && r <= 2.0 * radius - 1.0)
}

/// `(LHS_ℓ², LHS_ℓ¹, RHS without the ℓ¹ factor)` for one trial.
fn keyprop_sides(
    config: &KeypropConfig,
    spec: GridSpec,
    radius: u32,
    shells: &[f64],
    inputs: &[GridFunction],
) -> Result<(f64, f64, f64)> {
    let n = config.n;
    let nf = n as f64;
    let kappa = make_uniform_window(UniformKind::KappaWiener, WindowVariant::S3, n).sampler();
    let p0 = keyprop_target(&config.exponents)?;
    // partial sums τ ↦ Σ Π |□_{ν_j} f_j|, built one slot at a time
    let mut partial: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    partial.insert(vec![0; n], vec![1.0; spec.len()]);
    for (f, &rj) in inputs.iter().zip(shells) {
        let boxes: Vec<(Vec<i64>, Vec<f64>)> = lattice_ball(rj, 2.0 * rj, n, false)
            .into_par_iter()
            .map(|nu| {
                let b = box_project(&nu, &kappa, f)?;
                Ok((nu, b.samples.iter().map(|v| v.norm()).collect()))
            })
            .collect::<Result<_>>()?;
        let mut next: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
        for (tau, acc) in &partial {
            for (nu, b) in &boxes {
                let key: Vec<i64> = tau.iter().zip(nu).map(|(a, b)| a + b).collect();
                let slot = next.entry(key).or_insert_with(|| vec![0.0; spec.len()]);
                for ((s, a), v) in slot.iter_mut().zip(acc).zip(b) {
                    *s += a * v;
                }
            }
        }
        partial = next;
    }
    let lambda = radius as f64;
    let mut l2 = vec![0.0; spec.len()];
    let mut l1 = vec![0.0; spec.len()];
    for (tau, values) in &partial {
        let norm = tau.iter().map(|&a| (a * a) as f64).sum::<f64>().sqrt();
        if norm > lambda {
            continue;
        }
        for ((a, b), v) in l2.iter_mut().zip(l1.iter_mut()).zip(values) {
            *a += v * v;
            *b += v;
        }
    }
    l2.iter_mut().for_each(|v| *v = v.sqrt());
    let lhs2 = lp_norm_of_magnitudes(&spec, &l2, p0);
    let lhs1 = lp_norm_of_magnitudes(&spec, &l1, p0);

    let mut sorted = shells.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let second = sorted.get(1).copied().unwrap_or(sorted[0]);
    let mut rhs = second.powf(nf / 2.0).min(lambda.powf(nf / 2.0));
    for r in sorted.iter().skip(2) {
        rhs *= r.powf(nf / 2.0);
    }
    let maximal = MaximalConfig::default();
    for ((f, &rj), &p) in inputs.iter().zip(shells).zip(&config.exponents) {
        let beta = to_f64(&exponent_functionals(p, n).beta);
        rhs *= rj.powf(-beta) * local_hardy_norm(f, p, &maximal)?;
    }
    Ok((lhs2, lhs1, rhs))
}

/// `p_0` with `1/p_0 = Σ 1/p_j`.
pub fn keyprop_target(exponents: &[Exponent]) -> Result<Exponent> {
    if exponents.iter().any(|p| p.is_infinite()) {
        return Err(Error::Config("the ratio study needs finite p_j".into()));
    }
    let total: Rational64 = exponents.iter().map(|p| p.reciprocal()).sum();
    Exponent::new(total.recip())
}

/// Maximal ratio of the two sides of the lattice-product estimate over
/// random shell-supported inputs, per radius, and its slope in `log₂ R`.
pub fn run_keyprop_ratio(config: &KeypropConfig) -> Result<ExperimentReport> {
    let big_n = config.exponents.len();
    if big_n < 2 {
        return Err(Error::Config("at least two exponents are needed".into()));
    }
    if config.factors.len() != big_n {
        return Err(Error::Config(format!(
            "factors has {} entries, N = {big_n}",
            config.factors.len()
        )));
    }
    if config.n == 0 || config.n > 2 {
        return Err(Error::Config(format!("n = {} not supported", config.n)));
    }
    if config.trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    keyprop_target(&config.exponents)?;
    let params = params_json(config);
    let per_radius = config
        .radii
        .iter()
        .enumerate()
        .map(|(ri, &radius)| -> Result<(f64, f64)> {
            let shells: Vec<f64> = config
                .factors
                .iter()
                .map(|f| (f * radius as f64).round().max(1.0))
                .collect();
            let reach = 2.0 * shells.iter().fold(0.0f64, |a, b| a.max(*b)) + 2.0;
            let points = ((2.0 * reach * config.grid_scale).ceil() as usize).next_power_of_two();
            let spec = GridSpec::new(config.n, points, config.grid_scale)?;
            let sides = (0..config.trials)
                .into_par_iter()
                .map(|trial| {
                    let inputs: Vec<GridFunction> = shells
                        .iter()
                        .enumerate()
                        .map(|(j, &rj)| {
                            let index = ((ri * config.trials + trial) * big_n + j) as u64;
                            shell_function(spec, rj, &mut substream(config.seed, "keyprop", index))
                        })
                        .collect();
                    keyprop_sides(config, spec, radius, &shells, &inputs)
                })
                .collect::<Result<Vec<_>>>()?;
            let lambda_factor = (radius as f64).powf(config.n as f64 / 2.0);
            let l2 = sides.iter().map(|s| s.0 / s.2).fold(0.0, f64::max);
            let l1 = sides.iter().map(|s| s.1 / (s.2 * lambda_factor)).fold(0.0, f64::max);
            Ok((l2, l1))
        })
        .collect::<Result<Vec<_>>>()?;
    let parts = config
        .modes
        .iter()
        .map(|mode| {
            let data: Vec<(f64, f64)> = config
                .radii
                .iter()
                .zip(&per_radius)
                .map(|(&r, v)| {
                    let value = match mode {
                        KeypropMode::L2 => v.0,
                        KeypropMode::L1 => v.1,
                    };
                    ((r as f64).log2(), value)
                })
                .collect();
            let name = match mode {
                KeypropMode::L2 => "keyprop/l2",
                KeypropMode::L1 => "keyprop/l1",
            };
            ExperimentReport::judge(
                name,
                serde_json::Value::Null,
                &data,
                Criterion::Slope {
                    theory: 0.0,
                    tolerance: config.tolerance,
                    residual_cap: None,
                },
            )
        })
        .collect();
    Ok(ExperimentReport::composite("keyprop", params, parts))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandDecayConfig {
    pub symbol: TestSymbolSpec,
    /// `Ν`, flattened.
    pub nu: Vec<i64>,
    /// `Μ` of the coefficient field, flattened.
    pub mu: Vec<i64>,
    pub levels: Vec<usize>,
    pub grid_points: usize,
    pub expansion: ExpansionConfig,
    /// Decay order `L` the band slope is compared with.
    pub decay_order: f64,
    pub tolerance: f64,
    /// Remainder study: input band radius, `(ℓ_1..ℓ_N)`, `k`, `Μ`, `p`
    /// and the slope bound.
    pub input_band: f64,
    pub input_levels: Vec<usize>,
    pub output_band: usize,
    pub remainder_mu: Vec<i64>,
    pub remainder_p: Exponent,
    pub remainder_bound: f64,
    pub seed: u64,
}

impl Default for BandDecayConfig {
    fn default() -> Self {
        Self {
            symbol: TestSymbolSpec::OscillatoryX {
                n: 1,
                amplitude: Amplitude::Poisson { radius: 0.5 },
                multipliers: vec![MultiplierSpec::One, MultiplierSpec::Bracket { order: -1.0 }],
            },
            nu: vec![0, 1],
            mu: vec![0, 0],
            levels: (2..=6).collect(),
            grid_points: 256,
            expansion: ExpansionConfig {
                radius: 8,
                order: 2,
                quadrature: 64,
                laplacian: LaplacianMethod::Spectral,
                budget: DEFAULT_BUDGET,
            },
            decay_order: 3.0,
            tolerance: 0.2,
            input_band: 6.0,
            input_levels: vec![2, 2],
            output_band: 0,
            remainder_mu: vec![1, -1],
            remainder_p: Exponent::integer(1),
            remainder_bound: -2.0,
            seed: 0,
        }
    }
}

/// Band decay of `x ↦ Q_{Ν,Μ}(x)` and of the remainder pieces in `ℓ₀`.
pub fn run_band_decay(config: &BandDecayConfig) -> Result<ExperimentReport> {
    let sigma = make_test_symbol(&config.symbol)?;
    let n = sigma.n;
    let big_n = sigma.multilinearity;
    let spec = GridSpec::new(n, config.grid_points, 1.0)?;
    let top = *config.levels.iter().max().ok_or_else(|| Error::Config("no levels".into()))?;
    let family = make_lp_family(
        FamilyKind::SharpLp,
        levels_for_grid(FamilyKind::SharpLp, &spec).max(top),
        Some(&spec),
    )?;
    let window = make_uniform_window(UniformKind::Phi, WindowVariant::S3, n);
    let field = coefficient_field(&sigma, &config.nu, &config.mu, &window, &config.expansion, &spec)?;
    let decay = coefficient_band_decay(&field, &family, &config.levels)?;
    let data: Vec<(f64, f64)> = decay
        .levels
        .iter()
        .map(|&l| l as f64)
        .zip(decay.values.iter().copied())
        .collect();
    let mut report = ExperimentReport::judge(
        "band_decay",
        params_json(config),
        &data,
        Criterion::SlopeAtMost {
            bound: -config.decay_order,
            tolerance: config.tolerance,
        },
    );
    if !decay.skipped.is_empty() {
        report.notes.push(format!("empty bands skipped: {:?}", decay.skipped));
    }
    if decay.levels.is_empty() {
        report.notes.push("coefficient field concentrated at ℓ₀ ≤ 1".into());
        return Ok(report);
    }

    let inputs: Vec<GridFunction> = (0..big_n)
        .map(|j| {
            let mut rng = substream(config.seed, "band_decay", j as u64);
            random_series(spec, &mut rng, |r| r <= config.input_band)
        })
        .collect();
    let plan = make_plan(&sigma, &inputs, config.expansion.clone())?;
    let maximal = MaximalConfig::default();
    let norms = config
        .levels
        .par_iter()
        .map(|&l0| -> Result<f64> {
            let mut levels = vec![l0];
            levels.extend(&config.input_levels);
            let index = RemainderIndex {
                levels,
                k: config.output_band,
                mu: config.remainder_mu.clone(),
            };
            let r = remainder_term(&sigma, &inputs, &plan, &family, &index)?;
            if config.remainder_p.is_infinite() {
                Ok(r.max_abs())
            } else {
                local_hardy_norm(&r, config.remainder_p, &maximal)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = norms.iter().fold(0.0f64, |a, b| a.max(*b));
    let remainder_data: Vec<(f64, f64)> = config
        .levels
        .iter()
        .zip(&norms)
        .filter(|(_, v)| **v > 1e-13 * scale)
        .map(|(&l, &v)| (l as f64, v))
        .collect();
    let part = ExperimentReport::judge(
        "band_decay/remainder",
        serde_json::Value::Null,
        &remainder_data,
        Criterion::SlopeAtMost {
            bound: config.remainder_bound,
            tolerance: 0.0,
        },
    );
    Ok(report.with_parts(vec![part]))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub seed: u64,
    pub levels: Vec<usize>,
    /// Random-phase functions per level.
    pub random: usize,
    /// Translated wave packets per level.
    pub packets: usize,
    pub grid_points: usize,
    pub p: Exponent,
    pub sequences: usize,
    pub sequence_len: usize,
    pub factor: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            levels: (2..=8).collect(),
            random: 4,
            packets: 4,
            grid_points: 2048,
            p: Exponent::integer(1),
            sequences: 1000,
            sequence_len: 32,
            factor: 5.0,
        }
    }
}

/// Functions with spectrum in the level-`ℓ` dyadic annulus: random phases
/// first, then wave packets `ψ_ℓ(D)` translated to random points.
fn embedding_family(config: &EmbeddingConfig, spec: GridSpec, level: usize) -> Vec<GridFunction> {
    let lo = f64::powi(2.0, level as i32 - 1);
    let hi = f64::powi(2.0, level as i32 + 1);
    let mut out = Vec::new();
    for i in 0..config.random {
        let mut rng = substream(config.seed, "embeddings/random", (level * 1000 + i) as u64);
        out.push(random_series(spec, &mut rng, |r| r >= lo && r <= hi));
    }
    for i in 0..config.packets {
        let mut rng = substream(config.seed, "embeddings/packet", (level * 1000 + i) as u64);
        let centre: Vec<f64> = (0..spec.n)
            .map(|_| rng.random_range(0.0..spec.volume().powf(1.0 / spec.n as f64)))
            .collect();
        let hat = GridFunction::from_spectrum_fn(spec, |xi| {
            let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let phase: f64 = -xi.iter().zip(&centre).map(|(a, b)| a * b).sum::<f64>();
            C64::from_polar(radial_window(FamilyKind::SharpLp, level, r), phase)
        });
        out.push(transform(&hat, Direction::Inverse).expect("frequency-domain input"));
    }
    out
}

/// ℓ^q monotonicity on random sequences; returns the violation count.
pub fn lq_monotonicity_violations(seed: u64, cases: usize, len: usize) -> usize {
    let exponents = [
        Exponent::ratio(1, 2),
        Exponent::integer(1),
        Exponent::ratio(3, 2),
        Exponent::integer(2),
        Exponent::integer(4),
        Exponent::Infinite,
    ];
    (0..cases)
        .filter(|&case| {
            let mut rng = substream(seed, "embeddings/sequences", case as u64);
            let seq: Vec<f64> = (0..len)
                .map(|_| {
                    let g: f64 = rng.sample(StandardNormal);
                    (3.0 * g).exp2() * rng.random::<f64>()
                })
                .collect();
            let i = rng.random_range(0..exponents.len());
            let j = rng.random_range(i..exponents.len());
            let (q1, q2) = (exponents[i], exponents[j]);
            lq_norm(&seq, q2) > lq_norm(&seq, q1) * (1.0 + 1e-12)
        })
        .count()
}

/// Stability across band levels of the fitted embedding constants.
pub fn run_embedding_suite(config: &EmbeddingConfig) -> Result<ExperimentReport> {
    if config.p.is_infinite() {
        return Err(Error::Config("the suite needs a finite p".into()));
    }
    let n = 1;
    let spec = GridSpec::new(n, config.grid_points, 1.0)?;
    let top = *config.levels.iter().max().ok_or_else(|| Error::Config("no levels".into()))?;
    if f64::powi(2.0, top as i32 + 1) > spec.max_frequency() {
        return Err(Error::Config(format!(
            "level {top} needs a band of {} but the grid reaches {}",
            f64::powi(2.0, top as i32 + 1),
            spec.max_frequency()
        )));
    }
    let ctx = NormContext {
        family: make_lp_family(FamilyKind::SharpLp, levels_for_grid(FamilyKind::SharpLp, &spec), Some(&spec))?,
        kappa: make_uniform_window(UniformKind::KappaWiener, WindowVariant::S3, n),
        maximal: MaximalConfig::default(),
    };
    let p = config.p;
    let pf = p.to_f64();
    let small = if pf < 2.0 { p } else { Exponent::integer(2) };
    let large = if pf > 2.0 { p } else { Exponent::integer(2) };
    let f = exponent_functionals(p, n);
    let (alpha, beta) = (to_f64(&f.alpha), to_f64(&f.beta));
    let two = Exponent::integer(2);
    let inf = Exponent::Infinite;
    let embeddings: Vec<(&str, NormRequest, NormRequest)> = vec![
        (
            "besov_min_to_hardy",
            NormRequest::new(Space::Besov, p, small, 0.0),
            NormRequest::new(Space::LocalHardy, p, two, 0.0),
        ),
        (
            "hardy_to_besov_max",
            NormRequest::new(Space::LocalHardy, p, two, 0.0),
            NormRequest::new(Space::Besov, p, large, 0.0),
        ),
        (
            "hardy_to_band_sup",
            NormRequest::new(Space::LocalHardy, p, two, 0.0),
            NormRequest::new(Space::BandSup, p, inf, 0.0),
        ),
        (
            "besov_to_hardy_blocks",
            NormRequest::new(Space::Besov, p, two, 0.0),
            NormRequest::new(Space::BesovHpVariant, p, two, 0.0),
        ),
        (
            "hardy_blocks_to_besov",
            NormRequest::new(Space::BesovHpVariant, p, two, 0.0),
            NormRequest::new(Space::Besov, p, two, 0.0),
        ),
        (
            "wiener_to_hardy",
            NormRequest::new(Space::WienerAmalgam, p, two, alpha),
            NormRequest::new(Space::LocalHardy, p, two, 0.0),
        ),
        (
            "hardy_to_wiener",
            NormRequest::new(Space::LocalHardy, p, two, 0.0),
            NormRequest::new(Space::WienerAmalgam, p, two, beta),
        ),
    ];
    let families: Vec<Vec<GridFunction>> = config
        .levels
        .iter()
        .map(|&l| embedding_family(config, spec, l))
        .collect();
    let constants = embeddings
        .par_iter()
        .map(|(_, from, to)| {
            families
                .iter()
                .map(|fam| embedding_ratio(fam, from, to, &ctx).map(|r| r.max_ratio))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut parts: Vec<ExperimentReport> = embeddings
        .iter()
        .zip(constants)
        .map(|((name, from, to), values)| {
            let data: Vec<(f64, f64)> = config
                .levels
                .iter()
                .map(|&l| l as f64)
                .zip(values)
                .collect();
            ExperimentReport::judge(
                &format!("embeddings/{name}"),
                serde_json::json!({ "from": params_json(from), "to": params_json(to) }),
                &data,
                Criterion::Stability {
                    factor: config.factor,
                },
            )
        })
        .collect();
    let violations = lq_monotonicity_violations(config.seed, config.sequences, config.sequence_len);
    let mut monotone = ExperimentReport::judge(
        "embeddings/lq_monotonicity",
        serde_json::json!({ "cases": config.sequences }),
        &[],
        Criterion::Informational,
    );
    monotone.criterion = Criterion::Stability { factor: 0.0 };
    monotone.statistic = Some(violations as f64);
    monotone.verdict = pass_if(violations == 0);
    monotone.notes.push(format!("{violations} violations in {} cases", config.sequences));
    parts.insert(0, monotone);
    Ok(ExperimentReport::composite("embeddings", params_json(config), parts))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaingerContrastConfig {
    pub a: f64,
    /// `b = threshold ± offset`.
    pub offset: f64,
    pub exponents: Vec<Exponent>,
    /// `ε = 2^{-j}` for these `j`.
    pub damping_levels: Vec<u32>,
    pub grid_points: usize,
    pub n: usize,
    pub v_max: Option<f64>,
    pub bounded_growth: f64,
    pub unbounded_growth: f64,
}

impl Default for WaingerContrastConfig {
    fn default() -> Self {
        Self {
            a: 0.2,
            offset: 0.3,
            exponents: vec![Exponent::integer(4), Exponent::integer(64)],
            damping_levels: (6..=10).collect(),
            grid_points: 1 << 16,
            n: 1,
            v_max: None,
            bounded_growth: 0.05,
            unbounded_growth: 0.20,
        }
    }
}

/// `‖f_{a,b,ε}‖_{L^p}` along a dyadic `ε` ladder for `b` above and below
/// the boundedness threshold.
pub fn run_wainger_contrast(config: &WaingerContrastConfig) -> Result<ExperimentReport> {
    let spec = GridSpec::new(config.n, config.grid_points, 1.0)?;
    let v_max = config
        .v_max
        .unwrap_or((spec.max_frequency() - 1.0).floor());
    let mut cases = Vec::new();
    for &p in &config.exponents {
        let threshold = wainger_threshold(config.a, p, config.n);
        cases.push((p, threshold + config.offset, true));
        cases.push((p, threshold - config.offset, false));
    }
    let parts = cases
        .par_iter()
        .map(|&(p, b, above)| -> Result<ExperimentReport> {
            let data = config
                .damping_levels
                .iter()
                .map(|&j| {
                    let params = WaingerParams {
                        a: config.a,
                        b,
                        eps: f64::powi(2.0, -(j as i32)),
                        v_max,
                        p,
                        n: config.n,
                    };
                    Ok((j as f64, lp_norm(&make_wainger(&params, &spec)?, p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let criterion = if above {
                Criterion::Growth {
                    below: Some(config.bounded_growth),
                    above: None,
                }
            } else {
                Criterion::Growth {
                    below: None,
                    above: Some(config.unbounded_growth),
                }
            };
            let side = if above { "above" } else { "below" };
            Ok(ExperimentReport::judge(
                &format!("wainger/p={p}/{side}"),
                serde_json::json!({ "p": p.to_string(), "b": b }),
                &data,
                criterion,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::composite("wainger_contrast", params_json(config), parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_slope_examples() {
        let pairs: Vec<(f64, f64)> = (1..=5).map(|l| (l as f64, f64::powi(2.0, l))).collect();
        let fit = fit_slope(&pairs).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12 && fit.max_abs_residual < 1e-12);
        let flat: Vec<(f64, f64)> = (1..=5).map(|l| (l as f64, 7.0)).collect();
        assert!(fit_slope(&flat).unwrap().slope.abs() < 1e-12);
        let mut rng = substream(1, "test", 0);
        let noisy: Vec<(f64, f64)> = (0..8)
            .map(|l| {
                let noise = 1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0);
                (l as f64, 3.0 * f64::powf(2.0, 1.5 * l as f64) * noise)
            })
            .collect();
        assert!((fit_slope(&noisy).unwrap().slope - 1.5).abs() < 0.02);
    }

    #[test]
    fn fit_slope_rejects_bad_input() {
        assert!(fit_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        let err = fit_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 2.0)]).unwrap_err();
        assert!(err.to_string().contains("level 2"), "{err}");
        assert!(fit_slope(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    #[test]
    fn slope_verdicts() {
        let data: Vec<(f64, f64)> = (0..5).map(|l| (l as f64, f64::powi(2.0, -2 * l))).collect();
        let ok = Criterion::Slope {
            theory: -2.0,
            tolerance: 0.1,
            residual_cap: Some(0.5),
        };
        let r = ExperimentReport::judge("x", serde_json::Value::Null, &data, ok);
        assert!(r.passed());
        for row in &r.rows {
            assert!((row.theory - row.measured).abs() < 1e-12 * row.measured.max(1.0));
        }
        let off = Criterion::Slope {
            theory: -1.0,
            tolerance: 0.1,
            residual_cap: None,
        };
        assert!(!ExperimentReport::judge("x", serde_json::Value::Null, &data, off).passed());
        let at_most = Criterion::SlopeAtMost {
            bound: -1.0,
            tolerance: 0.0,
        };
        assert!(ExperimentReport::judge("x", serde_json::Value::Null, &data, at_most.clone()).passed());
        assert!(ExperimentReport::judge("x", serde_json::Value::Null, &[], at_most).passed());
    }

    #[test]
    fn composite_fails_with_any_part() {
        let good = ExperimentReport::judge(
            "a",
            serde_json::Value::Null,
            &[(1.0, 1.0), (2.0, 2.0)],
            Criterion::Stability { factor: 5.0 },
        );
        let bad = ExperimentReport::judge(
            "b",
            serde_json::Value::Null,
            &[(1.0, 1.0), (2.0, 10.0)],
            Criterion::Stability { factor: 5.0 },
        );
        assert!(good.passed() && !bad.passed());
        let all = ExperimentReport::composite("c", serde_json::Value::Null, vec![good.clone(), bad]);
        assert!(!all.passed());
        let csv = all.to_csv_string().unwrap();
        assert!(csv.starts_with("series,level,measured,theory,log2_measured\n"));
        assert_eq!(csv.lines().count(), 5);
        let single = good.to_csv_string().unwrap();
        assert!(single.starts_with("level,measured,theory,log2_measured\n1,1,"));
    }

    #[test]
    fn growth_criterion() {
        let data: Vec<(f64, f64)> = (0..5).map(|j| (j as f64, f64::powi(1.1, j))).collect();
        let r = ExperimentReport::judge(
            "g",
            serde_json::Value::Null,
            &data,
            Criterion::Growth {
                below: Some(0.2),
                above: Some(0.05),
            },
        );
        assert!((r.statistic.unwrap() - 0.1).abs() < 1e-12);
        assert!(r.passed());
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(3, "x", 0).random();
        let b: u64 = substream(3, "x", 0).random();
        let c: u64 = substream(3, "x", 1).random();
        let d: u64 = substream(3, "y", 0).random();
        assert_eq!(a, b);
        assert!(a != c && a != d);
    }

    #[test]
    fn sharpness_cardinality_slope() {
        let config = SharpnessConfig {
            order: Some(0.0),
            decay: Some(vec![0.0, 0.0]),
            ..Default::default()
        };
        let r = run_sharpness_s(&config).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert!((r.fit.unwrap().slope - 1.0).abs() < 0.1);
        let card = &r.parts[0];
        assert!((card.fit.as_ref().unwrap().slope - 1.0).abs() < 0.1);
    }

    #[test]
    fn sharpness_default_profile_uses_critical_order() {
        let r = run_sharpness_s(&SharpnessConfig::default()).unwrap();
        let theory = match r.criterion {
            Criterion::Slope { theory, .. } => theory,
            _ => unreachable!(),
        };
        // m = -1/2, b_j = 1/2 + 0.02
        assert!((theory - (-0.5 - 1.04 + 1.0)).abs() < 1e-12);
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn sharpness_rejects_endpoint_exponents() {
        let mut config = SharpnessConfig::default();
        config.profile.p_j[0] = Exponent::integer(1);
        assert!(run_sharpness_s(&config).is_err());
    }

    #[test]
    fn sj_flat_weights_give_half_slope() {
        let config = SharpnessSjConfig {
            order: Some(0.0),
            decay: Some(vec![0.0, 0.0]),
            ..Default::default()
        };
        let r = run_sharpness_sj(&config).unwrap();
        assert!((r.fit.as_ref().unwrap().slope - 0.5).abs() < 0.1, "{}", r.summary());
        assert!((sj_theory_slope(-0.3, &[9.0, 0.2], 2, 1) - (-0.3 - 0.2 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn keyprop_target_exponent() {
        let p = keyprop_target(&[Exponent::integer(2), Exponent::integer(2)]).unwrap();
        assert_eq!(p, Exponent::integer(1));
        assert!(keyprop_target(&[Exponent::Infinite, Exponent::integer(2)]).is_err());
    }

    #[test]
    fn keyprop_single_box_inputs() {
        let config = KeypropConfig {
            radii: vec![4],
            ..Default::default()
        };
        let spec = GridSpec::new(1, 64, 2.0).unwrap();
        let single = |k: f64| GridFunction::from_fn(spec, move |x| C64::from_polar(1.0, k * x[0]));
        let (l2, _, rhs) = keyprop_sides(&config, spec, 4, &[4.0, 4.0], &[single(5.0), single(-4.0)]).unwrap();
        assert!(l2 > 0.0 && rhs > 0.0 && (l2 / rhs).is_finite());
        let (l2b, _, rhsb) =
            keyprop_sides(&config, spec, 4, &[8.0, 4.0], &[single(9.0), single(-7.0)]).unwrap();
        let change = (l2b / rhsb) / (l2 / rhs);
        assert!(change > 0.5 && change < 2.0, "{change}");
    }

    #[test]
    fn monotonicity_has_no_violations() {
        assert_eq!(lq_monotonicity_violations(5, 1000, 16), 0);
    }

    #[test]
    fn constant_symbol_band_decay_is_trivial() {
        let config = BandDecayConfig {
            symbol: TestSymbolSpec::Constant {
                multilinearity: 2,
                n: 1,
                re: 1.0,
                im: 0.0,
            },
            grid_points: 64,
            levels: vec![2, 3, 4],
            ..Default::default()
        };
        let r = run_band_decay(&config).unwrap();
        assert!(r.rows.is_empty() && r.passed());
        assert!(r.notes.iter().any(|n| n.contains("ℓ₀ ≤ 1")));
    }
}
