//! Acceptance suite: every criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use besov_pdo::exponents::{critical_order, Exponent, ExponentProfile};
use besov_pdo::experiments::{
    default_profile, run_band_decay, run_embedding_suite, run_keyprop_ratio, run_sharpness_s,
    run_sharpness_sj, run_wainger_contrast, BandDecayConfig, EmbeddingConfig, ExperimentReport,
    KeypropConfig, KhintchineConfig, SharpnessConfig, SharpnessMode, SharpnessSjConfig,
    WaingerContrastConfig,
};
use besov_pdo::grid::{apply_multiplier, transform};
use besov_pdo::operator::{apply_direct, apply_via_expansion, make_plan, ExpansionConfig};
use besov_pdo::partitions::{make_lp_family, verify_family, FamilyKind};
use besov_pdo::symbols::{
    bracket_symbol, constant_symbol, oscillatory_symbol, separable_symbol, Amplitude,
    MultiplierSpec, Symbol,
};
use besov_pdo::{Direction, Domain, GridFunction, GridSpec};
use num_complex::Complex64 as C64;
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn run(id: usize, title: &str, limit: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(o) => (o.passed && elapsed <= limit, o.detail),
        Err(_) => (false, "panicked".to_string()),
    };
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!(
        "[{verdict}] {id:>2}. {title} ({:.2}s / limit {}s): {detail}",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    passed
}

fn random_band(spec: GridSpec, band: f64, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hat = GridFunction::zeros(spec, Domain::Frequency);
    let mut xi = vec![0.0; spec.n];
    for i in 0..spec.len() {
        spec.frequency(i, &mut xi);
        if xi.iter().all(|v| v.abs() <= band) {
            hat.samples[i] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    transform(&hat, Direction::Inverse).unwrap()
}

fn slope_of(r: &ExperimentReport) -> String {
    r.fit
        .as_ref()
        .map_or("no fit".into(), |f| format!("{:.4}", f.slope))
}

fn describe(reports: &[&ExperimentReport]) -> String {
    reports
        .iter()
        .map(|r| format!("{}: slope {} {:?}", r.name, slope_of(r), r.verdict))
        .collect::<Vec<_>>()
        .join("; ")
}

fn theorem_d_profile(n: usize, p: Exponent, s_j: [Rational64; 2]) -> ExponentProfile {
    ExponentProfile::new(n, p, vec![Exponent::integer(2); 2], s_j[0] + s_j[1], s_j.to_vec()).unwrap()
}

fn critical_order_oracle() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut cases = 0;
    for n in 1..=3usize {
        for p in [
            Exponent::integer(1),
            Exponent::ratio(4, 3),
            Exponent::ratio(3, 2),
            Exponent::ratio(7, 4),
            Exponent::integer(2),
        ] {
            for s in [[0, 0], [1, -1], [3, 5]] {
                let s_j = [Rational64::new(s[0], 2), Rational64::new(s[1], 3)];
                let m = critical_order(&theorem_d_profile(n, p, s_j));
                cases += 1;
                if m != Rational64::new(-(n as i64), 2) {
                    failures.push(format!("n={n} p={p}: {m}"));
                }
            }
        }
    }
    let per_case = start.elapsed() / cases;
    outcome(
        failures.is_empty() && per_case < Duration::from_millis(1),
        format!("{cases} profiles, {per_case:?} each, mismatches {failures:?}"),
    )
}

fn partition_exactness() -> Outcome {
    let grid = GridSpec::new(1, 1 << 14, 1.0).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for kind in [FamilyKind::GenericLp, FamilyKind::SharpLp, FamilyKind::SharpLpTilde] {
        let family = make_lp_family(kind, 12, Some(&grid)).unwrap();
        let report = verify_family(&family, &grid);
        ok &= report.passed();
        let worst = report
            .checks
            .iter()
            .map(|c| format!("{}={:.1e}", c.name, c.max_deviation))
            .collect::<Vec<_>>()
            .join(",");
        details.push(format!("{kind:?}[{worst}]"));
    }
    outcome(ok, format!("{} frequencies; {}", grid.len(), details.join(" ")))
}

fn operator_identity() -> Outcome {
    let spec = GridSpec::new(1, 1 << 10, 1.0).unwrap();
    let f = random_band(spec, 60.0, 1);
    let g = random_band(spec, 40.0, 2);
    let inputs = [f.clone(), g.clone()];
    let one = constant_symbol(2, 1, C64::new(1.0, 0.0)).unwrap();
    let product = f.mul_pointwise(&g).unwrap();
    let e1 = apply_direct(&one, &inputs).unwrap().relative_error(&product);

    let m1 = MultiplierSpec::Gaussian { width: 20.0 }.sampler();
    let m2 = MultiplierSpec::Bracket { order: -1.0 }.sampler();
    let sep = separable_symbol(1, vec![m1.clone(), m2.clone()]).unwrap();
    let closed = apply_multiplier(&m1, &f)
        .unwrap()
        .mul_pointwise(&apply_multiplier(&m2, &g).unwrap())
        .unwrap();
    let e2 = apply_direct(&sep, &inputs).unwrap().relative_error(&closed);

    let amp = Amplitude::Poisson { radius: 0.5 };
    let osc = oscillatory_symbol(1, amp.clone(), vec![m1, m2]).unwrap();
    let a = GridFunction::from_fn(spec, |x| amp.eval(x));
    let e3 = apply_direct(&osc, &inputs)
        .unwrap()
        .relative_error(&a.mul_pointwise(&closed).unwrap());
    let worst = e1.max(e2).max(e3);
    outcome(
        worst < 1e-10,
        format!("σ≡1 {e1:.2e}, separable {e2:.2e}, oscillatory {e3:.2e}"),
    )
}

fn expansion_symbols() -> Vec<(&'static str, Symbol)> {
    vec![
        ("constant", constant_symbol(2, 1, C64::new(1.0, 0.0)).unwrap()),
        (
            "separable",
            separable_symbol(
                1,
                vec![
                    MultiplierSpec::Gaussian { width: 3.0 }.sampler(),
                    MultiplierSpec::Bracket { order: -1.0 }.sampler(),
                ],
            )
            .unwrap(),
        ),
        ("bracket", bracket_symbol(2, 1, -1.0).unwrap()),
        (
            "poisson",
            oscillatory_symbol(
                1,
                Amplitude::Poisson { radius: 0.5 },
                vec![
                    MultiplierSpec::Bracket { order: -1.0 }.sampler(),
                    MultiplierSpec::One.sampler(),
                ],
            )
            .unwrap(),
        ),
        (
            "exponential",
            oscillatory_symbol(
                1,
                Amplitude::Exponential { frequency: vec![1] },
                vec![MultiplierSpec::One.sampler(), MultiplierSpec::One.sampler()],
            )
            .unwrap(),
        ),
    ]
}

fn expansion_equivalence() -> Outcome {
    let spec = GridSpec::new(1, 128, 1.0).unwrap();
    let inputs = [random_band(spec, 10.0, 3), random_band(spec, 10.0, 4)];
    let full = ExpansionConfig::default();
    let half = ExpansionConfig {
        radius: full.radius / 2,
        ..full.clone()
    };
    let mut ok = true;
    let mut details = Vec::new();
    for (name, sigma) in expansion_symbols() {
        let direct = apply_direct(&sigma, &inputs).unwrap();
        let error = |cfg: &ExpansionConfig| {
            let plan = make_plan(&sigma, &inputs, cfg.clone()).unwrap();
            apply_via_expansion(&sigma, &inputs, &plan)
                .unwrap()
                .relative_error(&direct)
        };
        let (coarse, fine) = (error(&half), error(&full));
        ok &= fine < 1e-6 && fine < coarse;
        details.push(format!("{name} R{}={coarse:.1e} R{}={fine:.1e}", half.radius, full.radius));
    }
    outcome(ok, details.join(", "))
}

fn band_decay() -> (Outcome, ExperimentReport) {
    let report = run_band_decay(&BandDecayConfig::default()).unwrap();
    let slope = report.fit.as_ref().map(|f| f.slope);
    let remainder = &report.parts[0];
    (
        outcome(
            slope.is_some_and(|s| s <= -3.0 + 0.2) && report.passed(),
            format!(
                "Q-band slope {} over ℓ₀ {:?}; remainder slope {}",
                slope_of(&report),
                report.rows.iter().map(|r| r.level).collect::<Vec<_>>(),
                slope_of(remainder)
            ),
        ),
        report,
    )
}

fn combinatorial_configs() -> Vec<SharpnessConfig> {
    [(0.0, [0.0, 0.0]), (-1.0, [0.635, 0.635]), (0.5, [0.3, 0.2])]
        .into_iter()
        .map(|(m, b)| SharpnessConfig {
            order: Some(m),
            decay: Some(b.to_vec()),
            levels: Some((6..=12).collect()),
            tolerance: Some(0.15),
            ..Default::default()
        })
        .collect()
}

fn sj_configs() -> Vec<SharpnessSjConfig> {
    let three = ExponentProfile::new(
        1,
        Exponent::ratio(2, 3),
        vec![Exponent::integer(2); 3],
        Rational64::from_integer(0),
        vec![Rational64::from_integer(0); 3],
    )
    .unwrap();
    let base = SharpnessSjConfig {
        delta: 0.5,
        gap: Some(3),
        levels: (6..=12).collect(),
        tolerance: 0.15,
        ..Default::default()
    };
    vec![
        SharpnessSjConfig {
            order: Some(0.0),
            decay: Some(vec![0.0, 0.0]),
            ..base.clone()
        },
        SharpnessSjConfig {
            profile: default_profile(),
            khintchine: Some(KhintchineConfig::default()),
            ..base.clone()
        },
        SharpnessSjConfig {
            profile: three.clone(),
            order: Some(0.0),
            decay: Some(vec![0.0, 0.0, 0.0]),
            ..base.clone()
        },
        SharpnessSjConfig {
            profile: three,
            order: Some(-0.5),
            decay: Some(vec![0.5, 0.3, 0.2]),
            ..base
        },
    ]
}

fn pipeline_config() -> SharpnessConfig {
    SharpnessConfig {
        mode: SharpnessMode::Pipeline,
        levels: Some((5..=8).collect()),
        ..Default::default()
    }
}

fn wainger_config() -> WaingerContrastConfig {
    WaingerContrastConfig::default()
}

fn main() {
    let mut reports: Vec<(String, ExperimentReport)> = Vec::new();
    let mut results = Vec::new();

    results.push(run(1, "critical order oracle", Duration::from_secs(1), critical_order_oracle));
    results.push(run(2, "partition exactness", Duration::from_secs(5), partition_exactness));
    results.push(run(3, "operator identity", Duration::from_secs(10), operator_identity));
    results.push(run(4, "expansion equivalence", Duration::from_secs(120), expansion_equivalence));
    results.push(run(5, "coefficient band decay", Duration::from_secs(60), || {
        let (o, r) = band_decay();
        reports.push(("band_decay".into(), r));
        o
    }));
    results.push(run(6, "combinatorial sharpness slope", Duration::from_secs(60), || {
        let rs: Vec<ExperimentReport> = combinatorial_configs()
            .iter()
            .map(|c| run_sharpness_s(c).unwrap())
            .collect();
        let ok = rs.iter().all(|r| r.passed());
        let detail = rs
            .iter()
            .map(|r| {
                let theory = match r.criterion {
                    besov_pdo::experiments::Criterion::Slope { theory, .. } => theory,
                    _ => f64::NAN,
                };
                format!("theory {theory:.3} fitted {}", slope_of(r))
            })
            .collect::<Vec<_>>()
            .join("; ");
        for (i, r) in rs.into_iter().enumerate() {
            reports.push((format!("sharpness_s_{i}"), r));
        }
        outcome(ok, detail)
    }));
    results.push(run(7, "coefficient vector slope", Duration::from_secs(120), || {
        let rs: Vec<ExperimentReport> = sj_configs()
            .iter()
            .map(|c| run_sharpness_sj(c).unwrap())
            .collect();
        let ok = rs.iter().all(|r| r.passed());
        let detail = rs
            .iter()
            .map(|r| {
                let theory = match r.criterion {
                    besov_pdo::experiments::Criterion::Slope { theory, .. } => theory,
                    _ => f64::NAN,
                };
                let extra = r
                    .parts
                    .first()
                    .and_then(|p| p.statistic)
                    .map_or(String::new(), |s| format!(" khintchine worst ratio {s:.3}"));
                format!("theory {theory:.3} fitted {}{extra}", slope_of(r))
            })
            .collect::<Vec<_>>()
            .join("; ");
        for (i, r) in rs.into_iter().enumerate() {
            reports.push((format!("sharpness_sj_{i}"), r));
        }
        outcome(ok, detail)
    }));
    results.push(run(8, "full-pipeline cross-check", Duration::from_secs(600), || {
        let r = run_sharpness_s(&pipeline_config()).unwrap();
        let detail = format!(
            "operator-ratio slope {}, coefficient-sum slope {}",
            slope_of(&r),
            slope_of(&r.parts[0])
        );
        let ok = r.passed();
        reports.push(("pipeline".into(), r));
        outcome(ok, detail)
    }));
    results.push(run(9, "lattice-product constant independence", Duration::from_secs(300), || {
        let r = run_keyprop_ratio(&KeypropConfig::default()).unwrap();
        let detail = describe(&r.parts.iter().collect::<Vec<_>>());
        let ok = r.passed();
        reports.push(("keyprop".into(), r));
        outcome(ok, detail)
    }));
    results.push(run(10, "embedding battery", Duration::from_secs(300), || {
        let r = run_embedding_suite(&EmbeddingConfig::default()).unwrap();
        let detail = r
            .parts
            .iter()
            .map(|p| format!("{} {:.3}", p.name.trim_start_matches("embeddings/"), p.statistic.unwrap_or(f64::NAN)))
            .collect::<Vec<_>>()
            .join(", ");
        let ok = r.passed();
        reports.push(("embeddings".into(), r));
        outcome(ok, detail)
    }));
    results.push(run(11, "Wainger threshold contrast", Duration::from_secs(120), || {
        let r = run_wainger_contrast(&wainger_config()).unwrap();
        let detail = r
            .parts
            .iter()
            .map(|p| format!("{} {:+.1}%", p.name.trim_start_matches("wainger/"), 100.0 * p.statistic.unwrap_or(f64::NAN)))
            .collect::<Vec<_>>()
            .join(", ");
        let ok = r.passed();
        reports.push(("wainger".into(), r));
        outcome(ok, detail)
    }));
    results.push(run(12, "determinism", Duration::from_secs(3600), || {
        let mut rerun: Vec<(String, ExperimentReport)> = Vec::new();
        rerun.push(("band_decay".into(), run_band_decay(&BandDecayConfig::default()).unwrap()));
        for (i, c) in combinatorial_configs().iter().enumerate() {
            rerun.push((format!("sharpness_s_{i}"), run_sharpness_s(c).unwrap()));
        }
        for (i, c) in sj_configs().iter().enumerate() {
            rerun.push((format!("sharpness_sj_{i}"), run_sharpness_sj(c).unwrap()));
        }
        rerun.push(("pipeline".into(), run_sharpness_s(&pipeline_config()).unwrap()));
        rerun.push(("keyprop".into(), run_keyprop_ratio(&KeypropConfig::default()).unwrap()));
        rerun.push(("embeddings".into(), run_embedding_suite(&EmbeddingConfig::default()).unwrap()));
        rerun.push(("wainger".into(), run_wainger_contrast(&wainger_config()).unwrap()));
        let mut differing = Vec::new();
        let mut compared = 0;
        for (name, report) in &rerun {
            let Some((_, first)) = reports.iter().find(|(n, _)| n == name) else {
                continue;
            };
            compared += 1;
            let same = first.to_csv_string().unwrap() == report.to_csv_string().unwrap()
                && first.to_json().unwrap() == report.to_json().unwrap();
            if !same {
                differing.push(name.clone());
            }
        }
        outcome(
            differing.is_empty() && compared == rerun.len(),
            format!("{compared}/{} experiments compared, differing: {differing:?}", rerun.len()),
        )
    }));

    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
