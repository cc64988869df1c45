use besov_pdo::exponents::Exponent;
use besov_pdo::operator::{apply_direct, apply_via_expansion, make_plan, ExpansionConfig};
use besov_pdo::partitions::{band_project, levels_for_grid, make_lp_family, FamilyKind};
use besov_pdo::spaces::{besov_norm, lp_norm, BlockNorm, MaximalConfig};
use besov_pdo::symbols::{make_test_symbol, TestSymbolSpec};
use besov_pdo::{GridFunction, GridSpec};
use num_complex::Complex64 as C64;

fn trig(spec: GridSpec, terms: &[(i64, C64)]) -> GridFunction {
    let mut coefs = vec![C64::new(0.0, 0.0); spec.len()];
    let m = spec.points_per_dim as i64;
    for &(k, c) in terms {
        coefs[k.rem_euclid(m) as usize] = c;
    }
    GridFunction::from_series(spec, coefs).unwrap()
}

#[test]
fn band_pieces_reassemble_the_input() {
    let spec = GridSpec::new(1, 256, 1.0).unwrap();
    let f = trig(
        spec,
        &[(0, C64::new(1.0, 0.0)), (5, C64::new(0.0, 2.0)), (-37, C64::new(0.5, 0.5)), (90, C64::new(-1.0, 0.0))],
    );
    for kind in [FamilyKind::GenericLp, FamilyKind::SharpLp] {
        let family = make_lp_family(kind, levels_for_grid(kind, &spec), Some(&spec)).unwrap();
        let mut total = GridFunction::zeros(spec, f.domain);
        for k in 0..=family.max_level {
            total = total.add(&band_project(k, &family, &f).unwrap()).unwrap();
        }
        let err = total.add(&f.scaled(C64::new(-1.0, 0.0))).unwrap().max_abs();
        assert!(err < 1e-12, "{kind:?}: {err:e}");
    }
}

#[test]
fn besov_norm_of_a_single_band() {
    // One exponential at frequency 16 sits in the plateau of the sharp
    // window at level 4, so only that block contributes.
    let spec = GridSpec::new(1, 128, 1.0).unwrap();
    let f = trig(spec, &[(16, C64::new(1.0, 0.0))]);
    let family = make_lp_family(FamilyKind::SharpLp, levels_for_grid(FamilyKind::SharpLp, &spec), Some(&spec)).unwrap();
    let two = Exponent::integer(2);
    let report = besov_norm(&f, two, two, 1.0, &family, BlockNorm::Lp, &MaximalConfig::default()).unwrap();
    let expected = 16.0 * lp_norm(&f, two).unwrap();
    assert!((report.value - expected).abs() < 1e-9 * expected);
}

#[test]
fn expansion_matches_direct_for_a_bracket_symbol() {
    let spec = GridSpec::new(1, 64, 1.0).unwrap();
    let f = trig(spec, &[(1, C64::new(1.0, 0.0)), (-3, C64::new(0.0, 1.0))]);
    let g = trig(spec, &[(2, C64::new(0.5, 0.0)), (4, C64::new(1.0, -1.0))]);
    let sigma = make_test_symbol(&TestSymbolSpec::Bracket { multilinearity: 2, n: 1, order: -1.0 }).unwrap();
    let inputs = [f, g];
    let direct = apply_direct(&sigma, &inputs).unwrap();
    let plan = make_plan(&sigma, &inputs, ExpansionConfig::default()).unwrap();
    let expanded = apply_via_expansion(&sigma, &inputs, &plan).unwrap();
    let err = expanded.add(&direct.scaled(C64::new(-1.0, 0.0))).unwrap().max_abs();
    assert!(err < 1e-6 * direct.max_abs(), "{err:e}");
}
