//! The sign in front of the leaves coefficient recurrence, settled against
//! exact standardized moments.

use msearch::limits::{normal_limit_moments_from, LeavesSign, LimitKind};
use msearch::singular::closed_form_constants;
use msearch::{exact_moments, expansion_coefficients, tree_counts, MomentMode, TollSpec};

#[test]
fn plus_sign_matches_exact_fourth_moment() {
    let m = 2;
    let sd = expansion_coefficients(m, 128).unwrap();
    let toll = TollSpec::leaves(m).unwrap();
    let tc = closed_form_constants(&toll, &sd).unwrap();
    let kind = LimitKind::LeavesNormal(m);

    let plus = normal_limit_moments_from(&kind, &sd, &tc, 4, LeavesSign::Plus).unwrap();
    let l2 = plus.moments[2].to_f64();
    let plus_kurt = plus.moments[4].to_f64() / (l2 * l2);

    // exact standardized fourth moment at a large size
    let n = 2000;
    let table = tree_counts(m, n).unwrap();
    let centered = msearch::centered_spec(&toll, &msearch::Real::Exact(rug::Rational::from((1, 4))));
    let mt = exact_moments(&centered, &table, 4, n, MomentMode::Float(192)).unwrap();
    let stats = mt.stats(192).unwrap();
    let exact_kurt = 3.0 + stats[n].excess_kurtosis.as_ref().unwrap().to_f64();

    let minus = normal_limit_moments_from(&kind, &sd, &tc, 4, LeavesSign::Minus);
    println!("plus: L4/L2^2 = {plus_kurt:.6}; exact at n = {n}: {exact_kurt:.6}; minus: {:?}", minus.as_ref().map(|s| s.moments[4].to_f64()));
    assert!((plus_kurt - 3.0).abs() < 1e-12);
    assert!((exact_kurt - plus_kurt).abs() < 0.01);
    // the printed minus makes the fourth coefficient negative, which no
    // moment sequence allows; the engine refuses it
    assert!(minus.is_err() || minus.unwrap().moments[4].is_sign_negative());
}
