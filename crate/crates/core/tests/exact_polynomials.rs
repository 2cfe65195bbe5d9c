use iterfield::poly::{as_i64, d_k_poly, families, rat, Limits, PolyField, RationalPoly};

fn p(text: &str) -> RationalPoly {
    RationalPoly::parse(text, families::NVARS).unwrap()
}

fn names(q: &RationalPoly) -> String {
    q.render_with(&families::NAMES)
}

// a, b, c, d are x0..x3 in the parametric ring
const A: &str = "x0";
const B: &str = "x1";
const C: &str = "x2";
const D: &str = "x3";

fn sub(a: &str, b: &str) -> RationalPoly {
    &p(a) - &p(b)
}

#[test]
fn linear_dk_factorizations() {
    let b_minus_c = sub(B, C);
    let trace = &p(A) + &p(D);
    let d3_tail = p("x0^2 + x0*x3 + x1*x2 + x3^2");
    let d4_tail = p("x0^2 + 2*x1*x2 + x3^2");
    let expected = [
        b_minus_c.clone(),
        &b_minus_c * &trace,
        &b_minus_c * &d3_tail,
        &(&b_minus_c * &trace) * &d4_tail,
    ];
    for (k, want) in (1..=4).zip(expected) {
        assert_eq!(families::linear_dk_symbolic(k).unwrap(), want, "k = {k}");
    }
}

#[test]
fn cubic_square_and_certificate() {
    let f = RationalPoly::parse("x0^2*x1", 2).unwrap();
    let v = PolyField::gradient(&f, &[0, 1]).unwrap();
    let v2 = v.iterate(2, &Limits::default()).unwrap();
    assert_eq!(v2.components()[0], RationalPoly::parse("4*x0^3*x1", 2).unwrap());
    assert_eq!(v2.components()[1], RationalPoly::parse("4*x0^2*x1^2", 2).unwrap());
    let d2 = d_k_poly(&v, 2, &Limits::default()).unwrap();
    assert_eq!(d2.entry(0, 1), &RationalPoly::parse("4*x0^3 - 8*x0*x1^2", 2).unwrap());
    assert!(d_k_poly(&v, 1, &Limits::default()).unwrap().is_zero());
}

#[test]
fn cubic_coefficients_match_closed_forms() {
    let g = families::cubic_gate_poly();
    assert_eq!(g, p("3*x0*x2 - x1^2 + 3*x1*x3 - x2^2"));
    let four = RationalPoly::constant(families::NVARS, rat(4));
    let expected = [
        ((3, 0), &(&RationalPoly::constant(families::NVARS, rat(-4)) * &p(B)) * &g),
        ((2, 1), &(&four * &p("3*x0 - 2*x2")) * &g),
        ((1, 2), &(&four * &p("2*x1 - 3*x3")) * &g),
        ((0, 3), &(&four * &p(C)) * &g),
    ];
    let got = families::cubic_dk_coefficients(2).unwrap();
    assert_eq!(got.len(), 4);
    for ((mono, coef), (want_mono, want)) in got.iter().zip(expected.iter()) {
        assert_eq!(mono, want_mono);
        assert_eq!(names(coef), names(want));
        assert!(coef.div_exact(&g).unwrap().is_some());
    }
}

#[test]
fn cubic_k3_conditions_divisible_by_gate() {
    let g = families::cubic_gate_poly();
    let got = families::cubic_dk_coefficients(3).unwrap();
    assert_eq!(got.len(), 8);
    for (mono, coef) in &got {
        assert_eq!(mono.0 + mono.1, 7);
        assert!(coef.is_homogeneous());
        assert_eq!(coef.degree(), Some(7));
        assert!(coef.div_exact(&g).unwrap().is_some(), "x^{} y^{}", mono.0, mono.1);
    }
}

#[test]
fn gate_zero_locus_gives_two_conservative_instances() {
    // (a, b, c, d) = (1, 3, 3, 1): f = (x + y)^3 has g = 0
    let f = RationalPoly::parse("x0^3 + 3*x0^2*x1 + 3*x0*x1^2 + x1^3", 2).unwrap();
    let v = PolyField::gradient(&f, &[0, 1]).unwrap();
    assert!(d_k_poly(&v, 2, &Limits::default()).unwrap().is_zero());
    assert!(d_k_poly(&v, 3, &Limits::default()).unwrap().is_zero());
    let g_val = iterfield::poly::cubic_gate(&rat(1), &rat(3), &rat(3), &rat(1));
    assert_eq!(as_i64(&g_val), Some(0));
    // adding x^2 y leaves the locus
    let h = RationalPoly::parse("x0^3 + 3*x0^2*x1 + 3*x0*x1^2 + x1^3 + x0^2*x1", 2).unwrap();
    let w = PolyField::gradient(&h, &[0, 1]).unwrap();
    assert!(!d_k_poly(&w, 2, &Limits::default()).unwrap().is_zero());
}
