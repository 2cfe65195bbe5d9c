//! Deciding or estimating k-conservatism.
//!
//! Linear and polynomial fields get exact verdicts (symmetry of `A^k`, or
//! vanishing of `D_k(V)` over the rationals). Everything else is sampled:
//! the normalized asymmetry of `J(V^k)` at seeded points. Sampled verdicts
//! are evidence only, since symmetry at finitely many points is necessary
//! but not sufficient.

use num::{BigRational, ToPrimitive};
use rayon::prelude::*;
use serde::ser::{Serialize, Serializer};
use serde::Serialize as DeriveSerialize;

use crate::error::{Error, Result};
use crate::field::{FieldDef, FieldKind};
use crate::linalg::{asymmetry, f64_to_rational, RationalMatrix, Vector};
use crate::poly::{d_k_poly, Limits, PolyField};
use crate::sampling::SampleConfig;

pub const DEFAULT_THRESHOLD: f64 = 1e-8;

/// Why an exact check said no.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Entry `(row, col)` of `A^k − (A^k)ᵀ`.
    MatrixEntry { row: usize, col: usize, value: BigRational },
    /// Entry `(row, col)` of `D_k(V)`.
    Polynomial { row: usize, col: usize, poly: String },
    /// Rotation by `π·angle`; `angle·k` is not an integer.
    Rotation { angle: BigRational, k: u32 },
}

impl Certificate {
    pub fn text(&self) -> String {
        match self {
            Certificate::MatrixEntry { row, col, value } => format!("D[{row},{col}] = {value}"),
            Certificate::Polynomial { row, col, poly } => format!("D[{row},{col}] = {poly}"),
            Certificate::Rotation { angle, k } => {
                format!("rotation by {angle}*pi, {k}*{angle} is not an integer")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    ExactYes,
    ExactNo(Certificate),
    NumericPass { max_residual: f64 },
    NumericFail { max_residual: f64, witness: Vector },
}

impl Verdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, Verdict::ExactYes | Verdict::NumericPass { .. })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Verdict::ExactYes | Verdict::ExactNo(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::ExactYes => "exact_yes",
            Verdict::ExactNo(_) => "exact_no",
            Verdict::NumericPass { .. } => "numeric_pass",
            Verdict::NumericFail { .. } => "numeric_fail",
        }
    }

    pub fn residual(&self) -> Option<f64> {
        match self {
            Verdict::NumericPass { max_residual } | Verdict::NumericFail { max_residual, .. } => Some(*max_residual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, DeriveSerialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMethod {
    ExactLinear,
    ExactRotation,
    ExactPolynomial,
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KResult {
    pub k: u32,
    pub method: CheckMethod,
    pub verdict: Verdict,
    /// Samples skipped because evaluation was non-finite.
    pub skipped: usize,
}

#[derive(DeriveSerialize)]
struct KResultView<'a> {
    k: u32,
    method: CheckMethod,
    verdict: &'static str,
    evidence: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<String>,
    skipped: usize,
}

impl Serialize for KResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (witness, certificate) = match &self.verdict {
            Verdict::NumericFail { witness, .. } => (Some(witness.as_slice()), None),
            Verdict::ExactNo(c) => (None, Some(c.text())),
            _ => (None, None),
        };
        KResultView {
            k: self.k,
            method: self.method,
            verdict: self.verdict.label(),
            evidence: if self.verdict.is_exact() { "exact" } else { "sampled evidence, not a proof" },
            residual: self.verdict.residual(),
            witness,
            certificate,
            skipped: self.skipped,
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, DeriveSerialize)]
pub struct ConservatismReport {
    pub field: String,
    pub threshold: f64,
    pub sampling: SampleConfig,
    pub results: Vec<KResult>,
}

impl ConservatismReport {
    pub fn pattern(&self) -> Vec<bool> {
        self.results.iter().map(|r| r.verdict.is_yes()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    ExactIfPossible,
    NumericOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub samples: SampleConfig,
    pub threshold: f64,
    pub limits: Limits,
    pub mode: ScanMode,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            samples: SampleConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            limits: Limits::default(),
            mode: ScanMode::ExactIfPossible,
        }
    }
}

fn require_k(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

/// Exact test of `A^k = (A^k)ᵀ` for a rational matrix.
pub fn check_linear_exact(a: &RationalMatrix, k: u32) -> Result<Verdict> {
    require_k(k)?;
    if !a.is_square() {
        return Err(Error::InvalidParameter("matrix must be square".into()));
    }
    Ok(match a.pow(k)?.first_asymmetry() {
        None => Verdict::ExactYes,
        Some((row, col, value)) => Verdict::ExactNo(Certificate::MatrixEntry { row, col, value }),
    })
}

/// Exact test for a float matrix, using the exact rational value of each
/// entry.
pub fn check_linear(a: &crate::linalg::Matrix, k: u32) -> Result<Verdict> {
    check_linear_exact(&RationalMatrix::from_f64(a)?, k)
}

/// Rotation by `angle·π` raised to the k-th power is symmetric iff
/// `k·angle ∈ ℤ`, i.e. `sin(kπ·angle) = 0`.
pub fn check_rotation(angle: &BigRational, k: u32) -> Result<Verdict> {
    require_k(k)?;
    let turned = angle * BigRational::from_integer(k.into());
    Ok(if turned.is_integer() {
        Verdict::ExactYes
    } else {
        Verdict::ExactNo(Certificate::Rotation { angle: angle.clone(), k })
    })
}

/// Exact test of `D_k(V) ≡ 0`.
pub fn check_poly(v: &PolyField, k: u32, limits: &Limits) -> Result<Verdict> {
    require_k(k)?;
    let d = d_k_poly(v, k, limits)?;
    Ok(match d.first_nonzero() {
        None => Verdict::ExactYes,
        Some((row, col, p)) => Verdict::ExactNo(Certificate::Polynomial {
            row,
            col,
            poly: p.to_string(),
        }),
    })
}

/// Largest normalized asymmetry of `J(V^k)` over the points, with the number
/// of points skipped for non-finite values. At least half must succeed.
pub fn numeric_residuals(field: &FieldDef, k: u32, points: &[Vector]) -> Result<(Vec<Option<f64>>, usize)> {
    require_k(k)?;
    if points.is_empty() {
        return Err(Error::InvalidParameter("no sample points".into()));
    }
    let it = FieldDef::iterate(field.clone(), k)?;
    let method = it.best_jacobian_method();
    let results: Vec<Result<Option<f64>>> = points
        .par_iter()
        .map(|x| match it.jacobian(x, &method) {
            Ok(j) => Ok(Some(asymmetry(&j))),
            Err(Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let residuals = results.into_iter().collect::<Result<Vec<_>>>()?;
    let failed = residuals.iter().filter(|r| r.is_none()).count();
    if 2 * (points.len() - failed) < points.len() {
        return Err(Error::TooManyFailures {
            failed,
            total: points.len(),
        });
    }
    Ok((residuals, failed))
}

/// Sampled Clairaut test at explicit points.
pub fn check_numeric_at(field: &FieldDef, k: u32, points: &[Vector], threshold: f64) -> Result<(Verdict, usize)> {
    let (residuals, skipped) = numeric_residuals(field, k, points)?;
    let mut worst = 0usize;
    let mut max_residual = f64::NEG_INFINITY;
    for (i, r) in residuals.iter().enumerate() {
        if let Some(r) = r {
            if *r > max_residual {
                max_residual = *r;
                worst = i;
            }
        }
    }
    let verdict = if max_residual > threshold {
        Verdict::NumericFail {
            max_residual,
            witness: points[worst].clone(),
        }
    } else {
        Verdict::NumericPass { max_residual }
    };
    Ok((verdict, skipped))
}

pub fn check_numeric(field: &FieldDef, k: u32, samples: &SampleConfig, threshold: f64) -> Result<Verdict> {
    Ok(check_numeric_at(field, k, &samples.points(field.dim()), threshold)?.0)
}

/// Exact linear structure of a field's Jacobian.
#[derive(Debug, Clone)]
enum Linear {
    Matrix(RationalMatrix),
    /// Rotation of the plane by `angle·π`.
    Rotation(BigRational),
}

fn rat_f64(v: f64) -> Option<BigRational> {
    f64_to_rational(v).ok()
}

fn rotation_matrix(angle: &BigRational) -> Option<RationalMatrix> {
    // exact only at multiples of π/2
    let two = BigRational::from_integer(2.into());
    let q = angle * &two;
    if !q.is_integer() {
        return None;
    }
    let quarter = (q.to_integer() % 4u32).to_i64()?.rem_euclid(4);
    let (c, s): (i64, i64) = match quarter {
        0 => (1, 0),
        1 => (0, 1),
        2 => (-1, 0),
        _ => (0, -1),
    };
    RationalMatrix::from_integers(&[&[c, s], &[-s, c]]).ok()
}

impl Linear {
    fn into_matrix(self) -> Option<RationalMatrix> {
        match self {
            Linear::Matrix(m) => Some(m),
            Linear::Rotation(a) => rotation_matrix(&a),
        }
    }
}

fn linearize(field: &FieldDef) -> Option<Linear> {
    let n = field.dim();
    Some(match field.kind() {
        FieldKind::Constant(_) => Linear::Matrix(RationalMatrix::zeros(n, n)),
        FieldKind::Linear(a) | FieldKind::Affine(a, _) => Linear::Matrix(RationalMatrix::from_f64(a).ok()?),
        FieldKind::Rotation2D { j, .. } => Linear::Rotation(BigRational::new(1.into(), (*j).into())),
        FieldKind::Iterate { inner, k } => match linearize(inner)? {
            Linear::Rotation(a) => Linear::Rotation(a * BigRational::from_integer((*k).into())),
            Linear::Matrix(m) => Linear::Matrix(m.pow(*k).ok()?),
        },
        FieldKind::Compose { outer, inner } => match (linearize(outer)?, linearize(inner)?) {
            (Linear::Rotation(a), Linear::Rotation(b)) => Linear::Rotation(a + b),
            (o, i) => Linear::Matrix(o.into_matrix()?.mul(&i.into_matrix()?).ok()?),
        },
        FieldKind::Scale(c, inner) => {
            let m = linearize(inner)?.into_matrix()?;
            Linear::Matrix(m.scale(&rat_f64(*c)?))
        }
        FieldKind::Sum(terms) => {
            let mut acc = RationalMatrix::zeros(n, n);
            for (w, f) in terms {
                let m = linearize(f)?.into_matrix()?;
                acc = acc.add(&m.scale(&rat_f64(*w)?)).ok()?;
            }
            Linear::Matrix(acc)
        }
        FieldKind::GdMap { inner, gamma } => {
            let m = linearize(inner)?.into_matrix()?;
            let g = rat_f64(*gamma)?;
            Linear::Matrix(RationalMatrix::identity(n).add(&m.scale(&-g)).ok()?)
        }
        FieldKind::PolyExact(p) => {
            let poly = p.field();
            if poly.components().iter().any(|c| c.degree().unwrap_or(0) > 1) {
                return None;
            }
            let mut m = RationalMatrix::zeros(n, n);
            for (i, comp) in poly.components().iter().enumerate() {
                for j in 0..n {
                    let mut e = vec![0u32; n];
                    e[j] = 1;
                    m[(i, j)] = comp.coefficient(&e);
                }
            }
            Linear::Matrix(m)
        }
        _ => return None,
    })
}

fn to_poly(field: &FieldDef, limits: &Limits) -> Result<Option<PolyField>> {
    let n = field.dim();
    let lift = |f: &FieldDef| to_poly(f, limits);
    Ok(match field.kind() {
        FieldKind::PolyExact(p) => Some(p.field().clone()),
        FieldKind::Constant(v) => {
            let z = RationalMatrix::zeros(n, n);
            let b = v.iter().map(|c| f64_to_rational(*c)).collect::<Result<Vec<_>>>()?;
            Some(PolyField::affine(&z, &b)?)
        }
        FieldKind::Linear(a) => Some(PolyField::linear(&RationalMatrix::from_f64(a)?)?),
        FieldKind::Affine(a, b) => {
            let b = b.iter().map(|c| f64_to_rational(*c)).collect::<Result<Vec<_>>>()?;
            Some(PolyField::affine(&RationalMatrix::from_f64(a)?, &b)?)
        }
        FieldKind::Iterate { inner, k } => match lift(inner)? {
            Some(p) => Some(p.iterate(*k, limits)?),
            None => None,
        },
        FieldKind::Compose { outer, inner } => match (lift(outer)?, lift(inner)?) {
            (Some(o), Some(i)) => Some(o.compose(&i, limits)?),
            _ => None,
        },
        FieldKind::Scale(c, inner) => match lift(inner)? {
            Some(p) => Some(p.scale(&f64_to_rational(*c)?)),
            None => None,
        },
        FieldKind::Sum(terms) => {
            let mut acc: Option<PolyField> = None;
            for (w, f) in terms {
                let Some(p) = lift(f)? else { return Ok(None) };
                let p = p.scale(&f64_to_rational(*w)?);
                acc = Some(match acc {
                    None => p,
                    Some(a) => a.try_add(&p)?,
                });
            }
            acc
        }
        FieldKind::GdMap { inner, gamma } => match lift(inner)? {
            Some(p) => {
                let id = PolyField::identity_on(n, &(0..n).collect::<Vec<_>>())?;
                Some(id.try_add(&p.scale(&-f64_to_rational(*gamma)?))?)
            }
            None => None,
        },
        _ => None,
    })
}

/// One verdict for one `k`, choosing the strongest available method.
pub fn check(field: &FieldDef, k: u32, opts: &CheckOptions) -> Result<KResult> {
    require_k(k)?;
    if opts.mode == ScanMode::ExactIfPossible {
        if let Some(lin) = linearize(field) {
            return Ok(match lin {
                Linear::Rotation(a) => KResult {
                    k,
                    method: CheckMethod::ExactRotation,
                    verdict: check_rotation(&a, k)?,
                    skipped: 0,
                },
                Linear::Matrix(m) => KResult {
                    k,
                    method: CheckMethod::ExactLinear,
                    verdict: check_linear_exact(&m, k)?,
                    skipped: 0,
                },
            });
        }
        if let Some(p) = to_poly(field, &opts.limits)? {
            return Ok(KResult {
                k,
                method: CheckMethod::ExactPolynomial,
                verdict: check_poly(&p, k, &opts.limits)?,
                skipped: 0,
            });
        }
    }
    let (verdict, skipped) = check_numeric_at(field, k, &opts.samples.points(field.dim()), opts.threshold)?;
    Ok(KResult {
        k,
        method: CheckMethod::Sampled,
        verdict,
        skipped,
    })
}

/// Verdicts for each `k` in `ks` (strictly increasing, each ≥ 1).
pub fn check_ks(field: &FieldDef, ks: &[u32], opts: &CheckOptions) -> Result<ConservatismReport> {
    if ks.is_empty() {
        return Err(Error::InvalidParameter("empty k list".into()));
    }
    if ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("k values must be strictly increasing and positive".into()));
    }
    let results = ks.iter().map(|&k| check(field, k, opts)).collect::<Result<Vec<_>>>()?;
    Ok(ConservatismReport {
        field: field.describe(),
        threshold: opts.threshold,
        sampling: opts.samples,
        results,
    })
}

pub fn scan_k(field: &FieldDef, k_max: u32, opts: &CheckOptions) -> Result<ConservatismReport> {
    require_k(k_max)?;
    check_ks(field, &(1..=k_max).collect::<Vec<_>>(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{glm_gradient, Activation, GlmSpec};
    use crate::linalg::Matrix;
    use crate::poly::{families, RationalPoly};

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn x2y_gradient() -> PolyField {
        let f = RationalPoly::parse("1*x0^2*x1", 2).unwrap();
        PolyField::gradient(&f, &[0, 1]).unwrap()
    }

    #[test]
    fn linear_pattern() {
        let a = m2(1.0, 2.0, 1.0, -1.0);
        let got: Vec<bool> = (1..=4).map(|k| check_linear(&a, k).unwrap().is_yes()).collect();
        assert_eq!(got, [false, true, false, true]);
        let nil = m2(-1.0, -1.0, 1.0, 1.0);
        assert!(!check_linear(&nil, 1).unwrap().is_yes());
        assert!((2..=8).all(|k| check_linear(&nil, k).unwrap() == Verdict::ExactYes));
        assert!((1..=6).all(|k| check_linear(&m2(0.0, 1.0, 1.0, 0.0), k).unwrap().is_yes()));
    }

    #[test]
    fn rotation_divisibility() {
        for j in [2u32, 3, 4, 6] {
            let r = FieldDef::rotation2d(j).unwrap();
            for k in 1..=12u32 {
                let res = check(&r, k, &CheckOptions::default()).unwrap();
                assert_eq!(res.method, CheckMethod::ExactRotation);
                assert_eq!(res.verdict.is_yes(), k % j == 0, "j={j} k={k}");
            }
        }
    }

    #[test]
    fn polynomial_certificates() {
        match check_poly(&x2y_gradient(), 2, &Limits::default()).unwrap() {
            Verdict::ExactNo(Certificate::Polynomial { row: 0, col: 1, poly }) => {
                assert_eq!(poly, "4*x0^3 - 8*x0*x1^2");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(check_poly(&x2y_gradient(), 1, &Limits::default()).unwrap(), Verdict::ExactYes);
        let sep = RationalPoly::parse("1*x0^3 + 1*x1^3", 2).unwrap();
        let sep = PolyField::gradient(&sep, &[0, 1]).unwrap();
        assert_eq!(check_poly(&sep, 2, &Limits::default()).unwrap(), Verdict::ExactYes);
    }

    #[test]
    fn numeric_rotation_examples() {
        let r = FieldDef::rotation2d(3).unwrap();
        match check_numeric(&r, 3, &SampleConfig::default(), DEFAULT_THRESHOLD).unwrap() {
            Verdict::NumericPass { max_residual } => assert!(max_residual < 1e-10),
            other => panic!("{other:?}"),
        }
        match check_numeric(&r, 2, &SampleConfig::default(), DEFAULT_THRESHOLD).unwrap() {
            Verdict::NumericFail { max_residual, .. } => assert!(max_residual > 0.1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn glm_counterexample_and_no_false_alarm() {
        let cube = SampleConfig::cube(50, 1.0, 7);
        let f3 = GlmSpec::new(vec![v(&[1.0, 0.0]), v(&[1.0, 1.0])], Activation::exp()).unwrap();
        assert!(!check_numeric(&glm_gradient(&f3), 2, &cube, DEFAULT_THRESHOLD).unwrap().is_yes());
        assert!(check_numeric(&glm_gradient(&f3), 1, &cube, DEFAULT_THRESHOLD).unwrap().is_yes());
        let z = v(&[0.8, -0.3]);
        let cosh = GlmSpec::new(vec![z.clone(), -z], Activation::exp()).unwrap();
        for k in 1..=4 {
            assert!(check_numeric(&glm_gradient(&cosh), k, &cube, DEFAULT_THRESHOLD).unwrap().is_yes());
        }
    }

    #[test]
    fn scan_examples() {
        let a = FieldDef::linear(m2(1.0, 2.0, 1.0, -1.0)).unwrap();
        let rep = scan_k(&a, 6, &CheckOptions::default()).unwrap();
        assert_eq!(rep.pattern(), [false, true, false, true, false, true]);
        let c = FieldDef::constant(v(&[1.0, -2.0, 0.5])).unwrap();
        assert!(scan_k(&c, 5, &CheckOptions::default()).unwrap().results.iter().all(|r| r.verdict == Verdict::ExactYes));
        let v1 = FieldDef::linear(m2(0.0, 1.0, 1.0, 0.0)).unwrap();
        let v2 = FieldDef::linear(m2(1.0, 0.0, 0.0, -1.0)).unwrap();
        let comp = FieldDef::compose(v1, v2).unwrap();
        assert!(matches!(scan_k(&comp, 1, &CheckOptions::default()).unwrap().results[0].verdict, Verdict::ExactNo(_)));
    }

    #[test]
    fn exact_and_numeric_agree() {
        let fields = vec![
            FieldDef::linear(m2(1.0, 2.0, 1.0, -1.0)).unwrap(),
            FieldDef::linear(m2(-1.0, -1.0, 1.0, 1.0)).unwrap(),
            FieldDef::linear(m2(2.0, 0.0, 0.0, 3.0)).unwrap(),
            FieldDef::rotation2d(4).unwrap(),
            FieldDef::poly(x2y_gradient()).unwrap(),
            FieldDef::poly(PolyField::gradient(&RationalPoly::parse("1*x0^3 + 2*x1^3", 2).unwrap(), &[0, 1]).unwrap()).unwrap(),
        ];
        let exact = CheckOptions::default();
        let numeric = CheckOptions {
            mode: ScanMode::NumericOnly,
            ..CheckOptions::default()
        };
        for f in &fields {
            for k in 1..=4 {
                let e = check(f, k, &exact).unwrap();
                let n = check(f, k, &numeric).unwrap();
                assert!(e.verdict.is_exact());
                assert!(!n.verdict.is_exact());
                assert_eq!(e.verdict.is_yes(), n.verdict.is_yes(), "{} k={k}", f.describe());
            }
        }
    }

    #[test]
    fn gd_map_of_linear_is_exact() {
        let g = FieldDef::gd_map(FieldDef::linear(m2(1.0, 2.0, 1.0, -1.0)).unwrap(), 0.5).unwrap();
        let r = check(&g, 1, &CheckOptions::default()).unwrap();
        assert_eq!(r.method, CheckMethod::ExactLinear);
        assert!(!r.verdict.is_yes());
    }

    #[test]
    fn symbolic_family_routes_to_poly() {
        let quad = FieldDef::poly(PolyField::gradient(&RationalPoly::parse("1*x0^2*x1 + 1*x1^3", 2).unwrap(), &[0, 1]).unwrap()).unwrap();
        let r = check(&FieldDef::iterate(quad, 2).unwrap(), 1, &CheckOptions::default()).unwrap();
        assert_eq!(r.method, CheckMethod::ExactPolynomial);
        // the parametric ring is not a field on R^n
        assert!(FieldDef::poly(families::cubic_gradient_field()).is_err());
    }

    #[test]
    fn report_json_shape() {
        let r = scan_k(&FieldDef::rotation2d(2).unwrap(), 2, &CheckOptions::default()).unwrap();
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j["results"][0]["verdict"], "exact_no");
        assert!(j["results"][0]["certificate"].is_string());
        assert_eq!(j["results"][1]["verdict"], "exact_yes");
        let n = CheckOptions {
            mode: ScanMode::NumericOnly,
            ..CheckOptions::default()
        };
        let j = serde_json::to_value(scan_k(&FieldDef::rotation2d(2).unwrap(), 1, &n).unwrap()).unwrap();
        assert_eq!(j["results"][0]["evidence"], "sampled evidence, not a proof");
        assert_eq!(j["results"][0]["witness"].as_array().unwrap().len(), 2);
        assert!(check_ks(&FieldDef::identity(2), &[2, 1], &CheckOptions::default()).is_err());
    }

    #[test]
    fn too_many_failures() {
        let e = FieldDef::coordwise(vec![crate::field::ScalarFn::new("exp", f64::exp, f64::exp)]).unwrap();
        let pts: Vec<Vector> = (0..10).map(|i| v(&[if i < 8 { 5.0 } else { 0.0 }])).collect();
        assert!(matches!(check_numeric_at(&e, 4, &pts, DEFAULT_THRESHOLD), Err(Error::TooManyFailures { failed: 8, total: 10 })));
    }
}
