//! Jacobian spectra at sample points, sampled convexity classes, and checks
//! that eigenvalue bounds propagate through iterates of gradient fields and
//! gradient-descent maps.
//!
//! Every conclusion here is sampled evidence on the given point set.

use rayon::prelude::*;
use serde::Serialize;

use crate::conservatism::{check_numeric_at, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::field::FieldDef;
use crate::linalg::{asymmetry, serialize_vector, symmetric_eigen_interval, Matrix, Vector};

pub const EVIDENCE: &str = "sampled evidence on the given point set";

/// `|α̂|` at or below this counts as zero.
pub const ZERO_BAND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSample {
    #[serde(serialize_with = "serialize_vector")]
    pub point: Vector,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub asymmetry: f64,
}

fn spectrum_of(point: &Vector, j: &Matrix) -> SpectrumSample {
    let (lambda_min, lambda_max) = symmetric_eigen_interval(j);
    SpectrumSample {
        point: point.clone(),
        lambda_min,
        lambda_max,
        asymmetry: asymmetry(j),
    }
}

/// Eigen-interval of `½(J + Jᵀ)` at `x`, with `J` from the best available
/// method.
pub fn spectrum_at(field: &FieldDef, x: &Vector) -> Result<SpectrumSample> {
    Ok(spectrum_of(x, &field.jacobian_best(x)?))
}

fn spectra(field: &FieldDef, points: &[Vector]) -> Result<Vec<SpectrumSample>> {
    points.par_iter().map(|x| spectrum_at(field, x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ConvexityClass {
    StronglyConvex { alpha: f64 },
    StrictlyConvex,
    Convex,
    WeaklyConvex { delta: f64 },
    NonConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    #[serde(flatten)]
    pub class: ConvexityClass,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub samples: usize,
    pub evidence: &'static str,
}

fn require_conservative(field: &FieldDef, k: u32, points: &[Vector]) -> Result<()> {
    let (verdict, _) = check_numeric_at(field, k, points, DEFAULT_THRESHOLD)?;
    if verdict.is_yes() {
        Ok(())
    } else {
        Err(Error::Refused(format!(
            "{} is not {k}-conservative at the samples (residual {:e})",
            field.describe(),
            verdict.residual().unwrap_or(f64::NAN)
        )))
    }
}

/// Sampled convexity class of the potential of a (presumed) gradient field.
///
/// `α̂ = min λ_min`, `β̂ = max λ_max`. A positive `α̂` reached only on the
/// outermost tenth of the sample radii, and strictly below everything further
/// in, reads as a curvature that keeps decaying outward: strictly but not
/// strongly convex. A negative `α̂` reached there reads as unbounded negative
/// curvature: non-convex rather than weakly convex.
pub fn classify(field: &FieldDef, points: &[Vector]) -> Result<Classification> {
    require_conservative(field, 1, points)?;
    let spec = spectra(field, points)?;
    let alpha_hat = spec.iter().map(|s| s.lambda_min).fold(f64::INFINITY, f64::min);
    let beta_hat = spec.iter().map(|s| s.lambda_max).fold(f64::NEG_INFINITY, f64::max);

    let r_max = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let shell = 0.9 * r_max;
    let inner_min = spec
        .iter()
        .filter(|s| s.point.norm() < shell)
        .map(|s| s.lambda_min)
        .fold(f64::INFINITY, f64::min);
    let outer_min = spec
        .iter()
        .filter(|s| s.point.norm() >= shell)
        .map(|s| s.lambda_min)
        .fold(f64::INFINITY, f64::min);
    let decays_outward = inner_min.is_finite() && outer_min < inner_min - ZERO_BAND;

    let class = if alpha_hat.abs() <= ZERO_BAND {
        ConvexityClass::Convex
    } else if alpha_hat > 0.0 {
        if decays_outward {
            ConvexityClass::StrictlyConvex
        } else {
            ConvexityClass::StronglyConvex { alpha: alpha_hat }
        }
    } else if decays_outward {
        ConvexityClass::NonConvex
    } else {
        ConvexityClass::WeaklyConvex { delta: -alpha_hat }
    };
    Ok(Classification {
        class,
        alpha_hat,
        beta_hat,
        samples: points.len(),
        evidence: EVIDENCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCheck {
    pub j: u32,
    /// Sampled `[min λ_min, max λ_max]`.
    pub interval: [f64; 2],
    pub bound: [f64; 2],
    pub pass: bool,
    /// The same bound with exponent `k` in place of `j`.
    pub bound_exponent_k: [f64; 2],
    pub pass_exponent_k: bool,
    pub max_asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationReport {
    pub field: String,
    pub k: u32,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub samples: usize,
    pub levels: Vec<LevelCheck>,
    pub pass: bool,
    pub evidence: &'static str,
}

fn interval_of(samples: &[SpectrumSample]) -> ([f64; 2], f64) {
    let lo = samples.iter().map(|s| s.lambda_min).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.lambda_max).fold(f64::NEG_INFINITY, f64::max);
    let asym = samples.iter().map(|s| s.asymmetry).fold(0.0, f64::max);
    ([lo, hi], asym)
}

fn inside(interval: [f64; 2], bound: [f64; 2], tol: f64) -> bool {
    interval[0] >= bound[0] - tol && interval[1] <= bound[1] + tol
}

/// Checks that the spectra of `J((∇f)^j)` lie in `[α̂^j, β̂^j]` for `j ≤ k`.
///
/// `α̂`, `β̂` come from `J(∇f)` at the samples and along their orbits
/// `(∇f)^i(x)`, `i < k`, since the chain rule evaluates `J(∇f)` there.
pub fn check_propagation(f_grad: &FieldDef, k: u32, points: &[Vector]) -> Result<PropagationReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    for j in 1..=k {
        require_conservative(f_grad, j, points)?;
    }
    let mut orbit = Vec::with_capacity(points.len() * k as usize);
    for x in points {
        let mut y = x.clone();
        for i in 0..k {
            orbit.push(y.clone());
            if i + 1 < k {
                y = f_grad.eval(&y)?;
            }
        }
    }
    let ([alpha_hat, beta_hat], _) = interval_of(&spectra(f_grad, &orbit)?);
    if alpha_hat < -ZERO_BAND {
        return Err(Error::Refused(format!(
            "propagation bound needs a convex potential, sampled alpha = {alpha_hat:e}"
        )));
    }
    let alpha = alpha_hat.max(0.0);

    let mut levels = Vec::with_capacity(k as usize);
    for j in 1..=k {
        let it = FieldDef::iterate(f_grad.clone(), j)?;
        let (interval, max_asymmetry) = interval_of(&spectra(&it, points)?);
        let bound = [alpha.powi(j as i32), beta_hat.powi(j as i32)];
        let bound_k = [alpha.powi(k as i32), beta_hat.powi(k as i32)];
        levels.push(LevelCheck {
            j,
            interval,
            bound,
            pass: inside(interval, bound, 1e-8 * bound[1]),
            bound_exponent_k: bound_k,
            pass_exponent_k: inside(interval, bound_k, 1e-8 * bound_k[1]),
            max_asymmetry,
        });
    }
    Ok(PropagationReport {
        field: f_grad.describe(),
        k,
        alpha_hat,
        beta_hat,
        samples: points.len(),
        pass: levels.iter().all(|l| l.pass),
        levels,
        evidence: EVIDENCE,
    })
}

/// The class of `f` a gradient-descent propagation check assumes, with the
/// constants the hyperparameter guards need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ClaimedClass {
    StronglyConvex { alpha: f64, beta: f64 },
    Convex { beta: f64 },
    StrictlyConvex { beta: f64 },
    WeaklyConvex { delta: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GdLevelCheck {
    pub j: u32,
    pub interval: [f64; 2],
    pub bound: [f64; 2],
    pub pass: bool,
    /// `[1−λ^k, 1+λ^k]`, the bound with exponent `k`.
    pub bound_exponent_k: [f64; 2],
    pub pass_exponent_k: bool,
    pub max_operator_norm: f64,
    pub lipschitz_bound: f64,
    pub lipschitz_pass: bool,
    /// `(1+λ)^k`, the alternative Lipschitz constant.
    pub lipschitz_alt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalCheck {
    #[serde(serialize_with = "serialize_vector")]
    pub point: Vector,
    pub grad_norm: f64,
    pub max_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GdPropagationReport {
    pub field: String,
    pub gamma: f64,
    pub k: u32,
    pub claimed: ClaimedClass,
    pub lambda: f64,
    pub levels: Vec<GdLevelCheck>,
    pub critical_points: Vec<CriticalCheck>,
    pub pass: bool,
    pub evidence: &'static str,
}

/// `∇h_j = I − (I − γ∇f)^j`.
pub fn h_gradient(f_grad: &FieldDef, gamma: f64, j: u32) -> Result<FieldDef> {
    let it = FieldDef::iterate(FieldDef::gd_map(f_grad.clone(), gamma)?, j)?;
    FieldDef::sum(vec![(1.0, FieldDef::identity(f_grad.dim())), (-1.0, it)])
}

const GAMMA_SLACK: f64 = 1e-12;

/// `λ`, and the Lipschitz bound on `∇h_j` when it does not follow from `λ`.
fn gd_lambda(gamma: f64, claimed: &ClaimedClass) -> Result<(f64, Option<f64>)> {
    let refuse = |why: String| Err(Error::Refused(why));
    if !(gamma > 0.0 && gamma.is_finite()) {
        return refuse(format!("step size must be positive, got {gamma}"));
    }
    match *claimed {
        ClaimedClass::StronglyConvex { alpha, beta } => {
            if !(alpha > 0.0 && beta >= alpha) {
                return refuse(format!("need 0 < alpha <= beta, got alpha={alpha}, beta={beta}"));
            }
            let cap = 2.0 / (alpha + beta);
            if gamma > cap * (1.0 + GAMMA_SLACK) {
                return refuse(format!("gamma={gamma} exceeds 2/(alpha+beta)={cap}"));
            }
            Ok((1.0 - gamma * alpha, None))
        }
        ClaimedClass::Convex { beta } | ClaimedClass::StrictlyConvex { beta } => {
            if beta.is_nan() || beta <= 0.0 {
                return refuse(format!("need beta > 0, got {beta}"));
            }
            let cap = 2.0 / beta;
            let strict = matches!(claimed, ClaimedClass::StrictlyConvex { .. });
            if gamma > cap * (1.0 + GAMMA_SLACK) || (strict && gamma >= cap) {
                return refuse(format!("gamma={gamma} outside the range allowed by 2/beta={cap}"));
            }
            let lip = if gamma <= (1.0 / beta) * (1.0 + GAMMA_SLACK) { 1.0 } else { 2.0 };
            Ok((1.0, Some(lip)))
        }
        ClaimedClass::WeaklyConvex { delta, beta } => {
            if !(delta > 0.0 && delta <= beta) {
                return refuse(format!("need 0 < delta <= beta, got delta={delta}, beta={beta}"));
            }
            let cap = 2.0 / beta;
            if gamma > cap * (1.0 + GAMMA_SLACK) {
                return refuse(format!("gamma={gamma} exceeds 2/beta={cap}"));
            }
            Ok((1.0 + gamma * delta, None))
        }
    }
}

/// Checks that spectra of `J(∇h_j)` lie in `[1−λ^j, 1+λ^j]` for `j ≤ k`, that
/// `‖J(∇h_j)‖` respects the Lipschitz bound, and that `∇h_j` vanishes at each
/// supplied critical point of `f`.
pub fn check_gd_propagation(
    f_grad: &FieldDef,
    gamma: f64,
    k: u32,
    points: &[Vector],
    claimed: ClaimedClass,
    critical_points: &[Vector],
) -> Result<GdPropagationReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let (lambda, lip_override) = gd_lambda(gamma, &claimed)?;
    let gd = FieldDef::gd_map(f_grad.clone(), gamma)?;
    for j in 1..=k {
        require_conservative(&gd, j, points)?;
    }
    let n = f_grad.dim();
    let mut levels = Vec::with_capacity(k as usize);
    for j in 1..=k {
        let it = FieldDef::iterate(gd.clone(), j)?;
        let jacs: Vec<Matrix> = points
            .par_iter()
            .map(|x| it.jacobian_best(x).map(|m| Matrix::identity(n, n) - m))
            .collect::<Result<_>>()?;
        let samples: Vec<SpectrumSample> = points.iter().zip(&jacs).map(|(x, m)| spectrum_of(x, m)).collect();
        let (interval, _) = interval_of(&samples);
        let max_operator_norm = jacs
            .iter()
            .map(|m| m.singular_values().max())
            .fold(0.0, f64::max);
        let lj = lambda.powi(j as i32);
        let lk = lambda.powi(k as i32);
        let (bound, bound_k) = match claimed {
            ClaimedClass::Convex { .. } | ClaimedClass::StrictlyConvex { .. } => {
                let hi = lip_override.unwrap_or(2.0);
                ([0.0, hi], [0.0, hi])
            }
            _ => ([1.0 - lj, 1.0 + lj], [1.0 - lk, 1.0 + lk]),
        };
        let lipschitz_bound = lip_override.unwrap_or(1.0 + lj);
        levels.push(GdLevelCheck {
            j,
            interval,
            bound,
            pass: inside(interval, bound, 1e-8),
            bound_exponent_k: bound_k,
            pass_exponent_k: inside(interval, bound_k, 1e-8),
            max_operator_norm,
            lipschitz_bound,
            lipschitz_pass: max_operator_norm <= lipschitz_bound + 1e-8,
            lipschitz_alt: (1.0 + lambda).powi(k as i32),
        });
    }

    let mut crit = Vec::with_capacity(critical_points.len());
    for y in critical_points {
        let grad_norm = f_grad.eval(y)?.norm();
        if grad_norm > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "supplied point is not a critical point (|grad| = {grad_norm:e})"
            )));
        }
        let mut max_residual = 0.0f64;
        for j in 1..=k {
            max_residual = max_residual.max(h_gradient(f_grad, gamma, j)?.eval(y)?.norm());
        }
        crit.push(CriticalCheck {
            point: y.clone(),
            grad_norm,
            max_residual,
            pass: max_residual <= 1e-12,
        });
    }

    let pass = levels.iter().all(|l| l.pass && l.lipschitz_pass) && crit.iter().all(|c| c.pass);
    Ok(GdPropagationReport {
        field: f_grad.describe(),
        gamma,
        k,
        claimed,
        lambda,
        levels,
        critical_points: crit,
        pass,
        evidence: EVIDENCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{glm_gradient, Activation, GlmSpec};
    use crate::poly::{PolyField, RationalPoly};
    use crate::sampling::{orthogonal_directions, SampleConfig};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn diag(d: &[f64]) -> FieldDef {
        FieldDef::linear(Matrix::from_diagonal(&v(d))).unwrap()
    }

    #[test]
    fn spectrum_examples() {
        let s = spectrum_at(&diag(&[1.0, 3.0]), &v(&[0.2, 7.0])).unwrap();
        assert_eq!((s.lambda_min, s.lambda_max), (1.0, 3.0));
        let q = GlmSpec::new(vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], Activation::quadratic()).unwrap();
        let s = spectrum_at(&glm_gradient(&q), &v(&[0.1, 0.2])).unwrap();
        assert!((s.lambda_min - 1.0).abs() < 1e-15 && (s.lambda_max - 1.0).abs() < 1e-15);
        let f = RationalPoly::parse("1*x0^2*x1", 2).unwrap();
        let g = FieldDef::poly(PolyField::gradient(&f, &[0, 1]).unwrap()).unwrap();
        let s = spectrum_at(&g, &v(&[1.0, 1.0])).unwrap();
        let r5 = 5f64.sqrt();
        assert!((s.lambda_min - (1.0 - r5)).abs() < 1e-12);
        assert!((s.lambda_max - (1.0 + r5)).abs() < 1e-12);
        assert!(s.asymmetry < 1e-8);
    }

    #[test]
    fn classification_examples() {
        let ball = SampleConfig::ball(60, 1.0, 3).points(2);
        let q = GlmSpec::new(vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], Activation::quadratic()).unwrap();
        let c = classify(&glm_gradient(&q), &ball).unwrap();
        assert!(matches!(c.class, ConvexityClass::StronglyConvex { alpha } if (alpha - 1.0).abs() < 1e-14));

        let l = GlmSpec::new(vec![v(&[1.0, 0.0])], Activation::logistic_loss()).unwrap();
        let c = classify(&glm_gradient(&l), &ball).unwrap();
        assert!(matches!(c.class, ConvexityClass::Convex | ConvexityClass::StrictlyConvex));
        assert!(c.beta_hat <= 0.25);

        let line = SampleConfig::ball(80, 2.0, 5).points(1);
        let cosh = GlmSpec::new(vec![v(&[1.0]), v(&[-1.0])], Activation::exp()).unwrap();
        let c = classify(&glm_gradient(&cosh), &line).unwrap();
        match c.class {
            ConvexityClass::StronglyConvex { alpha } => {
                let closest = line.iter().map(|p| p[0].abs()).fold(f64::INFINITY, f64::min);
                assert!((alpha - 2.0 * closest.cosh()).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }

        let saddle = diag(&[1.0, -0.5]);
        assert!(matches!(classify(&saddle, &ball).unwrap().class, ConvexityClass::WeaklyConvex { delta } if delta == 0.5));
        let rot = FieldDef::rotation2d(3).unwrap();
        assert!(matches!(classify(&rot, &ball), Err(Error::Refused(_))));
    }

    #[test]
    fn propagation_examples() {
        let pts = SampleConfig::ball(30, 1.0, 2).points(2);
        let r = check_propagation(&diag(&[0.5, 0.75]), 3, &pts).unwrap();
        assert!(r.pass);
        for l in &r.levels {
            assert_eq!(l.interval, [0.5f64.powi(l.j as i32), 0.75f64.powi(l.j as i32)]);
        }
        let q = GlmSpec::new(vec![v(&[1.0, 0.0]), v(&[0.0, 2.0])], Activation::quadratic()).unwrap();
        let r = check_propagation(&glm_gradient(&q), 2, &pts).unwrap();
        assert!(r.pass);
        let l2 = &r.levels[1];
        assert!((l2.interval[0] - 1.0).abs() < 1e-12 && (l2.interval[1] - 16.0).abs() < 1e-12);

        let line: Vec<Vector> = (0..41).map(|i| v(&[-1.0 + 0.05 * f64::from(i)])).collect();
        let cosh = GlmSpec::new(vec![v(&[1.0]), v(&[-1.0])], Activation::exp()).unwrap();
        assert!(check_propagation(&glm_gradient(&cosh), 2, &line).unwrap().pass);
    }

    #[test]
    fn gd_propagation_examples() {
        let pts = SampleConfig::ball(30, 1.0, 2).points(2);
        let f = diag(&[1.0, 3.0]);
        let claimed = ClaimedClass::StronglyConvex { alpha: 1.0, beta: 3.0 };
        let r = check_gd_propagation(&f, 0.5, 2, &pts, claimed, &[v(&[0.0, 0.0])]).unwrap();
        assert!(r.pass);
        assert_eq!(r.lambda, 0.5);
        let l2 = &r.levels[1];
        assert!((l2.interval[0] - 0.75).abs() < 1e-15 && (l2.interval[1] - 0.75).abs() < 1e-15);
        assert_eq!(l2.bound, [0.75, 1.25]);

        // quadratic centered at b
        let b = v(&[0.3, -1.2]);
        let a = Matrix::from_diagonal(&v(&[1.0, 3.0]));
        let centered = FieldDef::affine(a.clone(), -(&a * &b)).unwrap();
        let r = check_gd_propagation(&centered, 0.5, 3, &pts, claimed, &[b]).unwrap();
        assert!(r.critical_points[0].max_residual == 0.0);

        let conv = check_gd_propagation(&diag(&[0.0, 2.0]), 0.5, 3, &pts, ClaimedClass::Convex { beta: 2.0 }, &[]).unwrap();
        assert!(conv.pass);
        assert!(conv.levels.iter().all(|l| l.max_operator_norm <= 1.0 + 1e-8));

        let err = check_gd_propagation(&f, 0.6, 2, &pts, claimed, &[]);
        assert!(matches!(err, Err(Error::Refused(_))));
        let not_crit = check_gd_propagation(&f, 0.5, 1, &pts, claimed, &[v(&[1.0, 0.0])]);
        assert!(matches!(not_crit, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn gd_propagation_glm_and_weakly_convex() {
        let pts = SampleConfig::ball(30, 1.0, 9).points(3);
        let spec = GlmSpec::new(orthogonal_directions(3, 3, 0.5, 2.0, 1), Activation::logistic_loss()).unwrap();
        let beta = spec.smoothness().unwrap();
        let r = check_gd_propagation(&glm_gradient(&spec), 1.0 / beta, 4, &pts, ClaimedClass::Convex { beta }, &[]).unwrap();
        assert!(r.pass);
        let weak = diag(&[-0.5, 1.0]);
        let plane = SampleConfig::ball(10, 1.0, 9).points(2);
        let claimed = ClaimedClass::WeaklyConvex { delta: 0.5, beta: 1.0 };
        let r = check_gd_propagation(&weak, 1.0, 3, &plane, claimed, &[v(&[0.0, 0.0])]).unwrap();
        assert!(r.pass);
    }
}
