//! Brute-force and finite-difference oracles for the GLM closed forms.

use iterfield::field::{gd_map, iterate};
use iterfield::glm::{glm_gradient, iterated_glm, iterated_glm_gd, surrogate_potential, GlmSpec, SurrogateMode};
use iterfield::quadrature::QuadratureOptions;
use iterfield::{FieldDef, Result, Vector};
use serde::Serialize;

pub const CLOSED_FORM_TOL: f64 = 1e-9;
pub const SURROGATE_TOL: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-5;

/// `‖a − b‖ / ‖b‖`, or `‖a − b‖` when `b = 0`.
pub fn rel_error(a: &Vector, b: &Vector) -> f64 {
    let d = (a - b).norm();
    let n = b.norm();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormCheck {
    pub form: &'static str,
    pub k: u32,
    pub gamma: Option<f64>,
    pub points: usize,
    pub max_rel_error: f64,
    pub worst_point: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

fn worst<F: Fn(&Vector) -> Result<f64>>(points: &[Vector], err: F) -> Result<(f64, Vec<f64>)> {
    let mut best = (0.0, Vec::new());
    for p in points {
        let e = err(p)?;
        if e > best.0 || best.1.is_empty() {
            best = (e, p.as_slice().to_vec());
        }
    }
    Ok(best)
}

/// Closed-form iterate against direct `k`-fold composition, at each point.
/// `gamma = None` checks `(∇f)^k`; `Some(γ)` checks `(I − γ∇f)^k`.
pub fn closed_form_check(spec: &GlmSpec, gamma: Option<f64>, k: u32, points: &[Vector]) -> Result<ClosedFormCheck> {
    let grad = glm_gradient(spec);
    let (closed, brute, form): (FieldDef, FieldDef, _) = match gamma {
        None => (iterated_glm(spec, k)?, iterate(&grad, k)?, "gradient_iterate"),
        Some(g) => (iterated_glm_gd(spec, g, k)?, iterate(&gd_map(&grad, g)?, k)?, "gd_iterate"),
    };
    let (max_rel_error, worst_point) = worst(points, |p| Ok(rel_error(&closed.eval(p)?, &brute.eval(p)?)))?;
    Ok(ClosedFormCheck {
        form,
        k,
        gamma,
        points: points.len(),
        max_rel_error,
        worst_point,
        tolerance: CLOSED_FORM_TOL,
        pass: max_rel_error <= CLOSED_FORM_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateCheck {
    pub mode: &'static str,
    pub k: u32,
    pub gamma: Option<f64>,
    pub points: usize,
    pub step: f64,
    pub max_rel_error: f64,
    pub worst_point: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

fn central_gradient<F: Fn(&Vector) -> Result<f64>>(f: F, x: &Vector, h: f64) -> Result<Vector> {
    let mut g = Vector::zeros(x.len());
    for j in 0..x.len() {
        let mut a = x.clone();
        let mut b = x.clone();
        a[j] += h;
        b[j] -= h;
        g[j] = (f(&a)? - f(&b)?) / (2.0 * h);
    }
    Ok(g)
}

type Target = Box<dyn Fn(&Vector) -> Result<Vector>>;

/// Central-difference gradient of the surrogate potential against the
/// closed form it must reproduce: `(∇f)^k(x)` or `(x − (I − γ∇f)^k(x))/γ`.
pub fn surrogate_check(spec: &GlmSpec, gamma: Option<f64>, k: u32, points: &[Vector]) -> Result<SurrogateCheck> {
    let opts = QuadratureOptions::default();
    let (mode, target): (SurrogateMode, Target) = match gamma {
        None => {
            let c = iterated_glm(spec, k)?;
            (SurrogateMode::GradIterate { k }, Box::new(move |x| c.eval(x)))
        }
        Some(g) => {
            let c = iterated_glm_gd(spec, g, k)?;
            (
                SurrogateMode::GdIterate { gamma: g, k },
                Box::new(move |x| Ok((x - c.eval(x)?) / g)),
            )
        }
    };
    let (max_rel_error, worst_point) = worst(points, |p| {
        let fd = central_gradient(|y| surrogate_potential(spec, mode, y, &opts), p, FD_STEP)?;
        Ok(rel_error(&fd, &target(p)?))
    })?;
    Ok(SurrogateCheck {
        mode: if gamma.is_some() { "gd_iterate" } else { "grad_iterate" },
        k,
        gamma,
        points: points.len(),
        step: FD_STEP,
        max_rel_error,
        worst_point,
        tolerance: SURROGATE_TOL,
        pass: max_rel_error <= SURROGATE_TOL,
    })
}
