//! Generalized-linear-model gradient fields `∇f(x) = Σ σ'(⟨x,zᵢ⟩) zᵢ`,
//! the closed-form iterates for orthogonal direction families and their
//! surrogate potentials.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::FieldDef;
use crate::linalg::{Matrix, Vector};
use crate::quadrature::{integrate, QuadratureOptions};

/// Directions are orthogonal when the Gram residual is at most this.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Quadratic,
    Exp,
    LogisticLoss,
    /// `p·ln(1+e^{−t}) + (1−p)·ln(1+e^t)`
    LogisticLabel(f64),
    Linear,
    Expr { sigma: Expr, d1: Expr, d2: Expr },
    Custom { sigma: Scalar, d1: Scalar, d2: Option<Scalar> },
}

/// A scalar activation `σ` with derivative `σ'` and, optionally, `σ''`.
#[derive(Clone)]
pub struct Activation {
    name: String,
    kind: Kind,
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Activation({})", self.name)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Built-in names: `quadratic` (alias `identity`), `exp`,
    /// `logistic-loss`, `logistic-label:<p>` with `p ∈ (0,1)`, `linear`.
    /// Anything else is parsed as an expression for `σ(t)`.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim();
        let kind = match name {
            "quadratic" | "identity" => Kind::Quadratic,
            "exp" => Kind::Exp,
            "logistic-loss" | "logistic" => Kind::LogisticLoss,
            "linear" => Kind::Linear,
            _ => {
                if let Some(p) = name.strip_prefix("logistic-label:") {
                    let p: f64 = p
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad label in activation '{name}'")))?;
                    return Self::logistic_label(p);
                }
                let src = name.strip_prefix("expr:").unwrap_or(name);
                let sigma = Expr::parse(src)
                    .map_err(|e| Error::Parse(format!("unknown activation '{name}': {e}")))?;
                let d1 = sigma.derivative();
                let d2 = d1.derivative();
                Kind::Expr { sigma, d1, d2 }
            }
        };
        Ok(Self {
            name: name.to_string(),
            kind,
        })
    }

    pub fn quadratic() -> Self {
        Self::from_name("quadratic").unwrap()
    }

    pub fn exp() -> Self {
        Self::from_name("exp").unwrap()
    }

    pub fn logistic_loss() -> Self {
        Self::from_name("logistic-loss").unwrap()
    }

    /// Soft-label logistic loss with minimizer `logit(p)`.
    pub fn logistic_label(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("label must lie in (0,1), got {p}")));
        }
        Ok(Self {
            name: format!("logistic-label:{p}"),
            kind: Kind::LogisticLabel(p),
        })
    }

    pub fn custom(
        name: impl Into<String>,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: Option<Scalar>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Custom {
                sigma: Arc::new(sigma),
                d1: Arc::new(d1),
                d2,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sigma(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic => 0.5 * t * t,
            Kind::Exp => t.exp(),
            Kind::LogisticLoss => softplus(t),
            Kind::LogisticLabel(p) => softplus(t) - p * t,
            Kind::Linear => t,
            Kind::Expr { sigma, .. } => sigma.eval(t),
            Kind::Custom { sigma, .. } => sigma(t),
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic => t,
            Kind::Exp => t.exp(),
            Kind::LogisticLoss => logistic(t),
            Kind::LogisticLabel(p) => logistic(t) - p,
            Kind::Linear => 1.0,
            Kind::Expr { d1, .. } => d1.eval(t),
            Kind::Custom { d1, .. } => d1(t),
        }
    }

    pub fn d2(&self, t: f64) -> Option<f64> {
        Some(match &self.kind {
            Kind::Quadratic => 1.0,
            Kind::Exp => t.exp(),
            Kind::LogisticLoss | Kind::LogisticLabel(_) => {
                let s = logistic(t);
                s * (1.0 - s)
            }
            Kind::Linear => 0.0,
            Kind::Expr { d2, .. } => d2.eval(t),
            Kind::Custom { d2, .. } => return d2.as_ref().map(|f| f(t)),
        })
    }

    pub fn has_d2(&self) -> bool {
        !matches!(&self.kind, Kind::Custom { d2: None, .. })
    }

    /// `sup_t |σ''(t)|` when it is known and finite.
    pub fn d2_bound(&self) -> Option<f64> {
        match &self.kind {
            Kind::Quadratic => Some(1.0),
            Kind::LogisticLoss | Kind::LogisticLabel(_) => Some(0.25),
            Kind::Linear => Some(0.0),
            _ => None,
        }
    }

    /// Largest deviation between `σ'` and the central difference of `σ`
    /// with step `h` over the given points.
    pub fn derivative_consistency(&self, ts: &[f64], h: f64) -> f64 {
        ts.iter()
            .map(|&t| ((self.sigma(t + h) - self.sigma(t - h)) / (2.0 * h) - self.d1(t)).abs())
            .fold(0.0, f64::max)
    }
}

/// Largest `|⟨zᵢ,zⱼ⟩|` over `i ≠ j`.
pub fn orthogonality_check(directions: &[Vector]) -> Result<f64> {
    let first = directions
        .first()
        .ok_or_else(|| Error::InvalidParameter("no directions given".into()))?;
    let n = first.len();
    for (i, z) in directions.iter().enumerate() {
        if z.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: z.len(),
            });
        }
        if z.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroDirection { index: i });
        }
        if z.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                iterate: None,
                context: format!("direction {i}"),
            });
        }
    }
    let mut worst = 0.0f64;
    for i in 0..directions.len() {
        for j in 0..i {
            worst = worst.max(directions[i].dot(&directions[j]).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct GlmSpec {
    directions: Vec<Vector>,
    norms_sq: Vec<f64>,
    activation: Activation,
    gram_residual: f64,
}

impl GlmSpec {
    pub fn new(directions: Vec<Vector>, activation: Activation) -> Result<Self> {
        let gram_residual = orthogonality_check(&directions)?;
        let norms_sq = directions.iter().map(|z| z.norm_squared()).collect();
        Ok(Self {
            directions,
            norms_sq,
            activation,
            gram_residual,
        })
    }

    pub fn dim(&self) -> usize {
        self.directions[0].len()
    }

    pub fn directions(&self) -> &[Vector] {
        &self.directions
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn gram_residual(&self) -> f64 {
        self.gram_residual
    }

    pub fn is_orthogonal(&self) -> bool {
        self.gram_residual <= ORTHOGONALITY_TOL
    }

    /// `Σ σ(⟨x,zᵢ⟩)`.
    pub fn loss(&self, x: &Vector) -> f64 {
        self.directions.iter().map(|z| self.activation.sigma(x.dot(z))).sum()
    }

    /// Uniform Lipschitz constant of the gradient field when `σ''` is bounded:
    /// `max‖zᵢ‖² · sup|σ''|` (orthogonal directions decouple).
    pub fn smoothness(&self) -> Option<f64> {
        let b = self.activation.d2_bound()?;
        Some(b * self.norms_sq.iter().copied().fold(0.0, f64::max))
    }

    /// `φᵢ(t) = ‖zᵢ‖²σ'(t)`.
    pub fn phi(&self, i: usize, t: f64) -> f64 {
        self.norms_sq[i] * self.activation.d1(t)
    }

    /// `ψᵢ(t) = t − γ‖zᵢ‖²σ'(t)`.
    pub fn psi(&self, i: usize, gamma: f64, t: f64) -> f64 {
        t - gamma * self.norms_sq[i] * self.activation.d1(t)
    }

    fn require_orthogonal(&self) -> Result<()> {
        if self.is_orthogonal() {
            Ok(())
        } else {
            Err(Error::NonOrthogonal {
                residual: self.gram_residual,
            })
        }
    }

    fn check(v: f64, level: usize, what: &str) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                iterate: Some(level),
                context: format!("{what} along a direction"),
            })
        }
    }

    /// Profile of the gradient iterate along direction `i`:
    /// `σ'(φᵢ^{k−1}(t))` and its derivative in `t`.
    fn grad_profile(&self, i: usize, k: u32, t: f64, with_d: bool) -> Result<(f64, Option<f64>)> {
        let act = &self.activation;
        let mut s = t;
        let mut chain = 1.0;
        for level in 1..k {
            if with_d {
                chain *= self.norms_sq[i] * act.d2(s).unwrap_or(f64::NAN);
            }
            s = Self::check(self.phi(i, s), level as usize, "phi iterate")?;
        }
        let value = Self::check(act.d1(s), k as usize, "sigma' value")?;
        let deriv = if with_d {
            Some(Self::check(chain * act.d2(s).unwrap_or(f64::NAN), k as usize, "profile derivative")?)
        } else {
            None
        };
        Ok((value, deriv))
    }

    /// Profile of the gradient-descent iterate along direction `i`:
    /// `Sᵢ(t) = Σ_{j<k} σ'(ψᵢ^j(t))` and its derivative in `t`.
    fn gd_profile(&self, i: usize, gamma: f64, k: u32, t: f64, with_d: bool) -> Result<(f64, Option<f64>)> {
        let act = &self.activation;
        let mut s = t;
        let mut ds = 1.0;
        let mut total = 0.0;
        let mut dtotal = 0.0;
        for level in 0..k {
            total += act.d1(s);
            if with_d {
                let d2 = act.d2(s).unwrap_or(f64::NAN);
                dtotal += d2 * ds;
                ds *= 1.0 - gamma * self.norms_sq[i] * d2;
            }
            if level + 1 < k {
                s = Self::check(self.psi(i, gamma, s), level as usize + 1, "psi iterate")?;
            }
        }
        let total = Self::check(total, k as usize, "summed sigma'")?;
        let deriv = if with_d {
            Some(Self::check(dtotal, k as usize, "profile derivative")?)
        } else {
            None
        };
        Ok((total, deriv))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GlmForm {
    Gradient,
    /// `(∇f)^k` in closed form.
    Iterated { k: u32 },
    /// `(I − γ∇f)^k` in closed form.
    GdIterated { gamma: f64, k: u32 },
}

#[derive(Debug, Clone)]
pub struct GlmField {
    spec: GlmSpec,
    form: GlmForm,
}

impl GlmField {
    pub fn spec(&self) -> &GlmSpec {
        &self.spec
    }

    pub fn form(&self) -> GlmForm {
        self.form
    }

    pub fn describe(&self) -> String {
        let base = format!("glm({}, m={})", self.spec.activation.name, self.spec.directions.len());
        match self.form {
            GlmForm::Gradient => base,
            GlmForm::Iterated { k } => format!("glm_iterated({base}, k={k})"),
            GlmForm::GdIterated { gamma, k } => format!("glm_gd_iterated({base}, gamma={gamma}, k={k})"),
        }
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.spec.activation.has_d2()
    }

    pub(crate) fn eval(&self, x: &Vector) -> Result<Vector> {
        let spec = &self.spec;
        match self.form {
            GlmForm::Gradient => {
                let mut out = Vector::zeros(x.len());
                for z in &spec.directions {
                    out += z * spec.activation.d1(x.dot(z));
                }
                Ok(out)
            }
            GlmForm::Iterated { k } => {
                let mut out = Vector::zeros(x.len());
                for (i, z) in spec.directions.iter().enumerate() {
                    out += z * spec.grad_profile(i, k, x.dot(z), false)?.0;
                }
                Ok(out)
            }
            GlmForm::GdIterated { gamma, k } => {
                let mut out = x.clone();
                for (i, z) in spec.directions.iter().enumerate() {
                    out -= z * (gamma * spec.gd_profile(i, gamma, k, x.dot(z), false)?.0);
                }
                Ok(out)
            }
        }
    }

    pub(crate) fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        if !self.has_analytic_jacobian() {
            return Err(Error::MethodIncompatible(format!(
                "activation '{}' has no second derivative",
                self.spec.activation.name
            )));
        }
        let spec = &self.spec;
        let n = x.len();
        let mut sum = Matrix::zeros(n, n);
        for (i, z) in spec.directions.iter().enumerate() {
            let t = x.dot(z);
            let w = match self.form {
                GlmForm::Gradient => spec.activation.d2(t).unwrap_or(f64::NAN),
                GlmForm::Iterated { k } => spec.grad_profile(i, k, t, true)?.1.unwrap_or(f64::NAN),
                GlmForm::GdIterated { gamma, k } => spec.gd_profile(i, gamma, k, t, true)?.1.unwrap_or(f64::NAN),
            };
            sum += z * z.transpose() * w;
        }
        Ok(match self.form {
            GlmForm::GdIterated { gamma, .. } => Matrix::identity(n, n) - sum * gamma,
            _ => sum,
        })
    }
}

/// `∇f(x) = Σ σ'(⟨x,zᵢ⟩) zᵢ`.
pub fn glm_gradient(spec: &GlmSpec) -> FieldDef {
    FieldDef::glm_field(GlmField {
        spec: spec.clone(),
        form: GlmForm::Gradient,
    })
}

/// Closed form of `(∇f)^k` for orthogonal directions:
/// `Σ σ'(φᵢ^{k−1}(⟨x,zᵢ⟩)) zᵢ`.
pub fn iterated_glm(spec: &GlmSpec, k: u32) -> Result<FieldDef> {
    spec.require_orthogonal()?;
    if k == 0 {
        return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
    }
    Ok(FieldDef::glm_field(GlmField {
        spec: spec.clone(),
        form: if k == 1 { GlmForm::Gradient } else { GlmForm::Iterated { k } },
    }))
}

/// Closed form of `(I − γ∇f)^k` for orthogonal directions:
/// `x − γ Σᵢ [Σ_{j<k} σ'(ψᵢ^j(⟨x,zᵢ⟩))] zᵢ`.
pub fn iterated_glm_gd(spec: &GlmSpec, gamma: f64, k: u32) -> Result<FieldDef> {
    spec.require_orthogonal()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {gamma}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
    }
    Ok(FieldDef::glm_field(GlmField {
        spec: spec.clone(),
        form: GlmForm::GdIterated { gamma, k },
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurrogateMode {
    /// `h_k` with `∇h_k = (∇f)^k`.
    GradIterate { k: u32 },
    /// `P` with `x − γ∇P = (I − γ∇f)^k(x)`.
    GdIterate { gamma: f64, k: u32 },
}

/// Surrogate potential, normalized so that it vanishes at the origin.
pub fn surrogate_potential(spec: &GlmSpec, mode: SurrogateMode, x: &Vector, opts: &QuadratureOptions) -> Result<f64> {
    spec.require_orthogonal()?;
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: x.len(),
        });
    }
    let mut total = 0.0;
    for (i, z) in spec.directions.iter().enumerate() {
        let t = x.dot(z);
        let r = match mode {
            SurrogateMode::GradIterate { k } => {
                if k == 0 {
                    return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
                }
                integrate(
                    |s| spec.grad_profile(i, k, s, false).map(|p| p.0).unwrap_or(f64::NAN),
                    0.0,
                    t,
                    opts,
                )?
            }
            SurrogateMode::GdIterate { gamma, k } => {
                if k == 0 || gamma.is_nan() || gamma <= 0.0 {
                    return Err(Error::InvalidParameter("need gamma > 0 and k >= 1".into()));
                }
                integrate(
                    |s| spec.gd_profile(i, gamma, k, s, false).map(|p| p.0).unwrap_or(f64::NAN),
                    0.0,
                    t,
                    opts,
                )?
            }
        };
        total += r.value;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gd_map, iterate, JacobianMethod};
    use crate::linalg::max_abs_diff;
    use crate::sampling::{orthogonal_directions, SampleConfig};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn f3() -> GlmSpec {
        GlmSpec::new(vec![v(&[1.0, 0.0]), v(&[1.0, 1.0])], Activation::exp()).unwrap()
    }

    fn rel_err(a: &Vector, b: &Vector) -> f64 {
        (a - b).norm() / b.norm().max(1.0)
    }

    #[test]
    fn gradient_examples() {
        let e = GlmSpec::new(vec![v(&[1.0, 0.0])], Activation::exp()).unwrap();
        let g = glm_gradient(&e).eval(&v(&[0.7, -2.0])).unwrap();
        assert_eq!(g, v(&[0.7f64.exp(), 0.0]));
        assert_eq!(glm_gradient(&f3()).eval(&v(&[0.0, 0.0])).unwrap(), v(&[2.0, 1.0]));
        let q = GlmSpec::new(vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], Activation::quadratic()).unwrap();
        assert_eq!(glm_gradient(&q).eval(&v(&[0.3, -0.9])).unwrap(), v(&[0.3, -0.9]));
    }

    #[test]
    fn orthogonality_examples() {
        assert_eq!(orthogonality_check(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap(), 0.0);
        assert_eq!(orthogonality_check(&[v(&[1.0, 0.0]), v(&[1.0, 1.0])]).unwrap(), 1.0);
        let z = v(&[0.6, 0.8, 2.0]);
        let r = orthogonality_check(&[z.clone(), -z.clone()]).unwrap();
        assert!((r - z.norm_squared()).abs() < 1e-15);
        assert_eq!(orthogonality_check(&[v(&[3.0])]).unwrap(), 0.0);
        assert!(matches!(
            orthogonality_check(&[v(&[1.0, 0.0]), v(&[0.0, 0.0])]),
            Err(Error::ZeroDirection { index: 1 })
        ));
        assert!(orthogonality_check(&[]).is_err());
    }

    #[test]
    fn non_orthogonal_spec_refuses_closed_forms() {
        assert!(matches!(iterated_glm(&f3(), 2), Err(Error::NonOrthogonal { .. })));
        assert!(matches!(iterated_glm_gd(&f3(), 0.1, 2), Err(Error::NonOrthogonal { .. })));
        assert!(surrogate_potential(&f3(), SurrogateMode::GradIterate { k: 1 }, &v(&[0.0, 0.0]), &Default::default()).is_err());
    }

    #[test]
    fn exp_double_iterate() {
        let e = GlmSpec::new(vec![v(&[1.0, 0.0])], Activation::exp()).unwrap();
        let x = v(&[0.3, 0.2]);
        let y = iterated_glm(&e, 2).unwrap().eval(&x).unwrap();
        assert!((y[0] - 0.3f64.exp().exp()).abs() < 1e-14);
        assert_eq!(y[1], 0.0);
    }

    #[test]
    fn exp_tower_overflow_is_an_error() {
        let e = GlmSpec::new(vec![v(&[1.0])], Activation::exp()).unwrap();
        assert!(matches!(
            iterated_glm(&e, 6).unwrap().eval(&v(&[1.0])),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn gd_quadratic_example_matches_brute_force() {
        // x₁ path 8 → 4 → 2 → 1
        let q = GlmSpec::new(vec![v(&[1.0, 0.0])], Activation::quadratic()).unwrap();
        let closed = iterated_glm_gd(&q, 0.5, 3).unwrap().eval(&v(&[8.0, 5.0])).unwrap();
        assert_eq!(closed, v(&[1.0, 5.0]));
    }

    #[test]
    fn k1_forms_reduce_to_base_fields() {
        let spec = GlmSpec::new(orthogonal_directions(3, 2, 0.5, 2.0, 3), Activation::logistic_loss()).unwrap();
        let g = glm_gradient(&spec);
        let gd = gd_map(&g, 0.3).unwrap();
        let c1 = iterated_glm(&spec, 1).unwrap();
        let d1 = iterated_glm_gd(&spec, 0.3, 1).unwrap();
        for p in SampleConfig::ball(20, 1.0, 4).points(3) {
            assert_eq!(c1.eval(&p).unwrap(), g.eval(&p).unwrap());
            assert!((d1.eval(&p).unwrap() - gd.eval(&p).unwrap()).norm() < 1e-15);
        }
    }

    #[test]
    fn closed_forms_match_brute_force() {
        for (act, lo, hi) in [
            (Activation::quadratic(), 0.5, 2.0),
            (Activation::logistic_loss(), 0.5, 2.0),
            (Activation::exp(), 0.3, 0.6),
        ] {
            let spec = GlmSpec::new(orthogonal_directions(3, 3, lo, hi, 12), act).unwrap();
            let g = glm_gradient(&spec);
            let gamma = 0.2;
            let gd = gd_map(&g, gamma).unwrap();
            for k in 1..=5 {
                let c = iterated_glm(&spec, k).unwrap();
                let b = iterate(&g, k).unwrap();
                let cg = iterated_glm_gd(&spec, gamma, k).unwrap();
                let bg = iterate(&gd, k).unwrap();
                for p in SampleConfig::ball(30, 1.0, 99).points(3) {
                    assert!(rel_err(&c.eval(&p).unwrap(), &b.eval(&p).unwrap()) < 1e-9);
                    assert!(rel_err(&cg.eval(&p).unwrap(), &bg.eval(&p).unwrap()) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn small_step_is_near_identity() {
        let spec = GlmSpec::new(orthogonal_directions(3, 2, 0.5, 1.0, 5), Activation::logistic_loss()).unwrap();
        for k in 1..=4u32 {
            let f = iterated_glm_gd(&spec, 1e-8, k).unwrap();
            for p in SampleConfig::ball(20, 1.0, 6).points(3) {
                // |σ'| ≤ 1 and ‖zᵢ‖ ≤ 1
                assert!((f.eval(&p).unwrap() - &p).norm() <= 1e-7 * f64::from(k) * 2.0);
            }
        }
    }

    #[test]
    fn closed_form_jacobians_match_differences() {
        let spec = GlmSpec::new(orthogonal_directions(3, 3, 0.5, 2.0, 31), Activation::logistic_loss()).unwrap();
        for k in 1..=4 {
            for f in [iterated_glm(&spec, k).unwrap(), iterated_glm_gd(&spec, 0.4, k).unwrap()] {
                for p in SampleConfig::ball(10, 1.0, 8).points(3) {
                    let an = f.jacobian(&p, &JacobianMethod::Analytic).unwrap();
                    let fd = f.jacobian(&p, &JacobianMethod::central()).unwrap();
                    assert!(max_abs_diff(&an, &fd) < 1e-6, "k={k}");
                }
            }
        }
    }

    #[test]
    fn surrogate_examples() {
        let e = GlmSpec::new(vec![v(&[1.0, 0.0])], Activation::exp()).unwrap();
        let opts = QuadratureOptions::default();
        let h = surrogate_potential(&e, SurrogateMode::GradIterate { k: 1 }, &v(&[0.8, 3.0]), &opts).unwrap();
        assert!((h - (0.8f64.exp() - 1.0)).abs() < 1e-12);
        let z = surrogate_potential(&e, SurrogateMode::GdIterate { gamma: 0.1, k: 3 }, &v(&[0.0, 0.0]), &opts).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn surrogate_gradient_reproduces_iterates() {
        let spec = GlmSpec::new(orthogonal_directions(3, 2, 0.5, 1.5, 2), Activation::logistic_loss()).unwrap();
        let opts = QuadratureOptions::default();
        let h = 1e-5;
        let gamma = 0.3;
        for k in 1..=3u32 {
            let c = iterated_glm(&spec, k).unwrap();
            let cg = iterated_glm_gd(&spec, gamma, k).unwrap();
            for p in SampleConfig::ball(5, 1.0, 3).points(3) {
                let grad = |mode: SurrogateMode| {
                    Vector::from_fn(3, |j, _| {
                        let mut a = p.clone();
                        let mut b = p.clone();
                        a[j] += h;
                        b[j] -= h;
                        (surrogate_potential(&spec, mode, &a, &opts).unwrap()
                            - surrogate_potential(&spec, mode, &b, &opts).unwrap())
                            / (2.0 * h)
                    })
                };
                let g = grad(SurrogateMode::GradIterate { k });
                assert!(rel_err(&g, &c.eval(&p).unwrap()) < 1e-6);
                let gg = &p - grad(SurrogateMode::GdIterate { gamma, k }) * gamma;
                assert!(rel_err(&gg, &cg.eval(&p).unwrap()) < 1e-6);
            }
        }
    }

    #[test]
    fn activations_by_name() {
        let ts: Vec<f64> = (-20..=20).map(|i| f64::from(i) * 0.15).collect();
        for name in ["quadratic", "exp", "logistic-loss", "logistic-label:0.3", "linear", "sin(t) + t^3/3", "cosh(t)"] {
            let a = Activation::from_name(name).unwrap();
            assert!(a.derivative_consistency(&ts, 1e-5) <= 1e-6, "{name}");
            let d2_err = ts
                .iter()
                .map(|&t| ((a.d1(t + 1e-5) - a.d1(t - 1e-5)) / 2e-5 - a.d2(t).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(d2_err <= 1e-5, "{name}");
        }
        assert!(Activation::from_name("softmaxx(").is_err());
        assert!(Activation::logistic_label(1.0).is_err());
        let p = 0.3f64;
        let a = Activation::logistic_label(p).unwrap();
        assert!(a.d1((p / (1.0 - p)).ln()).abs() < 1e-15);
    }

    #[test]
    fn custom_activation_without_d2_falls_back() {
        let a = Activation::custom("cube", |t| t.powi(3) / 3.0, |t| t * t, None);
        let spec = GlmSpec::new(vec![v(&[1.0, 0.0])], a).unwrap();
        let f = glm_gradient(&spec);
        assert!(!f.has_analytic_jacobian());
        assert_eq!(f.best_jacobian_method(), JacobianMethod::central());
        assert!(f.jacobian(&v(&[1.0, 0.0]), &JacobianMethod::Analytic).is_err());
        let j = f.jacobian_best(&v(&[1.5, 0.0])).unwrap();
        assert!((j[(0, 0)] - 3.0).abs() < 1e-8);
    }
}
