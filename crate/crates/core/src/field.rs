//! Composable vector fields on ℝⁿ: evaluation, composition, iteration and
//! Jacobians.
//!
//! A [`FieldDef`] is an immutable tree of field constructors. Cloning is
//! cheap (the tree is reference counted) and every value is `Send + Sync`, so
//! fields may be evaluated from several threads at once.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::glm::{GlmField, GlmForm, GlmSpec};
use crate::linalg::{all_finite_mat, all_finite_vec, Matrix, Vector};
use crate::poly::{FloatPoly, PolyField};
use crate::quadrature::{integrate, QuadratureOptions};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

pub type EvalFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;
pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A C¹ scalar function together with its derivative.
#[derive(Clone)]
pub struct ScalarFn {
    label: String,
    f: ScalarMap,
    df: ScalarMap,
}

impl ScalarFn {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    /// Parses an expression in `t`; the derivative is taken symbolically.
    pub fn from_expr(src: &str) -> Result<Self> {
        let e = crate::expr::Expr::parse(src)?;
        let d = e.derivative();
        Ok(Self::new(src, move |t| e.eval(t), move |t| d.eval(t)))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (self.df)(t)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

/// Polynomial field with float copies of its components and Jacobian.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    field: PolyField,
    components: Vec<FloatPoly>,
    jacobian: Vec<Vec<FloatPoly>>,
}

impl CompiledPoly {
    pub fn field(&self) -> &PolyField {
        &self.field
    }
}

#[derive(Clone)]
pub enum FieldKind {
    Constant(Vector),
    Linear(Matrix),
    Affine(Matrix, Vector),
    /// Rotation by `π/j`; `cos`/`sin` are computed once at construction.
    Rotation2D { j: u32, cos: f64, sin: f64 },
    CoordWise1D(Vec<ScalarFn>),
    Glm(GlmField),
    GdMap { inner: FieldDef, gamma: f64 },
    Iterate { inner: FieldDef, k: u32 },
    Sum(Vec<(f64, FieldDef)>),
    Scale(f64, FieldDef),
    Compose { outer: FieldDef, inner: FieldDef },
    PolyExact(CompiledPoly),
    Callback {
        label: String,
        eval: EvalFn,
        jacobian: Option<JacobianFn>,
    },
}

#[derive(Clone)]
pub struct FieldDef {
    dim: usize,
    kind: Arc<FieldKind>,
}

impl fmt::Debug for FieldDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldDef({})", self.describe())
    }
}

/// How to obtain a Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub enum JacobianMethod {
    Analytic,
    CentralDifference { h: f64 },
    /// Only valid on `Iterate` fields: `J(V)(V^{k-1}x) ⋯ J(V)(x)` with each
    /// factor from the base method.
    ChainProduct(Box<JacobianMethod>),
}

impl JacobianMethod {
    pub fn central() -> Self {
        Self::CentralDifference { h: DEFAULT_FD_STEP }
    }
}

fn check_finite_vec(v: &Vector, context: impl FnOnce() -> String) -> Result<()> {
    if all_finite_vec(v) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iterate: None,
            context: context(),
        })
    }
}

fn require_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

impl FieldDef {
    fn from_kind(dim: usize, kind: FieldKind) -> Self {
        Self {
            dim,
            kind: Arc::new(kind),
        }
    }

    pub fn constant(v: Vector) -> Result<Self> {
        check_finite_vec(&v, || "constant field value".into())?;
        Ok(Self::from_kind(v.len(), FieldKind::Constant(v)))
    }

    pub fn linear(a: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidParameter(format!(
                "linear field needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !all_finite_mat(&a) {
            return Err(Error::NonFinite {
                iterate: None,
                context: "linear field matrix".into(),
            });
        }
        Ok(Self::from_kind(a.nrows(), FieldKind::Linear(a)))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_kind(n, FieldKind::Linear(Matrix::identity(n, n)))
    }

    pub fn affine(a: Matrix, b: Vector) -> Result<Self> {
        let lin = Self::linear(a)?;
        require_dim(lin.dim, b.len())?;
        check_finite_vec(&b, || "affine offset".into())?;
        let a = match &*lin.kind {
            FieldKind::Linear(a) => a.clone(),
            _ => unreachable!(),
        };
        Ok(Self::from_kind(b.len(), FieldKind::Affine(a, b)))
    }

    /// Rotation of the plane by `π/j`.
    pub fn rotation2d(j: u32) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidParameter("rotation index j must be positive".into()));
        }
        let theta = std::f64::consts::PI / f64::from(j);
        Ok(Self::from_kind(
            2,
            FieldKind::Rotation2D {
                j,
                cos: theta.cos(),
                sin: theta.sin(),
            },
        ))
    }

    pub fn coordwise(components: Vec<ScalarFn>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("coordinate-wise field needs at least one component".into()));
        }
        Ok(Self::from_kind(components.len(), FieldKind::CoordWise1D(components)))
    }

    pub(crate) fn glm_field(field: GlmField) -> Self {
        Self::from_kind(field.spec().dim(), FieldKind::Glm(field))
    }

    /// `x − γ · inner(x)`.
    pub fn gd_map(inner: FieldDef, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {gamma}")));
        }
        Ok(Self::from_kind(inner.dim, FieldKind::GdMap { inner, gamma }))
    }

    /// `inner^k`; nested iterates collapse, `(V^a)^b = V^{ab}`.
    pub fn iterate(inner: FieldDef, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
        }
        if let FieldKind::Iterate { inner: base, k: a } = &*inner.kind {
            let ab = a
                .checked_mul(k)
                .ok_or_else(|| Error::InvalidParameter("iteration count overflow".into()))?;
            return Ok(Self::from_kind(inner.dim, FieldKind::Iterate { inner: base.clone(), k: ab }));
        }
        if k == 1 {
            return Ok(inner);
        }
        Ok(Self::from_kind(inner.dim, FieldKind::Iterate { inner, k }))
    }

    /// `Σ wᵢ Vᵢ`, evaluated in the given order.
    pub fn sum(terms: Vec<(f64, FieldDef)>) -> Result<Self> {
        let dim = terms
            .first()
            .map(|(_, f)| f.dim)
            .ok_or_else(|| Error::InvalidParameter("empty field sum".into()))?;
        for (w, f) in &terms {
            require_dim(dim, f.dim)?;
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    iterate: None,
                    context: "sum weight".into(),
                });
            }
        }
        Ok(Self::from_kind(dim, FieldKind::Sum(terms)))
    }

    pub fn scale(c: f64, inner: FieldDef) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::NonFinite {
                iterate: None,
                context: "scale factor".into(),
            });
        }
        Ok(Self::from_kind(inner.dim, FieldKind::Scale(c, inner)))
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: FieldDef, inner: FieldDef) -> Result<Self> {
        require_dim(outer.dim, inner.dim)?;
        Ok(Self::from_kind(outer.dim, FieldKind::Compose { outer, inner }))
    }

    /// Wraps a plain polynomial field (every ring variable is spatial).
    pub fn poly(field: PolyField) -> Result<Self> {
        if !field.is_plain() {
            return Err(Error::InvalidParameter(
                "polynomial field must act on all of its ring variables".into(),
            ));
        }
        let components = field.components().iter().map(|c| c.to_float_terms()).collect();
        let jacobian = field
            .jacobian()?
            .iter()
            .map(|row| row.iter().map(|p| p.to_float_terms()).collect())
            .collect();
        let dim = field.dim();
        Ok(Self::from_kind(
            dim,
            FieldKind::PolyExact(CompiledPoly {
                field,
                components,
                jacobian,
            }),
        ))
    }

    /// User-supplied field; `eval` must be a pure function of `x`.
    pub fn callback(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: Option<JacobianFn>,
    ) -> Self {
        Self::from_kind(
            dim,
            FieldKind::Callback {
                label: label.into(),
                eval: Arc::new(eval),
                jacobian,
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn describe(&self) -> String {
        match &*self.kind {
            FieldKind::Constant(_) => format!("constant(n={})", self.dim),
            FieldKind::Linear(_) => format!("linear({0}x{0})", self.dim),
            FieldKind::Affine(..) => format!("affine({0}x{0})", self.dim),
            FieldKind::Rotation2D { j, .. } => format!("rotation2d(j={j})"),
            FieldKind::CoordWise1D(fs) => format!(
                "coordwise({})",
                fs.iter().map(ScalarFn::label).collect::<Vec<_>>().join(", ")
            ),
            FieldKind::Glm(g) => g.describe(),
            FieldKind::GdMap { inner, gamma } => format!("gd_map({}, gamma={gamma})", inner.describe()),
            FieldKind::Iterate { inner, k } => format!("iterate({}, k={k})", inner.describe()),
            FieldKind::Sum(terms) => format!(
                "sum({})",
                terms
                    .iter()
                    .map(|(w, f)| format!("{w}*{}", f.describe()))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            FieldKind::Scale(c, inner) => format!("scale({c}, {})", inner.describe()),
            FieldKind::Compose { outer, inner } => {
                format!("compose({}, {})", outer.describe(), inner.describe())
            }
            FieldKind::PolyExact(p) => format!(
                "poly({})",
                p.field
                    .components()
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join("; ")
            ),
            FieldKind::Callback { label, .. } => format!("callback({label})"),
        }
    }

    /// `V(x)`. Fails on dimension mismatch or on any non-finite intermediate
    /// value; failures inside an iterate carry the 1-based iterate index.
    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        require_dim(self.dim, x.len())?;
        check_finite_vec(x, || "input point".into())?;
        self.eval_checked(x)
    }

    fn eval_checked(&self, x: &Vector) -> Result<Vector> {
        let y = self.eval_raw(x)?;
        check_finite_vec(&y, || format!("value of {}", self.describe()))?;
        Ok(y)
    }

    fn eval_raw(&self, x: &Vector) -> Result<Vector> {
        Ok(match &*self.kind {
            FieldKind::Constant(v) => v.clone(),
            FieldKind::Linear(a) => a * x,
            FieldKind::Affine(a, b) => a * x + b,
            FieldKind::Rotation2D { cos, sin, .. } => {
                Vector::from_vec(vec![cos * x[0] + sin * x[1], -sin * x[0] + cos * x[1]])
            }
            FieldKind::CoordWise1D(fs) => Vector::from_fn(self.dim, |i, _| fs[i].value(x[i])),
            FieldKind::Glm(g) => g.eval(x)?,
            FieldKind::GdMap { inner, gamma } => x - inner.eval_checked(x)? * *gamma,
            FieldKind::Iterate { inner, k } => {
                let mut y = x.clone();
                for i in 1..=*k {
                    y = inner.eval_checked(&y).map_err(|e| match e {
                        Error::NonFinite { iterate: None, context } => Error::NonFinite {
                            iterate: Some(i as usize),
                            context,
                        },
                        other => other,
                    })?;
                }
                y
            }
            FieldKind::Sum(terms) => {
                let mut acc = Vector::zeros(self.dim);
                for (w, f) in terms {
                    acc += f.eval_checked(x)? * *w;
                }
                acc
            }
            FieldKind::Scale(c, inner) => inner.eval_checked(x)? * *c,
            FieldKind::Compose { outer, inner } => outer.eval_checked(&inner.eval_checked(x)?)?,
            FieldKind::PolyExact(p) => {
                let xs = x.as_slice();
                Vector::from_iterator(self.dim, p.components.iter().map(|c| c.eval(xs)))
            }
            FieldKind::Callback { eval, .. } => {
                let out = eval(x.as_slice());
                require_dim(self.dim, out.len())?;
                Vector::from_vec(out)
            }
        })
    }

    /// True when [`JacobianMethod::Analytic`] is supported.
    pub fn has_analytic_jacobian(&self) -> bool {
        match &*self.kind {
            FieldKind::Constant(_)
            | FieldKind::Linear(_)
            | FieldKind::Affine(..)
            | FieldKind::Rotation2D { .. }
            | FieldKind::CoordWise1D(_)
            | FieldKind::PolyExact(_) => true,
            FieldKind::Glm(g) => g.has_analytic_jacobian(),
            FieldKind::GdMap { inner, .. }
            | FieldKind::Iterate { inner, .. }
            | FieldKind::Scale(_, inner) => inner.has_analytic_jacobian(),
            FieldKind::Sum(terms) => terms.iter().all(|(_, f)| f.has_analytic_jacobian()),
            FieldKind::Compose { outer, inner } => {
                outer.has_analytic_jacobian() && inner.has_analytic_jacobian()
            }
            FieldKind::Callback { jacobian, .. } => jacobian.is_some(),
        }
    }

    /// Analytic where possible, chain products for iterates, central
    /// differences otherwise.
    pub fn best_jacobian_method(&self) -> JacobianMethod {
        match &*self.kind {
            FieldKind::Iterate { inner, .. } => JacobianMethod::ChainProduct(Box::new(inner.best_jacobian_method())),
            _ if self.has_analytic_jacobian() => JacobianMethod::Analytic,
            _ => JacobianMethod::central(),
        }
    }

    pub fn jacobian(&self, x: &Vector, method: &JacobianMethod) -> Result<Matrix> {
        require_dim(self.dim, x.len())?;
        check_finite_vec(x, || "jacobian point".into())?;
        let j = match method {
            JacobianMethod::Analytic => self.analytic_jacobian(x)?,
            JacobianMethod::CentralDifference { h } => self.central_difference(x, *h)?,
            JacobianMethod::ChainProduct(base) => match &*self.kind {
                FieldKind::Iterate { inner, k } => chain_product(inner, *k, x, base)?,
                _ => {
                    return Err(Error::MethodIncompatible(format!(
                        "chain product requires an iterate field, got {}",
                        self.describe()
                    )))
                }
            },
        };
        if !all_finite_mat(&j) {
            return Err(Error::NonFinite {
                iterate: None,
                context: format!("jacobian of {}", self.describe()),
            });
        }
        Ok(j)
    }

    pub fn jacobian_best(&self, x: &Vector) -> Result<Matrix> {
        self.jacobian(x, &self.best_jacobian_method())
    }

    fn central_difference(&self, x: &Vector, h: f64) -> Result<Matrix> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("difference step must be positive, got {h}")));
        }
        let n = self.dim;
        let mut jac = Matrix::zeros(n, n);
        let mut xp = x.clone();
        for j in 0..n {
            xp[j] = x[j] + h;
            let fp = self.eval_checked(&xp)?;
            xp[j] = x[j] - h;
            let fm = self.eval_checked(&xp)?;
            xp[j] = x[j];
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        Ok(jac)
    }

    fn analytic_jacobian(&self, x: &Vector) -> Result<Matrix> {
        let n = self.dim;
        Ok(match &*self.kind {
            FieldKind::Constant(_) => Matrix::zeros(n, n),
            FieldKind::Linear(a) | FieldKind::Affine(a, _) => a.clone(),
            FieldKind::Rotation2D { cos, sin, .. } => Matrix::from_row_slice(2, 2, &[*cos, *sin, -sin, *cos]),
            FieldKind::CoordWise1D(fs) => {
                Matrix::from_diagonal(&Vector::from_fn(n, |i, _| fs[i].derivative(x[i])))
            }
            FieldKind::Glm(g) => g.jacobian(x)?,
            FieldKind::GdMap { inner, gamma } => {
                Matrix::identity(n, n) - inner.jacobian(x, &JacobianMethod::Analytic)? * *gamma
            }
            FieldKind::Iterate { inner, k } => chain_product(inner, *k, x, &JacobianMethod::Analytic)?,
            FieldKind::Sum(terms) => {
                let mut acc = Matrix::zeros(n, n);
                for (w, f) in terms {
                    acc += f.jacobian(x, &JacobianMethod::Analytic)? * *w;
                }
                acc
            }
            FieldKind::Scale(c, inner) => inner.jacobian(x, &JacobianMethod::Analytic)? * *c,
            FieldKind::Compose { outer, inner } => {
                let y = inner.eval_checked(x)?;
                outer.jacobian(&y, &JacobianMethod::Analytic)? * inner.jacobian(x, &JacobianMethod::Analytic)?
            }
            FieldKind::PolyExact(p) => {
                let xs = x.as_slice();
                Matrix::from_fn(n, n, |i, j| p.jacobian[i][j].eval(xs))
            }
            FieldKind::Callback { jacobian, label, .. } => match jacobian {
                Some(jf) => {
                    let m = jf(x.as_slice());
                    if m.nrows() != n || m.ncols() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            found: m.nrows(),
                        });
                    }
                    m
                }
                None => {
                    return Err(Error::MethodIncompatible(format!(
                        "callback '{label}' has no analytic jacobian"
                    )))
                }
            },
        })
    }

    /// `Σᵢ ∫₀^{xᵢ} fᵢ(t) dt`, the potential of a coordinate-wise field.
    pub fn coordwise_potential(&self, x: &Vector, opts: &QuadratureOptions) -> Result<f64> {
        require_dim(self.dim, x.len())?;
        match &*self.kind {
            FieldKind::CoordWise1D(fs) => {
                let mut total = 0.0;
                for (f, &xi) in fs.iter().zip(x.iter()) {
                    total += integrate(|t| f.value(t), 0.0, xi, opts)?.value;
                }
                Ok(total)
            }
            _ => Err(Error::InvalidParameter(format!(
                "potential requested for non coordinate-wise field {}",
                self.describe()
            ))),
        }
    }

    /// The GLM specification behind a GLM gradient field, if this is one.
    pub fn glm_spec(&self) -> Option<&GlmSpec> {
        match &*self.kind {
            FieldKind::Glm(g) if matches!(g.form(), GlmForm::Gradient) => Some(g.spec()),
            _ => None,
        }
    }
}

fn chain_product(inner: &FieldDef, k: u32, x: &Vector, base: &JacobianMethod) -> Result<Matrix> {
    if matches!(base, JacobianMethod::ChainProduct(_)) && !matches!(*inner.kind, FieldKind::Iterate { .. }) {
        return Err(Error::MethodIncompatible(
            "nested chain product on a non-iterate base field".into(),
        ));
    }
    let n = inner.dim;
    let mut acc = Matrix::identity(n, n);
    let mut y = x.clone();
    for i in 1..=k {
        let factor = inner.jacobian(&y, base).map_err(|e| match e {
            Error::NonFinite { iterate: None, context } => Error::NonFinite {
                iterate: Some(i as usize),
                context,
            },
            other => other,
        })?;
        acc = factor * acc;
        if i < k {
            y = inner.eval_checked(&y).map_err(|e| match e {
                Error::NonFinite { iterate: None, context } => Error::NonFinite {
                    iterate: Some(i as usize),
                    context,
                },
                other => other,
            })?;
        }
    }
    Ok(acc)
}

pub fn eval(field: &FieldDef, x: &Vector) -> Result<Vector> {
    field.eval(x)
}

pub fn compose(outer: &FieldDef, inner: &FieldDef) -> Result<FieldDef> {
    FieldDef::compose(outer.clone(), inner.clone())
}

pub fn gd_map(f_grad: &FieldDef, gamma: f64) -> Result<FieldDef> {
    FieldDef::gd_map(f_grad.clone(), gamma)
}

pub fn iterate(field: &FieldDef, k: u32) -> Result<FieldDef> {
    FieldDef::iterate(field.clone(), k)
}

pub fn jacobian(field: &FieldDef, x: &Vector, method: &JacobianMethod) -> Result<Matrix> {
    field.jacobian(x, method)
}

pub use crate::linalg::asymmetry;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{glm_gradient, Activation, GlmSpec};
    use crate::linalg::max_abs_diff;
    use crate::sampling::SampleConfig;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn v2(x: f64, y: f64) -> Vector {
        Vector::from_vec(vec![x, y])
    }

    #[test]
    fn linear_eval_and_nilpotent_square() {
        let v = FieldDef::linear(m2(-1.0, -1.0, 1.0, 1.0)).unwrap();
        assert_eq!(v.eval(&v2(1.0, 0.0)).unwrap(), v2(-1.0, 1.0));
        let v2f = FieldDef::iterate(v, 2).unwrap();
        assert_eq!(v2f.eval(&v2(3.0, -7.0)).unwrap(), v2(0.0, 0.0));
    }

    #[test]
    fn quarter_turn_twice_is_half_turn() {
        let r = FieldDef::iterate(FieldDef::rotation2d(2).unwrap(), 2).unwrap();
        let y = r.eval(&v2(1.0, 0.0)).unwrap();
        assert!((y - v2(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn compose_of_reflections_is_skew() {
        let v1 = FieldDef::linear(m2(0.0, 1.0, 1.0, 0.0)).unwrap();
        let v2f = FieldDef::linear(m2(1.0, 0.0, 0.0, -1.0)).unwrap();
        let c = compose(&v1, &v2f).unwrap();
        let skew = FieldDef::linear(m2(0.0, -1.0, 1.0, 0.0)).unwrap();
        for p in SampleConfig::ball(20, 2.0, 3).points(2) {
            assert_eq!(c.eval(&p).unwrap(), skew.eval(&p).unwrap());
        }
        let id = compose(&v1, &FieldDef::identity(2)).unwrap();
        assert_eq!(id.eval(&v2(0.3, 0.7)).unwrap(), v1.eval(&v2(0.3, 0.7)).unwrap());
    }

    #[test]
    fn compose_self_matches_iterate_on_random_points() {
        let spec = GlmSpec::new(
            vec![v2(1.0, 0.5), v2(-0.2, 0.9)],
            Activation::from_name("logistic-loss").unwrap(),
        )
        .unwrap();
        let v = glm_gradient(&spec);
        let twice = compose(&v, &v).unwrap();
        let it = iterate(&v, 2).unwrap();
        for p in SampleConfig::ball(100, 1.0, 11).points(2) {
            assert_eq!(twice.eval(&p).unwrap(), it.eval(&p).unwrap());
        }
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let v = FieldDef::identity(3);
        assert!(matches!(v.eval(&v2(1.0, 2.0)), Err(Error::DimensionMismatch { expected: 3, found: 2 })));
        let e = FieldDef::coordwise(vec![ScalarFn::new("exp", f64::exp, f64::exp)]).unwrap();
        let tower = FieldDef::iterate(e, 6).unwrap();
        match tower.eval(&Vector::from_vec(vec![1.0])) {
            Err(Error::NonFinite { iterate: Some(i), .. }) => assert_eq!(i, 4),
            other => panic!("expected overflow at iterate 4, got {other:?}"),
        }
        assert!(FieldDef::rotation2d(0).is_err());
        assert!(FieldDef::linear(Matrix::zeros(2, 3)).is_err());
        assert!(FieldDef::compose(FieldDef::identity(2), FieldDef::identity(3)).is_err());
    }

    #[test]
    fn iterate_nesting_multiplies() {
        let base = FieldDef::rotation2d(5).unwrap();
        let nested = FieldDef::iterate(FieldDef::iterate(base, 2).unwrap(), 3).unwrap();
        match nested.kind() {
            FieldKind::Iterate { k, inner } => {
                assert_eq!(*k, 6);
                assert!(matches!(inner.kind(), FieldKind::Rotation2D { j: 5, .. }));
            }
            _ => panic!("expected iterate"),
        }
    }

    #[test]
    fn gd_map_examples() {
        let zero = gd_map(&FieldDef::identity(2), 1.0).unwrap();
        assert_eq!(zero.eval(&v2(4.0, -2.0)).unwrap(), v2(0.0, 0.0));
        let spec = GlmSpec::new(vec![v2(1.0, 0.0)], Activation::from_name("quadratic").unwrap()).unwrap();
        let g = gd_map(&glm_gradient(&spec), 0.5).unwrap();
        assert_eq!(g.eval(&v2(2.0, 3.0)).unwrap(), v2(1.0, 3.0));
        // (1 − γα)^k x with α = 1, γ = 0.5, k = 3
        let it = iterate(&gd_map(&FieldDef::identity(2), 0.5).unwrap(), 3).unwrap();
        assert_eq!(it.eval(&v2(8.0, 0.0)).unwrap(), v2(1.0, 0.0));
        assert!(gd_map(&FieldDef::identity(2), 0.0).is_err());
        assert!(gd_map(&FieldDef::identity(2), -1.0).is_err());
    }

    #[test]
    fn chain_product_is_matrix_power() {
        let a = m2(1.0, 2.0, 1.0, -1.0);
        let it = iterate(&FieldDef::linear(a).unwrap(), 2).unwrap();
        let j = it
            .jacobian(&v2(0.4, -3.0), &JacobianMethod::ChainProduct(Box::new(JacobianMethod::Analytic)))
            .unwrap();
        assert_eq!(j, m2(3.0, 0.0, 0.0, 3.0));
        let err = FieldDef::linear(m2(1.0, 0.0, 0.0, 1.0)).unwrap().jacobian(
            &v2(0.0, 0.0),
            &JacobianMethod::ChainProduct(Box::new(JacobianMethod::Analytic)),
        );
        assert!(matches!(err, Err(Error::MethodIncompatible(_))));
    }

    #[test]
    fn linear_jacobian_is_exact_everywhere() {
        let a = m2(0.3, -1.7, 2.5, 4.0);
        let v = FieldDef::linear(a.clone()).unwrap();
        for p in SampleConfig::ball(10, 5.0, 2).points(2) {
            assert_eq!(v.jacobian(&p, &JacobianMethod::Analytic).unwrap(), a);
        }
    }

    #[test]
    fn quadratic_glm_hessian() {
        let spec = GlmSpec::new(vec![v2(1.0, 0.0)], Activation::from_name("quadratic").unwrap()).unwrap();
        let j = glm_gradient(&spec).jacobian(&v2(5.0, -1.0), &JacobianMethod::Analytic).unwrap();
        assert_eq!(j, m2(1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn central_difference_matches_analytic_logistic() {
        let dirs = crate::sampling::orthogonal_directions(3, 3, 0.5, 2.0, 21);
        let spec = GlmSpec::new(dirs, Activation::from_name("logistic-loss").unwrap()).unwrap();
        let v = glm_gradient(&spec);
        for p in SampleConfig::ball(30, 2.0, 5).points(3) {
            let an = v.jacobian(&p, &JacobianMethod::Analytic).unwrap();
            let fd = v.jacobian(&p, &JacobianMethod::central()).unwrap();
            assert!(max_abs_diff(&an, &fd) < 1e-6);
        }
    }

    #[test]
    fn chain_product_agrees_with_differences_on_iterates() {
        let dirs = crate::sampling::orthogonal_directions(3, 2, 0.5, 2.0, 8);
        let spec = GlmSpec::new(dirs, Activation::from_name("logistic-loss").unwrap()).unwrap();
        let lin = FieldDef::linear(Matrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, -0.1, 0.3, 0.4, 0.0, 0.1, -0.6])).unwrap();
        for base in [glm_gradient(&spec), lin] {
            for k in 2..=4 {
                let it = iterate(&base, k).unwrap();
                for p in SampleConfig::ball(20, 2.0, 17).points(3) {
                    let chain = it.jacobian_best(&p).unwrap();
                    let fd = it.jacobian(&p, &JacobianMethod::central()).unwrap();
                    assert!(max_abs_diff(&chain, &fd) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn asymmetry_of_x2y_square_jacobian() {
        // (∇(x²y))² = (4x³y, 4x²y²)
        let v = FieldDef::callback(2, "h", |x| vec![4.0 * x[0].powi(3) * x[1], 4.0 * x[0].powi(2) * x[1].powi(2)], None);
        let j = v.jacobian(&v2(1.0, 1.0), &JacobianMethod::central()).unwrap();
        assert!((j[(0, 1)] - j[(1, 0)] - (4.0 - 8.0)).abs() < 1e-6);
        assert!(asymmetry(&j) > 0.0);
        assert!(matches!(
            v.jacobian(&v2(1.0, 1.0), &JacobianMethod::Analytic),
            Err(Error::MethodIncompatible(_))
        ));
    }

    #[test]
    fn coordwise_potential_by_quadrature() {
        let f = FieldDef::coordwise(vec![
            ScalarFn::from_expr("exp(t)").unwrap(),
            ScalarFn::from_expr("t^2").unwrap(),
        ])
        .unwrap();
        let p = f.coordwise_potential(&v2(1.0, 3.0), &QuadratureOptions::default()).unwrap();
        assert!((p - ((1f64.exp() - 1.0) + 9.0)).abs() < 1e-10);
        assert!(FieldDef::identity(2).coordwise_potential(&v2(0.0, 0.0), &QuadratureOptions::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mat3() -> impl Strategy<Value = Matrix> {
            prop::collection::vec(-1.0f64..1.0, 9).prop_map(|v| Matrix::from_row_slice(3, 3, &v))
        }

        proptest! {
            #[test]
            fn iterate_recursion(a in mat3(), k in 2u32..6, x in prop::collection::vec(-1.0f64..1.0, 3)) {
                let v = FieldDef::linear(a).unwrap();
                let x = Vector::from_vec(x);
                let lhs = iterate(&v, k).unwrap().eval(&x).unwrap();
                let rhs = v.eval(&iterate(&v, k - 1).unwrap().eval(&x).unwrap()).unwrap();
                prop_assert!((lhs - rhs).norm() <= 1e-12);
            }

            #[test]
            fn compose_associative(a in mat3(), b in mat3(), c in mat3(), x in prop::collection::vec(-1.0f64..1.0, 3)) {
                let (fa, fb, fc) = (FieldDef::linear(a).unwrap(), FieldDef::linear(b).unwrap(), FieldDef::linear(c).unwrap());
                let x = Vector::from_vec(x);
                let left = compose(&compose(&fa, &fb).unwrap(), &fc).unwrap().eval(&x).unwrap();
                let right = compose(&fa, &compose(&fb, &fc).unwrap()).unwrap().eval(&x).unwrap();
                prop_assert!((left - right).norm() <= 1e-12);
            }

            #[test]
            fn asymmetry_zero_iff_symmetric(v in prop::collection::vec(-3.0f64..3.0, 9)) {
                let m = Matrix::from_row_slice(3, 3, &v);
                let sym = (&m + m.transpose()) * 0.5;
                prop_assert_eq!(asymmetry(&sym), 0.0);
                prop_assert_eq!(asymmetry(&m) == 0.0, m == m.transpose());
            }
        }
    }
}
