//! Exact sparse multivariate polynomials over ℚ and polynomial vector fields.
//!
//! Terms are kept in a `BTreeMap` keyed by exponent vectors ordered by
//! graded lexicographic order, so iteration order (and therefore the text
//! rendering) is canonical. Coefficients are `BigRational`, which is always
//! stored in lowest terms with a positive denominator; zero coefficients are
//! never stored.
//!
//! The canonical text form is
//!
//! ```text
//! 4*x0^3*x1 - 8*x0*x1^2 + 1/2
//! ```
//!
//! i.e. terms in descending grlex order, an explicit coefficient on every
//! term, variables `x0, x1, ...` with exponents omitted when equal to one.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::linalg::RationalMatrix;

pub const DEFAULT_MAX_TERMS: usize = 1_000_000;

/// Term-count ceiling applied to products and compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_terms: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_terms: DEFAULT_MAX_TERMS,
        }
    }
}

impl Limits {
    fn check(&self, p: &RationalPoly) -> Result<()> {
        if p.terms.len() > self.max_terms {
            return Err(Error::TermLimit {
                limit: self.max_terms,
                reached: p.terms.len(),
            });
        }
        Ok(())
    }
}

/// Exponent vector, ordered graded-lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Self(vec![0; nvars])
    }

    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn mul(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    fn divides(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    fn div(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalPoly {
    nvars: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

pub fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl RationalPoly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, BigRational::one())
    }

    /// The polynomial `x_var`.
    pub fn var(nvars: usize, var: usize) -> Result<Self> {
        if var >= nvars {
            return Err(Error::VarOutOfRange { var, nvars });
        }
        let mut e = vec![0; nvars];
        e[var] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(Monomial(e), BigRational::one());
        Ok(p)
    }

    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, BigRational)>,
    {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(Error::ArityMismatch {
                    expected: nvars,
                    found: e.len(),
                });
            }
            p.add_term(Monomial(e), c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exponents: &[u32]) -> BigRational {
        self.terms
            .get(&Monomial(exponents.to_vec()))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(Monomial::degree)
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degs = self.terms.keys().map(Monomial::degree);
        match degs.next() {
            None => true,
            Some(d) => degs.all(|e| e == d),
        }
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn leading(&self) -> Option<(&Monomial, &BigRational)> {
        self.terms.iter().next_back()
    }

    fn check_nvars(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::ArityMismatch {
                expected: self.nvars,
                found: other.nvars,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_nvars(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_nvars(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Self, limits: &Limits) -> Result<Self> {
        self.check_nvars(other)?;
        let mut out = Self::zero(self.nvars);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
            limits.check(&out)?;
        }
        Ok(out)
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        Self {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn pow(&self, e: u32, limits: &Limits) -> Result<Self> {
        let mut result = Self::one(self.nvars);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.try_mul(&base, limits)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.try_mul(&base, limits)?;
            }
        }
        Ok(result)
    }

    /// `∂/∂x_var` by the power rule.
    pub fn partial(&self, var: usize) -> Result<Self> {
        if var >= self.nvars {
            return Err(Error::VarOutOfRange {
                var,
                nvars: self.nvars,
            });
        }
        let mut out = Self::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[var] -= 1;
            out.add_term(Monomial(exps), c * rat(i64::from(e)));
        }
        Ok(out)
    }

    /// Substitutes `x_i ← subs[i]` for every variable.
    pub fn compose(&self, subs: &[RationalPoly], limits: &Limits) -> Result<Self> {
        if subs.len() != self.nvars {
            return Err(Error::ArityMismatch {
                expected: self.nvars,
                found: subs.len(),
            });
        }
        let target = subs.first().map_or(0, RationalPoly::nvars);
        if let Some(bad) = subs.iter().find(|s| s.nvars != target) {
            return Err(Error::ArityMismatch {
                expected: target,
                found: bad.nvars,
            });
        }
        let mut max_exp = vec![0u32; self.nvars];
        for m in self.terms.keys() {
            for (i, &e) in m.0.iter().enumerate() {
                max_exp[i] = max_exp[i].max(e);
            }
        }
        // powers[i][e] = subs[i]^e
        let mut powers: Vec<Vec<RationalPoly>> = Vec::with_capacity(self.nvars);
        for (i, s) in subs.iter().enumerate() {
            let mut row = vec![Self::one(target)];
            for _ in 0..max_exp[i] {
                let next = row.last().expect("nonempty").try_mul(s, limits)?;
                row.push(next);
            }
            powers.push(row);
        }
        let mut out = Self::zero(target);
        for (m, c) in &self.terms {
            let mut term = Self::constant(target, c.clone());
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term = term.try_mul(&powers[i][e as usize], limits)?;
                }
            }
            for (tm, tc) in term.terms {
                out.add_term(tm, tc);
            }
            limits.check(&out)?;
        }
        Ok(out)
    }

    pub fn eval_rational(&self, point: &[BigRational]) -> Result<BigRational> {
        if point.len() != self.nvars {
            return Err(Error::ArityMismatch {
                expected: self.nvars,
                found: point.len(),
            });
        }
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (x, &e) in point.iter().zip(&m.0) {
                if e > 0 {
                    t *= num::pow(x.clone(), e as usize);
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Exact division by `divisor`: `Some(quotient)` iff the remainder is zero.
    ///
    /// A single polynomial is a Gröbner basis of the ideal it generates, so
    /// the multivariate division remainder is zero exactly when `divisor`
    /// divides `self`.
    pub fn div_exact(&self, divisor: &Self) -> Result<Option<Self>> {
        self.check_nvars(divisor)?;
        let (lm, lc) = match divisor.leading() {
            Some((m, c)) => (m.clone(), c.clone()),
            None => return Err(Error::InvalidParameter("division by the zero polynomial".into())),
        };
        let limits = Limits::default();
        let mut rem = self.clone();
        let mut quotient = Self::zero(self.nvars);
        let mut residue = Self::zero(self.nvars);
        while let Some((m, c)) = rem.leading().map(|(m, c)| (m.clone(), c.clone())) {
            if lm.divides(&m) {
                let qm = m.div(&lm);
                let qc = &c / &lc;
                let mut step = Self::zero(self.nvars);
                step.add_term(qm.clone(), qc.clone());
                quotient.add_term(qm, qc);
                rem = rem.try_sub(&step.try_mul(divisor, &limits)?)?;
            } else {
                rem.terms.remove(&m);
                residue.add_term(m, c);
            }
        }
        Ok(if residue.is_zero() { Some(quotient) } else { None })
    }

    /// Splits `self` by the monomials in `vars`: returns `monomial-in-vars →
    /// coefficient polynomial` where coefficients have zero exponent in `vars`.
    pub fn collect_by(&self, vars: &[usize]) -> Result<BTreeMap<Monomial, RationalPoly>> {
        for &v in vars {
            if v >= self.nvars {
                return Err(Error::VarOutOfRange {
                    var: v,
                    nvars: self.nvars,
                });
            }
        }
        let mut out: BTreeMap<Monomial, RationalPoly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let key = Monomial(vars.iter().map(|&v| m.0[v]).collect());
            let mut rest = m.0.clone();
            for &v in vars {
                rest[v] = 0;
            }
            out.entry(key)
                .or_insert_with(|| Self::zero(self.nvars))
                .add_term(Monomial(rest), c.clone());
        }
        Ok(out)
    }

    /// Float evaluation via the precompiled term list.
    pub fn to_float_terms(&self) -> FloatPoly {
        FloatPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.0.clone(), crate::linalg::rational_to_f64(c)))
                .collect(),
        }
    }

    /// Renders with custom variable names (same layout as `Display`).
    pub fn render_with(&self, names: &[&str]) -> String {
        render(self, |i| {
            names
                .get(i)
                .map(|s| (*s).to_string())
                .unwrap_or_else(|| format!("x{i}"))
        })
    }

    /// Parses the canonical text form. Variables are `x<index>`; a term may
    /// omit its coefficient (implicit 1).
    pub fn parse(text: &str, nvars: usize) -> Result<Self> {
        parse_poly(text, nvars)
    }
}

impl Add for &RationalPoly {
    type Output = RationalPoly;
    fn add(self, rhs: Self) -> RationalPoly {
        self.try_add(rhs).expect("nvars mismatch in polynomial addition")
    }
}

impl Sub for &RationalPoly {
    type Output = RationalPoly;
    fn sub(self, rhs: Self) -> RationalPoly {
        self.try_sub(rhs).expect("nvars mismatch in polynomial subtraction")
    }
}

impl Mul for &RationalPoly {
    type Output = RationalPoly;
    fn mul(self, rhs: Self) -> RationalPoly {
        self.try_mul(rhs, &Limits { max_terms: usize::MAX })
            .expect("nvars mismatch in polynomial multiplication")
    }
}

impl Neg for &RationalPoly {
    type Output = RationalPoly;
    fn neg(self) -> RationalPoly {
        self.scale(&-BigRational::one())
    }
}

fn render(p: &RationalPoly, name: impl Fn(usize) -> String) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (idx, (m, c)) in p.terms.iter().rev().enumerate() {
        let negative = c.is_negative();
        if idx == 0 {
            if negative {
                out.push('-');
            }
        } else {
            out.push_str(if negative { " - " } else { " + " });
        }
        let abs = c.abs();
        if abs.is_integer() {
            out.push_str(&abs.numer().to_string());
        } else {
            out.push_str(&format!("{}/{}", abs.numer(), abs.denom()));
        }
        for (i, &e) in m.0.iter().enumerate() {
            match e {
                0 => {}
                1 => out.push_str(&format!("*{}", name(i))),
                _ => out.push_str(&format!("*{}^{e}", name(i))),
            }
        }
    }
    out
}

impl fmt::Display for RationalPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self, |i| format!("x{i}")))
    }
}

fn parse_poly(text: &str, nvars: usize) -> Result<RationalPoly> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if cleaned.is_empty() {
        return Err(Error::Parse("empty polynomial".into()));
    }
    let bytes: Vec<char> = cleaned.chars().collect();
    let mut pieces: Vec<(bool, String)> = Vec::new();
    let mut current = String::new();
    let mut negative = false;
    for (i, &ch) in bytes.iter().enumerate() {
        if (ch == '+' || ch == '-') && !(i > 0 && bytes[i - 1] == '^') {
            if i == 0 {
                negative = ch == '-';
                continue;
            }
            if current.is_empty() {
                return Err(Error::Parse(format!("dangling sign in '{text}'")));
            }
            pieces.push((negative, std::mem::take(&mut current)));
            negative = ch == '-';
        } else {
            current.push(ch);
        }
    }
    if current.is_empty() {
        return Err(Error::Parse(format!("trailing sign in '{text}'")));
    }
    pieces.push((negative, current));

    let mut p = RationalPoly::zero(nvars);
    for (neg, piece) in pieces {
        let mut coef = BigRational::one();
        let mut exps = vec![0u32; nvars];
        for factor in piece.split('*') {
            if factor.is_empty() {
                return Err(Error::Parse(format!("empty factor in '{piece}'")));
            }
            if let Some(rest) = factor.strip_prefix('x') {
                let (idx, exp) = match rest.split_once('^') {
                    Some((i, e)) => (i, e),
                    None => (rest, "1"),
                };
                let idx: usize = idx
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad variable '{factor}'")))?;
                let exp: u32 = exp
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad exponent in '{factor}'")))?;
                if idx >= nvars {
                    return Err(Error::VarOutOfRange { var: idx, nvars });
                }
                exps[idx] += exp;
            } else {
                coef *= parse_rational(factor)?;
            }
        }
        if neg {
            coef = -coef;
        }
        p.add_term(Monomial(exps), coef);
    }
    Ok(p)
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("bad coefficient '{s}'"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(n, d))
}

/// Float copy of a polynomial for fast evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatPoly {
    terms: Vec<(Vec<u32>, f64)>,
}

impl FloatPoly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |acc, (&k, &xi)| if k == 0 { acc } else { acc * xi.powi(k as i32) })
            })
            .sum()
    }
}

/// A polynomial map acting on the variables `vars` of a common ring.
///
/// For plain fields on ℝⁿ the ring has `n` variables and `vars = 0..n`. For
/// parametric families (coefficients as extra ring variables) `vars` names
/// only the spatial variables; the remaining variables are constants under
/// composition and differentiation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyField {
    components: Vec<RationalPoly>,
    vars: Vec<usize>,
}

impl PolyField {
    pub fn new(components: Vec<RationalPoly>) -> Result<Self> {
        let n = components.len();
        let vars = (0..n).collect();
        Self::with_vars(components, vars)
    }

    pub fn with_vars(components: Vec<RationalPoly>, vars: Vec<usize>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("empty polynomial field".into()));
        }
        if components.len() != vars.len() {
            return Err(Error::ArityMismatch {
                expected: vars.len(),
                found: components.len(),
            });
        }
        let nvars = components[0].nvars;
        if let Some(bad) = components.iter().find(|c| c.nvars != nvars) {
            return Err(Error::ArityMismatch {
                expected: nvars,
                found: bad.nvars,
            });
        }
        for (i, &v) in vars.iter().enumerate() {
            if v >= nvars {
                return Err(Error::VarOutOfRange { var: v, nvars });
            }
            if vars[..i].contains(&v) {
                return Err(Error::InvalidParameter(format!("variable {v} listed twice")));
            }
        }
        Ok(Self { components, vars })
    }

    /// `∇f` with respect to `vars`.
    pub fn gradient(f: &RationalPoly, vars: &[usize]) -> Result<Self> {
        let comps = vars.iter().map(|&v| f.partial(v)).collect::<Result<Vec<_>>>()?;
        Self::with_vars(comps, vars.to_vec())
    }

    /// `x ↦ A x` over a ring of `A.nrows()` variables.
    pub fn linear(a: &RationalMatrix) -> Result<Self> {
        Self::affine(a, &vec![BigRational::zero(); a.nrows()])
    }

    pub fn affine(a: &RationalMatrix, b: &[BigRational]) -> Result<Self> {
        if !a.is_square() || b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        let n = a.nrows();
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let mut p = RationalPoly::constant(n, b[i].clone());
            for j in 0..n {
                let mut e = vec![0; n];
                e[j] = 1;
                p.add_term(Monomial(e), a[(i, j)].clone());
            }
            comps.push(p);
        }
        Self::new(comps)
    }

    pub fn identity_on(nvars: usize, vars: &[usize]) -> Result<Self> {
        let comps = vars
            .iter()
            .map(|&v| RationalPoly::var(nvars, v))
            .collect::<Result<Vec<_>>>()?;
        Self::with_vars(comps, vars.to_vec())
    }

    pub fn components(&self) -> &[RationalPoly] {
        &self.components
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn nvars(&self) -> usize {
        self.components[0].nvars
    }

    /// True when the field acts on every ring variable in order (a plain
    /// field on ℝⁿ rather than a parametric family).
    pub fn is_plain(&self) -> bool {
        self.vars.iter().enumerate().all(|(i, &v)| i == v) && self.vars.len() == self.nvars()
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.vars != other.vars || self.nvars() != other.nvars() {
            return Err(Error::ArityMismatch {
                expected: self.vars.len(),
                found: other.vars.len(),
            });
        }
        Ok(())
    }

    fn substitution(&self, inner: &Self) -> Vec<RationalPoly> {
        let n = self.nvars();
        let mut subs: Vec<RationalPoly> = (0..n)
            .map(|i| RationalPoly::var(n, i).expect("index in range"))
            .collect();
        for (k, &v) in inner.vars.iter().enumerate() {
            subs[v] = inner.components[k].clone();
        }
        subs
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Self, limits: &Limits) -> Result<Self> {
        self.same_shape(inner)?;
        let subs = self.substitution(inner);
        let comps = self
            .components
            .iter()
            .map(|c| c.compose(&subs, limits))
            .collect::<Result<Vec<_>>>()?;
        Self::with_vars(comps, self.vars.clone())
    }

    /// `V^k`, built as `V ∘ V^{k-1}` so the low-degree field stays outermost.
    pub fn iterate(&self, k: u32, limits: &Limits) -> Result<Self> {
        if k == 0 {
            return Self::identity_on(self.nvars(), &self.vars);
        }
        let mut acc = self.clone();
        for _ in 1..k {
            acc = self.compose(&acc, limits)?;
        }
        Ok(acc)
    }

    /// `J[i][j] = ∂V_i/∂x_{vars[j]}`.
    pub fn jacobian(&self) -> Result<Vec<Vec<RationalPoly>>> {
        self.components
            .iter()
            .map(|c| self.vars.iter().map(|&v| c.partial(v)).collect())
            .collect()
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.try_add(b))
            .collect::<Result<Vec<_>>>()?;
        Self::with_vars(comps, self.vars.clone())
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self {
            components: self.components.iter().map(|p| p.scale(c)).collect(),
            vars: self.vars.clone(),
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.to_float_terms().eval(x)).collect()
    }
}

/// Antisymmetric polynomial matrix `J(V^k) − J(V^k)ᵀ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsymmetryMatrix {
    entries: Vec<Vec<RationalPoly>>,
}

impl AsymmetryMatrix {
    pub fn entry(&self, i: usize, j: usize) -> &RationalPoly {
        &self.entries[i][j]
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(RationalPoly::is_zero)
    }

    /// First nonzero entry above the diagonal, row-major.
    pub fn first_nonzero(&self) -> Option<(usize, usize, &RationalPoly)> {
        let n = self.dim();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .find(|&(i, j)| !self.entries[i][j].is_zero())
            .map(|(i, j)| (i, j, &self.entries[i][j]))
    }
}

/// `D_k(V) = J(V^k) − J(V^k)ᵀ`, computed exactly. `V` is k-conservative on
/// ℝⁿ iff every entry is the zero polynomial.
pub fn d_k_poly(v: &PolyField, k: u32, limits: &Limits) -> Result<AsymmetryMatrix> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let vk = v.iterate(k, limits)?;
    let jac = vk.jacobian()?;
    let n = jac.len();
    let mut entries = vec![vec![RationalPoly::zero(v.nvars()); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                entries[i][j] = jac[i][j].try_sub(&jac[j][i])?;
            }
        }
    }
    Ok(AsymmetryMatrix { entries })
}

/// `g(a,b,c,d) = 3ac − b² + 3bd − c²`, which vanishes exactly when the
/// gradient of the binary cubic `ax³ + bx²y + cxy² + dy³` is 2-conservative.
pub fn cubic_gate(a: &BigRational, b: &BigRational, c: &BigRational, d: &BigRational) -> BigRational {
    let three = rat(3);
    &three * a * c - b * b + &three * b * d - c * c
}

/// Off-diagonal gap `(A^k)₁₂ − (A^k)₂₁` for `A = [[a, b], [c, d]]`.
pub fn linear_dk(a: &BigRational, b: &BigRational, c: &BigRational, d: &BigRational, k: u32) -> Result<BigRational> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let m = RationalMatrix::from_rows(vec![vec![a.clone(), b.clone()], vec![c.clone(), d.clone()]])?;
    let p = m.pow(k)?;
    Ok(&p[(0, 1)] - &p[(1, 0)])
}

/// Parametric families over the ring `[a, b, c, d, x, y]` (variables
/// `x0..x5`), with `x, y` as the spatial variables.
pub mod families {
    use super::*;

    pub const NVARS: usize = 6;
    pub const SPATIAL: [usize; 2] = [4, 5];
    pub const NAMES: [&str; 6] = ["a", "b", "c", "d", "x", "y"];

    fn v(i: usize) -> RationalPoly {
        RationalPoly::var(NVARS, i).expect("index in range")
    }

    /// `(ax + by, cx + dy)` with symbolic coefficients.
    pub fn linear_field() -> PolyField {
        let (a, b, c, d, x, y) = (v(0), v(1), v(2), v(3), v(4), v(5));
        PolyField::with_vars(vec![&(&a * &x) + &(&b * &y), &(&c * &x) + &(&d * &y)], SPATIAL.to_vec())
            .expect("valid shape")
    }

    /// `ax³ + bx²y + cxy² + dy³`.
    pub fn binary_cubic() -> RationalPoly {
        let (a, b, c, d, x, y) = (v(0), v(1), v(2), v(3), v(4), v(5));
        let x2 = &x * &x;
        let y2 = &y * &y;
        &(&(&(&a * &(&x2 * &x)) + &(&b * &(&x2 * &y))) + &(&c * &(&x * &y2))) + &(&d * &(&y2 * &y))
    }

    pub fn cubic_gradient_field() -> PolyField {
        PolyField::gradient(&binary_cubic(), &SPATIAL).expect("valid shape")
    }

    /// `3ac − b² + 3bd − c²` in the 6-variable ring.
    pub fn cubic_gate_poly() -> RationalPoly {
        let (a, b, c, d) = (v(0), v(1), v(2), v(3));
        let three = RationalPoly::constant(NVARS, rat(3));
        &(&(&(&three * &(&a * &c)) - &(&b * &b)) + &(&three * &(&b * &d))) - &(&c * &c)
    }

    /// Entry (1,2) of `D_k` for the symbolic linear field; a polynomial in
    /// `a, b, c, d` only.
    pub fn linear_dk_symbolic(k: u32) -> Result<RationalPoly> {
        let m = d_k_poly(&linear_field(), k, &Limits::default())?;
        Ok(m.entry(0, 1).clone())
    }

    /// Coefficients of `D_k(∇f)` (entry (1,2)) for the symbolic binary cubic,
    /// keyed by the `(x, y)` exponents, highest power of `x` first.
    pub fn cubic_dk_coefficients(k: u32) -> Result<Vec<((u32, u32), RationalPoly)>> {
        let m = d_k_poly(&cubic_gradient_field(), k, &Limits::default())?;
        let grouped = m.entry(0, 1).collect_by(&SPATIAL)?;
        let mut out: Vec<((u32, u32), RationalPoly)> = grouped
            .into_iter()
            .map(|(mono, coef)| ((mono.exponents()[0], mono.exponents()[1]), coef))
            .collect();
        out.sort_by(|a, b| b.0 .0.cmp(&a.0 .0).then(a.0 .1.cmp(&b.0 .1)));
        Ok(out)
    }
}

/// Integer value of a rational known to be integral (used in tests and reports).
pub fn as_i64(r: &BigRational) -> Option<i64> {
    if r.is_integer() {
        r.numer().to_i64()
    } else {
        None
    }
}
