//! FedAvg as iteration of the server vector field
//! `V_s = (1/C) Σ_c (I − (I − γ∇f_c)^k)` with update `x ← x − η V_s(x)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::conservatism::{check_numeric, Verdict, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::field::FieldDef;
use crate::glm::{glm_gradient, surrogate_potential, GlmSpec, SurrogateMode};
use crate::linalg::{f64_to_rational, rational_to_f64, serialize_vector, Matrix, RationalMatrix, Vector};
use crate::quadrature::QuadratureOptions;
use crate::sampling::SampleConfig;

#[derive(Debug, Clone)]
pub enum ClientLoss {
    /// `½(x − b)ᵀ A (x − b)`.
    Quadratic { a: Matrix, b: Vector },
    Glm(GlmSpec),
    CustomGradient(FieldDef),
}

#[derive(Debug, Clone)]
pub struct ClientSpec {
    pub label: String,
    loss: ClientLoss,
}

impl ClientSpec {
    pub fn quadratic(label: impl Into<String>, a: Matrix, b: Vector) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                found: a.nrows(),
            });
        }
        let gap = (&a - a.transpose()).amax();
        if gap > 1e-12 {
            return Err(Error::InvalidParameter(format!("quadratic client matrix is not symmetric (gap {gap:e})")));
        }
        if a.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::InvalidParameter("quadratic client matrix is not positive semi-definite".into()));
        }
        Ok(Self {
            label: label.into(),
            loss: ClientLoss::Quadratic { a, b },
        })
    }

    pub fn glm(label: impl Into<String>, spec: GlmSpec) -> Self {
        Self {
            label: label.into(),
            loss: ClientLoss::Glm(spec),
        }
    }

    pub fn custom(label: impl Into<String>, gradient: FieldDef) -> Self {
        Self {
            label: label.into(),
            loss: ClientLoss::CustomGradient(gradient),
        }
    }

    pub fn loss(&self) -> &ClientLoss {
        &self.loss
    }

    pub fn dim(&self) -> usize {
        match &self.loss {
            ClientLoss::Quadratic { b, .. } => b.len(),
            ClientLoss::Glm(s) => s.dim(),
            ClientLoss::CustomGradient(f) => f.dim(),
        }
    }

    pub fn gradient(&self) -> Result<FieldDef> {
        Ok(match &self.loss {
            ClientLoss::Quadratic { a, b } => FieldDef::affine(a.clone(), -(a * b))?,
            ClientLoss::Glm(s) => glm_gradient(s),
            ClientLoss::CustomGradient(f) => f.clone(),
        })
    }

    /// `f_c(x)` when the loss is known in closed form.
    pub fn loss_value(&self, x: &Vector) -> Option<f64> {
        match &self.loss {
            ClientLoss::Quadratic { a, b } => {
                let d = x - b;
                Some(0.5 * d.dot(&(a * &d)))
            }
            ClientLoss::Glm(s) => Some(s.loss(x)),
            ClientLoss::CustomGradient(_) => None,
        }
    }

    /// Smoothness constant β: the largest Hessian eigenvalue for quadratics,
    /// `max‖zᵢ‖² · sup σ''` for GLM clients.
    pub fn smoothness(&self) -> Option<f64> {
        match &self.loss {
            ClientLoss::Quadratic { a, .. } => Some(a.symmetric_eigenvalues().max()),
            ClientLoss::Glm(s) => s.smoothness(),
            ClientLoss::CustomGradient(_) => None,
        }
    }
}

fn check_clients(clients: &[ClientSpec]) -> Result<usize> {
    let n = clients
        .first()
        .map(ClientSpec::dim)
        .ok_or_else(|| Error::InvalidParameter("no clients".into()))?;
    for c in clients {
        if c.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.dim(),
            });
        }
    }
    Ok(n)
}

fn check_step(gamma: f64, k: u32) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("client step size must be positive, got {gamma}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("local steps k must be at least 1".into()));
    }
    Ok(())
}

/// `(I − γ∇f_c)^k` for each client.
fn local_maps(clients: &[ClientSpec], gamma: f64, k: u32) -> Result<Vec<FieldDef>> {
    clients
        .iter()
        .map(|c| FieldDef::iterate(FieldDef::gd_map(c.gradient()?, gamma)?, k))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ServerFieldInfo {
    pub field: FieldDef,
    /// Sampled `k = 1` check of `V_s` when samples were requested.
    pub conservatism: Option<Verdict>,
    pub surrogate_available: bool,
}

fn surrogate_available(clients: &[ClientSpec]) -> bool {
    clients.iter().all(|c| match &c.loss {
        ClientLoss::Quadratic { .. } => true,
        ClientLoss::Glm(s) => s.is_orthogonal(),
        ClientLoss::CustomGradient(_) => false,
    })
}

/// Builds `V_s`, averaging clients in index order.
pub fn build_server_field(
    clients: &[ClientSpec],
    gamma: f64,
    k: u32,
    samples: Option<&SampleConfig>,
) -> Result<ServerFieldInfo> {
    let n = check_clients(clients)?;
    check_step(gamma, k)?;
    let w = 1.0 / clients.len() as f64;
    let terms = local_maps(clients, gamma, k)?
        .into_iter()
        .map(|u| Ok((w, FieldDef::sum(vec![(1.0, FieldDef::identity(n)), (-1.0, u)])?)))
        .collect::<Result<Vec<_>>>()?;
    let field = FieldDef::sum(terms)?;
    let conservatism = match samples {
        Some(s) => Some(check_numeric(&field, 1, s, DEFAULT_THRESHOLD)?),
        None => None,
    };
    Ok(ServerFieldInfo {
        field,
        conservatism,
        surrogate_available: surrogate_available(clients),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointMethod {
    ExactAffineSolve,
    Iterative { iterations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    #[serde(serialize_with = "serialize_vector")]
    pub point: Vector,
    pub method: FixedPointMethod,
}

/// `M` and `r` with `V_s(x) = M x − r` for all-quadratic clients, exactly.
/// Each client contributes `(I − B_c^k)(x − b_c)` with `B_c = I − γA_c`.
fn exact_affine_server(clients: &[(&Matrix, &Vector)], gamma: f64, k: u32) -> Result<(RationalMatrix, Vec<num::BigRational>)> {
    let n = clients[0].1.len();
    let g = f64_to_rational(gamma)?;
    let inv_c = num::BigRational::new(1.into(), clients.len().into());
    let mut m = RationalMatrix::zeros(n, n);
    let mut r = vec![num::BigRational::from_integer(0.into()); n];
    for (a, b) in clients {
        let a = RationalMatrix::from_f64(a)?;
        let step = RationalMatrix::identity(n).add(&a.scale(&-g.clone()))?;
        let contraction = RationalMatrix::identity(n).add(&step.pow(k)?.scale(&num::BigRational::from_integer((-1).into())))?;
        let b = b.iter().map(|v| f64_to_rational(*v)).collect::<Result<Vec<_>>>()?;
        let mb = contraction.mul_vec(&b)?;
        m = m.add(&contraction.scale(&inv_c))?;
        for (ri, v) in r.iter_mut().zip(mb) {
            *ri += v * &inv_c;
        }
    }
    Ok((m, r))
}

fn quadratic_parts(clients: &[ClientSpec]) -> Option<Vec<(&Matrix, &Vector)>> {
    clients
        .iter()
        .map(|c| match &c.loss {
            ClientLoss::Quadratic { a, b } => Some((a, b)),
            _ => None,
        })
        .collect()
}

fn condition_estimate(m: &Matrix) -> f64 {
    let sv = m.singular_values();
    let lo = sv.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / lo
    }
}

/// The server fixed point `x_s*`: an exact affine solve for all-quadratic
/// clients, otherwise the limit of the `η = 1` server recursion from the
/// origin, run until `‖V_s(x)‖ ≤ tol`.
pub fn oracle_fixed_point(clients: &[ClientSpec], gamma: f64, k: u32, opts: &FixedPointOptions) -> Result<FixedPoint> {
    let n = check_clients(clients)?;
    check_step(gamma, k)?;
    if let Some(quads) = quadratic_parts(clients) {
        let (m, r) = exact_affine_server(&quads, gamma, k)?;
        return match m.solve(&r)? {
            Some(x) => Ok(FixedPoint {
                point: Vector::from_iterator(n, x.iter().map(rational_to_f64)),
                method: FixedPointMethod::ExactAffineSolve,
            }),
            None => Err(Error::Singular {
                condition: condition_estimate(&m.to_f64()),
            }),
        };
    }
    let vs = build_server_field(clients, gamma, k, None)?.field;
    let mut x = Vector::zeros(n);
    for it in 0..opts.max_iterations {
        let v = vs.eval(&x)?;
        if v.norm() <= opts.tol {
            return Ok(FixedPoint {
                point: x,
                method: FixedPointMethod::Iterative { iterations: it },
            });
        }
        x -= v;
    }
    let residual = vs.eval(&x)?.norm();
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}

#[derive(Debug, Clone)]
enum SurrogateTerm {
    /// `½(x − b)ᵀ S (x − b)` with `S = I − B^k`.
    Quadratic { s: Matrix, b: Vector },
    /// `γ · P(x)` with `P` the gradient-descent surrogate potential.
    Glm { spec: GlmSpec },
}

/// `f_s = (1/C) Σ q_c` with `∇q_c = I − (I − γ∇f_c)^k`.
#[derive(Debug, Clone)]
pub struct ServerSurrogate {
    terms: Vec<SurrogateTerm>,
    gamma: f64,
    k: u32,
    opts: QuadratureOptions,
}

impl ServerSurrogate {
    pub fn eval(&self, x: &Vector) -> Result<f64> {
        let mut total = 0.0;
        for t in &self.terms {
            total += match t {
                SurrogateTerm::Quadratic { s, b } => {
                    let d = x - b;
                    0.5 * d.dot(&(s * &d))
                }
                SurrogateTerm::Glm { spec } => {
                    let mode = SurrogateMode::GdIterate {
                        gamma: self.gamma,
                        k: self.k,
                    };
                    self.gamma * surrogate_potential(spec, mode, x, &self.opts)?
                }
            };
        }
        Ok(total / self.terms.len() as f64)
    }
}

pub fn server_surrogate(clients: &[ClientSpec], gamma: f64, k: u32) -> Result<ServerSurrogate> {
    let n = check_clients(clients)?;
    check_step(gamma, k)?;
    let terms = clients
        .iter()
        .map(|c| match &c.loss {
            ClientLoss::Quadratic { a, b } => {
                let step = Matrix::identity(n, n) - a * gamma;
                let mut pow = Matrix::identity(n, n);
                for _ in 0..k {
                    pow = &step * pow;
                }
                Ok(SurrogateTerm::Quadratic {
                    s: Matrix::identity(n, n) - pow,
                    b: b.clone(),
                })
            }
            ClientLoss::Glm(spec) if spec.is_orthogonal() => Ok(SurrogateTerm::Glm { spec: spec.clone() }),
            ClientLoss::Glm(spec) => Err(Error::NonOrthogonal {
                residual: spec.gram_residual(),
            }),
            ClientLoss::CustomGradient(_) => Err(Error::Refused(format!(
                "client '{}' has no closed-form surrogate",
                c.label
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ServerSurrogate {
        terms,
        gamma,
        k,
        opts: QuadratureOptions::default(),
    })
}

#[derive(Debug, Clone)]
pub struct FedAvgConfig {
    pub clients: Vec<ClientSpec>,
    pub gamma: f64,
    pub eta: f64,
    pub k: u32,
    pub rounds: usize,
    pub x0: Vector,
    pub seed: u64,
    pub fixed_point: FixedPointOptions,
}

impl FedAvgConfig {
    pub fn validate(&self) -> Result<usize> {
        let n = check_clients(&self.clients)?;
        check_step(self.gamma, self.k)?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("server step size must be positive, got {}", self.eta)));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("need at least one round".into()));
        }
        if self.x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.x0.len(),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iterate: None,
                context: "initial point".into(),
            });
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    #[serde(serialize_with = "serialize_vector")]
    pub x: Vector,
    #[serde(serialize_with = "serialize_vector")]
    pub server_field: Vector,
    pub dist: Option<f64>,
    /// `dist_{t+1} / dist_t`; absent at the last round or when `dist_t` is zero.
    pub ratio: Option<f64>,
    pub fs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FedAvgTrace {
    pub gamma: f64,
    pub eta: f64,
    pub k: u32,
    pub oracle: Option<FixedPoint>,
    pub fs_star: Option<f64>,
    pub rounds: Vec<RoundRecord>,
    /// Largest gap to the plain model-average recursion, at `η = 1`.
    pub max_average_gap: Option<f64>,
    pub truncated: Option<String>,
}

/// Tolerance for the `η = 1` model-average identity, relative to `max(1, ‖x‖∞)`.
pub const AVERAGE_IDENTITY_TOL: f64 = 1e-12;

/// Runs `rounds` server updates. Client maps are evaluated in parallel and
/// averaged in ascending client order.
pub fn run_fedavg(config: &FedAvgConfig) -> Result<FedAvgTrace> {
    let n = config.validate()?;
    let maps = local_maps(&config.clients, config.gamma, config.k)?;
    let w = 1.0 / config.clients.len() as f64;
    let oracle = oracle_fixed_point(&config.clients, config.gamma, config.k, &config.fixed_point).ok();
    let surrogate = server_surrogate(&config.clients, config.gamma, config.k).ok();
    let fs_star = match (&surrogate, &oracle) {
        (Some(s), Some(o)) => Some(s.eval(&o.point)?),
        _ => None,
    };
    let check_average = config.eta == 1.0;

    // V_s(x) and the model average (1/C) Σ U_c(x), from the same client outputs
    let step = |x: &Vector| -> Result<(Vector, Vector)> {
        let outs = maps.par_iter().map(|u| u.eval(x)).collect::<Result<Vec<_>>>()?;
        let mut vs = Vector::zeros(n);
        let mut avg = Vector::zeros(n);
        for u in &outs {
            vs += (x - u) * w;
            avg += u * w;
        }
        Ok((vs, avg))
    };

    let mut rounds = Vec::with_capacity(config.rounds + 1);
    let mut x = config.x0.clone();
    let mut max_gap: Option<f64> = check_average.then_some(0.0);
    let mut truncated = None;
    for t in 0..=config.rounds {
        let (vs, avg) = match step(&x) {
            Ok(v) => v,
            Err(e @ Error::NonFinite { .. }) => {
                truncated = Some(format!("round {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let dist = oracle.as_ref().map(|o| (&x - &o.point).norm());
        let fs = match &surrogate {
            Some(s) => Some(s.eval(&x)?),
            None => None,
        };
        rounds.push(RoundRecord {
            round: t,
            x: x.clone(),
            server_field: vs.clone(),
            dist,
            ratio: None,
            fs,
        });
        if t == config.rounds {
            break;
        }
        let next = &x - &vs * config.eta;
        if let Some(g) = max_gap.as_mut() {
            let scale = x.amax().max(1.0);
            *g = g.max((&next - &avg).amax() / scale);
        }
        if next.iter().any(|v| !v.is_finite()) {
            truncated = Some(format!("round {}: non-finite iterate", t + 1));
            break;
        }
        x = next;
    }
    for t in 1..rounds.len() {
        if let (Some(d), Some(p)) = (rounds[t].dist, rounds[t - 1].dist) {
            if p > 0.0 {
                rounds[t - 1].ratio = Some(d / p);
            }
        }
    }
    if let Some(g) = max_gap {
        if g > AVERAGE_IDENTITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "server update departs from the model average by {g:e}"
            )));
        }
    }
    Ok(FedAvgTrace {
        gamma: config.gamma,
        eta: config.eta,
        k: config.k,
        oracle,
        fs_star,
        rounds,
        max_average_gap: max_gap,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    StronglyConvex,
    Convex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub mode: RateMode,
    pub alpha: f64,
    pub beta: f64,
    pub rho: Option<f64>,
    pub rounds_checked: usize,
    /// `min_t (bound_t − observed_t)`; negative means a violation.
    pub worst_margin: f64,
    pub worst_round: usize,
    pub pass: bool,
    /// Per-round contraction `ratio ≤ ρ^k + 1e−9` (strongly convex mode).
    pub contraction_pass: Option<bool>,
}

pub const RATE_SLACK: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

/// Checks the convergence bound for `mode` against a trace.
/// Refuses unless the trace used the step sizes that bound assumes.
pub fn verify_rate(trace: &FedAvgTrace, alpha: f64, beta: f64, mode: RateMode) -> Result<RateReport> {
    if trace.eta != 1.0 {
        return Err(Error::Refused(format!("rate bounds assume eta = 1, trace used {}", trace.eta)));
    }
    let first = trace.rounds.first().ok_or_else(|| Error::Refused("empty trace".into()))?;
    let d0 = first
        .dist
        .ok_or_else(|| Error::Refused("trace has no oracle distances".into()))?;
    let mut worst_margin = f64::INFINITY;
    let mut worst_round = 0;
    let mut rounds_checked = 0;
    let (rho, contraction_pass) = match mode {
        RateMode::StronglyConvex => {
            if !(alpha > 0.0 && beta >= alpha) {
                return Err(Error::Refused(format!("need 0 < alpha <= beta, got {alpha}, {beta}")));
            }
            let gamma = 2.0 / (alpha + beta);
            if !close(trace.gamma, gamma) {
                return Err(Error::Refused(format!(
                    "strongly convex rate assumes gamma = 2/(alpha+beta) = {gamma}, trace used {}",
                    trace.gamma
                )));
            }
            let rho = (beta - alpha) / (beta + alpha);
            let per_round = rho.powi(trace.k as i32);
            let mut contraction = true;
            for r in &trace.rounds {
                let d = r.dist.ok_or_else(|| Error::Refused("missing oracle distance".into()))?;
                let bound = per_round.powi(r.round as i32) * d0 + RATE_SLACK;
                let margin = bound - d;
                if margin < worst_margin {
                    worst_margin = margin;
                    worst_round = r.round;
                }
                if let Some(q) = r.ratio {
                    if d > 1e-10 && q > per_round + RATE_SLACK {
                        contraction = false;
                    }
                }
                rounds_checked += 1;
            }
            (Some(rho), Some(contraction))
        }
        RateMode::Convex => {
            if beta.is_nan() || beta <= 0.0 {
                return Err(Error::Refused(format!("need beta > 0, got {beta}")));
            }
            if !close(trace.gamma, 1.0 / beta) {
                return Err(Error::Refused(format!(
                    "convex rate assumes gamma = 1/beta = {}, trace used {}",
                    1.0 / beta,
                    trace.gamma
                )));
            }
            let fs_star = trace
                .fs_star
                .ok_or_else(|| Error::Refused("trace has no surrogate values".into()))?;
            for r in trace.rounds.iter().skip(1) {
                let fs = r.fs.ok_or_else(|| Error::Refused("missing surrogate value".into()))?;
                let bound = d0 * d0 / (2.0 * r.round as f64) + RATE_SLACK;
                let margin = bound - (fs - fs_star);
                if margin < worst_margin {
                    worst_margin = margin;
                    worst_round = r.round;
                }
                rounds_checked += 1;
            }
            (None, None)
        }
    };
    Ok(RateReport {
        mode,
        alpha,
        beta,
        rho,
        rounds_checked,
        worst_margin,
        worst_round,
        pass: worst_margin >= 0.0 && contraction_pass != Some(false),
        contraction_pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerComparison {
    /// Server fixed point for the requested `k`.
    pub server: FixedPoint,
    /// Minimizer of the plain average loss (the `k = 1` fixed point).
    pub average: FixedPoint,
    pub distance: f64,
}

pub fn compare_minimizers(clients: &[ClientSpec], gamma: f64, k: u32, opts: &FixedPointOptions) -> Result<MinimizerComparison> {
    let server = oracle_fixed_point(clients, gamma, k, opts)?;
    let average = oracle_fixed_point(clients, gamma, 1, opts)?;
    let distance = (&server.point - &average.point).norm();
    Ok(MinimizerComparison {
        server,
        average,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{iterated_glm_gd, Activation};
    use crate::sampling::orthogonal_directions;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn diag(d: &[f64]) -> Matrix {
        Matrix::from_diagonal(&v(d))
    }

    fn two_symmetric() -> Vec<ClientSpec> {
        vec![
            ClientSpec::quadratic("c1", diag(&[1.0, 1.0]), v(&[1.0, 0.0])).unwrap(),
            ClientSpec::quadratic("c2", diag(&[1.0, 1.0]), v(&[-1.0, 0.0])).unwrap(),
        ]
    }

    fn config(clients: Vec<ClientSpec>, gamma: f64, eta: f64, k: u32, rounds: usize, x0: Vector) -> FedAvgConfig {
        FedAvgConfig {
            clients,
            gamma,
            eta,
            k,
            rounds,
            x0,
            seed: 0,
            fixed_point: FixedPointOptions::default(),
        }
    }

    #[test]
    fn client_validation() {
        assert!(ClientSpec::quadratic("bad", Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), v(&[0.0, 0.0])).is_err());
        assert!(ClientSpec::quadratic("neg", diag(&[1.0, -1.0]), v(&[0.0, 0.0])).is_err());
        let mixed = vec![
            ClientSpec::quadratic("a", diag(&[1.0]), v(&[0.0])).unwrap(),
            ClientSpec::quadratic("b", diag(&[1.0, 1.0]), v(&[0.0, 0.0])).unwrap(),
        ];
        assert!(matches!(build_server_field(&mixed, 0.5, 1, None), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_quadratic_telescopes() {
        let c = vec![ClientSpec::quadratic("c", diag(&[1.0, 1.0]), v(&[0.0, 0.0])).unwrap()];
        for (gamma, k) in [(0.3, 1), (0.3, 4), (1.0, 3)] {
            let vs = build_server_field(&c, gamma, k, None).unwrap().field;
            let x = v(&[0.7, -2.0]);
            let expect = &x * (1.0 - (1.0f64 - gamma).powi(k as i32));
            assert!((vs.eval(&x).unwrap() - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn two_client_example() {
        let info = build_server_field(&two_symmetric(), 0.5, 2, Some(&SampleConfig::default())).unwrap();
        assert!(info.surrogate_available);
        assert!(info.conservatism.unwrap().is_yes());
        let x = v(&[0.4, 1.2]);
        assert!((info.field.eval(&x).unwrap() - &x * 0.75).norm() < 1e-15);
        let fp = oracle_fixed_point(&two_symmetric(), 0.5, 2, &Default::default()).unwrap();
        assert_eq!(fp.point, v(&[0.0, 0.0]));
        assert_eq!(fp.method, FixedPointMethod::ExactAffineSolve);
        let x0 = v(&[1.0, -2.0]);
        let trace = run_fedavg(&config(two_symmetric(), 0.5, 1.0, 2, 10, x0.clone())).unwrap();
        for r in &trace.rounds {
            assert!((&r.x - &x0 * 0.25f64.powi(r.round as i32)).norm() < 1e-15);
        }
        assert_eq!(trace.rounds.len(), 11);
    }

    #[test]
    fn one_round_convergence_when_alpha_equals_beta() {
        let b = v(&[0.3, -0.8, 2.0]);
        let c = vec![ClientSpec::quadratic("c", Matrix::identity(3, 3), b.clone()).unwrap()];
        for k in 1..=3 {
            let trace = run_fedavg(&config(c.clone(), 1.0, 1.0, k, 3, v(&[5.0, 1.0, -1.0]))).unwrap();
            assert!((&trace.rounds[1].x - &b).amax() <= 1e-14);
            let rep = verify_rate(&trace, 1.0, 1.0, RateMode::StronglyConvex).unwrap();
            assert!(rep.pass);
            assert_eq!(rep.rho, Some(0.0));
        }
    }

    #[test]
    fn critical_point_of_single_client_is_fixed_point() {
        let b = v(&[0.25, -1.5]);
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let c = vec![ClientSpec::quadratic("c", a, b.clone()).unwrap()];
        for k in 1..=5 {
            assert_eq!(oracle_fixed_point(&c, 0.4, k, &Default::default()).unwrap().point, b);
        }
    }

    #[test]
    fn heterogeneous_fixed_point_matches_long_run() {
        let c = vec![
            ClientSpec::quadratic("c1", diag(&[1.0, 1.0]), v(&[1.0, 2.0])).unwrap(),
            ClientSpec::quadratic("c2", diag(&[3.0, 1.0]), v(&[-1.0, 0.5])).unwrap(),
        ];
        let fp = oracle_fixed_point(&c, 0.5, 2, &Default::default()).unwrap();
        let trace = run_fedavg(&config(c.clone(), 0.5, 1.0, 2, 200, v(&[4.0, -4.0]))).unwrap();
        assert!((&trace.rounds[200].x - &fp.point).norm() < 1e-12);
        let cmp = compare_minimizers(&c, 0.5, 5, &Default::default()).unwrap();
        assert!(cmp.distance > 1e-6);
        assert!(compare_minimizers(&c, 0.5, 1, &Default::default()).unwrap().distance <= 1e-10);
        let same = vec![c[1].clone(), c[1].clone()];
        let cmp = compare_minimizers(&same, 0.3, 4, &Default::default()).unwrap();
        assert!(cmp.distance <= 1e-12);
        assert!((&cmp.server.point - v(&[-1.0, 0.5])).norm() <= 1e-12);
    }

    #[test]
    fn k1_is_gradient_descent_on_average() {
        let c = vec![
            ClientSpec::quadratic("c1", diag(&[1.0, 2.0]), v(&[1.0, 2.0])).unwrap(),
            ClientSpec::quadratic("c2", Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), v(&[-1.0, 0.5])).unwrap(),
        ];
        let grads: Vec<FieldDef> = c.iter().map(|c| c.gradient().unwrap()).collect();
        let gamma = 0.3;
        let trace = run_fedavg(&config(c, gamma, 1.0, 1, 20, v(&[3.0, 3.0]))).unwrap();
        let mut x = v(&[3.0, 3.0]);
        for r in &trace.rounds {
            assert!((&r.x - &x).amax() <= 1e-12);
            let g = (grads[0].eval(&x).unwrap() + grads[1].eval(&x).unwrap()) * 0.5;
            x -= g * gamma;
        }
        assert!(trace.max_average_gap.unwrap() <= AVERAGE_IDENTITY_TOL);
    }

    #[test]
    fn glm_server_field_matches_closed_form() {
        let specs: Vec<GlmSpec> = (0..3)
            .map(|i| {
                let act = Activation::logistic_label(0.2 + 0.3 * f64::from(i)).unwrap();
                GlmSpec::new(orthogonal_directions(3, 2, 0.5, 1.5, 40 + i as u64), act).unwrap()
            })
            .collect();
        let clients: Vec<ClientSpec> = specs.iter().enumerate().map(|(i, s)| ClientSpec::glm(format!("g{i}"), s.clone())).collect();
        let (gamma, k) = (0.7, 3);
        let vs = build_server_field(&clients, gamma, k, None).unwrap().field;
        let closed: Vec<FieldDef> = specs.iter().map(|s| iterated_glm_gd(s, gamma, k).unwrap()).collect();
        for p in SampleConfig::ball(30, 1.0, 2).points(3) {
            let mut expect = Vector::zeros(3);
            for c in &closed {
                expect += (&p - c.eval(&p).unwrap()) / 3.0;
            }
            assert!((vs.eval(&p).unwrap() - &expect).norm() <= 1e-9 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn surrogate_gradients_match_server_field() {
        let quad = vec![ClientSpec::quadratic("q", diag(&[1.0, 1.0]), v(&[0.0, 0.0])).unwrap()];
        let s = server_surrogate(&quad, 0.5, 2).unwrap();
        let x = v(&[1.0, -2.0]);
        assert!((s.eval(&x).unwrap() - 0.375 * x.norm_squared()).abs() < 1e-15);

        let clients: Vec<ClientSpec> = (0..2)
            .map(|i| {
                let act = Activation::logistic_label(0.3 + 0.4 * f64::from(i)).unwrap();
                ClientSpec::glm(format!("g{i}"), GlmSpec::new(orthogonal_directions(2, 2, 0.5, 1.5, 7 + i as u64), act).unwrap())
            })
            .collect();
        let (gamma, k) = (0.5, 3);
        let s = server_surrogate(&clients, gamma, k).unwrap();
        let vs = build_server_field(&clients, gamma, k, None).unwrap().field;
        let h = 1e-5;
        for p in SampleConfig::ball(10, 1.0, 5).points(2) {
            let g = Vector::from_fn(2, |j, _| {
                let mut a = p.clone();
                let mut b = p.clone();
                a[j] += h;
                b[j] -= h;
                (s.eval(&a).unwrap() - s.eval(&b).unwrap()) / (2.0 * h)
            });
            let want = vs.eval(&p).unwrap();
            assert!((g - &want).norm() <= 1e-6 * want.norm().max(1.0));
        }
        let fp = oracle_fixed_point(&clients, gamma, k, &Default::default()).unwrap();
        assert!(matches!(fp.method, FixedPointMethod::Iterative { .. }));
        let f_star = s.eval(&fp.point).unwrap();
        for dx in [-0.1, 0.0, 0.1] {
            for dy in [-0.1, 0.0, 0.1] {
                assert!(s.eval(&(&fp.point + v(&[dx, dy]))).unwrap() >= f_star - 1e-15);
            }
        }
    }

    #[test]
    fn rate_guards_refuse_wrong_hyperparameters() {
        let c = vec![
            ClientSpec::quadratic("c1", diag(&[1.0, 3.0]), v(&[1.0, 0.0])).unwrap(),
            ClientSpec::quadratic("c2", diag(&[3.0, 1.0]), v(&[0.0, 1.0])).unwrap(),
        ];
        let trace = run_fedavg(&config(c.clone(), 0.4, 1.0, 2, 5, v(&[2.0, 2.0]))).unwrap();
        assert!(matches!(verify_rate(&trace, 1.0, 3.0, RateMode::StronglyConvex), Err(Error::Refused(_))));
        let trace = run_fedavg(&config(c.clone(), 0.5, 0.5, 2, 5, v(&[2.0, 2.0]))).unwrap();
        assert!(trace.max_average_gap.is_none());
        assert!(matches!(verify_rate(&trace, 1.0, 3.0, RateMode::StronglyConvex), Err(Error::Refused(_))));
        let trace = run_fedavg(&config(c, 0.5, 1.0, 2, 30, v(&[2.0, 2.0]))).unwrap();
        let rep = verify_rate(&trace, 1.0, 3.0, RateMode::StronglyConvex).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.rho, Some(0.5));
    }

    #[test]
    fn divergence_truncates_trace() {
        let c = vec![ClientSpec::quadratic("c", diag(&[1.0]), v(&[0.0])).unwrap()];
        let trace = run_fedavg(&config(c, 1e150, 1.0, 3, 50, v(&[1.0]))).unwrap();
        assert!(trace.truncated.is_some());
        assert!(trace.rounds.len() < 51);
    }

    #[test]
    fn deterministic_traces() {
        let clients: Vec<ClientSpec> = (0..4)
            .map(|i| {
                let act = Activation::logistic_label(0.1 + 0.2 * f64::from(i)).unwrap();
                ClientSpec::glm(format!("g{i}"), GlmSpec::new(orthogonal_directions(3, 3, 0.5, 1.5, i as u64), act).unwrap())
            })
            .collect();
        let cfg = config(clients, 0.5, 1.0, 2, 15, v(&[1.0, 1.0, 1.0]));
        assert_eq!(run_fedavg(&cfg).unwrap(), run_fedavg(&cfg).unwrap());
    }
}
