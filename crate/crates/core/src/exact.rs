//! Exact transition matrices, Poisson solutions and asymptotic variances.
//!
//! Every expectation under the stationary chain is a finite double sum
//! over state pairs (or over states and proposal sets) weighted by
//! `π(x)P(x,y)` (resp. `π(x)𝒬(x,A)`). Nothing in this module samples.
//!
//! Notation used in the docs: `F` solves the Poisson equation
//! `F − PF = f − ⟨π,f⟩` with `⟨π,F⟩ = 0`, and `f₀ = f − ⟨π,f⟩`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::matrix::SquareMatrix;
use crate::model::{
    acceptance_matrix, AcceptanceRule, Model, MultiProposalKernel, Proposal, SelectionKernelSpec,
    SelectionMatrix, Subset, TargetDistribution, TOL,
};
use crate::report::JsonObject;

/// Largest admissible `max |F − PF − f₀|`.
pub const POISSON_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("row {state} of P completes to {value} < 0")]
    NegativeDiagonal { state: usize, value: f64 },
    #[error("state {state} is not in proposal set {set}")]
    NotInSet { state: usize, set: Subset },
    #[error("selection weights for ({state}, {set}) have a zero denominator")]
    ZeroDenominator { state: usize, set: Subset },
    #[error("no selection weights given for ({state}, {set})")]
    MissingKappa { state: usize, set: Subset },
    #[error("P is not irreducible; unreachable pairs: {0:?}")]
    NotIrreducible(Vec<(usize, usize)>),
    #[error("Poisson system is singular (residual {residual:e})")]
    Singular { residual: f64 },
    #[error("rho(x,y) + rho(y,x) is not constant: {0}")]
    NotConstantSum(String),
    #[error("function has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("operation requires a {0}-proposal model")]
    WrongKind(&'static str),
}

/// Row-stochastic `P`, reversible with respect to the model's `π`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix(SquareMatrix);

impl TransitionMatrix {
    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `Ph(x) = Σ_y P(x,y) h(y)`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.0.apply(h)
    }

    pub fn row_sum_residual(&self) -> f64 {
        self.0.row_sum_residual()
    }

    /// `max |π(x)P(x,y) − π(y)P(y,x)|`.
    pub fn reversibility_residual(&self, pi: &TargetDistribution) -> f64 {
        let n = self.dim();
        let mut r = 0.0_f64;
        for x in 0..n {
            for y in x + 1..n {
                r = r.max((pi[x] * self.0[(x, y)] - pi[y] * self.0[(y, x)]).abs());
            }
        }
        r
    }

    /// `max |πP − π|`.
    pub fn stationarity_residual(&self, pi: &TargetDistribution) -> f64 {
        self.0
            .left_apply(pi.as_slice())
            .iter()
            .zip(pi.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for TransitionMatrix {
    type Output = f64;
    fn index(&self, ix: (usize, usize)) -> &f64 {
        &self.0[ix]
    }
}

fn check_len(expected: usize, h: &[f64]) -> Result<(), ExactError> {
    if h.len() == expected {
        Ok(())
    } else {
        Err(ExactError::Dimension {
            expected,
            got: h.len(),
        })
    }
}

fn complete_diagonal(mut p: SquareMatrix) -> Result<SquareMatrix, ExactError> {
    for x in 0..p.dim() {
        let off: f64 = (0..p.dim()).filter(|&y| y != x).map(|y| p[(x, y)]).sum();
        let diag = 1.0 - off;
        if diag < -TOL {
            return Err(ExactError::NegativeDiagonal {
                state: x,
                value: diag,
            });
        }
        p[(x, x)] = diag.max(0.0);
    }
    Ok(p)
}

/// `P(x,y) = Q(x,y)ρ(x,y)` off the diagonal, rows completed to 1.
pub fn build_p_single(
    pi: &TargetDistribution,
    q: &SelectionMatrix,
    rule: &AcceptanceRule,
) -> Result<TransitionMatrix, ExactError> {
    let rho = acceptance_matrix(pi, q, rule);
    let n = q.dim();
    let mut p = SquareMatrix::zeros(n);
    for (x, y) in q.admissible_pairs() {
        p[(x, y)] = q.matrix()[(x, y)] * rho[(x, y)];
    }
    complete_diagonal(p).map(TransitionMatrix)
}

/// Selection probabilities `κ(x, A, ·)`, aligned with the sorted states
/// of `set`.
pub fn kappa_of(
    pi: &TargetDistribution,
    kernel: &MultiProposalKernel,
    spec: &SelectionKernelSpec,
    x: usize,
    set: &Subset,
) -> Result<Vec<f64>, ExactError> {
    let Some(px) = set.position(x) else {
        return Err(ExactError::NotInSet {
            state: x,
            set: set.clone(),
        });
    };
    let zero = || ExactError::ZeroDenominator {
        state: x,
        set: set.clone(),
    };
    // π(z)𝒬(z,A) for z ∈ A.
    let w: Vec<f64> = set
        .states()
        .iter()
        .map(|&z| pi[z] * kernel.prob(z, set))
        .collect();
    match spec {
        SelectionKernelSpec::BoltzmannKappa => {
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(zero());
            }
            Ok(w.iter().map(|v| v / total).collect())
        }
        SelectionKernelSpec::MetropolisKappa => {
            let total: f64 = w.iter().sum();
            let mut k = vec![0.0; w.len()];
            for (i, &wy) in w.iter().enumerate() {
                if i == px {
                    continue;
                }
                let others = total - wy - w[px];
                let denom = wy.max(w[px]) + others;
                if denom <= 0.0 {
                    return Err(zero());
                }
                k[i] = wy / denom;
            }
            let off: f64 = k.iter().sum();
            k[px] = 1.0 - off;
            Ok(k)
        }
        SelectionKernelSpec::ExplicitKappa(table) => table
            .get(&(x, set.clone()))
            .cloned()
            .ok_or_else(|| ExactError::MissingKappa {
                state: x,
                set: set.clone(),
            }),
    }
}

/// One proposal set reachable from a state: `𝒬(x,A)` and `κ(x,A,·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub set: Subset,
    pub prob: f64,
    pub kappa: Vec<f64>,
}

impl Branch {
    /// `⟨κ_{x,A}, g⟩`.
    pub fn mean(&self, g: &[f64]) -> f64 {
        self.set
            .states()
            .iter()
            .zip(&self.kappa)
            .map(|(&y, k)| k * g[y])
            .sum()
    }

    /// `Var_{κ_{x,A}}(g)`, evaluated around the mean.
    pub fn variance(&self, g: &[f64]) -> f64 {
        let m = self.mean(g);
        self.set
            .states()
            .iter()
            .zip(&self.kappa)
            .map(|(&y, k)| k * (g[y] - m) * (g[y] - m))
            .sum()
    }
}

/// Per-state branches of a multi-proposal kernel, in file order. Sets with
/// zero probability are dropped.
pub fn kernel_branches(
    pi: &TargetDistribution,
    kernel: &MultiProposalKernel,
    spec: &SelectionKernelSpec,
) -> Result<Vec<Vec<Branch>>, ExactError> {
    (0..kernel.len())
        .map(|x| {
            kernel
                .support(x)
                .iter()
                .filter(|e| e.prob > 0.0)
                .map(|e| {
                    Ok(Branch {
                        set: e.set.clone(),
                        prob: e.prob,
                        kappa: kappa_of(pi, kernel, spec, x, &e.set)?,
                    })
                })
                .collect()
        })
        .collect()
}

/// Branches of a single-proposal model: `{x,y}` with probability
/// `Q(x,y)` and weights `ρ(x,y)` on `y`, `1 − ρ(x,y)` on `x`; `{x}` with
/// probability `Q(x,x)`.
pub fn single_branches(
    pi: &TargetDistribution,
    q: &SelectionMatrix,
    rule: &AcceptanceRule,
) -> Vec<Vec<Branch>> {
    let rho = acceptance_matrix(pi, q, rule);
    let qm = q.matrix();
    (0..q.dim())
        .map(|x| {
            (0..q.dim())
                .filter(|&y| qm[(x, y)] > 0.0)
                .map(|y| {
                    let (states, kappa) = match y.cmp(&x) {
                        std::cmp::Ordering::Equal => (vec![x], vec![1.0]),
                        std::cmp::Ordering::Greater => (vec![x, y], vec![1.0 - rho[(x, y)], rho[(x, y)]]),
                        std::cmp::Ordering::Less => (vec![y, x], vec![rho[(x, y)], 1.0 - rho[(x, y)]]),
                    };
                    Branch {
                        set: Subset::new(states).expect("distinct states"),
                        prob: qm[(x, y)],
                        kappa,
                    }
                })
                .collect()
        })
        .collect()
}

/// Branches of any model.
pub fn model_branches(model: &Model) -> Result<Vec<Vec<Branch>>, ExactError> {
    match model.proposal() {
        Proposal::Single { q, rule } => Ok(single_branches(model.pi(), q, rule)),
        Proposal::Multi { kernel, selection } => kernel_branches(model.pi(), kernel, selection),
    }
}

fn p_from_branches(n: usize, branches: &[Vec<Branch>]) -> SquareMatrix {
    let mut p = SquareMatrix::zeros(n);
    for (x, bs) in branches.iter().enumerate() {
        for b in bs {
            for (&y, k) in b.set.states().iter().zip(&b.kappa) {
                p[(x, y)] += b.prob * k;
            }
        }
    }
    p
}

/// `P(x,y) = Σ_{A ∋ x,y} 𝒬(x,A)κ(x,A,y)`; fails unless `P` is
/// irreducible.
pub fn build_p_multi(
    pi: &TargetDistribution,
    kernel: &MultiProposalKernel,
    spec: &SelectionKernelSpec,
) -> Result<TransitionMatrix, ExactError> {
    let branches = kernel_branches(pi, kernel, spec)?;
    let p = p_from_branches(kernel.len(), &branches);
    let missing = crate::model::unreachable_pairs(p.dim(), |x, y| p[(x, y)] > 0.0);
    if !missing.is_empty() {
        return Err(ExactError::NotIrreducible(missing));
    }
    Ok(TransitionMatrix(p))
}

/// Transition matrix of any model.
pub fn transition_matrix(model: &Model) -> Result<TransitionMatrix, ExactError> {
    match model.proposal() {
        Proposal::Single { q, rule } => build_p_single(model.pi(), q, rule),
        Proposal::Multi { kernel, selection } => build_p_multi(model.pi(), kernel, selection),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonSolution {
    /// `f₀ = f − ⟨π,f⟩`.
    pub f_centered: Vec<f64>,
    /// `F`, normalized so that `⟨π,F⟩ = 0`.
    pub solution: Vec<f64>,
    /// `max |F − PF − f₀|`.
    pub residual: f64,
}

/// Solves `F − PF = f − ⟨π,f⟩` with `⟨π,F⟩ = 0`.
///
/// The singular system `(I − P)F = f₀` is made square and regular by
/// replacing the row of the largest `π(x)` with the normalization
/// constraint, then solved by LU with partial pivoting.
pub fn solve_poisson(
    p: &TransitionMatrix,
    pi: &TargetDistribution,
    f: &[f64],
) -> Result<PoissonSolution, ExactError> {
    let n = p.dim();
    check_len(n, f)?;
    let f0 = pi.center(f);

    let pivot_row = (0..n)
        .max_by(|&a, &b| pi[a].total_cmp(&pi[b]))
        .expect("non-empty state space");
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for x in 0..n {
        if x == pivot_row {
            for y in 0..n {
                a[(x, y)] = pi[y];
            }
            continue;
        }
        for y in 0..n {
            a[(x, y)] = -p[(x, y)];
        }
        a[(x, x)] += 1.0;
        rhs[x] = f0[x];
    }
    let solved = a
        .lu()
        .solve(&rhs)
        .ok_or(ExactError::Singular { residual: f64::INFINITY })?;
    let mut solution: Vec<f64> = solved.iter().copied().collect();
    let shift = pi.mean(&solution);
    solution.iter_mut().for_each(|v| *v -= shift);

    let pf = p.apply(&solution);
    let residual = (0..n)
        .map(|x| (solution[x] - pf[x] - f0[x]).abs())
        .fold(0.0, f64::max);
    if residual.is_nan() || residual >= POISSON_TOL {
        return Err(ExactError::Singular { residual });
    }
    Ok(PoissonSolution {
        f_centered: f0,
        solution,
        residual,
    })
}

/// `σ(f)² = ⟨π,F²⟩ − ⟨π,(PF)²⟩`.
pub fn sigma2(pi: &TargetDistribution, p: &TransitionMatrix, f: &[f64]) -> Result<f64, ExactError> {
    let sol = solve_poisson(p, pi, f)?;
    Ok(sigma2_from(pi, p, &sol.solution))
}

fn sigma2_from(pi: &TargetDistribution, p: &TransitionMatrix, big_f: &[f64]) -> f64 {
    let pf = p.apply(big_f);
    let sq = |h: &[f64]| h.iter().map(|v| v * v).collect::<Vec<_>>();
    pi.mean(&sq(big_f)) - pi.mean(&sq(&pf))
}

/// `σ(f,ψ)²` of the single-proposal estimator `I_n(f) + J_n(ψ)`:
///
/// `σ(f)² − E_π[(1−ρ(X₀,X₁))(F(X₁)−F(X₀))²]
///        + E_π[(1−ρ(X₀,X₁))(ψ(X₁)−F(X₁)−ψ(X₀)+F(X₀))²]`.
pub fn sigma2_cv_single(
    pi: &TargetDistribution,
    q: &SelectionMatrix,
    rule: &AcceptanceRule,
    f: &[f64],
    psi: &[f64],
) -> Result<f64, ExactError> {
    check_len(q.dim(), psi)?;
    let p = build_p_single(pi, q, rule)?;
    let rho = acceptance_matrix(pi, q, rule);
    let big_f = solve_poisson(&p, pi, f)?.solution;
    let base = sigma2_from(pi, &p, &big_f);
    let n = q.dim();
    let (mut drop, mut add) = (0.0, 0.0);
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let w = pi[x] * p[(x, y)] * (1.0 - rho[(x, y)]);
            let df = big_f[y] - big_f[x];
            let dg = psi[y] - big_f[y] - psi[x] + big_f[x];
            drop += w * df * df;
            add += w * dg * dg;
        }
    }
    Ok(base - drop + add)
}

/// `Σ_x π(x) Σ_A 𝒬(x,A) [Var_κ(ψ − F) − Var_κ(F)]`.
fn cv_correction(pi: &TargetDistribution, branches: &[Vec<Branch>], psi: &[f64], big_f: &[f64]) -> f64 {
    let diff: Vec<f64> = psi.iter().zip(big_f).map(|(a, b)| a - b).collect();
    branches
        .iter()
        .enumerate()
        .map(|(x, bs)| {
            pi[x]
                * bs.iter()
                    .map(|b| b.prob * (b.variance(&diff) - b.variance(big_f)))
                    .sum::<f64>()
        })
        .sum()
}

/// `σ(f,ψ)²` of the multi-proposal estimator `I_n(f) + 𝒥_n(ψ)`:
/// `σ(f)² + Σ_{x,A} π(x)𝒬(x,A)[Var_{κ_{x,A}}(ψ−F) − Var_{κ_{x,A}}(F)]`.
pub fn sigma2_cv_multi(
    pi: &TargetDistribution,
    kernel: &MultiProposalKernel,
    spec: &SelectionKernelSpec,
    f: &[f64],
    psi: &[f64],
) -> Result<f64, ExactError> {
    check_len(kernel.len(), psi)?;
    let branches = kernel_branches(pi, kernel, spec)?;
    let p = build_p_multi(pi, kernel, spec)?;
    let big_f = solve_poisson(&p, pi, f)?.solution;
    Ok(sigma2_from(pi, &p, &big_f) + cv_correction(pi, &branches, psi, &big_f))
}

fn sigma2_opt_from(pi: &TargetDistribution, branches: &[Vec<Branch>], big_f: &[f64]) -> f64 {
    branches
        .iter()
        .enumerate()
        .map(|(x, bs)| {
            let second: f64 = bs.iter().map(|b| b.prob * b.mean(big_f).powi(2)).sum();
            let first: f64 = bs.iter().map(|b| b.prob * b.mean(big_f)).sum();
            pi[x] * (second - first * first)
        })
        .sum()
}

/// Minimal asymptotic variance `σ(f,F)²`:
/// `Σ_x π(x) [Σ_A 𝒬(x,A)⟨κ_{x,A},F⟩² − (Σ_A 𝒬(x,A)⟨κ_{x,A},F⟩)²]`.
pub fn sigma2_opt(pi: &TargetDistribution, proposal: &Proposal, f: &[f64]) -> Result<f64, ExactError> {
    let (branches, p) = match proposal {
        Proposal::Single { q, rule } => (single_branches(pi, q, rule), build_p_single(pi, q, rule)?),
        Proposal::Multi { kernel, selection } => (
            kernel_branches(pi, kernel, selection)?,
            build_p_multi(pi, kernel, selection)?,
        ),
    };
    let big_f = solve_poisson(&p, pi, f)?.solution;
    Ok(sigma2_opt_from(pi, &branches, &big_f))
}

/// `Var_π(f)`, or `None` when `max |f₀| < 1e−12`.
fn nonconstant_variance(pi: &TargetDistribution, f: &[f64]) -> Option<f64> {
    let spread = pi.center(f).iter().map(|v| v.abs()).fold(0.0, f64::max);
    (spread >= TOL).then(|| pi.variance(f))
}

/// Optimal coefficient `b★ = Var_π(f) / ⟨π, f² − fPf⟩` of the control
/// variate `b·J_n(f)`. `None` for constant `f`.
pub fn b_star(pi: &TargetDistribution, p: &TransitionMatrix, f: &[f64]) -> Option<f64> {
    let var = nonconstant_variance(pi, f)?;
    let f0 = pi.center(f);
    let pf0 = p.apply(&f0);
    let denom: f64 = (0..f0.len()).map(|x| pi[x] * f0[x] * (f0[x] - pf0[x])).sum();
    Some(var / denom)
}

/// `Δ(f) = ½ Σ_{x,y} π(x)P(x,y)(f₀(x) + f₀(y))²`.
pub fn delta_f(pi: &TargetDistribution, p: &TransitionMatrix, f: &[f64]) -> f64 {
    let f0 = pi.center(f);
    let n = p.dim();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let s = f0[x] + f0[y];
            acc += pi[x] * p[(x, y)] * s * s;
        }
    }
    0.5 * acc
}

/// Asymptotic variance of `I_n(f) + (1/n)Σ (E[ψ(X_{k+1}) | X_k] − ψ(X_{k+1}))`
/// with the conditional expectation taken given `X_k` only:
/// `σ(f,ψ)² + Σ_x π(x)[Var_{𝒬(x,·)}(κψ_x − κF_x) − Var_{𝒬(x,·)}(κF_x)]`.
pub fn sigma2_tilde(
    pi: &TargetDistribution,
    kernel: &MultiProposalKernel,
    spec: &SelectionKernelSpec,
    f: &[f64],
    psi: &[f64],
) -> Result<f64, ExactError> {
    check_len(kernel.len(), psi)?;
    let branches = kernel_branches(pi, kernel, spec)?;
    let p = build_p_multi(pi, kernel, spec)?;
    let big_f = solve_poisson(&p, pi, f)?.solution;
    Ok(sigma2_tilde_from(pi, &p, &branches, psi, &big_f))
}

fn sigma2_tilde_from(
    pi: &TargetDistribution,
    p: &TransitionMatrix,
    branches: &[Vec<Branch>],
    psi: &[f64],
    big_f: &[f64],
) -> f64 {
    let cv = sigma2_from(pi, p, big_f) + cv_correction(pi, branches, psi, big_f);
    // Var over 𝒬(x,·) of A ↦ φ(A), around its mean.
    let var_q = |bs: &[Branch], phi: &dyn Fn(&Branch) -> f64| {
        let m: f64 = bs.iter().map(|b| b.prob * phi(b)).sum();
        bs.iter().map(|b| b.prob * (phi(b) - m).powi(2)).sum::<f64>()
    };
    let extra: f64 = branches
        .iter()
        .enumerate()
        .map(|(x, bs)| {
            let diff = var_q(bs, &|b| b.mean(psi) - b.mean(big_f));
            let base = var_q(bs, &|b| b.mean(big_f));
            pi[x] * (diff - base)
        })
        .sum();
    cv + extra
}

/// The constant `α = ρ(x,y) + ρ(y,x)` over admissible pairs, if it
/// exists.
pub fn constant_sum_alpha(
    pi: &TargetDistribution,
    q: &SelectionMatrix,
    rule: &AcceptanceRule,
) -> Result<f64, ExactError> {
    let rho = acceptance_matrix(pi, q, rule);
    let mut pairs = q.admissible_pairs();
    let first = pairs
        .next()
        .ok_or_else(|| ExactError::NotConstantSum("no admissible pairs".into()))?;
    let alpha = match rule {
        AcceptanceRule::AlphaBarker { alpha } => *alpha,
        _ => rho[first] + rho[(first.1, first.0)],
    };
    for (x, y) in std::iter::once(first).chain(pairs) {
        let s = rho[(x, y)] + rho[(y, x)];
        if (s - alpha).abs() > TOL {
            return Err(ExactError::NotConstantSum(format!(
                "rho({x},{y}) + rho({y},{x}) = {s}, expected {alpha}"
            )));
        }
    }
    Ok(alpha)
}

/// `⟨π, hPh + (α−1)h²⟩` for a constant-sum single-proposal model.
pub fn hph_form(
    pi: &TargetDistribution,
    q: &SelectionMatrix,
    rule: &AcceptanceRule,
    h: &[f64],
) -> Result<f64, ExactError> {
    check_len(q.dim(), h)?;
    let alpha = constant_sum_alpha(pi, q, rule)?;
    let p = build_p_single(pi, q, rule)?;
    let ph = p.apply(h);
    Ok((0..h.len())
        .map(|x| pi[x] * (h[x] * ph[x] + (alpha - 1.0) * h[x] * h[x]))
        .sum())
}

/// Exact variances for one observable `f` (and optionally one `ψ`).
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport {
    pub sigma2: f64,
    pub sigma2_cv: Option<f64>,
    pub sigma2_opt: f64,
    pub delta_f: f64,
    pub b_star: Option<f64>,
    pub var_pi_f: f64,
    pub sigma2_tilde: Option<f64>,
}

impl VarianceReport {
    pub fn to_json(&self) -> String {
        let mut o = JsonObject::new();
        o.num("sigma2", self.sigma2);
        o.opt_num("sigma2_cv", self.sigma2_cv);
        o.num("sigma2_opt", self.sigma2_opt);
        o.num("delta_f", self.delta_f);
        o.opt_num("b_star", self.b_star);
        o.num("var_pi_f", self.var_pi_f);
        o.opt_num("sigma2_tilde", self.sigma2_tilde);
        o.render()
    }
}

/// Computes every closed-form quantity for `model` and `f`. With `psi`,
/// `sigma2_cv` is `σ(f,ψ)²`; `tilde` additionally evaluates `σ̃(f,ψ)²`
/// (with `ψ = 0` when absent).
pub fn variance_report(
    model: &Model,
    f: &[f64],
    psi: Option<&[f64]>,
    tilde: bool,
) -> Result<VarianceReport, ExactError> {
    let n = model.size();
    check_len(n, f)?;
    if let Some(psi) = psi {
        check_len(n, psi)?;
    }
    let pi = model.pi();
    let p = transition_matrix(model)?;
    let branches = model_branches(model)?;
    let big_f = solve_poisson(&p, pi, f)?.solution;
    let s2 = sigma2_from(pi, &p, &big_f);
    let sigma2_cv = match (psi, model.proposal()) {
        (None, _) => None,
        (Some(psi), Proposal::Single { q, rule }) => Some(sigma2_cv_single(pi, q, rule, f, psi)?),
        (Some(psi), Proposal::Multi { .. }) => Some(s2 + cv_correction(pi, &branches, psi, &big_f)),
    };
    let zero = vec![0.0; n];
    let sigma2_tilde =
        tilde.then(|| sigma2_tilde_from(pi, &p, &branches, psi.unwrap_or(&zero), &big_f));
    Ok(VarianceReport {
        sigma2: s2,
        sigma2_cv,
        sigma2_opt: sigma2_opt_from(pi, &branches, &big_f),
        delta_f: delta_f(pi, &p, f),
        b_star: b_star(pi, &p, f),
        var_pi_f: pi.variance(f),
        sigma2_tilde,
    })
}
