//! Finite-state targets, proposal mechanisms and acceptance rules.
//!
//! A [`Model`] is a finite state space, a target distribution `π` with
//! strictly positive mass on every state, and exactly one proposal
//! mechanism:
//!
//! * single proposal: a selection matrix `Q` and an [`AcceptanceRule`]
//!   producing acceptance probabilities `ρ(x,y)`;
//! * multi proposal: a kernel `𝒬(x, ·)` over proposal sets containing `x`
//!   together with a selection kernel `κ(x, A, ·)` on each set.
//!
//! Models are immutable once built and every constructor validates.

mod file;
mod validate;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::matrix::SquareMatrix;
use crate::number::NumberError;

pub use file::{load_function, load_model, parse_model};
pub use validate::{validate_model, Check, ValidationReport};
pub(crate) use validate::unreachable_pairs;

/// Absolute tolerance used for all exact-identity checks.
pub const TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Number(#[from] NumberError),
    #[error("invalid model structure: {0}")]
    Structure(String),
    #[error("model failed validation: {}", .0.failures().collect::<Vec<_>>().join("; "))]
    Validation(ValidationReport),
}

/// Ordered, pairwise distinct state labels.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl StateSpace {
    /// Fails on duplicate labels. Size is checked by validation, so a
    /// one-state space can still be constructed and reported on.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(ModelError::Structure(format!("duplicate state label `{l}`")));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// Target probability `π` indexed by state.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetDistribution(Vec<f64>);

impl TargetDistribution {
    pub fn new(pi: Vec<f64>) -> Self {
        Self(pi)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `⟨π, h⟩`.
    pub fn mean(&self, h: &[f64]) -> f64 {
        crate::matrix::dot(&self.0, h)
    }

    /// `h − ⟨π, h⟩`. Exactly zero for constant `h`, even though `Σπ` may
    /// differ from 1 in the last bit.
    pub fn center(&self, h: &[f64]) -> Vec<f64> {
        if h.iter().all(|&v| v == h[0]) {
            return vec![0.0; h.len()];
        }
        let m = self.mean(h);
        h.iter().map(|v| v - m).collect()
    }

    /// `Var_π(h) = ⟨π, h²⟩ − ⟨π, h⟩²`, computed on the centered function.
    pub fn variance(&self, h: &[f64]) -> f64 {
        self.0.iter().zip(self.center(h)).map(|(p, v)| p * v * v).sum()
    }
}

impl std::ops::Index<usize> for TargetDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Proposal matrix of the single-proposal algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionMatrix(SquareMatrix);

impl SelectionMatrix {
    pub fn new(q: SquareMatrix) -> Self {
        Self(q)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Whether `(x, y)` is an off-diagonal pair carrying an acceptance
    /// probability, i.e. `x ≠ y` and `Q(x,y) > 0`.
    pub fn admissible(&self, x: usize, y: usize) -> bool {
        x != y && self.0[(x, y)] > 0.0
    }

    pub fn admissible_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.dim();
        (0..n)
            .flat_map(move |x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| self.admissible(x, y))
    }
}

/// How acceptance probabilities are obtained from `(π, Q)`.
#[derive(Clone, Debug, PartialEq)]
pub enum AcceptanceRule {
    /// `γ(u) = min(1, u)`.
    Metropolis,
    /// `γ(u) = α u / (1 + u)`; `α = 1` is the Barker (Boltzmann) rule.
    AlphaBarker { alpha: f64 },
    /// Acceptance probabilities given directly. Only admissible pairs are
    /// read.
    ExplicitRho(SquareMatrix),
}

impl AcceptanceRule {
    /// Evaluates `γ(u)`. `None` for [`AcceptanceRule::ExplicitRho`].
    pub fn gamma(&self, u: f64) -> Option<f64> {
        match self {
            AcceptanceRule::Metropolis => Some(u.min(1.0)),
            AcceptanceRule::AlphaBarker { alpha } => Some(alpha * u / (1.0 + u)),
            AcceptanceRule::ExplicitRho(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AcceptanceRule::Metropolis => "metropolis",
            AcceptanceRule::AlphaBarker { .. } => "alpha_barker",
            AcceptanceRule::ExplicitRho(_) => "explicit",
        }
    }
}

/// Acceptance matrix `ρ` for a single-proposal model. Off-diagonal
/// entries with `Q(x,y) = 0` are 0, diagonal entries are 1 (proposing the
/// current state always leaves it unchanged).
pub fn acceptance_matrix(
    pi: &TargetDistribution,
    q: &SelectionMatrix,
    rule: &AcceptanceRule,
) -> SquareMatrix {
    let n = q.dim();
    let qm = q.matrix();
    let mut rho = SquareMatrix::zeros(n);
    for x in 0..n {
        rho[(x, x)] = 1.0;
    }
    for (x, y) in q.admissible_pairs() {
        rho[(x, y)] = match rule {
            AcceptanceRule::ExplicitRho(r) => r[(x, y)],
            _ => {
                let ratio = (pi[y] * qm[(y, x)]) / (pi[x] * qm[(x, y)]);
                rule.gamma(ratio).expect("rule has γ")
            }
        };
    }
    rho
}

/// A proposal set: a non-empty sorted list of distinct state indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset(Vec<usize>);

impl Subset {
    /// Canonicalizes by sorting. Fails on empty input or repeated states.
    pub fn new(mut states: Vec<usize>) -> Result<Self, ModelError> {
        states.sort_unstable();
        if states.is_empty() {
            return Err(ModelError::Structure("empty proposal set".into()));
        }
        if states.windows(2).any(|w| w[0] == w[1]) {
            return Err(ModelError::Structure(format!(
                "proposal set {states:?} repeats a state"
            )));
        }
        Ok(Self(states))
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    pub fn position(&self, x: usize) -> Option<usize> {
        self.0.binary_search(&x).ok()
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "}}")
    }
}

/// One entry of `𝒬(x, ·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalSet {
    pub set: Subset,
    pub prob: f64,
}

/// The multi-proposal kernel `𝒬`: for each state, its proposal sets in
/// file order.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiProposalKernel {
    support: Vec<Vec<ProposalSet>>,
}

impl MultiProposalKernel {
    pub fn new(support: Vec<Vec<ProposalSet>>) -> Self {
        Self { support }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self, x: usize) -> &[ProposalSet] {
        &self.support[x]
    }

    /// `𝒬(x, A)`, zero when `A` is not listed for `x`.
    pub fn prob(&self, x: usize, set: &Subset) -> f64 {
        self.support[x]
            .iter()
            .filter(|e| &e.set == set)
            .map(|e| e.prob)
            .sum()
    }

    /// Every distinct set proposed from at least one state.
    pub fn all_sets(&self) -> Vec<Subset> {
        let mut sets: Vec<Subset> = self
            .support
            .iter()
            .flatten()
            .map(|e| e.set.clone())
            .collect();
        sets.sort();
        sets.dedup();
        sets
    }
}

/// Table of explicit selection probabilities, keyed by `(x, A)`; each
/// vector is aligned with the sorted states of `A`.
pub type KappaTable = HashMap<(usize, Subset), Vec<f64>>;

/// How the next state is chosen inside a proposal set.
#[derive(Clone, Debug, PartialEq)]
pub enum SelectionKernelSpec {
    /// Generalized Metropolis selection `κ^M`.
    MetropolisKappa,
    /// Boltzmann selection `κ^B`, independent of the starting point.
    BoltzmannKappa,
    ExplicitKappa(KappaTable),
}

impl SelectionKernelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionKernelSpec::MetropolisKappa => "metropolis",
            SelectionKernelSpec::BoltzmannKappa => "boltzmann",
            SelectionKernelSpec::ExplicitKappa(_) => "explicit",
        }
    }
}

/// A real function on the state space (`f`, `ψ`, `h`, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct StateFunction(Vec<f64>);

impl StateFunction {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Structure(format!(
                "function value at state {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn constant(value: f64, len: usize) -> Self {
        Self(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for StateFunction {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Proposal {
    Single {
        q: SelectionMatrix,
        rule: AcceptanceRule,
    },
    Multi {
        kernel: MultiProposalKernel,
        selection: SelectionKernelSpec,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    states: StateSpace,
    pi: TargetDistribution,
    proposal: Proposal,
}

impl Model {
    /// Builds and validates a model.
    pub fn new(
        states: StateSpace,
        pi: TargetDistribution,
        proposal: Proposal,
    ) -> Result<Self, ModelError> {
        let m = Self::unchecked(states, pi, proposal)?;
        let report = validate_model(&m);
        if report.passed() {
            Ok(m)
        } else {
            Err(ModelError::Validation(report))
        }
    }

    /// Checks dimensions only. The result may violate model invariants;
    /// run [`validate_model`] before using it.
    pub fn unchecked(
        states: StateSpace,
        pi: TargetDistribution,
        proposal: Proposal,
    ) -> Result<Self, ModelError> {
        let n = states.len();
        if pi.len() != n {
            return Err(ModelError::Structure(format!(
                "pi has {} entries for {n} states",
                pi.len()
            )));
        }
        match &proposal {
            Proposal::Single { q, rule } => {
                if q.dim() != n {
                    return Err(ModelError::Structure(format!(
                        "Q is {0}x{0} for {n} states",
                        q.dim()
                    )));
                }
                if let AcceptanceRule::ExplicitRho(r) = rule {
                    if r.dim() != n {
                        return Err(ModelError::Structure(format!(
                            "rho is {0}x{0} for {n} states",
                            r.dim()
                        )));
                    }
                }
            }
            Proposal::Multi { kernel, selection } => {
                if kernel.len() != n {
                    return Err(ModelError::Structure(format!(
                        "kernel lists {} states for {n} states",
                        kernel.len()
                    )));
                }
                let in_range = |s: &Subset| s.states().iter().all(|&i| i < n);
                if !kernel.support.iter().flatten().all(|e| in_range(&e.set)) {
                    return Err(ModelError::Structure("proposal set index out of range".into()));
                }
                if let SelectionKernelSpec::ExplicitKappa(t) = selection {
                    for ((x, a), w) in t {
                        if *x >= n || !in_range(a) || w.len() != a.len() {
                            return Err(ModelError::Structure(format!(
                                "malformed selection table entry for ({x}, {a})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self {
            states,
            pi,
            proposal,
        })
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn pi(&self) -> &TargetDistribution {
        &self.pi
    }

    pub fn proposal(&self) -> &Proposal {
        &self.proposal
    }

    pub fn size(&self) -> usize {
        self.states.len()
    }

    pub fn is_single(&self) -> bool {
        matches!(self.proposal, Proposal::Single { .. })
    }

    /// The multi-proposal form of a single-proposal model: `𝒬(x,{x,y}) =
    /// Q(x,y)` and `κ(x,{x,y},y) = ρ(x,y)` for `y ≠ x`, plus `{x}` with
    /// weight `Q(x,x)`. Multi-proposal models are returned unchanged.
    pub fn pair_set_embedding(&self) -> Model {
        let Proposal::Single { q, rule } = &self.proposal else {
            return self.clone();
        };
        let n = self.size();
        let rho = acceptance_matrix(&self.pi, q, rule);
        let qm = q.matrix();
        let mut support = Vec::with_capacity(n);
        let mut table = KappaTable::new();
        for x in 0..n {
            let mut sets = Vec::new();
            for y in 0..n {
                if qm[(x, y)] <= 0.0 {
                    continue;
                }
                let set = Subset::new(if x == y { vec![x] } else { vec![x, y] })
                    .expect("distinct states");
                let weights = if x == y {
                    vec![1.0]
                } else {
                    let r = rho[(x, y)];
                    if x < y {
                        vec![1.0 - r, r]
                    } else {
                        vec![r, 1.0 - r]
                    }
                };
                table.insert((x, set.clone()), weights);
                sets.push(ProposalSet {
                    set,
                    prob: qm[(x, y)],
                });
            }
            support.push(sets);
        }
        Model {
            states: self.states.clone(),
            pi: self.pi.clone(),
            proposal: Proposal::Multi {
                kernel: MultiProposalKernel::new(support),
                selection: SelectionKernelSpec::ExplicitKappa(table),
            },
        }
    }

    /// Resolves a function given as `label → value` pairs. Every state
    /// must appear exactly once.
    pub fn function_from_labels<'a>(
        &self,
        entries: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<StateFunction, ModelError> {
        let mut values = vec![None; self.size()];
        for (label, v) in entries {
            let i = self
                .states
                .index_of(label)
                .ok_or_else(|| ModelError::Structure(format!("unknown state `{label}`")))?;
            if values[i].replace(v).is_some() {
                return Err(ModelError::Structure(format!("state `{label}` given twice")));
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    ModelError::Structure(format!("missing value for state `{}`", self.states.label(i)))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        StateFunction::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_canonical() {
        let a = Subset::new(vec![2, 0, 1]).unwrap();
        assert_eq!(a.states(), &[0, 1, 2]);
        assert_eq!(a, Subset::new(vec![0, 1, 2]).unwrap());
        assert_eq!(a.position(2), Some(2));
        assert!(Subset::new(vec![1, 1]).is_err());
        assert!(Subset::new(vec![]).is_err());
    }

    #[test]
    fn gamma_symmetry() {
        for rule in [
            AcceptanceRule::Metropolis,
            AcceptanceRule::AlphaBarker { alpha: 1.0 },
            AcceptanceRule::AlphaBarker { alpha: 0.3 },
        ] {
            for u in [0.01, 0.4, 1.0, 2.5, 70.0] {
                let lhs = rule.gamma(u).unwrap();
                let rhs = u * rule.gamma(1.0 / u).unwrap();
                assert!((lhs - rhs).abs() < 1e-15, "{rule:?} u={u}");
            }
        }
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(StateSpace::new(["a", "b", "a"]).is_err());
    }

    #[test]
    fn function_labels_must_be_complete() {
        let m = crate::bench::counterexample_model();
        assert!(m.function_from_labels([("a", 1.0), ("b", 2.0)]).is_err());
        assert!(m
            .function_from_labels([("a", 1.0), ("b", 2.0), ("z", 0.0)])
            .is_err());
        let f = m
            .function_from_labels([("c", 3.0), ("a", 1.0), ("b", 2.0)])
            .unwrap();
        assert_eq!(f.values(), &[1.0, 2.0, 3.0]);
    }
}
