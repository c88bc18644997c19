//! Simulation of single- and multi-proposal Metropolis-Hastings chains.
//!
//! A [`Sampler`] is compiled once per model and can be driven in two ways:
//! [`Sampler::walk`] streams borrowed [`StepView`]s to a visitor without
//! storing anything, and [`run_chain`] materializes a [`ChainTrace`].
//! Both consume random numbers identically, so a trace replayed through an
//! estimator matches the streamed result bit for bit.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::exact::{kernel_branches, Branch, ExactError};
use crate::matrix::SquareMatrix;
use crate::model::{acceptance_matrix, Model, Proposal, StateSpace, Subset};
use crate::rng::{self, StreamRng};

/// Tolerance when re-deriving stored acceptance or selection weights.
pub const REPLAY_TOL: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error(transparent)]
    Model(#[from] ExactError),
    #[error("initial state {0} is out of range")]
    InvalidInit(usize),
    #[error("chain length must be at least 1")]
    ZeroSteps,
    #[error("step {step} is inconsistent with the model: {reason}")]
    Replay { step: usize, reason: String },
}

/// How `X₀` is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InitialState {
    /// Exact draw from `π` by inverse CDF.
    #[default]
    Stationary,
    /// Point mass at a state index.
    State(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Single,
    Multi,
}

/// One transition `X_k → X_{k+1}` as recorded in a trace.
#[derive(Clone, Debug, PartialEq)]
pub enum StepRecord {
    Single {
        proposal: usize,
        acceptance_prob: f64,
        accepted: bool,
        next_state: usize,
    },
    Multi {
        proposal_set: Subset,
        selection_weights: Vec<f64>,
        next_state: usize,
    },
}

impl StepRecord {
    pub fn next_state(&self) -> usize {
        match self {
            StepRecord::Single { next_state, .. } | StepRecord::Multi { next_state, .. } => *next_state,
        }
    }

    pub fn view(&self) -> StepView<'_> {
        match self {
            StepRecord::Single {
                proposal,
                acceptance_prob,
                accepted,
                next_state,
            } => StepView::Single {
                proposal: *proposal,
                acceptance_prob: *acceptance_prob,
                accepted: *accepted,
                next_state: *next_state,
            },
            StepRecord::Multi {
                proposal_set,
                selection_weights,
                next_state,
            } => StepView::Multi {
                set: proposal_set.states(),
                weights: selection_weights,
                next_state: *next_state,
            },
        }
    }
}

/// Borrowed form of a [`StepRecord`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepView<'a> {
    Single {
        proposal: usize,
        acceptance_prob: f64,
        accepted: bool,
        next_state: usize,
    },
    Multi {
        set: &'a [usize],
        weights: &'a [f64],
        next_state: usize,
    },
}

impl StepView<'_> {
    #[inline]
    pub fn next_state(&self) -> usize {
        match *self {
            StepView::Single { next_state, .. } | StepView::Multi { next_state, .. } => next_state,
        }
    }

    /// `E[ψ(X_{k+1}) | X_k, proposal] − ψ(X_{k+1})`, evaluated as
    /// `Σ_y κ(y)(ψ(y) − ψ(X_{k+1}))` so that it vanishes exactly for
    /// constant `ψ` and for deterministic moves.
    #[inline]
    pub fn correction(&self, current: usize, psi: &[f64]) -> f64 {
        match *self {
            StepView::Single {
                proposal,
                acceptance_prob: r,
                next_state,
                ..
            } => {
                let at = psi[next_state];
                r * (psi[proposal] - at) + (1.0 - r) * (psi[current] - at)
            }
            StepView::Multi {
                set,
                weights,
                next_state,
            } => weighted_correction(set, weights, psi, next_state),
        }
    }

    pub fn to_record(&self) -> StepRecord {
        match *self {
            StepView::Single {
                proposal,
                acceptance_prob,
                accepted,
                next_state,
            } => StepRecord::Single {
                proposal,
                acceptance_prob,
                accepted,
                next_state,
            },
            StepView::Multi {
                set,
                weights,
                next_state,
            } => StepRecord::Multi {
                proposal_set: Subset::new(set.to_vec()).expect("sampler sets are canonical"),
                selection_weights: weights.to_vec(),
                next_state,
            },
        }
    }
}

/// `Σ_y w(y)(ψ(y) − ψ(next))` over the states of a proposal set.
#[inline]
pub fn weighted_correction(set: &[usize], weights: &[f64], psi: &[f64], next: usize) -> f64 {
    let at = psi[next];
    set.iter().zip(weights).map(|(&y, w)| w * (psi[y] - at)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainTrace {
    pub initial_state: usize,
    pub steps: Vec<StepRecord>,
    pub model_kind: ModelKind,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `X₀, X₁, …, X_n`.
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.initial_state).chain(self.steps.iter().map(StepRecord::next_state))
    }

    /// Re-derives every step from the model and checks the stored values.
    pub fn replay(&self, model: &Model) -> Result<(), ChainError> {
        let sampler = Sampler::new(model)?;
        let n = model.size();
        if self.initial_state >= n {
            return Err(ChainError::InvalidInit(self.initial_state));
        }
        let mut x = self.initial_state;
        for (k, step) in self.steps.iter().enumerate() {
            let fail = |reason: String| ChainError::Replay { step: k + 1, reason };
            match (step, &sampler.kind) {
                (
                    StepRecord::Single {
                        proposal,
                        acceptance_prob,
                        accepted,
                        next_state,
                    },
                    Compiled::Single { q, rho, .. },
                ) => {
                    let y = *proposal;
                    if y >= n || q[(x, y)] <= 0.0 {
                        return Err(fail(format!("proposal {y} has zero probability from {x}")));
                    }
                    if (rho[(x, y)] - acceptance_prob).abs() > REPLAY_TOL {
                        return Err(fail(format!(
                            "stored rho {acceptance_prob} differs from {}",
                            rho[(x, y)]
                        )));
                    }
                    let expected = if *accepted { y } else { x };
                    if *next_state != expected {
                        return Err(fail(format!(
                            "next state {next_state} inconsistent with accepted = {accepted}"
                        )));
                    }
                }
                (
                    StepRecord::Multi {
                        proposal_set,
                        selection_weights,
                        next_state,
                    },
                    Compiled::Multi { branches, .. },
                ) => {
                    let Some(b) = branches[x].iter().find(|b| &b.set == proposal_set) else {
                        return Err(fail(format!("set {proposal_set} is not proposed from {x}")));
                    };
                    if b.kappa.len() != selection_weights.len()
                        || b.kappa
                            .iter()
                            .zip(selection_weights)
                            .any(|(a, s)| (a - s).abs() > REPLAY_TOL)
                    {
                        return Err(fail(format!(
                            "stored weights {selection_weights:?} differ from {:?}",
                            b.kappa
                        )));
                    }
                    if (selection_weights.iter().sum::<f64>() - 1.0).abs() > crate::model::TOL {
                        return Err(fail("selection weights do not sum to 1".into()));
                    }
                    if !proposal_set.contains(*next_state) {
                        return Err(fail(format!("next state {next_state} not in {proposal_set}")));
                    }
                }
                _ => return Err(fail("step kind does not match the model".into())),
            }
            x = step.next_state();
        }
        Ok(())
    }

    /// Debug dump, one tab-separated line per step:
    /// `step  state  proposal-or-set  accepted|rejected|selected-state`.
    pub fn dump<W: Write>(&self, states: &StateSpace, mut out: W) -> io::Result<()> {
        writeln!(out, "# step\tstate\tproposal\toutcome")?;
        let mut x = self.initial_state;
        for (k, step) in self.steps.iter().enumerate() {
            match step {
                StepRecord::Single {
                    proposal, accepted, ..
                } => writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    k + 1,
                    states.label(x),
                    states.label(*proposal),
                    if *accepted { "accepted" } else { "rejected" }
                )?,
                StepRecord::Multi {
                    proposal_set,
                    next_state,
                    ..
                } => {
                    let set: Vec<&str> = proposal_set.states().iter().map(|&s| states.label(s)).collect();
                    writeln!(
                        out,
                        "{}\t{}\t{{{}}}\t{}",
                        k + 1,
                        states.label(x),
                        set.join(","),
                        states.label(*next_state)
                    )?
                }
            }
            x = step.next_state();
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Compiled {
    Single {
        q: SquareMatrix,
        rho: SquareMatrix,
        q_cumulative: Vec<Vec<f64>>,
    },
    Multi {
        branches: Vec<Vec<Branch>>,
        set_cumulative: Vec<Vec<f64>>,
        kappa_cumulative: Vec<Vec<Vec<f64>>>,
    },
}

/// Per-model sampling tables.
#[derive(Clone, Debug)]
pub struct Sampler {
    pi_cumulative: Vec<f64>,
    kind: Compiled,
}

impl Sampler {
    pub fn new(model: &Model) -> Result<Self, ChainError> {
        let pi_cumulative = rng::cumulative(model.pi().as_slice());
        let kind = match model.proposal() {
            Proposal::Single { q, rule } => Compiled::Single {
                q: q.matrix().clone(),
                rho: acceptance_matrix(model.pi(), q, rule),
                q_cumulative: q.matrix().rows().map(rng::cumulative).collect(),
            },
            Proposal::Multi { kernel, selection } => {
                let branches = kernel_branches(model.pi(), kernel, selection)?;
                let set_cumulative = branches
                    .iter()
                    .map(|bs| rng::cumulative(&bs.iter().map(|b| b.prob).collect::<Vec<_>>()))
                    .collect();
                let kappa_cumulative = branches
                    .iter()
                    .map(|bs| bs.iter().map(|b| rng::cumulative(&b.kappa)).collect())
                    .collect();
                Compiled::Multi {
                    branches,
                    set_cumulative,
                    kappa_cumulative,
                }
            }
        };
        Ok(Self { pi_cumulative, kind })
    }

    pub fn kind(&self) -> ModelKind {
        match self.kind {
            Compiled::Single { .. } => ModelKind::Single,
            Compiled::Multi { .. } => ModelKind::Multi,
        }
    }

    pub fn size(&self) -> usize {
        self.pi_cumulative.len()
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, init: InitialState, rng: &mut R) -> Result<usize, ChainError> {
        match init {
            InitialState::Stationary => Ok(rng::sample_cumulative(&self.pi_cumulative, rng::uniform(rng))),
            InitialState::State(s) if s < self.size() => Ok(s),
            InitialState::State(s) => Err(ChainError::InvalidInit(s)),
        }
    }

    /// One transition from `x`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> StepView<'_> {
        match &self.kind {
            Compiled::Single {
                rho, q_cumulative, ..
            } => {
                let y = rng::sample_cumulative(&q_cumulative[x], rng::uniform(rng));
                if y == x {
                    return StepView::Single {
                        proposal: x,
                        acceptance_prob: 1.0,
                        accepted: true,
                        next_state: x,
                    };
                }
                let r = rho[(x, y)];
                let accepted = rng::uniform(rng) < r;
                StepView::Single {
                    proposal: y,
                    acceptance_prob: r,
                    accepted,
                    next_state: if accepted { y } else { x },
                }
            }
            Compiled::Multi {
                branches,
                set_cumulative,
                kappa_cumulative,
            } => {
                let i = rng::sample_cumulative(&set_cumulative[x], rng::uniform(rng));
                let b = &branches[x][i];
                let j = rng::sample_cumulative(&kappa_cumulative[x][i], rng::uniform(rng));
                StepView::Multi {
                    set: b.set.states(),
                    weights: &b.kappa,
                    next_state: b.set.states()[j],
                }
            }
        }
    }

    /// Runs `n` steps from `x0`, handing each step and the state it left
    /// to `visit`. Returns the final state.
    pub fn walk<R, F>(&self, x0: usize, n: usize, rng: &mut R, mut visit: F) -> usize
    where
        R: Rng + ?Sized,
        F: FnMut(usize, &StepView<'_>),
    {
        let mut x = x0;
        for _ in 0..n {
            let step = self.step(x, rng);
            visit(x, &step);
            x = step.next_state();
        }
        x
    }

    /// Materializes `n` steps drawn from `rng`.
    pub fn trace<R: Rng + ?Sized>(
        &self,
        n: usize,
        init: InitialState,
        rng: &mut R,
    ) -> Result<ChainTrace, ChainError> {
        if n == 0 {
            return Err(ChainError::ZeroSteps);
        }
        let x0 = self.initial_state(init, rng)?;
        let mut steps = Vec::with_capacity(n);
        self.walk(x0, n, rng, |_, s| steps.push(s.to_record()));
        Ok(ChainTrace {
            initial_state: x0,
            steps,
            model_kind: self.kind(),
        })
    }
}

/// Stream used by [`run_chain`] under a given seed.
pub fn chain_rng(seed: u64) -> StreamRng {
    rng::stream(seed, 0)
}

/// Simulates `n` steps of the model's chain. Deterministic in all
/// arguments.
pub fn run_chain(model: &Model, n: usize, seed: u64, init: InitialState) -> Result<ChainTrace, ChainError> {
    Sampler::new(model)?.trace(n, init, &mut chain_rng(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::counterexample_model;
    use crate::model::{AcceptanceRule, SelectionKernelSpec};
    use crate::synth;

    #[test]
    fn same_arguments_same_trace() {
        let m = counterexample_model();
        let a = run_chain(&m, 500, 11, InitialState::Stationary).unwrap();
        let b = run_chain(&m, 500, 11, InitialState::Stationary).unwrap();
        let c = run_chain(&m, 500, 12, InitialState::Stationary).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn two_state_flip_is_deterministic() {
        let m = synth::two_state(0.5, AcceptanceRule::Metropolis);
        let t = run_chain(&m, 9, 3, InitialState::State(0)).unwrap();
        let states: Vec<usize> = t.states().collect();
        assert_eq!(states, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        assert!(t.steps.iter().all(|s| matches!(s, StepRecord::Single { accepted: true, .. })));
    }

    #[test]
    fn single_step_records_are_consistent() {
        let m = counterexample_model();
        let t = run_chain(&m, 2000, 5, InitialState::State(0)).unwrap();
        t.replay(&m).unwrap();
        let mut prev = t.initial_state;
        let mut rejected = 0;
        for s in &t.steps {
            let StepRecord::Single {
                proposal,
                accepted,
                next_state,
                ..
            } = *s
            else {
                panic!()
            };
            if accepted {
                assert_eq!(next_state, proposal);
            } else {
                assert_eq!(next_state, prev);
                rejected += 1;
            }
            prev = next_state;
        }
        assert!(rejected > 0);
    }

    #[test]
    fn multi_step_records_are_consistent() {
        let m = synth::three_state_pair_kernel(SelectionKernelSpec::MetropolisKappa);
        let t = run_chain(&m, 2000, 9, InitialState::Stationary).unwrap();
        assert_eq!(t.model_kind, ModelKind::Multi);
        t.replay(&m).unwrap();
    }

    #[test]
    fn tampered_trace_fails_replay() {
        let m = counterexample_model();
        let mut t = run_chain(&m, 50, 5, InitialState::State(0)).unwrap();
        if let StepRecord::Single { acceptance_prob, .. } = &mut t.steps[10] {
            *acceptance_prob += 1e-9;
        }
        assert!(matches!(t.replay(&m), Err(ChainError::Replay { step: 11, .. })));
    }

    #[test]
    fn invalid_arguments() {
        let m = counterexample_model();
        assert!(matches!(run_chain(&m, 0, 1, InitialState::Stationary), Err(ChainError::ZeroSteps)));
        assert!(matches!(
            run_chain(&m, 5, 1, InitialState::State(3)),
            Err(ChainError::InvalidInit(3))
        ));
    }

    #[test]
    fn dump_has_one_line_per_step() {
        let m = counterexample_model();
        let t = run_chain(&m, 25, 2, InitialState::State(2)).unwrap();
        let mut buf = Vec::new();
        t.dump(m.states(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 26);
        assert!(text.lines().nth(1).unwrap().starts_with("1\tc\t"));
    }
}
