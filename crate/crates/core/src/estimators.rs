//! Ergodic-average estimators and their control-variate corrections.
//!
//! All estimators are folded by one [`OnlineEstimator`]. The offline entry
//! points ([`estimate`] and friends) replay a stored trace through it and
//! the bench harness feeds it directly from [`Sampler::walk`](crate::chain::Sampler::walk),
//! so both paths produce bit-identical results on the same steps.

use thiserror::Error;

use crate::chain::{weighted_correction, ChainTrace, ModelKind, StepView};
use crate::exact::{kappa_of, Branch, ExactError, TransitionMatrix};
use crate::model::{Model, Proposal, SelectionKernelSpec, TOL};
use crate::report::{fmt_sig, JsonObject, TABLE_DIGITS};

/// Denominator magnitude below which `b̂_n` is reported as absent.
pub const B_HAT_TOL: f64 = 1e-12;
/// Largest admissible `|⟨π,γ⟩|` (relative to `max |ψ|`) for an alternate
/// selection kernel.
pub const DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("function has {got} values but the trace visits state {state}")]
    Dimension { state: usize, got: usize },
    #[error("f has {f} values but psi has {psi}")]
    Mismatch { f: usize, psi: usize },
    #[error("an alternate selection kernel requires a multi-proposal model and trace")]
    NotMulti,
    #[error("alternate selection kernel is not reversible: residual {residual:e} at state {x}, set {set}")]
    NotReversible { x: usize, set: String, residual: f64 },
    #[error("alternate selection kernel has no weights for state {x}, set {set}")]
    UnknownSet { x: usize, set: String },
    #[error("alternate selection kernel has invalid weights at state {x}, set {set}")]
    InvalidWeights { x: usize, set: String },
    #[error("alternate control variate has drift <pi,gamma> = {0:e}")]
    Drift(f64),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// An alternate selection kernel `κ′` checked against the model's `π`
/// and `𝒬`.
#[derive(Clone, Debug)]
pub struct AlternateKernel {
    branches: Vec<Vec<Branch>>,
    pi: Vec<f64>,
}

impl AlternateKernel {
    /// Rejects `κ′` unless each weight vector is a probability vector and
    /// `π(x)𝒬(x,A)κ′(x,A,y) = π(y)𝒬(y,A)κ′(y,A,x)` holds to `1e−12`.
    pub fn new(model: &Model, spec: &SelectionKernelSpec) -> Result<Self, EstimateError> {
        let Proposal::Multi { kernel, .. } = model.proposal() else {
            return Err(EstimateError::NotMulti);
        };
        let pi = model.pi();
        let mut branches = Vec::with_capacity(kernel.len());
        for x in 0..kernel.len() {
            let mut bs = Vec::new();
            for e in kernel.support(x).iter().filter(|e| e.prob > 0.0) {
                let kappa = kappa_of(pi, kernel, spec, x, &e.set).map_err(|err| match err {
                    ExactError::MissingKappa { .. } => EstimateError::UnknownSet {
                        x,
                        set: e.set.to_string(),
                    },
                    other => EstimateError::Exact(other),
                })?;
                let total: f64 = kappa.iter().sum();
                if kappa.len() != e.set.len()
                    || kappa.iter().any(|k| !k.is_finite() || *k < -TOL)
                    || (total - 1.0).abs() > TOL
                {
                    return Err(EstimateError::InvalidWeights {
                        x,
                        set: e.set.to_string(),
                    });
                }
                bs.push(Branch {
                    set: e.set.clone(),
                    prob: e.prob,
                    kappa,
                });
            }
            branches.push(bs);
        }
        for (x, bs) in branches.iter().enumerate() {
            for b in bs {
                for (j, &y) in b.set.states().iter().enumerate() {
                    let back = branches[y]
                        .iter()
                        .find(|c| c.set == b.set)
                        .map(|c| c.prob * c.kappa[b.set.position(x).expect("x in its set")])
                        .unwrap_or(0.0);
                    let residual = (pi[x] * b.prob * b.kappa[j] - pi[y] * back).abs();
                    if residual > TOL {
                        return Err(EstimateError::NotReversible {
                            x,
                            set: b.set.to_string(),
                            residual,
                        });
                    }
                }
            }
        }
        Ok(Self {
            branches,
            pi: pi.as_slice().to_vec(),
        })
    }

    /// `⟨π,γ⟩` with `γ(x) = Σ_A 𝒬(x,A)⟨κ′(x,A,·),ψ⟩ − ψ(x)`.
    pub fn drift(&self, psi: &[f64]) -> f64 {
        self.branches
            .iter()
            .enumerate()
            .map(|(x, bs)| {
                let g: f64 = bs.iter().map(|b| b.prob * b.mean(psi)).sum::<f64>() - psi[x];
                self.pi[x] * g
            })
            .sum()
    }

    fn weights(&self, x: usize, set: &[usize]) -> Option<&Branch> {
        self.branches[x].iter().find(|b| b.set.states() == set)
    }

    fn size(&self) -> usize {
        self.branches.len()
    }
}

/// The functions an estimator run evaluates.
#[derive(Clone, Debug)]
pub struct Observables {
    f: Vec<f64>,
    psi: Vec<f64>,
    p_psi: Option<Vec<f64>>,
    alternate: Option<AlternateKernel>,
}

impl Observables {
    pub fn new(f: &[f64], psi: &[f64]) -> Result<Self, EstimateError> {
        if f.len() != psi.len() {
            return Err(EstimateError::Mismatch {
                f: f.len(),
                psi: psi.len(),
            });
        }
        Ok(Self {
            f: f.to_vec(),
            psi: psi.to_vec(),
            p_psi: None,
            alternate: None,
        })
    }

    /// Enables `I_n(f − ψ + Pψ)`.
    pub fn with_transition(mut self, p: &TransitionMatrix) -> Result<Self, EstimateError> {
        if p.dim() != self.f.len() {
            return Err(ExactError::Dimension {
                expected: self.f.len(),
                got: p.dim(),
            }
            .into());
        }
        self.p_psi = Some(p.apply(&self.psi));
        Ok(self)
    }

    /// Enables `J′_n(ψ)`; checks `⟨π,γ⟩ = 0`.
    pub fn with_alternate(mut self, kernel: AlternateKernel) -> Result<Self, EstimateError> {
        if kernel.size() != self.f.len() {
            return Err(ExactError::Dimension {
                expected: self.f.len(),
                got: kernel.size(),
            }
            .into());
        }
        let drift = kernel.drift(&self.psi);
        let scale = self.psi.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if drift.abs() > DRIFT_TOL * scale {
            return Err(EstimateError::Drift(drift));
        }
        self.alternate = Some(kernel);
        Ok(self)
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    fn check_state(&self, s: usize) -> Result<(), EstimateError> {
        if s < self.f.len() {
            Ok(())
        } else {
            Err(EstimateError::Dimension {
                state: s,
                got: self.f.len(),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub i_n: f64,
    pub j_n: f64,
    pub i_n_cv: f64,
    pub b_hat: Option<f64>,
    pub i_n_adaptive: f64,
    pub i_n_ppsi: Option<f64>,
    pub j_prime_n: Option<f64>,
    pub n: usize,
}

impl EstimateReport {
    /// `I_n(f) + J′_n(ψ)` when an alternate kernel was supplied.
    pub fn i_n_prime(&self) -> Option<f64> {
        self.j_prime_n.map(|j| self.i_n + j)
    }

    pub fn to_json(&self) -> String {
        let mut o = JsonObject::new();
        o.num("i_n", self.i_n)
            .num("j_n", self.j_n)
            .num("i_n_cv", self.i_n_cv)
            .opt_num("b_hat", self.b_hat)
            .num("i_n_adaptive", self.i_n_adaptive)
            .opt_num("i_n_ppsi", self.i_n_ppsi)
            .opt_num("j_prime_n", self.j_prime_n)
            .int("n", self.n as u64);
        o.render()
    }

    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "absent".to_string(), |v| fmt_sig(v, TABLE_DIGITS));
        let rows = [
            ("i_n", fmt_sig(self.i_n, TABLE_DIGITS)),
            ("j_n", fmt_sig(self.j_n, TABLE_DIGITS)),
            ("i_n_cv", fmt_sig(self.i_n_cv, TABLE_DIGITS)),
            ("b_hat", opt(self.b_hat)),
            ("i_n_adaptive", fmt_sig(self.i_n_adaptive, TABLE_DIGITS)),
            ("i_n_ppsi", opt(self.i_n_ppsi)),
            ("j_prime_n", opt(self.j_prime_n)),
            ("n", self.n.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

/// Streaming accumulator over the steps of one chain.
#[derive(Clone, Debug)]
pub struct OnlineEstimator<'a> {
    obs: &'a Observables,
    current: usize,
    n: usize,
    sum_f: CompensatedSum,
    sum_f2: CompensatedSum,
    sum_lag: CompensatedSum,
    sum_j_psi: CompensatedSum,
    sum_j_f: CompensatedSum,
    sum_ppsi: CompensatedSum,
    sum_j_prime: CompensatedSum,
}

impl<'a> OnlineEstimator<'a> {
    pub fn new(obs: &'a Observables, initial_state: usize) -> Self {
        Self {
            obs,
            current: initial_state,
            n: 0,
            sum_f: CompensatedSum::default(),
            sum_f2: CompensatedSum::default(),
            sum_lag: CompensatedSum::default(),
            sum_j_psi: CompensatedSum::default(),
            sum_j_f: CompensatedSum::default(),
            sum_ppsi: CompensatedSum::default(),
            sum_j_prime: CompensatedSum::default(),
        }
    }

    /// Folds the transition out of the current state.
    ///
    /// # Panics
    /// If an alternate kernel is registered and the step is a
    /// single-proposal step or uses a set the kernel does not know.
    #[inline]
    pub fn push(&mut self, step: &StepView<'_>) {
        let obs = self.obs;
        let (f, psi) = (&obs.f, &obs.psi);
        let x = self.current;
        let y = step.next_state();
        let fy = f[y];
        self.sum_f.add(fy);
        self.sum_f2.add(fy * fy);
        self.sum_lag.add(f[x] * fy);
        self.sum_j_psi.add(step.correction(x, psi));
        self.sum_j_f.add(step.correction(x, f));
        if let Some(p_psi) = &obs.p_psi {
            self.sum_ppsi.add(fy - psi[y] + p_psi[y]);
        }
        if let Some(alt) = &obs.alternate {
            let StepView::Multi { set, .. } = *step else {
                panic!("alternate selection kernel applied to a single-proposal step");
            };
            let b = alt
                .weights(x, set)
                .unwrap_or_else(|| panic!("alternate selection kernel has no set {set:?} from {x}"));
            self.sum_j_prime.add(weighted_correction(b.set.states(), &b.kappa, psi, y));
        }
        self.current = y;
        self.n += 1;
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    /// `b̂_n`, absent for `n = 0` or a vanishing denominator.
    pub fn b_hat(&self) -> Option<f64> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let mean = self.sum_f.value() / n;
        let mean_sq = self.sum_f2.value() / n;
        let denom = mean_sq - self.sum_lag.value() / n;
        if denom.abs() < B_HAT_TOL {
            return None;
        }
        Some((mean_sq - mean * mean) / denom)
    }

    /// # Panics
    /// If no step has been pushed.
    pub fn report(&self) -> EstimateReport {
        assert!(self.n > 0, "estimator report needs at least one step");
        let n = self.n as f64;
        let i_n = self.sum_f.value() / n;
        let j_n = self.sum_j_psi.value() / n;
        let b_hat = self.b_hat();
        let i_n_adaptive = match b_hat {
            Some(b) => i_n + b * (self.sum_j_f.value() / n),
            None => i_n,
        };
        EstimateReport {
            i_n,
            j_n,
            i_n_cv: i_n + j_n,
            b_hat,
            i_n_adaptive,
            i_n_ppsi: self.obs.p_psi.as_ref().map(|_| self.sum_ppsi.value() / n),
            j_prime_n: self.obs.alternate.as_ref().map(|_| self.sum_j_prime.value() / n),
            n: self.n,
        }
    }
}

fn check_trace(trace: &ChainTrace, obs: &Observables) -> Result<(), EstimateError> {
    if obs.alternate.is_some() && trace.model_kind != ModelKind::Multi {
        return Err(EstimateError::NotMulti);
    }
    for s in trace.states() {
        obs.check_state(s)?;
    }
    if let Some(alt) = &obs.alternate {
        let mut x = trace.initial_state;
        for step in &trace.steps {
            let StepView::Multi { set, .. } = step.view() else {
                return Err(EstimateError::NotMulti);
            };
            if alt.weights(x, set).is_none() {
                return Err(EstimateError::UnknownSet {
                    x,
                    set: format!("{set:?}"),
                });
            }
            x = step.next_state();
        }
    }
    Ok(())
}

/// Runs every estimator enabled in `obs` over a stored trace.
pub fn estimate_with(trace: &ChainTrace, obs: &Observables) -> Result<EstimateReport, EstimateError> {
    check_trace(trace, obs)?;
    let mut acc = OnlineEstimator::new(obs, trace.initial_state);
    for step in &trace.steps {
        acc.push(&step.view());
    }
    Ok(acc.report())
}

/// `I_n(f)`, `J_n(ψ)` (or `𝒥_n(ψ)`), `ℐ_n(f,ψ)`, `b̂_n` and the adaptive
/// estimator.
pub fn estimate(trace: &ChainTrace, f: &[f64], psi: &[f64]) -> Result<EstimateReport, EstimateError> {
    estimate_with(trace, &Observables::new(f, psi)?)
}

/// `b̂_n` from a stored trace.
pub fn b_hat(trace: &ChainTrace, f: &[f64]) -> Result<Option<f64>, EstimateError> {
    Ok(estimate(trace, f, f)?.b_hat)
}

/// `I_n(f − ψ + Pψ)`.
pub fn estimate_ppsi(
    trace: &ChainTrace,
    f: &[f64],
    psi: &[f64],
    p: &TransitionMatrix,
) -> Result<f64, EstimateError> {
    let obs = Observables::new(f, psi)?.with_transition(p)?;
    Ok(estimate_with(trace, &obs)?.i_n_ppsi.expect("transition supplied"))
}

/// `J′_n(ψ)` under an alternate selection kernel.
pub fn j_prime(trace: &ChainTrace, psi: &[f64], kappa_prime: &AlternateKernel) -> Result<f64, EstimateError> {
    let obs = Observables::new(psi, psi)?.with_alternate(kappa_prime.clone())?;
    Ok(estimate_with(trace, &obs)?.j_prime_n.expect("alternate supplied"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{counterexample_f, counterexample_model};
    use crate::chain::{run_chain, InitialState, Sampler};
    use crate::exact::{solve_poisson, transition_matrix};
    use crate::model::AcceptanceRule;
    use crate::rng;
    use crate::synth;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn constant_psi_gives_zero_correction() {
        let m = counterexample_model();
        let f = counterexample_f();
        let t = run_chain(&m, 1000, 4, InitialState::Stationary).unwrap();
        let r = estimate(&t, &f, &[2.5; 3]).unwrap();
        assert_eq!(r.j_n, 0.0);
        assert_eq!(r.i_n_cv, r.i_n);
    }

    #[test]
    fn always_accepted_chain_has_zero_correction() {
        let m = synth::two_state(0.5, AcceptanceRule::Metropolis);
        let t = run_chain(&m, 100, 1, InitialState::Stationary).unwrap();
        let r = estimate(&t, &[1.0, -3.0], &[0.3, 7.0]).unwrap();
        assert_eq!(r.j_n, 0.0);
    }

    #[test]
    fn cv_is_sum_of_parts() {
        let m = counterexample_model();
        let f = counterexample_f();
        let t = run_chain(&m, 777, 8, InitialState::Stationary).unwrap();
        let r = estimate(&t, &f, &f).unwrap();
        assert_eq!(r.i_n_cv, r.i_n + r.j_n);
        assert_eq!(r.n, 777);
    }

    #[test]
    fn b_hat_absent_for_constant_f() {
        let m = counterexample_model();
        let t = run_chain(&m, 100, 8, InitialState::Stationary).unwrap();
        let r = estimate(&t, &[1.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(r.b_hat, None);
        assert_eq!(r.i_n_adaptive, r.i_n);
    }

    #[test]
    fn perfect_control_variate_on_every_prefix() {
        let m = counterexample_model();
        let f = counterexample_f();
        let p = transition_matrix(&m).unwrap();
        let big_f = solve_poisson(&p, m.pi(), &f).unwrap().solution;
        let obs = Observables::new(&f, &big_f).unwrap().with_transition(&p).unwrap();
        let sampler = Sampler::new(&m).unwrap();
        let mut r = rng::stream(3, 0);
        let x0 = sampler.initial_state(InitialState::Stationary, &mut r).unwrap();
        let mut acc = OnlineEstimator::new(&obs, x0);
        sampler.walk(x0, 5000, &mut r, |_, s| {
            acc.push(s);
            assert!(acc.report().i_n_ppsi.unwrap().abs() < 1e-10);
        });
    }

    #[test]
    fn zero_psi_ppsi_is_plain_average() {
        let m = counterexample_model();
        let f = counterexample_f();
        let p = transition_matrix(&m).unwrap();
        let t = run_chain(&m, 300, 2, InitialState::Stationary).unwrap();
        let v = estimate_ppsi(&t, &f, &[0.0; 3], &p).unwrap();
        assert_eq!(v, estimate(&t, &f, &f).unwrap().i_n);
    }

    #[test]
    fn streaming_matches_offline_bitwise() {
        let m = synth::three_state_pair_kernel(SelectionKernelSpec::MetropolisKappa);
        let f = [0.3, -1.2, 2.0];
        let psi = [1.0, 0.5, -0.25];
        let p = transition_matrix(&m).unwrap();
        let alt = AlternateKernel::new(&m, &SelectionKernelSpec::BoltzmannKappa).unwrap();
        let obs = Observables::new(&f, &psi)
            .unwrap()
            .with_transition(&p)
            .unwrap()
            .with_alternate(alt)
            .unwrap();
        let sampler = Sampler::new(&m).unwrap();
        let mut r = rng::stream(17, 2);
        let t = sampler.trace(4000, InitialState::Stationary, &mut r).unwrap();
        let offline = estimate_with(&t, &obs).unwrap();
        let mut r = rng::stream(17, 2);
        let x0 = sampler.initial_state(InitialState::Stationary, &mut r).unwrap();
        let mut acc = OnlineEstimator::new(&obs, x0);
        sampler.walk(x0, 4000, &mut r, |_, s| acc.push(s));
        assert_eq!(acc.report(), offline);
    }

    #[test]
    fn alternate_equal_to_kappa_reproduces_j() {
        let spec = SelectionKernelSpec::MetropolisKappa;
        let m = synth::three_state_pair_kernel(spec.clone());
        let psi = [1.0, 0.5, -0.25];
        let t = run_chain(&m, 500, 6, InitialState::Stationary).unwrap();
        let alt = AlternateKernel::new(&m, &spec).unwrap();
        let jp = j_prime(&t, &psi, &alt).unwrap();
        let j = estimate(&t, &psi, &psi).unwrap().j_n;
        assert!((jp - j).abs() < 1e-15);
        assert_eq!(j_prime(&t, &[4.0; 3], &alt).unwrap(), 0.0);
    }

    #[test]
    fn non_reversible_alternate_is_rejected() {
        let m = synth::three_state_pair_kernel(SelectionKernelSpec::MetropolisKappa);
        let Proposal::Multi { kernel, .. } = m.proposal() else { panic!() };
        let mut table = crate::model::KappaTable::new();
        for x in 0..3 {
            for e in kernel.support(x) {
                let w = if e.set.len() == 2 { vec![0.5, 0.5] } else { vec![1.0] };
                table.insert((x, e.set.clone()), w);
            }
        }
        let err = AlternateKernel::new(&m, &SelectionKernelSpec::ExplicitKappa(table)).unwrap_err();
        assert!(matches!(err, EstimateError::NotReversible { .. }));
        assert!(matches!(
            AlternateKernel::new(&counterexample_model(), &SelectionKernelSpec::BoltzmannKappa),
            Err(EstimateError::NotMulti)
        ));
    }

    #[test]
    fn dimension_errors() {
        let m = counterexample_model();
        let t = run_chain(&m, 50, 1, InitialState::Stationary).unwrap();
        assert!(matches!(estimate(&t, &[1.0; 2], &[1.0; 2]), Err(EstimateError::Dimension { .. })));
        assert!(matches!(estimate(&t, &[1.0; 3], &[1.0; 2]), Err(EstimateError::Mismatch { .. })));
    }

    #[test]
    fn report_serializations() {
        let m = counterexample_model();
        let f = counterexample_f();
        let t = run_chain(&m, 50, 1, InitialState::Stationary).unwrap();
        let r = estimate(&t, &f, &f).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["n"], 50);
        assert!(v["i_n_ppsi"].is_null());
        assert_eq!(r.to_table().lines().count(), 8);
    }
}
