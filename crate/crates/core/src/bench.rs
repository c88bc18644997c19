//! Replicated simulation harness and the built-in three-state
//! counter-example.
//!
//! For every chain length `n` the harness draws `N` independent chains
//! (replication `r` uses stream `r` under a key derived from the master
//! seed and `n`), evaluates the requested estimators on each, and reports
//! `n · (unbiased sample variance)` with an asymptotic confidence interval
//! `V ± z·√((m₄ − V²)/N)`. Differences against the plain ergodic average
//! use the paired per-replication quantity
//! `N/(N−1) · [n(I − Ī)² − n(E − Ē)²]`, whose mean is exactly the
//! difference of the two variance estimates.

use std::fmt::Write as _;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::chain::{ChainError, InitialState, Sampler};
use crate::estimators::{AlternateKernel, CompensatedSum, EstimateError, Observables, OnlineEstimator};
use crate::exact::{self, ExactError};
use crate::matrix::SquareMatrix;
use crate::model::{AcceptanceRule, Model, Proposal, SelectionKernelSpec, SelectionMatrix, StateSpace, TargetDistribution};
use crate::report::{fmt_sig, MACHINE_DIGITS, TABLE_DIGITS};
use crate::rng;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench configuration: {0}")]
    Config(String),
    #[error("bench needs {requested} chain steps, above the budget of {limit}")]
    Budget { requested: u128, limit: u64 },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Estimators the harness can replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// `I_n(f)`.
    Plain,
    /// `ℐ_n(f,ψ) = I_n(f) + J_n(ψ)`.
    ControlVariate,
    /// `I_n(f) + b̂_n J_n(f)`.
    Adaptive,
    /// `I_n(f − ψ + Pψ)`.
    TransitionVariate,
    /// `I_n(f) + J′_n(ψ)`.
    AlternateKernel,
}

impl EstimatorKind {
    /// Short name used in CSV output and CLI flags.
    pub fn code(self) -> &'static str {
        match self {
            EstimatorKind::Plain => "plain",
            EstimatorKind::ControlVariate => "cv",
            EstimatorKind::Adaptive => "adaptive",
            EstimatorKind::TransitionVariate => "ppsi",
            EstimatorKind::AlternateKernel => "jprime",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [
            EstimatorKind::Plain,
            EstimatorKind::ControlVariate,
            EstimatorKind::Adaptive,
            EstimatorKind::TransitionVariate,
            EstimatorKind::AlternateKernel,
        ]
        .into_iter()
        .find(|k| k.code() == code)
    }

    /// Column title in text tables.
    pub fn title(self) -> &'static str {
        match self {
            EstimatorKind::Plain => "I_n(f)",
            EstimatorKind::ControlVariate => "I_n(f,psi)",
            EstimatorKind::Adaptive => "I_n+b*J_n",
            EstimatorKind::TransitionVariate => "I_n(f-psi+Ppsi)",
            EstimatorKind::AlternateKernel => "I_n+J'_n",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    /// Estimators besides the plain average, which is always included.
    pub estimators: Vec<EstimatorKind>,
    pub init: InitialState,
    /// Multiply sample variances by `n`.
    pub scale_by_n: bool,
    /// Cap on `Σ_n n · reps`.
    pub max_steps: Option<u64>,
    /// Selection kernel `κ′` for [`EstimatorKind::AlternateKernel`].
    pub alternate: Option<SelectionKernelSpec>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_list: vec![1, 2, 5, 10, 100, 1000],
            reps: 10_000,
            level: 0.95,
            seed: 0,
            estimators: vec![EstimatorKind::ControlVariate],
            init: InitialState::Stationary,
            scale_by_n: true,
            max_steps: None,
            alternate: None,
        }
    }
}

impl BenchConfig {
    fn kinds(&self) -> Vec<EstimatorKind> {
        let mut kinds = vec![EstimatorKind::Plain];
        for &k in &self.estimators {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        kinds
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.reps < 2 {
            return Err(BenchError::Config("reps must be at least 2".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(BenchError::Config("level must lie in (0, 1)".into()));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(BenchError::Config("n_list must be non-empty with n >= 1".into()));
        }
        if self.estimators.contains(&EstimatorKind::AlternateKernel) && self.alternate.is_none() {
            return Err(BenchError::Config("the jprime estimator needs an alternate selection kernel".into()));
        }
        if let Some(limit) = self.max_steps {
            let requested: u128 = self.n_list.iter().map(|&n| n as u128 * self.reps as u128).sum();
            if requested > limit as u128 {
                return Err(BenchError::Budget { requested, limit });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorRow {
    pub kind: EstimatorKind,
    /// Point estimate of the (scaled) variance.
    pub variance: f64,
    pub variance_ci: Interval,
    /// Paired CI for `σ²(I_n) − σ²(this estimator)`; absent for the plain
    /// average.
    pub difference: Option<f64>,
    pub difference_ci: Option<Interval>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub estimators: Vec<EstimatorRow>,
}

impl BenchRow {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorRow> {
        self.estimators.iter().find(|e| e.kind == kind)
    }
}

/// Exact asymptotic variances of the benchmarked model, for reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactAnnotation {
    pub sigma2: f64,
    pub sigma2_cv: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    pub exact: Option<ExactAnnotation>,
}

impl BenchTable {
    pub fn row(&self, n: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// Aligned text table: one line per `n`, variance CIs for every
    /// estimator followed by the paired difference CIs.
    pub fn to_text(&self) -> String {
        let ci = |i: &Interval| format!("[{}, {}]", fmt_sig(i.lo, TABLE_DIGITS), fmt_sig(i.hi, TABLE_DIGITS));
        let Some(first) = self.rows.first() else {
            return String::new();
        };
        let mut header = vec!["n".to_string()];
        header.extend(first.estimators.iter().map(|e| format!("var {}", e.kind.title())));
        header.extend(
            first
                .estimators
                .iter()
                .filter(|e| e.difference_ci.is_some())
                .map(|e| format!("var I_n(f) - var {}", e.kind.title())),
        );
        let mut lines = vec![header];
        for row in &self.rows {
            let mut cells = vec![row.n.to_string()];
            cells.extend(row.estimators.iter().map(|e| ci(&e.variance_ci)));
            cells.extend(row.estimators.iter().filter_map(|e| e.difference_ci.as_ref().map(ci)));
            lines.push(cells);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:<w$}"))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "reps = {}, level = {}, seed = {}",
            self.reps,
            fmt_sig(self.level, TABLE_DIGITS),
            self.seed
        );
        if let Some(e) = self.exact {
            let _ = writeln!(
                out,
                "exact: sigma2 = {}, sigma2_cv = {}",
                fmt_sig(e.sigma2, TABLE_DIGITS),
                fmt_sig(e.sigma2_cv, TABLE_DIGITS)
            );
        }
        out
    }

    /// CSV with columns `n,est,var_lo,var_hi,diff_lo,diff_hi,reps,level,seed`.
    pub fn to_csv(&self) -> String {
        let num = |v: f64| fmt_sig(v, MACHINE_DIGITS);
        let mut out = String::from("n,est,var_lo,var_hi,diff_lo,diff_hi,reps,level,seed\n");
        for row in &self.rows {
            for e in &row.estimators {
                let (dlo, dhi) = e
                    .difference_ci
                    .map_or((String::new(), String::new()), |d| (num(d.lo), num(d.hi)));
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    row.n,
                    e.kind.code(),
                    num(e.variance_ci.lo),
                    num(e.variance_ci.hi),
                    dlo,
                    dhi,
                    self.reps,
                    num(self.level),
                    self.seed
                );
            }
        }
        out
    }
}

/// Key of the replication streams for chain length `n`.
pub fn replication_key(seed: u64, n: usize) -> u64 {
    rng::mix64(seed ^ rng::mix64(n as u64))
}

fn replicate(
    sampler: &Sampler,
    obs: &Observables,
    kinds: &[EstimatorKind],
    init: InitialState,
    key: u64,
    r: usize,
    n: usize,
) -> Result<Vec<f64>, ChainError> {
    let mut rng = rng::stream(key, r as u64);
    let x0 = sampler.initial_state(init, &mut rng)?;
    let mut acc = OnlineEstimator::new(obs, x0);
    sampler.walk(x0, n, &mut rng, |_, s| acc.push(s));
    let rep = acc.report();
    Ok(kinds
        .iter()
        .map(|k| match k {
            EstimatorKind::Plain => rep.i_n,
            EstimatorKind::ControlVariate => rep.i_n_cv,
            EstimatorKind::Adaptive => rep.i_n_adaptive,
            EstimatorKind::TransitionVariate => rep.i_n_ppsi.expect("transition enabled"),
            EstimatorKind::AlternateKernel => rep.i_n_prime().expect("alternate enabled"),
        })
        .collect())
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut s = CompensatedSum::default();
    let mut k = 0;
    for x in xs {
        s.add(x);
        k += 1;
    }
    (s.value() / k as f64, k)
}

/// Unbiased variance and its asymptotic CI half-width.
fn variance_ci(samples: &[f64], z: f64) -> (f64, Interval) {
    let (m, n) = mean(samples.iter().copied());
    let nf = n as f64;
    let (m2, _) = mean(samples.iter().map(|x| (x - m) * (x - m)));
    let (m4, _) = mean(samples.iter().map(|x| (x - m).powi(4)));
    let v = m2 * nf / (nf - 1.0);
    let half = z * ((m4 - v * v).max(0.0) / nf).sqrt();
    (v, Interval { lo: v - half, hi: v + half })
}

/// Paired CI for `Var(a) − Var(b)`.
fn difference_ci(a: &[f64], b: &[f64], z: f64) -> (f64, Interval) {
    let (ma, n) = mean(a.iter().copied());
    let (mb, _) = mean(b.iter().copied());
    let nf = n as f64;
    let c = nf / (nf - 1.0);
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| c * ((x - ma) * (x - ma) - (y - mb) * (y - mb)))
        .collect();
    let (md, _) = mean(d.iter().copied());
    let (vd, _) = mean(d.iter().map(|x| (x - md) * (x - md)));
    let half = z * (vd * nf / (nf - 1.0) / nf).sqrt();
    (md, Interval { lo: md - half, hi: md + half })
}

/// Runs the replication study for every `n` in `cfg.n_list`.
pub fn run_bench(model: &Model, f: &[f64], psi: &[f64], cfg: &BenchConfig) -> Result<BenchTable, BenchError> {
    cfg.validate()?;
    let kinds = cfg.kinds();
    let p = exact::transition_matrix(model)?;
    let mut obs = Observables::new(f, psi)?;
    if f.len() != model.size() {
        return Err(ExactError::Dimension {
            expected: model.size(),
            got: f.len(),
        }
        .into());
    }
    if kinds.contains(&EstimatorKind::TransitionVariate) {
        obs = obs.with_transition(&p)?;
    }
    if kinds.contains(&EstimatorKind::AlternateKernel) {
        let spec = cfg.alternate.as_ref().expect("checked in validate");
        obs = obs.with_alternate(AlternateKernel::new(model, spec)?)?;
    }
    let exact = exact::variance_report(model, f, Some(psi), false)
        .ok()
        .and_then(|r| {
            Some(ExactAnnotation {
                sigma2: r.sigma2,
                sigma2_cv: r.sigma2_cv?,
            })
        });
    let sampler = Sampler::new(model)?;
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 * (1.0 + cfg.level));

    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let key = replication_key(cfg.seed, n);
        let samples: Vec<Vec<f64>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| replicate(&sampler, &obs, &kinds, cfg.init, key, r, n))
            .collect::<Result<_, _>>()?;
        let scale = if cfg.scale_by_n { (n as f64).sqrt() } else { 1.0 };
        let columns: Vec<Vec<f64>> = (0..kinds.len())
            .map(|k| samples.iter().map(|s| scale * s[k]).collect())
            .collect();
        let estimators = kinds
            .iter()
            .enumerate()
            .map(|(k, &kind)| {
                let (variance, variance_ci) = variance_ci(&columns[k], z);
                let (difference, difference_ci) = if k == 0 {
                    (None, None)
                } else {
                    let (d, ci) = difference_ci(&columns[0], &columns[k], z);
                    (Some(d), Some(ci))
                };
                EstimatorRow {
                    kind,
                    variance,
                    variance_ci,
                    difference,
                    difference_ci,
                }
            })
            .collect();
        rows.push(BenchRow { n, estimators });
    }
    Ok(BenchTable {
        rows,
        reps: cfg.reps,
        level: cfg.level,
        seed: cfg.seed,
        exact,
    })
}

/// The three-state model on which waste recycling increases the
/// asymptotic variance: `π = (6,3,1)/10`,
/// `Q = (1/120)[[13,105,2],[84,0,36],[12,108,0]]`, `ρ(a,b) = 4/10` and
/// `ρ = 1` on every other proposable pair.
pub fn counterexample_model() -> Model {
    let states = StateSpace::new(["a", "b", "c"]).expect("distinct labels");
    let pi = TargetDistribution::new(vec![6.0 / 10.0, 3.0 / 10.0, 1.0 / 10.0]);
    let q = SquareMatrix::from_rows(&[
        vec![13.0 / 120.0, 105.0 / 120.0, 2.0 / 120.0],
        vec![84.0 / 120.0, 0.0, 36.0 / 120.0],
        vec![12.0 / 120.0, 108.0 / 120.0, 0.0],
    ])
    .expect("square");
    let q = SelectionMatrix::new(q);
    let mut rho = SquareMatrix::zeros(3);
    for (x, y) in q.admissible_pairs() {
        rho[(x, y)] = 1.0;
    }
    rho[(0, 1)] = 4.0 / 10.0;
    Model::new(
        states,
        pi,
        Proposal::Single {
            q,
            rule: AcceptanceRule::ExplicitRho(rho),
        },
    )
    .expect("counter-example is valid")
}

/// `f(x) = 1{x = c} − P(x,c)` with `P(·,c) = (1, 18, 0)/60`.
pub fn counterexample_f() -> Vec<f64> {
    vec![-1.0 / 60.0, -18.0 / 60.0, 1.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AcceptanceRule;
    use crate::synth;

    fn small_cfg(reps: usize) -> BenchConfig {
        BenchConfig {
            n_list: vec![1, 10],
            reps,
            seed: 42,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn counterexample_p_is_the_printed_matrix() {
        let m = counterexample_model();
        let p = exact::transition_matrix(&m).unwrap();
        let expected = [[38.0, 21.0, 1.0], [42.0, 0.0, 18.0], [6.0, 54.0, 0.0]];
        for x in 0..3 {
            for y in 0..3 {
                assert!((p[(x, y)] - expected[x][y] / 60.0).abs() <= 1e-15, "P({x},{y})");
            }
        }
        let f = counterexample_f();
        assert!(m.pi().mean(&f).abs() < 1e-15);
        for x in 0..3 {
            assert!((f[x] - ((x == 2) as u8 as f64 - p[(x, 2)])).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let m = counterexample_model();
        let f = counterexample_f();
        let a = run_bench(&m, &f, &f, &small_cfg(400)).unwrap();
        let b = run_bench(&m, &f, &f, &small_cfg(400)).unwrap();
        assert_eq!(a, b);
        for row in &a.rows {
            for e in &row.estimators {
                assert!(e.variance_ci.lo <= e.variance_ci.hi);
            }
        }
        assert_eq!(a.to_csv().lines().count(), 1 + 2 * 2);
        assert_eq!(a.to_text().lines().count(), 1 + 2 + 2);
    }

    #[test]
    fn difference_midpoint_is_difference_of_variances() {
        let m = counterexample_model();
        let f = counterexample_f();
        let t = run_bench(&m, &f, &f, &small_cfg(300)).unwrap();
        for row in &t.rows {
            let plain = row.get(EstimatorKind::Plain).unwrap();
            let cv = row.get(EstimatorKind::ControlVariate).unwrap();
            let mid = cv.difference_ci.unwrap().midpoint();
            assert!((mid - (plain.variance - cv.variance)).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_smoke_run() {
        let m = synth::two_state(0.5, AcceptanceRule::Metropolis);
        let cfg = BenchConfig {
            n_list: vec![1, 3],
            reps: 2,
            ..BenchConfig::default()
        };
        let t = run_bench(&m, &[1.0, 0.0], &[1.0, 0.0], &cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn configuration_errors() {
        let m = counterexample_model();
        let f = counterexample_f();
        let bad = |cfg: BenchConfig| run_bench(&m, &f, &f, &cfg).unwrap_err();
        assert!(matches!(bad(BenchConfig { reps: 1, ..small_cfg(1) }), BenchError::Config(_)));
        assert!(matches!(bad(BenchConfig { level: 1.0, ..small_cfg(10) }), BenchError::Config(_)));
        assert!(matches!(
            bad(BenchConfig {
                max_steps: Some(100),
                ..small_cfg(10)
            }),
            BenchError::Budget { requested: 110, .. }
        ));
        assert!(matches!(
            bad(BenchConfig {
                estimators: vec![EstimatorKind::AlternateKernel],
                ..small_cfg(10)
            }),
            BenchError::Config(_)
        ));
    }
}
