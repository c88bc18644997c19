use std::fmt;

use super::{
    acceptance_matrix, AcceptanceRule, Model, MultiProposalKernel, Proposal, SelectionKernelSpec,
    SelectionMatrix, TargetDistribution, TOL,
};
use crate::exact::kappa_of;

/// Outcome of one named model check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Largest violation of the underlying identity, when the check is
    /// numeric.
    pub residual: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `name: detail` for each failed check.
    pub fn failures(&self) -> impl Iterator<Item = String> + '_ {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
    }

    fn numeric(&mut self, name: &'static str, residual: f64, tol: f64, detail: String) {
        self.checks.push(Check {
            name,
            passed: residual <= tol,
            residual: Some(residual),
            detail,
        });
    }

    fn verdict(&mut self, name: &'static str, offenders: Vec<String>, ok_detail: &str) {
        let passed = offenders.is_empty();
        let detail = if passed {
            ok_detail.to_string()
        } else {
            const SHOWN: usize = 8;
            let mut d = offenders.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
            if offenders.len() > SHOWN {
                d.push_str(&format!(" (+{} more)", offenders.len() - SHOWN));
            }
            d
        };
        self.checks.push(Check {
            name,
            passed,
            residual: None,
            detail,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "pass" } else { "FAIL" };
            match c.residual {
                Some(r) => writeln!(f, "{status}  {:<32} residual {r:.3e}  {}", c.name, c.detail)?,
                None => writeln!(f, "{status}  {:<32} {}", c.name, c.detail)?,
            }
        }
        Ok(())
    }
}

/// Pairs `(x, y)`, `x ≠ y`, such that `y` is not reachable from `x` in
/// the directed graph with the given edges.
pub(crate) fn unreachable_pairs(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|x| (0..n).filter(|&y| y != x && edge(x, y)).collect())
        .collect();
    let mut missing = Vec::new();
    for start in 0..n {
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        missing.extend((0..n).filter(|&y| !seen[y]).map(|y| (start, y)));
    }
    missing
}

fn pair_names(model: &Model, pairs: &[(usize, usize)]) -> Vec<String> {
    let s = model.states();
    pairs
        .iter()
        .map(|&(x, y)| format!("{}->{}", s.label(x), s.label(y)))
        .collect()
}

/// Runs every model check. Never fails; violations are report entries.
pub fn validate_model(model: &Model) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = model.size();
    let pi = model.pi();

    r.verdict(
        "state_count",
        if n >= 2 {
            vec![]
        } else {
            vec![format!("{n} state(s), at least 2 required")]
        },
        &format!("{n} states"),
    );
    let nonpositive: Vec<String> = (0..n)
        .filter(|&x| pi[x].is_nan() || pi[x] <= 0.0)
        .map(|x| format!("pi({}) = {}", model.states().label(x), pi[x]))
        .collect();
    r.verdict("pi_positive", nonpositive, "all entries > 0");
    let total: f64 = pi.as_slice().iter().sum();
    r.numeric("pi_normalized", (total - 1.0).abs(), TOL, format!("sum = {total}"));

    match model.proposal() {
        Proposal::Single { q, rule } => check_single(&mut r, model, pi, q, rule),
        Proposal::Multi { kernel, selection } => check_multi(&mut r, model, pi, kernel, selection),
    }
    r
}

fn check_single(
    r: &mut ValidationReport,
    model: &Model,
    pi: &TargetDistribution,
    q: &SelectionMatrix,
    rule: &AcceptanceRule,
) {
    let n = q.dim();
    let qm = q.matrix();
    let names = |x: usize, y: usize| format!("({},{})", model.states().label(x), model.states().label(y));

    let negative: Vec<String> = (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .filter(|&(x, y)| qm[(x, y)].is_nan() || qm[(x, y)] < 0.0)
        .map(|(x, y)| names(x, y))
        .collect();
    r.verdict("q_nonnegative", negative, "all entries >= 0");
    r.numeric(
        "q_row_stochastic",
        qm.row_sum_residual(),
        TOL,
        "max |row sum - 1|".into(),
    );
    let asymmetric: Vec<String> = q
        .admissible_pairs()
        .filter(|&(x, y)| qm[(y, x)] <= 0.0)
        .map(|(x, y)| format!("Q{} > 0 but Q{} = 0", names(x, y), names(y, x)))
        .collect();
    r.verdict("q_zero_symmetry", asymmetric, "Q(x,y) = 0 iff Q(y,x) = 0");
    let unreachable = unreachable_pairs(n, |x, y| qm[(x, y)] > 0.0);
    r.verdict(
        "irreducibility",
        pair_names(model, &unreachable),
        "selection graph strongly connected",
    );

    if let AcceptanceRule::AlphaBarker { alpha } = rule {
        let min_ratio = q
            .admissible_pairs()
            .filter(|&(x, y)| qm[(y, x)] > 0.0)
            .map(|(x, y)| (pi[y] * qm[(y, x)]) / (pi[x] * qm[(x, y)]))
            .fold(f64::INFINITY, f64::min);
        let bound = 1.0 + min_ratio;
        let mut bad = Vec::new();
        if !(*alpha > 0.0 && *alpha < 2.0) {
            bad.push(format!("alpha = {alpha} outside (0, 2)"));
        }
        if *alpha > bound + TOL {
            bad.push(format!("alpha = {alpha} exceeds 1 + min ratio = {bound}"));
        }
        r.verdict("alpha_bound", bad, &format!("alpha = {alpha} <= {bound}"));
    }

    let rho = acceptance_matrix(pi, q, rule);
    let mut out_of_range = Vec::new();
    for (x, y) in q.admissible_pairs() {
        let v = rho[(x, y)];
        if !(v > 0.0 && v <= 1.0 + TOL) {
            out_of_range.push(format!("rho{} = {v}", names(x, y)));
        }
    }
    r.verdict("rho_range", out_of_range, "all rho in (0, 1]");

    let mut db = 0.0_f64;
    for (x, y) in q.admissible_pairs() {
        let lhs = rho[(x, y)] * pi[x] * qm[(x, y)];
        let rhs = rho[(y, x)] * pi[y] * qm[(y, x)];
        db = db.max((lhs - rhs).abs());
    }
    r.numeric(
        "detailed_balance",
        db,
        TOL,
        "max |rho(x,y)pi(x)Q(x,y) - rho(y,x)pi(y)Q(y,x)|".into(),
    );
}

fn check_multi(
    r: &mut ValidationReport,
    model: &Model,
    pi: &TargetDistribution,
    kernel: &MultiProposalKernel,
    selection: &SelectionKernelSpec,
) {
    let n = kernel.len();
    let label = |x: usize| model.states().label(x).to_string();

    let mut negative = Vec::new();
    let mut missing_start = Vec::new();
    let mut duplicates = Vec::new();
    let mut norm = 0.0_f64;
    for x in 0..n {
        let support = kernel.support(x);
        let total: f64 = support.iter().map(|e| e.prob).sum();
        norm = norm.max((total - 1.0).abs());
        for (i, e) in support.iter().enumerate() {
            if e.prob.is_nan() || e.prob < 0.0 {
                negative.push(format!("Q({}, {}) = {}", label(x), e.set, e.prob));
            }
            if !e.set.contains(x) {
                missing_start.push(format!("{} not in {}", label(x), e.set));
            }
            if support[..i].iter().any(|o| o.set == e.set) {
                duplicates.push(format!("{} listed twice for {}", e.set, label(x)));
            }
        }
    }
    r.verdict("kernel_nonnegative", negative, "all weights >= 0");
    r.verdict("kernel_contains_start", missing_start, "every set contains its start");
    r.numeric("kernel_normalized", norm, TOL, "max |sum_A Q(x,A) - 1|".into());
    r.verdict("kernel_distinct_subsets", duplicates, "no repeated sets");

    // Selection weights for every (x, A) in the support.
    let mut undefined = Vec::new();
    let mut sel_norm = 0.0_f64;
    let mut sel_range = Vec::new();
    let mut min_diag = f64::INFINITY;
    let mut kappas = Vec::with_capacity(n);
    for x in 0..n {
        let mut row = Vec::new();
        for e in kernel.support(x) {
            match kappa_of(pi, kernel, selection, x, &e.set) {
                Ok(w) => {
                    let total: f64 = w.iter().sum();
                    sel_norm = sel_norm.max((total - 1.0).abs());
                    if w.iter().any(|v| !(*v >= -TOL && *v <= 1.0 + TOL)) {
                        sel_range.push(format!("kappa({}, {}) = {w:?}", label(x), e.set));
                    }
                    if let Some(p) = e.set.position(x) {
                        min_diag = min_diag.min(w[p]);
                    }
                    row.push(Some(w));
                }
                Err(err) => {
                    undefined.push(format!("({}, {}): {err}", label(x), e.set));
                    row.push(None);
                }
            }
        }
        kappas.push(row);
    }
    r.verdict("selection_defined", undefined, "kappa defined on the whole support");
    r.numeric("selection_normalized", sel_norm, TOL, "max |sum_y kappa(x,A,y) - 1|".into());
    r.verdict("selection_range", sel_range, "all kappa in [0, 1]");
    if matches!(selection, SelectionKernelSpec::MetropolisKappa) {
        let violation = if min_diag.is_finite() { (-min_diag).max(0.0) } else { 0.0 };
        r.numeric(
            "selection_diagonal_nonnegative",
            violation,
            TOL,
            format!("min kappa(x,A,x) = {min_diag}"),
        );
    }

    // π(x)𝒬(x,A)κ(x,A,y) = π(y)𝒬(y,A)κ(y,A,x) for x, y ∈ A with 𝒬(x,A) > 0.
    let weight = |x: usize, set: &super::Subset| -> Option<&Vec<f64>> {
        let i = kernel.support(x).iter().position(|e| &e.set == set)?;
        kappas[x][i].as_ref()
    };
    let mut rev = 0.0_f64;
    for x in 0..n {
        for (i, e) in kernel.support(x).iter().enumerate() {
            let Some(kx) = &kappas[x][i] else { continue };
            for (iy, &y) in e.set.states().iter().enumerate() {
                if y == x {
                    continue;
                }
                let lhs = pi[x] * e.prob * kx[iy];
                let qy = kernel.prob(y, &e.set);
                let rhs = if qy > 0.0 {
                    match weight(y, &e.set) {
                        Some(ky) => pi[y] * qy * ky[e.set.position(x).expect("x in A")],
                        None => f64::NAN,
                    }
                } else {
                    0.0
                };
                let d = (lhs - rhs).abs();
                rev = if d.is_nan() { f64::INFINITY } else { rev.max(d) };
            }
        }
    }
    r.numeric(
        "reversibility",
        rev,
        TOL,
        "max |pi(x)Q(x,A)kappa(x,A,y) - pi(y)Q(y,A)kappa(y,A,x)|".into(),
    );

    let edge = |x: usize, y: usize| {
        kernel.support(x).iter().enumerate().any(|(i, e)| {
            e.prob > 0.0
                && e.set
                    .position(y)
                    .zip(kappas[x][i].as_ref())
                    .is_some_and(|(p, w)| w[p] > 0.0)
        })
    };
    let unreachable = unreachable_pairs(n, edge);
    r.verdict(
        "irreducibility",
        pair_names(model, &unreachable),
        "every state reachable through positive Q(x,A)kappa(x,A,y)",
    );
}
