//! Small hand-built models and random valid models.
//!
//! The fixed models have closed-form transition matrices and are used as
//! unit fixtures. The random generators produce irreducible, reversible
//! models of every acceptance and selection rule for property sweeps; all
//! of them are deterministic in the supplied generator.

use rand::Rng;

use crate::matrix::SquareMatrix;
use crate::model::{
    acceptance_matrix, AcceptanceRule, KappaTable, Model, MultiProposalKernel, Proposal, ProposalSet,
    SelectionKernelSpec, SelectionMatrix, StateSpace, Subset, TargetDistribution,
};

fn labels(n: usize) -> StateSpace {
    StateSpace::new((0..n).map(|i| format!("s{i}"))).expect("distinct labels")
}

fn single(pi: Vec<f64>, q: Vec<Vec<f64>>, rule: AcceptanceRule) -> Model {
    let n = pi.len();
    let q = SelectionMatrix::new(SquareMatrix::from_rows(&q).expect("square"));
    Model::new(labels(n), TargetDistribution::new(pi), Proposal::Single { q, rule }).expect("valid synthetic model")
}

fn multi(pi: Vec<f64>, support: Vec<Vec<(Vec<usize>, f64)>>, selection: SelectionKernelSpec) -> Model {
    let n = pi.len();
    Model::new(labels(n), TargetDistribution::new(pi), multi_proposal(support, selection))
        .expect("valid synthetic model")
}

fn multi_proposal(support: Vec<Vec<(Vec<usize>, f64)>>, selection: SelectionKernelSpec) -> Proposal {
    let support = support
        .into_iter()
        .map(|sets| {
            sets.into_iter()
                .map(|(s, prob)| ProposalSet {
                    set: Subset::new(s).expect("distinct states"),
                    prob,
                })
                .collect()
        })
        .collect();
    Proposal::Multi {
        kernel: MultiProposalKernel::new(support),
        selection,
    }
}

/// Uniform `π` on `n` states, `Q(x,y) = 1/n`, Metropolis acceptance.
pub fn symmetric_uniform(n: usize) -> Model {
    single(vec![1.0 / n as f64; n], vec![vec![1.0 / n as f64; n]; n], AcceptanceRule::Metropolis)
}

/// Two states with `π = (p, 1 − p)` and `Q` swapping them.
pub fn two_state(p: f64, rule: AcceptanceRule) -> Model {
    single(vec![p, 1.0 - p], vec![vec![0.0, 1.0], vec![1.0, 0.0]], rule)
}

/// `π = (5,3,2)/10`, each state proposing one of its two pair sets.
pub fn three_state_pair_kernel(selection: SelectionKernelSpec) -> Model {
    multi(
        vec![0.5, 0.3, 0.2],
        vec![
            vec![(vec![0, 1], 0.6), (vec![0, 2], 0.4)],
            vec![(vec![0, 1], 0.5), (vec![1, 2], 0.5)],
            vec![(vec![0, 2], 0.3), (vec![1, 2], 0.7)],
        ],
        selection,
    )
}

/// Uniform `π`; every state proposes the full state space.
pub fn uniform_full_set(n: usize, selection: SelectionKernelSpec) -> Model {
    let all: Vec<usize> = (0..n).collect();
    multi(vec![1.0 / n as f64; n], vec![vec![(all, 1.0)]; n], selection)
}

/// Three states with `π ∝ weights`, each proposing `{0,1,2}`, with
/// Metropolis selection.
pub fn weighted_triple(weights: &[f64]) -> Model {
    let total: f64 = weights.iter().sum();
    multi(
        weights.iter().map(|w| w / total).collect(),
        vec![vec![(vec![0, 1, 2], 1.0)]; 3],
        SelectionKernelSpec::MetropolisKappa,
    )
}

/// Every state proposes only itself. Reducible, so returned unvalidated.
pub fn stay_put(n: usize) -> Model {
    let support = (0..n).map(|x| vec![(vec![x], 1.0)]).collect();
    Model::unchecked(
        labels(n),
        TargetDistribution::new(vec![1.0 / n as f64; n]),
        multi_proposal(support, SelectionKernelSpec::MetropolisKappa),
    )
    .expect("consistent dimensions")
}

/// Path `0 − 1 − … − (n−1)` with `π(x) ∝ e^{−εx}` and symmetric
/// nearest-neighbour proposals. Every admissible ratio is `e^{±ε}`.
pub fn gibbs_path(n: usize, eps: f64, rule: AcceptanceRule) -> Model {
    let weights: Vec<f64> = (0..n).map(|x| (-eps * x as f64).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut q = vec![vec![0.0; n]; n];
    for x in 0..n {
        if x > 0 {
            q[x][x - 1] = 0.5;
        }
        if x + 1 < n {
            q[x][x + 1] = 0.5;
        }
        q[x][x] = 1.0 - q[x].iter().sum::<f64>();
    }
    single(weights.iter().map(|w| w / total).collect(), q, rule)
}

/// Acceptance rules of random single-proposal models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Metropolis,
    AlphaBarker,
    Explicit,
}

/// Selection rules of random multi-proposal models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionKind {
    Metropolis,
    Boltzmann,
    Explicit,
}

/// A random positive probability vector bounded away from zero.
pub fn random_pi<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Uniform values in `[−1, 1)`.
pub fn random_function<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Largest `α` allowed for the given `π` and `Q`: `1 + min` admissible
/// ratio `π(y)Q(y,x)/(π(x)Q(x,y))`, capped at 2.
pub fn alpha_limit(pi: &[f64], q: &SquareMatrix) -> f64 {
    let n = pi.len();
    let mut min_ratio = f64::INFINITY;
    for x in 0..n {
        for y in 0..n {
            if x != y && q[(x, y)] > 0.0 {
                min_ratio = min_ratio.min(pi[y] * q[(y, x)] / (pi[x] * q[(x, y)]));
            }
        }
    }
    (1.0 + min_ratio).min(2.0)
}

/// Random connected symmetric support: a spanning path plus extra edges.
#[allow(clippy::needless_range_loop)]
fn random_edges<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Vec<bool>> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edge = vec![vec![false; n]; n];
    for w in order.windows(2) {
        edge[w[0]][w[1]] = true;
        edge[w[1]][w[0]] = true;
    }
    for x in 0..n {
        for y in x + 1..n {
            if rng.random_bool(0.4) {
                edge[x][y] = true;
                edge[y][x] = true;
            }
        }
    }
    edge
}

/// A random irreducible single-proposal model on `n ≥ 2` states.
pub fn random_single<R: Rng + ?Sized>(rng: &mut R, n: usize, kind: RuleKind) -> Model {
    let pi = random_pi(rng, n);
    let edge = random_edges(rng, n);
    let mut q = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in 0..n {
            if edge[x][y] {
                q[x][y] = rng.random_range(0.1..1.0);
            }
        }
        if rng.random_bool(0.5) {
            q[x][x] = rng.random_range(0.0..1.0);
        }
        let total: f64 = q[x].iter().sum();
        for v in &mut q[x] {
            *v /= total;
        }
    }
    let qm = SquareMatrix::from_rows(&q).expect("square");
    let rule = match kind {
        RuleKind::Metropolis => AcceptanceRule::Metropolis,
        RuleKind::AlphaBarker => {
            let limit = alpha_limit(&pi, &qm);
            AcceptanceRule::AlphaBarker {
                alpha: rng.random_range(0.1..limit),
            }
        }
        RuleKind::Explicit => {
            let mut rho = SquareMatrix::zeros(n);
            for x in 0..n {
                for y in x + 1..n {
                    if q[x][y] > 0.0 {
                        let (fx, fy) = (pi[x] * q[x][y], pi[y] * q[y][x]);
                        let flow = rng.random_range(0.2..=1.0) * fx.min(fy);
                        rho[(x, y)] = (flow / fx).min(1.0);
                        rho[(y, x)] = (flow / fy).min(1.0);
                    }
                }
            }
            AcceptanceRule::ExplicitRho(rho)
        }
    };
    single(pi, q, rule)
}

/// A random irreducible multi-proposal model on `n ≥ 2` states. Every
/// proposal set is proposed from each of its members.
#[allow(clippy::needless_range_loop)]
pub fn random_multi<R: Rng + ?Sized>(rng: &mut R, n: usize, kind: SelectionKind) -> Model {
    let pi = random_pi(rng, n);
    let mut family: Vec<Vec<usize>> = (0..n - 1).map(|x| vec![x, x + 1]).collect();
    for _ in 0..rng.random_range(0..=n) {
        let size = rng.random_range(2..=n.min(4));
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..size {
            let j = rng.random_range(i..n);
            pool.swap(i, j);
        }
        let mut set = pool[..size].to_vec();
        set.sort_unstable();
        family.push(set);
    }
    for x in 0..n {
        if rng.random_bool(0.3) {
            family.push(vec![x]);
        }
    }
    family.sort();
    family.dedup();

    let support: Vec<Vec<(Vec<usize>, f64)>> = (0..n)
        .map(|x| {
            let mut sets: Vec<(Vec<usize>, f64)> = family
                .iter()
                .filter(|s| s.contains(&x))
                .map(|s| (s.clone(), rng.random_range(0.1..1.0)))
                .collect();
            let total: f64 = sets.iter().map(|s| s.1).sum();
            for s in &mut sets {
                s.1 /= total;
            }
            sets
        })
        .collect();

    let selection = match kind {
        SelectionKind::Metropolis => SelectionKernelSpec::MetropolisKappa,
        SelectionKind::Boltzmann => SelectionKernelSpec::BoltzmannKappa,
        SelectionKind::Explicit => {
            let mut table = KappaTable::new();
            for set in &family {
                let w: Vec<f64> = set
                    .iter()
                    .map(|&z| {
                        let prob = support[z].iter().find(|(s, _)| s == set).map_or(0.0, |s| s.1);
                        pi[z] * prob
                    })
                    .collect();
                let total: f64 = w.iter().sum();
                let k = set.len();
                let mut u = vec![vec![0.0; k]; k];
                for i in 0..k {
                    for j in i + 1..k {
                        let v = rng.random_range(0.2..=1.0);
                        u[i][j] = v;
                        u[j][i] = v;
                    }
                }
                for (i, &z) in set.iter().enumerate() {
                    let mut row: Vec<f64> = (0..k).map(|j| if j == i { 0.0 } else { u[i][j] * w[j] / total }).collect();
                    row[i] = 1.0 - row.iter().sum::<f64>();
                    table.insert((z, Subset::new(set.clone()).expect("distinct states")), row);
                }
            }
            SelectionKernelSpec::ExplicitKappa(table)
        }
    };
    multi(pi, support, selection)
}

/// A random AlphaBarker model on which every admissible ratio is
/// `e^{±ε}`: states sit on energy levels `0..L` and only neighbouring
/// levels are connected, through a symmetric `Q`.
pub fn random_constant_ratio<R: Rng + ?Sized>(rng: &mut R, n: usize, eps: f64, alpha: f64) -> Model {
    let levels_count = rng.random_range(2..=n);
    let level: Vec<usize> = (0..n)
        .map(|x| if x < levels_count { x } else { rng.random_range(0..levels_count) })
        .collect();
    let weights: Vec<f64> = level.iter().map(|&l| (-eps * l as f64).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut s = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in x + 1..n {
            if level[x].abs_diff(level[y]) == 1 {
                let v = rng.random_range(0.2..1.0);
                s[x][y] = v;
                s[y][x] = v;
            }
        }
    }
    let max_row = s.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let scale = max_row * rng.random_range(1.0..1.5);
    for (x, row) in s.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= scale;
        }
        row[x] = 1.0 - row.iter().sum::<f64>();
    }
    single(
        weights.iter().map(|w| w / total).collect(),
        s,
        AcceptanceRule::AlphaBarker { alpha },
    )
}

/// A random model of any flavour: single or multi proposal, any rule.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, max_states: usize) -> Model {
    let n = rng.random_range(2..=max_states.max(2));
    match rng.random_range(0..6) {
        0 => random_single(rng, n, RuleKind::Metropolis),
        1 => random_single(rng, n, RuleKind::AlphaBarker),
        2 => random_single(rng, n, RuleKind::Explicit),
        3 => random_multi(rng, n, SelectionKind::Metropolis),
        4 => random_multi(rng, n, SelectionKind::Boltzmann),
        _ => random_multi(rng, n, SelectionKind::Explicit),
    }
}

/// `ρ` of a single-proposal model; `None` for multi-proposal models.
pub fn rho_of(model: &Model) -> Option<SquareMatrix> {
    match model.proposal() {
        Proposal::Single { q, rule } => Some(acceptance_matrix(model.pi(), q, rule)),
        Proposal::Multi { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn random_models_validate() {
        let mut r = rng::stream(1, 0);
        for n in 2..=6 {
            for kind in [RuleKind::Metropolis, RuleKind::AlphaBarker, RuleKind::Explicit] {
                let _ = random_single(&mut r, n, kind);
            }
            for kind in [SelectionKind::Metropolis, SelectionKind::Boltzmann, SelectionKind::Explicit] {
                let _ = random_multi(&mut r, n, kind);
            }
            let _ = random_constant_ratio(&mut r, n, 0.5, 1.5);
        }
        for _ in 0..50 {
            let _ = random_model(&mut r, 6);
        }
    }

    #[test]
    fn gibbs_path_ratios_are_constant() {
        let m = gibbs_path(5, 0.3, AcceptanceRule::AlphaBarker { alpha: 1.0 });
        let Proposal::Single { q, .. } = m.proposal() else { panic!() };
        let pi = m.pi().as_slice();
        for (x, y) in q.admissible_pairs() {
            let r = pi[y] * q.matrix()[(y, x)] / (pi[x] * q.matrix()[(x, y)]);
            assert!((r.ln().abs() - 0.3).abs() < 1e-12);
        }
    }
}
