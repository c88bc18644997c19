//! Exact moments of the short-run estimators by enumerating every
//! trajectory of length `n`.

use wrmc_core::chain::InitialState;
use wrmc_core::exact::{kernel_branches, model_branches, Branch};
use wrmc_core::model::{Model, Proposal, SelectionKernelSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Enumerated {
    /// `I_n(f)`.
    pub plain: Moments,
    /// `I_n(f) + J_n(ψ)`.
    pub cv: Moments,
    /// `I_n(f) + J′_n(ψ)`, when an alternate kernel is given.
    pub prime: Option<Moments>,
    /// Total probability mass visited (1 up to rounding).
    pub mass: f64,
}

#[derive(Default)]
struct Acc {
    mass: f64,
    s: [f64; 3],
    s2: [f64; 3],
}

struct Ctx<'a> {
    branches: &'a [Vec<Branch>],
    alt: Option<&'a [Vec<Branch>]>,
    f: &'a [f64],
    psi: &'a [f64],
    n: usize,
}

fn walk(ctx: &Ctx<'_>, x: usize, depth: usize, prob: f64, sums: [f64; 3], acc: &mut Acc) {
    if depth == ctx.n {
        let n = ctx.n as f64;
        let v = [sums[0] / n, (sums[0] + sums[1]) / n, (sums[0] + sums[2]) / n];
        acc.mass += prob;
        for ((s, s2), v) in acc.s.iter_mut().zip(acc.s2.iter_mut()).zip(v) {
            *s += prob * v;
            *s2 += prob * v * v;
        }
        return;
    }
    for b in &ctx.branches[x] {
        let cond = b.mean(ctx.psi);
        let cond_alt = ctx.alt.map_or(0.0, |alt| {
            alt[x]
                .iter()
                .find(|c| c.set == b.set)
                .expect("alternate kernel covers every proposed set")
                .mean(ctx.psi)
        });
        for (&y, &k) in b.set.states().iter().zip(&b.kappa) {
            let p = prob * b.prob * k;
            if p == 0.0 {
                continue;
            }
            let next = [
                sums[0] + ctx.f[y],
                sums[1] + cond - ctx.psi[y],
                sums[2] + cond_alt - ctx.psi[y],
            ];
            walk(ctx, y, depth + 1, p, next, acc);
        }
    }
}

/// Exact mean and variance of `I_n(f)`, `ℐ_n(f,ψ)` and optionally
/// `I_n(f) + J′_n(ψ)` under initial law `init`.
pub fn enumerate(
    model: &Model,
    f: &[f64],
    psi: &[f64],
    alternate: Option<&SelectionKernelSpec>,
    init: InitialState,
    n: usize,
) -> Enumerated {
    let branches = model_branches(model).expect("valid model");
    let alt_branches = alternate.map(|spec| {
        let Proposal::Multi { kernel, .. } = model.proposal() else {
            panic!("alternate kernels need a multi-proposal model")
        };
        kernel_branches(model.pi(), kernel, spec).expect("valid alternate kernel")
    });
    let ctx = Ctx {
        branches: &branches,
        alt: alt_branches.as_deref(),
        f,
        psi,
        n,
    };
    let mut acc = Acc::default();
    match init {
        InitialState::Stationary => {
            for x in 0..model.size() {
                walk(&ctx, x, 0, model.pi()[x], [0.0; 3], &mut acc);
            }
        }
        InitialState::State(s) => walk(&ctx, s, 0, 1.0, [0.0; 3], &mut acc),
    }
    let m = |i: usize| {
        let mean = acc.s[i] / acc.mass;
        Moments {
            mean,
            var: acc.s2[i] / acc.mass - mean * mean,
        }
    };
    Enumerated {
        plain: m(0),
        cv: m(1),
        prime: alternate.map(|_| m(2)),
        mass: acc.mass,
    }
}
