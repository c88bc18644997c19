//! JSON model and function files.
//!
//! ```json
//! {
//!   "states": ["a", "b", "c"],
//!   "pi": ["6/10", "3/10", "1/10"],
//!   "single": {
//!     "Q": [["13/120", "105/120", "2/120"], ...],
//!     "acceptance": {"type": "explicit", "rho": [[null, "4/10", 1], ...]}
//!   }
//! }
//! ```
//!
//! A multi-proposal model replaces `single` with
//!
//! ```json
//! "multi": {
//!   "kernel": [[{"set": ["a", "b"], "prob": "1/2"}, ...], ...],
//!   "selection": {"type": "boltzmann"}
//! }
//! ```
//!
//! where `kernel` lists, for each state in `states` order, its proposal
//! sets. An explicit selection kernel is given as
//! `"table": [{"from": "a", "set": ["a", "b"], "kappa": [0.3, 0.7]}, ...]`
//! with `kappa` aligned to `set` as written.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::{
    validate_model, AcceptanceRule, KappaTable, Model, ModelError, MultiProposalKernel, Proposal,
    ProposalSet, SelectionKernelSpec, SelectionMatrix, StateFunction, StateSpace, Subset,
    TargetDistribution,
};
use crate::matrix::SquareMatrix;
use crate::number::Literal;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    pi: Vec<Literal>,
    single: Option<SingleFile>,
    multi: Option<MultiFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SingleFile {
    #[serde(rename = "Q")]
    q: Vec<Vec<Literal>>,
    acceptance: AcceptanceFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AcceptanceFile {
    #[serde(rename = "type")]
    kind: String,
    alpha: Option<Literal>,
    rho: Option<Vec<Vec<Option<Literal>>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiFile {
    kernel: Vec<Vec<KernelEntry>>,
    selection: SelectionFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelEntry {
    set: Vec<String>,
    prob: Literal,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionFile {
    #[serde(rename = "type")]
    kind: String,
    table: Option<Vec<TableEntry>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    from: String,
    set: Vec<String>,
    kappa: Vec<Literal>,
}

fn structure(msg: impl Into<String>) -> ModelError {
    ModelError::Structure(msg.into())
}

fn literal_matrix(rows: &[Vec<Literal>], what: &str) -> Result<SquareMatrix, ModelError> {
    let rows = rows
        .iter()
        .map(|r| r.iter().map(Literal::value).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    SquareMatrix::from_rows(&rows).ok_or_else(|| structure(format!("{what} is not a square matrix")))
}

fn resolve_set(states: &StateSpace, labels: &[String]) -> Result<Subset, ModelError> {
    let idx = labels
        .iter()
        .map(|l| {
            states
                .index_of(l)
                .ok_or_else(|| structure(format!("unknown state `{l}` in proposal set")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Subset::new(idx)
}

fn parse_acceptance(
    acc: &AcceptanceFile,
    q: &SelectionMatrix,
) -> Result<AcceptanceRule, ModelError> {
    let rule = match acc.kind.as_str() {
        "metropolis" => AcceptanceRule::Metropolis,
        "alpha_barker" => {
            let alpha = acc
                .alpha
                .as_ref()
                .ok_or_else(|| structure("alpha_barker acceptance requires `alpha`"))?
                .value()?;
            AcceptanceRule::AlphaBarker { alpha }
        }
        "explicit" => {
            let rows = acc
                .rho
                .as_ref()
                .ok_or_else(|| structure("explicit acceptance requires `rho`"))?;
            let n = q.dim();
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(structure(format!("rho must be {n}x{n}")));
            }
            let mut rho = SquareMatrix::zeros(n);
            for (x, y) in q.admissible_pairs() {
                rho[(x, y)] = rows[x][y]
                    .as_ref()
                    .ok_or_else(|| structure(format!("rho({x},{y}) missing for Q({x},{y}) > 0")))?
                    .value()?;
            }
            AcceptanceRule::ExplicitRho(rho)
        }
        other => return Err(structure(format!("unknown acceptance type `{other}`"))),
    };
    if acc.rho.is_some() && !matches!(rule, AcceptanceRule::ExplicitRho(_)) {
        return Err(structure(format!(
            "acceptance type `{}` conflicts with an explicit `rho`",
            acc.kind
        )));
    }
    if acc.alpha.is_some() && !matches!(rule, AcceptanceRule::AlphaBarker { .. }) {
        return Err(structure(format!(
            "`alpha` is only meaningful for alpha_barker, not `{}`",
            acc.kind
        )));
    }
    Ok(rule)
}

fn parse_multi(states: &StateSpace, multi: &MultiFile) -> Result<Proposal, ModelError> {
    let mut support = Vec::with_capacity(multi.kernel.len());
    for entries in &multi.kernel {
        let sets = entries
            .iter()
            .map(|e| {
                Ok(ProposalSet {
                    set: resolve_set(states, &e.set)?,
                    prob: e.prob.value()?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        support.push(sets);
    }
    let selection = match multi.selection.kind.as_str() {
        "metropolis" => SelectionKernelSpec::MetropolisKappa,
        "boltzmann" => SelectionKernelSpec::BoltzmannKappa,
        "explicit" => {
            let entries = multi
                .selection
                .table
                .as_ref()
                .ok_or_else(|| structure("explicit selection requires `table`"))?;
            let mut table = KappaTable::new();
            for e in entries {
                let from = states
                    .index_of(&e.from)
                    .ok_or_else(|| structure(format!("unknown state `{}` in table", e.from)))?;
                if e.kappa.len() != e.set.len() {
                    return Err(structure(format!(
                        "table entry for `{}` has {} weights for {} states",
                        e.from,
                        e.kappa.len(),
                        e.set.len()
                    )));
                }
                let set = resolve_set(states, &e.set)?;
                // Realign weights with the canonical (sorted) order.
                let mut by_state = BTreeMap::new();
                for (label, w) in e.set.iter().zip(&e.kappa) {
                    by_state.insert(states.index_of(label).expect("resolved"), w.value()?);
                }
                let weights = by_state.into_values().collect();
                if table.insert((from, set.clone()), weights).is_some() {
                    return Err(structure(format!(
                        "selection table lists ({}, {set}) twice",
                        e.from
                    )));
                }
            }
            SelectionKernelSpec::ExplicitKappa(table)
        }
        other => return Err(structure(format!("unknown selection type `{other}`"))),
    };
    if multi.selection.table.is_some() && !matches!(selection, SelectionKernelSpec::ExplicitKappa(_)) {
        return Err(structure(format!(
            "selection type `{}` conflicts with an explicit `table`",
            multi.selection.kind
        )));
    }
    Ok(Proposal::Multi {
        kernel: MultiProposalKernel::new(support),
        selection,
    })
}

/// Parses a model file without checking model invariants.
pub fn parse_model(text: &str) -> Result<Model, ModelError> {
    let file: ModelFile = serde_json::from_str(text)?;
    let states = StateSpace::new(file.states)?;
    let pi = file
        .pi
        .iter()
        .map(Literal::value)
        .collect::<Result<Vec<_>, _>>()?;
    let proposal = match (&file.single, &file.multi) {
        (Some(single), None) => {
            let q = SelectionMatrix::new(literal_matrix(&single.q, "Q")?);
            if q.dim() != states.len() {
                return Err(structure(format!(
                    "Q is {0}x{0} for {1} states",
                    q.dim(),
                    states.len()
                )));
            }
            let rule = parse_acceptance(&single.acceptance, &q)?;
            Proposal::Single { q, rule }
        }
        (None, Some(multi)) => parse_multi(&states, multi)?,
        _ => return Err(structure("exactly one of `single` or `multi` is required")),
    };
    Model::unchecked(states, TargetDistribution::new(pi), proposal)
}

/// Parses and validates a model file.
pub fn load_model(text: &str) -> Result<Model, ModelError> {
    let model = parse_model(text)?;
    let report = validate_model(&model);
    if report.passed() {
        Ok(model)
    } else {
        Err(ModelError::Validation(report))
    }
}

/// Parses a function file: a JSON object mapping every state label of
/// `model` to a number or ratio string.
pub fn load_function(model: &Model, text: &str) -> Result<StateFunction, ModelError> {
    let entries: BTreeMap<String, Literal> = serde_json::from_str(text)?;
    let values = entries
        .iter()
        .map(|(k, v)| Ok((k.as_str(), v.value()?)))
        .collect::<Result<Vec<_>, ModelError>>()?;
    model.function_from_labels(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Proposal;

    pub(crate) const COUNTEREXAMPLE: &str = r#"{
        "states": ["a", "b", "c"],
        "pi": ["6/10", "3/10", "1/10"],
        "single": {
            "Q": [["13/120", "105/120", "2/120"],
                  ["84/120", 0, "36/120"],
                  ["12/120", "108/120", 0]],
            "acceptance": {"type": "explicit",
                           "rho": [[null, "4/10", 1], [1, null, 1], [1, 1, null]]}
        }
    }"#;

    #[test]
    fn counterexample_file_loads() {
        let m = load_model(COUNTEREXAMPLE).unwrap();
        assert_eq!(m.size(), 3);
        let Proposal::Single { q, rule } = m.proposal() else {
            panic!("single expected")
        };
        assert_eq!(q.matrix()[(0, 1)], 105.0 / 120.0);
        let AcceptanceRule::ExplicitRho(r) = rule else {
            panic!("explicit expected")
        };
        assert_eq!(r[(0, 1)], 0.4);
        assert_eq!(m, crate::bench::counterexample_model());
    }

    #[test]
    fn one_state_model_fails_validation() {
        let text = r#"{"states": ["a"], "pi": [1],
            "single": {"Q": [[1]], "acceptance": {"type": "metropolis"}}}"#;
        let err = load_model(text).unwrap_err();
        let ModelError::Validation(report) = err else {
            panic!("validation error expected, got {err}")
        };
        assert!(report.failures().any(|f| f.starts_with("state_count")));
    }

    #[test]
    fn zero_symmetry_violation_is_named() {
        let text = r#"{"states": ["a", "b"], "pi": [0.5, 0.5],
            "single": {"Q": [[0.5, 0.5], [0, 1]], "acceptance": {"type": "metropolis"}}}"#;
        let ModelError::Validation(report) = load_model(text).unwrap_err() else {
            panic!()
        };
        let failed: Vec<_> = report.failures().collect();
        assert!(failed.iter().any(|f| f.starts_with("q_zero_symmetry")), "{failed:?}");
    }

    #[test]
    fn rule_and_explicit_rho_conflict() {
        let text = r#"{"states": ["a", "b"], "pi": [0.5, 0.5],
            "single": {"Q": [[0, 1], [1, 0]],
                       "acceptance": {"type": "metropolis", "rho": [[null, 1], [1, null]]}}}"#;
        assert!(matches!(load_model(text), Err(ModelError::Structure(_))));
    }

    #[test]
    fn both_or_neither_proposal_rejected() {
        let text = r#"{"states": ["a", "b"], "pi": [0.5, 0.5]}"#;
        assert!(matches!(load_model(text), Err(ModelError::Structure(_))));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(load_model("{"), Err(ModelError::Json(_))));
        assert!(matches!(
            load_model(r#"{"states": [], "pi": [], "bogus": 1}"#),
            Err(ModelError::Json(_))
        ));
    }

    #[test]
    fn multi_file_with_explicit_table() {
        let text = r#"{
            "states": ["a", "b"],
            "pi": [0.5, 0.5],
            "multi": {
                "kernel": [[{"set": ["b", "a"], "prob": 1}],
                           [{"set": ["a", "b"], "prob": 1}]],
                "selection": {"type": "explicit", "table": [
                    {"from": "a", "set": ["b", "a"], "kappa": ["3/4", "1/4"]},
                    {"from": "b", "set": ["a", "b"], "kappa": ["3/4", "1/4"]}
                ]}
            }
        }"#;
        let m = load_model(text).unwrap();
        let Proposal::Multi { selection: SelectionKernelSpec::ExplicitKappa(t), .. } = m.proposal()
        else {
            panic!()
        };
        let set = Subset::new(vec![0, 1]).unwrap();
        assert_eq!(t[&(0, set.clone())], vec![0.25, 0.75]);
        assert_eq!(t[&(1, set)], vec![0.75, 0.25]);
    }

    #[test]
    fn function_file() {
        let m = load_model(COUNTEREXAMPLE).unwrap();
        let f = load_function(&m, r#"{"a": "-1/60", "b": "-18/60", "c": 1}"#).unwrap();
        assert_eq!(f.values(), &[-1.0 / 60.0, -18.0 / 60.0, 1.0]);
        assert!(load_function(&m, r#"{"a": 1, "b": 2}"#).is_err());
    }
}
