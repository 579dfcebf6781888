//! Oriented rewriting over paths and the bounded equivalence decision.
//!
//! Each relation is oriented longer-side → shorter-side (ties broken by
//! taking the lexicographically larger arrow sequence as the pattern), so
//! every rule strictly decreases the (length, lexicographic) order and
//! rewriting terminates. Identical normal forms prove equivalence; when they
//! differ the decision falls back to the bounded congruence closure, and
//! paths outside the bound come back `Undecided` rather than guessed.

use super::closure::congruence_closure_bounded;
use super::{Path, Schema, SchemaGraph, DEFAULT_MAX_STEPS};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct Rule {
    pattern: Vec<String>,
    replacement: Vec<String>,
}

/// Oriented relations plus a step budget.
#[derive(Clone, Debug)]
pub struct RewriteSystem {
    graph: SchemaGraph,
    rules: Vec<Rule>,
    max_steps: usize,
}

fn seq_order(a: &[String], b: &[String]) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

impl RewriteSystem {
    /// Orients every relation of the schema. Relations whose two sides are
    /// identical contribute no rule.
    pub fn from_schema(schema: &Schema, max_steps: usize) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        let mut rules = Vec::new();
        for rel in schema.relations() {
            let lhs = rel.lhs.arrows().to_vec();
            let rhs = rel.rhs.arrows().to_vec();
            let (pattern, replacement) = match seq_order(&lhs, &rhs) {
                std::cmp::Ordering::Greater => (lhs, rhs),
                std::cmp::Ordering::Less => (rhs, lhs),
                std::cmp::Ordering::Equal => continue,
            };
            debug_assert!(
                !pattern.is_empty(),
                "oriented pattern cannot be an identity"
            );
            rules.push(Rule {
                pattern,
                replacement,
            });
        }
        Ok(RewriteSystem {
            graph: schema.graph().clone(),
            rules,
            max_steps,
        })
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// One rewrite at the leftmost position where any rule matches; among
    /// rules matching there, the earliest-declared wins. Returns `None` at a
    /// fixed point.
    fn step(&self, arrows: &[String]) -> Option<Vec<String>> {
        for pos in 0..arrows.len() {
            for rule in &self.rules {
                let end = pos + rule.pattern.len();
                if end <= arrows.len() && arrows[pos..end] == rule.pattern[..] {
                    let mut out = Vec::with_capacity(
                        arrows.len() - rule.pattern.len() + rule.replacement.len(),
                    );
                    out.extend_from_slice(&arrows[..pos]);
                    out.extend_from_slice(&rule.replacement);
                    out.extend_from_slice(&arrows[end..]);
                    return Some(out);
                }
            }
        }
        None
    }
}

/// Rewrites to a fixed point of the oriented rules. Endpoints are preserved;
/// exhausting the step budget is reported, never silently truncated.
pub fn normalize(path: &Path, rw: &RewriteSystem) -> Result<Path> {
    path.validate(&rw.graph)?;
    let source = path.source().to_string();
    let mut arrows = path.arrows().to_vec();
    for _ in 0..rw.max_steps {
        match rw.step(&arrows) {
            Some(next) => arrows = next,
            None => {
                return if arrows.is_empty() {
                    Ok(Path::identity(source))
                } else {
                    Path::from_arrows(&rw.graph, arrows)
                };
            }
        }
    }
    if rw.step(&arrows).is_none() {
        return if arrows.is_empty() {
            Ok(Path::identity(source))
        } else {
            Path::from_arrows(&rw.graph, arrows)
        };
    }
    Err(Error::Undecided {
        steps: rw.max_steps,
    })
}

/// Outcome of a bounded equivalence test.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Equivalence {
    Equal,
    Distinct,
    Undecided,
}

/// Decides whether two parallel paths are related by the schema's
/// congruence, within the `max_len` closure bound.
pub fn equivalent(p: &Path, q: &Path, schema: &Schema, max_len: usize) -> Result<Equivalence> {
    let graph = schema.graph();
    p.validate(graph)?;
    q.validate(graph)?;
    if p.source() != q.source() || p.target(graph)? != q.target(graph)? {
        return Err(Error::Schema(format!("non-parallel paths `{p}` and `{q}`")));
    }

    let rw = RewriteSystem::from_schema(schema, DEFAULT_MAX_STEPS)?;
    match (normalize(p, &rw), normalize(q, &rw)) {
        (Ok(np), Ok(nq)) if np == nq => return Ok(Equivalence::Equal),
        (Err(Error::Undecided { .. }), _) | (_, Err(Error::Undecided { .. })) => {
            return Ok(Equivalence::Undecided)
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
        _ => {}
    }

    // Distinct normal forms do not prove distinctness (the oriented system
    // is not checked for confluence); consult the closure oracle.
    if p.len() > max_len || q.len() > max_len {
        return Ok(Equivalence::Undecided);
    }
    let partition = congruence_closure_bounded(schema, max_len)?;
    match (partition.class_of(p), partition.class_of(q)) {
        (Some(a), Some(b)) if a == b => Ok(Equivalence::Equal),
        (Some(_), Some(_)) => Ok(Equivalence::Distinct),
        _ => Ok(Equivalence::Undecided),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{enumerate_all_paths, parse_schema, CYCLEGAN_DSL};
    use super::*;

    fn cyclegan() -> Schema {
        parse_schema(CYCLEGAN_DSL).unwrap()
    }

    fn rw(schema: &Schema) -> RewriteSystem {
        RewriteSystem::from_schema(schema, DEFAULT_MAX_STEPS).unwrap()
    }

    fn path(schema: &Schema, arrows: &[&str]) -> Path {
        Path::from_arrows(
            schema.graph(),
            arrows.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn fg_normalizes_to_identity() {
        let s = cyclegan();
        let n = normalize(&path(&s, &["f", "g"]), &rw(&s)).unwrap();
        assert_eq!(n, Path::identity("A"));
    }

    #[test]
    fn identity_is_already_normal() {
        let s = cyclegan();
        let n = normalize(&Path::identity("A"), &rw(&s)).unwrap();
        assert_eq!(n, Path::identity("A"));
    }

    #[test]
    fn fgf_normalizes_to_f() {
        let s = cyclegan();
        let n = normalize(&path(&s, &["f", "g", "f"]), &rw(&s)).unwrap();
        assert_eq!(n, path(&s, &["f"]));
    }

    #[test]
    fn normalize_is_idempotent_and_preserves_endpoints_up_to_len_8() {
        let s = cyclegan();
        let rw = rw(&s);
        for p in enumerate_all_paths(&s, 8).unwrap() {
            let n = normalize(&p, &rw).unwrap();
            assert_eq!(normalize(&n, &rw).unwrap(), n, "not idempotent at {p}");
            assert_eq!(n.source(), p.source());
            assert_eq!(
                n.target(s.graph()).unwrap(),
                p.target(s.graph()).unwrap(),
                "endpoints moved for {p}"
            );
        }
    }

    #[test]
    fn cyclegan_normal_forms_up_to_len_6() {
        let s = cyclegan();
        let rw = rw(&s);
        let mut forms: Vec<String> = enumerate_all_paths(&s, 6)
            .unwrap()
            .iter()
            .map(|p| normalize(p, &rw).unwrap().display())
            .collect();
        forms.sort();
        forms.dedup();
        assert_eq!(forms, vec!["f", "g", "id_A", "id_B"]);
    }

    #[test]
    fn equivalent_on_the_cycle_relation() {
        let s = cyclegan();
        let fg = path(&s, &["f", "g"]);
        assert_eq!(
            equivalent(&fg, &Path::identity("A"), &s, 8).unwrap(),
            Equivalence::Equal
        );
    }

    #[test]
    fn equivalent_is_reflexive_on_generators() {
        let s = cyclegan();
        let f = path(&s, &["f"]);
        assert_eq!(equivalent(&f, &f, &s, 8).unwrap(), Equivalence::Equal);
    }

    #[test]
    fn parallel_free_generators_are_distinct() {
        let s = parse_schema("schema P { objects: A, B arrows: f: A -> B, h: A -> B }").unwrap();
        let f = path(&s, &["f"]);
        let h = path(&s, &["h"]);
        assert_eq!(equivalent(&f, &h, &s, 8).unwrap(), Equivalence::Distinct);
    }

    #[test]
    fn non_parallel_paths_rejected() {
        let s = cyclegan();
        let f = path(&s, &["f"]);
        assert!(equivalent(&f, &Path::identity("A"), &s, 8).is_err());
    }

    #[test]
    fn out_of_bound_paths_without_nf_proof_are_undecided() {
        // no relations: nothing rewrites, so two long parallel loops of
        // different spellings fall past the closure bound
        let s = parse_schema("schema L { objects: A arrows: u: A -> A, v: A -> A }").unwrap();
        let long_u = path(&s, &["u", "u", "u", "v"]);
        let long_v = path(&s, &["v", "u", "u", "u"]);
        assert_eq!(
            equivalent(&long_u, &long_v, &s, 3).unwrap(),
            Equivalence::Undecided
        );
    }

    #[test]
    fn equal_length_relation_orients_lexicographically() {
        let s = parse_schema(
            "schema E { objects: A, B arrows: f: A -> B, h: A -> B equations: f = h }",
        )
        .unwrap();
        let rw = rw(&s);
        // `h` is the lexicographically larger side, so it rewrites to `f`
        assert_eq!(normalize(&path(&s, &["h"]), &rw).unwrap(), path(&s, &["f"]));
        assert_eq!(normalize(&path(&s, &["f"]), &rw).unwrap(), path(&s, &["f"]));
    }

    #[test]
    fn step_budget_reported_as_undecided() {
        let s = cyclegan();
        let tight = RewriteSystem::from_schema(&s, 1).unwrap();
        // needs two rewrites: [f,g,f,g] -> [f,g] -> id
        let p = path(&s, &["f", "g", "f", "g"]);
        match normalize(&p, &tight) {
            Err(Error::Undecided { steps: 1 }) => {}
            other => panic!("expected Undecided, got {other:?}"),
        }
    }
}
