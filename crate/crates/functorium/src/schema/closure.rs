//! Bounded congruence closure over enumerated paths.
//!
//! The universe is every path of length ≤ `max_len` from every object. The
//! partition starts from the relation pairs and is closed under pre- and
//! post-composition by single arrows whenever the composite stays within the
//! bound, using union-find with a worklist of newly merged pairs. This is
//! the testing oracle for `normalize`/`equivalent`.

use super::{compose, enumerate_all_paths, Path, Schema};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// A partition of the bounded path universe into equivalence classes.
#[derive(Debug)]
pub struct PathPartition {
    universe: Vec<Path>,
    index: BTreeMap<Path, usize>,
    parent: Vec<usize>,
}

impl PathPartition {
    fn find(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    /// Class id of a path, when it lies within the bound.
    pub fn class_of(&self, p: &Path) -> Option<usize> {
        self.index.get(p).map(|&i| self.find(i))
    }

    pub fn same_class(&self, p: &Path, q: &Path) -> Option<bool> {
        Some(self.class_of(p)? == self.class_of(q)?)
    }

    pub fn universe(&self) -> &[Path] {
        &self.universe
    }

    /// Classes as lists of paths, each in enumeration order; classes ordered
    /// by their first member.
    pub fn classes(&self) -> Vec<Vec<Path>> {
        let mut by_root: BTreeMap<usize, Vec<Path>> = BTreeMap::new();
        for (i, p) in self.universe.iter().enumerate() {
            by_root.entry(self.find(i)).or_default().push(p.clone());
        }
        let mut classes: Vec<Vec<Path>> = by_root.into_values().collect();
        classes.sort_by_key(|c| self.index[&c[0]]);
        classes
    }

    /// The shortest member of each class (ties broken lexicographically).
    pub fn representatives(&self) -> Vec<Path> {
        self.classes()
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .min_by(|a, b| {
                        a.len()
                            .cmp(&b.len())
                            .then_with(|| a.arrows().cmp(b.arrows()))
                    })
                    .expect("classes are non-empty")
            })
            .collect()
    }
}

/// Smallest partition of all paths of length ≤ `max_len` that contains the
/// relation pairs and is closed under composition with arrows inside the
/// bound.
pub fn congruence_closure_bounded(schema: &Schema, max_len: usize) -> Result<PathPartition> {
    if max_len == 0 {
        return Err(Error::InvalidArgument(
            "closure bound must be at least 1".into(),
        ));
    }
    let graph = schema.graph();
    let universe = enumerate_all_paths(schema, max_len)?;
    let index: BTreeMap<Path, usize> = universe
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i))
        .collect();
    let mut partition = PathPartition {
        parent: (0..universe.len()).collect(),
        universe,
        index,
    };

    let mut worklist: Vec<(usize, usize)> = Vec::new();
    for rel in schema.relations() {
        match (partition.index.get(&rel.lhs), partition.index.get(&rel.rhs)) {
            (Some(&a), Some(&b)) => worklist.push((a, b)),
            // a relation side longer than the bound cannot seed the closure
            _ => continue,
        }
    }

    while let Some((a, b)) = worklist.pop() {
        let (ra, rb) = (partition.find(a), partition.find(b));
        if ra == rb {
            continue;
        }
        // union by smaller enumeration index for determinism
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        partition.parent[drop] = keep;

        let p = partition.universe[a].clone();
        let q = partition.universe[b].clone();
        for arrow in graph.arrows() {
            let step = Path::from_arrows(graph, vec![arrow.name.clone()])?;
            // post-compose: p then arrow
            if p.target(graph)? == arrow.source && p.len() + 1 <= max_len {
                let pa = compose(graph, &p, &step)?;
                let qa = compose(graph, &q, &step)?;
                if let (Some(&i), Some(&j)) = (partition.index.get(&pa), partition.index.get(&qa)) {
                    worklist.push((i, j));
                }
            }
            // pre-compose: arrow then p
            if arrow.target == p.source() && p.len() + 1 <= max_len {
                let ap = compose(graph, &step, &p)?;
                let aq = compose(graph, &step, &q)?;
                if let (Some(&i), Some(&j)) = (partition.index.get(&ap), partition.index.get(&aq)) {
                    worklist.push((i, j));
                }
            }
        }
    }
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::super::{parse_schema, CYCLEGAN_DSL};
    use super::*;

    #[test]
    fn cyclegan_closure_at_4_has_four_classes() {
        let s = parse_schema(CYCLEGAN_DSL).unwrap();
        let part = congruence_closure_bounded(&s, 4).unwrap();
        let reps: Vec<String> = part.representatives().iter().map(|p| p.display()).collect();
        let mut sorted = reps.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["f", "g", "id_A", "id_B"]);

        // every A→A path in the bound collapses onto id_A
        let id_a = Path::identity("A");
        for p in part.universe().to_vec() {
            if p.source() == "A" && p.target(s.graph()).unwrap() == "A" {
                assert_eq!(part.same_class(&p, &id_a), Some(true), "{p}");
            }
        }
    }

    #[test]
    fn no_relations_means_singletons() {
        let s = parse_schema("schema F { objects: A, B arrows: f: A -> B, h: A -> B }").unwrap();
        let part = congruence_closure_bounded(&s, 3).unwrap();
        assert_eq!(part.classes().len(), part.universe().len());
    }

    #[test]
    fn merged_generators_merge_their_extensions() {
        let s = parse_schema(
            "schema M { objects: A, B, C arrows: f: A -> B, h: A -> B, k: B -> C equations: f = h }",
        )
        .unwrap();
        let part = congruence_closure_bounded(&s, 3).unwrap();
        let g = s.graph();
        let f = Path::from_arrows(g, vec!["f".into()]).unwrap();
        let h = Path::from_arrows(g, vec!["h".into()]).unwrap();
        let fk = Path::from_arrows(g, vec!["f".into(), "k".into()]).unwrap();
        let hk = Path::from_arrows(g, vec!["h".into(), "k".into()]).unwrap();
        assert_eq!(part.same_class(&f, &h), Some(true));
        assert_eq!(part.same_class(&fk, &hk), Some(true));
        let k = Path::from_arrows(g, vec!["k".into()]).unwrap();
        assert_ne!(part.class_of(&fk), part.class_of(&k));
    }

    #[test]
    fn zero_bound_rejected() {
        let s = parse_schema(CYCLEGAN_DSL).unwrap();
        assert!(congruence_closure_bounded(&s, 0).is_err());
    }
}
