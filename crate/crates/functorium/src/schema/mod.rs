//! Schema presentations and the free-category path algebra.
//!
//! A schema declares a category by a directed multigraph (objects and named
//! arrows) together with equations between parallel paths. Paths store their
//! arrows in application order: `[f, g]` means "f, then g", i.e. the
//! composite written `g.f` in the DSL. Identity paths are explicit values
//! carrying their anchor object.

mod closure;
mod parse;
mod rewrite;

pub use closure::{congruence_closure_bounded, PathPartition};
pub use parse::parse_schema;
pub use rewrite::{equivalent, normalize, Equivalence, RewriteSystem};

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;

/// Default bound for path enumeration and congruence closure.
pub const DEFAULT_MAX_LEN: usize = 8;
/// Default rewrite step budget.
pub const DEFAULT_MAX_STEPS: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arrow {
    pub name: String,
    pub source: String,
    pub target: String,
}

/// The generating multigraph: objects plus named arrows. Parallel arrows
/// with distinct names are legal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaGraph {
    objects: Vec<String>,
    arrows: Vec<Arrow>,
    arrow_index: BTreeMap<String, usize>,
}

impl SchemaGraph {
    pub fn new(objects: Vec<String>, arrows: Vec<Arrow>) -> Result<Self> {
        let mut seen_objects = std::collections::BTreeSet::new();
        for o in &objects {
            if o.is_empty() {
                return Err(Error::Schema("empty object name".into()));
            }
            if !seen_objects.insert(o.clone()) {
                return Err(Error::Schema(format!("duplicate object `{o}`")));
            }
        }
        let mut arrow_index = BTreeMap::new();
        for (i, a) in arrows.iter().enumerate() {
            if a.name.is_empty() {
                return Err(Error::Schema("empty arrow name".into()));
            }
            if a.name.starts_with("id_") {
                return Err(Error::Schema(format!(
                    "arrow name `{}` is reserved for identities",
                    a.name
                )));
            }
            if seen_objects.contains(&a.name) {
                return Err(Error::Schema(format!(
                    "name `{}` used for both an object and an arrow",
                    a.name
                )));
            }
            if arrow_index.insert(a.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate arrow `{}`", a.name)));
            }
            for end in [&a.source, &a.target] {
                if !seen_objects.contains(end) {
                    return Err(Error::Unknown {
                        kind: "object",
                        name: end.clone(),
                    });
                }
            }
        }
        Ok(SchemaGraph {
            objects,
            arrows,
            arrow_index,
        })
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn arrows(&self) -> &[Arrow] {
        &self.arrows
    }

    pub fn has_object(&self, name: &str) -> bool {
        self.objects.iter().any(|o| o == name)
    }

    pub fn arrow(&self, name: &str) -> Option<&Arrow> {
        self.arrow_index.get(name).map(|&i| &self.arrows[i])
    }

    fn require_arrow(&self, name: &str) -> Result<&Arrow> {
        self.arrow(name).ok_or_else(|| Error::Unknown {
            kind: "arrow",
            name: name.to_string(),
        })
    }
}

/// A composable arrow sequence, or an identity when `arrows` is empty.
/// Arrows are listed first-applied-first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    anchor: String,
    arrows: Vec<String>,
}

impl Path {
    pub fn identity(object: impl Into<String>) -> Self {
        Path {
            anchor: object.into(),
            arrows: Vec::new(),
        }
    }

    /// Builds a path from arrow names in application order, validating that
    /// consecutive arrows compose.
    pub fn from_arrows(graph: &SchemaGraph, arrows: Vec<String>) -> Result<Self> {
        if arrows.is_empty() {
            return Err(Error::InvalidArgument(
                "empty arrow list; use Path::identity".into(),
            ));
        }
        let first = graph.require_arrow(&arrows[0])?;
        let anchor = first.source.clone();
        let mut at = first.target.clone();
        for name in &arrows[1..] {
            let a = graph.require_arrow(name)?;
            if a.source != at {
                return Err(Error::Schema(format!(
                    "arrows do not compose: `{}` ends at `{at}` but `{name}` starts at `{}`",
                    arrows[0], a.source
                )));
            }
            at = a.target.clone();
        }
        Ok(Path { anchor, arrows })
    }

    pub fn is_identity(&self) -> bool {
        self.arrows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.arrows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrows.is_empty()
    }

    pub fn arrows(&self) -> &[String] {
        &self.arrows
    }

    pub fn source(&self) -> &str {
        &self.anchor
    }

    pub fn target<'g>(&'g self, graph: &'g SchemaGraph) -> Result<&'g str> {
        match self.arrows.last() {
            None => Ok(&self.anchor),
            Some(last) => Ok(&graph.require_arrow(last)?.target),
        }
    }

    /// Checks anchor/composability against a graph.
    pub fn validate(&self, graph: &SchemaGraph) -> Result<()> {
        if self.arrows.is_empty() {
            if !graph.has_object(&self.anchor) {
                return Err(Error::Unknown {
                    kind: "object",
                    name: self.anchor.clone(),
                });
            }
            return Ok(());
        }
        let rebuilt = Path::from_arrows(graph, self.arrows.clone())?;
        if rebuilt.anchor != self.anchor {
            return Err(Error::Schema(format!(
                "path anchored at `{}` but its first arrow starts at `{}`",
                self.anchor, rebuilt.anchor
            )));
        }
        Ok(())
    }

    /// Renders in DSL order (last-applied first): `[f, g]` prints as `g.f`.
    pub fn display(&self) -> String {
        if self.arrows.is_empty() {
            format!("id_{}", self.anchor)
        } else {
            let mut names: Vec<&str> = self.arrows.iter().map(String::as_str).collect();
            names.reverse();
            names.join(".")
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

/// Concatenation: `p` first, then `q`. Identities are units.
pub fn compose(graph: &SchemaGraph, p: &Path, q: &Path) -> Result<Path> {
    let p_target = p.target(graph)?;
    if p_target != q.source() {
        return Err(Error::Schema(format!(
            "endpoint mismatch: `{p}` ends at `{p_target}` but `{q}` starts at `{}`",
            q.source()
        )));
    }
    if p.is_identity() {
        return Ok(q.clone());
    }
    let mut arrows = p.arrows.clone();
    arrows.extend_from_slice(&q.arrows);
    Ok(Path {
        anchor: p.anchor.clone(),
        arrows,
    })
}

/// A declared equation between two parallel paths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub lhs: Path,
    pub rhs: Path,
}

impl Relation {
    pub fn new(graph: &SchemaGraph, lhs: Path, rhs: Path) -> Result<Self> {
        lhs.validate(graph)?;
        rhs.validate(graph)?;
        if lhs.source() != rhs.source() || lhs.target(graph)? != rhs.target(graph)? {
            return Err(Error::Schema(format!(
                "non-parallel relation: `{lhs}` is {} -> {} but `{rhs}` is {} -> {}",
                lhs.source(),
                lhs.target(graph)?,
                rhs.source(),
                rhs.target(graph)?
            )));
        }
        Ok(Relation { lhs, rhs })
    }

    pub fn display(&self) -> String {
        format!("{} = {}", self.lhs, self.rhs)
    }
}

/// A presentation: generating graph plus path equations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub name: String,
    graph: SchemaGraph,
    relations: Vec<Relation>,
}

impl Schema {
    pub fn new(
        name: impl Into<String>,
        graph: SchemaGraph,
        relations: Vec<Relation>,
    ) -> Result<Self> {
        for r in &relations {
            r.lhs.validate(&graph)?;
            r.rhs.validate(&graph)?;
        }
        Ok(Schema {
            name: name.into(),
            graph,
            relations,
        })
    }

    pub fn graph(&self) -> &SchemaGraph {
        &self.graph
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }
}

/// All paths from `source` of length ≤ `max_len`, breadth-first, extending
/// by arrows in declaration order. The identity comes first.
pub fn enumerate_paths(schema: &Schema, source: &str, max_len: usize) -> Result<Vec<Path>> {
    let graph = schema.graph();
    if !graph.has_object(source) {
        return Err(Error::Unknown {
            kind: "object",
            name: source.to_string(),
        });
    }
    let mut out = vec![Path::identity(source)];
    let mut frontier = vec![out[0].clone()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            let at = p.target(graph)?.to_string();
            for a in graph.arrows() {
                if a.source == at {
                    let mut arrows = p.arrows.clone();
                    arrows.push(a.name.clone());
                    next.push(Path {
                        anchor: source.to_string(),
                        arrows,
                    });
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// All paths of length ≤ `max_len` from every object, objects in declaration
/// order.
pub fn enumerate_all_paths(schema: &Schema, max_len: usize) -> Result<Vec<Path>> {
    let mut out = Vec::new();
    for o in schema.graph().objects() {
        out.extend(enumerate_paths(schema, o, max_len)?);
    }
    Ok(out)
}

/// The CycleGAN presentation: two objects, an arrow each way, and both
/// round-trip equations.
pub const CYCLEGAN_DSL: &str = "\
schema CycleGAN {
  objects: A, B
  arrows: f: A -> B, g: B -> A
  equations: g.f = id_A, f.g = id_B
}
";

/// The product-task presentation: the same shape with one object read as a
/// composite and the other as its factorization.
pub const PRODUCT_DSL: &str = "\
schema ProductToy {
  objects: AxBz, AB
  arrows: c: AxBz -> AB, d: AB -> AxBz
  equations: d.c = id_AxBz, c.d = id_AB
}
";
