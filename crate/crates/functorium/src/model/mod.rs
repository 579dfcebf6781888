//! Architectures over a schema and their parameterized models.
//!
//! An [`Architecture`] assigns an embedding dimension to every object and a
//! [`ParamFn`] to every generating arrow. Fixing a [`ParameterAssignment`]
//! yields a [`Model`], which evaluates arbitrary paths by folding generator
//! applications; identity paths pass inputs through unchanged. The flat
//! parameter layout follows the schema's arrow declaration order.

pub mod checkpoint;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::data::DatasetFunctor;
use crate::error::{Error, Result};
use crate::para::{mlp, MLPSpec, ParamFn};
use crate::schema::{Path, Schema};
use std::collections::{BTreeMap, VecDeque};

/// Declarative description of an architecture: object dims plus an MLP spec
/// per generating arrow. This is what checkpoints and configs carry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchSpec {
    pub object_dims: BTreeMap<String, usize>,
    pub generators: BTreeMap<String, MLPSpec>,
}

impl ArchSpec {
    /// One MLP per arrow with the given hidden widths; input/output widths
    /// come from the arrow endpoints' dims.
    pub fn uniform_mlp(
        schema: &Schema,
        object_dims: BTreeMap<String, usize>,
        hidden: &[usize],
        hidden_activation: crate::para::Activation,
        final_activation: crate::para::FinalActivation,
    ) -> Result<Self> {
        let mut generators = BTreeMap::new();
        for arrow in schema.graph().arrows() {
            let src = *object_dims
                .get(&arrow.source)
                .ok_or_else(|| Error::Missing {
                    kind: "object dim",
                    name: arrow.source.clone(),
                })?;
            let tgt = *object_dims
                .get(&arrow.target)
                .ok_or_else(|| Error::Missing {
                    kind: "object dim",
                    name: arrow.target.clone(),
                })?;
            let mut widths = vec![src];
            widths.extend_from_slice(hidden);
            widths.push(tgt);
            generators.insert(
                arrow.name.clone(),
                MLPSpec::new(widths, hidden_activation, final_activation)?,
            );
        }
        Ok(ArchSpec {
            object_dims,
            generators,
        })
    }
}

/// Object dims plus one parameterized map per generating arrow.
#[derive(Clone, Debug)]
pub struct Architecture {
    object_dims: BTreeMap<String, usize>,
    order: Vec<String>,
    generators: BTreeMap<String, ParamFn>,
}

impl Architecture {
    /// Validates coverage and endpoint dims against the schema. The arrow
    /// declaration order of the schema fixes the flat parameter layout.
    pub fn new(
        schema: &Schema,
        object_dims: BTreeMap<String, usize>,
        generators: BTreeMap<String, ParamFn>,
    ) -> Result<Self> {
        for object in schema.graph().objects() {
            let dim = object_dims.get(object).ok_or_else(|| Error::Missing {
                kind: "object dim",
                name: object.clone(),
            })?;
            if *dim == 0 {
                return Err(Error::Dimension(format!("object `{object}` has dim 0")));
            }
        }
        for (name, _) in object_dims.iter() {
            if !schema.graph().has_object(name) {
                return Err(Error::Unknown {
                    kind: "object",
                    name: name.clone(),
                });
            }
        }
        let mut order = Vec::new();
        for arrow in schema.graph().arrows() {
            let f = generators.get(&arrow.name).ok_or_else(|| Error::Missing {
                kind: "generator",
                name: arrow.name.clone(),
            })?;
            let (src, tgt) = (object_dims[&arrow.source], object_dims[&arrow.target]);
            if f.in_dim() != src || f.out_dim() != tgt {
                return Err(Error::Dimension(format!(
                    "generator `{}` is {} -> {} but arrow endpoints have dims {} -> {}",
                    arrow.name,
                    f.in_dim(),
                    f.out_dim(),
                    src,
                    tgt
                )));
            }
            order.push(arrow.name.clone());
        }
        for name in generators.keys() {
            if schema.graph().arrow(name).is_none() {
                return Err(Error::Unknown {
                    kind: "arrow",
                    name: name.clone(),
                });
            }
        }
        Ok(Architecture {
            object_dims,
            order,
            generators,
        })
    }

    pub fn from_spec(schema: &Schema, spec: &ArchSpec) -> Result<Self> {
        let generators = spec
            .generators
            .iter()
            .map(|(name, s)| (name.clone(), mlp(s)))
            .collect();
        Architecture::new(schema, spec.object_dims.clone(), generators)
    }

    pub fn object_dim(&self, object: &str) -> Option<usize> {
        self.object_dims.get(object).copied()
    }

    pub fn object_dims(&self) -> &BTreeMap<String, usize> {
        &self.object_dims
    }

    pub fn generator(&self, arrow: &str) -> Option<&ParamFn> {
        self.generators.get(arrow)
    }

    /// Arrow names in schema declaration order; the flat parameter layout.
    pub fn generator_order(&self) -> &[String] {
        &self.order
    }
}

/// Sum of the generators' parameter dims: the dimension of the flat
/// parameter vector of the whole assignment.
pub fn total_param_dim(arch: &Architecture) -> usize {
    arch.order
        .iter()
        .map(|name| arch.generators[name].param_dim())
        .sum()
}

/// One parameter tensor per generator arrow.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterAssignment {
    values: BTreeMap<String, Tensor>,
}

impl ParameterAssignment {
    pub fn new(values: BTreeMap<String, Tensor>) -> Self {
        ParameterAssignment { values }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.values.get(name)
    }

    pub fn values(&self) -> &BTreeMap<String, Tensor> {
        &self.values
    }

    pub fn total_dim(&self) -> usize {
        self.values.values().map(Tensor::numel).sum()
    }

    /// Concatenates blocks in the given order into one flat vector.
    pub fn pack(&self, order: &[String]) -> Result<Vec<f64>> {
        let mut flat = Vec::with_capacity(self.total_dim());
        for name in order {
            let t = self.values.get(name).ok_or_else(|| Error::Missing {
                kind: "parameter block",
                name: name.clone(),
            })?;
            flat.extend_from_slice(t.data());
        }
        Ok(flat)
    }

    /// Splits a flat vector back into blocks shaped like `self`, in `order`.
    pub fn unpack_from(&self, order: &[String], flat: &[f64]) -> Result<ParameterAssignment> {
        let mut values = BTreeMap::new();
        let mut offset = 0;
        for name in order {
            let t = self.values.get(name).ok_or_else(|| Error::Missing {
                kind: "parameter block",
                name: name.clone(),
            })?;
            let n = t.numel();
            if offset + n > flat.len() {
                return Err(Error::Dimension("flat vector too short".into()));
            }
            values.insert(
                name.clone(),
                Tensor::new(t.shape().to_vec(), flat[offset..offset + n].to_vec())?,
            );
            offset += n;
        }
        if offset != flat.len() {
            return Err(Error::Dimension(format!(
                "flat vector has {} values, blocks use {offset}",
                flat.len()
            )));
        }
        Ok(ParameterAssignment { values })
    }
}

/// An architecture with a concrete parameter choice: evaluates paths.
#[derive(Clone, Debug)]
pub struct Model {
    arch: Architecture,
    params: ParameterAssignment,
}

/// Binds a parameter assignment to an architecture after validating that the
/// keys and block lengths line up.
pub fn pspec(arch: Architecture, params: ParameterAssignment) -> Result<Model> {
    for name in &arch.order {
        let f = &arch.generators[name];
        let block = params.get(name).ok_or_else(|| Error::Missing {
            kind: "parameter block",
            name: name.clone(),
        })?;
        if block.numel() != f.param_dim() {
            return Err(Error::Dimension(format!(
                "parameter block `{name}` has {} values, generator expects {}",
                block.numel(),
                f.param_dim()
            )));
        }
    }
    for name in params.values().keys() {
        if !arch.generators.contains_key(name) {
            return Err(Error::Unknown {
                kind: "arrow",
                name: name.clone(),
            });
        }
    }
    Ok(Model { arch, params })
}

impl Model {
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParameterAssignment {
        &self.params
    }

    pub fn with_params(&self, params: ParameterAssignment) -> Result<Model> {
        pspec(self.arch.clone(), params)
    }

    pub fn eval_arrow(&self, arrow: &str, x: &Tensor) -> Result<Tensor> {
        let f = self.arch.generator(arrow).ok_or_else(|| Error::Unknown {
            kind: "arrow",
            name: arrow.to_string(),
        })?;
        f.apply(self.params.get(arrow).expect("validated by pspec"), x)
    }
}

/// Anything that can run generator maps on points: models, oracles.
pub trait PathEvaluator {
    fn object_dim(&self, object: &str) -> Option<usize>;
    /// Applies one generator to a sample vector or a row batch.
    fn arrow_output(&self, arrow: &str, input: &Tensor) -> Result<Tensor>;
}

impl PathEvaluator for Model {
    fn object_dim(&self, object: &str) -> Option<usize> {
        self.arch.object_dim(object)
    }

    fn arrow_output(&self, arrow: &str, input: &Tensor) -> Result<Tensor> {
        self.eval_arrow(arrow, input)
    }
}

/// Left-to-right fold of generator applications; the identity path returns
/// its input unchanged.
pub fn eval_path<E: PathEvaluator + ?Sized>(ev: &E, path: &Path, x: &Tensor) -> Result<Tensor> {
    let expect = ev.object_dim(path.source()).ok_or_else(|| Error::Unknown {
        kind: "object",
        name: path.source().to_string(),
    })?;
    if x.last_dim() != expect {
        return Err(Error::Dimension(format!(
            "input dim {} but object `{}` has dim {expect}",
            x.last_dim(),
            path.source()
        )));
    }
    let mut at = x.clone();
    for arrow in path.arrows() {
        at = ev.arrow_output(arrow, &at)?;
    }
    Ok(at)
}

/// Records a path evaluation on a tape, with each generator reading its
/// parameters from the bound node in `param_nodes`. This is the gradient
/// route used during training.
pub fn eval_path_nodes(
    tape: &mut Tape,
    arch: &Architecture,
    param_nodes: &BTreeMap<String, NodeId>,
    path: &Path,
    input: NodeId,
) -> Result<NodeId> {
    let mut at = input;
    for arrow in path.arrows() {
        let f = arch.generator(arrow).ok_or_else(|| Error::Unknown {
            kind: "arrow",
            name: arrow.to_string(),
        })?;
        let p = *param_nodes.get(arrow).ok_or_else(|| Error::Missing {
            kind: "parameter node",
            name: arrow.to_string(),
        })?;
        at = f.forward_on(tape, p, at)?;
    }
    Ok(at)
}

/// Mean L1 gap between the two sides of each relation, evaluated on the
/// given per-object sample batches. Zero residuals mean the model factors
/// through the quotient on those samples.
pub fn functoriality_residual<E: PathEvaluator + ?Sized>(
    ev: &E,
    schema: &Schema,
    samples: &BTreeMap<String, Tensor>,
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for rel in schema.relations() {
        let batch = samples
            .get(rel.lhs.source())
            .ok_or_else(|| Error::Missing {
                kind: "sample batch",
                name: rel.lhs.source().to_string(),
            })?;
        let lhs = eval_path(ev, &rel.lhs, batch)?;
        let rhs = eval_path(ev, &rel.rhs, batch)?;
        if lhs.shape() != rhs.shape() {
            return Err(Error::Shape(format!(
                "relation `{}` sides evaluate to different shapes",
                rel.display()
            )));
        }
        let n = batch.rows().unwrap_or(1) as f64;
        let gap: f64 = lhs
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        out.push((rel.display(), gap / n));
    }
    Ok(out)
}

/// Smallest family of finite point sets containing the dataset and closed
/// under generator application along paths of length ≤ `max_len`. Duplicate
/// points are eliminated by exact bit equality; output keeps first-seen
/// order.
pub fn restrict_to_dataset(
    model: &Model,
    schema: &Schema,
    dataset: &DatasetFunctor,
    max_len: usize,
) -> Result<BTreeMap<String, Vec<Tensor>>> {
    let graph = schema.graph();
    let mut result: BTreeMap<String, Vec<Tensor>> = BTreeMap::new();
    let mut best_depth: BTreeMap<String, std::collections::HashMap<Vec<u64>, usize>> =
        BTreeMap::new();
    for object in graph.objects() {
        result.insert(object.clone(), Vec::new());
        best_depth.insert(object.clone(), Default::default());
    }

    let mut queue: VecDeque<(String, Tensor, usize)> = VecDeque::new();
    for object in graph.objects() {
        let dim = model.object_dim(object).ok_or_else(|| Error::Unknown {
            kind: "object",
            name: object.clone(),
        })?;
        for point in dataset.points(object) {
            if point.last_dim() != dim || point.rank() != 1 {
                return Err(Error::Dimension(format!(
                    "dataset point of shape {:?} does not live in `{object}` (dim {dim})",
                    point.shape()
                )));
            }
            queue.push_back((object.clone(), point.clone(), 0));
        }
    }

    while let Some((object, point, depth)) = queue.pop_front() {
        let key = point.bit_key();
        let seen = best_depth.get_mut(&object).expect("objects pre-seeded");
        match seen.get(&key) {
            None => {
                seen.insert(key, depth);
                result.get_mut(&object).unwrap().push(point.clone());
            }
            // re-expand when reached again at lower depth, so the length
            // budget is never wasted by a longer first visit
            Some(&d) if depth < d => {
                seen.insert(key, depth);
            }
            Some(_) => continue,
        }
        if depth == max_len {
            continue;
        }
        for arrow in graph.arrows() {
            if arrow.source == object {
                let image = model.eval_arrow(&arrow.name, &point)?;
                queue.push_back((arrow.target.clone(), image, depth + 1));
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::para::{identity_para, Activation, FinalActivation};
    use crate::schema::{parse_schema, CYCLEGAN_DSL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cyclegan() -> Schema {
        parse_schema(CYCLEGAN_DSL).unwrap()
    }

    fn dims2(schema: &Schema) -> BTreeMap<String, usize> {
        schema
            .graph()
            .objects()
            .iter()
            .map(|o| (o.clone(), 2))
            .collect()
    }

    fn mlp_arch(schema: &Schema) -> Architecture {
        let spec = ArchSpec::uniform_mlp(
            schema,
            dims2(schema),
            &[4],
            Activation::Tanh,
            FinalActivation::None,
        )
        .unwrap();
        Architecture::from_spec(schema, &spec).unwrap()
    }

    fn zero_params(arch: &Architecture) -> ParameterAssignment {
        ParameterAssignment::new(
            arch.generator_order()
                .iter()
                .map(|name| {
                    let dim = arch.generator(name).unwrap().param_dim();
                    (name.clone(), Tensor::zeros(&[dim]))
                })
                .collect(),
        )
    }

    fn identity_model(schema: &Schema) -> Model {
        let generators = schema
            .graph()
            .arrows()
            .iter()
            .map(|a| (a.name.clone(), identity_para(2)))
            .collect();
        let arch = Architecture::new(schema, dims2(schema), generators).unwrap();
        let params = zero_params(&arch);
        pspec(arch, params).unwrap()
    }

    #[test]
    fn total_param_dim_sums_generators() {
        let s = cyclegan();
        let arch = mlp_arch(&s);
        // two [2,4,2] MLPs: (2*4+4)+(4*2+2) = 22 each
        assert_eq!(total_param_dim(&arch), 44);

        let id_arch = Architecture::new(
            &s,
            dims2(&s),
            s.graph()
                .arrows()
                .iter()
                .map(|a| (a.name.clone(), identity_para(2)))
                .collect(),
        )
        .unwrap();
        assert_eq!(total_param_dim(&id_arch), 0);
    }

    #[test]
    fn pspec_rejects_missing_and_misshapen_blocks() {
        let s = cyclegan();
        let arch = mlp_arch(&s);
        let mut values = zero_params(&arch).values().clone();
        values.remove("g");
        assert!(pspec(arch.clone(), ParameterAssignment::new(values.clone())).is_err());
        values.insert("g".into(), Tensor::zeros(&[3]));
        assert!(pspec(arch, ParameterAssignment::new(values)).is_err());
    }

    #[test]
    fn pspec_matches_apply_partial() {
        let s = cyclegan();
        let arch = mlp_arch(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: BTreeMap<String, Tensor> = arch
            .generator_order()
            .iter()
            .map(|name| {
                let dim = arch.generator(name).unwrap().param_dim();
                let data: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
                (name.clone(), Tensor::vector(data))
            })
            .collect();
        let model = pspec(arch.clone(), ParameterAssignment::new(values.clone())).unwrap();
        let x = Tensor::vector(vec![0.3, -0.8]);
        let direct = crate::para::apply_partial(arch.generator("f").unwrap(), values["f"].clone())
            .unwrap()
            .eval(&x)
            .unwrap();
        assert_eq!(model.eval_arrow("f", &x).unwrap(), direct);
    }

    #[test]
    fn identity_path_is_a_no_op() {
        let s = cyclegan();
        let model = identity_model(&s);
        let x = Tensor::vector(vec![1.0, -2.0]);
        let y = eval_path(&model, &Path::identity("A"), &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn path_evaluation_folds_generators() {
        let s = cyclegan();
        let model = identity_model(&s);
        let fg = Path::from_arrows(s.graph(), vec!["f".into(), "g".into()]).unwrap();
        let x = Tensor::vector(vec![0.5, 0.25]);
        assert_eq!(eval_path(&model, &fg, &x).unwrap(), x);

        let samples: BTreeMap<String, Tensor> = [
            (
                "A".to_string(),
                Tensor::matrix(2, 2, vec![0.0, 0.0, 1.0, 2.0]).unwrap(),
            ),
            (
                "B".to_string(),
                Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap(),
            ),
        ]
        .into();
        let residuals = functoriality_residual(&model, &s, &samples).unwrap();
        for (_, r) in residuals {
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn eval_path_checks_input_dim() {
        let s = cyclegan();
        let model = identity_model(&s);
        let bad = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert!(eval_path(&model, &Path::identity("A"), &bad).is_err());
    }

    #[test]
    fn path_evaluation_respects_composition() {
        // eval(compose(p, q), x) == eval(q, eval(p, x)) for random MLP models
        let s = cyclegan();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let arch = mlp_arch(&s);
        let values: BTreeMap<String, Tensor> = arch
            .generator_order()
            .iter()
            .map(|name| {
                let dim = arch.generator(name).unwrap().param_dim();
                let data: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
                (name.clone(), Tensor::vector(data))
            })
            .collect();
        let model = pspec(arch, ParameterAssignment::new(values)).unwrap();

        let paths = crate::schema::enumerate_paths(&s, "A", 3).unwrap();
        for p in &paths {
            for q in crate::schema::enumerate_paths(&s, p.target(s.graph()).unwrap(), 3).unwrap() {
                let pq = crate::schema::compose(s.graph(), p, &q).unwrap();
                for _ in 0..3 {
                    let x =
                        Tensor::vector(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
                    let direct = eval_path(&model, &pq, &x).unwrap();
                    let mid = eval_path(&model, p, &x).unwrap();
                    let staged = eval_path(&model, &q, &mid).unwrap();
                    for (a, b) in direct.data().iter().zip(staged.data()) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn residual_of_shifted_line() {
        // 1-D: lhs is x -> x+1 (affine generator), rhs is the identity path;
        // batch {0, 2} gives mean |1| = 1.0
        let s = parse_schema("schema Line { objects: A arrows: u: A -> A }").unwrap();
        let spec = MLPSpec::new(vec![1, 1], Activation::Tanh, FinalActivation::None).unwrap();
        let arch = Architecture::new(
            &s,
            [("A".to_string(), 1)].into(),
            [("u".to_string(), mlp(&spec))].into(),
        )
        .unwrap();
        let params =
            ParameterAssignment::new([("u".to_string(), Tensor::vector(vec![1.0, 1.0]))].into());
        let model = pspec(arch, params).unwrap();
        let u = Path::from_arrows(s.graph(), vec!["u".into()]).unwrap();

        // same formula as the path-equivalence loss: mean row L1 gap
        let batch = Tensor::matrix(2, 1, vec![0.0, 2.0]).unwrap();
        let lhs = eval_path(&model, &u, &batch).unwrap();
        let rhs = eval_path(&model, &Path::identity("A"), &batch).unwrap();
        let gap: f64 = lhs
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!((gap - 1.0).abs() < 1e-15);
    }

    #[test]
    fn restriction_closes_one_step() {
        let s = parse_schema("schema S { objects: A, B arrows: f: A -> B }").unwrap();
        let spec = MLPSpec::new(vec![1, 1], Activation::Tanh, FinalActivation::None).unwrap();
        let arch = Architecture::new(
            &s,
            [("A".to_string(), 1), ("B".to_string(), 1)].into(),
            [("f".to_string(), mlp(&spec))].into(),
        )
        .unwrap();
        // f(x) = 2x
        let params =
            ParameterAssignment::new([("f".to_string(), Tensor::vector(vec![2.0, 0.0]))].into());
        let model = pspec(arch, params).unwrap();

        let mut ds = DatasetFunctor::empty();
        ds.insert("A", vec![Tensor::vector(vec![1.0])]).unwrap();
        let closed = restrict_to_dataset(&model, &s, &ds, 8).unwrap();
        assert_eq!(closed["A"], vec![Tensor::vector(vec![1.0])]);
        assert_eq!(closed["B"], vec![Tensor::vector(vec![2.0])]);
    }

    #[test]
    fn restriction_without_arrows_is_the_dataset() {
        let s = parse_schema("schema N { objects: A }").unwrap();
        let arch = Architecture::new(&s, [("A".to_string(), 2)].into(), BTreeMap::new()).unwrap();
        let model = pspec(arch, ParameterAssignment::new(BTreeMap::new())).unwrap();
        let mut ds = DatasetFunctor::empty();
        let pts = vec![
            Tensor::vector(vec![1.0, 2.0]),
            Tensor::vector(vec![3.0, 4.0]),
        ];
        ds.insert("A", pts.clone()).unwrap();
        let closed = restrict_to_dataset(&model, &s, &ds, 5).unwrap();
        assert_eq!(closed["A"], pts);
    }

    #[test]
    fn restriction_dedups_cycle_images_exactly() {
        // identity maps satisfy the relations, so the cycle returns the seed
        // point bit-for-bit and the closure stops at two points
        let s = cyclegan();
        let model = identity_model(&s);
        let mut ds = DatasetFunctor::empty();
        ds.insert("A", vec![Tensor::vector(vec![0.25, -1.5])])
            .unwrap();
        let closed = restrict_to_dataset(&model, &s, &ds, 8).unwrap();
        assert_eq!(closed["A"].len(), 1);
        assert_eq!(closed["B"].len(), 1);
        assert_eq!(closed["B"][0], Tensor::vector(vec![0.25, -1.5]));
    }

    #[test]
    fn flat_pack_round_trips() {
        let s = cyclegan();
        let arch = mlp_arch(&s);
        let params = zero_params(&arch);
        let mut flat = params.pack(arch.generator_order()).unwrap();
        assert_eq!(flat.len(), total_param_dim(&arch));
        for (i, v) in flat.iter_mut().enumerate() {
            *v = i as f64;
        }
        let back = params.unpack_from(arch.generator_order(), &flat).unwrap();
        assert_eq!(back.pack(arch.generator_order()).unwrap(), flat);
    }
}
