//! Adversarial, gradient-penalty and path-equivalence losses.
//!
//! Every loss has two routes: a node-level builder that records the
//! computation on a caller-owned tape (the training route, where generator
//! and critic parameters are bound tape nodes), and a value-level function
//! that runs the builder on a fresh tape and reads the number off. Both
//! routes share the same code.
//!
//! Sign convention: the adversarial loss is `mean D(real) − mean D(fake)`.
//! Generators descend it; critics ascend it, implemented as descent on its
//! negation plus the gradient penalty.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::data::{SamplePool, TaskSpec};
use crate::error::{Error, Result};
use crate::model::{eval_path_nodes, Architecture, Model, ParameterAssignment};
use crate::para::ParamFn;
use crate::schema::{Relation, Schema};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// One critic per discriminated object, with its parameter blocks.
#[derive(Clone, Debug)]
pub struct CriticSet {
    fns: BTreeMap<String, ParamFn>,
    params: ParameterAssignment,
}

impl CriticSet {
    pub fn new(fns: BTreeMap<String, ParamFn>, params: ParameterAssignment) -> Result<Self> {
        for (object, f) in &fns {
            if f.out_dim() != 1 {
                return Err(Error::Dimension(format!(
                    "critic for `{object}` has out_dim {}, expected 1",
                    f.out_dim()
                )));
            }
            let block = params.get(object).ok_or_else(|| Error::Missing {
                kind: "critic parameter block",
                name: object.clone(),
            })?;
            if block.numel() != f.param_dim() {
                return Err(Error::Dimension(format!(
                    "critic block `{object}` has {} values, expected {}",
                    block.numel(),
                    f.param_dim()
                )));
            }
        }
        Ok(CriticSet { fns, params })
    }

    pub fn fns(&self) -> &BTreeMap<String, ParamFn> {
        &self.fns
    }

    pub fn critic(&self, object: &str) -> Option<&ParamFn> {
        self.fns.get(object)
    }

    pub fn params(&self) -> &ParameterAssignment {
        &self.params
    }

    pub fn set_params(&mut self, params: ParameterAssignment) -> Result<()> {
        let fns = std::mem::take(&mut self.fns);
        let rebuilt = CriticSet::new(fns, params)?;
        *self = rebuilt;
        Ok(())
    }

    /// Critic object names in a fixed order (sorted): the flat parameter
    /// layout for the critic optimizer.
    pub fn order(&self) -> Vec<String> {
        self.fns.keys().cloned().collect()
    }
}

/// Objects that receive a critic: codomains of generator arrows that carry
/// at least one data coordinate. Latent-only objects have no real samples to
/// discriminate.
pub fn critic_objects(schema: &Schema, task: &TaskSpec) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for object in schema.graph().objects() {
        let is_codomain = schema.graph().arrows().iter().any(|a| &a.target == object);
        if is_codomain && task.is_data_bearing(object) && !out.contains(object) {
            out.push(object.clone());
        }
    }
    out
}

/// Generator arrows that carry an adversarial term: those whose codomain has
/// a critic.
pub fn adversarial_arrows(schema: &Schema, task: &TaskSpec) -> Vec<String> {
    let critics = critic_objects(schema, task);
    schema
        .graph()
        .arrows()
        .iter()
        .filter(|a| critics.contains(&a.target))
        .map(|a| a.name.clone())
        .collect()
}

/// Tape bindings for every network touched by a loss expression.
pub struct BoundNets<'a> {
    pub arch: &'a Architecture,
    pub gen_params: &'a BTreeMap<String, NodeId>,
    pub critics: &'a CriticSet,
    pub critic_params: &'a BTreeMap<String, NodeId>,
}

/// Inserts every generator parameter block of a model as a tape leaf.
pub fn bind_generator_params(tape: &mut Tape, model: &Model) -> BTreeMap<String, NodeId> {
    model
        .params()
        .values()
        .iter()
        .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
        .collect()
}

/// Inserts every critic parameter block as a tape leaf.
pub fn bind_critic_params(tape: &mut Tape, critics: &CriticSet) -> BTreeMap<String, NodeId> {
    critics
        .params()
        .values()
        .iter()
        .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
        .collect()
}

fn critic_output_mean(
    tape: &mut Tape,
    nets: &BoundNets,
    object: &str,
    batch: NodeId,
) -> Result<NodeId> {
    let critic = nets.critics.critic(object).ok_or_else(|| Error::Missing {
        kind: "critic",
        name: object.to_string(),
    })?;
    let params = *nets
        .critic_params
        .get(object)
        .ok_or_else(|| Error::Missing {
            kind: "critic parameter node",
            name: object.to_string(),
        })?;
    let scores = critic.forward_on(tape, params, batch)?;
    tape.mean(scores)
}

/// Records `mean D_B(real) − mean D_B(G_f(input))` for a generator arrow
/// `f: A → B`; `target` names B, the discriminated codomain.
pub fn adversarial_loss_node(
    tape: &mut Tape,
    nets: &BoundNets,
    arrow: &str,
    target: &str,
    input_batch: &Tensor,
    real_batch: &Tensor,
) -> Result<NodeId> {
    if input_batch.rows().unwrap_or(0) == 0 || real_batch.rows().unwrap_or(0) == 0 {
        return Err(Error::InvalidArgument(format!(
            "adversarial loss for `{arrow}` needs non-empty batches"
        )));
    }
    let gen = nets.arch.generator(arrow).ok_or_else(|| Error::Unknown {
        kind: "arrow",
        name: arrow.to_string(),
    })?;
    let gen_params = *nets.gen_params.get(arrow).ok_or_else(|| Error::Missing {
        kind: "parameter node",
        name: arrow.to_string(),
    })?;

    let real = tape.constant(real_batch.clone());
    let input = tape.constant(input_batch.clone());
    let fake = gen.forward_on(tape, gen_params, input)?;
    let real_mean = critic_output_mean(tape, nets, target, real)?;
    let fake_mean = critic_output_mean(tape, nets, target, fake)?;
    tape.sub(real_mean, fake_mean)
}

/// Records the gradient penalty `λ·mean[(‖∇_x̂ D(x̂)‖₂ − 1)²]` at per-row
/// interpolates `x̂ = ε·real + (1−ε)·fake`, ε ~ U[0,1]. The inner gradient is
/// recorded as tape nodes, so the penalty's own gradient with respect to the
/// critic parameters is exact.
pub fn gradient_penalty_node(
    tape: &mut Tape,
    critic: &ParamFn,
    critic_params: NodeId,
    real_batch: &Tensor,
    fake_batch: &Tensor,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    let (n, d) = match (real_batch.shape(), fake_batch.shape()) {
        ([n, d], [n2, d2]) if n == n2 && d == d2 => (*n, *d),
        (a, b) => {
            return Err(Error::Shape(format!(
                "gradient penalty batches of shapes {a:?} and {b:?}"
            )))
        }
    };
    let mut interp = Vec::with_capacity(n * d);
    for r in 0..n {
        let eps: f64 = rng.gen_range(0.0..1.0);
        for (a, b) in real_batch.row(r).iter().zip(fake_batch.row(r)) {
            interp.push(eps * a + (1.0 - eps) * b);
        }
    }
    let xhat = tape.leaf(Tensor::matrix(n, d, interp)?);
    let scores = critic.forward_on(tape, critic_params, xhat)?;
    // per-row gradients via the sum trick: rows are independent
    let total = tape.sum(scores);
    let grad = tape.gradient_nodes(total, &[xhat])?[0];

    let mut norms = Vec::with_capacity(n);
    for r in 0..n {
        let row = tape.slice_rows(grad, r, 1)?;
        norms.push(tape.l2_norm(row));
    }
    let norms = tape.concat(&norms)?;
    let ones = tape.constant(Tensor::filled(&[n], 1.0));
    let diff = tape.sub(norms, ones)?;
    let sq = tape.mul(diff, diff)?;
    let mean = tape.mean(sq)?;
    Ok(tape.scale(mean, lambda))
}

/// Records `mean_a ‖lhs(a) − rhs(a)‖₁` over a batch from the relation's
/// source object.
pub fn path_equiv_loss_node(
    tape: &mut Tape,
    arch: &Architecture,
    gen_params: &BTreeMap<String, NodeId>,
    relation: &Relation,
    batch: &Tensor,
) -> Result<NodeId> {
    let n = batch.rows().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidArgument("path-equivalence loss needs a non-empty batch".into())
    })?;
    let input = tape.constant(batch.clone());
    let lhs = eval_path_nodes(tape, arch, gen_params, &relation.lhs, input)?;
    let rhs = eval_path_nodes(tape, arch, gen_params, &relation.rhs, input)?;
    let diff = tape.sub(lhs, rhs)?;
    let l1 = tape.l1_norm(diff);
    Ok(tape.scale(l1, 1.0 / n as f64))
}

/// Per-generator input/real batch pair for the adversarial terms.
#[derive(Clone, Debug)]
pub struct GenBatch {
    pub input: Tensor,
    pub real: Tensor,
}

/// Batches covering every adversarial term and every relation source.
#[derive(Clone, Debug, Default)]
pub struct LossBatches {
    pub per_generator: BTreeMap<String, GenBatch>,
    /// Indexed like `schema.relations()`.
    pub per_relation: Vec<Tensor>,
}

/// Draws a full batch set from the task: inputs from each adversarial
/// arrow's source, reals from its target, and one batch per relation source.
/// Draw order is arrows in declaration order, then relations in declaration
/// order.
pub fn sample_loss_batches(
    task: &TaskSpec,
    schema: &Schema,
    batch_size: usize,
    pool: SamplePool,
    rng: &mut ChaCha8Rng,
) -> Result<LossBatches> {
    let arrows = adversarial_arrows(schema, task);
    let mut per_generator = BTreeMap::new();
    for arrow in schema.graph().arrows() {
        if !arrows.contains(&arrow.name) {
            continue;
        }
        let input = task.sample_object_batch(&arrow.source, batch_size, pool, rng)?;
        let real = task.sample_object_batch(&arrow.target, batch_size, pool, rng)?;
        per_generator.insert(arrow.name.clone(), GenBatch { input, real });
    }
    let mut per_relation = Vec::new();
    for rel in schema.relations() {
        per_relation.push(task.sample_object_batch(rel.lhs.source(), batch_size, pool, rng)?);
    }
    Ok(LossBatches {
        per_generator,
        per_relation,
    })
}

/// Loss values broken out per term. `total` is the generator objective:
/// the adversarial sum plus γ times the path-equivalence sum. Gradient
/// penalties are reported separately — they enter only the critic objective.
#[derive(Clone, Debug)]
pub struct LossReport {
    pub adversarial: Vec<(String, f64)>,
    pub path_equivalence: Vec<(String, f64)>,
    pub gradient_penalty: Vec<(String, f64)>,
    pub gamma: f64,
    pub total: f64,
}

/// Node-level total loss (Σ adversarial + γ·Σ path-equivalence) with its
/// breakdown.
pub fn total_loss_node(
    tape: &mut Tape,
    nets: &BoundNets,
    schema: &Schema,
    batches: &LossBatches,
    gamma: f64,
) -> Result<(NodeId, LossReport)> {
    let mut adversarial = Vec::new();
    let mut terms = Vec::new();
    for arrow in schema.graph().arrows() {
        let Some(batch) = batches.per_generator.get(&arrow.name) else {
            continue;
        };
        let gen = nets
            .arch
            .generator(&arrow.name)
            .ok_or_else(|| Error::Unknown {
                kind: "arrow",
                name: arrow.name.clone(),
            })?;
        let gen_params = *nets
            .gen_params
            .get(&arrow.name)
            .ok_or_else(|| Error::Missing {
                kind: "parameter node",
                name: arrow.name.clone(),
            })?;
        if batch.input.rows().unwrap_or(0) == 0 || batch.real.rows().unwrap_or(0) == 0 {
            return Err(Error::InvalidArgument(format!(
                "adversarial loss for `{}` needs non-empty batches",
                arrow.name
            )));
        }
        let real = tape.constant(batch.real.clone());
        let input = tape.constant(batch.input.clone());
        let fake = gen.forward_on(tape, gen_params, input)?;
        let real_mean = critic_output_mean(tape, nets, &arrow.target, real)?;
        let fake_mean = critic_output_mean(tape, nets, &arrow.target, fake)?;
        let term = tape.sub(real_mean, fake_mean)?;
        adversarial.push((arrow.name.clone(), tape.value(term).to_scalar()?));
        terms.push(term);
    }

    let mut path_equivalence = Vec::new();
    for (i, rel) in schema.relations().iter().enumerate() {
        let batch = batches.per_relation.get(i).ok_or_else(|| Error::Missing {
            kind: "relation batch",
            name: rel.display(),
        })?;
        let term = path_equiv_loss_node(tape, nets.arch, nets.gen_params, rel, batch)?;
        path_equivalence.push((rel.display(), tape.value(term).to_scalar()?));
        let weighted = tape.scale(term, gamma);
        terms.push(weighted);
    }

    let mut total = tape.scalar(0.0);
    for t in terms {
        total = tape.add(total, t)?;
    }
    let report = LossReport {
        adversarial,
        path_equivalence,
        gradient_penalty: Vec::new(),
        gamma,
        total: tape.value(total).to_scalar()?,
    };
    Ok((total, report))
}

// ---- value-level wrappers ----

fn bound_on_fresh_tape<'a>(
    tape: &mut Tape,
    model: &'a Model,
    critics: &'a CriticSet,
) -> (BTreeMap<String, NodeId>, BTreeMap<String, NodeId>) {
    let gen_params = bind_generator_params(tape, model);
    let critic_params = bind_critic_params(tape, critics);
    (gen_params, critic_params)
}

/// Value of the Wasserstein term for one generator arrow.
pub fn adversarial_loss(
    schema: &Schema,
    model: &Model,
    critics: &CriticSet,
    arrow: &str,
    input_batch: &Tensor,
    real_batch: &Tensor,
) -> Result<f64> {
    let target = schema
        .graph()
        .arrow(arrow)
        .ok_or_else(|| Error::Unknown {
            kind: "arrow",
            name: arrow.to_string(),
        })?
        .target
        .clone();
    let mut tape = Tape::new();
    let (gen_params, critic_params) = bound_on_fresh_tape(&mut tape, model, critics);
    let nets = BoundNets {
        arch: model.arch(),
        gen_params: &gen_params,
        critics,
        critic_params: &critic_params,
    };
    let out = adversarial_loss_node(&mut tape, &nets, arrow, &target, input_batch, real_batch)?;
    tape.value(out).to_scalar()
}

/// Value of the gradient penalty for one critic.
pub fn gradient_penalty(
    critics: &CriticSet,
    object: &str,
    real_batch: &Tensor,
    fake_batch: &Tensor,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let critic = critics.critic(object).ok_or_else(|| Error::Missing {
        kind: "critic",
        name: object.to_string(),
    })?;
    let mut tape = Tape::new();
    let params = tape.leaf(critics.params().get(object).unwrap().clone());
    let node = gradient_penalty_node(
        &mut tape, critic, params, real_batch, fake_batch, lambda, rng,
    )?;
    tape.value(node).to_scalar()
}

/// Value of the path-equivalence loss for one relation.
pub fn path_equiv_loss(model: &Model, relation: &Relation, batch: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let gen_params = bind_generator_params(&mut tape, model);
    let node = path_equiv_loss_node(&mut tape, model.arch(), &gen_params, relation, batch)?;
    tape.value(node).to_scalar()
}

/// Value-level total loss with per-term breakdown.
pub fn total_loss(
    model: &Model,
    critics: &CriticSet,
    schema: &Schema,
    batches: &LossBatches,
    gamma: f64,
) -> Result<LossReport> {
    let mut tape = Tape::new();
    let (gen_params, critic_params) = bound_on_fresh_tape(&mut tape, model, critics);
    let nets = BoundNets {
        arch: model.arch(),
        gen_params: &gen_params,
        critics,
        critic_params: &critic_params,
    };
    let (_, report) = total_loss_node(&mut tape, &nets, schema, batches, gamma)?;
    Ok(report)
}
