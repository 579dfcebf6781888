//! The four subcommands: validate, train, eval, demo.

use crate::config::RunConfig;
use crate::plot::{scatter_svg, Series};
use crate::runio::write_atomic;
use crate::CliError;
use functorium::data::{
    derive_rng, gen_cyclegan_toy, gen_product_toy, load_dataset, write_dataset_csv, DatasetFunctor,
    EmbeddingSpec, LatentSpec, SamplePool, TaskSpec, STREAM_EVAL,
};
use functorium::model::checkpoint::Checkpoint;
use functorium::model::{eval_path, pspec, ArchSpec, Architecture, Model};
use functorium::schema::{normalize, parse_schema, RewriteSystem, DEFAULT_MAX_STEPS};
use functorium::train::{
    default_specs_for, evaluate, preset_for_task, train_with_observer, EvalMetrics, TrainConfig,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const DEFAULT_POINTS: usize = 2048;
const DEFAULT_EVAL: usize = 256;

/// Parses and checks a schema file, printing counts and the normal forms of
/// every relation's sides.
pub fn cmd_validate(schema_path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(schema_path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", schema_path.display())))?;
    let schema = parse_schema(&text).map_err(|e| CliError::usage(e.to_string()))?;
    println!(
        "schema {}: {} objects, {} arrows, {} relations",
        schema.name,
        schema.graph().objects().len(),
        schema.graph().arrows().len(),
        schema.relations().len()
    );
    let rw = RewriteSystem::from_schema(&schema, DEFAULT_MAX_STEPS)
        .map_err(|e| CliError::usage(e.to_string()))?;
    for rel in schema.relations() {
        let nl = normalize(&rel.lhs, &rw).map_err(|e| CliError::usage(e.to_string()))?;
        let nr = normalize(&rel.rhs, &rw).map_err(|e| CliError::usage(e.to_string()))?;
        println!("  relation {}: normal forms {} = {}", rel.display(), nl, nr);
    }
    Ok(())
}

fn builtin_task(name: &str, seed: u64, points: usize) -> Result<TaskSpec, CliError> {
    match name {
        "cyclegan-toy" => Ok(gen_cyclegan_toy(seed, points)?),
        "product-toy" => Ok(gen_product_toy(seed, points)?),
        other => Err(CliError::usage(format!(
            "unknown task `{other}`; valid tasks: cyclegan-toy, product-toy"
        ))),
    }
}

fn builtin_schema_text(name: &str) -> Option<&'static str> {
    match name {
        "cyclegan-toy" => Some(functorium::schema::CYCLEGAN_DSL),
        "product-toy" => Some(functorium::schema::PRODUCT_DSL),
        _ => None,
    }
}

/// Assembles a task from a schema file plus a CSV dataset directory, using
/// `dim.<object>` / `latent.<object>` config keys for the embedding.
fn file_task(cfg: &RunConfig, schema_path: &Path) -> Result<(TaskSpec, Vec<String>), CliError> {
    let text = std::fs::read_to_string(schema_path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", schema_path.display())))?;
    let schema = parse_schema(&text).map_err(|e| CliError::usage(e.to_string()))?;
    let data_dir = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::usage("schema tasks need --data <dir>"))?;

    let mut dims = BTreeMap::new();
    let mut latents = Vec::new();
    let mut data_dims = BTreeMap::new();
    for object in schema.graph().objects() {
        let dim = *cfg.object_dims.get(object).ok_or_else(|| {
            CliError::usage(format!(
                "missing embedding dim for `{object}`; set dim.{object} = <k>"
            ))
        })?;
        dims.insert(object.clone(), dim);
        let latent = cfg.latent_dims.get(object).copied().unwrap_or(0);
        if latent > dim {
            return Err(CliError::mismatch(format!(
                "latent.{object} = {latent} exceeds dim.{object} = {dim}"
            )));
        }
        if latent > 0 {
            latents.push(LatentSpec::new(object.clone(), latent)?);
        }
        if dim - latent > 0 {
            data_dims.insert(object.clone(), dim - latent);
        }
    }
    let loaded = load_dataset(data_dir, &data_dims).map_err(|e| match e {
        functorium::Error::Dimension(_) => CliError::mismatch(e.to_string()),
        other => CliError::from(other),
    })?;
    let task = TaskSpec {
        name: schema.name.clone(),
        schema,
        embedding: EmbeddingSpec::new(dims)?,
        dataset: loaded.dataset.clone(),
        holdout: loaded.dataset,
        latents,
        oracle: None,
        seed: cfg.seed.unwrap_or(0),
    };
    task.validate()
        .map_err(|e| CliError::mismatch(e.to_string()))?;
    Ok((task, loaded.warnings))
}

struct ResolvedRun {
    task: TaskSpec,
    arch_spec: ArchSpec,
    critic_arch: BTreeMap<String, functorium::para::MLPSpec>,
    train_config: TrainConfig,
    warnings: Vec<String>,
}

fn resolve_run(cfg: &RunConfig) -> Result<ResolvedRun, CliError> {
    let seed = cfg.seed.unwrap_or(0);
    let (task, warnings, preset) = match (&cfg.task, &cfg.schema) {
        (Some(name), None) => {
            let task = builtin_task(name, seed, cfg.points.unwrap_or(DEFAULT_POINTS))?;
            let preset = preset_for_task(name, seed);
            (task, Vec::new(), preset)
        }
        (None, Some(path)) => {
            let (task, warnings) = file_task(cfg, path)?;
            (task, warnings, None)
        }
        (Some(_), Some(_)) => {
            return Err(CliError::usage("pass either --task or --schema, not both"))
        }
        (None, None) => return Err(CliError::usage("pass --task <name> or --schema <file>")),
    };

    let (gen_hidden, critic_hidden, mut train_config) = match preset {
        Some(p) => (p.gen_hidden, p.critic_hidden, p.config),
        None => (
            vec![32],
            vec![32, 32],
            TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        ),
    };
    let gen_hidden = cfg.gen_hidden.clone().unwrap_or(gen_hidden);
    let critic_hidden = cfg.critic_hidden.clone().unwrap_or(critic_hidden);
    cfg.apply_to(&mut train_config);

    let (mut arch_spec, critic_arch) = default_specs_for(&task, &gen_hidden, &critic_hidden)?;
    for (arrow, spec) in &cfg.arch_overrides {
        if !arch_spec.generators.contains_key(arrow) {
            return Err(CliError::usage(format!(
                "arch override for unknown arrow `{arrow}`"
            )));
        }
        arch_spec.generators.insert(arrow.clone(), spec.clone());
    }
    Ok(ResolvedRun {
        task,
        arch_spec,
        critic_arch,
        train_config,
        warnings,
    })
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.out
        .clone()
        .ok_or_else(|| CliError::usage("missing --out <dir>"))
}

/// Per-object plot data: real points, per-arrow generated points, and
/// cycle-mapped points for identity relations.
fn write_plots(
    dir: &Path,
    task: &TaskSpec,
    model: &Model,
    summary: &mut String,
) -> Result<Vec<String>, CliError> {
    let mut written = Vec::new();
    let mut rng = derive_rng(task.seed, STREAM_EVAL ^ 0x9); // separate from metric draws
    const GEN_COLORS: &[&str] = &["#d62728", "#ff7f0e"];
    const CYCLE_COLORS: &[&str] = &["#2ca02c", "#8c564b"];
    for object in task.schema.graph().objects() {
        let dim = task.embedding.dim(object).unwrap_or(0);
        if dim != 2 || task.latent_dim(object) != 0 {
            if dim != 2 {
                writeln!(summary, "plot {object}: skipped (dim {dim} is not 2)").ok();
            }
            continue;
        }
        let real = task.sample_object_batch(object, 256, SamplePool::Holdout, &mut rng)?;
        let mut series = vec![Series {
            label: "real",
            color: "#1f77b4",
            points: real.clone(),
        }];
        let mut labels: Vec<String> = Vec::new();
        for (i, arrow) in task
            .schema
            .graph()
            .arrows()
            .iter()
            .filter(|a| &a.target == object)
            .enumerate()
        {
            let input =
                task.sample_object_batch(&arrow.source, 256, SamplePool::Holdout, &mut rng)?;
            let generated = model.eval_arrow(&arrow.name, &input)?;
            labels.push(format!("generated by {}", arrow.name));
            series.push(Series {
                label: "",
                color: GEN_COLORS[i % GEN_COLORS.len()],
                points: generated,
            });
        }
        for (i, rel) in task
            .schema
            .relations()
            .iter()
            .filter(|r| r.lhs.source() == object)
            .enumerate()
        {
            let (cycle_path, is_cycle) = if rel.rhs.is_identity() {
                (&rel.lhs, true)
            } else if rel.lhs.is_identity() {
                (&rel.rhs, true)
            } else {
                (&rel.lhs, false)
            };
            if !is_cycle {
                continue;
            }
            let mapped = eval_path(model, cycle_path, &real)?;
            labels.push(format!("cycle {}", cycle_path));
            series.push(Series {
                label: "",
                color: CYCLE_COLORS[i % CYCLE_COLORS.len()],
                points: mapped,
            });
        }
        // patch the borrowed labels in
        let mut li = 0;
        for s in series.iter_mut().skip(1) {
            s.label = &labels[li];
            li += 1;
        }
        let svg = scatter_svg(&format!("{} / {object}", task.name), &series);
        let path = dir.join(format!("{object}.svg"));
        write_atomic(&path, &svg)?;
        writeln!(summary, "plot {object}: {}", path.display()).ok();
        written.push(object.clone());
    }
    Ok(written)
}

fn metrics_summary(metrics: &EvalMetrics, summary: &mut String) {
    for (name, v) in &metrics.relation_residuals {
        writeln!(summary, "residual {name}: {v:.6}").ok();
    }
    for (name, v) in &metrics.energy_distances {
        writeln!(summary, "energy distance {name}: {v:.6}").ok();
    }
    if let Some(p) = &metrics.product {
        writeln!(summary, "roundtrip base L1: {:.6}", p.roundtrip_base_l1).ok();
        writeln!(
            summary,
            "offset spread {:.6} vs population {:.6}",
            p.offset_spread, p.offset_population_std
        )
        .ok();
    }
}

fn run_training(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let resolved = resolve_run(cfg)?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(out)?;
    let arch = Architecture::from_spec(&resolved.task.schema, &resolved.arch_spec)?;
    let steps = resolved.train_config.total_steps;
    let progress_every = (steps / 10).max(1);
    let checkpoint_every = cfg.checkpoint_every.unwrap_or(0);

    let task = &resolved.task;
    let arch_spec = &resolved.arch_spec;
    let (model, log) = train_with_observer(
        task,
        arch,
        &resolved.critic_arch,
        &resolved.train_config,
        |view| {
            if view.step % progress_every == 0 || view.step + 1 == steps {
                eprintln!(
                    "step {:>6}/{steps}: total {:.4}",
                    view.step, view.record.total
                );
            }
            if checkpoint_every > 0 && view.step > 0 && view.step % checkpoint_every == 0 {
                let cp = Checkpoint {
                    schema_name: task.schema.name.clone(),
                    arch: arch_spec.clone(),
                    params: view.model.params().clone(),
                };
                let path = out.join(format!("checkpoint-{}.txt", view.step));
                let text = cp.to_text()?;
                write_atomic(&path, &text).map_err(functorium::Error::from)?;
            }
            Ok(())
        },
    )
    .map_err(CliError::from)?;

    let checkpoint = Checkpoint {
        schema_name: resolved.task.schema.name.clone(),
        arch: resolved.arch_spec.clone(),
        params: model.params().clone(),
    };
    write_atomic(&out.join("checkpoint.txt"), &checkpoint.to_text()?)?;
    write_atomic(&out.join("trainlog.csv"), &log.to_csv())?;

    let metrics = evaluate(&model, &resolved.task, cfg.n_eval.unwrap_or(DEFAULT_EVAL))?;
    write_atomic(&out.join("metrics.csv"), &metrics.to_csv())?;

    let mut summary = String::new();
    writeln!(summary, "task: {}", resolved.task.name).ok();
    writeln!(summary, "seed: {}", resolved.train_config.seed).ok();
    writeln!(summary, "steps: {steps}").ok();
    writeln!(summary, "gamma: {}", resolved.train_config.gamma).ok();
    metrics_summary(&metrics, &mut summary);
    write_plots(&out.join("plots"), &resolved.task, &model, &mut summary)?;
    write_atomic(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// Trains on a built-in task or a schema+CSV dataset and writes checkpoint,
/// training log, metrics and plots under the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    run_training(cfg, &out)
}

/// Loads a checkpoint, checks it against the task, and writes metrics and
/// plots.
pub fn cmd_eval(checkpoint_path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let checkpoint =
        Checkpoint::load(checkpoint_path).map_err(|e| CliError::usage(e.to_string()))?;

    let seed = cfg.seed.unwrap_or(0);
    let (task, warnings) = match (&cfg.task, &cfg.schema) {
        (Some(name), None) => (
            builtin_task(name, seed, cfg.points.unwrap_or(DEFAULT_POINTS))?,
            Vec::new(),
        ),
        (None, Some(path)) => file_task(cfg, path)?,
        _ => return Err(CliError::usage("pass --task <name> or --schema <file>")),
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    if checkpoint.schema_name != task.schema.name {
        return Err(CliError::mismatch(format!(
            "checkpoint is for schema `{}` but the task uses schema `{}`",
            checkpoint.schema_name, task.schema.name
        )));
    }
    for (object, dim) in &checkpoint.arch.object_dims {
        if task.embedding.dim(object) != Some(*dim) {
            return Err(CliError::mismatch(format!(
                "checkpoint embeds `{object}` in dim {dim}, task expects {:?}",
                task.embedding.dim(object)
            )));
        }
    }
    let arch = Architecture::from_spec(&task.schema, &checkpoint.arch)
        .map_err(|e| CliError::mismatch(e.to_string()))?;
    let model = pspec(arch, checkpoint.params).map_err(|e| CliError::mismatch(e.to_string()))?;

    std::fs::create_dir_all(&out)?;
    let metrics = evaluate(&model, &task, cfg.n_eval.unwrap_or(DEFAULT_EVAL))?;
    write_atomic(&out.join("metrics.csv"), &metrics.to_csv())?;
    let mut summary = String::new();
    writeln!(summary, "task: {}", task.name).ok();
    writeln!(summary, "checkpoint: {}", checkpoint_path.display()).ok();
    metrics_summary(&metrics, &mut summary);
    write_plots(&out.join("plots"), &task, &model, &mut summary)?;
    write_atomic(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// Generates a built-in task's data, trains with the task preset, evaluates,
/// and writes a self-contained report directory.
pub fn cmd_demo(task_name: &str, cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let schema_text = builtin_schema_text(task_name).ok_or_else(|| {
        CliError::usage(format!(
            "unknown task `{task_name}`; valid tasks: cyclegan-toy, product-toy"
        ))
    })?;
    std::fs::create_dir_all(&out)?;
    write_atomic(&out.join("schema.schema"), schema_text)?;

    let seed = cfg.seed.unwrap_or(0);
    let task = builtin_task(task_name, seed, cfg.points.unwrap_or(DEFAULT_POINTS))?;
    write_dataset_csv(&out.join("data"), &task.dataset)?;

    let mut cfg = cfg.clone();
    cfg.task = Some(task_name.to_string());
    run_training(&cfg, &out)
}

/// Re-exported for tests: the dataset the demo writes.
pub fn demo_dataset(task_name: &str, seed: u64, points: usize) -> Result<DatasetFunctor, CliError> {
    Ok(builtin_task(task_name, seed, points)?.dataset)
}
