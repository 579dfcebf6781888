//! Dataset functors, task assembly, and the built-in synthetic tasks.
//!
//! A dataset assigns a finite point list to each object and has no arrow
//! action. An object may carry a latent factor: its stored points then cover
//! only the leading data coordinates and the trailing latent coordinates are
//! drawn uniformly from [0,1] at sampling time. Objects with no stored
//! points and a full-width latent factor are latent-only.
//!
//! The two domains of a synthetic task are always sampled with independent
//! draws; no pairing information exists anywhere in a [`TaskSpec`].

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{functoriality_residual, PathEvaluator};
use crate::schema::{parse_schema, Schema, CYCLEGAN_DSL, PRODUCT_DSL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path as FsPath;
use std::sync::Arc;

/// Embedding dimension per object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddingSpec {
    dims: BTreeMap<String, usize>,
}

impl EmbeddingSpec {
    pub fn new(dims: BTreeMap<String, usize>) -> Result<Self> {
        for (name, dim) in &dims {
            if *dim == 0 {
                return Err(Error::Dimension(format!(
                    "object `{name}` embedded in dim 0"
                )));
            }
        }
        Ok(EmbeddingSpec { dims })
    }

    pub fn dim(&self, object: &str) -> Option<usize> {
        self.dims.get(object).copied()
    }

    pub fn dims(&self) -> &BTreeMap<String, usize> {
        &self.dims
    }
}

/// Finite point lists per object; lists may be empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetFunctor {
    points: BTreeMap<String, Vec<Tensor>>,
}

impl DatasetFunctor {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Inserts a point list, checking that all points are finite vectors of
    /// one common dimension.
    pub fn insert(&mut self, object: &str, points: Vec<Tensor>) -> Result<()> {
        let mut dim = None;
        for p in &points {
            if p.rank() != 1 {
                return Err(Error::Shape(format!(
                    "dataset point for `{object}` has shape {:?}, expected a vector",
                    p.shape()
                )));
            }
            p.ensure_finite(&format!("dataset point of `{object}`"))?;
            match dim {
                None => dim = Some(p.numel()),
                Some(d) if d == p.numel() => {}
                Some(d) => {
                    return Err(Error::Dimension(format!(
                        "dataset points for `{object}` mix dims {d} and {}",
                        p.numel()
                    )))
                }
            }
        }
        self.points.insert(object.to_string(), points);
        Ok(())
    }

    pub fn points(&self, object: &str) -> &[Tensor] {
        self.points.get(object).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self, object: &str) -> usize {
        self.points(object).len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.values().all(Vec::is_empty)
    }

    pub fn objects(&self) -> impl Iterator<Item = &String> {
        self.points.keys()
    }
}

/// A uniform-[0,1] factor occupying the trailing `dim` coordinates of an
/// object's embedding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentSpec {
    pub object: String,
    pub dim: usize,
}

impl LatentSpec {
    pub fn new(object: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("latent factor of dim 0".into()));
        }
        Ok(LatentSpec {
            object: object.into(),
            dim,
        })
    }
}

type OracleMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Exact reference maps for a synthetic task's generators. They satisfy the
/// schema's relations on construction samples (tolerance 1e-9) and plug in
/// anywhere a model does via [`PathEvaluator`].
#[derive(Clone)]
pub struct GroundTruthOracle {
    object_dims: BTreeMap<String, usize>,
    arrow_dims: BTreeMap<String, (usize, usize)>,
    maps: BTreeMap<String, OracleMap>,
}

impl std::fmt::Debug for GroundTruthOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroundTruthOracle")
            .field("arrows", &self.maps.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl GroundTruthOracle {
    /// Builds the oracle and verifies every relation on the given per-object
    /// check batches.
    pub fn new(
        schema: &Schema,
        object_dims: BTreeMap<String, usize>,
        maps: BTreeMap<String, OracleMap>,
        check_samples: &BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let mut arrow_dims = BTreeMap::new();
        for arrow in schema.graph().arrows() {
            if !maps.contains_key(&arrow.name) {
                return Err(Error::Missing {
                    kind: "oracle map",
                    name: arrow.name.clone(),
                });
            }
            arrow_dims.insert(
                arrow.name.clone(),
                (object_dims[&arrow.source], object_dims[&arrow.target]),
            );
        }
        let oracle = GroundTruthOracle {
            object_dims,
            arrow_dims,
            maps,
        };
        let residuals = functoriality_residual(&oracle, schema, check_samples)?;
        for (rel, r) in residuals {
            if r > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "oracle violates relation `{rel}`: residual {r:e}"
                )));
            }
        }
        Ok(oracle)
    }
}

impl PathEvaluator for GroundTruthOracle {
    fn object_dim(&self, object: &str) -> Option<usize> {
        self.object_dims.get(object).copied()
    }

    fn arrow_output(&self, arrow: &str, input: &Tensor) -> Result<Tensor> {
        let map = self.maps.get(arrow).ok_or_else(|| Error::Unknown {
            kind: "arrow",
            name: arrow.to_string(),
        })?;
        let (in_dim, out_dim) = self.arrow_dims[arrow];
        match input.shape() {
            [d] if *d == in_dim => Ok(Tensor::vector(map(input.data()))),
            [n, d] if *d == in_dim => {
                let mut data = Vec::with_capacity(n * out_dim);
                for r in 0..*n {
                    data.extend_from_slice(&map(input.row(r)));
                }
                Tensor::matrix(*n, out_dim, data)
            }
            other => Err(Error::Dimension(format!(
                "oracle `{arrow}` fed shape {other:?}, expects width {in_dim}"
            ))),
        }
    }
}

/// Everything a training run needs: presentation, embedding, data, latent
/// factors, and (for synthetic tasks) the exact oracle plus held-out pools.
#[derive(Clone, Debug)]
pub struct TaskSpec {
    pub name: String,
    pub schema: Schema,
    pub embedding: EmbeddingSpec,
    pub dataset: DatasetFunctor,
    /// Points generated under an independent stream, used for evaluation.
    pub holdout: DatasetFunctor,
    pub latents: Vec<LatentSpec>,
    pub oracle: Option<GroundTruthOracle>,
    /// Seed of the generating process; evaluation derives its own stream
    /// from it.
    pub seed: u64,
}

impl TaskSpec {
    /// Checks dataset/latent consistency against the embedding:
    /// stored point dim + latent dim must equal the object's embedding dim.
    pub fn validate(&self) -> Result<()> {
        for object in self.schema.graph().objects() {
            let embed = self.embedding.dim(object).ok_or_else(|| Error::Missing {
                kind: "embedding dim",
                name: object.clone(),
            })?;
            let latent = self.latent_dim(object);
            if latent > embed {
                return Err(Error::Dimension(format!(
                    "latent factor of `{object}` wider than its embedding"
                )));
            }
            let data_dim = embed - latent;
            for source in [&self.dataset, &self.holdout] {
                if let Some(p) = source.points(object).first() {
                    if p.numel() != data_dim {
                        return Err(Error::Dimension(format!(
                            "points for `{object}` have dim {}, expected {data_dim} \
                             (embedding {embed} minus latent {latent})",
                            p.numel()
                        )));
                    }
                }
                if data_dim == 0 && !source.points(object).is_empty() {
                    return Err(Error::Dimension(format!(
                        "latent-only object `{object}` cannot carry dataset points"
                    )));
                }
            }
        }
        for latent in &self.latents {
            if !self.schema.graph().has_object(&latent.object) {
                return Err(Error::Unknown {
                    kind: "object",
                    name: latent.object.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn latent_dim(&self, object: &str) -> usize {
        self.latents
            .iter()
            .filter(|l| l.object == object)
            .map(|l| l.dim)
            .sum()
    }

    pub fn data_dim(&self, object: &str) -> usize {
        self.embedding.dim(object).unwrap_or(0) - self.latent_dim(object)
    }

    /// True when the object has at least one stored data coordinate.
    pub fn is_data_bearing(&self, object: &str) -> bool {
        self.data_dim(object) > 0
    }

    /// Draws an `n × dim` batch for an object: data coordinates uniformly
    /// with replacement from the chosen pool, latent coordinates i.i.d.
    /// uniform on [0,1]. Draw order is rows-first data, then rows-first
    /// latent.
    pub fn sample_object_batch(
        &self,
        object: &str,
        n: usize,
        pool: SamplePool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        let source = match pool {
            SamplePool::Train => &self.dataset,
            SamplePool::Holdout => &self.holdout,
        };
        let data_dim = self.data_dim(object);
        let latent_dim = self.latent_dim(object);
        let data_part = if data_dim > 0 {
            Some(sample_dataset_batch(source, object, n, rng)?)
        } else {
            None
        };
        let latent_part = if latent_dim > 0 {
            Some(sample_latent_tensor(latent_dim, n, rng))
        } else {
            None
        };
        match (data_part, latent_part) {
            (Some(d), Some(l)) => Tensor::hstack(&[&d, &l]),
            (Some(d), None) => Ok(d),
            (None, Some(l)) => Ok(l),
            (None, None) => Err(Error::Dimension(format!(
                "object `{object}` has neither data nor latent coordinates"
            ))),
        }
    }
}

/// Which point pool a batch is drawn from.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SamplePool {
    Train,
    Holdout,
}

/// Uniform-with-replacement rows from a dataset object.
pub fn sample_dataset_batch(
    dataset: &DatasetFunctor,
    object: &str,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let points = dataset.points(object);
    if points.is_empty() {
        return Err(Error::Missing {
            kind: "dataset points",
            name: object.to_string(),
        });
    }
    let dim = points[0].numel();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let i = rng.gen_range(0..points.len());
        data.extend_from_slice(points[i].data());
    }
    Tensor::matrix(n, dim, data)
}

/// An `n × spec.dim` batch of i.i.d. uniform-[0,1] latent vectors.
pub fn sample_latent_batch(spec: &LatentSpec, n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    sample_latent_tensor(spec.dim, n, rng)
}

fn sample_latent_tensor(dim: usize, n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::matrix(n, dim, data).expect("shape by construction")
}

/// Derives an independent deterministic stream from a base seed. Stream tags
/// used by this crate: 0 data generation, 1 holdout generation, 2 parameter
/// init, 3 training batches, 4 evaluation.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    // splitmix64 over seed xor a stream constant
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

pub const STREAM_DATA: u64 = 0;
pub const STREAM_HOLDOUT: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_BATCH: u64 = 3;
pub const STREAM_EVAL: u64 = 4;

fn gaussian_blob(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<Tensor> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    (0..n)
        .map(|_| Tensor::vector(vec![normal.sample(rng), normal.sample(rng)]))
        .collect()
}

/// Rotation by 90° then translation by (2, 0): the exact inter-domain map of
/// the 2-D cycle task.
fn cyclegan_forward(p: &[f64]) -> Vec<f64> {
    vec![-p[1] + 2.0, p[0]]
}

fn cyclegan_inverse(p: &[f64]) -> Vec<f64> {
    vec![p[1], 2.0 - p[0]]
}

/// 2-D two-domain cycle task: domain A is an isotropic Gaussian blob
/// (σ = 0.5 at the origin), domain B its image under a fixed rotation plus
/// translation, sampled independently. The oracle is the exact pair
/// (T, T⁻¹).
pub fn gen_cyclegan_toy(seed: u64, n: usize) -> Result<TaskSpec> {
    if n < 16 {
        return Err(Error::InvalidArgument(
            "need at least 16 points per domain".into(),
        ));
    }
    let schema = parse_schema(CYCLEGAN_DSL)?;
    let embedding = EmbeddingSpec::new([("A".to_string(), 2), ("B".to_string(), 2)].into())?;

    let make = |rng: &mut ChaCha8Rng, count: usize| -> (Vec<Tensor>, Vec<Tensor>) {
        let a = gaussian_blob(rng, count, 0.5);
        // fresh draws for B: the domains stay unpaired
        let b: Vec<Tensor> = gaussian_blob(rng, count, 0.5)
            .iter()
            .map(|p| Tensor::vector(cyclegan_forward(p.data())))
            .collect();
        (a, b)
    };

    let mut dataset = DatasetFunctor::empty();
    let (a, b) = make(&mut derive_rng(seed, STREAM_DATA), n);
    dataset.insert("A", a)?;
    dataset.insert("B", b)?;

    let mut holdout = DatasetFunctor::empty();
    let (a, b) = make(&mut derive_rng(seed, STREAM_HOLDOUT), 512.max(n / 4));
    holdout.insert("A", a)?;
    holdout.insert("B", b)?;

    let maps: BTreeMap<String, OracleMap> = [
        (
            "f".to_string(),
            Arc::new(|p: &[f64]| cyclegan_forward(p)) as OracleMap,
        ),
        (
            "g".to_string(),
            Arc::new(|p: &[f64]| cyclegan_inverse(p)) as OracleMap,
        ),
    ]
    .into();
    let mut check_rng = derive_rng(seed, STREAM_EVAL);
    let check: BTreeMap<String, Tensor> = [
        (
            "A".to_string(),
            Tensor::matrix(
                64,
                2,
                (0..128).map(|_| check_rng.gen_range(-2.0..2.0)).collect(),
            )?,
        ),
        (
            "B".to_string(),
            Tensor::matrix(
                64,
                2,
                (0..128).map(|_| check_rng.gen_range(-2.0..2.0)).collect(),
            )?,
        ),
    ]
    .into();
    let oracle = GroundTruthOracle::new(
        &schema,
        [("A".to_string(), 2), ("B".to_string(), 2)].into(),
        maps,
        &check,
    )?;

    let task = TaskSpec {
        name: "cyclegan-toy".into(),
        schema,
        embedding,
        dataset,
        holdout,
        latents: vec![],
        oracle: Some(oracle),
        seed,
    };
    task.validate()?;
    Ok(task)
}

/// Attribute offset of the product task: direction from z₁, magnitude in
/// [0.25, 0.5] from z₂.
fn product_offset(z: &[f64]) -> [f64; 2] {
    let angle = std::f64::consts::TAU * z[0];
    let mag = 0.5 * (0.5 + 0.5 * z[1]);
    [mag * angle.cos(), mag * angle.sin()]
}

/// Attach: (a, z) -> (a, a + r(z)).
fn product_compose(p: &[f64]) -> Vec<f64> {
    let r = product_offset(&p[2..4]);
    vec![p[0], p[1], p[0] + r[0], p[1] + r[1]]
}

/// Detach: (a, b) -> (a, z) recovering the latent exactly from the offset.
fn product_decompose(p: &[f64]) -> Vec<f64> {
    let (rx, ry) = (p[2] - p[0], p[3] - p[1]);
    let mag = (rx * rx + ry * ry).sqrt();
    let mut z1 = ry.atan2(rx) / std::f64::consts::TAU;
    if z1 < 0.0 {
        z1 += 1.0;
    }
    let z2 = (mag / 0.5 - 0.5) / 0.5;
    vec![p[0], p[1], z1, z2]
}

/// Composite-object task: a base point in ℝ² plus a 2-D latent attribute on
/// one side, their injective combination (base, base + offset) in ℝ⁴ on the
/// other. The two datasets are generated from independent draws; the oracle
/// pair (compose, decompose) inverts exactly.
pub fn gen_product_toy(seed: u64, n: usize) -> Result<TaskSpec> {
    if n < 16 {
        return Err(Error::InvalidArgument(
            "need at least 16 points per domain".into(),
        ));
    }
    let schema = parse_schema(PRODUCT_DSL)?;
    let embedding = EmbeddingSpec::new([("AxBz".to_string(), 4), ("AB".to_string(), 4)].into())?;
    let latents = vec![LatentSpec::new("AxBz", 2)?];

    let make = |rng: &mut ChaCha8Rng, count: usize| -> (Vec<Tensor>, Vec<Tensor>) {
        let bases = gaussian_blob(rng, count, 0.5);
        // fresh base and latent draws for the composite side (unpaired)
        let ab: Vec<Tensor> = gaussian_blob(rng, count, 0.5)
            .iter()
            .map(|a| {
                let z = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                let joint = [a.data()[0], a.data()[1], z[0], z[1]];
                Tensor::vector(product_compose(&joint))
            })
            .collect();
        (bases, ab)
    };

    let mut dataset = DatasetFunctor::empty();
    let (a, ab) = make(&mut derive_rng(seed, STREAM_DATA), n);
    dataset.insert("AxBz", a)?;
    dataset.insert("AB", ab)?;

    let mut holdout = DatasetFunctor::empty();
    let (a, ab) = make(&mut derive_rng(seed, STREAM_HOLDOUT), 512.max(n / 4));
    holdout.insert("AxBz", a)?;
    holdout.insert("AB", ab)?;

    let maps: BTreeMap<String, OracleMap> = [
        (
            "c".to_string(),
            Arc::new(|p: &[f64]| product_compose(p)) as OracleMap,
        ),
        (
            "d".to_string(),
            Arc::new(|p: &[f64]| product_decompose(p)) as OracleMap,
        ),
    ]
    .into();
    // relation checks run on valid composites: (a, z) pairs and their images
    let mut check_rng = derive_rng(seed, STREAM_EVAL);
    let mut axbz = Vec::with_capacity(64 * 4);
    let mut ab = Vec::with_capacity(64 * 4);
    for _ in 0..64 {
        let joint = [
            check_rng.gen_range(-1.5..1.5),
            check_rng.gen_range(-1.5..1.5),
            check_rng.gen_range(0.0..1.0),
            check_rng.gen_range(0.0..1.0),
        ];
        axbz.extend_from_slice(&joint);
        ab.extend_from_slice(&product_compose(&joint));
    }
    let check: BTreeMap<String, Tensor> = [
        ("AxBz".to_string(), Tensor::matrix(64, 4, axbz)?),
        ("AB".to_string(), Tensor::matrix(64, 4, ab)?),
    ]
    .into();
    let oracle = GroundTruthOracle::new(
        &schema,
        [("AxBz".to_string(), 4), ("AB".to_string(), 4)].into(),
        maps,
        &check,
    )?;

    let task = TaskSpec {
        name: "product-toy".into(),
        schema,
        embedding,
        dataset,
        holdout,
        latents,
        oracle: Some(oracle),
        seed,
    };
    task.validate()?;
    Ok(task)
}

/// Result of loading a dataset directory: the functor plus any warnings
/// (missing files are warnings, malformed files are fatal).
#[derive(Debug)]
pub struct LoadedDataset {
    pub dataset: DatasetFunctor,
    pub warnings: Vec<String>,
}

/// Loads one `<object>.csv` per entry of `expected_dims`. First line is
/// `<object-name>,<dim>`; each following line holds `dim` comma-separated
/// floats. `#` starts a comment. A missing file yields an empty point list
/// and a warning; dimension or number errors are fatal.
pub fn load_dataset(
    dir: &FsPath,
    expected_dims: &BTreeMap<String, usize>,
) -> Result<LoadedDataset> {
    let mut dataset = DatasetFunctor::empty();
    let mut warnings = Vec::new();
    for (object, &dim) in expected_dims {
        let path = dir.join(format!("{object}.csv"));
        if !path.exists() {
            warnings.push(format!(
                "no file for object `{object}` at {}; treating its dataset as empty",
                path.display()
            ));
            dataset.insert(object, Vec::new())?;
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        let points = parse_dataset_csv(&text, object, dim)?;
        dataset.insert(object, points)?;
    }
    Ok(LoadedDataset { dataset, warnings })
}

fn parse_dataset_csv(text: &str, object: &str, dim: usize) -> Result<Vec<Tensor>> {
    let mut lines = text
        .lines()
        .map(|l| match l.find('#') {
            Some(i) => &l[..i],
            None => l,
        })
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format("dataset csv", format!("`{object}.csv` is empty")))?;
    let mut head = header.split(',').map(str::trim);
    let head_name = head.next().unwrap_or("");
    let head_dim: usize = head
        .next()
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::format("dataset csv", format!("bad header `{header}`")))?;
    if head_name != object {
        return Err(Error::format(
            "dataset csv",
            format!("header names `{head_name}` but the file is for `{object}`"),
        ));
    }
    if head_dim != dim {
        return Err(Error::Dimension(format!(
            "`{object}.csv` declares dim {head_dim}, expected {dim}"
        )));
    }

    let mut points = Vec::new();
    for (lineno, line) in lines {
        let values = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| {
                    Error::format(
                        "dataset csv",
                        format!("`{object}.csv` line {}: bad number `{v}`", lineno + 1),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::Dimension(format!(
                "`{object}.csv` line {}: {} values, expected {dim}",
                lineno + 1,
                values.len()
            )));
        }
        points.push(Tensor::checked(vec![dim], values)?);
    }
    Ok(points)
}

/// Writes one `<object>.csv` per object with stored points.
pub fn write_dataset_csv(dir: &FsPath, dataset: &DatasetFunctor) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for object in dataset.objects() {
        let points = dataset.points(object);
        if points.is_empty() {
            continue;
        }
        let dim = points[0].numel();
        let mut out = format!("{object},{dim}\n");
        for p in points {
            let row: Vec<String> = p.data().iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(dir.join(format!("{object}.csv")), out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::eval_path;
    use crate::schema::Path;

    #[test]
    fn cyclegan_oracle_satisfies_relations() {
        let task = gen_cyclegan_toy(7, 64).unwrap();
        let oracle = task.oracle.as_ref().unwrap();
        let mut rng = derive_rng(7, 99);
        let batch = task
            .sample_object_batch("A", 128, SamplePool::Train, &mut rng)
            .unwrap();
        let fg = Path::from_arrows(task.schema.graph(), vec!["f".into(), "g".into()]).unwrap();
        let round = eval_path(oracle, &fg, &batch).unwrap();
        for (a, b) in round.data().iter().zip(batch.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cyclegan_b_domain_sits_near_2_0() {
        let n = 2048;
        let task = gen_cyclegan_toy(7, n).unwrap();
        let pts = task.dataset.points("B");
        assert_eq!(pts.len(), n);
        let (mut mx, mut my) = (0.0, 0.0);
        for p in pts {
            mx += p.data()[0];
            my += p.data()[1];
        }
        mx /= n as f64;
        my /= n as f64;
        // 3σ/√n bound with σ = 0.5
        let bound = 3.0 * 0.5 / (n as f64).sqrt();
        assert!((mx - 2.0).abs() < bound, "mean x {mx}");
        assert!(my.abs() < bound, "mean y {my}");
    }

    #[test]
    fn cyclegan_schema_is_the_parsed_presentation() {
        let task = gen_cyclegan_toy(1, 16).unwrap();
        assert_eq!(task.schema, parse_schema(CYCLEGAN_DSL).unwrap());
    }

    #[test]
    fn product_oracle_round_trips_exactly() {
        let task = gen_product_toy(3, 64).unwrap();
        let oracle = task.oracle.as_ref().unwrap();
        let mut rng = derive_rng(3, 90);
        let batch = task
            .sample_object_batch("AxBz", 1000, SamplePool::Train, &mut rng)
            .unwrap();
        let dc = Path::from_arrows(task.schema.graph(), vec!["c".into(), "d".into()]).unwrap();
        let round = eval_path(oracle, &dc, &batch).unwrap();
        for (a, b) in round.data().iter().zip(batch.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn product_oracle_projection_returns_base_exactly() {
        let task = gen_product_toy(5, 32).unwrap();
        let oracle = task.oracle.as_ref().unwrap();
        for ab in task.dataset.points("AB").iter().take(50) {
            let back = oracle.arrow_output("d", ab).unwrap();
            assert_eq!(&back.data()[..2], &ab.data()[..2]);
        }
    }

    #[test]
    fn product_fixed_latent_gives_identical_offsets() {
        let task = gen_product_toy(11, 32).unwrap();
        let oracle = task.oracle.as_ref().unwrap();
        let z = [0.37, 0.81];
        let mut offsets = Vec::new();
        for k in 0..5 {
            let a = [0.3 * k as f64 - 0.6, 0.1 * k as f64];
            let joint = Tensor::vector(vec![a[0], a[1], z[0], z[1]]);
            let ab = oracle.arrow_output("c", &joint).unwrap();
            offsets.push([ab.data()[2] - ab.data()[0], ab.data()[3] - ab.data()[1]]);
        }
        for o in &offsets[1..] {
            assert!((o[0] - offsets[0][0]).abs() < 1e-9);
            assert!((o[1] - offsets[0][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let task = gen_cyclegan_toy(9, 64).unwrap();
        let b1 = task
            .sample_object_batch("A", 8, SamplePool::Train, &mut derive_rng(1, 2))
            .unwrap();
        let b2 = task
            .sample_object_batch("A", 8, SamplePool::Train, &mut derive_rng(1, 2))
            .unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn batch_rows_come_from_the_dataset() {
        let task = gen_cyclegan_toy(2, 16).unwrap();
        let batch = task
            .sample_object_batch("A", 4, SamplePool::Train, &mut derive_rng(0, 0))
            .unwrap();
        for r in 0..4 {
            let row = batch.row(r);
            assert!(task.dataset.points("A").iter().any(|p| p.data() == row));
        }
    }

    #[test]
    fn latent_batches_live_in_the_unit_cube() {
        let spec = LatentSpec::new("Z", 100).unwrap();
        let batch = sample_latent_batch(&spec, 2, &mut derive_rng(4, 4));
        assert_eq!(batch.shape(), &[2, 100]);
        assert!(batch.data().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn product_batches_mix_data_and_latent() {
        let task = gen_product_toy(13, 32).unwrap();
        let batch = task
            .sample_object_batch("AxBz", 6, SamplePool::Train, &mut derive_rng(13, 3))
            .unwrap();
        assert_eq!(batch.shape(), &[6, 4]);
        for r in 0..6 {
            let row = batch.row(r);
            // base from dataset, z in the cube
            assert!(task
                .dataset
                .points("AxBz")
                .iter()
                .any(|p| p.data() == &row[..2]));
            assert!((0.0..1.0).contains(&row[2]) && (0.0..1.0).contains(&row[3]));
        }
    }

    #[test]
    fn empty_dataset_object_cannot_be_sampled() {
        let mut ds = DatasetFunctor::empty();
        ds.insert("A", vec![]).unwrap();
        assert!(sample_dataset_batch(&ds, "A", 4, &mut derive_rng(0, 0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("functorium-csv-{}", std::process::id()));
        let task = gen_cyclegan_toy(21, 16).unwrap();
        write_dataset_csv(&dir, &task.dataset).unwrap();
        let dims: BTreeMap<String, usize> = [("A".to_string(), 2), ("B".to_string(), 2)].into();
        let loaded = load_dataset(&dir, &dims).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.dataset.points("A").len(), 16);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_header_and_row_errors() {
        assert!(parse_dataset_csv("A,2\n1.0,2.0,3.0\n", "A", 2).is_err());
        assert!(parse_dataset_csv("B,2\n1.0,2.0\n", "A", 2).is_err());
        assert!(parse_dataset_csv("A,2\n1.0,oops\n", "A", 2).is_err());
        assert!(parse_dataset_csv("A,3\n", "A", 2).is_err());
        let ok =
            parse_dataset_csv("A,2 # dim two\n1.0,2.0\n# comment\n0.5,0.25\n", "A", 2).unwrap();
        assert_eq!(ok.len(), 2);
    }

    #[test]
    fn missing_file_is_a_warning() {
        let dir = std::env::temp_dir().join(format!("functorium-empty-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let dims: BTreeMap<String, usize> = [("A".to_string(), 2)].into();
        let loaded = load_dataset(&dir, &dims).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.dataset.points("A").is_empty());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn small_n_rejected() {
        assert!(gen_cyclegan_toy(0, 8).is_err());
        assert!(gen_product_toy(0, 8).is_err());
    }

    #[test]
    fn domains_are_unpaired() {
        // B is not the pointwise image of A under the true map: the two
        // domains come from independent draws
        let task = gen_cyclegan_toy(31, 64).unwrap();
        let oracle = task.oracle.as_ref().unwrap();
        let paired = task
            .dataset
            .points("A")
            .iter()
            .zip(task.dataset.points("B"))
            .filter(|(a, b)| {
                let image = oracle.arrow_output("f", a).unwrap();
                image
                    .data()
                    .iter()
                    .zip(b.data())
                    .all(|(x, y)| (x - y).abs() < 1e-9)
            })
            .count();
        assert_eq!(paired, 0);
    }
}
