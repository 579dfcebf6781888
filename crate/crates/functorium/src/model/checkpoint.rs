//! Model checkpoints.
//!
//! Line-oriented text format, version-tagged. Parameter values are stored as
//! hex-encoded f64 bit patterns so a round trip is exact:
//!
//! ```text
//! functorium-checkpoint v1
//! schema <name>
//! object <name> <dim>
//! ...
//! generator <arrow> <widths;hidden;final>
//! ...
//! params <arrow> <count> <hex> <hex> ...
//! ...
//! ```

use super::{ArchSpec, ParameterAssignment};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "functorium-checkpoint v1";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub schema_name: String,
    pub arch: ArchSpec,
    pub params: ParameterAssignment,
}

impl Checkpoint {
    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "schema {}", self.schema_name).unwrap();
        for (object, dim) in &self.arch.object_dims {
            writeln!(out, "object {object} {dim}").unwrap();
        }
        for (arrow, spec) in &self.arch.generators {
            writeln!(out, "generator {arrow} {spec}").unwrap();
        }
        for (arrow, spec) in &self.arch.generators {
            let block = self.params.get(arrow).ok_or_else(|| Error::Missing {
                kind: "parameter block",
                name: arrow.clone(),
            })?;
            if block.numel() != spec.param_dim() {
                return Err(Error::Dimension(format!(
                    "block `{arrow}` has {} values, spec expects {}",
                    block.numel(),
                    spec.param_dim()
                )));
            }
            write!(out, "params {arrow} {}", block.numel()).unwrap();
            for v in block.data() {
                write!(out, " {:016x}", v.to_bits()).unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Checkpoint> {
        let mut lines = text.lines();
        let bad = |msg: String| Error::format("checkpoint", msg);
        if lines.next() != Some(MAGIC) {
            return Err(bad(format!("missing `{MAGIC}` header")));
        }
        let schema_line = lines.next().ok_or_else(|| bad("truncated file".into()))?;
        let schema_name = schema_line
            .strip_prefix("schema ")
            .ok_or_else(|| bad(format!("expected `schema <name>`, got `{schema_line}`")))?
            .to_string();

        let mut object_dims = BTreeMap::new();
        let mut generators = BTreeMap::new();
        let mut values = BTreeMap::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("object") => {
                    let name = fields
                        .next()
                        .ok_or_else(|| bad("object line missing name".into()))?;
                    let dim: usize = fields
                        .next()
                        .and_then(|d| d.parse().ok())
                        .ok_or_else(|| bad(format!("bad object dim on `{line}`")))?;
                    object_dims.insert(name.to_string(), dim);
                }
                Some("generator") => {
                    let name = fields
                        .next()
                        .ok_or_else(|| bad("generator line missing name".into()))?;
                    let spec: crate::para::MLPSpec = fields
                        .next()
                        .ok_or_else(|| bad(format!("generator `{name}` missing spec")))?
                        .parse()?;
                    generators.insert(name.to_string(), spec);
                }
                Some("params") => {
                    let name = fields
                        .next()
                        .ok_or_else(|| bad("params line missing name".into()))?
                        .to_string();
                    let count: usize = fields
                        .next()
                        .and_then(|d| d.parse().ok())
                        .ok_or_else(|| bad(format!("bad params count for `{name}`")))?;
                    let data = fields
                        .map(|h| {
                            u64::from_str_radix(h, 16)
                                .map(f64::from_bits)
                                .map_err(|_| bad(format!("bad hex value `{h}`")))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    if data.len() != count {
                        return Err(bad(format!(
                            "params `{name}` declares {count} values, has {}",
                            data.len()
                        )));
                    }
                    values.insert(name, Tensor::checked(vec![count], data)?);
                }
                Some(other) => return Err(bad(format!("unknown record `{other}`"))),
                None => continue,
            }
        }

        for (arrow, spec) in &generators {
            match values.get(arrow) {
                Some(t) if t.numel() == spec.param_dim() => {}
                Some(t) => {
                    return Err(bad(format!(
                        "params `{arrow}` has {} values, spec expects {}",
                        t.numel(),
                        spec.param_dim()
                    )))
                }
                None => return Err(bad(format!("missing params for generator `{arrow}`"))),
            }
        }

        Ok(Checkpoint {
            schema_name,
            arch: ArchSpec {
                object_dims,
                generators,
            },
            params: ParameterAssignment::new(values),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        Checkpoint::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::para::{Activation, FinalActivation, MLPSpec};

    fn sample() -> Checkpoint {
        let spec = MLPSpec::new(vec![2, 3, 2], Activation::Tanh, FinalActivation::None).unwrap();
        let dim = spec.param_dim();
        let data: Vec<f64> = (0..dim).map(|i| (i as f64) * 0.1 - 0.7).collect();
        Checkpoint {
            schema_name: "CycleGAN".into(),
            arch: ArchSpec {
                object_dims: [("A".to_string(), 2), ("B".to_string(), 2)].into(),
                generators: [("f".to_string(), spec)].into(),
            },
            params: ParameterAssignment::new([("f".to_string(), Tensor::vector(data))].into()),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let cp = sample();
        let text = cp.to_text().unwrap();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back.schema_name, cp.schema_name);
        assert_eq!(back.arch, cp.arch);
        assert_eq!(
            back.params.get("f").unwrap().data(),
            cp.params.get("f").unwrap().data()
        );
        // and the text itself is stable
        assert_eq!(back.to_text().unwrap(), text);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(Checkpoint::from_text("nope").is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let text = sample().to_text().unwrap();
        let broken = text.replace("params f 17", "params f 16");
        assert!(Checkpoint::from_text(&broken).is_err());
    }
}
