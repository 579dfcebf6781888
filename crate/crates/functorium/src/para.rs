//! Parameterized differentiable maps.
//!
//! A [`ParamFn`] is a map `(params, input) -> output` whose body records only
//! tape primitives, so it can be evaluated standalone or embedded in a larger
//! expression with gradients flowing to its parameter block. Composition
//! concatenates parameter blocks (left factor first) and partial application
//! freezes a parameter choice into a plain map.
//!
//! Inputs follow the row-batch convention: a `[in_dim]` vector is one sample,
//! an `[n, in_dim]` matrix is a batch applied row-wise.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

type ForwardFn = Arc<dyn Fn(&mut Tape, NodeId, NodeId) -> Result<NodeId> + Send + Sync>;

#[derive(Clone)]
pub struct ParamFn {
    param_dim: usize,
    in_dim: usize,
    out_dim: usize,
    forward: ForwardFn,
}

impl fmt::Debug for ParamFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamFn")
            .field("param_dim", &self.param_dim)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .finish()
    }
}

impl ParamFn {
    /// Wraps a forward body. The body receives the parameter vector node and
    /// an `[n, in_dim]` input node and must return an `[n, out_dim]` node.
    pub fn new(
        param_dim: usize,
        in_dim: usize,
        out_dim: usize,
        forward: impl Fn(&mut Tape, NodeId, NodeId) -> Result<NodeId> + Send + Sync + 'static,
    ) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "map dims must be positive");
        ParamFn {
            param_dim,
            in_dim,
            out_dim,
            forward: Arc::new(forward),
        }
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Records the forward computation on `tape`. Accepts a vector or a
    /// row-batch matrix input node and mirrors that shape on output.
    pub fn forward_on(&self, tape: &mut Tape, params: NodeId, input: NodeId) -> Result<NodeId> {
        if tape.value(params).numel() != self.param_dim {
            return Err(Error::Dimension(format!(
                "parameter block has {} values, map expects {}",
                tape.value(params).numel(),
                self.param_dim
            )));
        }
        let in_shape = tape.value(input).shape().to_vec();
        let (batch, was_vector) = match in_shape.as_slice() {
            [d] if *d == self.in_dim => (tape.reshape(input, &[1, self.in_dim])?, true),
            [_, d] if *d == self.in_dim => (input, false),
            other => {
                return Err(Error::Dimension(format!(
                    "input shape {:?} incompatible with in_dim {}",
                    other, self.in_dim
                )))
            }
        };
        let out = (self.forward)(tape, params, batch)?;
        let out_shape = tape.value(out).shape().to_vec();
        match out_shape.as_slice() {
            [n, d] if *d == self.out_dim && *n == tape.value(batch).shape()[0] => {}
            other => {
                return Err(Error::Dimension(format!(
                    "forward produced shape {:?}, expected [n, {}]",
                    other, self.out_dim
                )))
            }
        }
        if was_vector {
            tape.reshape(out, &[self.out_dim])
        } else {
            Ok(out)
        }
    }

    /// One-off evaluation on a fresh tape.
    pub fn apply(&self, params: &Tensor, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = tape.constant(params.clone());
        let x = tape.constant(input.clone());
        let y = self.forward_on(&mut tape, p, x)?;
        Ok(tape.value(y).clone())
    }
}

/// The identity map on `dim` coordinates; parameter-free.
pub fn identity_para(dim: usize) -> ParamFn {
    ParamFn::new(0, dim, dim, |_tape, _params, x| Ok(x))
}

/// Sequential composition `f` then `g`, with the parameter vector laid out as
/// f's block followed by g's block.
pub fn compose_para(f: &ParamFn, g: &ParamFn) -> Result<ParamFn> {
    if f.out_dim != g.in_dim {
        return Err(Error::Dimension(format!(
            "cannot compose: first map produces {}, second expects {}",
            f.out_dim, g.in_dim
        )));
    }
    let (f, g) = (f.clone(), g.clone());
    let (pf, pg) = (f.param_dim, g.param_dim);
    Ok(ParamFn::new(
        pf + pg,
        f.in_dim,
        g.out_dim,
        move |tape, params, x| {
            let p_f = tape.slice(params, 0, pf)?;
            let p_g = tape.slice(params, pf, pg)?;
            let mid = (f.forward)(tape, p_f, x)?;
            (g.forward)(tape, p_g, mid)
        },
    ))
}

/// The product map `f × g`: splits input columns, applies each factor, and
/// concatenates the outputs. Parameter layout is f's block then g's.
pub fn pair_para(f: &ParamFn, g: &ParamFn) -> ParamFn {
    let (f, g) = (f.clone(), g.clone());
    let (pf, pg) = (f.param_dim, g.param_dim);
    let (af, ag) = (f.in_dim, g.in_dim);
    ParamFn::new(
        pf + pg,
        af + ag,
        f.out_dim + g.out_dim,
        move |tape, params, x| {
            let p_f = tape.slice(params, 0, pf)?;
            let p_g = tape.slice(params, pf, pg)?;
            let xf = tape.slice_cols(x, 0, af)?;
            let xg = tape.slice_cols(x, af, ag)?;
            let yf = (f.forward)(tape, p_f, xf)?;
            let yg = (g.forward)(tape, p_g, xg)?;
            tape.concat_cols(&[yf, yg])
        },
    )
}

/// Hidden-layer activation choices.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn record(self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation `{other}` (tanh|relu|sigmoid)"
            ))),
        }
    }
}

/// Output-layer activation choices.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FinalActivation {
    None,
    Tanh,
    Sigmoid,
}

impl fmt::Display for FinalActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalActivation::None => "none",
            FinalActivation::Tanh => "tanh",
            FinalActivation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for FinalActivation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FinalActivation::None),
            "tanh" => Ok(FinalActivation::Tanh),
            "sigmoid" => Ok(FinalActivation::Sigmoid),
            other => Err(Error::InvalidArgument(format!(
                "unknown final activation `{other}` (none|tanh|sigmoid)"
            ))),
        }
    }
}

/// Layer widths and activations of a dense feed-forward map, optionally
/// with an input skip connection (`x + net(x)`). The skip form starts near
/// the identity under small-weight init, which keeps round-trip maps
/// invertible from the first step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MLPSpec {
    pub widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub final_activation: FinalActivation,
    pub residual: bool,
}

impl MLPSpec {
    pub fn new(
        widths: Vec<usize>,
        hidden_activation: Activation,
        final_activation: FinalActivation,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least input and output widths".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        Ok(MLPSpec {
            widths,
            hidden_activation,
            final_activation,
            residual: false,
        })
    }

    /// Adds the input skip connection; requires equal input/output widths
    /// and no squashing final activation.
    pub fn with_residual(mut self) -> Result<Self> {
        if self.in_dim() != self.out_dim() {
            return Err(Error::Dimension(format!(
                "skip connection needs in == out, got {} and {}",
                self.in_dim(),
                self.out_dim()
            )));
        }
        if self.final_activation != FinalActivation::None {
            return Err(Error::InvalidArgument(
                "skip connection requires final activation `none`".into(),
            ));
        }
        self.residual = true;
        Ok(self)
    }

    /// Per layer: `w_in·w_out` weights (row-major, input-major) then `w_out`
    /// biases, layers in order.
    pub fn param_dim(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn in_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

impl fmt::Display for MLPSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        write!(
            f,
            "{}{};{};{}",
            if self.residual { "res:" } else { "" },
            widths.join(","),
            self.hidden_activation,
            self.final_activation
        )
    }
}

impl FromStr for MLPSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (residual, body) = match s.strip_prefix("res:") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let mut parts = body.split(';');
        let widths_str = parts.next().unwrap_or("");
        let hidden = parts.next().unwrap_or("tanh");
        let fin = parts.next().unwrap_or("none");
        if parts.next().is_some() {
            return Err(Error::InvalidArgument(format!("malformed MLP spec `{s}`")));
        }
        let widths = widths_str
            .split(',')
            .map(|w| {
                w.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad layer width `{w}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = MLPSpec::new(widths, hidden.parse()?, fin.parse()?)?;
        if residual {
            spec.with_residual()
        } else {
            Ok(spec)
        }
    }
}

/// Builds a dense feed-forward [`ParamFn`] from a spec.
pub fn mlp(spec: &MLPSpec) -> ParamFn {
    let spec = spec.clone();
    let param_dim = spec.param_dim();
    let (in_dim, out_dim) = (spec.in_dim(), spec.out_dim());
    ParamFn::new(param_dim, in_dim, out_dim, move |tape, params, x| {
        let mut at = x;
        let mut offset = 0;
        let layers = spec.widths.len() - 1;
        for l in 0..layers {
            let (w_in, w_out) = (spec.widths[l], spec.widths[l + 1]);
            let w = tape.slice(params, offset, w_in * w_out)?;
            let w = tape.reshape(w, &[w_in, w_out])?;
            offset += w_in * w_out;
            let b = tape.slice(params, offset, w_out)?;
            offset += w_out;
            at = tape.affine(at, w, b)?;
            if l + 1 < layers {
                at = spec.hidden_activation.record(tape, at);
            } else {
                at = match spec.final_activation {
                    FinalActivation::None => at,
                    FinalActivation::Tanh => tape.tanh(at),
                    FinalActivation::Sigmoid => tape.sigmoid(at),
                };
            }
        }
        if spec.residual {
            at = tape.add(x, at)?;
        }
        Ok(at)
    })
}

/// A plain map obtained by freezing a parameter choice.
#[derive(Clone)]
pub struct PlainFn {
    inner: ParamFn,
    params: Tensor,
}

impl PlainFn {
    pub fn eval(&self, input: &Tensor) -> Result<Tensor> {
        self.inner.apply(&self.params, input)
    }

    pub fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.inner.out_dim()
    }
}

/// Freezes `params` into `f`, yielding a plain map.
pub fn apply_partial(f: &ParamFn, params: Tensor) -> Result<PlainFn> {
    if params.numel() != f.param_dim {
        return Err(Error::Dimension(format!(
            "parameter vector has {} values, map expects {}",
            params.numel(),
            f.param_dim
        )));
    }
    params.ensure_finite("parameters")?;
    Ok(PlainFn {
        inner: f.clone(),
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_passes_values_through() {
        let id = identity_para(2);
        let y = id
            .apply(&Tensor::vector(vec![]), &Tensor::vector(vec![1.5, -2.0]))
            .unwrap();
        assert_eq!(y.data(), &[1.5, -2.0]);
        assert_eq!(id.param_dim(), 0);
    }

    #[test]
    fn compose_sums_param_dims() {
        let f = mlp(&MLPSpec::new(vec![2, 1], Activation::Tanh, FinalActivation::None).unwrap());
        let g = mlp(&MLPSpec::new(vec![1, 1], Activation::Tanh, FinalActivation::None).unwrap());
        assert_eq!(f.param_dim(), 3);
        assert_eq!(g.param_dim(), 2);
        let fg = compose_para(&f, &g).unwrap();
        assert_eq!(fg.param_dim(), 5);
        assert_eq!((fg.in_dim(), fg.out_dim()), (2, 1));
    }

    #[test]
    fn compose_with_identity_is_pointwise_equal() {
        let f = mlp(&MLPSpec::new(vec![2, 3, 2], Activation::Tanh, FinalActivation::None).unwrap());
        let idf = compose_para(&identity_para(2), &f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Tensor::vector(rand_vec(&mut rng, f.param_dim()));
        let x = Tensor::vector(rand_vec(&mut rng, 2));
        assert_eq!(f.apply(&p, &x).unwrap(), idf.apply(&p, &x).unwrap());
    }

    #[test]
    fn compose_dim_mismatch_rejected() {
        let f = identity_para(2);
        let g = identity_para(3);
        assert!(compose_para(&f, &g).is_err());
    }

    #[test]
    fn mlp_2_4_1_has_17_params() {
        let spec = MLPSpec::new(vec![2, 4, 1], Activation::Tanh, FinalActivation::None).unwrap();
        assert_eq!(spec.param_dim(), 17);
    }

    #[test]
    fn zero_params_give_the_zero_map() {
        let spec = MLPSpec::new(vec![3, 3], Activation::Tanh, FinalActivation::None).unwrap();
        let f = mlp(&spec);
        let y = f
            .apply(
                &Tensor::zeros(&[spec.param_dim()]),
                &Tensor::vector(vec![0.3, -0.7, 1.1]),
            )
            .unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn scalar_affine_example() {
        // one layer, no activation: w=2, b=1 at x=3 -> 7
        let spec = MLPSpec::new(vec![1, 1], Activation::Tanh, FinalActivation::None).unwrap();
        let f = mlp(&spec);
        let y = f
            .apply(&Tensor::vector(vec![2.0, 1.0]), &Tensor::vector(vec![3.0]))
            .unwrap();
        assert_eq!(y.data(), &[7.0]);

        let frozen = apply_partial(&f, Tensor::vector(vec![2.0, 1.0])).unwrap();
        assert_eq!(
            frozen.eval(&Tensor::vector(vec![3.0])).unwrap().data(),
            &[7.0]
        );
    }

    #[test]
    fn batch_rows_match_per_sample_evaluation() {
        let spec = MLPSpec::new(vec![2, 3, 2], Activation::Sigmoid, FinalActivation::Tanh).unwrap();
        let f = mlp(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = Tensor::vector(rand_vec(&mut rng, f.param_dim()));
        let rows = [
            rand_vec(&mut rng, 2),
            rand_vec(&mut rng, 2),
            rand_vec(&mut rng, 2),
        ];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let batch = Tensor::matrix(3, 2, flat).unwrap();
        let out = f.apply(&p, &batch).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let single = f.apply(&p, &Tensor::vector(row.clone())).unwrap();
            assert_eq!(out.row(i), single.data());
        }
    }

    #[test]
    fn pair_para_splits_and_concats() {
        let f = identity_para(2);
        let spec = MLPSpec::new(vec![1, 1], Activation::Tanh, FinalActivation::None).unwrap();
        let g = mlp(&spec);
        let pair = pair_para(&f, &g);
        assert_eq!((pair.in_dim(), pair.out_dim(), pair.param_dim()), (3, 3, 2));
        let y = pair
            .apply(
                &Tensor::vector(vec![2.0, 1.0]),
                &Tensor::vector(vec![5.0, 6.0, 3.0]),
            )
            .unwrap();
        assert_eq!(y.data(), &[5.0, 6.0, 7.0]);
    }

    #[test]
    fn partial_application_is_functorial() {
        // apply_partial(compose(f, g), pf ++ pg) equals the pointwise
        // composite of the partial applications
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let mid = rng.gen_range(1..4);
            let a = rng.gen_range(1..4);
            let b = rng.gen_range(1..4);
            let f =
                mlp(&MLPSpec::new(vec![a, mid], Activation::Tanh, FinalActivation::None).unwrap());
            let g = mlp(
                &MLPSpec::new(vec![mid, b], Activation::Sigmoid, FinalActivation::None).unwrap(),
            );
            let fg = compose_para(&f, &g).unwrap();

            let pf = Tensor::vector(rand_vec(&mut rng, f.param_dim()));
            let pg = Tensor::vector(rand_vec(&mut rng, g.param_dim()));
            let mut joint = pf.data().to_vec();
            joint.extend_from_slice(pg.data());

            let composed = apply_partial(&fg, Tensor::vector(joint)).unwrap();
            let f_frozen = apply_partial(&f, pf).unwrap();
            let g_frozen = apply_partial(&g, pg).unwrap();

            let x = Tensor::vector(rand_vec(&mut rng, a));
            let lhs = composed.eval(&x).unwrap();
            let rhs = g_frozen.eval(&f_frozen.eval(&x).unwrap()).unwrap();
            for (l, r) in lhs.data().iter().zip(rhs.data()) {
                assert!((l - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn composition_is_associative_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let f =
                mlp(&MLPSpec::new(vec![2, 3], Activation::Tanh, FinalActivation::None).unwrap());
            let g =
                mlp(&MLPSpec::new(vec![3, 2], Activation::Relu, FinalActivation::None).unwrap());
            let h =
                mlp(&MLPSpec::new(vec![2, 2], Activation::Tanh, FinalActivation::Tanh).unwrap());
            let left = compose_para(&compose_para(&f, &g).unwrap(), &h).unwrap();
            let right = compose_para(&f, &compose_para(&g, &h).unwrap()).unwrap();
            assert_eq!(left.param_dim(), right.param_dim());

            let p = Tensor::vector(rand_vec(&mut rng, left.param_dim()));
            let x = Tensor::vector(rand_vec(&mut rng, 2));
            let yl = left.apply(&p, &x).unwrap();
            let yr = right.apply(&p, &x).unwrap();
            for (l, r) in yl.data().iter().zip(yr.data()) {
                assert!((l - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_partial_length_mismatch() {
        let f = identity_para(2);
        assert!(apply_partial(&f, Tensor::vector(vec![1.0])).is_err());
    }

    #[test]
    fn mlp_spec_round_trips_as_text() {
        let spec =
            MLPSpec::new(vec![2, 16, 16, 2], Activation::Tanh, FinalActivation::None).unwrap();
        let s = spec.to_string();
        assert_eq!(s.parse::<MLPSpec>().unwrap(), spec);
    }
}
