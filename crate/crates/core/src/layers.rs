//! Declarative network specifications, parameter initialization and the
//! forward pass.
//!
//! A [`NetworkSpec`] lists layers from input to output; the last layer is
//! a plain affine map whose width equals the class count, so the output
//! `o` can reach every orthant of the head's space. Parameters are stored
//! flat, in layer order: `[W₁, b₁, W₂, b₂, …]` for deterministic networks
//! and `[μ(W₁), ρ(W₁), μ(b₁), ρ(b₁), …]` for Bayesian ones.

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::heads::{Head, RplConfig};
use crate::rng::{self, Rng, Stream};
use crate::tensor::{Real, Tensor};

/// Initial posterior standard deviation of Bayesian networks.
pub const INITIAL_SIGMA: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        #[serde(default)]
        activation: Activation,
    },
    /// Stride-1 unpadded square convolution; input channels follow from the shape.
    Conv {
        #[serde(default = "default_kernel")]
        kernel: usize,
        out_channels: usize,
    },
    /// 2×2 max pooling followed by ReLU.
    MaxPoolRelu,
    Dropout {
        p: f64,
    },
    Flatten,
}

fn default_kernel() -> usize {
    5
}

impl LayerSpec {
    fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPoolRelu => "max_pool_relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    Deterministic,
    Bayesian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Per-example input shape, e.g. `[2]` or `[1, 28, 28]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub head: Head,
    #[serde(default)]
    pub regime: Regime,
}

/// Shape of one parametric tensor together with the fan-in used to initialise it.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamShape {
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub is_bias: bool,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, head: Head, regime: Regime) -> Result<Self> {
        let spec = Self { input_shape, layers, head, regime };
        spec.validate()?;
        Ok(spec)
    }

    /// Dense stack `widths[0] → widths[1] → … → classes`, ReLU on every hidden layer.
    pub fn dense(widths: &[usize], head: Head, regime: Regime) -> Result<Self> {
        let mut layers = Vec::new();
        let mut inputs = widths[0];
        for &w in &widths[1..] {
            layers.push(LayerSpec::Dense { inputs, outputs: w, activation: Activation::Relu });
            inputs = w;
        }
        layers.push(LayerSpec::Dense { inputs, outputs: head.classes(), activation: Activation::None });
        Self::new(vec![widths[0]], layers, head, regime)
    }

    /// Spiral softmax network: FC-50, FC-50, FC-2 (ReLU), FC-3.
    pub fn spiral_softmax() -> Self {
        Self::dense(&[2, 50, 50, 2], Head::Softmax { classes: 3 }, Regime::Deterministic)
            .expect("valid preset")
    }

    /// Spiral RPL network: three FC-50 (ReLU), FC-3.
    pub fn spiral_rpl(rpl: RplConfig, regime: Regime) -> Self {
        Self::dense(&[2, 50, 50, 50], Head::Rpl(rpl), regime).expect("valid preset")
    }

    /// MNIST CNN: Conv5-10, MaxPool+ReLU, Conv5-20, MaxPool+ReLU, FC-100, FC-100, FC-10.
    /// With `dropout`, p is applied after the second convolution and after the first FC-100.
    pub fn mnist(head: Head, dropout: Option<f64>) -> Self {
        let mut layers = vec![
            LayerSpec::Conv { kernel: 5, out_channels: 10 },
            LayerSpec::MaxPoolRelu,
            LayerSpec::Conv { kernel: 5, out_channels: 20 },
        ];
        if let Some(p) = dropout {
            layers.push(LayerSpec::Dropout { p });
        }
        layers.extend([
            LayerSpec::MaxPoolRelu,
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 320, outputs: 100, activation: Activation::Relu },
        ]);
        if let Some(p) = dropout {
            layers.push(LayerSpec::Dropout { p });
        }
        layers.extend([
            LayerSpec::Dense { inputs: 100, outputs: 100, activation: Activation::Relu },
            LayerSpec::Dense { inputs: 100, outputs: 10, activation: Activation::None },
        ]);
        Self::new(vec![1, 28, 28], layers, head, Regime::Deterministic).expect("valid preset")
    }

    /// Checks shape compatibility layer by layer and returns the parametric
    /// tensor shapes in storage order (weights then bias, per layer).
    pub fn validate(&self) -> Result<Vec<ParamShape>> {
        self.head.validate()?;
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidArgument(format!("input_shape {:?} is not a valid shape", self.input_shape)));
        }
        let mut shape = self.input_shape.clone();
        let mut params = Vec::new();
        for (index, layer) in self.layers.iter().enumerate() {
            let fail = |reason: String| Error::InvalidLayer { index, layer: layer.name().into(), reason };
            shape = match *layer {
                LayerSpec::Dense { inputs, outputs, .. } => {
                    if shape != [inputs] {
                        return Err(fail(format!("expects input width {inputs}, got shape {shape:?}")));
                    }
                    if outputs == 0 {
                        return Err(fail("zero output width".into()));
                    }
                    params.push(ParamShape { shape: vec![inputs, outputs], fan_in: inputs, is_bias: false });
                    params.push(ParamShape { shape: vec![outputs], fan_in: inputs, is_bias: true });
                    vec![outputs]
                }
                LayerSpec::Conv { kernel, out_channels } => {
                    let [c, h, w] = shape[..] else {
                        return Err(fail(format!("expects a (channels, height, width) input, got {shape:?}")));
                    };
                    if kernel == 0 || kernel >= h || kernel >= w || out_channels == 0 {
                        return Err(fail(format!("kernel {kernel} does not fit input {shape:?}")));
                    }
                    let fan_in = c * kernel * kernel;
                    params.push(ParamShape { shape: vec![out_channels, c, kernel, kernel], fan_in, is_bias: false });
                    params.push(ParamShape { shape: vec![out_channels], fan_in, is_bias: true });
                    vec![out_channels, h - kernel + 1, w - kernel + 1]
                }
                LayerSpec::MaxPoolRelu => {
                    let [c, h, w] = shape[..] else {
                        return Err(fail(format!("expects a (channels, height, width) input, got {shape:?}")));
                    };
                    if h < 2 || w < 2 {
                        return Err(fail(format!("input {shape:?} too small to pool")));
                    }
                    vec![c, h / 2, w / 2]
                }
                LayerSpec::Dropout { p } => {
                    if !(0.0..1.0).contains(&p) {
                        return Err(fail(format!("dropout probability {p} outside [0, 1)")));
                    }
                    shape
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
            };
        }
        let k = self.head.classes();
        match self.layers.last() {
            Some(LayerSpec::Dense { outputs, activation: Activation::None, .. }) if *outputs == k => Ok(params),
            _ => Err(Error::InvalidLayer {
                index: self.layers.len().saturating_sub(1),
                layer: self.layers.last().map_or("none", LayerSpec::name).into(),
                reason: format!("the final layer must be a dense layer with {k} outputs and no activation"),
            }),
        }
    }

    pub fn param_shapes(&self) -> Vec<ParamShape> {
        self.validate().expect("spec validated at construction")
    }

    /// Number of model weights and biases (not counting variational doubling).
    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }

    /// Shapes of the stored buffers: one per weight tensor, or a `(μ, ρ)` pair when Bayesian.
    pub fn buffer_shapes(&self) -> Vec<Vec<usize>> {
        let copies = match self.regime {
            Regime::Deterministic => 1,
            Regime::Bayesian => 2,
        };
        self.param_shapes()
            .into_iter()
            .flat_map(|p| std::iter::repeat(p.shape).take(copies))
            .collect()
    }
}

/// A network spec with instantiated parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    buffers: Vec<Tensor<f32>>,
}

fn he_uniform(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor<f32> {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    let dist = Uniform::new_inclusive(-bound, bound);
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

/// `softplus⁻¹(σ) = ln(eˢ − 1)`.
pub fn inverse_softplus(sigma: f64) -> f64 {
    sigma.exp_m1().ln()
}

impl Network {
    /// Instantiates `spec` reproducibly from `seed`: He-uniform weights and
    /// zero biases; Bayesian networks use those as means and start every
    /// σ at [`INITIAL_SIGMA`].
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.validate()?;
        let mut rng = rng::stream(seed, Stream::Init);
        let rho0 = inverse_softplus(INITIAL_SIGMA) as f32;
        let mut buffers = Vec::new();
        for p in shapes {
            let mean = if p.is_bias { Tensor::zeros(&p.shape) } else { he_uniform(&mut rng, &p.shape, p.fan_in) };
            buffers.push(mean);
            if spec.regime == Regime::Bayesian {
                buffers.push(Tensor::full(&p.shape, rho0));
            }
        }
        Ok(Self { spec, buffers })
    }

    pub fn from_buffers(spec: NetworkSpec, buffers: Vec<Tensor<f32>>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.buffer_shapes();
        if expected.len() != buffers.len() {
            return Err(Error::Checkpoint(format!(
                "spec needs {} parameter buffers, found {}",
                expected.len(),
                buffers.len()
            )));
        }
        for (i, (shape, buf)) in expected.iter().zip(&buffers).enumerate() {
            if shape.as_slice() != buf.shape() {
                return Err(Error::Checkpoint(format!("buffer {i}: expected shape {shape:?}, found {:?}", buf.shape())));
            }
        }
        Ok(Self { spec, buffers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn head(&self) -> &Head {
        &self.spec.head
    }

    pub fn regime(&self) -> Regime {
        self.spec.regime
    }

    pub fn buffers(&self) -> &[Tensor<f32>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Replaces the head, e.g. to evaluate a trained RPL network at another β.
    /// The class count must not change.
    pub fn with_head(mut self, head: Head) -> Result<Self> {
        if head.classes() != self.spec.head.classes() {
            return Err(Error::InvalidArgument(format!(
                "head has {} classes, network has {}",
                head.classes(),
                self.spec.head.classes()
            )));
        }
        head.validate()?;
        self.spec.head = head;
        Ok(self)
    }

    /// Eval-mode outputs `o` of a deterministic network, `(batch × K)`.
    pub fn outputs(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.require_deterministic("outputs")?;
        let tape = Tape::new();
        let weights: Vec<_> = self.buffers.iter().map(|b| tape.constant(b.clone())).collect();
        let x = tape.constant(batch.clone());
        let o = forward(&self.spec, &weights, x, None)?;
        let out = (*o.value()).clone();
        Ok(out)
    }

    /// Eval-mode outputs in chunks of `chunk` rows.
    pub fn outputs_chunked(&self, inputs: &Tensor<f32>, chunk: usize) -> Result<Tensor<f32>> {
        let n = inputs.shape()[0];
        let mut data = Vec::with_capacity(n * self.spec.head.classes());
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let idx: Vec<usize> = (start..end).collect();
            data.extend_from_slice(self.outputs(&inputs.select_rows(&idx))?.data());
            start = end;
        }
        Tensor::new(vec![n, self.spec.head.classes()], data)
    }

    pub(crate) fn require_deterministic(&self, what: &str) -> Result<()> {
        match self.spec.regime {
            Regime::Deterministic => Ok(()),
            Regime::Bayesian => Err(Error::RegimeMismatch(format!(
                "{what} needs a deterministic network; this one is Bayesian (use Monte-Carlo prediction)"
            ))),
        }
    }
}

/// Runs `spec` on `x: (batch, input_shape…)` with concrete weight tensors
/// `[W₁, b₁, …]`. Dropout is active only when `dropout_rng` is given
/// (training mode); it uses inverted scaling, so evaluation needs no rescale.
pub fn forward<'t, T: Real>(
    spec: &NetworkSpec,
    weights: &[Var<'t, T>],
    x: Var<'t, T>,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<Var<'t, T>> {
    let xs = x.shape();
    if xs.len() != spec.input_shape.len() + 1 || xs[1..] != spec.input_shape[..] {
        return Err(Error::shape("forward", &xs, &spec.input_shape));
    }
    let tape: &'t Tape<T> = x.tape;
    let mut params = weights.iter().copied();
    let mut next = |what: &str| {
        params
            .next()
            .ok_or_else(|| Error::InvalidArgument(format!("missing {what} parameter")))
    };
    let mut h = x;
    for layer in &spec.layers {
        h = match *layer {
            LayerSpec::Dense { activation, .. } => {
                let (w, b) = (next("dense weight")?, next("dense bias")?);
                let z = h.affine(w, b)?;
                match activation {
                    Activation::Relu => z.relu(),
                    Activation::None => z,
                }
            }
            LayerSpec::Conv { .. } => {
                let (k, b) = (next("conv kernel")?, next("conv bias")?);
                h.conv2d(k)?.add_channel_bias(b)?
            }
            LayerSpec::MaxPoolRelu => h.maxpool2d()?.relu(),
            LayerSpec::Dropout { p } => match dropout_rng.as_deref_mut() {
                Some(rng) if p > 0.0 => {
                    let keep = T::lit(1.0 / (1.0 - p));
                    let shape = h.shape();
                    let n: usize = shape.iter().product();
                    let mask = (0..n)
                        .map(|_| if rng.gen::<f64>() >= p { keep } else { T::zero() })
                        .collect();
                    h.mul(tape.constant(Tensor::from_parts(shape, mask)))?
                }
                _ => h,
            },
            LayerSpec::Flatten => h.flatten()?,
        };
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::autodiff::softplus;

    fn rpl3() -> RplConfig {
        RplConfig::new(3, 1.0, 1.0).unwrap()
    }

    #[test]
    fn spiral_parameter_counts() {
        let rpl = NetworkSpec::spiral_rpl(rpl3(), Regime::Deterministic);
        // 2·50 + 50·50 + 50·50 + 50·3 weights plus 50 + 50 + 50 + 3 biases
        assert_eq!(2 * 50 + 50 * 50 + 50 * 50 + 50 * 3 + 50 + 50 + 50 + 3, 5403);
        assert_eq!(rpl.param_count(), 5403);
        let net = Network::build(rpl, 0).unwrap();
        assert_eq!(net.buffers().iter().map(Tensor::len).sum::<usize>(), 5403);

        let sm = NetworkSpec::spiral_softmax();
        assert_eq!(sm.param_count(), 2 * 50 + 50 + 50 * 50 + 50 + 50 * 2 + 2 + 2 * 3 + 3);
        let widths: Vec<usize> = sm
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Dense { outputs, .. } => *outputs,
                _ => 0,
            })
            .collect();
        assert_eq!(widths, vec![50, 50, 2, 3]);
    }

    #[test]
    fn bayesian_networks_store_mu_rho_pairs() {
        let spec = NetworkSpec::spiral_rpl(rpl3(), Regime::Bayesian);
        let net = Network::build(spec, 3).unwrap();
        assert_eq!(net.buffers().len(), 16);
        assert_eq!(net.param_count(), 5403);
        let rho = &net.buffers()[1];
        for &r in rho.data() {
            assert!((softplus(r) - 0.05).abs() < 1e-6);
        }
        assert!(net.buffers()[2].data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn mnist_forward_yields_ten_outputs() {
        for head in [Head::Softmax { classes: 10 }, Head::Rpl(RplConfig::new(10, 1.0, 5.0).unwrap())] {
            for dropout in [None, Some(0.5)] {
                let net = Network::build(NetworkSpec::mnist(head.clone(), dropout), 1).unwrap();
                let x = Tensor::full(&[2, 1, 28, 28], 0.5f32);
                let o = net.outputs(&x).unwrap();
                assert_eq!(o.shape(), &[2, 10]);
            }
        }
    }

    #[test]
    fn build_is_reproducible_from_seed() {
        let spec = NetworkSpec::spiral_rpl(rpl3(), Regime::Deterministic);
        let a = Network::build(spec.clone(), 11).unwrap();
        let b = Network::build(spec.clone(), 11).unwrap();
        let c = Network::build(spec, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn he_uniform_bounds() {
        let spec = NetworkSpec::spiral_rpl(rpl3(), Regime::Deterministic);
        let net = Network::build(spec, 5).unwrap();
        let bound = (6.0f32 / 50.0).sqrt();
        let w2 = &net.buffers()[2];
        assert!(w2.data().iter().all(|v| v.abs() <= bound));
        assert!(w2.data().iter().any(|v| v.abs() > 0.8 * bound));
    }

    #[test]
    fn invalid_specs_name_first_offending_layer() {
        let err = NetworkSpec::new(
            vec![2],
            vec![
                LayerSpec::Dense { inputs: 2, outputs: 5, activation: Activation::Relu },
                LayerSpec::Dense { inputs: 6, outputs: 3, activation: Activation::None },
            ],
            Head::Softmax { classes: 3 },
            Regime::Deterministic,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidLayer { index: 1, .. }), "{err}");

        let err = NetworkSpec::new(
            vec![1, 4, 4],
            vec![LayerSpec::Conv { kernel: 5, out_channels: 2 }],
            Head::Softmax { classes: 2 },
            Regime::Deterministic,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidLayer { index: 0, .. }), "{err}");

        // final layer must be linear with K outputs
        let err = NetworkSpec::new(
            vec![2],
            vec![LayerSpec::Dense { inputs: 2, outputs: 3, activation: Activation::Relu }],
            Head::Softmax { classes: 3 },
            Regime::Deterministic,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidLayer { .. }), "{err}");
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = NetworkSpec::spiral_rpl(rpl3(), Regime::Deterministic);
        let shapes = spec.buffer_shapes();
        let net = Network::from_buffers(spec, shapes.iter().map(|s| Tensor::zeros(s)).collect()).unwrap();
        let mut rng = Rng::seed_from_u64(0);
        let x = Tensor::new(vec![4, 2], (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let o = net.outputs(&x).unwrap();
        assert_eq!(o.shape(), &[4, 3]);
        assert!(o.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn final_layer_reaches_negative_outputs() {
        let spec = NetworkSpec::spiral_rpl(rpl3(), Regime::Deterministic);
        let net = Network::build(spec, 2).unwrap();
        let mut rng = Rng::seed_from_u64(1);
        let x = Tensor::new(vec![64, 2], (0..128).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap();
        let o = net.outputs(&x).unwrap();
        assert!(o.data().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn forward_is_permutation_equivariant() {
        let net = Network::build(NetworkSpec::spiral_softmax(), 4).unwrap();
        let mut rng = Rng::seed_from_u64(9);
        let x = Tensor::new(vec![5, 2], (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let o = net.outputs(&x).unwrap();
        let op = net.outputs(&x.select_rows(&perm)).unwrap();
        assert_eq!(op, o.select_rows(&perm));
    }

    #[test]
    fn dropout_is_identity_in_eval_and_inverted_in_training() {
        let spec = NetworkSpec::mnist(Head::Softmax { classes: 10 }, Some(0.5));
        let net = Network::build(spec.clone(), 0).unwrap();
        let x = Tensor::full(&[3, 1, 28, 28], 0.3f32);
        let a = net.outputs(&x).unwrap();
        let b = net.outputs(&x).unwrap();
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());

        // A dropout layer alone: surviving entries scale by 1/(1−p), mean preserved.
        let drop = NetworkSpec {
            input_shape: vec![4],
            layers: vec![
                LayerSpec::Dropout { p: 0.5 },
                LayerSpec::Dense { inputs: 4, outputs: 2, activation: Activation::None },
            ],
            head: Head::Softmax { classes: 2 },
            regime: Regime::Deterministic,
        };
        let tape = Tape::<f32>::new();
        let ones = tape.constant(Tensor::full(&[20_000, 4], 1.0));
        let w = tape.constant(Tensor::new(vec![4, 2], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
        let bias = tape.constant(Tensor::zeros(&[2]));
        let mut rng = rng::stream(0, Stream::Dropout);
        let o = forward(&drop, &[w, bias], ones, Some(&mut rng)).unwrap();
        let first: Vec<f32> = o.value().data().chunks(2).map(|r| r[0]).collect();
        assert!(first.iter().all(|&v| v == 0.0 || v == 2.0));
        let mean = first.iter().sum::<f32>() / first.len() as f32;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let net = Network::build(NetworkSpec::spiral_softmax(), 0).unwrap();
        assert!(matches!(net.outputs(&Tensor::zeros(&[2, 3])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn bayesian_network_refuses_plain_outputs() {
        let net = Network::build(NetworkSpec::spiral_rpl(rpl3(), Regime::Bayesian), 0).unwrap();
        assert!(matches!(net.outputs(&Tensor::zeros(&[1, 2])), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = NetworkSpec::mnist(Head::Rpl(RplConfig::new(10, 1.0, 5.0).unwrap()), Some(0.5));
        let json = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        assert!(serde_json::from_str::<NetworkSpec>(&json.replace("\"regime\"", "\"regime\":\"bayesian\",\"bogus\"")).is_err());
    }
}
