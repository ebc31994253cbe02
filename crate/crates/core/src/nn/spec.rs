use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a feed-forward network. Channel counts and feature sizes
/// flowing into a layer are inferred from the preceding shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1 square convolution with symmetric zero padding.
    Conv2d {
        out_channels: usize,
        kernel: usize,
        #[serde(default)]
        padding: usize,
    },
    /// Non-overlapping average pooling; trailing rows/columns are dropped.
    AvgPool2d { size: usize },
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
    BatchNorm,
    GroupNorm { groups: usize },
    Flatten,
    Dense { out_features: usize },
    /// Per-sample reshape (batch dimension untouched).
    Reshape { shape: Vec<usize> },
    /// Nearest-neighbour spatial upsampling.
    Upsample2d { factor: usize },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv",
            LayerSpec::AvgPool2d { .. } => "avgpool",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::BatchNorm => "bn",
            LayerSpec::GroupNorm { .. } => "gn",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Upsample2d { .. } => "upsample",
        }
    }
}

/// How a parameter tensor is initialised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamInit {
    /// Uniform on ±sqrt(6 / fan_in), i.e. variance 2 / fan_in.
    FanInUniform { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub init: ParamInit,
}

/// A layer with its shapes resolved and parameter slots assigned.
#[derive(Clone, Debug)]
pub struct ResolvedLayer {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    /// Indices into the network's parameter list.
    pub params: Vec<usize>,
}

/// A plain layer stack over a fixed per-sample input shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Network {
            input_shape,
            layers,
        }
    }

    /// Infer every layer's shapes and the parameter list.
    pub fn resolve(&self) -> Result<(Vec<ResolvedLayer>, Vec<ParamSlot>)> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Model(format!(
                "input shape {:?} must be non-empty and positive",
                self.input_shape
            )));
        }
        let mut shape = self.input_shape.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut params: Vec<ParamSlot> = Vec::new();
        for (idx, spec) in self.layers.iter().enumerate() {
            let bad = |msg: String| Error::Model(format!("layer {idx} ({}): {msg}", spec.kind()));
            let in_shape = shape.clone();
            let mut slots = Vec::new();
            let mut push = |suffix: &str, shape: Vec<usize>, trainable: bool, init: ParamInit| {
                slots.push(params.len());
                params.push(ParamSlot {
                    name: format!("l{idx}.{}.{suffix}", spec.kind()),
                    shape,
                    trainable,
                    init,
                });
            };
            let out_shape = match spec {
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    padding,
                } => {
                    let [c, h, w] = spatial(&in_shape).ok_or_else(|| {
                        bad(format!("expects [C, H, W] input, got {in_shape:?}"))
                    })?;
                    let (hp, wp) = (h + 2 * padding, w + 2 * padding);
                    if *kernel == 0 || *out_channels == 0 || *kernel > hp || *kernel > wp {
                        return Err(bad(format!(
                            "kernel {kernel} does not fit padded input {hp}x{wp}"
                        )));
                    }
                    let fan_in = c * kernel * kernel;
                    push(
                        "weight",
                        vec![*out_channels, c, *kernel, *kernel],
                        true,
                        ParamInit::FanInUniform { fan_in },
                    );
                    push("bias", vec![*out_channels], true, ParamInit::Zeros);
                    vec![*out_channels, hp - kernel + 1, wp - kernel + 1]
                }
                LayerSpec::AvgPool2d { size } => {
                    let [c, h, w] = spatial(&in_shape).ok_or_else(|| {
                        bad(format!("expects [C, H, W] input, got {in_shape:?}"))
                    })?;
                    if *size == 0 || h / size == 0 || w / size == 0 {
                        return Err(bad(format!("pool {size} too large for {h}x{w}")));
                    }
                    vec![c, h / size, w / size]
                }
                LayerSpec::Relu
                | LayerSpec::LeakyRelu { .. }
                | LayerSpec::Tanh
                | LayerSpec::Sigmoid => in_shape.clone(),
                LayerSpec::BatchNorm => {
                    let c = in_shape[0];
                    push("scale", vec![c], true, ParamInit::Ones);
                    push("shift", vec![c], true, ParamInit::Zeros);
                    push("running_mean", vec![c], false, ParamInit::Zeros);
                    push("running_var", vec![c], false, ParamInit::Ones);
                    in_shape.clone()
                }
                LayerSpec::GroupNorm { groups } => {
                    let c = in_shape[0];
                    if *groups == 0 || c % groups != 0 {
                        return Err(bad(format!(
                            "{groups} groups do not divide {c} channels"
                        )));
                    }
                    push("scale", vec![c], true, ParamInit::Ones);
                    push("shift", vec![c], true, ParamInit::Zeros);
                    in_shape.clone()
                }
                LayerSpec::Flatten => vec![in_shape.iter().product()],
                LayerSpec::Dense { out_features } => {
                    if in_shape.len() != 1 {
                        return Err(bad(format!(
                            "expects flat input, got {in_shape:?} (insert flatten)"
                        )));
                    }
                    if *out_features == 0 {
                        return Err(bad("zero output features".into()));
                    }
                    push(
                        "weight",
                        vec![*out_features, in_shape[0]],
                        true,
                        ParamInit::FanInUniform {
                            fan_in: in_shape[0],
                        },
                    );
                    push("bias", vec![*out_features], true, ParamInit::Zeros);
                    vec![*out_features]
                }
                LayerSpec::Reshape { shape: target } => {
                    let a: usize = in_shape.iter().product();
                    let b: usize = target.iter().product();
                    if a != b || target.is_empty() {
                        return Err(bad(format!("cannot reshape {in_shape:?} to {target:?}")));
                    }
                    target.clone()
                }
                LayerSpec::Upsample2d { factor } => {
                    let [c, h, w] = spatial(&in_shape).ok_or_else(|| {
                        bad(format!("expects [C, H, W] input, got {in_shape:?}"))
                    })?;
                    if *factor == 0 {
                        return Err(bad("zero upsample factor".into()));
                    }
                    vec![c, h * factor, w * factor]
                }
            };
            shape = out_shape.clone();
            layers.push(ResolvedLayer {
                spec: spec.clone(),
                in_shape,
                out_shape,
                params: slots,
            });
        }
        Ok((layers, params))
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let (layers, _) = self.resolve()?;
        Ok(layers
            .last()
            .map(|l| l.out_shape.clone())
            .unwrap_or_else(|| self.input_shape.clone()))
    }

    pub fn parameter_count(&self) -> Result<usize> {
        let (_, params) = self.resolve()?;
        Ok(params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.shape.iter().product::<usize>())
            .sum())
    }
}

fn spatial(shape: &[usize]) -> Option<[usize; 3]> {
    match shape {
        [c, h, w] => Some([*c, *h, *w]),
        _ => None,
    }
}

/// Normalisation inserted after each LeNet-5 convolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    None,
    Batch,
    /// Group count per convolution, in order.
    Group(Vec<usize>),
}

impl NormKind {
    /// Groups used for the LeNet-5 channel widths (6, 16, 120).
    pub fn default_groups() -> NormKind {
        NormKind::Group(vec![2, 4, 30])
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NormKind::None => "none",
            NormKind::Batch => "batch",
            NormKind::Group(_) => "group",
        }
    }
}

/// LeNet-5 convolution widths.
pub const LENET_CHANNELS: [usize; 3] = [6, 16, 120];

/// A classifier: a network whose output is `K` (or `K + 1` with the
/// unknown head) logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub network: Network,
    pub num_known_classes: usize,
    pub has_unknown_head: bool,
}

impl ModelSpec {
    /// LeNet-5 over 3-channel images: three 5×5 convolutions (6, 16, 120
    /// channels) with average pooling after the first two, then dense
    /// 84 → outputs. ReLU activations, optional normalisation after each
    /// convolution.
    pub fn lenet5(
        height: usize,
        width: usize,
        num_known_classes: usize,
        norm: &NormKind,
        has_unknown_head: bool,
    ) -> Result<Self> {
        let groups = match norm {
            NormKind::Group(g) if g.len() != LENET_CHANNELS.len() => {
                return Err(Error::Model(format!(
                    "group norm needs {} group counts, got {}",
                    LENET_CHANNELS.len(),
                    g.len()
                )))
            }
            NormKind::Group(g) => Some(g.clone()),
            _ => None,
        };
        let mut layers = Vec::new();
        for (i, &ch) in LENET_CHANNELS.iter().enumerate() {
            layers.push(LayerSpec::Conv2d {
                out_channels: ch,
                kernel: 5,
                padding: 0,
            });
            match norm {
                NormKind::None => {}
                NormKind::Batch => layers.push(LayerSpec::BatchNorm),
                NormKind::Group(_) => layers.push(LayerSpec::GroupNorm {
                    groups: groups.as_ref().unwrap()[i],
                }),
            }
            layers.push(LayerSpec::Relu);
            if i < 2 {
                layers.push(LayerSpec::AvgPool2d { size: 2 });
            }
        }
        let outputs = num_known_classes + usize::from(has_unknown_head);
        layers.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: 84 },
            LayerSpec::Relu,
            LayerSpec::Dense {
                out_features: outputs,
            },
        ]);
        let spec = ModelSpec {
            network: Network::new(vec![3, height, width], layers),
            num_known_classes,
            has_unknown_head,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn output_dim(&self) -> usize {
        self.num_known_classes + usize::from(self.has_unknown_head)
    }

    /// Index of the unknown class, when present.
    pub fn unknown_class(&self) -> Option<usize> {
        self.has_unknown_head.then_some(self.num_known_classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_known_classes == 0 {
            return Err(Error::Model("no classes".into()));
        }
        let out = self.network.output_shape()?;
        if out != [self.output_dim()] {
            return Err(Error::Model(format!(
                "network emits {out:?}, expected [{}]",
                self.output_dim()
            )));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.network.input_shape
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet5_shape_chain_for_cifar() {
        let spec = ModelSpec::lenet5(32, 32, 10, &NormKind::None, false).unwrap();
        let (layers, _) = spec.network.resolve().unwrap();
        let shapes: Vec<Vec<usize>> = layers.iter().map(|l| l.out_shape.clone()).collect();
        // independently worked out: 32-5+1=28, /2=14, 14-5+1=10, /2=5, 5-5+1=1
        let expected: Vec<Vec<usize>> = vec![
            vec![6, 28, 28],
            vec![6, 28, 28],
            vec![6, 14, 14],
            vec![16, 10, 10],
            vec![16, 10, 10],
            vec![16, 5, 5],
            vec![120, 1, 1],
            vec![120, 1, 1],
            vec![120],
            vec![84],
            vec![84],
            vec![10],
        ];
        assert_eq!(shapes, expected);
    }

    #[test]
    fn unknown_head_adds_one_output() {
        let spec = ModelSpec::lenet5(32, 32, 10, &NormKind::Batch, true).unwrap();
        assert_eq!(spec.network.output_shape().unwrap(), vec![11]);
        assert_eq!(spec.unknown_class(), Some(10));
    }

    #[test]
    fn lenet5_parameter_count() {
        let spec = ModelSpec::lenet5(32, 32, 10, &NormKind::None, false).unwrap();
        // 456 + 2416 + 48120 + 10164 + 850
        assert_eq!(spec.network.parameter_count().unwrap(), 62006);
    }

    #[test]
    fn default_groups_accepted_and_bad_groups_rejected() {
        assert!(ModelSpec::lenet5(32, 32, 10, &NormKind::default_groups(), false).is_ok());
        let err = ModelSpec::lenet5(32, 32, 10, &NormKind::Group(vec![4, 4, 30]), false)
            .unwrap_err()
            .to_string();
        assert!(err.contains("layer 1 (gn)"), "{err}");
    }

    #[test]
    fn batch_norm_marks_running_stats_frozen() {
        let spec = ModelSpec::lenet5(32, 32, 10, &NormKind::Batch, false).unwrap();
        let (_, params) = spec.network.resolve().unwrap();
        for p in params {
            let frozen = p.name.ends_with("running_mean") || p.name.ends_with("running_var");
            assert_eq!(p.trainable, !frozen, "{}", p.name);
        }
    }

    #[test]
    fn too_small_input_is_rejected() {
        assert!(ModelSpec::lenet5(16, 16, 10, &NormKind::None, false).is_err());
    }
}
