//! Three conv blocks (conv → instance standardization → ReLU) and a 1×1
//! classifier head whose logits are bilinearly upsampled to the input size.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward, conv_forward, upsample_bilinear, upsample_bilinear_backward, ConvShape,
};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::linalg::{standardize_backward, standardize_with_cache, FeatureMap, Standardized};
use crate::sensitivity::FeatureExtractor;

pub const NUM_BLOCKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Output channels of the three blocks.
    pub widths: [usize; NUM_BLOCKS],
    pub strides: [usize; NUM_BLOCKS],
    pub num_classes: usize,
    /// Extra 1×1 classifier off block 2, trained with the auxiliary weight.
    pub aux_head: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            widths: [16, 32, 32],
            strides: [2, 2, 1],
            num_classes: 5,
            aux_head: false,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) {
            return Err(Error::Config("block widths must be positive".into()));
        }
        if self.strides.iter().any(|&s| s == 0 || s > 2) {
            return Err(Error::Config("block strides must be 1 or 2".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        Ok(())
    }

    fn block_shape(&self, block: usize) -> ConvShape {
        ConvShape {
            in_channels: if block == 0 {
                3
            } else {
                self.widths[block - 1]
            },
            out_channels: self.widths[block],
            kernel: 3,
            stride: self.strides[block],
            pad: 1,
        }
    }

    fn head_shape(&self, in_channels: usize) -> ConvShape {
        ConvShape {
            in_channels,
            out_channels: self.num_classes,
            kernel: 1,
            stride: 1,
            pad: 0,
        }
    }
}

/// Name, shape and location of one parameter tensor in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Network parameters in one flat buffer, addressed through [`ParamSpec`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetConfig,
    specs: Vec<ParamSpec>,
    params: Vec<f64>,
}

const HEAD: usize = 2 * NUM_BLOCKS;
const AUX: usize = HEAD + 2;

fn layout(config: &NetConfig) -> Vec<ParamSpec> {
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    for b in 0..NUM_BLOCKS {
        let s = config.block_shape(b);
        shapes.push((
            format!("block{}.weight", b + 1),
            vec![s.out_channels, s.in_channels, 3, 3],
        ));
        shapes.push((format!("block{}.bias", b + 1), vec![s.out_channels]));
    }
    let last = config.widths[NUM_BLOCKS - 1];
    shapes.push(("head.weight".into(), vec![config.num_classes, last, 1, 1]));
    shapes.push(("head.bias".into(), vec![config.num_classes]));
    if config.aux_head {
        shapes.push((
            "aux.weight".into(),
            vec![config.num_classes, config.widths[1], 1, 1],
        ));
        shapes.push(("aux.bias".into(), vec![config.num_classes]));
    }
    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(name, shape)| {
            let len = shape.iter().product();
            let spec = ParamSpec {
                name,
                shape,
                offset,
                len,
            };
            offset += len;
            spec
        })
        .collect()
}

struct BlockCache {
    in_hw: (usize, usize),
    col: Vec<f64>,
    norm: Standardized,
    activation: Vec<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardPass {
    input_hw: (usize, usize),
    blocks: Vec<BlockCache>,
    low_hw: (usize, usize),
    aux_hw: (usize, usize),
    pub logits: FeatureMap,
    pub aux_logits: Option<FeatureMap>,
}

impl ForwardPass {
    /// Post-standardization (pre-ReLU) output of block `b`.
    pub fn standardized(&self, b: usize) -> &FeatureMap {
        &self.blocks[b].norm.output
    }

    pub fn standardized_maps(&self) -> Vec<FeatureMap> {
        self.blocks.iter().map(|b| b.norm.output.clone()).collect()
    }
}

impl Network {
    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        let total = specs.iter().map(|s| s.len).sum();
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in specs.iter().filter(|s| s.name.ends_with(".weight")) {
            let fan_in: usize = spec.shape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[spec.offset..spec.offset + spec.len] {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                *p = bound * (2.0 * u - 1.0);
            }
        }
        Ok(Self {
            config,
            specs,
            params,
        })
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        let total: usize = specs.iter().map(|s| s.len).sum();
        if params.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "network needs {total} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self {
            config,
            specs,
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn slice(&self, idx: usize) -> &[f64] {
        let s = &self.specs[idx];
        &self.params[s.offset..s.offset + s.len]
    }

    pub fn forward(&self, image: &FeatureMap) -> Result<ForwardPass> {
        if image.channels() != 3 {
            return Err(Error::InvalidInput(format!(
                "network expects a 3-channel image, got {}",
                image.channels()
            )));
        }
        let input_hw = (image.height(), image.width());
        let mut blocks = Vec::with_capacity(NUM_BLOCKS);
        let mut current = image.as_slice().to_vec();
        let mut hw = input_hw;
        let mut aux_in: Option<(Vec<f64>, (usize, usize))> = None;
        for b in 0..NUM_BLOCKS {
            let shape = self.config.block_shape(b);
            let (conv_out, col) = conv_forward(
                &shape,
                self.slice(2 * b),
                self.slice(2 * b + 1),
                &current,
                hw.0,
                hw.1,
            );
            let out_hw = shape.output_hw(hw.0, hw.1);
            let pre = FeatureMap::from_raw(shape.out_channels, out_hw.0, out_hw.1, conv_out);
            pre.check_finite(&format!("block{} convolution output", b + 1))?;
            let norm = standardize_with_cache(&pre);
            let activation: Vec<f64> = norm.output.as_slice().iter().map(|v| v.max(0.0)).collect();
            blocks.push(BlockCache {
                in_hw: hw,
                col,
                norm,
                activation: activation.clone(),
            });
            if b == 1 && self.config.aux_head {
                aux_in = Some((activation.clone(), out_hw));
            }
            current = activation;
            hw = out_hw;
        }
        let k = self.config.num_classes;
        let head = self.config.head_shape(self.config.widths[NUM_BLOCKS - 1]);
        let (low, _) = conv_forward(
            &head,
            self.slice(HEAD),
            self.slice(HEAD + 1),
            &current,
            hw.0,
            hw.1,
        );
        let logits = FeatureMap::from_raw(
            k,
            input_hw.0,
            input_hw.1,
            upsample_bilinear(&low, k, hw, input_hw),
        );
        logits.check_finite("classifier logits")?;
        let (aux_logits, aux_hw) = match aux_in {
            Some((a, ahw)) => {
                let shape = self.config.head_shape(self.config.widths[1]);
                let (low, _) = conv_forward(
                    &shape,
                    self.slice(AUX),
                    self.slice(AUX + 1),
                    &a,
                    ahw.0,
                    ahw.1,
                );
                let up = FeatureMap::from_raw(
                    k,
                    input_hw.0,
                    input_hw.1,
                    upsample_bilinear(&low, k, ahw, input_hw),
                );
                up.check_finite("auxiliary logits")?;
                (Some(up), ahw)
            }
            None => (None, (0, 0)),
        };
        Ok(ForwardPass {
            input_hw,
            blocks,
            low_hw: hw,
            aux_hw,
            logits,
            aux_logits,
        })
    }

    /// Accumulates parameter gradients into `grads`.
    ///
    /// `grad_standardized[b]`, when present, is an extra gradient with respect
    /// to block `b`'s standardized output (the whitening losses attach there).
    pub fn backward(
        &self,
        pass: &ForwardPass,
        grad_logits: &FeatureMap,
        grad_aux_logits: Option<&FeatureMap>,
        grad_standardized: &[Option<FeatureMap>],
        grads: &mut [f64],
    ) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        assert_eq!(grad_standardized.len(), NUM_BLOCKS);
        let k = self.config.num_classes;
        let last_c = self.config.widths[NUM_BLOCKS - 1];

        let dlow =
            upsample_bilinear_backward(grad_logits.as_slice(), k, pass.low_hw, pass.input_hw);
        let head = self.config.head_shape(last_c);
        let head_in = &pass.blocks[NUM_BLOCKS - 1].activation;
        let mut grad_act = {
            let (gw, gb) = split_grads(&self.specs, grads, HEAD);
            conv_backward(
                &head,
                self.slice(HEAD),
                head_in,
                &dlow,
                pass.low_hw.0,
                pass.low_hw.1,
                gw,
                gb,
                true,
            )
            .expect("input gradient requested")
        };

        for b in (0..NUM_BLOCKS).rev() {
            let cache = &pass.blocks[b];
            if b == 1 {
                if let (Some(gaux), true) = (grad_aux_logits, self.config.aux_head) {
                    let shape = self.config.head_shape(self.config.widths[1]);
                    let dlow_aux =
                        upsample_bilinear_backward(gaux.as_slice(), k, pass.aux_hw, pass.input_hw);
                    let (gw, gb) = split_grads(&self.specs, grads, AUX);
                    let extra = conv_backward(
                        &shape,
                        self.slice(AUX),
                        &cache.activation,
                        &dlow_aux,
                        pass.aux_hw.0,
                        pass.aux_hw.1,
                        gw,
                        gb,
                        true,
                    )
                    .expect("input gradient requested");
                    grad_act.iter_mut().zip(extra).for_each(|(a, e)| *a += e);
                }
            }
            let xs = &cache.norm.output;
            let mut grad_xs: Vec<f64> = grad_act
                .iter()
                .zip(xs.as_slice())
                .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                .collect();
            if let Some(extra) = &grad_standardized[b] {
                assert!(
                    extra.same_dims(xs),
                    "whitening gradient dims for block {}",
                    b + 1
                );
                grad_xs
                    .iter_mut()
                    .zip(extra.as_slice())
                    .for_each(|(g, e)| *g += e);
            }
            let (c, h, w) = xs.dims();
            let grad_pre =
                standardize_backward(&cache.norm, &FeatureMap::from_raw(c, h, w, grad_xs));
            let shape = self.config.block_shape(b);
            let (gw, gb) = split_grads(&self.specs, grads, 2 * b);
            let next = conv_backward(
                &shape,
                self.slice(2 * b),
                &cache.col,
                grad_pre.as_slice(),
                cache.in_hw.0,
                cache.in_hw.1,
                gw,
                gb,
                b > 0,
            );
            if let Some(g) = next {
                grad_act = g;
            }
        }
    }

    /// Per-pixel argmax class of the logits.
    pub fn predict(&self, image: &FeatureMap) -> Result<Vec<usize>> {
        let pass = self.forward(image)?;
        Ok(argmax_classes(&pass.logits))
    }
}

pub fn argmax_classes(logits: &FeatureMap) -> Vec<usize> {
    let n = logits.spatial();
    (0..n)
        .map(|p| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for c in 0..logits.channels() {
                let v = logits.channel(c)[p];
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Disjoint mutable views of a weight tensor's and its bias's gradients.
fn split_grads<'a>(
    specs: &[ParamSpec],
    grads: &'a mut [f64],
    weight_idx: usize,
) -> (&'a mut [f64], &'a mut [f64]) {
    let ws = &specs[weight_idx];
    let bs = &specs[weight_idx + 1];
    debug_assert_eq!(ws.offset + ws.len, bs.offset);
    let (head, tail) = grads[ws.offset..bs.offset + bs.len].split_at_mut(ws.len);
    (head, tail)
}

impl FeatureExtractor for Network {
    fn num_layers(&self) -> usize {
        NUM_BLOCKS
    }

    fn layer_features(&self, image: &RgbImage) -> Result<Vec<FeatureMap>> {
        Ok(self.forward(image.as_feature_map())?.standardized_maps())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_zero_logits() {
        let mut net = Network::new(NetConfig::default(), 1).unwrap();
        net.params_mut().fill(0.0);
        let img = FeatureMap::filled(3, 8, 8, 0.5);
        let pass = net.forward(&img).unwrap();
        assert!(pass.logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn logits_have_input_resolution() {
        let net = Network::new(NetConfig::default(), 2).unwrap();
        for (h, w) in [(8, 8), (13, 10), (64, 64)] {
            let img = FeatureMap::filled(3, h, w, 0.25);
            let pass = net.forward(&img).unwrap();
            assert_eq!(pass.logits.dims(), (5, h, w));
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let cfg = NetConfig {
            aux_head: true,
            ..NetConfig::default()
        };
        let net = Network::new(cfg, 0).unwrap();
        let mut expected = 0;
        for s in net.specs() {
            assert_eq!(s.offset, expected);
            expected += s.len;
        }
        assert_eq!(expected, net.num_params());
        assert_eq!(net.specs()[0].shape, vec![16, 3, 3, 3]);
        assert_eq!(net.specs().last().unwrap().name, "aux.bias");
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let net = Network::new(NetConfig::default(), 0).unwrap();
        assert!(net.forward(&FeatureMap::zeros(4, 8, 8)).is_err());
    }
}
