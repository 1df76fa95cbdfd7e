//! Invertible coupling backbone.
//!
//! Each block updates the LF branch additively from the HF branch, then the
//! HF branch affinely from the updated LF branch:
//!
//! ```text
//! y1 = x1 + phi([x2, p])
//! y2 = x2 * exp(a * (2 * sigmoid(rho([y1, p])) - 1)) + eta([y1, p])
//! ```
//!
//! `phi`, `rho` and `eta` are dense atrous blocks. The encoding field `p` is
//! conditioning only and is never transformed.

use std::fmt;
use std::str::FromStr;

use iarn_tensor::{conv2d_multi, Array, ConvSpec, Real, Tensor};
use rand::Rng;

use crate::encoding::{ScaleEncodingField, ENCODING_CHANNELS};
use crate::error::{Error, Result};

/// Channels carried by each branch (one RGB image each).
pub const BRANCH_CHANNELS: usize = 3;

/// Which coupling transforms see the scale encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncodingMode {
    /// Alongside both branches.
    Dual,
    /// Alongside the LF branch only (inputs of `rho`, `eta`).
    LfOnly,
    /// Alongside the HF branch only (input of `phi`).
    HfOnly,
    None,
}

impl EncodingMode {
    pub const ALL: [EncodingMode; 4] = [Self::Dual, Self::LfOnly, Self::HfOnly, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dual => "dual",
            Self::LfOnly => "lf_only",
            Self::HfOnly => "hf_only",
            Self::None => "none",
        }
    }

    fn with_hf(self) -> bool {
        matches!(self, Self::Dual | Self::HfOnly)
    }

    fn with_lf(self) -> bool {
        matches!(self, Self::Dual | Self::LfOnly)
    }
}

impl fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncodingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(Self::Dual),
            "lf_only" | "lf" => Ok(Self::LfOnly),
            "hf_only" | "hf" => Ok(Self::HfOnly),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown encoding mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub num_blocks: usize,
    /// Dilated layers per dense block (`l`).
    pub atrous_layers: usize,
    pub feature_width: usize,
    /// Amplitude `a` of the centred-sigmoid scale clamp.
    pub clamp: f64,
    /// Dilations `1..=l` when set, all ones otherwise.
    pub use_atrous: bool,
    pub encoding_mode: EncodingMode,
    pub leaky_slope: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            num_blocks: 20,
            atrous_layers: 4,
            feature_width: 32,
            clamp: 1.0,
            use_atrous: true,
            encoding_mode: EncodingMode::Dual,
            leaky_slope: iarn_tensor::DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl BackboneConfig {
    pub fn dilations(&self) -> Vec<usize> {
        if self.use_atrous {
            (1..=self.atrous_layers).collect()
        } else {
            vec![1; self.atrous_layers]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 {
            return Err(Error::Config("num_blocks must be at least 1".into()));
        }
        if self.feature_width == 0 && self.atrous_layers > 0 {
            return Err(Error::Config("feature_width must be positive".into()));
        }
        if !(self.clamp.is_finite() && self.clamp > 0.0) {
            return Err(Error::Config(format!("clamp must be positive, got {}", self.clamp)));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Config(format!("leaky_slope must be non-negative, got {}", self.leaky_slope)));
        }
        Ok(())
    }

    fn transforms(&self) -> [DenseAtrousBlock; 3] {
        let enc = |on: bool| if on { ENCODING_CHANNELS } else { 0 };
        let make = |extra| DenseAtrousBlock::new(BRANCH_CHANNELS + extra, self.feature_width, &self.dilations());
        [
            make(enc(self.encoding_mode.with_hf())),
            make(enc(self.encoding_mode.with_lf())),
            make(enc(self.encoding_mode.with_lf())),
        ]
    }
}

/// Exact number of trainable scalars for `config`.
pub fn param_count(config: &BackboneConfig) -> usize {
    let per_block: usize = config.transforms().iter().map(DenseAtrousBlock::param_count).sum();
    per_block * config.num_blocks
}

/// Densely connected dilated 3x3 stack followed by a 3x3 projection.
#[derive(Debug, Clone)]
struct DenseAtrousBlock {
    layers: Vec<ConvSpec>,
    projection: ConvSpec,
}

impl DenseAtrousBlock {
    fn new(in_channels: usize, width: usize, dilations: &[usize]) -> Self {
        let layers = dilations
            .iter()
            .enumerate()
            .map(|(k, &d)| ConvSpec::new(in_channels + k * width, width, d).expect("positive geometry"))
            .collect();
        let projection = ConvSpec::new(in_channels + dilations.len() * width, BRANCH_CHANNELS, 1).expect("positive geometry");
        Self { layers, projection }
    }

    fn specs(&self) -> impl Iterator<Item = &ConvSpec> {
        self.layers.iter().chain(std::iter::once(&self.projection))
    }

    fn param_count(&self) -> usize {
        self.specs().map(ConvSpec::param_count).sum()
    }

    fn tensor_count(&self) -> usize {
        2 * (self.layers.len() + 1)
    }

    /// `params` holds weight/bias pairs for every layer, projection last.
    fn apply<T: Real>(&self, params: &[Tensor<T>], inputs: &[&Tensor<T>], slope: f64) -> Result<Tensor<T>> {
        let mut feats: Vec<Tensor<T>> = inputs.iter().map(|t| (*t).clone()).collect();
        for (k, spec) in self.layers.iter().enumerate() {
            let refs: Vec<&Tensor<T>> = feats.iter().collect();
            let out = conv2d_multi(&refs, spec, &params[2 * k], &params[2 * k + 1])?.leaky_relu(slope);
            feats.push(out);
        }
        let refs: Vec<&Tensor<T>> = feats.iter().collect();
        let k = self.layers.len();
        Ok(conv2d_multi(&refs, &self.projection, &params[2 * k], &params[2 * k + 1])?)
    }
}

const TRANSFORM_NAMES: [&str; 3] = ["phi", "rho", "eta"];

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Array<T>,
}

/// Parameters bound as graph leaves for one forward/backward round.
pub struct BoundParams<T: Real>(Vec<Tensor<T>>);

impl<T: Real> BoundParams<T> {
    /// Wraps tensors already laid out in parameter order.
    pub fn from_tensors(tensors: Vec<Tensor<T>>) -> Self {
        BoundParams(tensors)
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.0
    }

    /// Gradients in parameter order; zeros where nothing flowed.
    pub fn grads(&self) -> Vec<Array<T>> {
        self.0
            .iter()
            .map(|t| t.grad().map(|g| g.clone()).unwrap_or_else(|| Array::zeros(t.shape().to_vec())))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Backbone<T: Real> {
    config: BackboneConfig,
    transforms: [DenseAtrousBlock; 3],
    params: Vec<Param<T>>,
}

impl<T: Real> Backbone<T> {
    /// All parameters zero: the exact identity map.
    pub fn zeros(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let transforms = config.transforms();
        let mut params = Vec::new();
        for b in 0..config.num_blocks {
            for (name, block) in TRANSFORM_NAMES.iter().zip(&transforms) {
                for (k, spec) in block.specs().enumerate() {
                    let layer = if k < block.layers.len() {
                        format!("conv{k}")
                    } else {
                        "proj".to_string()
                    };
                    let prefix = format!("blocks.{b}.{name}.{layer}");
                    params.push(Param {
                        name: format!("{prefix}.weight"),
                        value: Array::zeros(spec.weight_shape().to_vec()),
                    });
                    params.push(Param {
                        name: format!("{prefix}.bias"),
                        value: Array::zeros([spec.out_channels]),
                    });
                }
            }
        }
        Ok(Self {
            config,
            transforms,
            params,
        })
    }

    /// Training initialisation: hidden weights uniform in `+-0.1 / sqrt(9 * fan_in)`,
    /// biases and every projection zero, so the network starts as the identity.
    pub fn init<R: Rng>(config: BackboneConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        net.fill(rng, 0.1, false);
        Ok(net)
    }

    /// Every weight and bias uniform in `+-gain / sqrt(9 * fan_in)`, projections included.
    pub fn random<R: Rng>(config: BackboneConfig, rng: &mut R, gain: f64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        net.fill(rng, gain, true);
        Ok(net)
    }

    fn fill<R: Rng>(&mut self, rng: &mut R, gain: f64, everything: bool) {
        let mut idx = 0;
        for _ in 0..self.config.num_blocks {
            for block in &self.transforms {
                let n_layers = block.layers.len();
                for (k, spec) in block.specs().enumerate() {
                    let bound = gain / ((spec.in_channels * 9) as f64).sqrt();
                    let hidden = k < n_layers;
                    if hidden || everything {
                        for v in self.params[idx].value.data_mut() {
                            *v = T::of(rng.gen_range(-bound..=bound));
                        }
                    }
                    if everything {
                        for v in self.params[idx + 1].value.data_mut() {
                            *v = T::of(rng.gen_range(-bound..=bound));
                        }
                    }
                    idx += 2;
                }
            }
        }
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn cast<U: Real>(&self) -> Backbone<U> {
        Backbone {
            config: self.config.clone(),
            transforms: self.transforms.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
        }
    }

    /// Replaces parameters by name; every parameter must be supplied with its exact shape.
    pub fn load_params(&mut self, named: Vec<(String, Array<T>)>) -> Result<()> {
        if named.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                self.params.len(),
                named.len()
            )));
        }
        for (param, (name, value)) in self.params.iter_mut().zip(named) {
            if param.name != name {
                return Err(Error::Checkpoint(format!("expected parameter {}, found {name}", param.name)));
            }
            if param.value.shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    param.value.shape(),
                    value.shape()
                )));
            }
            param.value = value;
        }
        Ok(())
    }

    pub fn bind(&self, track: bool) -> BoundParams<T> {
        BoundParams(
            self.params
                .iter()
                .map(|p| {
                    if track {
                        Tensor::parameter(p.value.clone())
                    } else {
                        Tensor::constant(p.value.clone())
                    }
                })
                .collect(),
        )
    }

    fn per_block(&self) -> usize {
        self.transforms.iter().map(DenseAtrousBlock::tensor_count).sum()
    }

    fn check_inputs(&self, a: &Tensor<T>, b: &Tensor<T>, p: &Tensor<T>) -> Result<()> {
        let [n, c, h, w] = a.value().dims4("backbone")?;
        if c != BRANCH_CHANNELS {
            return Err(Error::Shape(format!("branches carry {BRANCH_CHANNELS} channels, got {c}")));
        }
        if b.shape() != a.shape() {
            return Err(Error::Shape(format!("branch shapes {:?} and {:?} differ", a.shape(), b.shape())));
        }
        if p.shape() != [n, ENCODING_CHANNELS, h, w] {
            return Err(Error::Shape(format!(
                "encoding shape {:?} does not match branches {:?}",
                p.shape(),
                a.shape()
            )));
        }
        Ok(())
    }

    /// `(phi, rho, eta)` parameter slices of block `b`.
    fn block_params<'a>(&self, params: &'a [Tensor<T>], b: usize) -> [&'a [Tensor<T>]; 3] {
        let base = b * self.per_block();
        let n0 = self.transforms[0].tensor_count();
        let n1 = self.transforms[1].tensor_count();
        let n2 = self.transforms[2].tensor_count();
        [
            &params[base..base + n0],
            &params[base + n0..base + n0 + n1],
            &params[base + n0 + n1..base + n0 + n1 + n2],
        ]
    }

    fn conditioned<'a>(&self, x: &'a Tensor<T>, p: &'a Tensor<T>, on: bool) -> Vec<&'a Tensor<T>> {
        if on {
            vec![x, p]
        } else {
            vec![x]
        }
    }

    fn log_scale(&self, rho: &[Tensor<T>], y1: &Tensor<T>, p: &Tensor<T>) -> Result<Tensor<T>> {
        let a = self.config.clamp;
        let mode = self.config.encoding_mode;
        let r = self.transforms[1].apply(rho, &self.conditioned(y1, p, mode.with_lf()), self.config.leaky_slope)?;
        Ok(r.sigmoid().scale(2.0 * a).offset(-a))
    }

    /// `(lf, hf) -> (y_H, z_H)` on bound parameters; `p` is `[N, 4, H, W]`.
    pub fn forward_with(
        &self,
        params: &BoundParams<T>,
        lf: &Tensor<T>,
        hf: &Tensor<T>,
        p: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_inputs(lf, hf, p)?;
        let mode = self.config.encoding_mode;
        let slope = self.config.leaky_slope;
        let (mut x1, mut x2) = (lf.clone(), hf.clone());
        for b in 0..self.config.num_blocks {
            let [phi, rho, eta] = self.block_params(params.tensors(), b);
            let y1 = x1.add(&self.transforms[0].apply(phi, &self.conditioned(&x2, p, mode.with_hf()), slope)?)?;
            let s = self.log_scale(rho, &y1, p)?;
            let shift = self.transforms[2].apply(eta, &self.conditioned(&y1, p, mode.with_lf()), slope)?;
            let y2 = x2.mul(&s.exp())?.add(&shift)?;
            if !(y1.value().all_finite() && y2.value().all_finite()) {
                return Err(Error::NonFinite(format!("coupling block {b} (forward)")));
            }
            x1 = y1;
            x2 = y2;
        }
        Ok((x1, x2))
    }

    /// `(y_H, z) -> (lf, hf)`, blocks undone in reverse order.
    pub fn inverse_with(
        &self,
        params: &BoundParams<T>,
        y: &Tensor<T>,
        z: &Tensor<T>,
        p: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_inputs(y, z, p)?;
        let mode = self.config.encoding_mode;
        let slope = self.config.leaky_slope;
        let (mut y1, mut y2) = (y.clone(), z.clone());
        for b in (0..self.config.num_blocks).rev() {
            let [phi, rho, eta] = self.block_params(params.tensors(), b);
            let s = self.log_scale(rho, &y1, p)?;
            let shift = self.transforms[2].apply(eta, &self.conditioned(&y1, p, mode.with_lf()), slope)?;
            let x2 = y2.sub(&shift)?.mul(&s.neg().exp())?;
            let x1 = y1.sub(&self.transforms[0].apply(phi, &self.conditioned(&x2, p, mode.with_hf()), slope)?)?;
            if !(x1.value().all_finite() && x2.value().all_finite()) {
                return Err(Error::NonFinite(format!("coupling block {b} (inverse)")));
            }
            y1 = x1;
            y2 = x2;
        }
        Ok((y1, y2))
    }

    /// Untracked forward pass on `[N, 3, H, W]` arrays.
    pub fn forward(&self, lf: &Array<T>, hf: &Array<T>, field: &ScaleEncodingField) -> Result<(Array<T>, Array<T>)> {
        let n = lf.shape().first().copied().unwrap_or(0);
        let params = self.bind(false);
        let (y, z) = self.forward_with(
            &params,
            &Tensor::constant(lf.clone()),
            &Tensor::constant(hf.clone()),
            &field.to_tensor(n),
        )?;
        Ok((y.value().clone(), z.value().clone()))
    }

    /// Untracked inverse pass on `[N, 3, H, W]` arrays.
    pub fn inverse(&self, y: &Array<T>, z: &Array<T>, field: &ScaleEncodingField) -> Result<(Array<T>, Array<T>)> {
        let n = y.shape().first().copied().unwrap_or(0);
        let params = self.bind(false);
        let (lf, hf) = self.inverse_with(
            &params,
            &Tensor::constant(y.clone()),
            &Tensor::constant(z.clone()),
            &field.to_tensor(n),
        )?;
        Ok((lf.value().clone(), hf.value().clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::encode;
    use crate::resample::ScalePair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(blocks: usize) -> BackboneConfig {
        BackboneConfig {
            num_blocks: blocks,
            atrous_layers: 2,
            feature_width: 4,
            ..BackboneConfig::default()
        }
    }

    fn noise(rng: &mut ChaCha8Rng, shape: &[usize]) -> Array<f32> {
        Array::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn dense_layer_count_arithmetic() {
        let block = DenseAtrousBlock::new(7, 16, &[1]);
        assert_eq!(block.layers[0].param_count(), 1024);
        assert_eq!(block.projection.param_count(), 3 * 23 * 9 + 3);
    }

    #[test]
    fn param_count_scales_with_blocks() {
        let zero = BackboneConfig {
            num_blocks: 0,
            ..BackboneConfig::default()
        };
        assert_eq!(param_count(&zero), 0);
        let one = tiny(1);
        let two = tiny(2);
        assert_eq!(param_count(&two), 2 * param_count(&one));
        let net = Backbone::<f32>::zeros(tiny(3)).unwrap();
        assert_eq!(net.param_count(), param_count(&tiny(3)));
        assert!(Backbone::<f32>::zeros(zero).is_err());
    }

    #[test]
    fn zero_parameters_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Backbone::<f32>::zeros(tiny(3)).unwrap();
        let lf = noise(&mut rng, &[2, 3, 6, 5]);
        let hf = noise(&mut rng, &[2, 3, 6, 5]);
        let p = encode(6, 5, ScalePair::uniform(2.5).unwrap());
        let (y, z) = net.forward(&lf, &hf, &p).unwrap();
        assert_eq!(y, lf);
        assert_eq!(z, hf);
        let (a, b) = net.inverse(&y, &z, &p).unwrap();
        assert_eq!(a, lf);
        assert_eq!(b, hf);
    }

    #[test]
    fn constant_phi_shifts_lf_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Backbone::<f32>::zeros(tiny(1)).unwrap();
        let c = 0.375f32;
        for p in net.params_mut() {
            if p.name == "blocks.0.phi.proj.bias" {
                p.value = Array::full([3], c);
            }
        }
        let lf = noise(&mut rng, &[1, 3, 4, 4]);
        let hf = noise(&mut rng, &[1, 3, 4, 4]);
        let (y, z) = net.forward(&lf, &hf, &encode(4, 4, ScalePair::uniform(2.0).unwrap())).unwrap();
        for (a, b) in y.data().iter().zip(lf.data()) {
            assert_eq!(*a, b + c);
        }
        assert_eq!(z, hf);
    }

    #[test]
    fn encoding_ignored_when_disabled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = BackboneConfig {
            encoding_mode: EncodingMode::None,
            ..tiny(2)
        };
        let net = Backbone::<f32>::random(cfg, &mut rng, 1.0).unwrap();
        let lf = noise(&mut rng, &[1, 3, 5, 5]);
        let hf = noise(&mut rng, &[1, 3, 5, 5]);
        let a = net.forward(&lf, &hf, &encode(5, 5, ScalePair::uniform(1.5).unwrap())).unwrap();
        let b = net.forward(&lf, &hf, &encode(5, 5, ScalePair::new(3.3, 2.0).unwrap())).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = Backbone::<f32>::zeros(tiny(1)).unwrap();
        let lf = Array::zeros([1, 3, 4, 4]);
        let hf = Array::zeros([1, 3, 4, 5]);
        let p = encode(4, 4, ScalePair::uniform(2.0).unwrap());
        assert!(matches!(net.forward(&lf, &hf, &p), Err(Error::Shape(_))));
        let p = encode(4, 5, ScalePair::uniform(2.0).unwrap());
        assert!(matches!(net.forward(&lf, &lf, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_activation_is_reported() {
        let net = Backbone::<f32>::zeros(tiny(1)).unwrap();
        let mut lf = Array::zeros([1, 3, 2, 2]);
        lf.data_mut()[0] = f32::NAN;
        let hf = Array::zeros([1, 3, 2, 2]);
        let p = encode(2, 2, ScalePair::uniform(2.0).unwrap());
        assert!(matches!(net.forward(&lf, &hf, &p), Err(Error::NonFinite(_))));
    }
}
