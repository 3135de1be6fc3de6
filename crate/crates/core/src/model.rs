//! The quantised transforming auto-encoder and the continuous baseline.
//!
//! Both models share one backbone: four stride-2 convolutions down to a
//! small feature map, an optional 1x1 projection when the lattice size does
//! not match the stride pyramid, and a mirrored deconvolution stack back to
//! image resolution. The QTAE reshapes the flat embedding into the lattice
//! tensor and transforms by shifting it; the baseline adds the raw
//! transformation parameters to its first `t` embedding slots.

use crate::error::{Error, Result};
use crate::lattice::{EmbeddingTensor, LatticeOffset, LatticeSpec};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::{
    activation, activation_vjp, conv2d, conv2d_vjp, deconv2d, deconv2d_vjp, linear, linear_vjp,
    Activation, GradCheckReport, Padding, Tensor,
};

/// Stride-2 stages in each half of the backbone.
pub const STAGE_COUNT: usize = 4;
/// Total spatial downsampling of the encoder (and upsampling of the decoder).
pub const TOTAL_STRIDE: usize = 16;
/// Square kernel extent of every (de)convolution stage.
pub const KERNEL_EXTENT: usize = 4;
/// Hidden channel widths between input and embedding channels.
const HIDDEN_CHANNELS: [usize; 3] = [32, 64, 128];
/// Embedding channel width used when the lattice forces a projection.
const FALLBACK_EMBED_CHANNELS: usize = 128;
/// Hard ceiling on trainable parameters. Large product lattices blow past
/// any budget this crate can train; refusing early beats an OOM mid-epoch.
pub const MAX_PARAMETER_COUNT: usize = 60_000_000;

/// Derived backbone geometry for one (image shape, embedding length) pair.
///
/// The embedding channel width is chosen so the flattened final feature map
/// equals the embedding length exactly; when no integer width does, the
/// backbone falls back to 128 channels plus linear projections on both
/// sides of the embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchPlan {
    image: [usize; 3],
    embedding_len: usize,
    feature_h: usize,
    feature_w: usize,
    embed_channels: usize,
    projected: bool,
}

impl ArchPlan {
    pub fn new(image: [usize; 3], embedding_len: usize) -> Result<Self> {
        let [c, h, w] = image;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::contract(format!("degenerate image shape {image:?}")));
        }
        if h % TOTAL_STRIDE != 0 || w % TOTAL_STRIDE != 0 {
            return Err(Error::contract(format!(
                "image extents {h}x{w} must be multiples of {TOTAL_STRIDE} \
                 for the stride-2 pyramid"
            )));
        }
        if embedding_len == 0 {
            return Err(Error::contract("embedding length must be positive"));
        }
        let feature_h = h / TOTAL_STRIDE;
        let feature_w = w / TOTAL_STRIDE;
        let cells = feature_h * feature_w;
        let (embed_channels, projected) = if embedding_len % cells == 0 {
            (embedding_len / cells, false)
        } else {
            (FALLBACK_EMBED_CHANNELS, true)
        };
        Ok(Self { image, embedding_len, feature_h, feature_w, embed_channels, projected })
    }

    pub fn image(&self) -> [usize; 3] {
        self.image
    }

    pub fn embedding_len(&self) -> usize {
        self.embedding_len
    }

    pub fn feature_extents(&self) -> (usize, usize) {
        (self.feature_h, self.feature_w)
    }

    pub fn embed_channels(&self) -> usize {
        self.embed_channels
    }

    pub fn projected(&self) -> bool {
        self.projected
    }

    /// Channel widths along the encoder, input first, embedding last. The
    /// decoder walks the same list in reverse.
    pub fn channels(&self) -> [usize; STAGE_COUNT + 1] {
        [
            self.image[0],
            HIDDEN_CHANNELS[0],
            HIDDEN_CHANNELS[1],
            HIDDEN_CHANNELS[2],
            self.embed_channels,
        ]
    }

    /// Flattened length of the final encoder feature map.
    pub fn conv_flat_len(&self) -> usize {
        self.embed_channels * self.feature_h * self.feature_w
    }

    /// Exact trainable-parameter count: conv/deconv kernels and biases plus
    /// the optional projection pair. Must match the live model; a test pins
    /// the two together.
    pub fn parameter_count(&self) -> usize {
        let ch = self.channels();
        let k2 = KERNEL_EXTENT * KERNEL_EXTENT;
        let mut total = 0usize;
        for i in 0..STAGE_COUNT {
            // encoder stage i: kernel [ch[i+1], ch[i], k, k] + bias per output
            total += ch[i + 1] * ch[i] * k2 + ch[i + 1];
            // decoder stage mirroring it: same kernel volume, bias on ch[i]
            total += ch[i + 1] * ch[i] * k2 + ch[i];
        }
        if self.projected {
            let flat = self.conv_flat_len();
            total += self.embedding_len * flat + self.embedding_len;
            total += flat * self.embedding_len + flat;
        }
        total
    }
}

/// One (de)convolution stage: kernel plus per-output-channel bias.
#[derive(Debug, Clone)]
struct ConvStage<S: Scalar> {
    kernel: Tensor<S>,
    bias: Tensor<S>,
}

/// Dense projection stage used only when the plan demands one.
#[derive(Debug, Clone)]
struct LinearStage<S: Scalar> {
    weight: Tensor<S>,
    bias: Tensor<S>,
}

/// Uniform fan-in bound with a rectifier gain. The stack is eight layers
/// deep; without the gain the forward signal shrinks roughly by half per
/// ReLU layer and reconstruction gradients vanish into the output bias.
fn fan_in_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn init_conv_stage<S: Scalar>(
    kshape: [usize; 4],
    bias_len: usize,
    fan_in: usize,
    rng: &mut SeedStream,
) -> ConvStage<S> {
    let bound = fan_in_bound(fan_in);
    ConvStage {
        kernel: Tensor::random_uniform(&kshape, -bound, bound, rng),
        bias: Tensor::zeros(&[bias_len]),
    }
}

fn init_linear_stage<S: Scalar>(
    out_dim: usize,
    in_dim: usize,
    rng: &mut SeedStream,
) -> LinearStage<S> {
    let bound = fan_in_bound(in_dim);
    LinearStage {
        weight: Tensor::random_uniform(&[out_dim, in_dim], -bound, bound, rng),
        bias: Tensor::zeros(&[out_dim]),
    }
}

/// Saved forward state for [`Backbone::encode_backward`].
#[derive(Debug)]
pub struct EncodeTrace<S: Scalar> {
    conv_inputs: Vec<Tensor<S>>,
    preacts: Vec<Tensor<S>>,
    proj_input: Option<Tensor<S>>,
}

/// Saved forward state for [`Backbone::decode_backward`].
#[derive(Debug)]
pub struct DecodeTrace<S: Scalar> {
    proj_input: Option<Tensor<S>>,
    deconv_inputs: Vec<Tensor<S>>,
    preacts: Vec<Tensor<S>>,
    output: Tensor<S>,
}

/// Shared encoder/decoder parameter stack.
#[derive(Debug, Clone)]
pub struct Backbone<S: Scalar> {
    plan: ArchPlan,
    padding: Padding,
    enc: Vec<ConvStage<S>>,
    enc_proj: Option<LinearStage<S>>,
    dec_proj: Option<LinearStage<S>>,
    dec: Vec<ConvStage<S>>,
}

impl<S: Scalar> Backbone<S> {
    /// Build a freshly initialised backbone. Weights are uniform with
    /// fan-in scaling, biases zero; the draw order is fixed (encoder
    /// stages, projections, decoder stages) so a seed pins every weight.
    pub fn new(plan: ArchPlan, padding: Padding, seed: u64) -> Result<Self> {
        if padding.amount() != 1 {
            return Err(Error::contract(
                "backbone stages use 4x4 stride-2 kernels and require padding 1",
            ));
        }
        let params = plan.parameter_count();
        if params > MAX_PARAMETER_COUNT {
            return Err(Error::contract(format!(
                "model would hold {params} parameters, over the {MAX_PARAMETER_COUNT} ceiling; \
                 use an additive lattice or a smaller factor space"
            )));
        }
        let ch = plan.channels();
        let k = KERNEL_EXTENT;
        let mut rng = SeedStream::new(seed);
        let mut enc = Vec::with_capacity(STAGE_COUNT);
        for i in 0..STAGE_COUNT {
            enc.push(init_conv_stage(
                [ch[i + 1], ch[i], k, k],
                ch[i + 1],
                ch[i] * k * k,
                &mut rng,
            ));
        }
        let (enc_proj, dec_proj) = if plan.projected() {
            let flat = plan.conv_flat_len();
            let e = init_linear_stage(plan.embedding_len(), flat, &mut rng);
            let d = init_linear_stage(flat, plan.embedding_len(), &mut rng);
            (Some(e), Some(d))
        } else {
            (None, None)
        };
        let mut dec = Vec::with_capacity(STAGE_COUNT);
        for j in 0..STAGE_COUNT {
            // stage j consumes ch[4-j] channels and emits ch[3-j]
            let cin = ch[STAGE_COUNT - j];
            let cout = ch[STAGE_COUNT - j - 1];
            dec.push(init_conv_stage([cin, cout, k, k], cout, cin * k * k, &mut rng));
        }
        Ok(Self { plan, padding, enc, enc_proj, dec_proj, dec })
    }

    pub fn plan(&self) -> &ArchPlan {
        &self.plan
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    fn ensure_batch_shape(&self, x: &Tensor<S>) -> Result<usize> {
        let [c, h, w] = self.plan.image;
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != c || shape[2] != h || shape[3] != w {
            return Err(Error::contract(format!(
                "batch shape {shape:?} does not match configured image [{c}, {h}, {w}]"
            )));
        }
        Ok(shape[0])
    }

    /// Map a batch of images to flat embeddings `[n, embedding_len]`.
    pub fn encode_batch(&self, x: &Tensor<S>) -> Result<(Tensor<S>, EncodeTrace<S>)> {
        self.ensure_batch_shape(x)?;
        let mut conv_inputs = Vec::with_capacity(STAGE_COUNT);
        let mut preacts = Vec::with_capacity(STAGE_COUNT - 1);
        let mut cur = x.clone();
        for (i, stage) in self.enc.iter().enumerate() {
            conv_inputs.push(cur.clone());
            let mut z = conv2d(&cur, &stage.kernel, 2, self.padding)?;
            add_channel_bias(&mut z, &stage.bias);
            if i + 1 < STAGE_COUNT {
                preacts.push(z.clone());
                cur = activation(&z, Activation::Relu)?;
            } else {
                cur = z;
            }
        }
        let (fh, fw) = self.plan.feature_extents();
        let flat = to_spatial_major(&cur, self.plan.embed_channels, fh, fw)?;
        match &self.enc_proj {
            Some(p) => {
                let embed = linear(&flat, &p.weight, &p.bias)?;
                Ok((embed, EncodeTrace { conv_inputs, preacts, proj_input: Some(flat) }))
            }
            None => Ok((flat, EncodeTrace { conv_inputs, preacts, proj_input: None })),
        }
    }

    /// Push an embedding cotangent back through the encoder, accumulating
    /// parameter gradients, and return the input-image cotangent.
    pub fn encode_backward(
        &mut self,
        trace: &EncodeTrace<S>,
        d_embed: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let d_flat = match (&mut self.enc_proj, &trace.proj_input) {
            (Some(p), Some(flat)) => {
                let (dx, dw, db) = linear_vjp(flat, &p.weight, d_embed)?;
                p.weight.add_to_grad(dw.data())?;
                p.bias.add_to_grad(db.data())?;
                dx
            }
            (None, None) => d_embed.clone(),
            _ => return Err(Error::contract("encode trace does not match projection config")),
        };
        let (fh, fw) = self.plan.feature_extents();
        let mut cur = to_channel_major(&d_flat, self.plan.embed_channels, fh, fw)?;
        for i in (0..STAGE_COUNT).rev() {
            // `cur` holds the cotangent of stage i's post-bias output
            let stage = &mut self.enc[i];
            let (d_in, d_kernel) = conv2d_vjp(&trace.conv_inputs[i], &stage.kernel, 2, self.padding, &cur)?;
            stage.kernel.add_to_grad(d_kernel.data())?;
            stage.bias.add_to_grad(&channel_sums(&cur))?;
            cur = if i > 0 {
                activation_vjp(&trace.preacts[i - 1], Activation::Relu, &d_in)?
            } else {
                d_in
            };
        }
        Ok(cur)
    }

    /// Map flat embeddings `[n, embedding_len]` to a batch of images.
    pub fn decode_batch(&self, embed: &Tensor<S>) -> Result<(Tensor<S>, DecodeTrace<S>)> {
        let eshape = embed.shape();
        if eshape.len() != 2 || eshape[1] != self.plan.embedding_len {
            return Err(Error::contract(format!(
                "embedding batch shape {eshape:?}, expected [n, {}]",
                self.plan.embedding_len
            )));
        }
        let (flat, proj_input) = match &self.dec_proj {
            Some(p) => (linear(embed, &p.weight, &p.bias)?, Some(embed.clone())),
            None => (embed.clone(), None),
        };
        let (fh, fw) = self.plan.feature_extents();
        let mut cur = to_channel_major(&flat, self.plan.embed_channels, fh, fw)?;
        let mut deconv_inputs = Vec::with_capacity(STAGE_COUNT);
        let mut preacts = Vec::with_capacity(STAGE_COUNT - 1);
        for (j, stage) in self.dec.iter().enumerate() {
            deconv_inputs.push(cur.clone());
            let mut z = deconv2d(&cur, &stage.kernel, 2, self.padding)?;
            add_channel_bias(&mut z, &stage.bias);
            if j + 1 < STAGE_COUNT {
                preacts.push(z.clone());
                cur = activation(&z, Activation::Relu)?;
            } else {
                cur = activation(&z, Activation::Sigmoid)?;
            }
        }
        let output = cur.clone();
        Ok((cur, DecodeTrace { proj_input, deconv_inputs, preacts, output }))
    }

    /// Push an image cotangent back through the decoder, accumulating
    /// parameter gradients, and return the embedding cotangent.
    pub fn decode_backward(
        &mut self,
        trace: &DecodeTrace<S>,
        d_out: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let mut cur = activation_vjp(&trace.output, Activation::Sigmoid, d_out)?;
        for j in (0..STAGE_COUNT).rev() {
            let stage = &mut self.dec[j];
            let (d_in, d_kernel) =
                deconv2d_vjp(&trace.deconv_inputs[j], &stage.kernel, 2, self.padding, &cur)?;
            stage.kernel.add_to_grad(d_kernel.data())?;
            stage.bias.add_to_grad(&channel_sums(&cur))?;
            cur = if j > 0 {
                activation_vjp(&trace.preacts[j - 1], Activation::Relu, &d_in)?
            } else {
                d_in
            };
        }
        let (fh, fw) = self.plan.feature_extents();
        let d_flat = to_spatial_major(&cur, self.plan.embed_channels, fh, fw)?;
        match (&mut self.dec_proj, &trace.proj_input) {
            (Some(p), Some(embed)) => {
                let (dx, dw, db) = linear_vjp(embed, &p.weight, &d_flat)?;
                p.weight.add_to_grad(dw.data())?;
                p.bias.add_to_grad(db.data())?;
                Ok(dx)
            }
            (None, None) => Ok(d_flat),
            _ => Err(Error::contract("decode trace does not match projection config")),
        }
    }

    /// Parameters in registry order with stable names, for checkpoints.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, stage) in self.enc.iter().enumerate() {
            out.push((format!("enc.{i}.kernel"), &stage.kernel));
            out.push((format!("enc.{i}.bias"), &stage.bias));
        }
        if let Some(p) = &self.enc_proj {
            out.push(("enc_proj.weight".to_string(), &p.weight));
            out.push(("enc_proj.bias".to_string(), &p.bias));
        }
        if let Some(p) = &self.dec_proj {
            out.push(("dec_proj.weight".to_string(), &p.weight));
            out.push(("dec_proj.bias".to_string(), &p.bias));
        }
        for (j, stage) in self.dec.iter().enumerate() {
            out.push((format!("dec.{j}.kernel"), &stage.kernel));
            out.push((format!("dec.{j}.bias"), &stage.bias));
        }
        out
    }

    /// Mutable parameter views in the same order as [`named_parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for stage in self.enc.iter_mut() {
            out.push(&mut stage.kernel);
            out.push(&mut stage.bias);
        }
        if let Some(p) = &mut self.enc_proj {
            out.push(&mut p.weight);
            out.push(&mut p.bias);
        }
        if let Some(p) = &mut self.dec_proj {
            out.push(&mut p.weight);
            out.push(&mut p.bias);
        }
        for stage in self.dec.iter_mut() {
            out.push(&mut stage.kernel);
            out.push(&mut stage.bias);
        }
        out
    }

    /// Overwrite one named parameter, typically from a checkpoint.
    pub fn set_parameter(&mut self, name: &str, data: &[S]) -> Result<()> {
        for (param_name, param) in self.named_parameters_mut_pairs() {
            if param_name == name {
                if data.len() != param.len() {
                    return Err(Error::contract(format!(
                        "parameter {name} holds {} values, got {}",
                        param.len(),
                        data.len()
                    )));
                }
                param.data_mut().copy_from_slice(data);
                return Ok(());
            }
        }
        Err(Error::contract(format!("unknown parameter {name}")))
    }

    fn named_parameters_mut_pairs(&mut self) -> Vec<(String, &mut Tensor<S>)> {
        let names: Vec<String> =
            self.named_parameters().into_iter().map(|(n, _)| n).collect();
        names.into_iter().zip(self.parameters_mut()).collect()
    }

    /// Allocate and zero every parameter gradient.
    pub fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.alloc_grad();
            p.zero_grad();
        }
    }

    /// All parameter values concatenated in registry order.
    pub fn flatten_parameters(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.plan.parameter_count());
        for (_, p) in self.named_parameters() {
            out.extend_from_slice(p.data());
        }
        out
    }

    /// Overwrite all parameters from a flat vector in registry order.
    pub fn load_flat_parameters(&mut self, values: &[S]) -> Result<()> {
        if values.len() != self.plan.parameter_count() {
            return Err(Error::contract(format!(
                "flat parameter vector holds {} values, expected {}",
                values.len(),
                self.plan.parameter_count()
            )));
        }
        let mut offset = 0;
        for p in self.parameters_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// All parameter gradients concatenated in registry order. Errors if a
    /// gradient has not been allocated (no backward ran).
    pub fn flatten_gradients(&self) -> Result<Vec<S>> {
        let mut out = Vec::with_capacity(self.plan.parameter_count());
        for (name, p) in self.named_parameters() {
            let g = p
                .grad()
                .ok_or_else(|| Error::contract(format!("parameter {name} has no gradient")))?;
            out.extend_from_slice(g);
        }
        Ok(out)
    }
}

/// z[n, c, :, :] += bias[c]
fn add_channel_bias<S: Scalar>(z: &mut Tensor<S>, bias: &Tensor<S>) {
    let shape = z.shape().to_vec();
    let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let data = z.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let b = bias.data()[ci];
            let base = (ni * c + ci) * plane;
            for v in &mut data[base..base + plane] {
                *v += b;
            }
        }
    }
}

/// Per-channel sums of a [n, c, h, w] cotangent, the bias gradient.
fn channel_sums<S: Scalar>(cot: &Tensor<S>) -> Vec<S> {
    let shape = cot.shape();
    let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let mut out = vec![S::zero(); c];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            let mut acc = S::zero();
            for v in &cot.data()[base..base + plane] {
                acc += *v;
            }
            out[ci] += acc;
        }
    }
    out
}

/// [n, e, h, w] -> [n, h*w*e]: the flat embedding enumerates feature-map
/// cells first and channels last, so spatial lattice factors line up with
/// feature-map axes and a feature-map roll is an embedding roll.
fn to_spatial_major<S: Scalar>(
    x: &Tensor<S>,
    e: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<S>> {
    let shape = x.shape();
    if shape.len() != 4 || shape[1] != e || shape[2] != h || shape[3] != w {
        return Err(Error::contract(format!(
            "feature map shape {shape:?}, expected [n, {e}, {h}, {w}]"
        )));
    }
    let n = shape[0];
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, plane * e]);
    let src = x.data();
    let dst = out.data_mut();
    for ni in 0..n {
        let sbase = ni * e * plane;
        let dbase = ni * plane * e;
        for ci in 0..e {
            for p in 0..plane {
                dst[dbase + p * e + ci] = src[sbase + ci * plane + p];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`to_spatial_major`]; also its vector-Jacobian product, since
/// a permutation's adjoint is its inverse.
fn to_channel_major<S: Scalar>(
    flat: &Tensor<S>,
    e: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<S>> {
    let shape = flat.shape();
    let plane = h * w;
    if shape.len() != 2 || shape[1] != plane * e {
        return Err(Error::contract(format!(
            "flat embedding shape {shape:?}, expected [n, {}]",
            plane * e
        )));
    }
    let n = shape[0];
    let mut out = Tensor::zeros(&[n, e, h, w]);
    let src = flat.data();
    let dst = out.data_mut();
    for ni in 0..n {
        let sbase = ni * plane * e;
        let dbase = ni * e * plane;
        for ci in 0..e {
            for p in 0..plane {
                dst[dbase + ci * plane + p] = src[sbase + p * e + ci];
            }
        }
    }
    Ok(out)
}

fn singleton_batch<S: Scalar>(x: &Tensor<S>, image: [usize; 3]) -> Result<Tensor<S>> {
    if x.shape() != image {
        return Err(Error::contract(format!(
            "image shape {:?} does not match configured {:?}",
            x.shape(),
            image
        )));
    }
    Tensor::from_vec(&[1, image[0], image[1], image[2]], x.data().to_vec())
}

fn ensure_unit_range<S: Scalar>(x: &Tensor<S>) -> Result<()> {
    x.ensure_finite("encoder input")?;
    for v in x.data() {
        if *v < S::zero() || *v > S::one() {
            return Err(Error::contract(format!("pixel value {v} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Auto-encoder whose embedding is the discrete lattice tensor; transforming
/// an input is shifting that tensor.
#[derive(Debug, Clone)]
pub struct QtaeModel<S: Scalar> {
    backbone: Backbone<S>,
    lattice: LatticeSpec,
}

impl<S: Scalar> QtaeModel<S> {
    pub fn new(
        image: [usize; 3],
        lattice: LatticeSpec,
        padding: Padding,
        seed: u64,
    ) -> Result<Self> {
        lattice.validate()?;
        let plan = ArchPlan::new(image, lattice.element_count())?;
        let backbone = Backbone::new(plan, padding, seed)?;
        debug_assert_eq!(backbone.plan().embedding_len(), lattice.element_count());
        Ok(Self { backbone, lattice })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.backbone.plan.image
    }

    pub fn backbone(&self) -> &Backbone<S> {
        &self.backbone
    }

    pub fn backbone_mut(&mut self) -> &mut Backbone<S> {
        &mut self.backbone
    }

    /// Encode one image into the lattice-shaped embedding tensor.
    pub fn encode(&self, x: &Tensor<S>) -> Result<EmbeddingTensor<S>> {
        ensure_unit_range(x)?;
        let batch = singleton_batch(x, self.image_shape())?;
        let (embed, _) = self.backbone.encode_batch(&batch)?;
        EmbeddingTensor::from_flat(self.lattice.clone(), embed.into_data())
    }

    /// Decode a lattice embedding back to an image.
    pub fn decode(&self, y: &EmbeddingTensor<S>) -> Result<Tensor<S>> {
        if y.spec() != &self.lattice {
            return Err(Error::contract("embedding lattice does not match the model"));
        }
        let len = self.lattice.element_count();
        let flat = Tensor::from_vec(&[1, len], y.tensor().data().to_vec())?;
        let (out, _) = self.backbone.decode_batch(&flat)?;
        let [c, h, w] = self.image_shape();
        out.reshaped(&[c, h, w])
    }

    /// The model's rendering of the transformed input: encode, shift the
    /// lattice by `u`, decode.
    pub fn predict_transformed(&self, x: &Tensor<S>, u: &LatticeOffset) -> Result<Tensor<S>> {
        let y = self.encode(x)?;
        let shifted = y.shifted(u)?;
        self.decode(&shifted)
    }

    /// Relative equivariance residual
    /// `|encode(target) - shift(encode(source), u)| / |encode(source)|`
    /// in the L2 norm; small values mean the embedding transforms like the
    /// image does.
    pub fn equivariance_residual(
        &self,
        source: &Tensor<S>,
        target: &Tensor<S>,
        u: &LatticeOffset,
    ) -> Result<f64> {
        let ys = self.encode(source)?;
        let yt = self.encode(target)?;
        let shifted = ys.shifted(u)?;
        let base = ys.tensor().norm_l2();
        if base == 0.0 {
            return Err(Error::numeric("source embedding has zero norm"));
        }
        let mut diff = 0.0f64;
        for (a, b) in yt.tensor().data().iter().zip(shifted.tensor().data()) {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            diff += d * d;
        }
        Ok(diff.sqrt() / base)
    }
}

/// An embedding with the continuous slot shift kept symbolic. Increments
/// accumulate in f64 and are applied once at materialisation, so composing
/// `+u` and `+v` is exactly `+(u+v)`.
#[derive(Debug, Clone)]
pub struct TaeEmbedding<S: Scalar> {
    tensor: Tensor<S>,
    shift: Vec<f64>,
}

impl<S: Scalar> TaeEmbedding<S> {
    pub fn tensor(&self) -> &Tensor<S> {
        &self.tensor
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// Accumulate a slot increment.
    pub fn shifted(&self, u: &[f64]) -> Result<Self> {
        if u.len() != self.shift.len() {
            return Err(Error::contract(format!(
                "transformation vector has {} components, model reserves {} slots",
                u.len(),
                self.shift.len()
            )));
        }
        let mut out = self.clone();
        for (acc, inc) in out.shift.iter_mut().zip(u) {
            *acc += *inc;
        }
        Ok(out)
    }

    /// Apply the accumulated shift to the first `t` slots.
    pub fn materialise(&self) -> Tensor<S> {
        let mut out = self.tensor.clone();
        for (slot, inc) in out.data_mut().iter_mut().zip(&self.shift) {
            *slot = S::from_f64_lossy(slot.to_f64_lossy() + *inc);
        }
        out
    }
}

/// Continuous transforming auto-encoder baseline: same backbone, flat
/// embedding `(y_t, y_e)` with the transformation added to `y_t`.
#[derive(Debug, Clone)]
pub struct TaeBaselineModel<S: Scalar> {
    backbone: Backbone<S>,
    slots: usize,
}

impl<S: Scalar> TaeBaselineModel<S> {
    pub fn new(
        image: [usize; 3],
        slots: usize,
        embed_width: usize,
        padding: Padding,
        seed: u64,
    ) -> Result<Self> {
        if slots > embed_width {
            return Err(Error::contract(format!(
                "{slots} transformation slots cannot fit a {embed_width}-wide embedding"
            )));
        }
        let plan = ArchPlan::new(image, embed_width)?;
        let backbone = Backbone::new(plan, padding, seed)?;
        Ok(Self { backbone, slots })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn embed_width(&self) -> usize {
        self.backbone.plan.embedding_len()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.backbone.plan.image
    }

    pub fn backbone(&self) -> &Backbone<S> {
        &self.backbone
    }

    pub fn backbone_mut(&mut self) -> &mut Backbone<S> {
        &mut self.backbone
    }

    /// Encode one image to a flat embedding with zero accumulated shift.
    pub fn embed(&self, x: &Tensor<S>) -> Result<TaeEmbedding<S>> {
        ensure_unit_range(x)?;
        let batch = singleton_batch(x, self.image_shape())?;
        let (embed, _) = self.backbone.encode_batch(&batch)?;
        let flat = Tensor::from_vec(&[self.embed_width()], embed.into_data())?;
        Ok(TaeEmbedding { tensor: flat, shift: vec![0.0; self.slots] })
    }

    /// Decode a (possibly shifted) baseline embedding.
    pub fn decode(&self, y: &TaeEmbedding<S>) -> Result<Tensor<S>> {
        let m = self.embed_width();
        if y.tensor.len() != m || y.shift.len() != self.slots {
            return Err(Error::contract("baseline embedding does not match the model"));
        }
        let flat = Tensor::from_vec(&[1, m], y.materialise().into_data())?;
        let (out, _) = self.backbone.decode_batch(&flat)?;
        let [c, h, w] = self.image_shape();
        out.reshaped(&[c, h, w])
    }

    /// Decode the embedding of `x` with `u` added to its first `t` slots.
    pub fn tae_predict(&self, x: &Tensor<S>, u: &[f64]) -> Result<Tensor<S>> {
        let y = self.embed(x)?.shifted(u)?;
        self.decode(&y)
    }
}

/// One entry of [`gradcheck_suite`]: a named check with the worst report
/// over all random instances.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub name: &'static str,
    /// Stack checks exercise the whole backbone; op checks a single kernel.
    pub stack: bool,
    pub report: GradCheckReport,
}

fn merge(into: &mut GradCheckReport, part: GradCheckReport) {
    into.probes += part.probes;
    into.max_abs_diff = into.max_abs_diff.max(part.max_abs_diff);
    into.max_rel_diff = into.max_rel_diff.max(part.max_rel_diff);
    into.passed &= part.passed;
}

fn check_instances<F>(
    name: &'static str,
    stack: bool,
    instances: usize,
    tolerance: f64,
    rng: &mut SeedStream,
    mut one: F,
) -> Result<GradCheckCase>
where
    F: FnMut(f64, &mut SeedStream) -> Result<GradCheckReport>,
{
    let mut report = GradCheckReport {
        probes: 0,
        max_abs_diff: 0.0,
        max_rel_diff: 0.0,
        tolerance,
        passed: true,
    };
    for _ in 0..instances {
        merge(&mut report, one(tolerance, rng)?);
    }
    Ok(GradCheckCase { name, stack, report })
}

/// Central-difference step for single ops. Large enough that f64
/// subtraction noise stays around 1e-11 on unit-scale values, small enough
/// that curvature error does too; activation kinks are kept `>> step` away
/// by the samplers.
const FD_STEP: f64 = 1e-5;

/// Step for whole-stack checks. The stacks are piecewise linear up to the
/// final sigmoid, so shrinking the step costs no curvature accuracy; it
/// only lowers the odds that a probe pushes one of the ~1e4 hidden
/// pre-activations across its ReLU kink, which would corrupt the central
/// difference by O(1). Cancellation noise at 1e-8 is ~1e-7 relative, two
/// decades under the stack tolerance.
const STACK_FD_STEP: f64 = 1e-8;

fn sample_away_from(rng: &mut SeedStream, n: usize, margin: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let sign = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            sign * rng.uniform(margin, 1.0)
        })
        .collect()
}

/// Finite-difference verification of every reverse-mode building block and
/// of the assembled encoder/decoder stacks, all in f64. Each check draws
/// `instances` fresh random base points (and fresh weights where there are
/// weights) and runs two dot-product probes per instance; the returned
/// reports aggregate the worst probe. Op checks compare against `op_tol`,
/// stack checks against `stack_tol`.
pub fn gradcheck_suite(
    seed: u64,
    instances: usize,
    op_tol: f64,
    stack_tol: f64,
) -> Result<Vec<GradCheckCase>> {
    use crate::tensor::{finite_diff_check, l1_loss, l1_loss_grad, ClosureFn};
    use std::cell::RefCell;

    if instances == 0 {
        return Err(Error::contract("gradcheck_suite: need at least one instance"));
    }
    let mut rng = SeedStream::new(seed);
    let probes = 2;
    let mut cases = Vec::new();

    // relu: base points bounded away from the kink at 0.
    cases.push(check_instances("relu", false, instances, op_tol, &mut rng, |tol, rng| {
        let f = ClosureFn {
            input_len: 64,
            eval: |v: &[f64]| {
                let x = Tensor::from_vec(&[64], v.to_vec())?;
                Ok(activation(&x, Activation::Relu)?.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let x = Tensor::from_vec(&[64], v.to_vec())?;
                let c = Tensor::from_vec(&[64], cot.to_vec())?;
                Ok(activation_vjp(&x, Activation::Relu, &c)?.into_data())
            },
        };
        let x = sample_away_from(rng, 64, 0.05);
        finite_diff_check(&f, &x, probes, FD_STEP, tol, rng)
    })?);

    cases.push(check_instances("sigmoid", false, instances, op_tol, &mut rng, |tol, rng| {
        let f = ClosureFn {
            input_len: 64,
            eval: |v: &[f64]| {
                let x = Tensor::from_vec(&[64], v.to_vec())?;
                Ok(activation(&x, Activation::Sigmoid)?.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let x = Tensor::from_vec(&[64], v.to_vec())?;
                let y = activation(&x, Activation::Sigmoid)?;
                let c = Tensor::from_vec(&[64], cot.to_vec())?;
                Ok(activation_vjp(&y, Activation::Sigmoid, &c)?.into_data())
            },
        };
        let x: Vec<f64> = (0..64).map(|_| rng.uniform(-3.0, 3.0)).collect();
        finite_diff_check(&f, &x, probes, FD_STEP, tol, rng)
    })?);

    // conv family: input [1, 2, 8, 8], kernel [3, 2, 4, 4], stride 2. The
    // non-varying side is redrawn per instance.
    let conv_pads = [("zero", Padding::Zero(1)), ("circular", Padding::Circular(1))];
    for (pad_name, pad) in conv_pads {
        let name: &'static str = match pad_name {
            "zero" => "conv2d-input",
            _ => "conv2d-circular-input",
        };
        cases.push(check_instances(name, false, instances, op_tol, &mut rng, |tol, rng| {
            let kdata: Vec<f64> = (0..3 * 2 * 16).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let kernel = Tensor::from_vec(&[3, 2, 4, 4], kdata)?;
            let f = ClosureFn {
                input_len: 2 * 64,
                eval: |v: &[f64]| {
                    let x = Tensor::from_vec(&[1, 2, 8, 8], v.to_vec())?;
                    Ok(conv2d(&x, &kernel, 2, pad)?.into_data())
                },
                vjp: |v: &[f64], cot: &[f64]| {
                    let x = Tensor::from_vec(&[1, 2, 8, 8], v.to_vec())?;
                    let out = conv2d(&x, &kernel, 2, pad)?;
                    let c = Tensor::from_vec(out.shape(), cot.to_vec())?;
                    Ok(conv2d_vjp(&x, &kernel, 2, pad, &c)?.0.into_data())
                },
            };
            let x: Vec<f64> = (0..2 * 64).map(|_| rng.uniform(-1.0, 1.0)).collect();
            finite_diff_check(&f, &x, probes, FD_STEP, tol, rng)
        })?);

        let name: &'static str = match pad_name {
            "zero" => "conv2d-kernel",
            _ => "conv2d-circular-kernel",
        };
        cases.push(check_instances(name, false, instances, op_tol, &mut rng, |tol, rng| {
            let xdata: Vec<f64> = (0..2 * 64).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let input = Tensor::from_vec(&[1, 2, 8, 8], xdata)?;
            let f = ClosureFn {
                input_len: 3 * 2 * 16,
                eval: |v: &[f64]| {
                    let k = Tensor::from_vec(&[3, 2, 4, 4], v.to_vec())?;
                    Ok(conv2d(&input, &k, 2, pad)?.into_data())
                },
                vjp: |v: &[f64], cot: &[f64]| {
                    let k = Tensor::from_vec(&[3, 2, 4, 4], v.to_vec())?;
                    let out = conv2d(&input, &k, 2, pad)?;
                    let c = Tensor::from_vec(out.shape(), cot.to_vec())?;
                    Ok(conv2d_vjp(&input, &k, 2, pad, &c)?.1.into_data())
                },
            };
            let k: Vec<f64> = (0..3 * 2 * 16).map(|_| rng.uniform(-1.0, 1.0)).collect();
            finite_diff_check(&f, &k, probes, FD_STEP, tol, rng)
        })?);

        let name: &'static str = match pad_name {
            "zero" => "deconv2d-input",
            _ => "deconv2d-circular-input",
        };
        cases.push(check_instances(name, false, instances, op_tol, &mut rng, |tol, rng| {
            let kdata: Vec<f64> = (0..3 * 2 * 16).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let kernel = Tensor::from_vec(&[3, 2, 4, 4], kdata)?;
            let f = ClosureFn {
                input_len: 3 * 16,
                eval: |v: &[f64]| {
                    let x = Tensor::from_vec(&[1, 3, 4, 4], v.to_vec())?;
                    Ok(deconv2d(&x, &kernel, 2, pad)?.into_data())
                },
                vjp: |v: &[f64], cot: &[f64]| {
                    let x = Tensor::from_vec(&[1, 3, 4, 4], v.to_vec())?;
                    let out = deconv2d(&x, &kernel, 2, pad)?;
                    let c = Tensor::from_vec(out.shape(), cot.to_vec())?;
                    Ok(deconv2d_vjp(&x, &kernel, 2, pad, &c)?.0.into_data())
                },
            };
            let x: Vec<f64> = (0..3 * 16).map(|_| rng.uniform(-1.0, 1.0)).collect();
            finite_diff_check(&f, &x, probes, FD_STEP, tol, rng)
        })?);

        let name: &'static str = match pad_name {
            "zero" => "deconv2d-kernel",
            _ => "deconv2d-circular-kernel",
        };
        cases.push(check_instances(name, false, instances, op_tol, &mut rng, |tol, rng| {
            let xdata: Vec<f64> = (0..3 * 16).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let input = Tensor::from_vec(&[1, 3, 4, 4], xdata)?;
            let f = ClosureFn {
                input_len: 3 * 2 * 16,
                eval: |v: &[f64]| {
                    let k = Tensor::from_vec(&[3, 2, 4, 4], v.to_vec())?;
                    Ok(deconv2d(&input, &k, 2, pad)?.into_data())
                },
                vjp: |v: &[f64], cot: &[f64]| {
                    let k = Tensor::from_vec(&[3, 2, 4, 4], v.to_vec())?;
                    let out = deconv2d(&input, &k, 2, pad)?;
                    let c = Tensor::from_vec(out.shape(), cot.to_vec())?;
                    Ok(deconv2d_vjp(&input, &k, 2, pad, &c)?.1.into_data())
                },
            };
            let k: Vec<f64> = (0..3 * 2 * 16).map(|_| rng.uniform(-1.0, 1.0)).collect();
            finite_diff_check(&f, &k, probes, FD_STEP, tol, rng)
        })?);
    }

    // linear: input [2, 12], weight [5, 12], bias [5].
    cases.push(check_instances("linear-input", false, instances, op_tol, &mut rng, |tol, rng| {
        let w = Tensor::from_vec(&[5, 12], (0..60).map(|_| rng.uniform(-1.0, 1.0)).collect())?;
        let b = Tensor::from_vec(&[5], (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect())?;
        let f = ClosureFn {
            input_len: 24,
            eval: |v: &[f64]| {
                let x = Tensor::from_vec(&[2, 12], v.to_vec())?;
                Ok(linear(&x, &w, &b)?.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let x = Tensor::from_vec(&[2, 12], v.to_vec())?;
                let c = Tensor::from_vec(&[2, 5], cot.to_vec())?;
                Ok(linear_vjp(&x, &w, &c)?.0.into_data())
            },
        };
        let x: Vec<f64> = (0..24).map(|_| rng.uniform(-1.0, 1.0)).collect();
        finite_diff_check(&f, &x, probes, FD_STEP, tol, rng)
    })?);

    cases.push(check_instances("linear-weight", false, instances, op_tol, &mut rng, |tol, rng| {
        let x = Tensor::from_vec(&[2, 12], (0..24).map(|_| rng.uniform(-1.0, 1.0)).collect())?;
        let b = Tensor::from_vec(&[5], (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect())?;
        let f = ClosureFn {
            input_len: 60,
            eval: |v: &[f64]| {
                let w = Tensor::from_vec(&[5, 12], v.to_vec())?;
                Ok(linear(&x, &w, &b)?.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let w = Tensor::from_vec(&[5, 12], v.to_vec())?;
                let c = Tensor::from_vec(&[2, 5], cot.to_vec())?;
                Ok(linear_vjp(&x, &w, &c)?.1.into_data())
            },
        };
        let w: Vec<f64> = (0..60).map(|_| rng.uniform(-1.0, 1.0)).collect();
        finite_diff_check(&f, &w, probes, FD_STEP, tol, rng)
    })?);

    cases.push(check_instances("linear-bias", false, instances, op_tol, &mut rng, |tol, rng| {
        let x = Tensor::from_vec(&[2, 12], (0..24).map(|_| rng.uniform(-1.0, 1.0)).collect())?;
        let w = Tensor::from_vec(&[5, 12], (0..60).map(|_| rng.uniform(-1.0, 1.0)).collect())?;
        let f = ClosureFn {
            input_len: 5,
            eval: |v: &[f64]| {
                let b = Tensor::from_vec(&[5], v.to_vec())?;
                Ok(linear(&x, &w, &b)?.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let c = Tensor::from_vec(&[2, 5], cot.to_vec())?;
                let (_, _, db) = linear_vjp(&x, &w, &c)?;
                let _ = v;
                Ok(db.into_data())
            },
        };
        let b: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
        finite_diff_check(&f, &b, probes, FD_STEP, tol, rng)
    })?);

    // l1 objective: targets kept away from the predictions so no |.| kink
    // sits within the step.
    cases.push(check_instances("l1-loss", false, instances, op_tol, &mut rng, |tol, rng| {
        let tdata: Vec<f64> = (0..64).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let target = Tensor::from_vec(&[64], tdata)?;
        let f = ClosureFn {
            input_len: 64,
            eval: |v: &[f64]| {
                let p = Tensor::from_vec(&[64], v.to_vec())?;
                Ok(vec![l1_loss(&p, &target)?])
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let p = Tensor::from_vec(&[64], v.to_vec())?;
                let g = l1_loss_grad(&p, &target)?;
                Ok(g.data().iter().map(|d| d * cot[0]).collect())
            },
        };
        // prediction = target + a signed gap of at least 0.05
        let p: Vec<f64> = target
            .data()
            .iter()
            .map(|t| {
                let sign = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
                t + sign * rng.uniform(0.05, 0.5)
            })
            .collect();
        finite_diff_check(&f, &p, probes, FD_STEP, tol, rng)
    })?);

    // embedding shift is linear with adjoint shift(-u), both fill flavours
    for (name, periodic) in [("shift-periodic", true), ("shift-aperiodic", false)] {
        cases.push(check_instances(name, false, instances, op_tol, &mut rng, |tol, rng| {
            let make = if periodic {
                crate::lattice::FactorSpec::periodic
            } else {
                crate::lattice::FactorSpec::aperiodic
            };
            let spec = LatticeSpec::new(
                vec![make("a", 4), make("b", 3)],
                2,
                crate::lattice::LatticeMode::Product,
            )?;
            let u = LatticeOffset::new(vec![
                rng.uniform(-3.0, 4.0).floor() as i64,
                rng.uniform(-2.0, 3.0).floor() as i64,
            ]);
            let n = spec.element_count();
            let f = ClosureFn {
                input_len: n,
                eval: |v: &[f64]| {
                    let e = EmbeddingTensor::from_flat(spec.clone(), v.to_vec())?;
                    Ok(e.shifted(&u)?.into_tensor().into_data())
                },
                vjp: |_: &[f64], cot: &[f64]| {
                    let c = EmbeddingTensor::from_flat(spec.clone(), cot.to_vec())?;
                    let back = LatticeOffset::new(u.components.iter().map(|c| -c).collect());
                    Ok(c.shifted(&back)?.into_tensor().into_data())
                },
            };
            let x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            finite_diff_check(&f, &x, probes, FD_STEP, tol, rng)
        })?);
    }

    // full stacks on the real 32x32 geometry, fresh weights per instance
    cases.push(check_instances("encoder-stack", true, instances, stack_tol, &mut rng, |tol, rng| {
        let seed = rng.uniform(0.0, 1e9) as u64;
        let model = RefCell::new(Backbone::<f64>::new(
            ArchPlan::new([1, 32, 32], 8)?,
            Padding::Zero(1),
            seed,
        )?);
        let n = 32 * 32;
        let f = ClosureFn {
            input_len: n,
            eval: |v: &[f64]| {
                let x = Tensor::from_vec(&[1, 1, 32, 32], v.to_vec())?;
                let (e, _) = model.borrow().encode_batch(&x)?;
                Ok(e.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let x = Tensor::from_vec(&[1, 1, 32, 32], v.to_vec())?;
                let mut m = model.borrow_mut();
                m.zero_grads();
                let (_, trace) = m.encode_batch(&x)?;
                let c = Tensor::from_vec(&[1, 8], cot.to_vec())?;
                Ok(m.encode_backward(&trace, &c)?.into_data())
            },
        };
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
        finite_diff_check(&f, &x, probes, STACK_FD_STEP, tol, rng)
    })?);

    cases.push(check_instances("decoder-stack", true, instances, stack_tol, &mut rng, |tol, rng| {
        let seed = rng.uniform(0.0, 1e9) as u64;
        let model = RefCell::new(Backbone::<f64>::new(
            ArchPlan::new([1, 32, 32], 8)?,
            Padding::Zero(1),
            seed,
        )?);
        let f = ClosureFn {
            input_len: 8,
            eval: |v: &[f64]| {
                let e = Tensor::from_vec(&[1, 8], v.to_vec())?;
                let (img, _) = model.borrow().decode_batch(&e)?;
                Ok(img.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let e = Tensor::from_vec(&[1, 8], v.to_vec())?;
                let mut m = model.borrow_mut();
                m.zero_grads();
                let (_, trace) = m.decode_batch(&e)?;
                let c = Tensor::from_vec(&[1, 1, 32, 32], cot.to_vec())?;
                Ok(m.decode_backward(&trace, &c)?.into_data())
            },
        };
        let e: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        finite_diff_check(&f, &e, probes, STACK_FD_STEP, tol, rng)
    })?);

    // parameter gradients through each stack; the flat vector covers the
    // whole backbone, entries on the unused half must pull back to zero
    cases.push(check_instances("encoder-params", true, instances, stack_tol, &mut rng, |tol, rng| {
        let seed = rng.uniform(0.0, 1e9) as u64;
        let model = RefCell::new(Backbone::<f64>::new(
            ArchPlan::new([1, 32, 32], 8)?,
            Padding::Zero(1),
            seed,
        )?);
        let xdata: Vec<f64> = (0..2 * 32 * 32).map(|_| rng.uniform(0.0, 1.0)).collect();
        let x = Tensor::from_vec(&[2, 1, 32, 32], xdata)?;
        let n = model.borrow().plan().parameter_count();
        let f = ClosureFn {
            input_len: n,
            eval: |v: &[f64]| {
                let mut m = model.borrow_mut();
                m.load_flat_parameters(v)?;
                let (e, _) = m.encode_batch(&x)?;
                Ok(e.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let mut m = model.borrow_mut();
                m.load_flat_parameters(v)?;
                m.zero_grads();
                let (_, trace) = m.encode_batch(&x)?;
                let c = Tensor::from_vec(&[2, 8], cot.to_vec())?;
                m.encode_backward(&trace, &c)?;
                m.flatten_gradients()
            },
        };
        let p = model.borrow().flatten_parameters();
        finite_diff_check(&f, &p, probes, STACK_FD_STEP, tol, rng)
    })?);

    cases.push(check_instances("decoder-params", true, instances, stack_tol, &mut rng, |tol, rng| {
        let seed = rng.uniform(0.0, 1e9) as u64;
        let model = RefCell::new(Backbone::<f64>::new(
            ArchPlan::new([1, 32, 32], 8)?,
            Padding::Zero(1),
            seed,
        )?);
        let edata: Vec<f64> = (0..2 * 8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let e = Tensor::from_vec(&[2, 8], edata)?;
        let n = model.borrow().plan().parameter_count();
        let f = ClosureFn {
            input_len: n,
            eval: |v: &[f64]| {
                let mut m = model.borrow_mut();
                m.load_flat_parameters(v)?;
                let (img, _) = m.decode_batch(&e)?;
                Ok(img.into_data())
            },
            vjp: |v: &[f64], cot: &[f64]| {
                let mut m = model.borrow_mut();
                m.load_flat_parameters(v)?;
                m.zero_grads();
                let (_, trace) = m.decode_batch(&e)?;
                let c = Tensor::from_vec(&[2, 1, 32, 32], cot.to_vec())?;
                m.decode_backward(&trace, &c)?;
                m.flatten_gradients()
            },
        };
        let p = model.borrow().flatten_parameters();
        finite_diff_check(&f, &p, probes, STACK_FD_STEP, tol, rng)
    })?);

    Ok(cases)
}
