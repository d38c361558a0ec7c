//! The four classifier variants over a 6-channel pre/post patch.
//!
//! * `cc`: one convolutional tower over all six channels.
//! * `po`: one tower over the post-image channels 3–5 only.
//! * `ttc`: separate towers for pre (0–2) and post (3–5), concatenated.
//! * `tts`: the same towers, combined as `tower_a(pre) − tower_b(post)`.
//!
//! Every variant ends in the shared head: one convolutional block, two
//! relu fully connected layers and a single sigmoid unit.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tremor_tensor::{read_checkpoint, write_checkpoint, Combine, ParamId, ParamStore, Real, Tape, Tensor, Var};

use crate::derive_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Cc,
    Po,
    Ttc,
    Tts,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cc, Variant::Po, Variant::Ttc, Variant::Tts];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cc => "cc",
            Variant::Po => "po",
            Variant::Ttc => "ttc",
            Variant::Tts => "tts",
        }
    }

    pub fn is_twin(self) -> bool {
        matches!(self, Variant::Ttc | Variant::Tts)
    }

    /// Input channels of each tower.
    pub fn tower_input_channels(self) -> usize {
        match self {
            Variant::Cc => 6,
            _ => 3,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown variant {s:?} (expected cc, po, ttc or tts)")))
    }
}

/// Convolution (same padding, stride 1), relu, then `pool`×`pool` max-pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

impl BlockConfig {
    pub const fn new(filters: usize, kernel: usize, pool: usize) -> Self {
        BlockConfig { filters, kernel, pool }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_size: usize,
    pub tower_blocks: Vec<BlockConfig>,
    pub head_block: BlockConfig,
    pub fc_sizes: [usize; 2],
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale configuration on 64×64 patches.
    pub fn desk(variant: Variant) -> Self {
        ModelConfig {
            variant,
            input_size: 64,
            tower_blocks: vec![BlockConfig::new(16, 5, 2), BlockConfig::new(32, 3, 2)],
            head_block: BlockConfig::new(64, 3, 2),
            fc_sizes: [128, 32],
            seed: 0,
        }
    }

    /// Higher-fidelity configuration on 161×161 patches.
    pub fn fidelity(variant: Variant) -> Self {
        ModelConfig {
            input_size: 161,
            tower_blocks: vec![
                BlockConfig::new(16, 5, 2),
                BlockConfig::new(32, 3, 2),
                BlockConfig::new(32, 3, 2),
            ],
            ..Self::desk(variant)
        }
    }

    /// Small configuration on 32×32 patches for the experiment matrix.
    pub fn compact(variant: Variant) -> Self {
        ModelConfig {
            variant,
            input_size: 32,
            tower_blocks: vec![BlockConfig::new(8, 3, 2), BlockConfig::new(16, 3, 2)],
            head_block: BlockConfig::new(16, 3, 2),
            fc_sizes: [32, 16],
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Checks the layer sizes and returns the spatial size after each
    /// block (towers then head).
    pub fn validate(&self) -> Result<Vec<usize>> {
        if self.input_size == 0 {
            return Err(Error::Config("input_size must be positive".into()));
        }
        if self.fc_sizes.contains(&0) {
            return Err(Error::Config("fc_sizes must be positive".into()));
        }
        let mut size = self.input_size;
        let mut sizes = Vec::new();
        let blocks = self.tower_blocks.iter().enumerate().map(|(i, b)| (format!("tower block {i}"), b));
        for (stage, b) in blocks.chain(std::iter::once(("head block".to_string(), &self.head_block))) {
            if b.filters == 0 || b.pool == 0 {
                return Err(Error::Config(format!("{stage}: filters and pool must be positive")));
            }
            if b.kernel % 2 == 0 {
                return Err(Error::Config(format!("{stage}: kernel {} must be odd", b.kernel)));
            }
            if b.pool > size {
                return Err(Error::Config(format!(
                    "{stage}: pool {} exhausts the {size}×{size} feature map",
                    b.pool
                )));
            }
            size /= b.pool;
            sizes.push(size);
        }
        Ok(sizes)
    }

    /// Channels entering the head block.
    pub fn head_input_channels(&self) -> usize {
        let tower_out = self
            .tower_blocks
            .last()
            .map_or(self.variant.tower_input_channels(), |b| b.filters);
        match self.variant {
            Variant::Ttc => 2 * tower_out,
            _ => tower_out,
        }
    }

    /// Scalar parameter count: `F·C·k² + F` per convolution and `M·N + M`
    /// per fully connected layer.
    pub fn parameter_count(&self) -> Result<usize> {
        let sizes = self.validate()?;
        let conv = |c: usize, b: &BlockConfig| b.filters * c * b.kernel * b.kernel + b.filters;
        let mut tower = 0;
        let mut c = self.variant.tower_input_channels();
        for b in &self.tower_blocks {
            tower += conv(c, b);
            c = b.filters;
        }
        let towers = if self.variant.is_twin() { 2 * tower } else { tower };
        let head = conv(self.head_input_channels(), &self.head_block);
        let flat = self.head_block.filters * sizes.last().unwrap().pow(2);
        let [n1, n2] = self.fc_sizes;
        Ok(towers + head + (n1 * flat + n1) + (n2 * n1 + n2) + (n2 + 1))
    }

    pub fn from_toml(text: &str, location: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    towers: Vec<Vec<Layer>>,
    head: Layer,
    fc1: Layer,
    fc2: Layer,
    out: Layer,
}

/// A configured network and its parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Real = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

fn he_uniform<T: Real>(shape: Vec<usize>, fan_in: usize, seed: u64) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| T::of_f64(rng.random_range(-bound..bound)))
}

impl<T: Real> Model<T> {
    /// Builds the network with seeded He-uniform weights and zero biases.
    ///
    /// Each parameter draws from its own stream derived from the config
    /// seed and the parameter's name, so the two towers are independent.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let sizes = config.validate()?;
        let mut params = ParamStore::new();
        let prefix = config.variant.as_str();
        let add_conv = |params: &mut ParamStore<T>, name: &str, c: usize, b: &BlockConfig| -> Result<Layer> {
            let fan_in = c * b.kernel * b.kernel;
            let w = he_uniform(vec![b.filters, c, b.kernel, b.kernel], fan_in, derive_seed(config.seed, name));
            Ok(Layer {
                weight: params.add(format!("{prefix}.{name}.weight"), w)?,
                bias: params.add(format!("{prefix}.{name}.bias"), Tensor::zeros(vec![b.filters]))?,
            })
        };
        let tower_names: &[&str] = if config.variant.is_twin() {
            &["tower_a", "tower_b"]
        } else {
            &["tower"]
        };
        let mut towers = Vec::new();
        for tower in tower_names {
            let mut c = config.variant.tower_input_channels();
            let mut layers = Vec::new();
            for (i, b) in config.tower_blocks.iter().enumerate() {
                layers.push(add_conv(&mut params, &format!("{tower}.conv{i}"), c, b)?);
                c = b.filters;
            }
            towers.push(layers);
        }
        let head = add_conv(&mut params, "head.conv", config.head_input_channels(), &config.head_block)?;

        let flat = config.head_block.filters * sizes.last().unwrap().pow(2);
        let [n1, n2] = config.fc_sizes;
        let mut add_fc = |name: &str, n_in: usize, n_out: usize| -> Result<Layer> {
            let w = he_uniform(vec![n_out, n_in], n_in, derive_seed(config.seed, name));
            Ok(Layer {
                weight: params.add(format!("{prefix}.{name}.weight"), w)?,
                bias: params.add(format!("{prefix}.{name}.bias"), Tensor::zeros(vec![n_out]))?,
            })
        };
        let fc1 = add_fc("fc1", flat, n1)?;
        let fc2 = add_fc("fc2", n1, n2)?;
        let out = add_fc("out", n2, 1)?;
        Ok(Model {
            config,
            params,
            layout: Layout {
                towers,
                head,
                fc1,
                fc2,
                out,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Same architecture and weights at another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    fn block<'a>(&self, tape: &mut Tape<'a, T>, vars: &[Var], x: Var, layer: Layer, b: &BlockConfig) -> Result<Var> {
        let y = tape.conv2d(x, vars[layer.weight.index()], vars[layer.bias.index()], 1, b.kernel / 2)?;
        let y = tape.relu(y);
        Ok(if b.pool > 1 { tape.max_pool2d(y, b.pool, b.pool)? } else { y })
    }

    fn tower<'a>(&self, tape: &mut Tape<'a, T>, vars: &[Var], x: Var, tower: usize) -> Result<Var> {
        let mut x = x;
        for (layer, b) in self.layout.towers[tower].iter().zip(&self.config.tower_blocks) {
            x = self.block(tape, vars, x, *layer, b)?;
        }
        Ok(x)
    }

    /// Combined tower features entering the head, shape `[C, H, W]`.
    pub fn features<'a>(&self, tape: &mut Tape<'a, T>, vars: &[Var], input: Var) -> Result<Var> {
        let s = self.config.input_size;
        let shape = tape.shape(input);
        if shape != [6, s, s] {
            return Err(tremor_tensor::TensorError::Dimension {
                op: "model",
                axis: "input".into(),
                expected: 6 * s * s,
                actual: shape.iter().product(),
            }
            .into());
        }
        match self.config.variant {
            Variant::Cc => self.tower(tape, vars, input, 0),
            Variant::Po => {
                let post = tape.slice_channels(input, 3..6)?;
                self.tower(tape, vars, post, 0)
            }
            Variant::Ttc | Variant::Tts => {
                let pre = tape.slice_channels(input, 0..3)?;
                let post = tape.slice_channels(input, 3..6)?;
                let a = self.tower(tape, vars, pre, 0)?;
                let b = self.tower(tape, vars, post, 1)?;
                let mode = if self.config.variant == Variant::Ttc {
                    Combine::Concat
                } else {
                    Combine::Subtract
                };
                Ok(tape.combine(a, b, mode)?)
            }
        }
    }

    /// Records the forward pass on `tape` and returns the probability as a
    /// one-element tensor. `vars` must come from `tape.params(self.params())`.
    pub fn forward_with<'a>(&self, tape: &mut Tape<'a, T>, vars: &[Var], input: Var) -> Result<Var> {
        let l = &self.layout;
        let features = self.features(tape, vars, input)?;
        let h = self.block(tape, vars, features, l.head, &self.config.head_block)?;
        let h = tape.flatten(h)?;
        let fc = |tape: &mut Tape<'a, T>, x: Var, layer: Layer| tape.linear(x, vars[layer.weight.index()], vars[layer.bias.index()]);
        let h = fc(tape, h, l.fc1)?;
        let h = tape.relu(h);
        let h = fc(tape, h, l.fc2)?;
        let h = tape.relu(h);
        let z = fc(tape, h, l.out)?;
        Ok(tape.sigmoid(z))
    }

    /// Damage probability of one `[6, S, S]` patch.
    pub fn predict(&self, patch: &Tensor<T>) -> Result<T> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.ids().map(|id| tape.constant_ref(self.params.value(id))).collect();
        let x = tape.constant_ref(patch);
        let p = self.forward_with(&mut tape, &vars, x)?;
        Ok(tape.value(p).item().expect("single output unit"))
    }
}

impl Model<f32> {
    /// Writes the weights (TLW1, names prefixed by the variant) and the
    /// config as `<path>.toml`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        write_checkpoint(&self.params, &mut out)?;
        out.flush().map_err(|e| Error::io(path, e))?;
        let cfg_path = config_path(path);
        std::fs::write(&cfg_path, self.config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
        Ok(())
    }

    /// Loads a checkpoint written by [`Model::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let cfg_path = config_path(path);
        for p in [path, cfg_path.as_path()] {
            if !p.exists() {
                return Err(Error::MissingFile(p.to_path_buf()));
            }
        }
        let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config = ModelConfig::from_toml(&text, &cfg_path.display().to_string())?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let values = read_checkpoint(BufReader::new(file))?;
        let mut model = Model::new(config)?;
        model.params.load_values(values)?;
        Ok(model)
    }
}

pub fn config_path(checkpoint: &Path) -> std::path::PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".toml");
    name.into()
}

/// A TTC model computing exactly what `tts` computes.
///
/// The towers and fully connected layers are copied; the head kernel `K`
/// over the subtracted features becomes `[K | −K]` over the concatenated
/// ones, so `[K | −K] ⋆ [a; b] = K ⋆ (a − b)`.
pub fn ttc_emulation_init<T: Real>(tts: &Model<T>) -> Result<Model<T>> {
    if tts.variant() != Variant::Tts {
        return Err(Error::Usage(format!("emulation needs a tts model, got {}", tts.variant())));
    }
    let mut ttc = Model::<T>::new(tts.config.clone().with_variant(Variant::Ttc))?;
    for p in tts.params.iter() {
        let suffix = p.name.strip_prefix("tts.").expect("tts parameter prefix");
        let id = ttc.params.find(&format!("ttc.{suffix}")).expect("same layer names");
        let value = if suffix == "head.conv.weight" {
            let [f, c, kh, kw] = p.value.shape().try_into().expect("rank-4 kernel");
            let k = p.value.data();
            Tensor::from_fn(vec![f, 2 * c, kh, kw], |i| {
                let (fi, rest) = (i / (2 * c * kh * kw), i % (2 * c * kh * kw));
                let (ci, r) = (rest / (kh * kw), rest % (kh * kw));
                if ci < c {
                    k[(fi * c + ci) * kh * kw + r]
                } else {
                    -k[(fi * c + ci - c) * kh * kw + r]
                }
            })
        } else {
            p.value.clone()
        };
        *ttc.params.value_mut(id) = value;
    }
    Ok(ttc)
}
