//! Model configuration, trainable tensors and checkpoint persistence.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::MentionKind;
use crate::error::{Error, Result};
use crate::linalg::Tensor;
use crate::scalar::Scalar;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub d_tok: usize,
    /// Mention space, always `2 * d_tok`.
    pub d_m: usize,
    /// Hidden size per direction of the argument encoder.
    pub d_arg: usize,
    /// Argument-coreference feature embedding size.
    pub d_f: usize,
    /// Number of cosine perspectives.
    pub k: usize,
    /// Perspective projection size.
    pub d_p: usize,
    pub mode: MentionKind,
    pub k_topics: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Ablation switch: when false the argument-coreference block is held at zero.
    #[serde(default = "default_true")]
    pub use_arg_feature: bool,
    /// Reshuffle training documents every epoch instead of doc_id order.
    #[serde(default)]
    pub shuffle_documents: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config::new(MentionKind::Entity, 768)
    }
}

impl Config {
    pub fn new(mode: MentionKind, d_tok: usize) -> Self {
        Config {
            d_tok,
            d_m: 2 * d_tok,
            d_arg: 128,
            d_f: 50,
            k: match mode {
                MentionKind::Entity => 1,
                MentionKind::Event => 3,
            },
            d_p: 50,
            mode,
            k_topics: 20,
            learning_rate: 1e-3,
            clip_norm: 30.0,
            max_epochs: 80,
            patience: 20,
            seed: 0,
            use_arg_feature: true,
            shuffle_documents: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_tok", self.d_tok),
            ("d_arg", self.d_arg),
            ("d_f", self.d_f),
            ("k", self.k),
            ("d_p", self.d_p),
            ("k_topics", self.k_topics),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.d_m != 2 * self.d_tok {
            return Err(Error::InvalidConfig(format!(
                "d_m = {} but 2 * d_tok = {}",
                self.d_m,
                2 * self.d_tok
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate and clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn event_mode(&self) -> bool {
        self.mode == MentionKind::Event
    }

    /// Width of the feature vector fed to the output layer.
    pub fn feature_dim(&self) -> usize {
        2 * self.d_m + 1 + self.k + if self.event_mode() { self.d_f } else { 0 }
    }

    /// `[h_span; h_args]` width entering the mention affine.
    pub fn mention_in_dim(&self) -> usize {
        self.d_m + 2 * self.d_arg
    }
}

/// Every trainable tensor, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    MentionW,
    MentionB,
    ComposeWx,
    ComposeWCls,
    ComposeB,
    Perspective,
    LstmFwdIh,
    LstmFwdHh,
    LstmFwdB,
    LstmBwdIh,
    LstmBwdHh,
    LstmBwdB,
    ArgFeatEmb,
    OutW,
    OutB,
}

impl ParamId {
    pub const ALL: [ParamId; 15] = [
        ParamId::MentionW,
        ParamId::MentionB,
        ParamId::ComposeWx,
        ParamId::ComposeWCls,
        ParamId::ComposeB,
        ParamId::Perspective,
        ParamId::LstmFwdIh,
        ParamId::LstmFwdHh,
        ParamId::LstmFwdB,
        ParamId::LstmBwdIh,
        ParamId::LstmBwdHh,
        ParamId::LstmBwdB,
        ParamId::ArgFeatEmb,
        ParamId::OutW,
        ParamId::OutB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamId::MentionW => "mention.w",
            ParamId::MentionB => "mention.b",
            ParamId::ComposeWx => "compose.w_x",
            ParamId::ComposeWCls => "compose.w_cls",
            ParamId::ComposeB => "compose.b",
            ParamId::Perspective => "perspective.w",
            ParamId::LstmFwdIh => "args.fwd.w_ih",
            ParamId::LstmFwdHh => "args.fwd.w_hh",
            ParamId::LstmFwdB => "args.fwd.b",
            ParamId::LstmBwdIh => "args.bwd.w_ih",
            ParamId::LstmBwdHh => "args.bwd.w_hh",
            ParamId::LstmBwdB => "args.bwd.b",
            ParamId::ArgFeatEmb => "arg_feature.emb",
            ParamId::OutW => "out.w",
            ParamId::OutB => "out.b",
        }
    }

    /// (rows, cols, fan_in)
    fn layout(self, c: &Config) -> (usize, usize, usize) {
        let h4 = 4 * c.d_arg;
        match self {
            ParamId::MentionW => (c.d_m, c.mention_in_dim(), c.mention_in_dim()),
            ParamId::MentionB => (c.d_m, 1, c.mention_in_dim()),
            ParamId::ComposeWx | ParamId::ComposeWCls => (c.d_m, c.d_m, c.d_m),
            ParamId::ComposeB => (c.d_m, 1, c.d_m),
            ParamId::Perspective => (c.k * c.d_p, c.d_m, c.d_m),
            ParamId::LstmFwdIh | ParamId::LstmBwdIh => (h4, c.d_m, c.d_m),
            ParamId::LstmFwdHh | ParamId::LstmBwdHh => (h4, c.d_arg, c.d_arg),
            ParamId::LstmFwdB | ParamId::LstmBwdB => (h4, 1, c.d_m),
            ParamId::ArgFeatEmb => (2, c.d_f, c.d_f),
            ParamId::OutW => (1, c.feature_dim(), c.feature_dim()),
            ParamId::OutB => (1, 1, c.feature_dim()),
        }
    }

    pub fn shape(self, c: &Config) -> (usize, usize) {
        let (r, k, _) = self.layout(c);
        (r, k)
    }
}

/// All trainable tensors. The same container holds gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &Config) -> Self {
        ModelParams {
            tensors: ParamId::ALL
                .iter()
                .map(|p| {
                    let (r, c) = p.shape(config);
                    Tensor::zeros(r, c)
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a seeded stream.
    pub fn init(config: &Config, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        for id in ParamId::ALL {
            let (_, _, fan_in) = id.layout(config);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in p.tensors[id.index()].data.iter_mut() {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
        p
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        ParamId::ALL.iter().copied().zip(self.tensors.iter())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn check_shapes(&self, config: &Config) -> Result<()> {
        for (id, t) in self.iter() {
            let want = id.shape(config);
            if (t.rows, t.cols) != want {
                return Err(Error::ShapeMismatch(format!(
                    "{}: {}x{} vs config {}x{}",
                    id.name(),
                    t.rows,
                    t.cols,
                    want.0,
                    want.1
                )));
            }
        }
        Ok(())
    }

    /// Global L2 norm over every tensor.
    pub fn global_norm(&self) -> T {
        self.tensors.iter().map(Tensor::sq_norm).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= s;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    rows: t.rows,
                    cols: t.cols,
                    data: t.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Parameters together with the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: Config,
    pub params: ModelParams<T>,
}

impl<T: Scalar> Model<T> {
    pub fn init(config: Config) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, config.seed);
        Ok(Model { config, params })
    }

    pub fn new(config: Config, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Model { config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.params, &self.config, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, config) = load_checkpoint(path)?;
        Ok(Model { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: Config,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// In f32 elements from the start of the blob.
    offset: usize,
}

/// u32 manifest length, JSON manifest, then one little-endian f32 blob.
pub fn checkpoint_bytes<T: Scalar>(params: &ModelParams<T>, config: &Config) -> Result<Vec<u8>> {
    params.check_shapes(config)?;
    let mut offset = 0;
    let tensors = params
        .iter()
        .map(|(id, t)| {
            let e = TensorEntry {
                name: id.name().to_string(),
                rows: t.rows,
                cols: t.cols,
                offset,
            };
            offset += t.len();
            e
        })
        .collect();
    let manifest = serde_json::to_vec(&Manifest {
        config: config.clone(),
        tensors,
    })
    .map_err(|e| Error::ManifestCorrupt(e.to_string()))?;
    let mut out = Vec::with_capacity(4 + manifest.len() + 4 * offset);
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    for (_, t) in params.iter() {
        for v in &t.data {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(ModelParams<T>, Config)> {
    if bytes.len() < 4 {
        return Err(Error::ManifestCorrupt("missing manifest length".into()));
    }
    let len = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let manifest_bytes = bytes
        .get(4..4 + len)
        .ok_or_else(|| Error::ManifestCorrupt("manifest truncated".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(manifest_bytes).map_err(|e| Error::ManifestCorrupt(e.to_string()))?;
    let config = manifest.config;
    config
        .validate()
        .map_err(|e| Error::ManifestCorrupt(e.to_string()))?;
    if manifest.tensors.len() != ParamId::ALL.len() {
        return Err(Error::ShapeMismatch(format!(
            "manifest lists {} tensors, model has {}",
            manifest.tensors.len(),
            ParamId::ALL.len()
        )));
    }
    let blob = &bytes[4 + len..];
    if blob.len() % 4 != 0 {
        return Err(Error::ManifestCorrupt("blob length not a multiple of 4".into()));
    }
    let mut params = ModelParams::<T>::zeros(&config);
    for (id, entry) in ParamId::ALL.iter().zip(&manifest.tensors) {
        let want = id.shape(&config);
        if entry.name != id.name() || (entry.rows, entry.cols) != want {
            return Err(Error::ShapeMismatch(format!(
                "tensor {} {}x{} where {} {}x{} expected",
                entry.name,
                entry.rows,
                entry.cols,
                id.name(),
                want.0,
                want.1
            )));
        }
        let n = entry.rows * entry.cols;
        let raw = blob
            .get(entry.offset * 4..(entry.offset + n) * 4)
            .ok_or_else(|| Error::ManifestCorrupt(format!("blob too short for {}", entry.name)))?;
        let t = params.get_mut(*id);
        for (dst, c) in t.data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = T::of_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        }
    }
    Ok((params, config))
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, config: &Config, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(params, config)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(ModelParams<T>, Config)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
