//! Streaming cross-document coreference by sequential link prediction over
//! incrementally composed candidate clusters.
//!
//! The model code is generic over the scalar type. The aliases below fix it
//! to `f32`, which is what checkpoints store and the command line uses; `f64`
//! is used by the gradient checks.

pub mod bench;
pub mod composer;
pub mod corpus;
pub mod embeddings;
pub mod encoder;
pub mod engine;
pub mod error;
pub mod formats;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod params;
pub mod scalar;
pub mod scorer;
pub mod synth;
pub mod topics;
pub mod trainer;

pub use corpus::{load_corpus, Clustering, Corpus, Document, Mention, MentionKind, Role};
pub use embeddings::{load_embeddings, EmbeddingStore};
pub use engine::{run_corpus, stream_add_document, DocOrder, LinkRecord, RunOptions, ScoreTrace};
pub use error::{Error, Result};
pub use metrics::{b_cubed, ceaf_e, conll_f1, evaluate, muc, CorefReport, MetricOptions, ScoreTriple};
pub use params::Config;
pub use scalar::Scalar;
pub use synth::{generate, generate_with_dev, SynthConfig, SynthData};
pub use trainer::{train, EpochLog, TrainInputs};

pub type Model = params::Model<f32>;
pub type Params = params::ModelParams<f32>;
pub type Clusters = composer::ClusterState<f32>;
pub type Engine = engine::EngineState<f32>;
pub type Step = engine::Step<f32>;
pub type RunOutput = engine::RunOutput<f32>;
pub type TrainOutcome = trainer::TrainOutcome<f32>;
