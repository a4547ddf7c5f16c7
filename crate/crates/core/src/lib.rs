//! Spoofing countermeasure toolkit for noisy conditions.
//!
//! The pipeline: corrupt clean speech with additive noise at an exact
//! A-weighted, speech-active SNR ([`noise`]); extract magnitude and phase
//! spectral features ([`stft`], [`features`]); score utterances with a
//! one-hidden-layer MLP that averages frame posteriors ([`mlp`]); fuse
//! per-feature scores and report equal error rates ([`eval`]). [`synth`]
//! generates a labelled stand-in corpus so everything runs without licensed
//! data.

pub mod audio_io;
pub mod eval;
pub mod features;
pub mod mlp;
pub mod noise;
pub mod stft;
pub mod synth;

pub use audio_io::{read_wav, write_wav, AudioClip, WavError};
pub use eval::{eer, eer_table, fuse, GroupBy, ScoreSet, TrialScore, Truth};
pub use features::{FeatureKind, FeatureMatrix, LpcConfig, MgdConfig};
pub use mlp::{score_utterance, train, Dataset, MlpModel, TrainConfig};
pub use stft::{princ, ComplexSpectrogram, StftConfig};
pub use synth::{gen_corpus, gen_utterance, CorpusSpec};
