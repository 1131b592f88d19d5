//! Polysemy detection from the geometry of word embedding neighborhoods.
//!
//! A word whose vector sits between two usage clusters tends to have a less
//! uniform neighborhood than its neighbors do. This crate measures that
//! uniformity (the *surrounding uniformity*, SU) for words of a pretrained
//! word2vec model and flags words whose SU is an outlier relative to their
//! neighbors (`SU < m - k·σ`).
//!
//! The pipeline, bottom-up:
//!
//! - [`model_io`] loads word2vec text/binary models.
//! - [`vector_ops`] has cosine similarity and set uniformity.
//! - [`neighborhood`] runs the exact nearest-neighbor scan restricted to
//!   the stable (most frequent) words.
//! - [`polysemy`] computes SU values and runs the outlier test.
//! - [`corpus_stats`] counts unigrams and adjacent bigrams in a corpus.
//! - [`evaluation`] compares verdicts against human labels (2x2 confusion
//!   matrix, Yates-corrected χ²).
//! - [`cli`] wires everything into the `polyscope` binary.

pub mod cli;
pub mod corpus_stats;
pub mod evaluation;
pub mod model_io;
pub mod neighborhood;
pub mod polysemy;
pub mod vector_ops;

pub use model_io::{EmbeddingModel, ModelError, ModelFormat};
pub use neighborhood::{Neighbor, NeighborList, SearchConfig, SearchError, StableNeighbors};
pub use polysemy::{Analyzer, BatchReport, TestStatistics, UniformityRecord, Verdict};
pub use vector_ops::{Uniformity, UniformityValue};
