//! Multi-vector late-interaction page retrieval and a retrieval-augmented
//! document QA harness.
//!
//! Pages and queries are bags of token embeddings scored with MaxSim
//! ([`scoring`]). Pages are searched exactly or through IVF / IVF-PQ
//! inverted files with exact rerank ([`index`]). The [`pipeline`] module
//! wires an embedder, an index and an answer generator together, and
//! [`metrics`] scores the answers.
//!
//! ```
//! use pagelens::{maxsim_score, MultiVecEmbedding};
//!
//! let q = MultiVecEmbedding::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
//! let p = MultiVecEmbedding::from_rows(&[[0.5, 0.5], [2.0, 0.0]]).unwrap();
//! assert_eq!(maxsim_score(q.view(), p.view()).unwrap(), 2.5);
//! ```

pub mod bench;
pub mod cli;
pub mod error;
pub mod index;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod storage;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use index::{
    build_index, IndexConfig, IndexKind, IvfParams, IvfPqParams, PageIndex, SearchParams,
};
pub use scoring::{maxsim_score, score_matrix, top_k};
pub use types::{
    flatten_corpus, CorpusLayout, CorpusManifest, DocumentId, Hit, Hops, Modality,
    MultiVecEmbedding, MultiVecRef, PageLocator, PageRef, QAExample, Query, RetrievalResult, Scope,
};
