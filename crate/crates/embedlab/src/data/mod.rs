//! Synthetic corpus generation, dataset file formats, and the embedding
//! store.

mod records;
mod store;
mod world;

pub use records::{read_jsonl, write_jsonl, ClassRecord, PairRecord, ScoredRecord, TripletRecord};
pub use store::EmbeddingStore;
pub use world::{retrieval_fixture, RetrievalFixture, SyntheticWorld, WorldConfig};
