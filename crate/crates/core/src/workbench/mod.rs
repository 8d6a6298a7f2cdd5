//! Desk-scale experiment plumbing: synthetic HMM corpora, frame splicing,
//! generated denominator lattices, and the on-disk formats used by the CLI.

mod corpus;
mod corpus_io;
mod lattice_gen;
mod splice;
pub mod tensor_file;

pub use corpus::{gen_corpus, AffineTransform, Corpus, CorpusParams, CorpusSpec, Split, Utterance};
pub use corpus_io::{
    load_soft_targets, read_corpus_info, read_split, save_soft_targets, write_corpus,
    write_lattices, CorpusInfo,
};
pub use lattice_gen::build_lattice;
pub use splice::{splice, spliced_dim};
pub use tensor_file::{load_model, load_model_with_metadata, save_model, save_model_with_metadata};
