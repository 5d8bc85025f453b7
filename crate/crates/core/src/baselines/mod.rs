//! Reference decoders: exact matching, brute-force maximum likelihood, lookup.

pub mod graph;
pub mod matching;
pub mod ml;

pub use graph::{build_decoding_graph, reweight_with_saliency, DecodingGraph, Edge, EdgeSupport};
pub use matching::{mwpm_decode, MatchResult, MwpmDecoder, MwpmOutput, MAX_EXACT_DEFECTS};
pub use ml::{build_lookup, ml_decode_bruteforce, LookupDecoder, MlOracle, MlResult};
