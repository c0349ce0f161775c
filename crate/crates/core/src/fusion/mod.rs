//! Interaction, refinement, coarse-map gating, and decoding.

pub mod decoder;
pub mod hmap;
pub mod rfm;
pub mod uim;

pub use decoder::{decode, Decoder, DecoderOutput};
pub use hmap::{coarse_map, hmap_refine, hmap_refine_with_gate, CoarseMapBundle, CoarseMapParameters, LastConv};
pub use rfm::{rfm_forward, AttentionStage, RfmParameters, RfmState};
pub use uim::{uim, EqualUim, FusionMode, Merge, MultiFusion, Uim, UimBranches};
