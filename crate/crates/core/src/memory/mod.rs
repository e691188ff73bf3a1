//! Frame bank, incremental point-cloud cache, and geometry-condition assembly.

mod bank;
mod cache;
pub mod ggm;

pub use bank::{
    bank_insert, BankEntry, BankManifest, Frame, ImageRef, ManifestEntry, MemoryBank, SourceTag,
    DEFAULT_BANK_STRIDE,
};
pub use cache::{align_overlap, cache_update, Cache3D, CacheManifest};
pub use ggm::{
    assemble_ggm, ggm_train_augment, AugmentRecord, Augmentation, AugmentedCloud, GgmCondition,
};
