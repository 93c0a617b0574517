//! Synthetic sources, oracle-labelled CTU databases and splitting.

mod build;
mod record;
mod split;
mod synth;

pub use build::{
    build_db, build_db_files, build_db_with, manifest_path, BlockInput, ClassBalance, DatabaseManifest, Source, SourceEntry, SplitKind,
    MANIFEST_VERSION,
};
pub use record::{
    load_records, read_records, save_records, write_records, CtuSample, BLOCK_BYTES, CPHS_MAGIC, CPHS_VERSION,
    RECORD_BYTES,
};
pub use split::{select_split, split_db};
pub use synth::{gen_sequence, gen_still, gen_synthetic, SourceKind, SynthConfig};
