//! Synthetic heterogeneous datasets: profiles, generation, storage, sampling.

pub mod bodies;
pub mod generate;
pub mod manifest;
pub mod motion;
pub mod profile;
pub mod record;
pub mod sampler;

pub use bodies::{by_name, coordinate_names, t1, t2, BodyModel};
pub use generate::{
    default_data_dir, generate_dataset, generate_profiles, generate_sequence, read_dataset, read_records, record_path,
    resolve_body, sequence_seed, write_dataset, Dataset, DATA_DIR_ENV,
};
pub use manifest::{default_profiles, parse_sequence_id, sequence_id, DatasetManifest, SplitIds, MANIFEST_SCHEMA};
pub use motion::{MotionFamily, MotionRanges, MotionSpec};
pub use profile::DomainProfile;
pub use record::{decode_record, encode_record, read_record, write_record, RECORD_MAGIC};
pub use sampler::{balanced_epoch_sampler, fifty_fifty, single, single_50, subset_dataset};
