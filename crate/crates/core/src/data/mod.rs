//! Datasets, preprocessing and non-IID client partitioning.

mod cifar;
mod container;
mod dataset;
mod partition;
mod preprocess;
mod synthetic;

pub use cifar::{load_cifar10, load_raw_images, read_cifar_batch, CIFAR_RECORD_BYTES};
pub use container::{
    read_dataset, read_partition, write_dataset, write_histogram_sidecar, write_partition,
};
pub use dataset::{Dataset, Split};
pub use partition::{
    dirichlet_partition, dirichlet_partition_with_streams, partition_labels, sample_dirichlet,
    Partition, PartitionSpec,
};
pub use preprocess::{preprocess, ChannelStats, Preprocessing, Preprocessor};
pub use synthetic::{synthesize_dataset, SyntheticSpec};
