//! Grid types, file I/O, geometric preprocessing and mask topology helpers.

mod components;
mod grid;
mod io;
mod resample;
mod vessel12;

pub use components::{
    connected_components, euler_characteristic, fuse_coarse_labels, remove_small_components, topology, Connectivity,
    FusionMode, Topology, FACE_OFFSETS, NEIGHBOR_OFFSETS_26,
};
pub(crate) use components::step;
pub use grid::{linear_index, unravel, voxel_count, BinaryMask, Dims, LabeledComponents, Spacing, VolumeGrid};
pub use io::{
    load_mask, load_volume, read_header, save_volume, volume_paths, Dtype, VolumeData, VolumeHeader, HEADER_SUFFIX, RAW_SUFFIX,
};
pub(crate) use resample::trilinear_at;
pub use resample::{crop, crop_mask, resample_mask_nearest, resample_trilinear};
pub use vessel12::{load_vessel12_points, parse_vessel12_points, points_to_mask, LabeledPoint};
