//! Falsifiable checks of the construction on finite windows.

pub mod encoding;
pub mod nesting;
pub mod net;
pub mod patch;
pub mod report;
pub mod repetitivity;

pub use encoding::{encoding_report, EncodingMode, EncodingReport};
pub use nesting::{check_nesting, NestingReport, NestingSpec};
pub use net::{transferred_bound, verify_net_repetitivity, NetRepetitivityReport};
pub use patch::{extract_point_patch, extract_psi_patch, find_patch_translate, search_shift, Patch, PatchContent};
pub use report::{Report, Section};
pub use repetitivity::{
    bound_for_radius, level_for_radius, radii_for_level, repetitivity_bound, verify_mapping_repetitivity,
    RepetitivityReport, SampleSpec,
};
