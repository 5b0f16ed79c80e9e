//! Mutation–drug association scans on predicted responses and
//! extreme-responder profiling.

pub mod profile;
pub mod scan;

pub use profile::{
    extreme_group_size, extreme_groups, profile_groups, GroupProfile, ProfileOptions,
};
pub use scan::{
    pan_cancer_scan, per_cancer_scan, AssociationRecord, CancerSummary, Direction, GeneSummary,
    ScanResult, ScanThresholds, TestedPair, PAN_CANCER,
};
