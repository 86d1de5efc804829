//! Evaluation metrics for predicted saliency maps and scanpaths.

pub mod saliency;
pub mod scanpath;

pub use saliency::{auc_borji, auc_judd, cc, kld_metric, nss, sim, FixationSet, SaliencyScores};
pub use scanpath::{
    align, congruency, multimatch, nss_scanpath, to_saccades, MultiMatchScores, SaccadeVector, ScanpathScores,
};
