use std::collections::HashMap;
use std::sync::OnceLock;

use crate::graph::{Modality, N_ROIS};

const AAL116: &str = include_str!("../../resources/aal116.txt");

/// The 116 AAL region labels in atlas order (index 0 is region 1).
pub fn aal116_labels() -> &'static [&'static str] {
    static LABELS: OnceLock<Vec<&'static str>> = OnceLock::new();
    LABELS.get_or_init(|| {
        let labels: Vec<&'static str> = AAL116
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        assert_eq!(labels.len(), N_ROIS, "bundled AAL label list is corrupt");
        labels
    })
}

/// Zero-based atlas position of `label`.
pub fn roi_index(label: &str) -> Option<usize> {
    static INDEX: OnceLock<HashMap<&'static str, usize>> = OnceLock::new();
    INDEX
        .get_or_init(|| {
            aal116_labels()
                .iter()
                .enumerate()
                .map(|(i, &l)| (l, i))
                .collect()
        })
        .get(label)
        .copied()
}

/// CSV column name of one ROI measure, e.g. `VBM_Hippocampus_L`.
pub fn feature_column(modality: Modality, roi: usize) -> String {
    format!("{}_{}", modality.name(), aal116_labels()[roi])
}
