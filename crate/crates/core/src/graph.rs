//! Per-subject tensor representations built from ROI × modality features.
//!
//! Three layouts are supported: the raw 116×3 feature matrix, a 116×116 kNN
//! connectivity matrix over per-ROI 3-vectors, and a 116×116×3 stack of
//! per-modality connectivity matrices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Number of AAL regions.
pub const N_ROIS: usize = 116;

/// Imaging modalities in their fixed axis order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "VBM")]
    Vbm,
    #[serde(rename = "FDG")]
    Fdg,
    #[serde(rename = "AV45")]
    Av45,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Vbm, Modality::Fdg, Modality::Av45];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Vbm => "VBM",
            Modality::Fdg => "FDG",
            Modality::Av45 => "AV45",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One subject's ROI-level measures: 116 rows (AAL order) × 3 modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFeatures {
    rows: Vec<[f64; 3]>,
}

impl SubjectFeatures {
    pub fn new(rows: Vec<[f64; 3]>) -> Result<Self> {
        if rows.len() != N_ROIS {
            return Err(Error::InvalidArgument(format!(
                "expected {N_ROIS} ROI rows, got {}",
                rows.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("ROI features must be finite".into()));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }

    pub fn value(&self, roi: usize, modality: Modality) -> f64 {
        self.rows[roi][modality as usize]
    }

    fn column(&self, modality: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[modality]).collect()
    }
}

/// Parameters of the kNN Gaussian graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub k: usize,
    pub sigma: f64,
    /// z-score each modality column across ROIs before measuring distances.
    #[serde(default)]
    pub standardize: bool,
}

impl GraphConfig {
    pub fn new(k: usize, sigma: f64) -> Result<Self> {
        let cfg = Self {
            k,
            sigma,
            standardize: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=N_ROIS).contains(&self.k) {
            return Err(Error::InvalidArgument(format!(
                "k must lie in [1, {N_ROIS}], got {}",
                self.k
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn fully_connected(&self) -> bool {
        self.k == N_ROIS
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k: N_ROIS,
            sigma: 1.0,
            standardize: false,
        }
    }
}

/// `exp(-‖a - b‖² / σ²)`.
pub fn gaussian_similarity(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    (-squared_distance(a, b) / (sigma * sigma)).exp()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The 116×3 feature tensor.
pub fn build_concat(s: &SubjectFeatures) -> DenseTensor {
    let values = s.rows.iter().flat_map(|r| r.iter().copied()).collect();
    DenseTensor::new(vec![N_ROIS, 3], values).expect("116x3 features are validated")
}

/// Symmetric kNN Gaussian graph over an arbitrary point set.
///
/// Each point keeps its `min(k, n - 1)` nearest other points (ties go to the
/// lower index). The edge set is the union over both directions, edges carry
/// the Gaussian similarity, and the diagonal is 1.
pub fn knn_connectivity(points: &[Vec<f64>], k: usize, sigma: f64) -> Result<DenseTensor> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must lie in [1, {n}], got {k}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let keep = k.min(n - 1);
    let mut adj = vec![false; n * n];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(&points[i], &points[j]), j)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in order.iter().take(keep) {
            adj[i * n + j] = true;
            adj[j * n + i] = true;
        }
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in (i + 1)..n {
            if adj[i * n + j] {
                let s = gaussian_similarity(&points[i], &points[j], sigma);
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
    }
    DenseTensor::new(vec![n, n], values)
}

fn zscore(col: &mut [f64]) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in col.iter_mut() {
        *v -= mean;
        if sd > 0.0 {
            *v /= sd;
        }
    }
}

fn modality_columns(s: &SubjectFeatures, standardize: bool) -> Vec<Vec<f64>> {
    (0..3)
        .map(|m| {
            let mut c = s.column(m);
            if standardize {
                zscore(&mut c);
            }
            c
        })
        .collect()
}

/// The 116×116 connectivity matrix with `r_i` the 3-vector of ROI `i`.
pub fn build_connectivity(s: &SubjectFeatures, cfg: &GraphConfig) -> Result<DenseTensor> {
    cfg.validate()?;
    let cols = modality_columns(s, cfg.standardize);
    let points: Vec<Vec<f64>> = (0..N_ROIS)
        .map(|i| vec![cols[0][i], cols[1][i], cols[2][i]])
        .collect();
    knn_connectivity(&points, cfg.k, cfg.sigma)
}

/// The 116×116×3 stack; slice `[:, :, m]` is the graph over modality `m` alone.
pub fn build_connectivity_stack(s: &SubjectFeatures, cfg: &GraphConfig) -> Result<DenseTensor> {
    cfg.validate()?;
    let cols = modality_columns(s, cfg.standardize);
    let mut values = vec![0.0; N_ROIS * N_ROIS * 3];
    for (m, col) in cols.iter().enumerate() {
        let points: Vec<Vec<f64>> = col.iter().map(|&v| vec![v]).collect();
        let slice = knn_connectivity(&points, cfg.k, cfg.sigma)?;
        for (ij, v) in slice.values().iter().enumerate() {
            values[ij * 3 + m] = *v;
        }
    }
    DenseTensor::new(vec![N_ROIS, N_ROIS, 3], values)
}

/// Which of the three tensor layouts to build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    Concat,
    Connectivity(GraphConfig),
    Stack(GraphConfig),
}

impl Representation {
    /// Parse a layout name; `k`/`sigma` are ignored for `concat`.
    pub fn parse(name: &str, graph: GraphConfig) -> Result<Self> {
        match name {
            "concat" => Ok(Representation::Concat),
            "connectivity" => Ok(Representation::Connectivity(graph)),
            "stack" => Ok(Representation::Stack(graph)),
            other => Err(Error::InvalidArgument(format!(
                "unknown representation `{other}` (expected concat, connectivity or stack)"
            ))),
        }
    }

    pub fn build(&self, s: &SubjectFeatures) -> Result<DenseTensor> {
        match self {
            Representation::Concat => Ok(build_concat(s)),
            Representation::Connectivity(cfg) => build_connectivity(s, cfg),
            Representation::Stack(cfg) => build_connectivity_stack(s, cfg),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Representation::Concat => vec![N_ROIS, 3],
            Representation::Connectivity(_) => vec![N_ROIS, N_ROIS],
            Representation::Stack(_) => vec![N_ROIS, N_ROIS, 3],
        }
    }

    /// Mode indexing modalities, if the layout has one.
    pub fn modality_mode(&self) -> Option<usize> {
        match self {
            Representation::Concat => Some(1),
            Representation::Connectivity(_) => None,
            Representation::Stack(_) => Some(2),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Representation::Concat => "116x3".into(),
            Representation::Connectivity(c) => format!("116x116(k={})", c.k),
            Representation::Stack(c) => format!("116x116x3(k={})", c.k),
        }
    }

    pub fn with_k(&self, k: usize) -> Self {
        match *self {
            Representation::Concat => Representation::Concat,
            Representation::Connectivity(c) => Representation::Connectivity(GraphConfig { k, ..c }),
            Representation::Stack(c) => Representation::Stack(GraphConfig { k, ..c }),
        }
    }
}
