use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::cohort::CohortTable;
use crate::data::scores::{RawScores, Score};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{GraphConfig, Representation, SubjectFeatures, N_ROIS};
use crate::seed::rng_for;
use crate::tensor::{inner_product, DenseTensor, UnitRankTensor};

/// Planted sparse low-rank regression problem with i.i.d. Gaussian designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub shape: Vec<usize>,
    pub true_rank: usize,
    /// Fraction of nonzero entries in every planted factor.
    pub support_density: f64,
    /// Standard deviation of the additive noise, before rescaling.
    pub noise_std: f64,
    pub seed: u64,
    /// Scale the planted tensor so the noiseless responses span exactly 1.
    pub normalize_signal: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            shape: vec![20, 20, 3],
            true_rank: 1,
            support_density: 0.1,
            noise_std: 0.0,
            seed: 0,
            normalize_signal: true,
        }
    }
}

fn validate_common(n: usize, rank: usize, density: f64, noise: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n_subjects must be positive".into()));
    }
    if rank == 0 {
        return Err(Error::InvalidArgument("true_rank must be positive".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "support_density must lie in (0, 1], got {density}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise_std must be nonnegative, got {noise}"
        )));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.n_subjects, self.true_rank, self.support_density, self.noise_std)?;
        if self.shape.is_empty() || self.shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "shape must have positive dimensions, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// `u = (v − offset) · scale`, the min-max map applied to raw responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub offset: f64,
    pub scale: f64,
}

impl AffineMap {
    /// Map sending `min(values)` to 0 and `max(values)` to 1. Constant
    /// inputs get unit scale.
    pub fn min_max(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        Self {
            offset: lo,
            scale: if span > 0.0 { 1.0 / span } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.offset) * self.scale
    }

    pub fn invert(&self, u: f64) -> f64 {
        u / self.scale + self.offset
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Designs with rescaled responses in [0, 1].
    pub dataset: Dataset,
    /// Planted terms, scaled as used to form the raw responses.
    pub truth: Vec<UnitRankTensor>,
    pub map: AffineMap,
    /// Noiseless `⟨Σ W*_r, X_i⟩`.
    pub signal: Vec<f64>,
    /// Responses before rescaling: signal plus noise.
    pub raw_responses: Vec<f64>,
}

impl SyntheticData {
    /// Standard deviation of the noise in rescaled response units.
    pub fn noise_floor(&self, noise_std: f64) -> f64 {
        noise_std * self.map.scale
    }

    /// Sum of the planted terms.
    pub fn truth_tensor(&self) -> DenseTensor {
        sum_terms(&self.truth, self.dataset.shape())
    }
}

fn sum_terms(terms: &[UnitRankTensor], shape: &[usize]) -> DenseTensor {
    let mut out = DenseTensor::zeros(shape).expect("validated shape");
    for t in terms {
        out.add_assign(&t.materialize()).expect("terms share the shape");
    }
    out
}

/// Draw `rank` terms whose factors each have `⌈density·I_j⌉` standard-normal
/// entries at uniformly sampled positions.
fn plant(shape: &[usize], rank: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<UnitRankTensor> {
    (0..rank)
        .map(|_| {
            let factors = shape
                .iter()
                .map(|&d| {
                    let nnz = ((density * d as f64).ceil() as usize).clamp(1, d);
                    let mut f = vec![0.0; d];
                    let mut idx = sample(rng, d, nnz).into_vec();
                    idx.sort_unstable();
                    for i in idx {
                        let mut v: f64 = rng.sample(StandardNormal);
                        while v == 0.0 {
                            v = rng.sample(StandardNormal);
                        }
                        f[i] = v;
                    }
                    f
                })
                .collect();
            UnitRankTensor::new(factors).expect("finite draws")
        })
        .collect()
}

struct Responses {
    truth: Vec<UnitRankTensor>,
    signal: Vec<f64>,
    raw: Vec<f64>,
    map: AffineMap,
}

fn respond(
    xs: &[&DenseTensor],
    mut truth: Vec<UnitRankTensor>,
    noise_std: f64,
    normalize_signal: bool,
    noise_rng: &mut ChaCha8Rng,
) -> Result<Responses> {
    let mut signal: Vec<f64> = xs
        .par_iter()
        .map(|x| truth.iter().map(|w| inner_product(x, w)).sum::<Result<f64>>())
        .collect::<Result<_>>()?;
    if normalize_signal {
        let span = AffineMap::min_max(&signal).scale;
        if span != 1.0 {
            for w in &mut truth {
                let scaled: Vec<Vec<f64>> = w
                    .factors()
                    .iter()
                    .enumerate()
                    .map(|(j, f)| {
                        if j == 0 {
                            f.iter().map(|v| v * span).collect()
                        } else {
                            f.clone()
                        }
                    })
                    .collect();
                *w = UnitRankTensor::new(scaled)?;
            }
            signal.iter_mut().for_each(|s| *s *= span);
        }
    }
    let noise = Normal::new(0.0, noise_std)
        .map_err(|e| Error::InvalidArgument(format!("noise_std: {e}")))?;
    let raw: Vec<f64> = signal.iter().map(|s| s + noise_rng.sample(noise)).collect();
    let map = AffineMap::min_max(&raw);
    Ok(Responses {
        truth,
        signal,
        raw,
        map,
    })
}

/// Generate a planted dataset: `X_i` entries i.i.d. standard normal,
/// `y_i = ⟨Σ W*_r, X_i⟩ + ε_i`, responses min-max rescaled to [0, 1].
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let truth = plant(
        &cfg.shape,
        cfg.true_rank,
        cfg.support_density,
        &mut rng_for(cfg.seed, &[0]),
    );
    let len: usize = cfg.shape.iter().product();
    let mut x_rng = rng_for(cfg.seed, &[1]);
    let tensors: Vec<DenseTensor> = (0..cfg.n_subjects)
        .map(|_| {
            let v = (0..len).map(|_| x_rng.sample(StandardNormal)).collect();
            DenseTensor::new(cfg.shape.clone(), v)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&DenseTensor> = tensors.iter().collect();
    let r = respond(
        &refs,
        truth,
        cfg.noise_std,
        cfg.normalize_signal,
        &mut rng_for(cfg.seed, &[2]),
    )?;
    let ids = (0..cfg.n_subjects).map(|i| format!("SYN{i:05}")).collect();
    let responses = r.raw.iter().map(|&v| r.map.apply(v)).collect();
    Ok(SyntheticData {
        dataset: Dataset::new(ids, tensors, responses)?,
        truth: r.truth,
        map: r.map,
        signal: r.signal,
        raw_responses: r.raw,
    })
}

/// Synthetic ROI cohort whose response is planted on a graph representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSynthConfig {
    pub n_subjects: usize,
    /// Standard deviation of the i.i.d. Gaussian ROI measures.
    pub feature_scale: f64,
    /// Layout on which the planted coefficient lives.
    pub representation: Representation,
    pub true_rank: usize,
    pub support_density: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub normalize_signal: bool,
}

impl Default for GraphSynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            feature_scale: 0.5,
            representation: Representation::Connectivity(GraphConfig::default()),
            true_rank: 1,
            support_density: 0.1,
            noise_std: 0.05,
            seed: 0,
            normalize_signal: true,
        }
    }
}

impl GraphSynthConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.n_subjects, self.true_rank, self.support_density, self.noise_std)?;
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite()) {
            return Err(Error::InvalidArgument("feature_scale must be positive".into()));
        }
        if let Representation::Connectivity(g) | Representation::Stack(g) = &self.representation {
            g.validate()?;
        }
        Ok(())
    }
}

/// Output of [`generate_graph_cohort`].
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    /// ROI measures with clinical scores derived from the response
    /// (ADAS13 = 85u, MMSE = 30(1 − u), DSS = nearest stage).
    pub table: CohortTable,
    /// Exact rescaled responses in [0, 1].
    pub responses: Vec<f64>,
    pub truth: Vec<UnitRankTensor>,
    pub map: AffineMap,
    pub representation: Representation,
}

impl SyntheticCohort {
    /// Tensors under `representation` paired with the exact responses.
    pub fn dataset(&self, representation: &Representation) -> Result<Dataset> {
        let tensors = self
            .table
            .subjects
            .par_iter()
            .map(|s| representation.build(s))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.table.ids.clone(), tensors, self.responses.clone())
    }

    pub fn noise_floor(&self, noise_std: f64) -> f64 {
        noise_std * self.map.scale
    }
}

/// Draw random ROI measures, build `cfg.representation` and plant a sparse
/// low-rank response on it.
pub fn generate_graph_cohort(cfg: &GraphSynthConfig) -> Result<SyntheticCohort> {
    cfg.validate()?;
    let shape = cfg.representation.shape();
    let truth = plant(
        &shape,
        cfg.true_rank,
        cfg.support_density,
        &mut rng_for(cfg.seed, &[0]),
    );
    let mut f_rng = rng_for(cfg.seed, &[1]);
    let subjects: Vec<SubjectFeatures> = (0..cfg.n_subjects)
        .map(|_| {
            let rows = (0..N_ROIS)
                .map(|_| {
                    let mut r = [0.0; 3];
                    for v in &mut r {
                        *v = cfg.feature_scale * f_rng.sample::<f64, _>(StandardNormal);
                    }
                    r
                })
                .collect();
            SubjectFeatures::new(rows)
        })
        .collect::<Result<_>>()?;
    let tensors = subjects
        .par_iter()
        .map(|s| cfg.representation.build(s))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&DenseTensor> = tensors.iter().collect();
    let r = respond(
        &refs,
        truth,
        cfg.noise_std,
        cfg.normalize_signal,
        &mut rng_for(cfg.seed, &[2]),
    )?;
    let responses: Vec<f64> = r.raw.iter().map(|&v| r.map.apply(v)).collect();
    let scores = responses
        .iter()
        .map(|&u| RawScores {
            dss: Score::Dss.denormalize((4.0 * u).round() / 4.0),
            adas13: Score::Adas13.denormalize(u),
            mmse: Score::Mmse.denormalize(u),
        })
        .collect();
    Ok(SyntheticCohort {
        table: CohortTable {
            ids: (0..cfg.n_subjects).map(|i| format!("SYN{i:05}")).collect(),
            subjects,
            scores,
        },
        responses,
        truth: r.truth,
        map: r.map,
        representation: cfg.representation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: f64, n: usize) -> SynthConfig {
        SynthConfig {
            n_subjects: n,
            shape: vec![6, 5, 3],
            true_rank: 2,
            support_density: 0.4,
            noise_std: noise,
            seed: 17,
            normalize_signal: true,
        }
    }

    #[test]
    fn noiseless_responses_invert_exactly() {
        let s = generate_synthetic(&small(0.0, 50)).unwrap();
        let truth = s.truth_tensor();
        for i in 0..50 {
            let y = s.map.invert(s.dataset.responses()[i]);
            let direct = crate::tensor::inner_product_dense(s.dataset.tensor(i), &truth).unwrap();
            assert!((y - direct).abs() < 1e-12);
        }
        let r = s.dataset.responses();
        assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(r.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert!((r.iter().copied().fold(0.0, f64::max) - 1.0).abs() < 1e-15);
        assert!((s.map.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small(0.1, 30)).unwrap();
        let b = generate_synthetic(&small(0.1, 30)).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.raw_responses, b.raw_responses);
        for i in 0..30 {
            assert_eq!(a.dataset.tensor(i), b.dataset.tensor(i));
        }
        let c = generate_synthetic(&SynthConfig { seed: 18, ..small(0.1, 30) }).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn empirical_noise_matches_config() {
        let cfg = SynthConfig {
            shape: vec![3, 2],
            true_rank: 1,
            support_density: 1.0,
            ..small(0.2, 10_000)
        };
        let s = generate_synthetic(&cfg).unwrap();
        let resid: Vec<f64> = s.raw_responses.iter().zip(&s.signal).map(|(y, f)| y - f).collect();
        let m = resid.iter().sum::<f64>() / resid.len() as f64;
        let sd = (resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (resid.len() - 1) as f64).sqrt();
        assert!((sd - 0.2).abs() <= 0.03 * 0.2, "sd {sd}");
    }

    #[test]
    fn planted_support_sizes() {
        let cfg = SynthConfig {
            shape: vec![20, 20, 3],
            true_rank: 3,
            support_density: 0.1,
            ..small(0.0, 5)
        };
        let s = generate_synthetic(&cfg).unwrap();
        for w in &s.truth {
            let nnz: Vec<usize> = w
                .factors()
                .iter()
                .map(|f| f.iter().filter(|v| **v != 0.0).count())
                .collect();
            assert_eq!(nnz, vec![2, 2, 1]);
        }
        let again = generate_synthetic(&cfg).unwrap();
        assert_eq!(s.truth_tensor(), again.truth_tensor());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SynthConfig { support_density: 0.0, ..small(0.0, 5) },
            SynthConfig { support_density: 1.5, ..small(0.0, 5) },
            SynthConfig { n_subjects: 0, ..small(0.0, 5) },
            SynthConfig { true_rank: 0, ..small(0.0, 5) },
            SynthConfig { shape: vec![3, 0], ..small(0.0, 5) },
            SynthConfig { noise_std: -1.0, ..small(0.0, 5) },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn graph_cohort_is_consistent() {
        let cfg = GraphSynthConfig {
            n_subjects: 12,
            ..GraphSynthConfig::default()
        };
        let c = generate_graph_cohort(&cfg).unwrap();
        assert_eq!(c.table.len(), 12);
        assert_eq!(c.truth[0].shape(), vec![116, 116]);
        let ds = c.dataset(&c.representation).unwrap();
        let truth = sum_terms(&c.truth, &[116, 116]);
        for i in 0..12 {
            let raw = crate::tensor::inner_product_dense(ds.tensor(i), &truth).unwrap();
            let u = c.responses[i];
            assert!((0.0..=1.0).contains(&u));
            // Scores derived from the response normalize back onto it.
            let back = Score::Adas13.normalize(c.table.scores[i].adas13).unwrap();
            assert!((back - u).abs() < 1e-12);
            assert!(raw.is_finite());
        }
        let again = generate_graph_cohort(&cfg).unwrap();
        assert_eq!(again.responses, c.responses);
    }
}
