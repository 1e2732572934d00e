//! Dense and rank-1 tensor algebra.
//!
//! Dense tensors are stored row-major (last index fastest). A [`UnitRankTensor`]
//! keeps its CP factors and is only materialized on request; inner products and
//! mode contractions against it are computed factor by factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute floor used by [`rel_close`].
pub const ABS_FLOOR: f64 = 1e-12;

/// `|a - b| <= rel * max(|a|, |b|, ABS_FLOOR)`.
pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(ABS_FLOOR)
}

/// An order-M array of finite reals in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDense")]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDense {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<RawDense> for DenseTensor {
    type Error = Error;

    fn try_from(raw: RawDense) -> Result<Self> {
        DenseTensor::new(raw.shape, raw.values)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidTensor("tensor order must be at least 1".into()));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::InvalidTensor(format!("dimension {pos} has size 0")));
    }
    Ok(())
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!("non-finite value at offset {pos}")));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            values: vec![0.0; n],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.offset(index)]
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &DenseTensor) -> Result<()> {
        ensure_same_shape(&self.shape, &other.shape)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    /// Elementwise `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &DenseTensor) -> Result<()> {
        ensure_same_shape(&self.shape, &other.shape)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

fn ensure_same_shape(expected: &[usize], found: &[usize]) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch {
            expected: expected.to_vec(),
            found: found.to_vec(),
        });
    }
    Ok(())
}

/// A CP rank-1 tensor `w(1) ⊗ w(2) ⊗ … ⊗ w(M)` held by its factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawUnitRank")]
pub struct UnitRankTensor {
    factors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawUnitRank {
    factors: Vec<Vec<f64>>,
}

impl TryFrom<RawUnitRank> for UnitRankTensor {
    type Error = Error;

    fn try_from(raw: RawUnitRank) -> Result<Self> {
        UnitRankTensor::new(raw.factors)
    }
}

impl UnitRankTensor {
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self> {
        let shape: Vec<usize> = factors.iter().map(Vec::len).collect();
        check_shape(&shape)?;
        for (j, f) in factors.iter().enumerate() {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTensor(format!("factor {j} has a non-finite entry")));
            }
        }
        Ok(Self { factors })
    }

    /// The all-zero component of the given shape.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        Ok(Self {
            factors: shape.iter().map(|&d| vec![0.0; d]).collect(),
        })
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> &[f64] {
        &self.factors[mode]
    }

    pub(crate) fn factor_mut(&mut self, mode: usize) -> &mut Vec<f64> {
        &mut self.factors[mode]
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Vec::len).collect()
    }

    /// True when some factor is identically zero.
    pub fn is_zero(&self) -> bool {
        self.factors.iter().any(|f| f.iter().all(|&v| v == 0.0))
    }

    pub fn materialize(&self) -> DenseTensor {
        let values = outer_product(&self.factors);
        DenseTensor {
            shape: self.shape(),
            values,
        }
    }

    /// `‖W‖₁ = Π_j ‖w(j)‖₁`.
    pub fn l1_norm(&self) -> f64 {
        self.factors.iter().map(|f| l1(f)).product()
    }

    /// Rescale into canonical form: every factor after the first has unit
    /// ℓ2 norm with a nonnegative largest-magnitude entry, and the first
    /// factor carries the overall scale and sign. A zero tensor becomes all
    /// zero factors.
    pub fn canonicalize(&mut self) {
        if self.is_zero() {
            for f in &mut self.factors {
                f.iter_mut().for_each(|v| *v = 0.0);
            }
            return;
        }
        let mut carry = 1.0;
        for f in self.factors.iter_mut().skip(1) {
            let norm = l2(f);
            let pivot = f
                .iter()
                .copied()
                .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
            let scale = if pivot < 0.0 { -norm } else { norm };
            f.iter_mut().for_each(|v| *v /= scale);
            carry *= scale;
        }
        self.factors[0].iter_mut().for_each(|v| *v *= carry);
    }
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major outer product of a list of vectors. The empty list gives `[1.0]`.
fn outer_product(factors: &[Vec<f64>]) -> Vec<f64> {
    factors.iter().fold(vec![1.0], |acc, f| {
        let mut out = Vec::with_capacity(acc.len() * f.len());
        for &a in &acc {
            out.extend(f.iter().map(|&b| a * b));
        }
        out
    })
}

fn check_compatible(x: &DenseTensor, w: &UnitRankTensor) -> Result<()> {
    let ws = w.shape();
    if x.shape() != ws.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            found: ws,
        });
    }
    Ok(())
}

/// Contract `x` against every factor of `w` except the one at `mode`.
///
/// Returns `z` with `z[i] = ⟨x[.., i, ..], ⊗_{k≠mode} w(k)⟩`, so that
/// `dot(w(mode), z) == inner_product(x, w)`.
pub fn contract_except(x: &DenseTensor, w: &UnitRankTensor, mode: usize) -> Result<Vec<f64>> {
    if mode >= x.order() {
        return Err(Error::InvalidArgument(format!(
            "mode {mode} out of range for order {}",
            x.order()
        )));
    }
    check_compatible(x, w)?;
    let (before, after) = w.factors.split_at(mode);
    let after = &after[1..];
    Ok(contract_with(x.values(), x.shape()[mode], &outer_product(before), &outer_product(after)))
}

/// `z[i] = Σ_α Σ_β lead[α] · values[(α·dim + i)·|trail| + β] · trail[β]`.
pub(crate) fn contract_with(values: &[f64], dim: usize, lead: &[f64], trail: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; dim];
    let trail_nz: Vec<(usize, f64)> = trail
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, v)| v != 0.0)
        .collect();
    if trail_nz.is_empty() {
        return z;
    }
    let block = trail.len();
    let dense_trail = trail_nz.len() == block;
    for (alpha, &a) in lead.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let base = alpha * dim;
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &values[(base + i) * block..(base + i + 1) * block];
            let s = if dense_trail {
                dot(row, trail)
            } else {
                trail_nz.iter().map(|&(b, v)| row[b] * v).sum()
            };
            *zi += a * s;
        }
    }
    z
}

/// `⟨materialize(w), x⟩`, computed without materializing `w`.
pub fn inner_product(x: &DenseTensor, w: &UnitRankTensor) -> Result<f64> {
    let last = x.order() - 1;
    let z = contract_except(x, w, last)?;
    Ok(dot(w.factor(last), &z))
}

/// Sum of elementwise products of two tensors of identical shape.
pub fn inner_product_dense(x: &DenseTensor, w: &DenseTensor) -> Result<f64> {
    ensure_same_shape(x.shape(), w.shape())?;
    Ok(dot(x.values(), w.values()))
}
