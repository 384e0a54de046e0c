//! Polyhedral order cones `C = {p : A p >= 0}` on partition probabilities.
//!
//! The dual cone is `C* = {A^T nu : nu >= 0}`; the reformulation never
//! materializes it and instead carries `nu` as program variables.

use serde::{Deserialize, Serialize};

use crate::error::{DroError, Result};

/// Absolute slack allowed on `A p >= 0`.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    Simple,
    Tree,
    Star,
    Umbrella,
    Ratio,
    Custom,
    Trivial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderCone {
    pub kind: ConeKind,
    pub dim: usize,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// For ratio cones built from probabilities: region indices sorted by
    /// decreasing probability, i.e. the chain the ratios refer to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

fn need_dim(n: usize) -> Result<()> {
    if n < 2 {
        return Err(DroError::InvalidDimension(format!(
            "order cones need at least 2 regions, got {n}"
        )));
    }
    Ok(())
}

fn unit_row(n: usize, entries: &[(usize, f64)]) -> Vec<f64> {
    let mut row = vec![0.0; n];
    for &(i, v) in entries {
        row[i] += v;
    }
    row
}

impl OrderCone {
    fn with_rows(kind: ConeKind, dim: usize, matrix: Vec<Vec<f64>>) -> Self {
        OrderCone {
            kind,
            dim,
            matrix,
            ratios: None,
            tolerance: None,
            order: None,
        }
    }

    /// The whole space: no rows.
    pub fn trivial(dim: usize) -> Self {
        Self::with_rows(ConeKind::Trivial, dim, Vec::new())
    }

    /// Arbitrary rows; every row must have `dim` entries.
    pub fn custom(dim: usize, matrix: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(r) = matrix.iter().find(|r| r.len() != dim) {
            return Err(DroError::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        Ok(Self::with_rows(ConeKind::Custom, dim, matrix))
    }

    pub fn rows(&self) -> usize {
        self.matrix.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_trivial(&self) -> bool {
        self.matrix.is_empty()
    }

    /// `A p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        if p.len() != self.dim {
            return Err(DroError::DimensionMismatch {
                expected: self.dim,
                found: p.len(),
            });
        }
        Ok(self.apply(p).iter().all(|v| *v >= -MEMBERSHIP_TOL))
    }

    /// `A^T nu`, an element of the dual cone.
    pub fn dual_ray(&self, nu: &[f64]) -> Result<Vec<f64>> {
        if nu.len() != self.rows() {
            return Err(DroError::DimensionMismatch {
                expected: self.rows(),
                found: nu.len(),
            });
        }
        if let Some((index, &value)) = nu.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(DroError::InvalidMultiplier { index, value });
        }
        let mut out = vec![0.0; self.dim];
        for (row, w) in self.matrix.iter().zip(nu) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
        Ok(out)
    }

    /// Same cone with rows appended (used to tighten an existing prior).
    pub fn with_extra_rows(&self, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut matrix = self.matrix.clone();
        matrix.extend(rows);
        Self::custom(self.dim, matrix)
    }
}

/// `p_1 >= p_2 >= ... >= p_n`.
pub fn make_simple_order(n: usize) -> Result<OrderCone> {
    need_dim(n)?;
    let rows = (0..n - 1)
        .map(|i| unit_row(n, &[(i, 1.0), (i + 1, -1.0)]))
        .collect();
    Ok(OrderCone::with_rows(ConeKind::Simple, n, rows))
}

/// `p_i >= p_n` for every `i < n`.
pub fn make_tree_order(n: usize) -> Result<OrderCone> {
    need_dim(n)?;
    let rows = (0..n - 1)
        .map(|i| unit_row(n, &[(i, 1.0), (n - 1, -1.0)]))
        .collect();
    Ok(OrderCone::with_rows(ConeKind::Tree, n, rows))
}

/// Decreasing running averages. Row `j` is `S_j/j - S_{j+1}/(j+1) >= 0`
/// scaled by `j (j+1)`, i.e. `S_j - j p_{j+1} >= 0`.
pub fn make_star_shaped(n: usize) -> Result<OrderCone> {
    need_dim(n)?;
    let rows = (1..n)
        .map(|j| {
            let mut row = vec![0.0; n];
            row[..j].iter_mut().for_each(|v| *v = 1.0);
            row[j] = -(j as f64);
            row
        })
        .collect();
    Ok(OrderCone::with_rows(ConeKind::Star, n, rows))
}

/// Unimodal with mode `m` (1-based): increasing up to `p_m`, decreasing after.
pub fn make_umbrella(n: usize, mode: usize) -> Result<OrderCone> {
    need_dim(n)?;
    if mode < 1 || mode > n {
        return Err(DroError::InvalidDimension(format!(
            "umbrella mode {mode} outside 1..={n}"
        )));
    }
    let rows = (0..n - 1)
        .map(|i| {
            // 0-based i compares p_{i+1} and p_{i+2} in 1-based terms
            if i + 1 < mode {
                unit_row(n, &[(i + 1, 1.0), (i, -1.0)])
            } else {
                unit_row(n, &[(i, 1.0), (i + 1, -1.0)])
            }
        })
        .collect();
    Ok(OrderCone::with_rows(ConeKind::Umbrella, n, rows))
}

/// `p_i >= (r_i - tolerance) p_{i+1}` for consecutive regions.
pub fn make_ratio_cone(ratios: &[f64], tolerance: f64) -> Result<OrderCone> {
    let order: Vec<usize> = (0..=ratios.len()).collect();
    ratio_cone_on_chain(ratios, tolerance, &order, ratios.len() + 1)
}

fn ratio_cone_on_chain(
    ratios: &[f64],
    tolerance: f64,
    chain: &[usize],
    n: usize,
) -> Result<OrderCone> {
    need_dim(ratios.len() + 1)?;
    if !(tolerance >= 0.0) {
        return Err(DroError::InvalidParameter(format!(
            "ratio tolerance must be nonnegative, got {tolerance}"
        )));
    }
    for (index, &ratio) in ratios.iter().enumerate() {
        if !(ratio > tolerance) {
            return Err(DroError::DegenerateRatio {
                index,
                ratio,
                tolerance,
            });
        }
    }
    let rows = ratios
        .iter()
        .enumerate()
        .map(|(k, r)| unit_row(n, &[(chain[k], 1.0), (chain[k + 1], -(r - tolerance))]))
        .collect();
    let mut cone = OrderCone::with_rows(ConeKind::Ratio, n, rows);
    cone.ratios = Some(ratios.to_vec());
    cone.tolerance = Some(tolerance);
    Ok(cone)
}

/// Ratio cone consistent with known region probabilities: regions are
/// chained by decreasing probability and each consecutive ratio is relaxed
/// by `tolerance`. Regions with zero probability are pinned after the last
/// positive one with no ratio information, which keeps them out of the
/// chain; if fewer than two regions carry mass the cone is trivial.
pub fn ratio_cone_from_probabilities(probs: &[f64], tolerance: f64) -> Result<OrderCone> {
    let n = probs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let positive: Vec<usize> = order.iter().copied().filter(|&i| probs[i] > 0.0).collect();
    if positive.len() < 2 {
        return Ok(OrderCone::trivial(n));
    }
    let ratios: Vec<f64> = positive
        .windows(2)
        .map(|w| probs[w[0]] / probs[w[1]])
        .collect();
    let mut cone = ratio_cone_on_chain(&ratios, tolerance, &positive, n)?;
    cone.order = Some(order);
    Ok(cone)
}
