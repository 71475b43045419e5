//! Product-array geometries on a uniform half-wavelength grid.
//!
//! Positions are dimensionless grid indices (multiples of `λ/2`). Each
//! subarray is an occupancy vector whose first and last cells hold sensors,
//! so its length is the subarray extent (`M_e` or `N_e`).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{PpoError, Result};

/// Zero/one occupancy of grid indices `0..len`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndicatorVector(Vec<bool>);

impl IndicatorVector {
    pub fn new(occupancy: Vec<bool>) -> Result<Self> {
        match (occupancy.first(), occupancy.last()) {
            (None, _) => Err(PpoError::Geometry("indicator is empty".into())),
            (Some(false), _) => Err(PpoError::Geometry(
                "first grid cell must hold a sensor".into(),
            )),
            (_, Some(false)) => Err(PpoError::Geometry(
                "last grid cell must hold a sensor".into(),
            )),
            _ => Ok(Self(occupancy)),
        }
    }

    /// Builds the indicator from sensor positions; the extent is the largest
    /// position plus one.
    pub fn from_positions(positions: &[usize]) -> Result<Self> {
        let Some(&max) = positions.iter().max() else {
            return Err(PpoError::Geometry("no sensor positions".into()));
        };
        if !positions.contains(&0) {
            return Err(PpoError::Geometry(
                "positions must include the origin sensor at index 0".into(),
            ));
        }
        let mut occupancy = vec![false; max + 1];
        for &p in positions {
            occupancy[p] = true;
        }
        Self::new(occupancy)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        self.0.get(index).copied().unwrap_or(false)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn positions(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&on| on).count()
    }
}

/// One subarray of a product array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubarraySpec {
    indicator: IndicatorVector,
}

impl SubarraySpec {
    pub fn new(indicator: IndicatorVector) -> Self {
        Self { indicator }
    }

    pub fn from_positions(positions: &[usize]) -> Result<Self> {
        IndicatorVector::from_positions(positions).map(Self::new)
    }

    /// Evenly spaced sensors `{0, step, …, (count-1)·step}`.
    pub fn uniform(count: usize, step: usize) -> Result<Self> {
        if count == 0 || step == 0 {
            return Err(PpoError::Geometry(
                "sensor count and spacing must be positive".into(),
            ));
        }
        let positions: Vec<usize> = (0..count).map(|i| i * step).collect();
        Self::from_positions(&positions)
    }

    pub fn indicator(&self) -> &IndicatorVector {
        &self.indicator
    }

    /// `M_e` / `N_e`: number of grid cells spanned, aperture plus one.
    pub fn extent(&self) -> usize {
        self.indicator.len()
    }

    pub fn aperture(&self) -> usize {
        self.extent() - 1
    }

    pub fn sensor_count(&self) -> usize {
        self.indicator.count()
    }

    pub fn positions(&self) -> Vec<usize> {
        self.indicator.positions()
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        self.indicator.is_occupied(index)
    }
}

/// Two subarrays sharing one aperture grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductArray {
    subarray_a: SubarraySpec,
    subarray_b: SubarraySpec,
    label: String,
}

impl ProductArray {
    pub fn new(
        label: impl Into<String>,
        subarray_a: SubarraySpec,
        subarray_b: SubarraySpec,
    ) -> Self {
        Self {
            subarray_a,
            subarray_b,
            label: label.into(),
        }
    }

    /// Coprime array: subarray A at multiples of `usf_a`, B at multiples of
    /// `usf_b`.
    pub fn coprime(usf_a: usize, usf_b: usize, count_a: usize, count_b: usize) -> Result<Self> {
        if usf_a == 0 || usf_b == 0 || count_a == 0 || count_b == 0 {
            return Err(PpoError::Geometry(
                "coprime parameters must be positive".into(),
            ));
        }
        let g = gcd(usf_a, usf_b);
        if g != 1 {
            return Err(PpoError::NotCoprime {
                usf_a,
                usf_b,
                gcd: g,
            });
        }
        Ok(Self::new(
            format!("coprime-{usf_a}-{usf_b}-{count_a}-{count_b}"),
            SubarraySpec::uniform(count_a, usf_a)?,
            SubarraySpec::uniform(count_b, usf_b)?,
        ))
    }

    /// Nested array: a dense ULA for A and a sparse ULA for B, both anchored
    /// at the origin sensor.
    pub fn nested(count_dense: usize, count_sparse: usize, usf_sparse: usize) -> Result<Self> {
        if usf_sparse < 2 {
            return Err(PpoError::Geometry(format!(
                "nested array needs a sparse undersampling factor >= 2, got {usf_sparse}"
            )));
        }
        Ok(Self::new(
            format!("nested-{count_dense}-{count_sparse}-{usf_sparse}"),
            SubarraySpec::uniform(count_dense, 1)?,
            SubarraySpec::uniform(count_sparse, usf_sparse)?,
        ))
    }

    /// Standard ULA read as a product array with every sensor shared.
    pub fn ula(count: usize) -> Result<Self> {
        let sub = SubarraySpec::uniform(count, 1)?;
        Ok(Self::new(format!("ula{count}"), sub.clone(), sub))
    }

    /// Non-uniform line array with identical subarrays.
    pub fn nula(positions: &[usize]) -> Result<Self> {
        let sub = SubarraySpec::from_positions(positions)?;
        Ok(Self::new(
            format!("nula{}", sub.sensor_count()),
            sub.clone(),
            sub,
        ))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn subarray_a(&self) -> &SubarraySpec {
        &self.subarray_a
    }

    pub fn subarray_b(&self) -> &SubarraySpec {
        &self.subarray_b
    }

    /// Grid length covering both subarrays, `max(M_e, N_e)`.
    pub fn span(&self) -> usize {
        self.subarray_a.extent().max(self.subarray_b.extent())
    }

    pub fn identical_subarrays(&self) -> bool {
        self.subarray_a == self.subarray_b
    }

    pub fn shared_positions(&self) -> Vec<usize> {
        self.subarray_a
            .positions()
            .into_iter()
            .filter(|&p| self.subarray_b.is_occupied(p))
            .collect()
    }

    pub fn distinct_positions(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .subarray_a
            .positions()
            .into_iter()
            .chain(self.subarray_b.positions())
            .collect();
        set.into_iter().collect()
    }

    pub fn shared_count(&self) -> usize {
        self.shared_positions().len()
    }

    /// Physical sensors, counting shared positions once.
    pub fn sensor_count(&self) -> usize {
        self.distinct_positions().len()
    }

    /// Pair counts `#{(m, n) : m ∈ A, n ∈ B, m − n = k}` over
    /// `k ∈ [-(N_e-1), M_e-1]`.
    pub fn difference_coarray(&self) -> Coarray {
        let first = -(self.subarray_b.extent() as isize - 1);
        let last = self.subarray_a.extent() as isize - 1;
        let mut weights = vec![0u64; (last - first + 1) as usize];
        let pos_b = self.subarray_b.positions();
        for m in self.subarray_a.positions() {
            for &n in &pos_b {
                weights[(m as isize - n as isize - first) as usize] += 1;
            }
        }
        Coarray {
            first_lag: first,
            weights,
        }
    }

    pub fn to_doc(&self) -> GeometryDoc {
        GeometryDoc {
            label: self.label.clone(),
            extent_a: self.subarray_a.extent(),
            extent_b: self.subarray_b.extent(),
            positions_a: self.subarray_a.positions(),
            positions_b: self.subarray_b.positions(),
        }
    }

    pub fn from_doc(doc: &GeometryDoc) -> Result<Self> {
        let a = SubarraySpec::from_positions(&doc.positions_a)?;
        let b = SubarraySpec::from_positions(&doc.positions_b)?;
        for (name, sub, extent) in [("a", &a, doc.extent_a), ("b", &b, doc.extent_b)] {
            if sub.extent() != extent {
                return Err(PpoError::Geometry(format!(
                    "extent_{name} = {extent} but the largest position implies {}",
                    sub.extent()
                )));
            }
        }
        Ok(Self::new(doc.label.clone(), a, b))
    }
}

/// Serialized geometry: `{label, extent_a, extent_b, positions_a, positions_b}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryDoc {
    pub label: String,
    pub extent_a: usize,
    pub extent_b: usize,
    pub positions_a: Vec<usize>,
    pub positions_b: Vec<usize>,
}

/// Integer pair counts of the difference coarray, indexed by lag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coarray {
    first_lag: isize,
    weights: Vec<u64>,
}

impl Coarray {
    pub fn first_lag(&self) -> isize {
        self.first_lag
    }

    pub fn last_lag(&self) -> isize {
        self.first_lag + self.weights.len() as isize - 1
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn get(&self, k: isize) -> u64 {
        if k < self.first_lag || k > self.last_lag() {
            0
        } else {
            self.weights[(k - self.first_lag) as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (isize, u64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.first_lag + i as isize, w))
    }

    /// Lags with at least one sensor pair.
    pub fn support(&self) -> Vec<isize> {
        self.iter()
            .filter(|&(_, w)| w > 0)
            .map(|(k, _)| k)
            .collect()
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
