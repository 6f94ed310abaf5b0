use std::fmt;
use std::ops::Index;

use crate::error::{Error, Result};

/// Identifies the discretization a state vector lives in, so that Galerkin
/// coefficients and grid values are never mixed by accident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceId(pub u32);

impl SpaceId {
    pub const EUCLIDEAN: SpaceId = SpaceId(0);
    pub const GALERKIN_SINE: SpaceId = SpaceId(1);
    pub const RADIAL_GRID: SpaceId = SpaceId(2);
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SpaceId::EUCLIDEAN => f.write_str("euclidean"),
            SpaceId::GALERKIN_SINE => f.write_str("galerkin-sine"),
            SpaceId::RADIAL_GRID => f.write_str("radial-grid"),
            SpaceId(other) => write!(f, "space-{other}"),
        }
    }
}

/// A point of the (discretized) phase space.
///
/// Coordinates are always finite; construction through [`StateVector::new`]
/// enforces it.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    coords: Vec<f64>,
    space: SpaceId,
}

impl StateVector {
    pub fn new(coords: Vec<f64>, space: SpaceId) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Precondition("state vector must have dimension > 0".into()));
        }
        if let Some(index) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { coords, space })
    }

    /// Euclidean-space state; panics on empty or non-finite input, so use it
    /// for literals only.
    pub fn euclidean(coords: &[f64]) -> Self {
        Self::new(coords.to_vec(), SpaceId::EUCLIDEAN).expect("valid literal state")
    }

    pub(crate) fn from_raw(coords: Vec<f64>, space: SpaceId) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Self { coords, space }
    }

    pub fn zeros(dim: usize, space: SpaceId) -> Self {
        Self { coords: vec![0.0; dim], space }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn space(&self) -> SpaceId {
        self.space
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Straight-line interpolation `(1-s) self + s other`.
    pub fn lerp(&self, other: &StateVector, s: f64) -> StateVector {
        debug_assert_eq!(self.space, other.space);
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a + s * (b - a))
            .collect();
        StateVector { coords, space: self.space }
    }

    pub fn sub(&self, other: &StateVector) -> Vec<f64> {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect()
    }

    pub fn scaled(&self, s: f64) -> StateVector {
        StateVector { coords: self.coords.iter().map(|c| c * s).collect(), space: self.space }
    }
}

impl Index<usize> for StateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            StateVector::new(vec![1.0, f64::NAN], SpaceId::EUCLIDEAN),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(StateVector::new(vec![], SpaceId::EUCLIDEAN).is_err());
        assert!(StateVector::new(vec![f64::INFINITY], SpaceId::EUCLIDEAN).is_err());
    }

    #[test]
    fn lerp_endpoints() {
        let a = StateVector::euclidean(&[0.0, 1.0]);
        let b = StateVector::euclidean(&[2.0, 3.0]);
        assert_eq!(a.lerp(&b, 0.0), a);
        assert_eq!(a.lerp(&b, 1.0), b);
        assert_eq!(a.lerp(&b, 0.5).coords(), &[1.0, 2.0]);
    }
}
