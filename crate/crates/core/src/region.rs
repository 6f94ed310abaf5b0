//! Closed sets described by signed margins.
//!
//! A [`Region`] is `{x : margin(x) <= 0}`. Margins compose: the intersection of
//! two regions takes the pointwise maximum, the union the minimum.

use std::fmt;
use std::sync::Arc;

use crate::linalg::norm2;
use crate::state::StateVector;

type MarginFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct Region {
    margin: Arc<MarginFn>,
    label: String,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region").field("label", &self.label).finish_non_exhaustive()
    }
}

impl Region {
    pub fn new(label: impl Into<String>, margin: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { margin: Arc::new(margin), label: label.into() }
    }

    /// All of space.
    pub fn everything() -> Self {
        Self::new("everything", |_| f64::NEG_INFINITY)
    }

    /// Closed Euclidean ball.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Self::new(format!("ball(r={radius})"), move |x| {
            let d: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            d - radius
        })
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self::new("box", move |x| {
            let mut m = f64::NEG_INFINITY;
            for i in 0..lo.len() {
                m = m.max(lo[i] - x[i]).max(x[i] - hi[i]);
            }
            m
        })
    }

    /// `{x : norm(x) <= radius}` for an arbitrary norm.
    pub fn norm_ball(radius: f64, norm: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(format!("norm-ball(r={radius})"), move |x| norm(x) - radius)
    }

    /// `{x : |x| <= radius}` in the Euclidean norm.
    pub fn euclidean_ball(radius: f64) -> Self {
        Self::new(format!("|x|<={radius}"), move |x| norm2(x) - radius)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn margin(&self, x: &StateVector) -> f64 {
        (self.margin)(x.coords())
    }

    pub fn margin_raw(&self, x: &[f64]) -> f64 {
        (self.margin)(x)
    }

    pub fn contains(&self, x: &StateVector) -> bool {
        self.margin(x) <= 0.0
    }

    pub fn intersect(&self, other: &Region) -> Region {
        let (a, b) = (self.margin.clone(), other.margin.clone());
        Region {
            margin: Arc::new(move |x| a(x).max(b(x))),
            label: format!("({})∩({})", self.label, other.label),
        }
    }

    pub fn union(&self, other: &Region) -> Region {
        let (a, b) = (self.margin.clone(), other.margin.clone());
        Region {
            margin: Arc::new(move |x| a(x).min(b(x))),
            label: format!("({})∪({})", self.label, other.label),
        }
    }

    /// Closure of the complement. Boundary points belong to both sets.
    pub fn complement(&self) -> Region {
        let a = self.margin.clone();
        Region { margin: Arc::new(move |x| -a(x)), label: format!("¬({})", self.label) }
    }

    /// Grows the region by `delta` in margin units.
    pub fn inflate(&self, delta: f64) -> Region {
        let a = self.margin.clone();
        Region { margin: Arc::new(move |x| a(x) - delta), label: format!("({})+{delta}", self.label) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn box_boundary_is_inside() {
        let r = Region::boxed(vec![0.0], vec![1.0]);
        assert_eq!(r.margin_raw(&[1.0]), 0.0);
        assert!(r.margin_raw(&[1.5]) > 0.0);
        assert!(r.margin_raw(&[0.5]) < 0.0);
    }

    proptest! {
        #[test]
        fn set_algebra_matches_membership(x in -3.0..3.0f64, y in -3.0..3.0f64) {
            let a = Region::euclidean_ball(1.5);
            let b = Region::boxed(vec![0.0, -1.0], vec![2.0, 1.0]);
            let p = [x, y];
            let ina = a.margin_raw(&p) <= 0.0;
            let inb = b.margin_raw(&p) <= 0.0;
            prop_assert_eq!(a.intersect(&b).margin_raw(&p) <= 0.0, ina && inb);
            prop_assert_eq!(a.union(&b).margin_raw(&p) <= 0.0, ina || inb);
        }
    }
}
