use std::sync::Arc;

use crate::error::{Error, Result};

/// A latent vector plus pending shifts along fixed directions.
///
/// Shifts along the same direction merge by adding their coefficients, and
/// values are materialized as `base + sum(coeff * direction)` in `f64`. So
/// shifting by `a` then `b` is bit-identical to shifting by `a + b`, and
/// shifting back by `-a` returns the original values exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    base: Vec<f32>,
    shifts: Vec<Shift>,
}

#[derive(Debug, Clone, PartialEq)]
struct Shift {
    direction: Arc<[f64]>,
    coeff: f64,
}

impl LatentCode {
    pub fn new(base: Vec<f32>) -> Self {
        Self {
            base,
            shifts: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[f32] {
        &self.base
    }

    pub fn is_shifted(&self) -> bool {
        !self.shifts.is_empty()
    }

    /// `self + coeff * direction`.
    pub fn shifted(&self, direction: &Arc<[f64]>, coeff: f64) -> Result<Self> {
        if direction.len() != self.base.len() {
            return Err(Error::Shape(format!(
                "{}-dim direction applied to a {}-dim latent",
                direction.len(),
                self.base.len()
            )));
        }
        if !coeff.is_finite() {
            return Err(Error::NonFinite("latent shift coefficient".into()));
        }
        let mut out = self.clone();
        match out
            .shifts
            .iter_mut()
            .position(|s| Arc::ptr_eq(&s.direction, direction) || s.direction[..] == direction[..])
        {
            Some(i) => {
                out.shifts[i].coeff += coeff;
                if out.shifts[i].coeff == 0.0 {
                    out.shifts.remove(i);
                }
            }
            None if coeff != 0.0 => out.shifts.push(Shift {
                direction: Arc::clone(direction),
                coeff,
            }),
            None => {}
        }
        Ok(out)
    }

    pub fn values(&self) -> Vec<f32> {
        if self.shifts.is_empty() {
            return self.base.clone();
        }
        self.base
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let delta: f64 = self.shifts.iter().map(|s| s.coeff * s.direction[i]).sum();
                (b as f64 + delta) as f32
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_and_unshift_is_exact() {
        let z = LatentCode::new(vec![0.1, -0.7, 3.3]);
        let d: Arc<[f64]> = Arc::from(vec![0.6, 0.0, -0.8]);
        let there = z.shifted(&d, 0.3).unwrap();
        assert_ne!(there.values(), z.values());
        let back = there.shifted(&d, -0.3).unwrap();
        assert_eq!(back.values(), z.values());
        assert!(!back.is_shifted());
    }

    #[test]
    fn shifts_compose_additively() {
        let z = LatentCode::new(vec![1.5, 2.25]);
        let d: Arc<[f64]> = Arc::from(vec![0.28, 0.96]);
        let two_step = z.shifted(&d, 0.7).unwrap().shifted(&d, 1.9).unwrap();
        let one_step = z.shifted(&d, 0.7 + 1.9).unwrap();
        assert_eq!(two_step.values(), one_step.values());
    }

    #[test]
    fn dimension_mismatch() {
        let z = LatentCode::new(vec![0.0; 3]);
        let d: Arc<[f64]> = Arc::from(vec![1.0, 0.0]);
        assert!(z.shifted(&d, 1.0).is_err());
    }
}
