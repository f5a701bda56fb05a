//! Finite-atom noise distributions with mean zero and unit variance.

use rand::Rng;

use crate::error::{Error, Result};

/// Absolute tolerance for the moment invariants.
pub const MOMENT_TOL: f64 = 1e-12;

/// A finite-atom distribution for the driving noise: atoms `(value, probability)`
/// with strictly positive probabilities summing to one, mean zero and unit
/// variance. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    atoms: Vec<(f64, f64)>,
    label: String,
}

impl NoiseSpec {
    /// Binary noise with atoms `-1/b` (probability `b^2/(b^2+1)`) and `b`
    /// (probability `1/(b^2+1)`).
    pub fn binary(b: f64) -> Result<Self> {
        if !b.is_finite() || b <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "binary noise parameter must be positive and finite, got {b}"
            )));
        }
        let p_up = 1.0 / (b * b + 1.0);
        let atoms = vec![(-1.0 / b, 1.0 - p_up), (b, p_up)];
        Self::validate(&atoms)?;
        Ok(Self {
            atoms,
            label: format!("binary(b={b})"),
        })
    }

    /// Noise from an explicit atom list. Atoms are validated, never
    /// renormalized: a violated invariant is an error.
    pub fn custom(atoms: Vec<(f64, f64)>, label: impl Into<String>) -> Result<Self> {
        Self::validate(&atoms)?;
        Ok(Self {
            atoms,
            label: label.into(),
        })
    }

    fn validate(atoms: &[(f64, f64)]) -> Result<()> {
        if atoms.len() < 2 {
            return Err(Error::NoiseValidation(format!(
                "need at least 2 atoms, got {}",
                atoms.len()
            )));
        }
        for &(v, p) in atoms {
            if !v.is_finite() || !p.is_finite() {
                return Err(Error::NoiseValidation(format!(
                    "non-finite atom ({v}, {p})"
                )));
            }
            if p <= 0.0 {
                return Err(Error::NoiseValidation(format!(
                    "probability must be strictly positive, got {p} for value {v}"
                )));
            }
        }
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].0 == atoms[j].0 {
                    return Err(Error::NoiseValidation(format!(
                        "atom values must be pairwise distinct, {} repeats",
                        atoms[i].0
                    )));
                }
            }
        }
        let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > MOMENT_TOL {
            return Err(Error::NoiseValidation(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let mean: f64 = atoms.iter().map(|&(v, p)| p * v).sum();
        if mean.abs() > MOMENT_TOL {
            return Err(Error::NoiseValidation(format!(
                "mean is {mean}, expected 0"
            )));
        }
        let var: f64 = atoms.iter().map(|&(v, p)| p * v * v).sum();
        if (var - 1.0).abs() > MOMENT_TOL {
            return Err(Error::NoiseValidation(format!(
                "variance is {var}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The binary parameter `b` when this spec is a two-atom binary family
    /// member, i.e. atoms `{-1/b, b}` with the matching weights.
    pub fn binary_parameter(&self) -> Option<f64> {
        if self.atoms.len() != 2 {
            return None;
        }
        let (lo, hi) = if self.atoms[0].0 < self.atoms[1].0 {
            (self.atoms[0], self.atoms[1])
        } else {
            (self.atoms[1], self.atoms[0])
        };
        let b = hi.0;
        if b <= 0.0 {
            return None;
        }
        let matches = (lo.0 + 1.0 / b).abs() <= 1e-12
            && (hi.1 - 1.0 / (b * b + 1.0)).abs() <= 1e-12
            && (lo.1 - b * b / (b * b + 1.0)).abs() <= 1e-12;
        matches.then_some(b)
    }

    /// Third moment of the noise, used by a few closed-form checks.
    pub fn third_moment(&self) -> f64 {
        self.atoms.iter().map(|&(v, p)| p * v * v * v).sum()
    }

    /// One i.i.d. draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for &(v, p) in &self.atoms {
            cum += p;
            if u < cum {
                return v;
            }
        }
        // u landed in the rounding slack past the last boundary
        self.atoms[self.atoms.len() - 1].0
    }

    /// `count` i.i.d. draws, deterministic given the stream state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }
}
