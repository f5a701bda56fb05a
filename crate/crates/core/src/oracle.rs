//! Definition-level brute force over the full product sample space.
//!
//! Everything here is computed by literal transcription of the defining
//! formulas: expectations are weighted sums over all `atoms^M` outcomes,
//! conditional expectations are weighted averages over the unassigned
//! coordinates. No Walsh or lattice shortcut is used, so these values are
//! the independent ground truth the other engines are checked against.

use crate::error::{Error, Result};
use crate::kernel::COST_GUARD;
use crate::lattice::{DiscreteProcessFn, RandomVariableFn};
use crate::noise::NoiseSpec;
use crate::rng::TreeAccumulator;

/// The product space of `m` independent copies of a finite-atom noise.
#[derive(Debug, Clone)]
pub struct EnumeratedSpace {
    spec: NoiseSpec,
    m: usize,
}

impl EnumeratedSpace {
    pub fn new(spec: NoiseSpec, m: usize) -> Result<Self> {
        let states = (spec.atom_count() as u128)
            .checked_pow(m as u32)
            .unwrap_or(u128::MAX);
        if states > COST_GUARD {
            return Err(Error::CostGuard {
                what: "outcome enumeration",
                needed: states,
                limit: COST_GUARD,
            });
        }
        Ok(Self { spec, m })
    }

    pub fn horizon(&self) -> usize {
        self.m
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn outcome_count(&self) -> u64 {
        (self.spec.atom_count() as u64).pow(self.m as u32)
    }

    /// Visit every outcome with its probability weight, in mixed-radix
    /// little-endian order (coordinate 1 varies fastest).
    pub fn for_each_outcome(&self, mut visit: impl FnMut(&[f64], f64)) {
        let atoms = self.spec.atoms();
        let radix = atoms.len() as u64;
        let mut outcome = vec![0.0; self.m];
        for code in 0..self.outcome_count() {
            let mut rem = code;
            let mut weight = 1.0;
            for slot in outcome.iter_mut() {
                let (v, p) = atoms[(rem % radix) as usize];
                rem /= radix;
                *slot = v;
                weight *= p;
            }
            visit(&outcome, weight);
        }
    }

    /// `E[X]` as the full weighted sum, accumulated with a deterministic
    /// pairwise tree.
    pub fn expectation(&self, x: &RandomVariableFn) -> f64 {
        self.expectation_of(|o| x.eval(o))
    }

    pub fn expectation_of(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = TreeAccumulator::new();
        self.for_each_outcome(|outcome, weight| acc.push(weight * f(outcome)));
        acc.finish()
    }

    /// Conditional expectation of `X` given the coordinates listed in
    /// `given` (1-based) pinned to the values in `at`: the weighted average
    /// over the unassigned coordinates.
    pub fn conditional_expectation(
        &self,
        x: &RandomVariableFn,
        given: &[usize],
        at: &[f64],
    ) -> Result<f64> {
        if given.len() != at.len() {
            return Err(Error::InvalidArgument(
                "given coordinates and values differ in length".into(),
            ));
        }
        let mut fixed = vec![None; self.m];
        for (&i, &v) in given.iter().zip(at) {
            if i < 1 || i > self.m {
                return Err(Error::OutOfRange(format!(
                    "coordinate {i} outside 1..={}",
                    self.m
                )));
            }
            if !self
                .spec
                .atoms()
                .iter()
                .any(|&(a, _)| (a - v).abs() <= 1e-12)
            {
                return Err(Error::InvalidArgument(format!(
                    "value {v} for coordinate {i} is not an atom of {}",
                    self.spec.label()
                )));
            }
            fixed[i - 1] = Some(v);
        }
        let free: Vec<usize> = (0..self.m).filter(|&j| fixed[j].is_none()).collect();
        let atoms = self.spec.atoms();
        let radix = atoms.len() as u64;
        let states = radix.pow(free.len() as u32);
        let mut outcome: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        let mut acc = TreeAccumulator::new();
        for code in 0..states {
            let mut rem = code;
            let mut weight = 1.0;
            for &j in &free {
                let (v, p) = atoms[(rem % radix) as usize];
                rem /= radix;
                outcome[j] = v;
                weight *= p;
            }
            acc.push(weight * x.eval(&outcome));
        }
        Ok(acc.finish())
    }

    /// `sqrt(n) E[xi_i X | F_{-i}]` at an outcome, straight from the
    /// definition.
    pub fn malliavin(
        &self,
        x: &RandomVariableFn,
        i: usize,
        outcome: &[f64],
        n: u32,
    ) -> Result<f64> {
        let (given, at) = all_but(i, outcome, self.m)?;
        let xi_x = weighted_by_coordinate(x, i);
        Ok((n as f64).sqrt() * self.conditional_expectation(&xi_x, &given, &at)?)
    }

    /// `sum_{i<=N} E[Z_i | F_{-i}] xi_i / sqrt(n)` at an outcome.
    pub fn skorokhod(
        &self,
        z: &DiscreteProcessFn,
        upto: usize,
        outcome: &[f64],
        n: u32,
    ) -> Result<f64> {
        if upto > z.len() {
            return Err(Error::OutOfRange(format!(
                "truncation {upto} beyond process length {}",
                z.len()
            )));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let mut acc = TreeAccumulator::new();
        for i in 1..=upto {
            let (given, at) = all_but(i, outcome, self.m)?;
            let cond = self.conditional_expectation(z.component(i), &given, &at)?;
            acc.push(cond * outcome[i - 1] * scale);
        }
        Ok(acc.finish())
    }

    /// `sqrt(n) E[xi_i X | xi_1..xi_{i-1} = prefix]`.
    pub fn clark_ocone(
        &self,
        x: &RandomVariableFn,
        i: usize,
        prefix: &[f64],
        n: u32,
    ) -> Result<f64> {
        if i < 1 || i > self.m {
            return Err(Error::OutOfRange(format!(
                "coordinate {i} outside 1..={}",
                self.m
            )));
        }
        if prefix.len() != i - 1 {
            return Err(Error::InvalidArgument(format!(
                "prefix length {} does not match coordinate {i}",
                prefix.len()
            )));
        }
        let given: Vec<usize> = (1..i).collect();
        let xi_x = weighted_by_coordinate(x, i);
        Ok((n as f64).sqrt() * self.conditional_expectation(&xi_x, &given, prefix)?)
    }
}

fn all_but(i: usize, outcome: &[f64], m: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if i < 1 || i > m {
        return Err(Error::OutOfRange(format!("coordinate {i} outside 1..={m}")));
    }
    let given: Vec<usize> = (1..=m).filter(|&j| j != i).collect();
    let at: Vec<f64> = given.iter().map(|&j| outcome[j - 1]).collect();
    Ok((given, at))
}

fn weighted_by_coordinate(x: &RandomVariableFn, i: usize) -> RandomVariableFn {
    let inner = x.clone();
    RandomVariableFn::new(x.horizon(), format!("xi_{i} * {}", x.label()), move |o| {
        o[i - 1] * inner.eval(o)
    })
}
