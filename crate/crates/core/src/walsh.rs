//! Exact finite-horizon calculus for binary noise via Walsh coefficients.
//!
//! Every random variable over the binary noise `xi_1..xi_M` is a vector of
//! coefficients indexed by subsets `A` of `{1..M}` in the orthonormal basis
//! `Xi_A = prod_{i in A} xi_i`. The discrete operators become exact linear
//! or combinatorial maps on these vectors. Pointwise multiplication closes
//! because `xi^2 = 1 + (b - 1/b) xi` at both atoms.
//!
//! Subsets are encoded as bitmasks (bit `i-1` set means `i in A`), with
//! sparse map storage. The engine is a test oracle, not a production path:
//! full-enumeration constructors are gated by the shared cost guard.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::DiscreteKernel;
use crate::lattice::RandomVariableFn;
use crate::noise::NoiseSpec;

/// Maximum horizon supported by the bitmask encoding.
pub const MAX_HORIZON: usize = 64;

/// Maximum horizon for full `2^M` enumeration.
pub const MAX_ENUM_HORIZON: usize = 24;

/// A binary-noise random variable as a sparse map
/// `subset of {1..M} -> coefficient`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshVector {
    m: usize,
    b: f64,
    coeffs: BTreeMap<u64, f64>,
}

fn mask_of(subset: &[u32], m: usize) -> u64 {
    let mut mask = 0u64;
    for &i in subset {
        assert!(
            i >= 1 && i as usize <= m,
            "subset index {i} outside 1..={m}"
        );
        mask |= 1 << (i - 1);
    }
    mask
}

fn subset_of(mask: u64) -> Vec<u32> {
    (0..64)
        .filter(|bit| mask & (1 << bit) != 0)
        .map(|bit| bit as u32 + 1)
        .collect()
}

impl WalshVector {
    pub fn zero(m: usize, b: f64) -> Self {
        assert!((1..=MAX_HORIZON).contains(&m));
        assert!(b > 0.0);
        Self {
            m,
            b,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(m: usize, b: f64, c: f64) -> Self {
        let mut v = Self::zero(m, b);
        v.add_coeff(0, c);
        v
    }

    /// The basis element `Xi_A`.
    pub fn basis(m: usize, b: f64, subset: &[u32]) -> Self {
        let mut v = Self::zero(m, b);
        let mask = mask_of(subset, m);
        v.add_coeff(mask, 1.0);
        v
    }

    pub fn horizon(&self) -> usize {
        self.m
    }

    pub fn binary_parameter(&self) -> f64 {
        self.b
    }

    pub fn coeff(&self, subset: &[u32]) -> f64 {
        self.coeffs
            .get(&mask_of(subset, self.m))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn coeff_mask(&self, mask: u64) -> f64 {
        self.coeffs.get(&mask).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.coeffs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    fn add_coeff(&mut self, mask: u64, v: f64) {
        if v == 0.0 {
            return;
        }
        let slot = self.coeffs.entry(mask).or_insert(0.0);
        *slot += v;
        if *slot == 0.0 {
            self.coeffs.remove(&mask);
        }
    }

    fn check_compatible(&self, other: &WalshVector) -> Result<()> {
        if self.m != other.m || self.b != other.b {
            return Err(Error::Mismatch(format!(
                "Walsh vectors disagree: (M={}, b={}) vs (M={}, b={})",
                self.m, self.b, other.m, other.b
            )));
        }
        Ok(())
    }

    /// `E[X] = coeff(empty)`.
    pub fn expectation(&self) -> f64 {
        self.coeff_mask(0)
    }

    /// `E[X Y] = sum_A X_A Y_A` by orthonormality of the basis.
    pub fn inner_product(&self, other: &WalshVector) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .coeffs
            .iter()
            .map(|(mask, v)| v * other.coeff_mask(*mask))
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.values().map(|v| v * v).sum()
    }

    pub fn variance(&self) -> f64 {
        self.norm_sq() - self.expectation().powi(2)
    }

    pub fn scale(&self, c: f64) -> WalshVector {
        let mut out = Self::zero(self.m, self.b);
        for (&mask, &v) in &self.coeffs {
            out.add_coeff(mask, c * v);
        }
        out
    }

    pub fn add(&self, other: &WalshVector) -> Result<WalshVector> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (&mask, &v) in &other.coeffs {
            out.add_coeff(mask, v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &WalshVector) -> Result<WalshVector> {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Evaluate the expansion at an outcome vector.
    pub fn evaluate(&self, outcome: &[f64]) -> f64 {
        assert_eq!(outcome.len(), self.m);
        let mut acc = 0.0;
        for (&mask, &v) in &self.coeffs {
            let mut prod = v;
            let mut rest = mask;
            while rest != 0 {
                let bit = rest.trailing_zeros() as usize;
                prod *= outcome[bit];
                rest &= rest - 1;
            }
            acc += prod;
        }
        acc
    }

    /// The expansion as an evaluation map, for definition-level cross checks.
    pub fn to_random_variable(&self) -> RandomVariableFn {
        let clone = self.clone();
        RandomVariableFn::new(self.m, "walsh-expansion", move |o| clone.evaluate(o))
    }

    /// Exact coefficients `E[X Xi_A]` of an evaluation map by full
    /// enumeration of the `2^M` binary outcomes.
    pub fn from_function(x: &RandomVariableFn, spec: &NoiseSpec) -> Result<WalshVector> {
        let b = spec.binary_parameter().ok_or_else(|| {
            Error::InvalidArgument("the Walsh engine requires binary noise".into())
        })?;
        let m = x.horizon();
        if m > MAX_ENUM_HORIZON {
            return Err(Error::CostGuard {
                what: "walsh from_function",
                needed: 1u128 << m,
                limit: 1u128 << MAX_ENUM_HORIZON,
            });
        }
        let size = 1usize << m;
        let lo = -1.0 / b;
        let p_hi = 1.0 / (b * b + 1.0);
        let p_lo = 1.0 - p_hi;
        // t[mask] starts as weight * X(outcome); a butterfly per coordinate
        // turns outcome indexing into subset indexing, computing every
        // E[X Xi_A] in one pass
        let mut t = vec![0.0f64; size];
        let mut outcome = vec![0.0f64; m];
        for (mask, slot) in t.iter_mut().enumerate() {
            let mut weight = 1.0;
            for (bit, o) in outcome.iter_mut().enumerate() {
                if mask & (1 << bit) != 0 {
                    *o = b;
                    weight *= p_hi;
                } else {
                    *o = lo;
                    weight *= p_lo;
                }
            }
            *slot = weight * x.eval(&outcome);
        }
        for bit in 0..m {
            let step = 1usize << bit;
            let mut block = 0usize;
            while block < size {
                for off in 0..step {
                    let i0 = block + off;
                    let i1 = i0 + step;
                    let t0 = t[i0];
                    let t1 = t[i1];
                    t[i0] = t0 + t1;
                    t[i1] = lo * t0 + b * t1;
                }
                block += 2 * step;
            }
        }
        let mut out = WalshVector::zero(m, b);
        for (mask, v) in t.into_iter().enumerate() {
            if v != 0.0 {
                out.coeffs.insert(mask as u64, v);
            }
        }
        Ok(out)
    }

    /// Pointwise product of the two random variables, via
    /// `Xi_A Xi_B = prod_{i in A cap B} (1 + c xi_i) Xi_{A xor B}` with
    /// `c = b - 1/b`.
    pub fn multiply(&self, other: &WalshVector) -> Result<WalshVector> {
        self.check_compatible(other)?;
        let c = self.b - 1.0 / self.b;
        let mut out = WalshVector::zero(self.m, self.b);
        for (&a, &va) in &self.coeffs {
            for (&bm, &vb) in &other.coeffs {
                let common = a & bm;
                let sym = a ^ bm;
                let w = va * vb;
                if common == 0 || c == 0.0 {
                    out.add_coeff(sym, w);
                    continue;
                }
                // every subset S of the overlap contributes c^{|S|} Xi_{sym | S}
                let mut s = common;
                loop {
                    out.add_coeff(sym | s, w * c.powi(s.count_ones() as i32));
                    if s == 0 {
                        break;
                    }
                    s = (s - 1) & common;
                }
            }
        }
        Ok(out)
    }

    /// `D^n_i` on coefficients: delete `i` from every subset containing it
    /// and scale by `sqrt(n)`.
    pub fn malliavin(&self, i: usize, n: u32) -> WalshVector {
        assert!(i >= 1 && i <= self.m);
        let bit = 1u64 << (i - 1);
        let mut out = WalshVector::zero(self.m, self.b);
        let sqrt_n = (n as f64).sqrt();
        for (&mask, &v) in &self.coeffs {
            if mask & bit != 0 {
                out.add_coeff(mask ^ bit, sqrt_n * v);
            }
        }
        out
    }

    /// Clark-Ocone derivative: only subsets whose largest element is `i`
    /// survive, mapped to their deletion and scaled by `sqrt(n)`.
    pub fn clark_ocone(&self, i: usize, n: u32) -> WalshVector {
        assert!(i >= 1 && i <= self.m);
        let bit = 1u64 << (i - 1);
        let below = bit - 1;
        let mut out = WalshVector::zero(self.m, self.b);
        let sqrt_n = (n as f64).sqrt();
        for (&mask, &v) in &self.coeffs {
            if mask & bit != 0 && mask & !(below | bit) == 0 {
                out.add_coeff(mask ^ bit, sqrt_n * v);
            }
        }
        out
    }

    /// `E[X | F_i]`, which for binary noise is the projection onto subsets
    /// of `{1..i}`.
    pub fn condition_on_first(&self, i: usize) -> WalshVector {
        assert!(i <= self.m);
        let keep = if i == 64 { u64::MAX } else { (1u64 << i) - 1 };
        let mut out = WalshVector::zero(self.m, self.b);
        for (&mask, &v) in &self.coeffs {
            if mask & !keep == 0 {
                out.add_coeff(mask, v);
            }
        }
        out
    }

    /// CSV rows `subset,coefficient` with the subset as sorted
    /// comma-joined indices in quotes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subset,coefficient\n");
        for (&mask, &v) in &self.coeffs {
            let subset: Vec<String> = subset_of(mask).iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("\"{}\",{}\n", subset.join(","), v));
        }
        out
    }
}

/// Discrete Skorokhod integral of a family `Z_1..Z_N` on coefficients:
/// `coeff(B) = n^{-1/2} sum_{i in B} Z_i.coeff(B minus i)`.
pub fn skorokhod(z: &[WalshVector], n: u32) -> Result<WalshVector> {
    let first = z
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty process".into()))?;
    let mut out = WalshVector::zero(first.m, first.b);
    let scale = 1.0 / (n as f64).sqrt();
    for (pos, zi) in z.iter().enumerate() {
        first.check_compatible(zi)?;
        let bit = 1u64 << pos;
        for (mask, v) in zi.support() {
            if mask & bit == 0 {
                out.add_coeff(mask | bit, scale * v);
            }
        }
    }
    Ok(out)
}

/// Walsh expansion of the discrete Wick exponential:
/// `coeff(A) = n^{-|A|/2} prod_{i in A} f(i)`.
pub fn wick_exponential(f: &DiscreteKernel, n: u32, m: usize, b: f64) -> Result<WalshVector> {
    if f.order() != 1 {
        return Err(Error::InvalidArgument(
            "Wick exponential takes an order-1 kernel".into(),
        ));
    }
    if f.max_index() as usize > m {
        return Err(Error::OutOfRange(format!(
            "kernel support {} beyond horizon {m}",
            f.max_index()
        )));
    }
    let support: Vec<(u32, f64)> = f.entries().map(|(key, v)| (key[0], v)).collect();
    if support.len() > MAX_ENUM_HORIZON {
        return Err(Error::CostGuard {
            what: "walsh wick exponential",
            needed: 1u128 << support.len(),
            limit: 1u128 << MAX_ENUM_HORIZON,
        });
    }
    let mut out = WalshVector::zero(m, b);
    let scale = 1.0 / (n as f64).sqrt();
    // grow subset by subset: each support point doubles the expansion
    let mut acc: Vec<(u64, f64)> = vec![(0, 1.0)];
    for &(i, v) in &support {
        let bit = 1u64 << (i - 1);
        let mut grown = Vec::with_capacity(acc.len() * 2);
        for &(mask, w) in &acc {
            grown.push((mask, w));
            grown.push((mask | bit, w * scale * v));
        }
        acc = grown;
    }
    for (mask, w) in acc {
        out.add_coeff(mask, w);
    }
    Ok(out)
}

/// Discrete multiple Wiener integral
/// `I^{n,k}(f) = n^{-k/2} k! sum_{i_1<..<i_k} f(i_1..i_k) Xi_{i_1..i_k}`
/// of a symmetric kernel vanishing on the diagonal.
pub fn multiple_wiener(f: &DiscreteKernel, n: u32, m: usize, b: f64) -> Result<WalshVector> {
    let k = f.order();
    if k == 0 {
        let c = f.value(&[]);
        return Ok(WalshVector::constant(m, b, c));
    }
    if !f.is_symmetric() {
        return Err(Error::KernelValidation(
            "multiple Wiener integral needs a symmetric kernel".into(),
        ));
    }
    if !f.is_off_diagonal() {
        return Err(Error::KernelValidation(
            "multiple Wiener integral needs a kernel vanishing on the diagonal".into(),
        ));
    }
    f.check_flags()?;
    if f.max_index() as usize > m {
        return Err(Error::OutOfRange(format!(
            "kernel support {} beyond horizon {m}",
            f.max_index()
        )));
    }
    let mut out = WalshVector::zero(m, b);
    let mut factorial = 1.0;
    for j in 1..=k {
        factorial *= j as f64;
    }
    let scale = (n as f64).powf(-(k as f64) / 2.0) * factorial;
    for (key, v) in f.entries() {
        // canonical keys of a symmetric off-diagonal kernel are strictly
        // increasing, i.e. exactly the sorted tuples the sum runs over
        let mask = mask_of(key, m);
        out.add_coeff(mask, scale * v);
    }
    Ok(out)
}

/// Chaos coefficients of a Walsh vector: order-`k` kernel with
/// `f(i_1..i_k) = (n^{k/2}/k!) coeff({i_1..i_k})` off the diagonal.
pub fn chaos_coefficients(x: &WalshVector, n: u32) -> Vec<DiscreteKernel> {
    let max_k = x
        .support()
        .map(|(mask, _)| mask.count_ones() as usize)
        .max()
        .unwrap_or(0);
    let mut out: Vec<DiscreteKernel> = (0..=max_k)
        .map(|k| DiscreteKernel::new(k, n, true, true))
        .collect();
    let mut factorial = vec![1.0f64; max_k + 1];
    for k in 1..=max_k {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    for (mask, v) in x.support() {
        let k = mask.count_ones() as usize;
        let key = subset_of(mask);
        let scale = (n as f64).powf(k as f64 / 2.0) / factorial[k];
        out[k].set(&key, scale * v);
    }
    out
}
