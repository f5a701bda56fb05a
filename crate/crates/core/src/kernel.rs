//! Discrete kernel spaces, step functions, and the step-function embedding
//! into continuous time.
//!
//! A `DiscreteKernel` of order `k` is a finite-support map on `N^k` with the
//! scaled norm `|f|^2 = n^{-k} sum f^2`. Its embedding is the piecewise
//! constant function `u -> f(ceil(n u_1), ..., ceil(n u_k))`, which preserves
//! the norm exactly (every lattice cell has Lebesgue measure `n^{-k}`).

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Enumeration cost guard shared by the exact engines.
pub const COST_GUARD: u128 = 1 << 24;

/// A step function on left half-open intervals: `sum_j a_j 1_{(b_j, c_j]}`.
/// Overlapping pieces add.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pieces: Vec<(f64, f64, f64)>, // (lo, hi, level)
}

impl StepFunction {
    pub fn new(pieces: Vec<(f64, f64, f64)>) -> Result<Self> {
        for &(lo, hi, a) in &pieces {
            if !(lo.is_finite() && hi.is_finite() && a.is_finite()) {
                return Err(Error::InvalidArgument("step piece must be finite".into()));
            }
            if lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "step piece needs lo < hi, got ({lo}, {hi}]"
                )));
            }
        }
        Ok(Self { pieces })
    }

    /// The indicator `1_{(lo, hi]}`.
    pub fn indicator(lo: f64, hi: f64) -> Self {
        Self::new(vec![(lo, hi, 1.0)]).expect("indicator bounds")
    }

    pub fn zero() -> Self {
        Self { pieces: Vec::new() }
    }

    pub fn pieces(&self) -> &[(f64, f64, f64)] {
        &self.pieces
    }

    pub fn value(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .map(|&(lo, hi, a)| if x > lo && x <= hi { a } else { 0.0 })
            .sum()
    }

    /// Right edge of the support (0 for the zero function).
    pub fn support_end(&self) -> f64 {
        self.pieces.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    /// `sum_j |a_j|`, the constant in the discretization error bound.
    pub fn abs_coeff_sum(&self) -> f64 {
        self.pieces.iter().map(|p| p.2.abs()).sum()
    }

    /// Sorted, deduplicated breakpoints including 0.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bs = vec![0.0];
        for &(lo, hi, _) in &self.pieces {
            bs.push(lo.max(0.0));
            bs.push(hi.max(0.0));
        }
        bs.sort_by(f64::total_cmp);
        bs.dedup();
        bs
    }

    /// Exact `L^2([0,infinity))` inner product with another step function.
    pub fn inner_product(&self, other: &StepFunction) -> f64 {
        let mut bs = self.breakpoints();
        bs.extend(other.breakpoints());
        bs.sort_by(f64::total_cmp);
        bs.dedup();
        let mut acc = 0.0;
        for w in bs.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            acc += self.value(mid) * other.value(mid) * (w[1] - w[0]);
        }
        acc
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.inner_product(self)
    }
}

/// Scalar multiple of a tensor product of order-1 step functions, used as an
/// exact piecewise-constant target for embedded-kernel distances.
#[derive(Debug, Clone)]
pub struct TensorStep {
    pub coeff: f64,
    pub factors: Vec<StepFunction>,
}

impl TensorStep {
    pub fn new(coeff: f64, factors: Vec<StepFunction>) -> Self {
        Self { coeff, factors }
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.coeff
            * self
                .factors
                .iter()
                .zip(u)
                .map(|(f, &x)| f.value(x))
                .product::<f64>()
    }
}

/// Finite-support function on `N^k` with the `n^{-k}`-scaled inner product.
///
/// When `symmetric` is set, only sorted index tuples are stored and lookups
/// sort their argument first. `off_diagonal` declares that the kernel
/// vanishes whenever two indices coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    k: usize,
    n: u32,
    values: BTreeMap<Vec<u32>, f64>,
    symmetric: bool,
    off_diagonal: bool,
}

fn orbit_size(key: &[u32]) -> f64 {
    // number of distinct permutations of a sorted tuple: k! / prod(mult!)
    let mut size = 1.0;
    let mut next = 1.0;
    let mut run = 0.0;
    for (pos, &v) in key.iter().enumerate() {
        if pos > 0 && v == key[pos - 1] {
            run += 1.0;
        } else {
            run = 1.0;
        }
        size *= next / run;
        next += 1.0;
    }
    size
}

fn has_repeat(key: &[u32]) -> bool {
    let mut sorted = key.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).any(|w| w[0] == w[1])
}

impl DiscreteKernel {
    pub fn new(k: usize, n: u32, symmetric: bool, off_diagonal: bool) -> Self {
        assert!(n >= 1, "mesh parameter must be positive");
        Self {
            k,
            n,
            values: BTreeMap::new(),
            symmetric,
            off_diagonal,
        }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn mesh(&self) -> u32 {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_off_diagonal(&self) -> bool {
        self.off_diagonal
    }

    /// Set the value on a tuple (and its orbit, for symmetric kernels).
    /// Indices are 1-based; a zero index is rejected.
    pub fn set(&mut self, idx: &[u32], v: f64) {
        assert_eq!(idx.len(), self.k, "tuple arity mismatch");
        assert!(idx.iter().all(|&i| i >= 1), "kernel indices are 1-based");
        if self.off_diagonal && has_repeat(idx) {
            assert!(v == 0.0, "off-diagonal kernel cannot carry diagonal mass");
            return;
        }
        let mut key = idx.to_vec();
        if self.symmetric {
            key.sort_unstable();
        }
        if v == 0.0 {
            self.values.remove(&key);
        } else {
            self.values.insert(key, v);
        }
    }

    /// Value at a tuple; 0 outside the support and whenever an index is 0
    /// (the embedding convention at `u = 0`).
    pub fn value(&self, idx: &[u32]) -> f64 {
        assert_eq!(idx.len(), self.k, "tuple arity mismatch");
        if idx.contains(&0) {
            return 0.0;
        }
        if self.off_diagonal && has_repeat(idx) {
            return 0.0;
        }
        if self.symmetric {
            let mut key = idx.to_vec();
            key.sort_unstable();
            self.values.get(&key).copied().unwrap_or(0.0)
        } else {
            self.values.get(idx).copied().unwrap_or(0.0)
        }
    }

    /// Stored entries (canonical representatives for symmetric kernels).
    pub fn entries(&self) -> impl Iterator<Item = (&Vec<u32>, f64)> {
        self.values.iter().map(|(k, &v)| (k, v))
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    /// Largest index appearing in the support.
    pub fn max_index(&self) -> u32 {
        self.values
            .keys()
            .flat_map(|k| k.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// `|f|^2 = n^{-k} sum over all tuples of f^2`, counting symmetric
    /// orbits by their size.
    pub fn l2_norm_sq(&self) -> f64 {
        let scale = (self.n as f64).powi(-(self.k as i32));
        let mut acc = 0.0;
        for (key, v) in self.values.iter() {
            let mult = if self.symmetric { orbit_size(key) } else { 1.0 };
            acc += mult * v * v;
        }
        scale * acc
    }

    /// Scaled inner product with a kernel of the same order, mesh, and
    /// storage convention.
    pub fn inner_product(&self, other: &DiscreteKernel) -> Result<f64> {
        if self.k != other.k || self.n != other.n {
            return Err(Error::Mismatch(format!(
                "kernel inner product needs matching (k, n), got ({}, {}) vs ({}, {})",
                self.k, self.n, other.k, other.n
            )));
        }
        if self.symmetric != other.symmetric {
            return Err(Error::Mismatch(
                "kernel inner product needs matching symmetry convention".into(),
            ));
        }
        let scale = (self.n as f64).powi(-(self.k as i32));
        let mut acc = 0.0;
        for (key, v) in self.values.iter() {
            let w = other.values.get(key).copied().unwrap_or(0.0);
            let mult = if self.symmetric { orbit_size(key) } else { 1.0 };
            acc += mult * v * w;
        }
        Ok(scale * acc)
    }

    /// Average over all coordinate permutations. Idempotent.
    pub fn symmetrize(&self) -> DiscreteKernel {
        if self.symmetric || self.k <= 1 {
            let mut out = self.clone();
            out.symmetric = true;
            return out;
        }
        let mut out = DiscreteKernel::new(self.k, self.n, true, self.off_diagonal);
        let perms = permutations(self.k);
        let factor = 1.0 / perms.len() as f64;
        let mut seen: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for key in self.values.keys() {
            let mut sorted = key.clone();
            sorted.sort_unstable();
            if seen.contains_key(&sorted) {
                continue;
            }
            let mut acc = 0.0;
            for p in &perms {
                let permuted: Vec<u32> = p.iter().map(|&j| sorted[j]).collect();
                acc += self.value(&permuted);
            }
            seen.insert(sorted, acc * factor);
        }
        for (key, v) in seen {
            if v != 0.0 {
                out.values.insert(key, v);
            }
        }
        out
    }

    /// Zero the diagonal part (tuples with a repeated index).
    pub fn remove_diagonal(&self) -> DiscreteKernel {
        let mut out = DiscreteKernel::new(self.k, self.n, self.symmetric, true);
        for (key, &v) in self.values.iter() {
            if !has_repeat(key) {
                out.values.insert(key.clone(), v);
            }
        }
        out
    }

    /// Declared-flag validation over the whole support: symmetry compares
    /// all permuted lookups, the diagonal check scans the stored keys.
    pub fn check_flags(&self) -> Result<()> {
        if self.off_diagonal {
            for key in self.values.keys() {
                if has_repeat(key) {
                    return Err(Error::KernelValidation(format!(
                        "off-diagonal kernel carries mass on {key:?}"
                    )));
                }
            }
        }
        if self.symmetric && self.k >= 2 {
            // symmetric storage is canonical by construction; nothing to scan
            return Ok(());
        }
        Ok(())
    }

    /// Tensor power of an order-1 kernel. Commutes with the embedding.
    pub fn tensor_power(&self, k: usize) -> Result<DiscreteKernel> {
        if self.k != 1 {
            return Err(Error::InvalidArgument(
                "tensor_power takes an order-1 kernel".into(),
            ));
        }
        if k == 0 {
            return Err(Error::InvalidArgument(
                "tensor power order must be >= 1".into(),
            ));
        }
        let support: Vec<(u32, f64)> = self.values.iter().map(|(key, &v)| (key[0], v)).collect();
        let needed = (support.len() as u128)
            .checked_pow(k as u32)
            .unwrap_or(u128::MAX);
        if needed > COST_GUARD {
            return Err(Error::CostGuard {
                what: "tensor_power",
                needed,
                limit: COST_GUARD,
            });
        }
        let mut out = DiscreteKernel::new(k, self.n, true, false);
        // iterate nondecreasing index combinations; values are symmetric anyway
        let mut combo = vec![0usize; k];
        loop {
            let key: Vec<u32> = combo.iter().map(|&c| support[c].0).collect();
            let val: f64 = combo.iter().map(|&c| support[c].1).product();
            if val != 0.0 {
                out.values.insert(key, val);
            }
            // advance nondecreasing multi-index
            let mut pos = k;
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                if combo[pos] + 1 < support.len() {
                    let next = combo[pos] + 1;
                    for slot in combo.iter_mut().skip(pos) {
                        *slot = next;
                    }
                    break;
                }
            }
        }
    }

    /// CSV rows `i1,...,ik,value` over the stored entries (canonical
    /// sorted representatives for symmetric kernels).
    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (1..=self.k).map(|j| format!("i{j}")).collect();
        let mut out = format!("{},value\n", header.join(","));
        for (key, v) in self.values.iter() {
            let idx: Vec<String> = key.iter().map(|i| i.to_string()).collect();
            if self.k == 0 {
                out.push_str(&format!("{v}\n"));
            } else {
                out.push_str(&format!("{},{}\n", idx.join(","), v));
            }
        }
        out
    }

    /// Embedded value `f(ceil(n u_1), ..., ceil(n u_k))`.
    pub fn embedded_value(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.k);
        let idx: Vec<u32> = u
            .iter()
            .map(|&x| {
                if x <= 0.0 {
                    0
                } else {
                    (x * self.n as f64).ceil() as u32
                }
            })
            .collect();
        self.value(&idx)
    }

    /// Exact squared `L^2([0,infinity)^k)` distance between the embedded
    /// kernel and a piecewise-constant tensor target.
    pub fn embedded_distance_sq(&self, target: &TensorStep) -> Result<f64> {
        if target.order() != self.k {
            return Err(Error::Mismatch(format!(
                "target order {} vs kernel order {}",
                target.order(),
                self.k
            )));
        }
        if self.k == 0 {
            let d = self.value(&[]) - target.coeff;
            return Ok(d * d);
        }
        let n = self.n as f64;
        // merged breakpoints per axis: the lattice up to the joint support
        // end plus every target breakpoint
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(self.k);
        let max_idx = self.max_index();
        let mut cells: u128 = 1;
        for j in 0..self.k {
            let mut bs: Vec<f64> = Vec::new();
            let t_end = target.factors[j].support_end();
            let end = (max_idx as f64 / n).max(t_end);
            let lattice_end = (end * n).ceil() as u32;
            for i in 0..=lattice_end {
                bs.push(i as f64 / n);
            }
            for &b in &target.factors[j].breakpoints() {
                bs.push(b);
            }
            bs.sort_by(f64::total_cmp);
            bs.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
            cells = cells.saturating_mul((bs.len() - 1) as u128);
            axes.push(bs);
        }
        if cells > COST_GUARD {
            return Err(Error::CostGuard {
                what: "embedded_distance",
                needed: cells,
                limit: COST_GUARD,
            });
        }
        let mut acc = 0.0;
        let mut cursor = vec![0usize; self.k];
        let mut mid = vec![0.0f64; self.k];
        'outer: loop {
            let mut vol = 1.0;
            for j in 0..self.k {
                let lo = axes[j][cursor[j]];
                let hi = axes[j][cursor[j] + 1];
                vol *= hi - lo;
                mid[j] = 0.5 * (lo + hi);
            }
            let d = self.embedded_value(&mid) - target.value(&mid);
            acc += d * d * vol;
            for j in (0..self.k).rev() {
                cursor[j] += 1;
                if cursor[j] + 1 < axes[j].len() {
                    continue 'outer;
                }
                cursor[j] = 0;
            }
            break;
        }
        Ok(acc)
    }
}

/// `g -> (g(1/n), g(2/n), ...)`, the lattice discretization of a step
/// function. The result has finite support because `g` does.
pub fn discretize(g: &StepFunction, n: u32) -> DiscreteKernel {
    let mut out = DiscreteKernel::new(1, n, false, false);
    let end = (g.support_end() * n as f64).ceil() as u32 + 1;
    for i in 1..=end {
        let v = g.value(i as f64 / n as f64);
        if v != 0.0 {
            out.values.insert(vec![i], v);
        }
    }
    out
}

/// Glue an indexed family of order-`k` kernels into an order-`k+1` kernel
/// whose last coordinate is the (1-based) family index.
pub fn process_kernel(family: &[DiscreteKernel]) -> Result<DiscreteKernel> {
    let first = family
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty kernel family".into()))?;
    let (k, n) = (first.k, first.n);
    for f in family {
        if f.k != k || f.n != n {
            return Err(Error::Mismatch("kernel family must share (k, n)".into()));
        }
    }
    let mut out = DiscreteKernel::new(k + 1, n, false, false);
    let perms = permutations(k.max(1));
    for (pos, f) in family.iter().enumerate() {
        let i = (pos + 1) as u32;
        for (key, &v) in f.values.iter() {
            if f.symmetric && k >= 2 {
                // expand the orbit: the glued kernel is symmetric in the
                // first k slots only, so store tuples literally
                let mut seen: Vec<Vec<u32>> = Vec::new();
                for p in &perms {
                    let mut tuple: Vec<u32> = p.iter().map(|&j| key[j]).collect();
                    tuple.push(i);
                    if !seen.contains(&tuple) {
                        seen.push(tuple);
                    }
                }
                for tuple in seen {
                    out.values.insert(tuple, v);
                }
            } else {
                let mut tuple = key.clone();
                tuple.push(i);
                out.values.insert(tuple, v);
            }
        }
    }
    Ok(out)
}

pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = vec![vec![0usize]];
    for next in 1..k {
        let mut grown = Vec::with_capacity(out.len() * (next + 1));
        for p in &out {
            for slot in 0..=next {
                let mut q = p.clone();
                q.insert(slot, next);
                grown.push(q);
            }
        }
        out = grown;
    }
    out
}
