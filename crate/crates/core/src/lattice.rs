//! Pathwise evaluation of the discrete operators for finite-atom noise on a
//! finite horizon: Wick exponential, Malliavin derivative, Skorokhod and Ito
//! integrals, Clark-Ocone derivative, and the Monte Carlo S-transform.
//!
//! Conditional expectations over a single coordinate are exact finite sums
//! over the noise atoms, so every operator is exact per outcome. Operators
//! never average over paths; expectations are formed by the enumeration
//! oracle or by Monte Carlo in the experiments layer.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{DiscreteKernel, StepFunction, COST_GUARD};
use crate::noise::NoiseSpec;
use crate::path::WalkPath;
use crate::rng::{mean, pairwise_sum, sample_variance};

/// Shared evaluation map from an increment vector to a real.
pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A random variable as a pure evaluation map on increment vectors of
/// length `m`. The map must be deterministic and total on the product of
/// atom values.
#[derive(Clone)]
pub struct RandomVariableFn {
    m: usize,
    eval: EvalFn,
    label: String,
}

impl std::fmt::Debug for RandomVariableFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RandomVariableFn({}, m={})", self.label, self.m)
    }
}

impl RandomVariableFn {
    pub fn new(
        m: usize,
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            m,
            eval: Arc::new(eval),
            label: label.into(),
        }
    }

    pub fn constant(m: usize, c: f64) -> Self {
        Self::new(m, format!("const({c})"), move |_| c)
    }

    /// The coordinate map `omega -> omega_i` (1-based).
    pub fn coordinate(m: usize, i: usize) -> Self {
        assert!(i >= 1 && i <= m);
        Self::new(m, format!("xi_{i}"), move |omega| omega[i - 1])
    }

    pub fn horizon(&self) -> usize {
        self.m
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, outcome: &[f64]) -> f64 {
        debug_assert_eq!(outcome.len(), self.m);
        (self.eval)(outcome)
    }
}

/// An indexed family of random variables `Z_i`, `i = 1..=m`. When
/// `predictable` is set, component `i` may depend on coordinates
/// `1..i-1` only (spot-checked by tests, relied on by the Ito integral).
#[derive(Clone, Debug)]
pub struct DiscreteProcessFn {
    components: Vec<RandomVariableFn>,
    predictable: bool,
}

impl DiscreteProcessFn {
    pub fn new(components: Vec<RandomVariableFn>, predictable: bool) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty process".into()))?;
        let m = first.horizon();
        if components.iter().any(|c| c.horizon() != m) {
            return Err(Error::Mismatch(
                "process components disagree on horizon".into(),
            ));
        }
        Ok(Self {
            components,
            predictable,
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.components[0].horizon()
    }

    pub fn is_predictable(&self) -> bool {
        self.predictable
    }

    pub fn component(&self, i: usize) -> &RandomVariableFn {
        &self.components[i - 1]
    }

    /// Perturb coordinates `>= i` on random outcomes and check component `i`
    /// does not move. A cheap guard on the `predictable` flag.
    pub fn spot_check_predictable<R: Rng + ?Sized>(
        &self,
        spec: &NoiseSpec,
        samples: usize,
        rng: &mut R,
    ) -> bool {
        let m = self.horizon();
        for _ in 0..samples {
            let mut outcome = spec.sample(rng, m);
            for i in 1..=self.len() {
                let before = self.component(i).eval(&outcome);
                let j = i + (rng.random::<u64>() as usize % (m - i + 1));
                let old = outcome[j - 1];
                let replacement = spec.atoms()[rng.random::<u64>() as usize % spec.atom_count()].0;
                outcome[j - 1] = replacement;
                let after = self.component(i).eval(&outcome);
                outcome[j - 1] = old;
                if (before - after).abs() > 1e-12 {
                    return false;
                }
            }
        }
        true
    }
}

/// Conditional expectation over coordinate `i` given everything else:
/// the exact atom sum `sum_a p_a X(omega with omega_i = a)`.
pub fn condition_on_coordinate(
    x: &RandomVariableFn,
    i: usize,
    outcome: &[f64],
    spec: &NoiseSpec,
) -> f64 {
    let mut local = outcome.to_vec();
    let mut acc = 0.0;
    for &(v, p) in spec.atoms() {
        local[i - 1] = v;
        acc += p * x.eval(&local);
    }
    acc
}

/// `prod_i (1 + f(i) xi_i / sqrt(n))`, the discrete Wick exponential of the
/// discrete Wiener integral of an order-1 kernel.
pub fn wick_exponential(f: &DiscreteKernel, outcome: &[f64], n: u32) -> f64 {
    debug_assert_eq!(f.order(), 1);
    let scale = 1.0 / (n as f64).sqrt();
    let mut acc = 1.0;
    for (key, v) in f.entries() {
        let i = key[0] as usize;
        if i >= 1 && i <= outcome.len() {
            acc *= 1.0 + scale * v * outcome[i - 1];
        }
    }
    acc
}

/// Discretized Malliavin derivative at time `i`:
/// `sqrt(n) E[xi_i X | all other coordinates]`, an exact atom sum. For
/// binary noise this coincides with the scaled difference operator.
pub fn malliavin_derivative(
    x: &RandomVariableFn,
    i: usize,
    outcome: &[f64],
    spec: &NoiseSpec,
    n: u32,
) -> Result<f64> {
    if i < 1 || i > x.horizon() {
        return Err(Error::OutOfRange(format!(
            "coordinate {i} outside 1..={}",
            x.horizon()
        )));
    }
    let mut local = outcome.to_vec();
    let mut acc = 0.0;
    for &(v, p) in spec.atoms() {
        local[i - 1] = v;
        acc += p * v * x.eval(&local);
    }
    Ok((n as f64).sqrt() * acc)
}

/// The binary fast path: `sqrt(n) b/(b^2+1) (X(..b..) - X(..-1/b..))`.
pub fn malliavin_derivative_binary(
    x: &RandomVariableFn,
    i: usize,
    outcome: &[f64],
    b: f64,
    n: u32,
) -> Result<f64> {
    if i < 1 || i > x.horizon() {
        return Err(Error::OutOfRange(format!(
            "coordinate {i} outside 1..={}",
            x.horizon()
        )));
    }
    let mut local = outcome.to_vec();
    local[i - 1] = b;
    let up = x.eval(&local);
    local[i - 1] = -1.0 / b;
    let down = x.eval(&local);
    Ok((n as f64).sqrt() * b / (b * b + 1.0) * (up - down))
}

/// Finite-horizon discrete Skorokhod integral
/// `sum_{i<=N} E[Z_i | F_{-i}] xi_i / sqrt(n)`.
pub fn skorokhod_integral(
    z: &DiscreteProcessFn,
    upto: usize,
    outcome: &[f64],
    spec: &NoiseSpec,
    n: u32,
) -> Result<f64> {
    if upto > z.len() {
        return Err(Error::OutOfRange(format!(
            "truncation {upto} beyond process length {}",
            z.len()
        )));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let terms: Vec<f64> = (1..=upto)
        .map(|i| condition_on_coordinate(z.component(i), i, outcome, spec) * outcome[i - 1] * scale)
        .collect();
    Ok(pairwise_sum(&terms))
}

/// The binary pathwise form
/// `sum Z_i xi_i/sqrt(n) - (1/n) sum xi_i^2 D_i Z_i`; must agree with
/// `skorokhod_integral` for binary noise.
pub fn skorokhod_integral_binary(
    z: &DiscreteProcessFn,
    upto: usize,
    outcome: &[f64],
    b: f64,
    n: u32,
) -> Result<f64> {
    if upto > z.len() {
        return Err(Error::OutOfRange(format!(
            "truncation {upto} beyond process length {}",
            z.len()
        )));
    }
    let nf = n as f64;
    let terms: Vec<f64> = (1..=upto)
        .map(|i| {
            let xi = outcome[i - 1];
            let direct = z.component(i).eval(outcome) * xi / nf.sqrt();
            let d = malliavin_derivative_binary(z.component(i), i, outcome, b, n)?;
            Ok(direct - xi * xi * d / nf)
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&terms))
}

/// Discrete Ito integral `sum_i Z_i xi_i / sqrt(n)` of a predictable
/// integrand against the walk.
pub fn ito_integral(z: &DiscreteProcessFn, path: &WalkPath) -> Result<f64> {
    if !z.is_predictable() {
        return Err(Error::NotPredictable);
    }
    if z.len() > path.len() {
        return Err(Error::OutOfRange(format!(
            "process length {} beyond path length {}",
            z.len(),
            path.len()
        )));
    }
    let scale = 1.0 / (path.mesh() as f64).sqrt();
    let outcome = path.increments();
    let terms: Vec<f64> = (1..=z.len())
        .map(|i| z.component(i).eval(outcome) * outcome[i - 1] * scale)
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Evaluation mode for the Clark-Ocone derivative.
#[derive(Debug, Clone, Copy)]
pub enum ClarkOconeMode {
    /// Enumerate every suffix outcome; refused beyond the cost guard.
    Exact,
    /// Sample the suffix, keeping the atom sum over coordinate `i` exact.
    NestedMonteCarlo { samples: usize },
}

/// Discretized Clark-Ocone derivative
/// `sqrt(n) E[xi_i X | xi_1..xi_{i-1} = prefix]`.
pub fn clark_ocone<R: Rng + ?Sized>(
    x: &RandomVariableFn,
    i: usize,
    prefix: &[f64],
    spec: &NoiseSpec,
    n: u32,
    mode: ClarkOconeMode,
    rng: &mut R,
) -> Result<f64> {
    Ok(clark_ocone_with_variance(x, i, prefix, spec, n, mode, rng)?.0)
}

/// As [`clark_ocone`], also returning the estimator variance of the nested
/// Monte Carlo mode (0 in exact mode), for noise-aware error accounting.
pub fn clark_ocone_with_variance<R: Rng + ?Sized>(
    x: &RandomVariableFn,
    i: usize,
    prefix: &[f64],
    spec: &NoiseSpec,
    n: u32,
    mode: ClarkOconeMode,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let m = x.horizon();
    if i < 1 || i > m {
        return Err(Error::OutOfRange(format!("coordinate {i} outside 1..={m}")));
    }
    if prefix.len() != i - 1 {
        return Err(Error::InvalidArgument(format!(
            "prefix length {} does not match coordinate {i}",
            prefix.len()
        )));
    }
    let sqrt_n = (n as f64).sqrt();
    let mut outcome = vec![0.0; m];
    outcome[..i - 1].copy_from_slice(prefix);

    // the atom sum over coordinate i is always exact
    let inner = |outcome: &mut Vec<f64>, x: &RandomVariableFn| {
        let mut acc = 0.0;
        for &(v, p) in spec.atoms() {
            outcome[i - 1] = v;
            acc += p * v * x.eval(outcome);
        }
        acc
    };

    let free = m - i; // suffix coordinates i+1..=m
    match mode {
        ClarkOconeMode::Exact => {
            let states = (spec.atom_count() as u128)
                .checked_pow(free as u32 + 1)
                .unwrap_or(u128::MAX);
            if states > COST_GUARD {
                return Err(Error::CostGuard {
                    what: "clark_ocone exact suffix enumeration",
                    needed: states,
                    limit: COST_GUARD,
                });
            }
            let atoms = spec.atoms();
            let count = atoms.len() as u64;
            let outcomes = count.pow(free as u32);
            let mut acc = 0.0;
            for code in 0..outcomes {
                let mut rem = code;
                let mut weight = 1.0;
                for slot in 0..free {
                    let (v, p) = atoms[(rem % count) as usize];
                    rem /= count;
                    outcome[i + slot] = v;
                    weight *= p;
                }
                acc += weight * inner(&mut outcome, x);
            }
            Ok((sqrt_n * acc, 0.0))
        }
        ClarkOconeMode::NestedMonteCarlo { samples } => {
            if samples < 2 {
                return Err(Error::InvalidArgument(
                    "nested Monte Carlo needs at least 2 samples".into(),
                ));
            }
            let draws: Vec<f64> = (0..samples)
                .map(|_| {
                    for slot in 0..free {
                        outcome[i + slot] = spec.draw(rng);
                    }
                    sqrt_n * inner(&mut outcome, x)
                })
                .collect();
            let est = mean(&draws);
            let var = sample_variance(&draws) / samples as f64;
            Ok((est, var))
        }
    }
}

/// Monte Carlo estimate of the discrete S-transform
/// `(S^n X)(g) = E[X exp_wick(I^n(g_n))]`, with its standard error.
pub fn s_transform_estimate<R: Rng + ?Sized>(
    x: &RandomVariableFn,
    g: &StepFunction,
    n: u32,
    spec: &NoiseSpec,
    paths: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if paths < 2 {
        return Err(Error::InvalidArgument("need at least 2 paths".into()));
    }
    let g_n = crate::kernel::discretize(g, n);
    let m = x.horizon();
    let vals: Vec<f64> = (0..paths)
        .map(|_| {
            let outcome = spec.sample(rng, m);
            x.eval(&outcome) * wick_exponential(&g_n, &outcome, n)
        })
        .collect();
    let est = mean(&vals);
    let se = (sample_variance(&vals) / paths as f64).sqrt();
    Ok((est, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_for;

    fn binary(b: f64) -> NoiseSpec {
        NoiseSpec::binary(b).unwrap()
    }

    fn ones_kernel(n: u32, m: u32) -> DiscreteKernel {
        let mut f = DiscreteKernel::new(1, n, false, false);
        for i in 1..=m {
            f.set(&[i], 1.0);
        }
        f
    }

    #[test]
    fn wick_of_zero_kernel_is_one() {
        let f = DiscreteKernel::new(1, 4, false, false);
        assert_eq!(wick_exponential(&f, &[1.0, -1.0], 4), 1.0);
    }

    #[test]
    fn wick_hand_value_and_second_moment() {
        // n=1, f=(1,1), outcome (1,1): (1+1)(1+1) = 4; the mean of the
        // square over the four equally likely outcomes is also 4
        let f = ones_kernel(1, 2);
        assert_eq!(wick_exponential(&f, &[1.0, 1.0], 1), 4.0);
        let outcomes = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let second: f64 = outcomes
            .iter()
            .map(|o| wick_exponential(&f, o, 1).powi(2) * 0.25)
            .sum();
        assert!((second - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn malliavin_of_constant_vanishes() {
        let spec = binary(2.0);
        let x = RandomVariableFn::constant(3, 5.5);
        let d = malliavin_derivative(&x, 2, &[2.0, -0.5, 2.0], &spec, 4).unwrap();
        assert!(d.abs() <= 1e-12);
    }

    #[test]
    fn malliavin_of_product_is_other_coordinate() {
        let spec = binary(1.0);
        let x = RandomVariableFn::new(2, "xi1*xi2", |o| o[0] * o[1]);
        for outcome in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
            let d = malliavin_derivative(&x, 1, &outcome, &spec, 1).unwrap();
            assert!((d - outcome[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn malliavin_binary_fast_path_agrees() {
        let spec = binary(2.0);
        let x = RandomVariableFn::new(3, "nl", |o| (o[0] + 0.5 * o[1] * o[2]).exp());
        let outcome = [2.0, -0.5, -0.5];
        for i in 1..=3 {
            let slow = malliavin_derivative(&x, i, &outcome, &spec, 4).unwrap();
            let fast = malliavin_derivative_binary(&x, i, &outcome, 2.0, 4).unwrap();
            assert!((slow - fast).abs() <= 1e-12, "i={i}: {slow} vs {fast}");
        }
    }

    #[test]
    fn malliavin_of_wick_exponential_peels_one_factor() {
        // D_i exp(I(f)) = f(i) exp(I(f restricted away from i))
        let spec = binary(1.0);
        let n = 2u32;
        let mut f = DiscreteKernel::new(1, n, false, false);
        f.set(&[1], 0.7);
        f.set(&[2], -1.3);
        f.set(&[3], 0.4);
        let fk = f.clone();
        let x = RandomVariableFn::new(3, "wick", move |o| wick_exponential(&fk, o, n));
        for outcome in [[1.0, 1.0, -1.0], [-1.0, 1.0, 1.0]] {
            for i in 1..=3usize {
                let d = malliavin_derivative(&x, i, &outcome, &spec, n).unwrap();
                let mut rest = f.clone();
                rest.set(&[i as u32], 0.0);
                let expected = f.value(&[i as u32]) * wick_exponential(&rest, &outcome, n);
                assert!((d - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn skorokhod_of_constant_process_is_the_walk() {
        let spec = binary(1.0);
        let n = 4u32;
        let z = DiscreteProcessFn::new(
            (1..=4)
                .map(|_| RandomVariableFn::constant(4, 1.0))
                .collect(),
            true,
        )
        .unwrap();
        let outcome = [1.0, -1.0, -1.0, 1.0];
        let d = skorokhod_integral(&z, 3, &outcome, &spec, n).unwrap();
        let walk = (outcome[0] + outcome[1] + outcome[2]) / 2.0;
        assert!((d - walk).abs() <= 1e-12);
    }

    #[test]
    fn skorokhod_of_own_noise_vanishes() {
        let spec = binary(2.0);
        let z = DiscreteProcessFn::new(
            (1..=3)
                .map(|i| RandomVariableFn::coordinate(3, i))
                .collect(),
            false,
        )
        .unwrap();
        let d = skorokhod_integral(&z, 3, &[2.0, -0.5, 2.0], &spec, 9).unwrap();
        assert!(d.abs() <= 1e-12);
    }

    #[test]
    fn skorokhod_swapped_coordinates_hand_value() {
        // Z_1 = xi_2, Z_2 = xi_1 at n = 1 gives 2 xi_1 xi_2 per outcome
        let spec = binary(1.0);
        let z = DiscreteProcessFn::new(
            vec![
                RandomVariableFn::new(2, "xi2", |o| o[1]),
                RandomVariableFn::new(2, "xi1", |o| o[0]),
            ],
            false,
        )
        .unwrap();
        for outcome in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
            let d = skorokhod_integral(&z, 2, &outcome, &spec, 1).unwrap();
            assert!((d - 2.0 * outcome[0] * outcome[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn skorokhod_binary_form_agrees_with_atom_sums() {
        let spec = binary(2.0);
        let n = 3u32;
        let z = DiscreteProcessFn::new(
            vec![
                RandomVariableFn::new(3, "a", |o| (o[1] - o[2]).powi(2)),
                RandomVariableFn::new(3, "b", |o| o[0] * o[2] + 1.0),
                RandomVariableFn::new(3, "c", |o| (o[0] * o[1] * o[2]).sin()),
            ],
            false,
        )
        .unwrap();
        let mut rng = stream_for(2, 0, 0);
        for _ in 0..50 {
            let outcome = spec.sample(&mut rng, 3);
            let via_atoms = skorokhod_integral(&z, 3, &outcome, &spec, n).unwrap();
            let via_diff = skorokhod_integral_binary(&z, 3, &outcome, 2.0, n).unwrap();
            assert!((via_atoms - via_diff).abs() <= 1e-12);
        }
    }

    #[test]
    fn ito_requires_predictable_flag() {
        let z = DiscreteProcessFn::new(vec![RandomVariableFn::constant(2, 1.0)], false).unwrap();
        let path = WalkPath::new(2, vec![1.0, -1.0], "t").unwrap();
        assert!(matches!(
            ito_integral(&z, &path),
            Err(Error::NotPredictable)
        ));
    }

    #[test]
    fn ito_of_constant_is_terminal_walk() {
        let z = DiscreteProcessFn::new(
            (1..=4)
                .map(|_| RandomVariableFn::constant(4, 1.0))
                .collect(),
            true,
        )
        .unwrap();
        let path = WalkPath::new(4, vec![1.0, 1.0, -1.0, 1.0], "t").unwrap();
        let ito = ito_integral(&z, &path).unwrap();
        assert!((ito - path.value(1.0).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn ito_of_walk_against_itself_telescopes() {
        // sum B_{(i-1)/n} xi_i/sqrt(n) = ((B^n_1)^2 - n^{-1} sum xi^2)/2
        let n = 4u32;
        let z = DiscreteProcessFn::new(
            (1..=4)
                .map(|i| {
                    RandomVariableFn::new(4, format!("B_{i}"), move |o| {
                        o[..i - 1].iter().sum::<f64>() / 2.0
                    })
                })
                .collect(),
            true,
        )
        .unwrap();
        let spec = binary(2.0);
        let mut rng = stream_for(3, 0, 0);
        for _ in 0..20 {
            let path = simulate(&spec, n, 4, &mut rng);
            let ito = ito_integral(&z, &path).unwrap();
            let terminal = path.value(1.0).unwrap();
            let qv: f64 = path.increments().iter().map(|x| x * x).sum::<f64>() / n as f64;
            assert!((ito - (terminal * terminal - qv) / 2.0).abs() <= 1e-12);
        }
    }

    fn simulate(spec: &NoiseSpec, n: u32, m: usize, rng: &mut crate::rng::Stream) -> WalkPath {
        crate::path::simulate_walk(spec, n, m, rng).unwrap()
    }

    #[test]
    fn ito_isometry_by_full_enumeration() {
        // E[(int Z dB^n)^2] = (1/n) sum E[Z_i^2] for predictable Z
        let spec = binary(2.0);
        let n = 3u32;
        let m = 5usize;
        let space = crate::oracle::EnumeratedSpace::new(spec.clone(), m).unwrap();
        let mut rng = stream_for(14, 0, 0);
        for _ in 0..10 {
            let components: Vec<RandomVariableFn> = (1..=m)
                .map(|i| {
                    let w: Vec<f64> = (0..i - 1).map(|_| rng.random::<f64>() - 0.5).collect();
                    RandomVariableFn::new(m, "pred", move |o| {
                        0.5 + w.iter().zip(o).map(|(a, x)| a * x).sum::<f64>()
                    })
                })
                .collect();
            let z = DiscreteProcessFn::new(components, true).unwrap();
            let zc = z.clone();
            let spec_c = spec.clone();
            let lhs = space
                .expectation_of(|o| skorokhod_integral(&zc, m, o, &spec_c, n).unwrap().powi(2));
            let mut rhs = 0.0;
            for i in 1..=m {
                rhs += space.expectation_of(|o| z.component(i).eval(o).powi(2)) / n as f64;
            }
            assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn ito_agrees_with_skorokhod_on_predictable_inputs() {
        let spec = binary(1.0);
        let n = 2u32;
        let z = DiscreteProcessFn::new(
            vec![
                RandomVariableFn::constant(3, 2.0),
                RandomVariableFn::new(3, "p2", |o| o[0]),
                RandomVariableFn::new(3, "p3", |o| o[0] * o[1] - 1.0),
            ],
            true,
        )
        .unwrap();
        let mut rng = stream_for(5, 0, 0);
        for _ in 0..20 {
            let path = simulate(&spec, n, 3, &mut rng);
            let ito = ito_integral(&z, &path).unwrap();
            let sk = skorokhod_integral(&z, 3, path.increments(), &spec, n).unwrap();
            assert!((ito - sk).abs() <= 1e-12);
        }
        assert!(z.spot_check_predictable(&spec, 32, &mut rng));
    }

    #[test]
    fn clark_ocone_hand_values() {
        // X = xi1 xi2 at n = 1: grad_1 X = 0, grad_2 X = xi1
        let spec = binary(1.0);
        let x = RandomVariableFn::new(2, "xi1*xi2", |o| o[0] * o[1]);
        let mut rng = stream_for(6, 0, 0);
        let g1 = clark_ocone(&x, 1, &[], &spec, 1, ClarkOconeMode::Exact, &mut rng).unwrap();
        assert!(g1.abs() <= 1e-12);
        for prefix in [1.0, -1.0] {
            let g2 =
                clark_ocone(&x, 2, &[prefix], &spec, 1, ClarkOconeMode::Exact, &mut rng).unwrap();
            assert!((g2 - prefix).abs() <= 1e-12);
        }
    }

    #[test]
    fn clark_ocone_contraction_with_equality_case() {
        // (1/n) sum E[(grad_i X)^2] <= Var X, equal for X = xi1 xi2
        let spec = binary(1.0);
        let n = 1u32;
        let x = RandomVariableFn::new(2, "xi1*xi2", |o| o[0] * o[1]);
        let mut rng = stream_for(7, 0, 0);
        let mut lhs = 0.0;
        // enumerate prefixes by hand: i=1 has empty prefix, i=2 has one coord
        let g1 = clark_ocone(&x, 1, &[], &spec, n, ClarkOconeMode::Exact, &mut rng).unwrap();
        lhs += g1 * g1;
        for &(v, p) in spec.atoms() {
            let g2 = clark_ocone(&x, 2, &[v], &spec, n, ClarkOconeMode::Exact, &mut rng).unwrap();
            lhs += p * g2 * g2;
        }
        lhs /= n as f64;
        assert!((lhs - 1.0).abs() <= 1e-12, "contraction lhs {lhs}");
    }

    #[test]
    fn clark_ocone_cost_guard_and_nested_mode() {
        let spec = binary(1.0);
        let m = 40usize;
        let x = RandomVariableFn::new(m, "sum", |o| o.iter().sum::<f64>());
        let mut rng = stream_for(8, 0, 0);
        let err = clark_ocone(&x, 1, &[], &spec, 4, ClarkOconeMode::Exact, &mut rng).unwrap_err();
        assert!(matches!(err, Error::CostGuard { .. }));
        // nested Monte Carlo: grad_1 of the plain sum is exactly sqrt(n)
        // times E[xi_1^2] = sqrt(n) regardless of the suffix draw
        let (est, var) = clark_ocone_with_variance(
            &x,
            1,
            &[],
            &spec,
            4,
            ClarkOconeMode::NestedMonteCarlo { samples: 64 },
            &mut rng,
        )
        .unwrap();
        assert!((est - 2.0).abs() <= 1e-12);
        assert!(var.abs() <= 1e-20);
    }

    #[test]
    fn s_transform_of_one_is_one_up_to_noise() {
        let spec = binary(1.0);
        let x = RandomVariableFn::constant(8, 1.0);
        let g = StepFunction::indicator(0.0, 1.0);
        let mut rng = stream_for(9, 0, 0);
        let (est, se) = s_transform_estimate(&x, &g, 8, &spec, 20_000, &mut rng).unwrap();
        assert!((est - 1.0).abs() <= 4.0 * se, "est {est}, se {se}");
    }

    #[test]
    fn s_transform_of_wick_is_moment_product() {
        // X = exp(I(g)) with g = h = unit indicator at n = 2: the exact
        // pairing is (1 + 1/2)^2 = 2.25
        let spec = binary(1.0);
        let n = 2u32;
        let g = StepFunction::indicator(0.0, 1.0);
        let g_n = crate::kernel::discretize(&g, n);
        let x = RandomVariableFn::new(2, "wick", move |o| wick_exponential(&g_n, o, n));
        let mut rng = stream_for(10, 0, 0);
        let (est, se) = s_transform_estimate(&x, &g, n, &spec, 40_000, &mut rng).unwrap();
        assert!((est - 2.25).abs() <= 3.0 * se, "est {est}, se {se}");
    }
}
