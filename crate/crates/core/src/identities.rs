//! The exact finite-horizon identity suite.
//!
//! Each identity is checked on randomly generated instances against the
//! enumeration oracle, at small horizons where every expectation is a
//! finite sum. These are the algebraic facts the operators are built on:
//! duality between derivative and integral, the Skorokhod variance
//! identity, derivative/integral commutation, the nested conditioning
//! swap, the Doleans-Dade recursion, Mobius inversion of Wick
//! exponentials, the multiple Wiener isometry, the Walsh inner-product
//! identity, the predictable representation, the Malliavin chaos isometry,
//! and the Wick second-moment product formula.

use rand::Rng;

use crate::error::Result;
use crate::kernel::DiscreteKernel;
use crate::lattice::{self, condition_on_coordinate, DiscreteProcessFn, RandomVariableFn};
use crate::noise::NoiseSpec;
use crate::oracle::EnumeratedSpace;
use crate::rng::{stream_for, Stream};
use crate::walsh::{self, WalshVector};

/// Result of checking one identity over a batch of random instances.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// Configuration of the identity suite.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    /// Largest horizon to draw; instances use `M` between 4 and this.
    pub max_horizon: usize,
    /// Binary parameters to cycle through.
    pub b_values: Vec<f64>,
    /// Random instances per identity and parameter.
    pub instances: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            max_horizon: 10,
            b_values: vec![1.0, 2.0],
            instances: 100,
            tolerance: 1e-10,
            seed: 42,
        }
    }
}

struct Instance {
    spec: NoiseSpec,
    space: EnumeratedSpace,
    b: f64,
    m: usize,
    n: u32,
}

fn draw_instance(b: f64, max_horizon: usize, rng: &mut Stream) -> Instance {
    let m = 4 + (rng.random::<u64>() as usize) % (max_horizon.max(4) - 3);
    let n = 1 + (rng.random::<u32>() % 4);
    let spec = NoiseSpec::binary(b).expect("binary parameter");
    let space = EnumeratedSpace::new(spec.clone(), m).expect("small horizon");
    Instance {
        spec,
        space,
        b,
        m,
        n,
    }
}

/// A random functional of the coordinates: a sparse Walsh polynomial or a
/// bounded nonlinear map, both exercised with equal probability.
fn random_rv(m: usize, rng: &mut Stream) -> RandomVariableFn {
    if rng.random::<f64>() < 0.5 {
        let terms: Vec<(u64, f64)> = (0..(1 + rng.random::<u64>() % 6))
            .map(|_| {
                (
                    rng.random::<u64>() % (1u64 << m),
                    rng.random::<f64>() * 2.0 - 1.0,
                )
            })
            .collect();
        RandomVariableFn::new(m, "walsh-poly", move |o| {
            terms
                .iter()
                .map(|&(mask, c)| {
                    let mut prod = c;
                    let mut rest = mask;
                    while rest != 0 {
                        prod *= o[rest.trailing_zeros() as usize];
                        rest &= rest - 1;
                    }
                    prod
                })
                .sum()
        })
    } else {
        let weights: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
        let phase: f64 = rng.random::<f64>() * 2.0;
        RandomVariableFn::new(m, "smooth", move |o| {
            let s: f64 = weights.iter().zip(o).map(|(w, x)| w * x).sum();
            (0.4 * s).exp() + (s + phase).sin()
        })
    }
}

fn random_process(m: usize, rng: &mut Stream) -> DiscreteProcessFn {
    let components = (0..m).map(|_| random_rv(m, rng)).collect();
    DiscreteProcessFn::new(components, false).expect("nonempty process")
}

fn random_walsh(m: usize, b: f64, rng: &mut Stream) -> WalshVector {
    let spec = NoiseSpec::binary(b).expect("binary parameter");
    let x = random_rv(m, rng);
    WalshVector::from_function(&x, &spec).expect("small horizon")
}

fn random_order1_kernel(m: usize, n: u32, rng: &mut Stream) -> DiscreteKernel {
    let mut f = DiscreteKernel::new(1, n, false, false);
    for i in 1..=m as u32 {
        if rng.random::<f64>() < 0.7 {
            f.set(&[i], rng.random::<f64>() * 2.0 - 1.0);
        }
    }
    f
}

fn random_symmetric_offdiag_kernel(m: usize, k: usize, n: u32, rng: &mut Stream) -> DiscreteKernel {
    let mut f = DiscreteKernel::new(k, n, true, true);
    // walk the strictly increasing k-tuples in {1..m}
    let mut idx: Vec<u32> = (1..=k as u32).collect();
    loop {
        if rng.random::<f64>() < 0.6 {
            f.set(&idx, rng.random::<f64>() * 2.0 - 1.0);
        }
        let mut slot = k;
        loop {
            if slot == 0 {
                return f;
            }
            slot -= 1;
            if idx[slot] < (m - (k - 1 - slot)) as u32 {
                idx[slot] += 1;
                for j in slot + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

type Check = fn(&Instance, &mut Stream) -> f64;

fn check_duality(inst: &Instance, rng: &mut Stream) -> f64 {
    let x = random_rv(inst.m, rng);
    let z = random_process(inst.m, rng);
    let nf = inst.n as f64;
    let mut lhs = 0.0;
    for i in 1..=inst.m {
        lhs += inst.space.expectation_of(|o| {
            z.component(i).eval(o)
                * lattice::malliavin_derivative(&x, i, o, &inst.spec, inst.n).unwrap()
        });
    }
    lhs /= nf;
    let rhs = inst.space.expectation_of(|o| {
        lattice::skorokhod_integral(&z, inst.m, o, &inst.spec, inst.n).unwrap() * x.eval(o)
    });
    (lhs - rhs).abs()
}

fn check_variance_identity(inst: &Instance, rng: &mut Stream) -> f64 {
    let z = random_process(inst.m, rng);
    let nf = inst.n as f64;
    let lhs = inst.space.expectation_of(|o| {
        lattice::skorokhod_integral(&z, inst.m, o, &inst.spec, inst.n)
            .unwrap()
            .powi(2)
    });
    let mut rhs = 0.0;
    for i in 1..=inst.m {
        rhs += inst
            .space
            .expectation_of(|o| condition_on_coordinate(z.component(i), i, o, &inst.spec).powi(2))
            / nf;
    }
    for i in 1..=inst.m {
        for j in 1..=inst.m {
            if i == j {
                continue;
            }
            rhs += inst.space.expectation_of(|o| {
                lattice::malliavin_derivative(z.component(j), i, o, &inst.spec, inst.n).unwrap()
                    * lattice::malliavin_derivative(z.component(i), j, o, &inst.spec, inst.n)
                        .unwrap()
            }) / (nf * nf);
        }
    }
    (lhs - rhs).abs()
}

fn check_commutation(inst: &Instance, rng: &mut Stream) -> f64 {
    let z = random_process(inst.m, rng);
    let i = 1 + (rng.random::<u64>() as usize) % inst.m;
    let spec = inst.spec.clone();
    let n = inst.n;
    let m = inst.m;
    let z_for_delta = z.clone();
    let delta = RandomVariableFn::new(m, "delta(Z)", move |o| {
        lattice::skorokhod_integral(&z_for_delta, m, o, &spec, n).unwrap()
    });
    // D_i Z with component i zeroed, fed back through the integral
    let d_i_z: Vec<RandomVariableFn> = (1..=m)
        .map(|j| {
            if j == i {
                RandomVariableFn::constant(m, 0.0)
            } else {
                let comp = z.component(j).clone();
                let spec = inst.spec.clone();
                RandomVariableFn::new(m, "D_i Z_j", move |o| {
                    lattice::malliavin_derivative(&comp, i, o, &spec, n).unwrap()
                })
            }
        })
        .collect();
    let d_i_z = DiscreteProcessFn::new(d_i_z, false).unwrap();
    let mut worst = 0.0f64;
    inst.space.for_each_outcome(|o, _| {
        let lhs = lattice::malliavin_derivative(&delta, i, o, &inst.spec, n).unwrap();
        let rhs = condition_on_coordinate(z.component(i), i, o, &inst.spec)
            + lattice::skorokhod_integral(&d_i_z, m, o, &inst.spec, n).unwrap();
        worst = worst.max((lhs - rhs).abs());
    });
    worst
}

fn check_conditioning_swap(inst: &Instance, rng: &mut Stream) -> f64 {
    let x = random_rv(inst.m, rng);
    let i = 1 + (rng.random::<u64>() as usize) % inst.m;
    let mut j = 1 + (rng.random::<u64>() as usize) % inst.m;
    if j == i {
        j = if i == inst.m { 1 } else { i + 1 };
    }
    let spec = inst.spec.clone();
    let xi = x.clone();
    let inner_i = RandomVariableFn::new(inst.m, "E[X|F_-i]", move |o| {
        condition_on_coordinate(&xi, i, o, &spec)
    });
    let spec = inst.spec.clone();
    let xj = x.clone();
    let inner_j = RandomVariableFn::new(inst.m, "E[X|F_-j]", move |o| {
        condition_on_coordinate(&xj, j, o, &spec)
    });
    let mut worst = 0.0f64;
    inst.space.for_each_outcome(|o, _| {
        let lhs = condition_on_coordinate(&inner_i, j, o, &inst.spec);
        let rhs = condition_on_coordinate(&inner_j, i, o, &inst.spec);
        worst = worst.max((lhs - rhs).abs());
    });
    worst
}

fn check_doleans_dade(inst: &Instance, rng: &mut Stream) -> f64 {
    let f = random_order1_kernel(inst.m, inst.n, rng);
    let sqrt_n = (inst.n as f64).sqrt();
    let mut worst = 0.0f64;
    inst.space.for_each_outcome(|o, _| {
        let lhs = lattice::wick_exponential(&f, o, inst.n);
        let mut rhs = 1.0;
        let mut head = DiscreteKernel::new(1, inst.n, false, false);
        for i in 1..=inst.m as u32 {
            let fi = f.value(&[i]);
            if fi != 0.0 {
                rhs +=
                    fi * lattice::wick_exponential(&head, o, inst.n) * o[i as usize - 1] / sqrt_n;
            }
            head.set(&[i], fi);
        }
        worst = worst.max((lhs - rhs).abs());
    });
    worst
}

fn check_mobius_inversion(inst: &Instance, rng: &mut Stream) -> f64 {
    let size = 1 + (rng.random::<u64>() as usize) % inst.m.min(6);
    let mut subset: Vec<u32> = Vec::new();
    while subset.len() < size {
        let i = 1 + rng.random::<u32>() % inst.m as u32;
        if !subset.contains(&i) {
            subset.push(i);
        }
    }
    subset.sort_unstable();
    let bits = subset.len() as u32;
    let mut acc = WalshVector::zero(inst.m, inst.b);
    for sub in 0u32..(1 << bits) {
        let mut f = DiscreteKernel::new(1, inst.n, false, false);
        let mut members = 0;
        for (pos, &i) in subset.iter().enumerate() {
            if sub & (1 << pos) != 0 {
                f.set(&[i], 1.0);
                members += 1;
            }
        }
        let sign = if (bits - members).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let wick = walsh::wick_exponential(&f, inst.n, inst.m, inst.b).unwrap();
        acc = acc.add(&wick.scale(sign)).unwrap();
    }
    let lhs = acc.scale((inst.n as f64).powf(bits as f64 / 2.0));
    let rhs = WalshVector::basis(inst.m, inst.b, &subset);
    lhs.sub(&rhs).unwrap().max_abs_coeff()
}

fn check_multiple_wiener_isometry(inst: &Instance, rng: &mut Stream) -> f64 {
    let k1 = 1 + (rng.random::<u64>() as usize) % 3;
    let k2 = 1 + (rng.random::<u64>() as usize) % 3;
    let f = random_symmetric_offdiag_kernel(inst.m, k1, inst.n, rng);
    let g = random_symmetric_offdiag_kernel(inst.m, k2, inst.n, rng);
    let vi = walsh::multiple_wiener(&f, inst.n, inst.m, inst.b).unwrap();
    let vj = walsh::multiple_wiener(&g, inst.n, inst.m, inst.b).unwrap();
    let ri = vi.to_random_variable();
    let rj = vj.to_random_variable();
    let lhs = inst.space.expectation_of(|o| ri.eval(o) * rj.eval(o));
    let rhs = if k1 == k2 {
        let mut fact = 1.0;
        for j in 1..=k1 {
            fact *= j as f64;
        }
        fact * f.inner_product(&g).unwrap()
    } else {
        0.0
    };
    (lhs - rhs).abs()
}

fn check_walsh_inner_product(inst: &Instance, rng: &mut Stream) -> f64 {
    let x = random_walsh(inst.m, inst.b, rng);
    let y = random_walsh(inst.m, inst.b, rng);
    let rx = x.to_random_variable();
    let ry = y.to_random_variable();
    let lhs = inst.space.expectation_of(|o| rx.eval(o) * ry.eval(o));
    let rhs = x.inner_product(&y).unwrap();
    (lhs - rhs).abs()
}

fn check_predictable_representation(inst: &Instance, rng: &mut Stream) -> f64 {
    let x = random_walsh(inst.m, inst.b, rng);
    let grads: Vec<WalshVector> = (1..=inst.m).map(|i| x.clark_ocone(i, inst.n)).collect();
    let rebuilt = walsh::skorokhod(&grads, inst.n)
        .unwrap()
        .add(&WalshVector::constant(inst.m, inst.b, x.expectation()))
        .unwrap();
    rebuilt.sub(&x).unwrap().max_abs_coeff()
}

fn check_malliavin_chaos_isometry(inst: &Instance, rng: &mut Stream) -> f64 {
    let x = random_walsh(inst.m, inst.b, rng);
    let nf = inst.n as f64;
    let lhs: f64 = (1..=inst.m)
        .map(|i| x.malliavin(i, inst.n).norm_sq())
        .sum::<f64>()
        / nf;
    let kernels = walsh::chaos_coefficients(&x, inst.n);
    let mut rhs = 0.0;
    let mut fact = 1.0;
    for (k, f) in kernels.iter().enumerate() {
        if k > 0 {
            fact *= k as f64;
            rhs += k as f64 * fact * f.l2_norm_sq();
        }
    }
    (lhs - rhs).abs()
}

fn check_wick_second_moment(inst: &Instance, rng: &mut Stream) -> f64 {
    let f = random_order1_kernel(inst.m, inst.n, rng);
    let nf = inst.n as f64;
    let lhs = inst
        .space
        .expectation_of(|o| lattice::wick_exponential(&f, o, inst.n).powi(2));
    let mut rhs = 1.0;
    for (key, v) in f.entries() {
        if (key[0] as usize) <= inst.m {
            rhs *= 1.0 + v * v / nf;
        }
    }
    // the closed product must also respect the exponential moment bound
    if rhs > f.l2_norm_sq().exp() + 1e-12 {
        return f64::INFINITY;
    }
    (lhs - rhs).abs()
}

const CHECKS: &[(&str, Check)] = &[
    ("duality", check_duality),
    ("skorokhod-variance-identity", check_variance_identity),
    ("derivative-integral-commutation", check_commutation),
    ("conditioning-swap", check_conditioning_swap),
    ("doleans-dade-recursion", check_doleans_dade),
    ("mobius-inversion", check_mobius_inversion),
    ("multiple-wiener-isometry", check_multiple_wiener_isometry),
    ("walsh-inner-product", check_walsh_inner_product),
    (
        "predictable-representation",
        check_predictable_representation,
    ),
    ("malliavin-chaos-isometry", check_malliavin_chaos_isometry),
    ("wick-second-moment", check_wick_second_moment),
];

/// Run the full identity suite, one report per identity.
pub fn run_suite(config: &SuiteConfig) -> Result<Vec<IdentityReport>> {
    let mut reports = Vec::with_capacity(CHECKS.len());
    for (pos, (name, check)) in CHECKS.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut count = 0usize;
        for (b_pos, &b) in config.b_values.iter().enumerate() {
            let mut rng = stream_for(config.seed, pos as u32, b_pos as u64);
            for _ in 0..config.instances {
                let inst = draw_instance(b, config.max_horizon, &mut rng);
                worst = worst.max(check(&inst, &mut rng));
                count += 1;
            }
        }
        reports.push(IdentityReport {
            name,
            instances: count,
            max_error: worst,
            tolerance: config.tolerance,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let config = SuiteConfig {
            max_horizon: 6,
            b_values: vec![1.0, 2.0],
            instances: 8,
            tolerance: 1e-10,
            seed: 7,
        };
        let reports = run_suite(&config).unwrap();
        assert_eq!(reports.len(), 11);
        for r in &reports {
            assert!(
                r.passed(),
                "{} failed: max error {} over {} instances",
                r.name,
                r.max_error,
                r.instances
            );
        }
    }
}
