//! Monte Carlo convergence experiments.
//!
//! The main study simulates the binary walk jointly with its Brownian
//! motion, evaluates the discrete Skorokhod integral of
//! `Z_t = sign(1/2 - t)(B_1 B_{1-t} - (1-t)) 1_{[0,1]}(t)` by the pathwise
//! binary formula, compares against the closed form
//! `B_1 B_{1/2}^2 - B_1/2 - B_{1/2}` on the same paths, and fits the
//! log-log slope of the mean squared error. The other experiments cover
//! chaos-coefficient estimation, Clark-Ocone convergence, the S-transform
//! ladder, and chaos tail masses.
//!
//! Everything is deterministic given `(seed, parameters)`: each path draws
//! from its own counter-derived stream and cross-path reductions use a
//! fixed pairwise tree, so thread count never changes a digit.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{discretize, DiscreteKernel, StepFunction, TensorStep};
use crate::lattice::{self, ClarkOconeMode, RandomVariableFn};
use crate::noise::NoiseSpec;
use crate::path::simulate_coupled_binary;
use crate::rng::{mean, pairwise_sum, sample_variance, stream_for};
use crate::walsh::{self, WalshVector};

/// Result of a convergence ladder: per-`n` mean squared errors with
/// asymptotic 95% confidence bounds and the fitted log-log line.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub n_values: Vec<u32>,
    pub mse: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub paths: usize,
    pub seed: u64,
    #[serde(skip)]
    pub wall_time_seconds: f64,
}

#[derive(Serialize)]
struct Summary {
    slope: f64,
    intercept: f64,
    r2: f64,
    paths: usize,
    seed: u64,
}

impl ConvergenceReport {
    /// CSV body with the `n,mse,ci_low,ci_high` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mse,ci_low,ci_high\n");
        for (pos, &n) in self.n_values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                n, self.mse[pos], self.ci_low[pos], self.ci_high[pos]
            ));
        }
        out
    }

    /// One-line JSON summary for the sidecar file.
    pub fn summary_json(&self) -> String {
        serde_json::to_string(&Summary {
            slope: self.slope,
            intercept: self.intercept,
            r2: self.r_squared,
            paths: self.paths,
            seed: self.seed,
        })
        .expect("summary serialization")
    }

    fn from_samples(
        n_values: Vec<u32>,
        samples: Vec<Vec<f64>>,
        paths: usize,
        seed: u64,
        wall: f64,
    ) -> Result<Self> {
        let mut mse = Vec::with_capacity(samples.len());
        let mut ci_low = Vec::with_capacity(samples.len());
        let mut ci_high = Vec::with_capacity(samples.len());
        for errs in &samples {
            let m = mean(errs);
            let half = 1.96 * (sample_variance(errs) / errs.len() as f64).sqrt();
            mse.push(m);
            ci_low.push(m - half);
            ci_high.push(m + half);
        }
        let xs: Vec<f64> = n_values.iter().map(|&n| n as f64).collect();
        let (slope, intercept, r_squared) = fit_loglog_slope(&xs, &mse)?;
        Ok(ConvergenceReport {
            n_values,
            mse,
            ci_low,
            ci_high,
            slope,
            intercept,
            r_squared,
            paths,
            seed,
            wall_time_seconds: wall,
        })
    }
}

/// Configuration of the Skorokhod convergence study.
#[derive(Debug, Clone)]
pub struct SkorokhodConfig {
    pub b: f64,
    pub n_values: Vec<u32>,
    pub paths: usize,
    pub fine_factor: u32,
    pub seed: u64,
}

/// Discrete Skorokhod integral of the study integrand along one path, by
/// the pathwise binary formula; the derivative of each `Z_i` in its own
/// coordinate is evaluated in closed prefix-sum form, so a path costs
/// `O(n)`.
pub fn study_integrand_delta_n(b: f64, n: u32, increments: &[f64]) -> f64 {
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    debug_assert_eq!(increments.len(), n as usize);
    // lattice walk values W_j = B^n_{j/n}
    let mut w = Vec::with_capacity(n as usize + 1);
    w.push(0.0);
    let mut acc = 0.0;
    for &xi in increments {
        acc += xi;
        w.push(acc / sqrt_n);
    }
    let half = n as usize / 2;
    let w_end = w[n as usize];
    let d_scale = sqrt_n * b / (b * b + 1.0);
    let mut direct = 0.0;
    let mut correction = 0.0;
    for i in 1..n as usize {
        let sign = if i <= half { 1.0 } else { -1.0 };
        let tail = 1.0 - i as f64 / nf;
        let z_i = sign * (w_end * w[n as usize - i] - tail);
        let xi = increments[i - 1];
        direct += z_i * xi / sqrt_n;
        // replacing coordinate i moves every W_j with j >= i by the same shift
        let shift_up = (b - xi) / sqrt_n;
        let shift_down = (-1.0 / b - xi) / sqrt_n;
        let mid = if n as usize - i >= i { 1.0 } else { 0.0 };
        let z_up = sign * ((w_end + shift_up) * (w[n as usize - i] + mid * shift_up) - tail);
        let z_down = sign * ((w_end + shift_down) * (w[n as usize - i] + mid * shift_down) - tail);
        let deriv = d_scale * (z_up - z_down);
        correction += xi * xi * deriv / nf;
    }
    direct - correction
}

/// Closed form of the continuous Skorokhod integral of the study
/// integrand, `B_1 B_{1/2}^2 - B_1/2 - B_{1/2}`, from the coupled
/// Brownian values.
pub fn study_integrand_delta_continuous(bm_half: f64, bm_one: f64) -> f64 {
    bm_one * bm_half * bm_half - bm_one / 2.0 - bm_half
}

/// The Skorokhod convergence study: per `n`, the mean over `paths`
/// coupled paths of `|delta_n - delta|^2`, with a log-log fit across `n`.
pub fn skorokhod_convergence(config: &SkorokhodConfig) -> Result<ConvergenceReport> {
    if config.paths < 100 {
        return Err(Error::InvalidArgument(
            "the study needs at least 100 paths".into(),
        ));
    }
    if config.n_values.len() < 3 {
        return Err(Error::InvalidArgument(
            "the slope fit needs a ladder of at least 3 time-step counts".into(),
        ));
    }
    for &n in &config.n_values {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "time-step counts must be even so that t = 1/2 is on the lattice, got {n}"
            )));
        }
    }
    let start = std::time::Instant::now();
    let mut samples = Vec::with_capacity(config.n_values.len());
    for (n_idx, &n) in config.n_values.iter().enumerate() {
        let errs: Vec<f64> = (0..config.paths)
            .into_par_iter()
            .map(|path_idx| {
                let mut rng = stream_for(config.seed, n_idx as u32, path_idx as u64);
                let coupled = simulate_coupled_binary(
                    config.b,
                    n,
                    n as usize,
                    &[0.5, 1.0],
                    config.fine_factor,
                    None,
                    &mut rng,
                )?;
                let d_n = study_integrand_delta_n(config.b, n, coupled.walk.increments());
                let d =
                    study_integrand_delta_continuous(coupled.bm_values[0], coupled.bm_values[1]);
                Ok((d_n - d) * (d_n - d))
            })
            .collect::<Result<_>>()?;
        samples.push(errs);
    }
    ConvergenceReport::from_samples(
        config.n_values.clone(),
        samples,
        config.paths,
        config.seed,
        start.elapsed().as_secs_f64(),
    )
}

/// Configuration of the Clark-Ocone convergence study.
#[derive(Debug, Clone)]
pub struct ClarkOconeConfig {
    pub n_values: Vec<u32>,
    pub paths: usize,
    pub fine_factor: u32,
    /// Inner sample count of the nested conditional-expectation estimator.
    pub inner_samples: usize,
    pub seed: u64,
}

/// Number of observation points on the unit interval.
const CO_GRID: usize = 8;

/// Exact suffix enumeration is worth it inside the experiment only while
/// the state count stays near the nested sampler's cost; past this the
/// operator would still allow it (its guard is 2^24 states per call) but
/// thousands of calls per ladder point make it the wrong default.
const CO_EXACT_STATES: u64 = 1 << 12;

/// Clark-Ocone convergence for the test functional `X = B_1^2`, whose
/// predictable-representation integrand is `2 B_t` on `[0,1]` (the one
/// hard-coded closed form; the discrete side always goes through the
/// operator).
///
/// Exact suffix enumeration is used whenever the cost guard allows;
/// otherwise the nested Monte Carlo mode runs and its estimated variance
/// is subtracted from each squared error, keeping the mean squared error
/// unbiased.
pub fn clark_ocone_convergence(config: &ClarkOconeConfig) -> Result<ConvergenceReport> {
    if config.paths < 100 {
        return Err(Error::InvalidArgument(
            "the study needs at least 100 paths".into(),
        ));
    }
    if config.n_values.len() < 3 {
        return Err(Error::InvalidArgument(
            "the slope fit needs a ladder of at least 3 time-step counts".into(),
        ));
    }
    for &n in &config.n_values {
        if n % CO_GRID as u32 != 0 {
            return Err(Error::InvalidArgument(format!(
                "time-step counts must be divisible by {CO_GRID}, got {n}"
            )));
        }
    }
    let spec = NoiseSpec::binary(1.0)?;
    let grid: Vec<f64> = (1..=CO_GRID).map(|j| j as f64 / CO_GRID as f64).collect();
    let start = std::time::Instant::now();
    let mut samples = Vec::with_capacity(config.n_values.len());
    for (n_idx, &n) in config.n_values.iter().enumerate() {
        let m = n as usize;
        let functional = RandomVariableFn::new(m, "B1^2", move |o| {
            let s: f64 = o.iter().sum();
            (s / (n as f64).sqrt()).powi(2)
        });
        let errs: Vec<f64> = (0..config.paths)
            .into_par_iter()
            .map(|path_idx| {
                let mut rng = stream_for(config.seed, n_idx as u32, path_idx as u64);
                let coupled =
                    simulate_coupled_binary(1.0, n, m, &grid, config.fine_factor, None, &mut rng)?;
                let increments = coupled.walk.increments().to_vec();
                let mut terms = Vec::with_capacity(CO_GRID);
                for (slot, &t) in grid.iter().enumerate() {
                    let i = (t * n as f64).ceil() as usize;
                    let states = 2u64.checked_pow((m - i + 1) as u32).unwrap_or(u64::MAX);
                    let mode = if states <= CO_EXACT_STATES {
                        ClarkOconeMode::Exact
                    } else {
                        ClarkOconeMode::NestedMonteCarlo {
                            samples: config.inner_samples,
                        }
                    };
                    let (grad, var) = lattice::clark_ocone_with_variance(
                        &functional,
                        i,
                        &increments[..i - 1],
                        &spec,
                        n,
                        mode,
                        &mut rng,
                    )?;
                    let reference = 2.0 * coupled.bm_values[slot];
                    terms.push((grad - reference).powi(2) - var);
                }
                Ok(pairwise_sum(&terms) / CO_GRID as f64)
            })
            .collect::<Result<_>>()?;
        samples.push(errs);
    }
    ConvergenceReport::from_samples(
        config.n_values.clone(),
        samples,
        config.paths,
        config.seed,
        start.elapsed().as_secs_f64(),
    )
}

/// Built-in functionals with known chaos kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChaosFunctional {
    /// `X = B_1`, first chaos kernel `1_{[0,1]}`.
    WalkTerminal,
    /// `X = B_1^2 - 1`, second chaos kernel `1_{[0,1]^2}`.
    WalkTerminalSquaredCentered,
    /// `X = exp_wick(I(1_{(0,1]}))`, order-`k` kernel `1/k! 1_{[0,1]^k}`.
    WickExponential,
}

impl ChaosFunctional {
    pub fn parse(label: &str) -> Result<Self> {
        match label {
            "b1" => Ok(Self::WalkTerminal),
            "b1sq" => Ok(Self::WalkTerminalSquaredCentered),
            "wick" => Ok(Self::WickExponential),
            other => Err(Error::UnknownFunctional(other.into())),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::WalkTerminal => "b1",
            Self::WalkTerminalSquaredCentered => "b1sq",
            Self::WickExponential => "wick",
        }
    }

    fn natural_order(&self) -> Option<usize> {
        match self {
            Self::WalkTerminal => Some(1),
            Self::WalkTerminalSquaredCentered => Some(2),
            Self::WickExponential => None,
        }
    }

    fn eval(&self, increments: &[f64], n: u32) -> f64 {
        let sqrt_n = (n as f64).sqrt();
        match self {
            Self::WalkTerminal => increments.iter().sum::<f64>() / sqrt_n,
            Self::WalkTerminalSquaredCentered => {
                let s = increments.iter().sum::<f64>() / sqrt_n;
                s * s - 1.0
            }
            Self::WickExponential => increments.iter().map(|&xi| 1.0 + xi / sqrt_n).product(),
        }
    }

    /// Exact order-`k` discrete chaos coefficient at symmetric binary
    /// noise, constant off the diagonal of `{1..n}^k`.
    fn exact_cell_value(&self, k: usize) -> f64 {
        match self {
            Self::WalkTerminal | Self::WalkTerminalSquaredCentered => 1.0,
            Self::WickExponential => {
                let mut fact = 1.0;
                for j in 1..=k {
                    fact *= j as f64;
                }
                1.0 / fact
            }
        }
    }
}

/// Chaos-coefficient estimation report: the Monte Carlo kernel estimate
/// and its embedded distance to the known continuous kernel, split into
/// the exact discretization bias and the Monte Carlo noise.
#[derive(Debug)]
pub struct ChaosEstimateReport {
    pub functional: ChaosFunctional,
    pub k: usize,
    pub n: u32,
    pub paths: usize,
    pub seed: u64,
    pub estimate: DiscreteKernel,
    pub total_error: f64,
    pub bias: f64,
    pub mc_noise: f64,
    pub k0_estimate: f64,
    pub k0_stderr: f64,
}

const CHAOS_CHUNK: usize = 512;

/// Estimate the order-`k` chaos coefficients of a built-in functional by
/// Monte Carlo over symmetric binary paths: the cell value at a tuple of
/// distinct indices is the empirical mean of `X (n^{k/2}/k!) Xi_tuple`.
pub fn chaos_estimation(
    functional: ChaosFunctional,
    k: usize,
    n: u32,
    paths: usize,
    seed: u64,
) -> Result<ChaosEstimateReport> {
    if let Some(natural) = functional.natural_order() {
        if k != natural {
            return Err(Error::InvalidArgument(format!(
                "functional {} lives in chaos order {natural}, requested {k}",
                functional.label()
            )));
        }
    }
    if k == 0 || k > 3 {
        return Err(Error::InvalidArgument(
            "supported chaos orders are 1..=3".into(),
        ));
    }
    if paths < 2 {
        return Err(Error::InvalidArgument("need at least 2 paths".into()));
    }
    let m = n as usize;
    if m < k {
        return Err(Error::InvalidArgument(format!(
            "need n >= k, got n = {n}, k = {k}"
        )));
    }
    let cells = sorted_tuples(m, k);
    let spec = NoiseSpec::binary(1.0)?;
    let mut fact = 1.0;
    for j in 1..=k {
        fact *= j as f64;
    }
    let weight = (n as f64).powf(k as f64 / 2.0) / fact;

    // chunked accumulation: chunks run in parallel, each chunk sums its
    // paths sequentially, and the chunk partials combine in index order
    let chunk_count = paths.div_ceil(CHAOS_CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..chunk_count)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHAOS_CHUNK;
            let hi = ((chunk + 1) * CHAOS_CHUNK).min(paths);
            let mut cell_sum = vec![0.0f64; cells.len()];
            let mut xs = Vec::with_capacity(hi - lo);
            for path_idx in lo..hi {
                let mut rng = stream_for(seed, 0, path_idx as u64);
                let outcome = spec.sample(&mut rng, m);
                let x = functional.eval(&outcome, n);
                xs.push(x);
                for (slot, tuple) in cells.iter().enumerate() {
                    let basis: f64 = tuple.iter().map(|&i| outcome[i as usize - 1]).product();
                    cell_sum[slot] += weight * x * basis;
                }
            }
            (cell_sum, xs)
        })
        .collect();

    let mut estimate = DiscreteKernel::new(k, n, true, true);
    for (slot, tuple) in cells.iter().enumerate() {
        let chunked: Vec<f64> = partials.iter().map(|(cs, _)| cs[slot]).collect();
        estimate.set(tuple, pairwise_sum(&chunked) / paths as f64);
    }
    let x_values: Vec<f64> = partials
        .iter()
        .flat_map(|(_, xs)| xs.iter().copied())
        .collect();

    // exact discrete coefficient and the continuous target
    let cell_value = functional.exact_cell_value(k);
    let mut exact = DiscreteKernel::new(k, n, true, true);
    for tuple in &cells {
        exact.set(tuple, cell_value);
    }
    let target = TensorStep::new(
        cell_value,
        (0..k).map(|_| StepFunction::indicator(0.0, 1.0)).collect(),
    );
    let bias = exact.embedded_distance_sq(&target)?.sqrt();
    let total_error = estimate.embedded_distance_sq(&target)?.sqrt();
    let mut noise_sq = 0.0;
    for tuple in &cells {
        let d = estimate.value(tuple) - exact.value(tuple);
        noise_sq += fact * d * d; // orbit size of an off-diagonal tuple
    }
    noise_sq *= (n as f64).powi(-(k as i32));

    let k0_estimate = mean(&x_values);
    let k0_stderr = (sample_variance(&x_values) / paths as f64).sqrt();

    Ok(ChaosEstimateReport {
        functional,
        k,
        n,
        paths,
        seed,
        estimate,
        total_error,
        bias,
        mc_noise: noise_sq.sqrt(),
        k0_estimate,
        k0_stderr,
    })
}

fn sorted_tuples(m: usize, k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if m < k {
        return out;
    }
    let mut idx: Vec<u32> = (1..=k as u32).collect();
    loop {
        out.push(idx.clone());
        let mut slot = k;
        loop {
            if slot == 0 {
                return out;
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

/// One row of the S-transform convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct STransformRow {
    pub n: u32,
    pub exact: f64,
    pub target: f64,
    pub abs_error: f64,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
}

/// Monte Carlo options for one ladder point of the S-transform table.
#[derive(Debug, Clone)]
pub struct STransformMc {
    pub n: u32,
    pub paths: usize,
    pub b: f64,
}

/// Exact pairing `prod_i (1 + g(i/n) h(i/n) / n)` for each `n` against the
/// continuous limit `exp(<g, h>)`, with an optional Monte Carlo estimate
/// at one ladder point.
pub fn s_transform_table(
    g: &StepFunction,
    h: &StepFunction,
    n_values: &[u32],
    mc: Option<&STransformMc>,
    seed: u64,
) -> Result<Vec<STransformRow>> {
    if n_values.is_empty() {
        return Err(Error::InvalidArgument("empty ladder".into()));
    }
    let target = g.inner_product(h).exp();
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let exact = s_transform_exact_product(g, h, n);
        let (mut mc_estimate, mut mc_stderr) = (None, None);
        if let Some(cfg) = mc {
            if cfg.n == n {
                let spec = NoiseSpec::binary(cfg.b)?;
                let h_n = discretize(h, n);
                let m = h_n.max_index().max(discretize(g, n).max_index()).max(1) as usize;
                let x = RandomVariableFn::new(m, "wick(h)", move |o| {
                    lattice::wick_exponential(&h_n, o, n)
                });
                let mut rng = stream_for(seed, 1, n as u64);
                let (est, se) =
                    lattice::s_transform_estimate(&x, g, n, &spec, cfg.paths, &mut rng)?;
                mc_estimate = Some(est);
                mc_stderr = Some(se);
            }
        }
        rows.push(STransformRow {
            n,
            exact,
            target,
            abs_error: (exact - target).abs(),
            mc_estimate,
            mc_stderr,
        });
    }
    Ok(rows)
}

/// The exact discrete pairing of two Wick exponentials of step functions.
pub fn s_transform_exact_product(g: &StepFunction, h: &StepFunction, n: u32) -> f64 {
    let gn = discretize(g, n);
    let hn = discretize(h, n);
    let end = gn.max_index().max(hn.max_index());
    let mut acc = 1.0;
    for i in 1..=end {
        acc *= 1.0 + gn.value(&[i]) * hn.value(&[i]) / n as f64;
    }
    acc
}

/// Chaos tail mass `sum_{k>=m} k! |f_hat^{n,k}_X|^2`.
pub fn tail_mass(x: &WalshVector, n: u32, from_order: usize) -> f64 {
    let kernels = walsh::chaos_coefficients(x, n);
    let mut acc = 0.0;
    let mut fact = 1.0;
    for (k, f) in kernels.iter().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        if k >= from_order {
            acc += fact * f.l2_norm_sq();
        }
    }
    acc
}

/// Weighted chaos tail mass `sum_{k>=m} k k! |f_hat^{n,k}_X|^2`, the
/// quantity controlling Malliavin-derivative convergence.
pub fn tail_mass_weighted(x: &WalshVector, n: u32, from_order: usize) -> f64 {
    let kernels = walsh::chaos_coefficients(x, n);
    let mut acc = 0.0;
    let mut fact = 1.0;
    for (k, f) in kernels.iter().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        if k >= from_order {
            acc += k as f64 * fact * f.l2_norm_sq();
        }
    }
    acc
}

/// Ordinary least squares on `(log x, log y)`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::Regression("x and y lengths differ".into()));
    }
    if xs.len() < 3 {
        return Err(Error::Regression(format!(
            "need at least 3 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Regression(
            "log-log regression needs positive finite inputs".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Regression("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok((slope, intercept, r_squared))
}
