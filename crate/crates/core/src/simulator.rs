//! Synthetic ground truth and the simulation experiments built on it.
//!
//! A ground truth is an evolving transitively closed network, a reporter
//! attachment map with `n_r` reporters per component, and the clean and
//! noisy binary effect data it implies under a square perturbation design
//! with `n_p` replicates.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{hpd_interval, mc_error_lambda, mean, network_metrics, rejection_rate, std_dev, HpdInterval};
use crate::error::{Error, Result};
use crate::graph::{off_diagonal_position, Network};
use crate::likelihood::{EffectDataset, ErrorRates};
use crate::posterior::expected_network;
use crate::rng::{stream, Purpose, StreamRng};
use crate::sampler::{run_chain, SamplerConfig, TimeCourse};
use crate::transition::TransitionKernel;

/// Rejection loops give up after this many attempts.
pub const MAX_ATTEMPTS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    pub timepoints: usize,
    pub reporters_per_component: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_true: f64,
    /// Run configs carry the seed at top level, so it is not serialised here.
    #[serde(skip)]
    pub seed: u64,
    pub initial_flip_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 6,
            timepoints: 8,
            reporters_per_component: 4,
            replicates: 3,
            alpha: 0.1,
            beta: 0.1,
            lambda_true: 0.5,
            seed: 1,
            initial_flip_fraction: 0.10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=crate::graph::MAX_COMPONENTS).contains(&self.n) {
            return Err(Error::invalid(format!(
                "n must lie in 2..={}, got {}",
                crate::graph::MAX_COMPONENTS,
                self.n
            )));
        }
        for (name, v) in [
            ("timepoints", self.timepoints),
            ("reporters_per_component", self.reporters_per_component),
            ("replicates", self.replicates),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        ErrorRates::new(self.alpha, self.beta)?;
        if !(self.lambda_true > 0.0 && self.lambda_true < 1.0) {
            return Err(Error::invalid(format!(
                "lambda_true must lie in (0, 1), got {}",
                self.lambda_true
            )));
        }
        if !(self.initial_flip_fraction > 0.0 && self.initial_flip_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "initial_flip_fraction must lie in (0, 1], got {}",
                self.initial_flip_fraction
            )));
        }
        Ok(())
    }

    pub fn rates(&self) -> ErrorRates {
        ErrorRates {
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub networks: Vec<Network>,
    /// Component each reporter is attached to.
    pub attachments: Vec<usize>,
    pub clean_data: Vec<EffectDataset>,
    pub noisy_data: Vec<EffectDataset>,
}

fn flip_positions<R: Rng + ?Sized>(g: &Network, count: usize, rng: &mut R) -> Network {
    let n = g.n();
    let mut out = g.clone();
    for idx in sample_indices(rng, n * (n - 1), count) {
        let (r, c) = off_diagonal_position(n, idx);
        out.toggle(r, c).expect("off-diagonal position");
    }
    out
}

/// Number of flips for the initial network: `flip_fraction · n(n-1)`
/// rounded to nearest, at least 1.
pub fn initial_flip_count(n: usize, flip_fraction: f64) -> usize {
    let ne = n * (n - 1);
    ((flip_fraction * ne as f64).round() as usize).clamp(1, ne)
}

/// Random transitively closed network made by flipping a fixed number of
/// entries of the empty graph, redrawn until closed.
pub fn generate_initial_network<R: Rng + ?Sized>(n: usize, flip_fraction: f64, rng: &mut R) -> Result<Network> {
    if !(flip_fraction > 0.0 && flip_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "flip fraction must lie in (0, 1], got {flip_fraction}"
        )));
    }
    let empty = Network::empty(n)?;
    if n < 2 {
        return Ok(empty);
    }
    let k = initial_flip_count(n, flip_fraction);
    for _ in 0..MAX_ATTEMPTS {
        let g = flip_positions(&empty, k, rng);
        if g.is_transitively_closed() {
            return Ok(g);
        }
    }
    Err(Error::MaxAttempts(MAX_ATTEMPTS))
}

/// Sampler for the number of flipped entries between consecutive networks.
#[derive(Clone, Debug)]
pub struct FlipCountDistribution {
    probs: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl FlipCountDistribution {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        let probs = TransitionKernel::new(n, lambda)?.distance_class_probs();
        let index = WeightedIndex::new(&probs).map_err(|e| Error::invalid(format!("flip count weights: {e}")))?;
        Ok(FlipCountDistribution { probs, index })
    }

    /// Probability of each flip count `0..=n(n-1)`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }
}

/// One unconstrained evolution step: draws a flip count and flips that many
/// distinct entries. The result need not be transitively closed.
pub fn perturb_network<R: Rng + ?Sized>(g: &Network, flips: &FlipCountDistribution, rng: &mut R) -> (Network, usize) {
    let k = flips.sample(rng);
    (flip_positions(g, k, rng), k)
}

/// Next network of the path; whole steps are redrawn until closed.
pub fn evolve_network<R: Rng + ?Sized>(
    g_prev: &Network,
    flips: &FlipCountDistribution,
    rng: &mut R,
) -> Result<Network> {
    for _ in 0..MAX_ATTEMPTS {
        let (g, _) = perturb_network(g_prev, flips, rng);
        if g.is_transitively_closed() {
            return Ok(g);
        }
    }
    Err(Error::MaxAttempts(MAX_ATTEMPTS))
}

/// `n_r` reporters per component, component-major.
pub fn component_major_attachments(n: usize, reporters_per_component: usize) -> Vec<usize> {
    (0..n)
        .flat_map(|j| std::iter::repeat_n(j, reporters_per_component))
        .collect()
}

/// Noise-free effects of one network under the square design: reporter `i`
/// shows an effect in every replicate of perturbation `k` iff its component
/// is reachable from `k` (or is `k`).
pub fn generate_effects(g: &Network, attachments: &[usize], replicates: usize) -> Result<Vec<Vec<u8>>> {
    let n = g.n();
    let targets: Vec<usize> = (0..n).collect();
    let states = g.state_matrix(&targets)?;
    attachments
        .iter()
        .map(|&j| {
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
            Ok((0..n)
                .flat_map(|k| std::iter::repeat_n(states.get(j, k) as u8, replicates))
                .collect())
        })
        .collect()
}

/// Flips each 0 to 1 with probability `alpha` and each 1 to 0 with
/// probability `beta`. One uniform is drawn per cell whatever its value.
pub fn add_noise<R: Rng + ?Sized>(rows: &[Vec<u8>], alpha: f64, beta: f64, rng: &mut R) -> Result<Vec<Vec<u8>>> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|&d| {
                    let u: f64 = rng.gen();
                    match d {
                        0 if u < alpha => 1,
                        1 if u < beta => 0,
                        d => d,
                    }
                })
                .collect()
        })
        .collect())
}

/// Truth networks only, from the truth stream of `config.seed`.
pub fn simulate_networks(config: &SimConfig) -> Result<Vec<Network>> {
    config.validate()?;
    let mut rng = stream(config.seed, Purpose::Truth, 0);
    let flips = FlipCountDistribution::new(config.n, config.lambda_true)?;
    let mut networks = vec![generate_initial_network(
        config.n,
        config.initial_flip_fraction,
        &mut rng,
    )?];
    for _ in 1..config.timepoints {
        let next = evolve_network(networks.last().expect("non-empty"), &flips, &mut rng)?;
        networks.push(next);
    }
    Ok(networks)
}

/// Full ground truth with noise from noise stream 0.
pub fn simulate(config: &SimConfig) -> Result<GroundTruth> {
    let networks = simulate_networks(config)?;
    ground_truth_for(networks, config, 0)
}

/// Ground truth on given networks, with noise drawn from noise stream
/// `noise_index` of `config.seed`.
pub fn ground_truth_for(networks: Vec<Network>, config: &SimConfig, noise_index: u64) -> Result<GroundTruth> {
    config.validate()?;
    let attachments = component_major_attachments(config.n, config.reporters_per_component);
    let rates = config.rates();
    let mut rng: StreamRng = stream(config.seed, Purpose::Noise, noise_index);
    let mut clean_data = Vec::with_capacity(networks.len());
    let mut noisy_data = Vec::with_capacity(networks.len());
    for g in &networks {
        if g.n() != config.n {
            return Err(Error::shape("truth network size differs from config"));
        }
        let clean = generate_effects(g, &attachments, config.replicates)?;
        let noisy = add_noise(&clean, config.alpha, config.beta, &mut rng)?;
        clean_data.push(EffectDataset::square_binary(config.n, config.replicates, clean, rates)?);
        noisy_data.push(EffectDataset::square_binary(config.n, config.replicates, noisy, rates)?);
    }
    Ok(GroundTruth {
        networks,
        attachments,
        clean_data,
        noisy_data,
    })
}

/// Keeps timepoints `1, 1 + interval, 1 + 2·interval, …`.
pub fn subsample_time(truth: &GroundTruth, interval: usize) -> Result<GroundTruth> {
    if interval == 0 {
        return Err(Error::invalid("sampling interval must be at least 1"));
    }
    let keep: Vec<usize> = (0..truth.networks.len()).step_by(interval).collect();
    if keep.len() < 2 {
        return Err(Error::invalid(format!(
            "interval {interval} keeps only {} of {} timepoints; at least 2 are needed",
            keep.len(),
            truth.networks.len()
        )));
    }
    let pick = |v: &[EffectDataset]| keep.iter().map(|&t| v[t].clone()).collect();
    Ok(GroundTruth {
        networks: keep.iter().map(|&t| truth.networks[t].clone()).collect(),
        attachments: truth.attachments.clone(),
        clean_data: pick(&truth.clean_data),
        noisy_data: pick(&truth.noisy_data),
    })
}

/// One `λ` setting of a sweep with the random-walk step used for it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSetting {
    pub lambda: f64,
    pub proposal_sd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    /// Shape of each simulated dataset; its `lambda_true`, `alpha` and
    /// `beta` are overridden per cell.
    pub base: SimConfig,
    pub sampler: SamplerConfig,
    pub lambdas: Vec<LambdaSetting>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub datasets_per_cell: usize,
    pub coverage: f64,
    pub cutoff: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            base: SimConfig::default(),
            sampler: SamplerConfig::default(),
            lambdas: vec![
                LambdaSetting {
                    lambda: 0.1,
                    proposal_sd: 2.0,
                },
                LambdaSetting {
                    lambda: 0.5,
                    proposal_sd: 0.65,
                },
                LambdaSetting {
                    lambda: 0.9,
                    proposal_sd: 0.65,
                },
            ],
            alphas: vec![0.1, 0.2, 0.3],
            betas: vec![0.1, 0.2, 0.3],
            datasets_per_cell: 50,
            coverage: 0.95,
            cutoff: 0.5,
        }
    }
}

/// One simulated dataset of a sweep and what the sampler made of it.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dataset: usize,
    pub posterior_mean_lambda: f64,
    pub mc_error: f64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub rejection_rate: f64,
    pub lambda_hpd: HpdInterval,
    pub true_log_joint: f64,
    pub log_joint_hpd: HpdInterval,
}

impl SweepRun {
    pub fn lambda_covered(&self) -> bool {
        self.lambda_hpd.contains(self.lambda)
    }

    pub fn log_joint_covered(&self) -> bool {
        self.log_joint_hpd.contains(self.true_log_joint)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub runs: usize,
    pub mean_mc_error: f64,
    pub sd_mc_error: f64,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub lambda_coverage: f64,
    pub log_joint_coverage: f64,
    pub mean_lambda_lower: f64,
    pub mean_lambda_upper: f64,
    pub mean_log_joint_lower: f64,
    pub mean_log_joint_upper: f64,
    pub mean_true_log_joint: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    pub cells: Vec<CellSummary>,
}

impl SweepResult {
    pub fn cell(&self, lambda: f64, alpha: f64, beta: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.lambda == lambda && c.alpha == alpha && c.beta == beta)
    }

    pub fn runs_in(&self, lambda: f64, alpha: f64, beta: f64) -> impl Iterator<Item = &SweepRun> {
        self.runs
            .iter()
            .filter(move |r| r.lambda == lambda && r.alpha == alpha && r.beta == beta)
    }
}

/// Fits one simulated dataset with a single chain and scores it against
/// the generating truth.
pub fn score_dataset(
    truth: &GroundTruth,
    lambda_true: f64,
    sampler: &SamplerConfig,
    chain_index: usize,
    coverage: f64,
    cutoff: f64,
) -> Result<SweepRun> {
    let course = TimeCourse::new(&truth.noisy_data)?;
    let trace = run_chain(sampler, &course, chain_index)?;
    let en = expected_network(std::slice::from_ref(&trace), sampler.burn_in)?;
    let metrics = network_metrics(&en.binarize(cutoff), &truth.networks)?;
    let post_mean = trace.posterior_mean_lambda();
    let rates = truth.noisy_data[0].rates().expect("simulated data is binary");
    Ok(SweepRun {
        lambda: lambda_true,
        alpha: rates.alpha,
        beta: rates.beta,
        dataset: 0,
        posterior_mean_lambda: post_mean,
        mc_error: mc_error_lambda(post_mean, lambda_true),
        accuracy: metrics.accuracy,
        sensitivity: metrics.sensitivity,
        specificity: metrics.specificity,
        rejection_rate: rejection_rate(&trace.kappa_accepted, sampler.burn_in),
        lambda_hpd: hpd_interval(trace.post_burn_in_lambda(), coverage)?,
        true_log_joint: course.log_joint(&truth.networks, lambda_true)?,
        log_joint_hpd: hpd_interval(&trace.log_joint[sampler.burn_in..], coverage)?,
    })
}

/// Sensitivity and coverage sweep over the `(λ, α, β)` grid.
///
/// Truth networks are fixed per `λ` (truth stream of the base seed); each
/// dataset draws fresh noise and its own chain stream, both indexed by the
/// run's position in the grid.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.sampler.validate()?;
    if config.datasets_per_cell == 0 {
        return Err(Error::invalid("datasets_per_cell must be at least 1"));
    }
    let mut truths = Vec::with_capacity(config.lambdas.len());
    for setting in &config.lambdas {
        let sim = SimConfig {
            lambda_true: setting.lambda,
            ..config.base.clone()
        };
        truths.push(simulate_networks(&sim)?);
    }

    let mut jobs = Vec::new();
    for (li, setting) in config.lambdas.iter().enumerate() {
        for &alpha in &config.alphas {
            for &beta in &config.betas {
                for dataset in 0..config.datasets_per_cell {
                    jobs.push((li, *setting, alpha, beta, dataset));
                }
            }
        }
    }

    let runs = jobs
        .par_iter()
        .enumerate()
        .map(|(index, &(li, setting, alpha, beta, dataset))| {
            let sim = SimConfig {
                lambda_true: setting.lambda,
                alpha,
                beta,
                ..config.base.clone()
            };
            let truth = ground_truth_for(truths[li].clone(), &sim, index as u64)?;
            let sampler = SamplerConfig {
                proposal_sd: setting.proposal_sd,
                ..config.sampler.clone()
            };
            let mut run = score_dataset(&truth, setting.lambda, &sampler, index, config.coverage, config.cutoff)?;
            run.dataset = dataset;
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for setting in &config.lambdas {
        for &alpha in &config.alphas {
            for &beta in &config.betas {
                let cell: Vec<&SweepRun> = runs
                    .iter()
                    .filter(|r| r.lambda == setting.lambda && r.alpha == alpha && r.beta == beta)
                    .collect();
                cells.push(summarise_cell(setting.lambda, alpha, beta, &cell));
            }
        }
    }
    Ok(SweepResult { runs, cells })
}

pub fn summarise_cell(lambda: f64, alpha: f64, beta: f64, runs: &[&SweepRun]) -> CellSummary {
    let col = |f: &dyn Fn(&SweepRun) -> f64| runs.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let errors = col(&|r| r.mc_error);
    let accuracy = col(&|r| r.accuracy);
    let frac = |f: &dyn Fn(&SweepRun) -> bool| runs.iter().filter(|r| f(r)).count() as f64 / runs.len() as f64;
    CellSummary {
        lambda,
        alpha,
        beta,
        runs: runs.len(),
        mean_mc_error: mean(&errors),
        sd_mc_error: std_dev(&errors),
        mean_accuracy: mean(&accuracy),
        sd_accuracy: std_dev(&accuracy),
        lambda_coverage: frac(&|r| r.lambda_covered()),
        log_joint_coverage: frac(&|r| r.log_joint_covered()),
        mean_lambda_lower: mean(&col(&|r| r.lambda_hpd.lower)),
        mean_lambda_upper: mean(&col(&|r| r.lambda_hpd.upper)),
        mean_log_joint_lower: mean(&col(&|r| r.log_joint_hpd.lower)),
        mean_log_joint_upper: mean(&col(&|r| r.log_joint_hpd.upper)),
        mean_true_log_joint: mean(&col(&|r| r.true_log_joint)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeStudyConfig {
    pub base: SimConfig,
    pub sampler: SamplerConfig,
    pub intervals: Vec<usize>,
    pub replicates: usize,
    pub cutoff: f64,
}

impl Default for TimeStudyConfig {
    fn default() -> Self {
        TimeStudyConfig {
            base: SimConfig {
                timepoints: 128,
                lambda_true: 0.9,
                ..SimConfig::default()
            },
            sampler: SamplerConfig::default(),
            intervals: vec![32, 16, 8, 4, 2, 1],
            replicates: 10,
            cutoff: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeStudyRun {
    pub interval: usize,
    pub replicate: usize,
    pub timepoints: usize,
    pub posterior_mean_lambda: f64,
    pub accuracy: f64,
}

/// Fits every replicate dataset of a fixed `T`-point truth at each
/// sampling interval.
pub fn time_subsampling_study(config: &TimeStudyConfig) -> Result<Vec<TimeStudyRun>> {
    config.sampler.validate()?;
    let networks = simulate_networks(&config.base)?;
    let replicates = (0..config.replicates)
        .map(|r| ground_truth_for(networks.clone(), &config.base, r as u64))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..config.replicates)
        .flat_map(|r| config.intervals.iter().map(move |&iv| (r, iv)))
        .collect();
    jobs.par_iter()
        .enumerate()
        .map(|(index, &(replicate, interval))| {
            let sub = subsample_time(&replicates[replicate], interval)?;
            let course = TimeCourse::new(&sub.noisy_data)?;
            let trace = run_chain(&config.sampler, &course, index)?;
            let en = expected_network(std::slice::from_ref(&trace), config.sampler.burn_in)?;
            let metrics = network_metrics(&en.binarize(config.cutoff), &sub.networks)?;
            Ok(TimeStudyRun {
                interval,
                replicate,
                timepoints: sub.networks.len(),
                posterior_mean_lambda: trace.posterior_mean_lambda(),
                accuracy: metrics.accuracy,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::Observations;

    fn rng(i: u64) -> StreamRng {
        stream(99, Purpose::Sweep, i)
    }

    #[test]
    fn initial_network_flip_count() {
        assert_eq!(initial_flip_count(6, 0.1), 3);
        assert_eq!(initial_flip_count(2, 0.1), 1);
        assert_eq!(initial_flip_count(3, 1.0), 6);
        let mut r = rng(0);
        for _ in 0..10_000 {
            let g = generate_initial_network(6, 0.1, &mut r).unwrap();
            assert!(g.is_transitively_closed());
            assert!(g.edge_count() == 3);
        }
        for _ in 0..100 {
            assert_eq!(generate_initial_network(2, 0.5, &mut r).unwrap().edge_count(), 1);
        }
        assert!(generate_initial_network(4, 0.0, &mut r).is_err());
    }

    #[test]
    fn flip_counts_two_components_half() {
        let d = FlipCountDistribution::new(2, 0.5).unwrap();
        let expected = [1.0 / 2.25, 1.0 / 2.25, 0.25 / 2.25];
        for (p, e) in d.probs().iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
        let mut r = rng(1);
        let g = Network::empty(2).unwrap();
        let mut counts = [0usize; 3];
        let draws = 100_000;
        for _ in 0..draws {
            let (h, k) = perturb_network(&g, &d, &mut r);
            assert_eq!(g.distance(&h).unwrap().value() as usize, k);
            counts[k] += 1;
        }
        for (c, e) in counts.iter().zip(expected) {
            assert!((*c as f64 / draws as f64 - e).abs() < 0.02);
        }
    }

    #[test]
    fn flip_counts_chi_square() {
        // 95th..99.9th percentile tables are overkill; use p > 0.001 cutoffs
        // for 6 degrees of freedom after pooling small classes
        for &lambda in &[0.2, 0.5, 0.8] {
            let d = FlipCountDistribution::new(3, lambda).unwrap();
            let mut r = rng(2);
            let draws = 20_000;
            let mut counts = [0usize; 7];
            for _ in 0..draws {
                counts[d.sample(&mut r)] += 1;
            }
            let mut chi = 0.0;
            let mut cells = 0;
            let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
            for (k, &p) in d.probs().iter().enumerate() {
                pooled_o += counts[k] as f64;
                pooled_e += p * draws as f64;
                if pooled_e >= 5.0 {
                    chi += (pooled_o - pooled_e).powi(2) / pooled_e;
                    cells += 1;
                    pooled_o = 0.0;
                    pooled_e = 0.0;
                }
            }
            if pooled_e > 0.0 {
                chi += (pooled_o - pooled_e).powi(2) / pooled_e;
                cells += 1;
            }
            // chi-square 0.999 quantiles for df = 1..=6
            let crit = [10.83, 13.82, 16.27, 18.47, 20.52, 22.46];
            assert!(chi < crit[cells - 2], "lambda {lambda}: chi {chi} over {cells} cells");
        }
    }

    #[test]
    fn evolution_stays_closed_and_freezes_near_one() {
        let mut r = rng(3);
        let mut g = generate_initial_network(5, 0.1, &mut r).unwrap();
        let d = FlipCountDistribution::new(5, 0.3).unwrap();
        for _ in 0..200 {
            g = evolve_network(&g, &d, &mut r).unwrap();
            assert!(g.is_transitively_closed());
        }
        let frozen = FlipCountDistribution::new(5, 0.9999).unwrap();
        let same = (0..1000)
            .filter(|_| perturb_network(&g, &frozen, &mut r).1 == 0)
            .count();
        assert!(same > 990);
    }

    #[test]
    fn toy_network_effects_are_nested() {
        let g = Network::from_edges(4, &[(0, 1), (0, 2), (2, 3), (0, 3)]).unwrap();
        let att = vec![1, 1, 1, 1, 3, 3, 3, 3, 2, 2];
        let d = generate_effects(&g, &att, 1).unwrap();
        let b = vec![1, 1, 0, 0];
        let dd = vec![1, 0, 1, 1];
        let c = vec![1, 0, 1, 0];
        for i in 0..4 {
            assert_eq!(d[i], b);
            assert_eq!(d[4 + i], dd);
        }
        assert_eq!(d[8], c);
        assert_eq!(d[9], c);
    }

    #[test]
    fn empty_network_effects_and_replicates() {
        let g = Network::empty(3).unwrap();
        let att = component_major_attachments(3, 2);
        assert_eq!(att, vec![0, 0, 1, 1, 2, 2]);
        let d = generate_effects(&g, &att, 3).unwrap();
        for (i, row) in d.iter().enumerate() {
            for (col, &v) in row.iter().enumerate() {
                assert_eq!(v == 1, col / 3 == att[i]);
            }
        }
    }

    #[test]
    fn noise_rates() {
        let mut r = rng(4);
        let zeros = vec![vec![0u8; 100]; 100];
        let ones = vec![vec![1u8; 100]; 100];
        assert_eq!(add_noise(&zeros, 0.0, 0.0, &mut r).unwrap(), zeros);
        assert_eq!(add_noise(&zeros, 1.0, 0.0, &mut r).unwrap(), ones);
        let frac = |rows: &[Vec<u8>], v: u8| rows.iter().flatten().filter(|&&x| x == v).count() as f64 / 10_000.0;
        // 99% binomial band for p = 0.1 over 10^4 cells: ±2.576·0.003
        let a = add_noise(&zeros, 0.1, 0.5, &mut r).unwrap();
        assert!((frac(&a, 1) - 0.1).abs() < 0.0078);
        let b = add_noise(&ones, 0.5, 0.2, &mut r).unwrap();
        assert!((frac(&b, 0) - 0.2).abs() < 0.0104);
        assert!(add_noise(&zeros, -0.1, 0.0, &mut r).is_err());
    }

    #[test]
    fn default_simulation_shape_and_noise() {
        let cfg = SimConfig::default();
        let truth = simulate(&cfg).unwrap();
        assert_eq!(truth.networks.len(), 8);
        assert!(truth.networks.iter().all(Network::is_transitively_closed));
        for (c, d) in truth.clean_data.iter().zip(&truth.noisy_data) {
            assert_eq!((c.m(), c.columns().len()), (24, 18));
            assert_eq!((d.m(), d.columns().len()), (24, 18));
        }
        assert_eq!(simulate(&cfg).unwrap(), truth);

        let quiet = SimConfig {
            alpha: 0.0,
            beta: 0.0,
            ..cfg
        };
        let t = simulate(&quiet).unwrap();
        assert_eq!(t.clean_data, t.noisy_data);
        match t.clean_data[0].observations() {
            Observations::Binary { rows, .. } => assert_eq!(rows.len(), 24),
            _ => unreachable!(),
        }
    }

    #[test]
    fn config_validation() {
        let ok = SimConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SimConfig { n: 1, ..ok.clone() }.validate().is_err());
        assert!(SimConfig {
            replicates: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            alpha: 1.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            lambda_true: 1.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            initial_flip_fraction: 0.0,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn subsampling() {
        let cfg = SimConfig {
            timepoints: 128,
            lambda_true: 0.9,
            ..SimConfig::default()
        };
        let truth = simulate(&cfg).unwrap();
        assert_eq!(subsample_time(&truth, 1).unwrap(), truth);
        let sub = subsample_time(&truth, 32).unwrap();
        assert_eq!(sub.networks.len(), 4);
        for (i, g) in sub.networks.iter().enumerate() {
            assert_eq!(g, &truth.networks[32 * i]);
            assert_eq!(sub.noisy_data[i], truth.noisy_data[32 * i]);
        }
        assert!(subsample_time(&truth, 128).is_err());
        assert!(subsample_time(&truth, 0).is_err());
    }

    #[test]
    fn single_dataset_cell_equals_its_run() {
        let config = SweepConfig {
            sampler: SamplerConfig {
                iterations: 300,
                burn_in: 100,
                ..SamplerConfig::default()
            },
            lambdas: vec![LambdaSetting {
                lambda: 0.9,
                proposal_sd: 0.65,
            }],
            alphas: vec![0.1],
            betas: vec![0.1],
            datasets_per_cell: 1,
            ..SweepConfig::default()
        };
        let res = run_sweep(&config).unwrap();
        assert_eq!(res.runs.len(), 1);
        let (run, cell) = (&res.runs[0], &res.cells[0]);
        assert_eq!(cell.mean_mc_error, run.mc_error);
        assert_eq!(cell.mean_accuracy, run.accuracy);
        assert_eq!(cell.sd_accuracy, 0.0);
        assert_eq!(cell.lambda_coverage, run.lambda_covered() as u8 as f64);
        assert_eq!(run_sweep(&config).unwrap(), res);
    }

    #[test]
    fn coverage_counts_only_containing_intervals() {
        let hpd = HpdInterval {
            lower: 0.2,
            upper: 0.4,
            nominal_coverage: 0.95,
        };
        let run = SweepRun {
            lambda: 0.9,
            alpha: 0.1,
            beta: 0.1,
            dataset: 0,
            posterior_mean_lambda: 0.3,
            mc_error: 0.6,
            accuracy: 1.0,
            sensitivity: 1.0,
            specificity: 1.0,
            rejection_rate: 0.5,
            lambda_hpd: hpd,
            true_log_joint: -10.0,
            log_joint_hpd: HpdInterval {
                lower: -12.0,
                upper: -8.0,
                nominal_coverage: 0.95,
            },
        };
        let cell = summarise_cell(0.9, 0.1, 0.1, &[&run]);
        assert_eq!(cell.lambda_coverage, 0.0);
        assert_eq!(cell.log_joint_coverage, 1.0);
    }
}
