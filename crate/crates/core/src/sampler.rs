//! Metropolis-within-Gibbs sampler for the network path and smoothness.
//!
//! One sweep visits timepoints `1..=T` in order, proposing a single-edge
//! flip of `G_t` and accepting it against the full conditional of `G_t`
//! (emission at `t` plus the transitions into and out of `t`). The sweep
//! ends with one random-walk update of `κ = logit(λ)`, whose target
//! includes the Jacobian `S(κ)(1 - S(κ))` of the uniform prior on `λ`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{off_diagonal_position, Network};
use crate::likelihood::{greedy_climb, EffectDataset, EmissionModel};
use crate::posterior::EdgeSums;
use crate::rng::{stream, Purpose, StreamRng};
use crate::transition::{log_jacobian, Smoothness, TransitionKernel};

/// How the network path is initialised.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Initialization {
    Empty,
    /// Per-timepoint greedy static fit starting from the empty graph.
    #[default]
    GreedyNem,
    Given(Vec<Network>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Standard deviation of the Gaussian random walk on `κ`.
    pub proposal_sd: f64,
    pub seed: u64,
    pub init: Initialization,
    pub lambda_init: f64,
    /// Keep the full path every this many sweeps (0 disables snapshots).
    pub snapshot_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 12_000,
            burn_in: 2_000,
            proposal_sd: 0.65,
            seed: 1,
            init: Initialization::GreedyNem,
            lambda_init: 0.5,
            snapshot_every: 100,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return Err(Error::invalid(format!(
                "proposal standard deviation must be positive, got {}",
                self.proposal_sd
            )));
        }
        Smoothness::from_lambda(self.lambda_init)?;
        Ok(())
    }
}

/// Compiled per-timepoint emission models sharing one component set.
#[derive(Clone, Debug)]
pub struct TimeCourse {
    n: usize,
    models: Vec<EmissionModel>,
}

impl TimeCourse {
    pub fn new(datasets: &[EffectDataset]) -> Result<Self> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::invalid("at least one timepoint is required"))?;
        if let Some(t) = datasets.iter().position(|d| !d.same_shape(first)) {
            return Err(Error::shape(format!(
                "timepoint {} has a different shape, design or mode than timepoint 1",
                t + 1
            )));
        }
        if first.n() < 2 {
            return Err(Error::invalid("time-varying inference needs at least 2 components"));
        }
        let models = datasets.iter().map(EmissionModel::new).collect::<Result<Vec<_>>>()?;
        Ok(TimeCourse { n: first.n(), models })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn timepoints(&self) -> usize {
        self.models.len()
    }

    pub fn model(&self, t: usize) -> &EmissionModel {
        &self.models[t]
    }

    /// Log joint likelihood of a path: transitions plus emissions. The
    /// uniform initial distribution is a constant and is left out.
    pub fn log_joint(&self, path: &[Network], lambda: f64) -> Result<f64> {
        if path.len() != self.models.len() {
            return Err(Error::shape(format!(
                "path has {} networks for {} timepoints",
                path.len(),
                self.models.len()
            )));
        }
        let kernel = TransitionKernel::new(self.n, lambda)?;
        let mut total = 0.0;
        for (t, g) in path.iter().enumerate() {
            total += self.models[t].log_likelihood(g)?;
            if t > 0 {
                total += kernel.log_prob(path[t - 1].distance(g)?.value());
            }
        }
        Ok(total)
    }
}

/// Current state of one chain, with cached emissions and distances.
#[derive(Clone, Debug)]
pub struct ChainState {
    path: Vec<Network>,
    smoothness: Smoothness,
    kernel: TransitionKernel,
    emissions: Vec<f64>,
    // distances[t] = d(path[t], path[t + 1])
    distances: Vec<u32>,
    emission_total: f64,
    distance_total: u64,
    iteration: usize,
}

impl ChainState {
    pub fn new(path: Vec<Network>, smoothness: Smoothness, course: &TimeCourse) -> Result<Self> {
        if path.len() != course.timepoints() {
            return Err(Error::shape(format!(
                "initial path has {} networks for {} timepoints",
                path.len(),
                course.timepoints()
            )));
        }
        let emissions = path
            .iter()
            .enumerate()
            .map(|(t, g)| course.model(t).log_likelihood(g))
            .collect::<Result<Vec<_>>>()?;
        let distances: Vec<u32> = path.windows(2).map(|w| w[0].distance_unchecked(&w[1])).collect();
        Ok(ChainState {
            kernel: TransitionKernel::new(course.n(), smoothness.lambda())?,
            emission_total: emissions.iter().sum(),
            distance_total: distances.iter().map(|&d| d as u64).sum(),
            path,
            smoothness,
            emissions,
            distances,
            iteration: 0,
        })
    }

    pub fn path(&self) -> &[Network] {
        &self.path
    }

    pub fn lambda(&self) -> f64 {
        self.smoothness.lambda()
    }

    pub fn kappa(&self) -> f64 {
        self.smoothness.kappa()
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn emissions(&self) -> &[f64] {
        &self.emissions
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Incrementally maintained log joint likelihood.
    pub fn log_joint(&self) -> f64 {
        self.emission_total + self.kernel.log_prob_total(self.distances.len(), self.distance_total)
    }

    /// True when every cached emission matches a fresh evaluation.
    pub fn cache_is_consistent(&self, course: &TimeCourse) -> bool {
        self.path.iter().enumerate().all(|(t, g)| {
            let fresh = course.model(t).eval(g);
            (fresh - self.emissions[t]).abs() <= 1e-9 * fresh.abs().max(1.0)
        })
    }

    /// Fixes `λ` without an MH step (used by fixed-λ studies).
    pub fn set_smoothness(&mut self, smoothness: Smoothness) -> Result<()> {
        self.kernel = TransitionKernel::new(self.kernel.n(), smoothness.lambda())?;
        self.smoothness = smoothness;
        Ok(())
    }
}

/// Uniform single-edge toggle over the `n(n-1)` off-diagonal positions.
pub fn propose_graph<R: Rng + ?Sized>(g: &Network, rng: &mut R) -> Network {
    let n = g.n();
    let (r, c) = off_diagonal_position(n, rng.gen_range(0..n * (n - 1)));
    g.flip_edge(r, c).expect("off-diagonal position")
}

/// Log Metropolis-Hastings ratio for replacing `path[t]` by `proposal`.
///
/// Transition terms use the distance difference times `log(1-λ)`; the
/// proposal is symmetric so no Hastings correction appears.
pub fn state_log_acceptance(
    path: &[Network],
    t: usize,
    proposal: &Network,
    log_emission_ratio: f64,
    kernel: &TransitionKernel,
) -> f64 {
    let current = &path[t];
    let mut log_ratio = log_emission_ratio;
    if t > 0 {
        let prev = &path[t - 1];
        log_ratio += kernel.log_ratio(prev.distance_unchecked(proposal), prev.distance_unchecked(current));
    }
    if t + 1 < path.len() {
        let next = &path[t + 1];
        log_ratio += kernel.log_ratio(proposal.distance_unchecked(next), current.distance_unchecked(next));
    }
    log_ratio
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.gen();
    u < log_ratio.exp()
}

/// One structural MH update of timepoint `t` (0-based).
pub fn state_update<R: Rng + ?Sized>(t: usize, chain: &mut ChainState, course: &TimeCourse, rng: &mut R) -> bool {
    let proposal = propose_graph(&chain.path[t], rng);
    let proposal_emission = course.model(t).eval(&proposal);
    let log_ratio = state_log_acceptance(
        &chain.path,
        t,
        &proposal,
        proposal_emission - chain.emissions[t],
        &chain.kernel,
    );
    if !accept(log_ratio, rng) {
        return false;
    }
    if t > 0 {
        let d = chain.path[t - 1].distance_unchecked(&proposal);
        chain.distance_total = chain.distance_total - chain.distances[t - 1] as u64 + d as u64;
        chain.distances[t - 1] = d;
    }
    if t + 1 < chain.path.len() {
        let d = proposal.distance_unchecked(&chain.path[t + 1]);
        chain.distance_total = chain.distance_total - chain.distances[t] as u64 + d as u64;
        chain.distances[t] = d;
    }
    chain.emission_total += proposal_emission - chain.emissions[t];
    chain.emissions[t] = proposal_emission;
    chain.path[t] = proposal;
    true
}

/// Log acceptance ratio for moving `κ` to `kappa_new`. Emissions do not
/// depend on `λ` and cancel; the normalisers do not.
pub fn kappa_log_acceptance(chain: &ChainState, kappa_new: f64) -> f64 {
    let Ok(proposed) = Smoothness::from_kappa(kappa_new) else {
        return f64::NEG_INFINITY;
    };
    let Ok(kernel_new) = TransitionKernel::new(chain.kernel.n(), proposed.lambda()) else {
        return f64::NEG_INFINITY;
    };
    let k = chain.distances.len();
    kernel_new.log_prob_total(k, chain.distance_total) - chain.kernel.log_prob_total(k, chain.distance_total)
        + log_jacobian(kappa_new)
        - log_jacobian(chain.kappa())
}

/// Gaussian random-walk MH update of `κ`.
pub fn kappa_update<R: Rng + ?Sized>(chain: &mut ChainState, sigma: f64, rng: &mut R) -> bool {
    let walk = Normal::new(chain.kappa(), sigma).expect("sigma validated positive");
    let kappa_new = walk.sample(rng);
    let log_ratio = kappa_log_acceptance(chain, kappa_new);
    if !accept(log_ratio, rng) {
        return false;
    }
    let smoothness = Smoothness::from_kappa(kappa_new).expect("finite acceptance implies valid kappa");
    chain
        .set_smoothness(smoothness)
        .expect("valid smoothness gives a valid kernel");
    true
}

/// Path snapshot retained for thinned summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub path: Vec<Network>,
}

/// Record of one chain.
#[derive(Clone, Debug)]
pub struct Trace {
    pub chain: usize,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_sd: f64,
    pub lambda: Vec<f64>,
    pub log_joint: Vec<f64>,
    pub kappa_accepted: Vec<bool>,
    /// Accepted structural moves per timepoint over the whole run.
    pub state_accepts: Vec<u64>,
    pub edge_sums: EdgeSums,
    pub snapshots: Vec<Snapshot>,
    pub final_path: Vec<Network>,
}

impl Trace {
    pub fn post_burn_in_lambda(&self) -> &[f64] {
        &self.lambda[self.burn_in..]
    }

    pub fn posterior_mean_lambda(&self) -> f64 {
        let s = self.post_burn_in_lambda();
        s.iter().sum::<f64>() / s.len() as f64
    }
}

fn initial_path(config: &SamplerConfig, course: &TimeCourse) -> Result<Vec<Network>> {
    let empty = Network::empty(course.n())?;
    match &config.init {
        Initialization::Empty => Ok(vec![empty; course.timepoints()]),
        Initialization::GreedyNem => (0..course.timepoints())
            .map(|t| greedy_climb(course.model(t), empty.clone()))
            .collect(),
        Initialization::Given(path) => {
            if path.len() != course.timepoints() {
                return Err(Error::shape(format!(
                    "given initial path has {} networks for {} timepoints",
                    path.len(),
                    course.timepoints()
                )));
            }
            if let Some(g) = path.iter().find(|g| g.n() != course.n()) {
                return Err(Error::shape(format!(
                    "given initial network has {} components, data has {}",
                    g.n(),
                    course.n()
                )));
            }
            Ok(path.clone())
        }
    }
}

/// Runs chain `chain_index` of a multi-chain run.
pub fn run_chain(config: &SamplerConfig, course: &TimeCourse, chain_index: usize) -> Result<Trace> {
    config.validate()?;
    let mut rng: StreamRng = stream(config.seed, Purpose::Chain, chain_index as u64);
    let path = initial_path(config, course)?;
    let mut chain = ChainState::new(path, Smoothness::from_lambda(config.lambda_init)?, course)?;
    let timepoints = course.timepoints();

    let n_iter = config.iterations;
    let mut lambda = Vec::with_capacity(n_iter);
    let mut log_joint = Vec::with_capacity(n_iter);
    let mut kappa_accepted = Vec::with_capacity(n_iter);
    let mut state_accepts = vec![0u64; timepoints];
    let mut edge_sums = EdgeSums::new(timepoints, course.n());
    let mut snapshots = Vec::new();

    for i in 1..=n_iter {
        for (t, accepted) in state_accepts.iter_mut().enumerate() {
            if state_update(t, &mut chain, course, &mut rng) {
                *accepted += 1;
            }
        }
        kappa_accepted.push(kappa_update(&mut chain, config.proposal_sd, &mut rng));
        chain.iteration = i;
        debug_assert!(i % 500 != 0 || chain.cache_is_consistent(course));

        lambda.push(chain.lambda());
        log_joint.push(chain.log_joint());
        if i > config.burn_in {
            edge_sums.add_path(&chain.path);
        }
        if config.snapshot_every > 0 && i % config.snapshot_every == 0 {
            snapshots.push(Snapshot {
                iteration: i,
                path: chain.path.clone(),
            });
        }
    }

    Ok(Trace {
        chain: chain_index,
        seed: config.seed,
        iterations: n_iter,
        burn_in: config.burn_in,
        proposal_sd: config.proposal_sd,
        lambda,
        log_joint,
        kappa_accepted,
        state_accepts,
        edge_sums,
        snapshots,
        final_path: chain.path,
    })
}

/// Runs `n_chains` independent chains in parallel; chain `i` uses stream
/// `i` of the configured seed, so results do not depend on scheduling.
pub fn run_chains_parallel(config: &SamplerConfig, course: &TimeCourse, n_chains: usize) -> Result<Vec<Trace>> {
    if n_chains == 0 {
        return Err(Error::invalid("at least one chain is required"));
    }
    config.validate()?;
    (0..n_chains)
        .into_par_iter()
        .map(|i| run_chain(config, course, i))
        .collect()
}
