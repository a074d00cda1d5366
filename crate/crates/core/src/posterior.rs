//! Posterior edge means of the network path.

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::sampler::Trace;

/// Running per-edge counts over retained samples, `T × n × n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSums {
    timepoints: usize,
    n: usize,
    counts: Vec<u32>,
    samples: usize,
}

impl EdgeSums {
    pub fn new(timepoints: usize, n: usize) -> Self {
        EdgeSums {
            timepoints,
            n,
            counts: vec![0; timepoints * n * n],
            samples: 0,
        }
    }

    pub fn add_path(&mut self, path: &[Network]) {
        debug_assert_eq!(path.len(), self.timepoints);
        for (t, g) in path.iter().enumerate() {
            let base = t * self.n * self.n;
            for (r, c) in g.edges() {
                self.counts[base + r * self.n + c] += 1;
            }
        }
        self.samples += 1;
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn timepoints(&self) -> usize {
        self.timepoints
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self, t: usize, r: usize, c: usize) -> u32 {
        self.counts[(t * self.n + r) * self.n + c]
    }

    /// Entrywise sum of several accumulators over the same shape.
    pub fn merge(parts: &[&EdgeSums]) -> Result<EdgeSums> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to merge"))?;
        let mut out = EdgeSums::new(first.timepoints, first.n);
        for p in parts {
            if p.timepoints != out.timepoints || p.n != out.n {
                return Err(Error::shape("edge sums have different shapes"));
            }
            for (o, c) in out.counts.iter_mut().zip(&p.counts) {
                *o += c;
            }
            out.samples += p.samples;
        }
        Ok(out)
    }

    fn means(&self) -> Vec<f64> {
        let s = self.samples.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / s).collect()
    }
}

/// Posterior mean adjacency per timepoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedNetwork {
    timepoints: usize,
    n: usize,
    means: Vec<f64>,
}

impl ExpectedNetwork {
    pub fn from_means(timepoints: usize, n: usize, means: Vec<f64>) -> Result<Self> {
        if means.len() != timepoints * n * n {
            return Err(Error::shape(format!(
                "expected {} means for {timepoints} timepoints of {n} components, got {}",
                timepoints * n * n,
                means.len()
            )));
        }
        for t in 0..timepoints {
            for r in 0..n {
                let v = means[(t * n + r) * n + r];
                if v != 0.0 {
                    return Err(Error::invalid(format!(
                        "diagonal mean at timepoint {} component {r} is {v}, expected 0",
                        t + 1
                    )));
                }
            }
        }
        if let Some(v) = means.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("edge mean {v} is outside [0, 1]")));
        }
        Ok(ExpectedNetwork { timepoints, n, means })
    }

    pub fn timepoints(&self) -> usize {
        self.timepoints
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, t: usize, r: usize, c: usize) -> f64 {
        self.means[(t * self.n + r) * self.n + c]
    }

    pub fn matrix(&self, t: usize) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.get(t, r, c)).collect())
            .collect()
    }

    /// Edge iff the posterior mean is strictly above `cutoff`.
    pub fn binarize(&self, cutoff: f64) -> Vec<Network> {
        (0..self.timepoints)
            .map(|t| {
                let rows = (0..self.n)
                    .map(|r| {
                        (0..self.n)
                            .filter(|&c| c != r && self.get(t, r, c) > cutoff)
                            .fold(0u64, |m, c| m | (1 << c))
                    })
                    .collect();
                Network::from_row_masks(rows).expect("shape checked at construction")
            })
            .collect()
    }
}

/// Overall expected network: the mean over chains of each chain's
/// post-burn-in edge frequencies.
///
/// When `burn_in` equals the burn-in the traces were run with, the exact
/// running sums are used. A larger `burn_in` falls back to the thinned path
/// snapshots taken after it.
pub fn expected_network(traces: &[Trace], burn_in: usize) -> Result<ExpectedNetwork> {
    let first = traces.first().ok_or_else(|| Error::invalid("no traces to summarise"))?;
    let (timepoints, n) = (first.edge_sums.timepoints(), first.edge_sums.n());
    let mut acc = vec![0.0; timepoints * n * n];
    for tr in traces {
        if tr.edge_sums.timepoints() != timepoints || tr.edge_sums.n() != n {
            return Err(Error::shape("traces cover different network shapes"));
        }
        if burn_in >= tr.iterations {
            return Err(Error::invalid(format!(
                "burn-in {burn_in} leaves no samples of a {}-iteration chain",
                tr.iterations
            )));
        }
        let chain_means = if burn_in == tr.burn_in {
            tr.edge_sums.means()
        } else if burn_in > tr.burn_in {
            let mut sums = EdgeSums::new(timepoints, n);
            for snap in tr.snapshots.iter().filter(|s| s.iteration > burn_in) {
                sums.add_path(&snap.path);
            }
            if sums.samples() == 0 {
                return Err(Error::invalid(format!(
                    "chain {} has no snapshots after iteration {burn_in}",
                    tr.chain
                )));
            }
            sums.means()
        } else {
            return Err(Error::invalid(format!(
                "chain {} only kept samples after iteration {}, cannot use burn-in {burn_in}",
                tr.chain, tr.burn_in
            )));
        };
        for (a, m) in acc.iter_mut().zip(chain_means) {
            *a += m;
        }
    }
    let k = traces.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    ExpectedNetwork::from_means(timepoints, n, acc)
}

/// Free function form of [`ExpectedNetwork::binarize`].
pub fn binarize(en: &ExpectedNetwork, cutoff: f64) -> Vec<Network> {
    en.binarize(cutoff)
}
