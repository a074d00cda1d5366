//! Convergence and recovery diagnostics for sampler output.

use crate::error::{Error, Result};
use crate::graph::Network;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsrfResult {
    pub sqrt_r_hat: f64,
    /// All chains were constant; `sqrt_r_hat` is reported as 1.
    pub degenerate: bool,
}

/// Gelman–Rubin potential scale reduction, `√R̂`, on the samples after
/// `burn_in`. Uses the original two-stage variance estimate without the
/// degrees-of-freedom correction.
pub fn psrf(chains: &[&[f64]], burn_in: usize) -> Result<PsrfResult> {
    if chains.len() < 2 {
        return Err(Error::invalid("potential scale reduction needs at least 2 chains"));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::shape("chains have different lengths"));
    }
    if len < burn_in + 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples after burn-in {burn_in}, chains have {len}"
        )));
    }
    let kept: Vec<&[f64]> = chains.iter().map(|c| &c[burn_in..]).collect();
    Ok(psrf_kept(&kept))
}

fn psrf_kept(chains: &[&[f64]]) -> PsrfResult {
    let l = chains[0].len() as f64;
    let m = chains.len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (l - 1.0))
        .sum::<f64>()
        / m;
    let grand = mean(&means);
    let between = l * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
    if within <= 0.0 {
        return PsrfResult {
            sqrt_r_hat: 1.0,
            degenerate: true,
        };
    }
    let pooled = (l - 1.0) / l * within + between / l;
    PsrfResult {
        sqrt_r_hat: (pooled / within).sqrt(),
        degenerate: false,
    }
}

/// `√R̂` over sliding windows of the post-burn-in samples. Returns
/// `(window end index into the full chain, result)` pairs; there are
/// `⌊(L - window) / stride⌋ + 1` of them for `L` retained samples.
pub fn running_psrf(
    chains: &[&[f64]],
    burn_in: usize,
    window: usize,
    stride: usize,
) -> Result<Vec<(usize, PsrfResult)>> {
    if window < 2 || stride == 0 {
        return Err(Error::invalid("window must be at least 2 and stride positive"));
    }
    psrf(chains, burn_in)?;
    let kept = chains[0].len() - burn_in;
    if window > kept {
        return Err(Error::invalid(format!(
            "window {window} is longer than the {kept} retained samples"
        )));
    }
    let count = (kept - window) / stride + 1;
    Ok((0..count)
        .map(|k| {
            let start = burn_in + k * stride;
            let slices: Vec<&[f64]> = chains.iter().map(|c| &c[start..start + window]).collect();
            (start + window, psrf_kept(&slices))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssEstimate {
    pub ess: f64,
    /// Zero-variance trace; `ess` is reported as 0.
    pub degenerate: bool,
}

/// Effective sample size with autocorrelations summed up to the first lag
/// `k` where `ρ_k + ρ_{k+1} ≤ 0`, capped at the number of samples.
pub fn ess(trace: &[f64], burn_in: usize) -> Result<EssEstimate> {
    if trace.len() <= burn_in {
        return Err(Error::invalid(format!(
            "trace of length {} has nothing after burn-in {burn_in}",
            trace.len()
        )));
    }
    let x = &trace[burn_in..];
    let l = x.len();
    let mu = mean(x);
    let centred: Vec<f64> = x.iter().map(|v| v - mu).collect();
    let var = centred.iter().map(|v| v * v).sum::<f64>() / l as f64;
    if var <= 0.0 {
        return Ok(EssEstimate {
            ess: 0.0,
            degenerate: true,
        });
    }
    let rho = |k: usize| -> f64 {
        if k >= l {
            return 0.0;
        }
        centred[..l - k]
            .iter()
            .zip(&centred[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (l as f64 * var)
    };
    let mut sum = 0.0;
    let mut k = 1;
    let mut current = rho(1);
    while k < l {
        let next = rho(k + 1);
        if current + next <= 0.0 {
            break;
        }
        sum += current;
        current = next;
        k += 1;
    }
    let ess = (l as f64 / (1.0 + 2.0 * sum)).min(l as f64);
    Ok(EssEstimate { ess, degenerate: false })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HpdInterval {
    pub lower: f64,
    pub upper: f64,
    pub nominal_coverage: f64,
}

impl HpdInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Minimum number of samples accepted by [`hpd_interval`].
pub const HPD_MIN_SAMPLES: usize = 20;

/// Number of order statistics an HPD window spans.
pub fn hpd_window_len(samples: usize, coverage: f64) -> usize {
    // guard against 0.95 * 100 landing a hair above 95
    ((coverage * samples as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Shortest window of `⌈coverage·L⌉` consecutive order statistics; the
/// lowest start wins ties.
pub fn hpd_interval(samples: &[f64], coverage: f64) -> Result<HpdInterval> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::invalid(format!("coverage must lie in (0, 1), got {coverage}")));
    }
    if samples.len() < HPD_MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "HPD interval needs at least {HPD_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("samples contain NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = hpd_window_len(sorted.len(), coverage);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for start in 0..=sorted.len() - k {
        let w = sorted[start + k - 1] - sorted[start];
        if w < best_width {
            best_width = w;
            best = start;
        }
    }
    Ok(HpdInterval {
        lower: sorted[best],
        upper: sorted[best + k - 1],
        nominal_coverage: coverage,
    })
}

/// Fraction of post-burn-in proposals that were rejected; 0 when nothing
/// is left after burn-in.
pub fn rejection_rate(accept_flags: &[bool], burn_in: usize) -> f64 {
    let kept = accept_flags.get(burn_in..).unwrap_or(&[]);
    if kept.is_empty() {
        return 0.0;
    }
    kept.iter().filter(|&&a| !a).count() as f64 / kept.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkMetrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    /// No true edges: sensitivity is reported as 1.
    pub sensitivity_undefined: bool,
    /// No true non-edges: specificity is reported as 1.
    pub specificity_undefined: bool,
}

/// Directed-edge confusion counts pooled over all timepoints and
/// off-diagonal positions.
pub fn network_metrics(inferred: &[Network], truth: &[Network]) -> Result<NetworkMetrics> {
    if inferred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} inferred networks against {} true networks",
            inferred.len(),
            truth.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (g, h) in inferred.iter().zip(truth) {
        if g.n() != h.n() {
            return Err(Error::shape("inferred and true networks differ in size"));
        }
        let n = g.n();
        for r in 0..n {
            for c in (0..n).filter(|&c| c != r) {
                match (g.has_edge(r, c), h.has_edge(r, c)) {
                    (true, true) => tp += 1,
                    (false, false) => tn += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                }
            }
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            (1.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let (sensitivity, sensitivity_undefined) = ratio(tp, tp + fn_);
    let (specificity, specificity_undefined) = ratio(tn, tn + fp);
    let (accuracy, _) = ratio(tp + tn, tp + tn + fp + fn_);
    Ok(NetworkMetrics {
        tp,
        tn,
        fp,
        fn_,
        sensitivity,
        specificity,
        accuracy,
        sensitivity_undefined,
        specificity_undefined,
    })
}

/// Absolute error of the posterior mean of `λ`.
pub fn mc_error_lambda(posterior_mean: f64, true_lambda: f64) -> f64 {
    (posterior_mean - true_lambda).abs()
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_mean_ci<R: rand::Rng + ?Sized>(
    values: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return Err(Error::invalid("bootstrap needs values and at least one resample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let l = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..l).map(|_| values[rng.gen_range(0..l)]).sum::<f64>() / l as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = stream(seed, Purpose::Sweep, 0);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(seed: u64, len: usize, phi: f64) -> Vec<f64> {
        let mut rng = stream(seed, Purpose::Sweep, 1);
        let mut x: f64 = 0.0;
        (0..len)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + e;
                x
            })
            .collect()
    }

    #[test]
    fn psrf_near_one_for_identical_chains() {
        let a = gaussian(1, 10_000);
        let b = gaussian(2, 10_000);
        let r = psrf(&[&a, &b], 0).unwrap();
        assert!((0.99..=1.05).contains(&r.sqrt_r_hat), "{r:?}");
        assert!(!r.degenerate);
    }

    #[test]
    fn psrf_separated_chains() {
        let a: Vec<f64> = (0..100).map(|i| (i % 2) as f64 * 1e-3).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 100.0).collect();
        assert!(psrf(&[&a, &b], 0).unwrap().sqrt_r_hat > 100.0);
        let c = vec![3.0; 50];
        let r = psrf(&[&c, &c], 0).unwrap();
        assert!(r.degenerate && r.sqrt_r_hat == 1.0);
        assert!(psrf(&[&c], 0).is_err());
        assert!(psrf(&[&c, &c[..10]], 0).is_err());
    }

    #[test]
    fn running_psrf_length() {
        let a = gaussian(3, 1000);
        let b = gaussian(4, 1000);
        let series = running_psrf(&[&a, &b], 100, 90, 45).unwrap();
        assert_eq!(series.len(), (900 - 90) / 45 + 1);
        assert_eq!(series[0].0, 190);
    }

    #[test]
    fn ess_iid_and_ar1() {
        let x = gaussian(5, 10_000);
        let e = ess(&x, 0).unwrap().ess;
        assert!((9_000.0..=10_000.0).contains(&e), "{e}");

        let y = ar1(6, 10_000, 0.9);
        let expected = 10_000.0 * 0.1 / 1.9;
        let e = ess(&y, 0).unwrap().ess;
        assert!(((e - expected) / expected).abs() < 0.25, "{e} vs {expected}");

        let z = vec![1.0; 100];
        let r = ess(&z, 0).unwrap();
        assert!(r.degenerate && r.ess == 0.0);
        assert!(ess(&z, 100).is_err());
    }

    #[test]
    fn ess_capped_for_anticorrelated() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(ess(&x, 0).unwrap().ess <= 1000.0);
    }

    #[test]
    fn hpd_examples() {
        let flat = vec![2.5; 30];
        let h = hpd_interval(&flat, 0.95).unwrap();
        assert_eq!((h.lower, h.upper), (2.5, 2.5));

        let ints: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let h = hpd_interval(&ints, 0.95).unwrap();
        assert_eq!((h.lower, h.upper), (1.0, 95.0));
        assert_eq!(h.width(), 94.0);

        let g = gaussian(7, 100_000);
        let h = hpd_interval(&g, 0.95).unwrap();
        assert!((h.lower + 1.96).abs() < 0.05 && (h.upper - 1.96).abs() < 0.05, "{h:?}");

        assert!(hpd_interval(&ints[..19], 0.95).is_err());
        assert!(hpd_interval(&ints, 1.0).is_err());
    }

    #[test]
    fn rejection_rate_examples() {
        assert_eq!(rejection_rate(&[true; 10], 0), 0.0);
        let alt: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert_eq!(rejection_rate(&alt, 0), 0.5);
        assert_eq!(rejection_rate(&alt, 20), 0.0);
        assert_eq!(rejection_rate(&[true, false, false], 1), 1.0);
    }

    #[test]
    fn metrics_examples() {
        let truth = vec![Network::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()];
        let m = network_metrics(&truth, &truth).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.accuracy), (1.0, 1.0, 1.0));
        let empty = vec![Network::empty(3).unwrap()];
        let m = network_metrics(&empty, &truth).unwrap();
        assert_eq!((m.sensitivity, m.specificity), (0.0, 1.0));
        assert_eq!(m.accuracy, 0.5);
        let full = vec![Network::from_row_masks(vec![7; 3]).unwrap()];
        let m = network_metrics(&full, &full).unwrap();
        assert!(m.specificity_undefined && m.specificity == 1.0);
        assert!(network_metrics(&truth, &[]).is_err());
        assert!(network_metrics(&truth, &[Network::empty(4).unwrap()]).is_err());
    }

    #[test]
    fn mc_error_examples() {
        assert!((mc_error_lambda(0.11, 0.10) - 0.01).abs() < 1e-12);
        assert_eq!(mc_error_lambda(0.5, 0.5), 0.0);
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let mut rng = stream(11, Purpose::Sweep, 2);
        let x = gaussian(12, 400);
        let (lo, hi) = bootstrap_mean_ci(&x, 0.95, 2000, &mut rng).unwrap();
        let m = mean(&x);
        assert!(lo < m && m < hi);
        // half width near 1.96 / sqrt(400)
        assert!(((hi - lo) / 2.0 - 0.098).abs() < 0.02, "{lo} {hi}");
        assert_eq!(bootstrap_mean_ci(&[0.3; 5], 0.95, 100, &mut rng).unwrap(), (0.3, 0.3));
        assert!(bootstrap_mean_ci(&[], 0.95, 100, &mut rng).is_err());
    }

    fn exhaustive_shortest(sorted: &[f64], k: usize) -> f64 {
        (0..=sorted.len() - k)
            .map(|s| sorted[s + k - 1] - sorted[s])
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn psrf_affine_invariant(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -50f64..50.0) {
            let mut rng = stream(seed, Purpose::Sweep, 9);
            let a: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() + 0.1).collect();
            let r1 = psrf(&[&a, &b], 10).unwrap().sqrt_r_hat;
            let ta: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
            let tb: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
            let r2 = psrf(&[&ta, &tb], 10).unwrap().sqrt_r_hat;
            prop_assert!((r1 - r2).abs() < 1e-9);
        }

        #[test]
        fn hpd_is_shortest_and_covers(xs in proptest::collection::vec(-100f64..100.0, 20..200), cov in 0.5f64..0.99) {
            let h = hpd_interval(&xs, cov).unwrap();
            let k = hpd_window_len(xs.len(), cov);
            prop_assert!(h.lower <= h.upper);
            let inside = xs.iter().filter(|&&x| h.contains(x)).count();
            prop_assert!(inside >= k);
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assert_eq!(h.width(), exhaustive_shortest(&sorted, k));
        }

        #[test]
        fn accuracy_identity(seed in any::<u64>()) {
            let mut rng = stream(seed, Purpose::Sweep, 10);
            let mk = |rng: &mut crate::rng::StreamRng| {
                (0..3).map(|_| Network::from_row_masks((0..4).map(|_| rng.gen()).collect()).unwrap()).collect::<Vec<_>>()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let m = network_metrics(&a, &b).unwrap();
            let p = (m.tp + m.fn_) as f64;
            let n = (m.tn + m.fp) as f64;
            if !m.sensitivity_undefined && !m.specificity_undefined {
                prop_assert!((m.accuracy - (m.sensitivity * p + m.specificity * n) / (p + n)).abs() < 1e-12);
            }
        }
    }
}
