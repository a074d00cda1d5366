//! Nested-effects emission model.
//!
//! An [`EffectDataset`] holds one timepoint of observed effects: `m`
//! reporters by `L` columns, each column one replicate of one perturbation.
//! The likelihood of a network is either marginalised over unknown reporter
//! attachments (binary data) or evaluated with a known attachment map
//! (binary or pre-scored probability data).
//!
//! [`EmissionModel`] is the compiled form used inside the sampler: data rows
//! are packed into bitsets so that each reporter/attachment pair costs one
//! AND plus popcount per 64 columns.

use crate::error::{Error, Result};
use crate::graph::{off_diagonal_position, Network};
use crate::numeric::log_sum_exp;

/// Probability-mode entries are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Global false-positive (`alpha`) and false-negative (`beta`) rates.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorRates {
    pub alpha: f64,
    pub beta: f64,
}

impl ErrorRates {
    /// Rates usable for simulation: both in `[0, 1)`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(ErrorRates { alpha, beta })
    }

    fn check_open(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!(
                    "likelihood needs {name} strictly inside (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One data column: replicate `replicate` of perturbation `perturbation`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ColumnLabel {
    pub perturbation: usize,
    pub replicate: usize,
}

impl ColumnLabel {
    /// Columns for `perturbations` perturbations with `replicates` copies
    /// each, perturbation-major.
    pub fn grid(perturbations: usize, replicates: usize) -> Vec<ColumnLabel> {
        (0..perturbations)
            .flat_map(|perturbation| {
                (0..replicates).map(move |replicate| ColumnLabel {
                    perturbation,
                    replicate,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observations {
    Binary { rates: ErrorRates, rows: Vec<Vec<u8>> },
    Probability { rows: Vec<Vec<f64>> },
}

impl Observations {
    pub fn mode_name(&self) -> &'static str {
        match self {
            Observations::Binary { .. } => "binary",
            Observations::Probability { .. } => "probability",
        }
    }
}

/// Observed effects for a single timepoint.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectDataset {
    n: usize,
    targets: Vec<usize>,
    columns: Vec<ColumnLabel>,
    observations: Observations,
    attachments: Option<Vec<usize>>,
}

impl EffectDataset {
    /// Binary effects. `targets[k]` is the component hit by perturbation `k`.
    pub fn binary(
        n: usize,
        targets: Vec<usize>,
        columns: Vec<ColumnLabel>,
        rows: Vec<Vec<u8>>,
        rates: ErrorRates,
    ) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if let Some(bad) = row.iter().find(|&&v| v > 1) {
                return Err(Error::invalid(format!(
                    "binary entry {bad} in reporter row {i}; expected 0 or 1"
                )));
            }
        }
        let ds = EffectDataset {
            n,
            targets,
            columns,
            observations: Observations::Binary { rates, rows },
            attachments: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Pre-scored effect probabilities; entries are clamped away from 0 and 1.
    pub fn probability(
        n: usize,
        targets: Vec<usize>,
        columns: Vec<ColumnLabel>,
        mut rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        for (i, row) in rows.iter_mut().enumerate() {
            for p in row.iter_mut() {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::invalid(format!(
                        "probability {p} in reporter row {i} is outside [0, 1]"
                    )));
                }
                *p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            }
        }
        let ds = EffectDataset {
            n,
            targets,
            columns,
            observations: Observations::Probability { rows },
            attachments: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Square design: perturbation `k` targets component `k`, `replicates`
    /// columns each.
    pub fn square_binary(n: usize, replicates: usize, rows: Vec<Vec<u8>>, rates: ErrorRates) -> Result<Self> {
        EffectDataset::binary(n, (0..n).collect(), ColumnLabel::grid(n, replicates), rows, rates)
    }

    pub fn with_attachments(mut self, attachments: Vec<usize>) -> Result<Self> {
        if attachments.len() != self.m() {
            return Err(Error::shape(format!(
                "attachment map covers {} reporters, dataset has {}",
                attachments.len(),
                self.m()
            )));
        }
        if let Some(&bad) = attachments.iter().find(|&&j| j >= self.n) {
            return Err(Error::IndexOutOfRange { index: bad, n: self.n });
        }
        self.attachments = Some(attachments);
        Ok(self)
    }

    pub fn without_attachments(mut self) -> Self {
        self.attachments = None;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("dataset needs at least one component"));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t >= self.n) {
            return Err(Error::IndexOutOfRange { index: t, n: self.n });
        }
        if let Some(col) = self.columns.iter().find(|c| c.perturbation >= self.targets.len()) {
            return Err(Error::shape(format!(
                "column refers to perturbation {} but only {} are defined",
                col.perturbation,
                self.targets.len()
            )));
        }
        let width = self.columns.len();
        let bad_row = match &self.observations {
            Observations::Binary { rows, .. } => rows.iter().position(|r| r.len() != width),
            Observations::Probability { rows } => rows.iter().position(|r| r.len() != width),
        };
        if let Some(i) = bad_row {
            return Err(Error::shape(format!("reporter row {i} does not have {width} columns")));
        }
        Ok(())
    }

    /// Number of pathway components.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of effect reporters.
    pub fn m(&self) -> usize {
        match &self.observations {
            Observations::Binary { rows, .. } => rows.len(),
            Observations::Probability { rows } => rows.len(),
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn columns(&self) -> &[ColumnLabel] {
        &self.columns
    }

    pub fn observations(&self) -> &Observations {
        &self.observations
    }

    pub fn attachments(&self) -> Option<&[usize]> {
        self.attachments.as_deref()
    }

    pub fn binary_rows(&self) -> Option<&[Vec<u8>]> {
        match &self.observations {
            Observations::Binary { rows, .. } => Some(rows),
            Observations::Probability { .. } => None,
        }
    }

    pub fn rates(&self) -> Option<ErrorRates> {
        match &self.observations {
            Observations::Binary { rates, .. } => Some(*rates),
            Observations::Probability { .. } => None,
        }
    }

    /// Same design and attachments, different binary rows.
    pub fn with_binary_rows(&self, rows: Vec<Vec<u8>>) -> Result<Self> {
        let rates = self
            .rates()
            .ok_or_else(|| Error::ModeMismatch("dataset is not binary".into()))?;
        let mut ds = EffectDataset::binary(self.n, self.targets.clone(), self.columns.clone(), rows, rates)?;
        ds.attachments = self.attachments.clone();
        Ok(ds)
    }

    pub(crate) fn same_shape(&self, other: &EffectDataset) -> bool {
        self.n == other.n
            && self.m() == other.m()
            && self.targets == other.targets
            && self.columns == other.columns
            && self.observations.mode_name() == other.observations.mode_name()
            && self.attachments.is_some() == other.attachments.is_some()
    }
}

/// `log P(d | s)` for one cell of binary data.
pub fn local_log_prob(d: bool, s: bool, alpha: f64, beta: f64) -> Result<f64> {
    ErrorRates { alpha, beta }.check_open()?;
    let p = match (d, s) {
        (true, false) => alpha,
        (false, false) => 1.0 - alpha,
        (true, true) => 1.0 - beta,
        (false, true) => beta,
    };
    Ok(p.ln())
}

/// Emission likelihood with reporter attachments marginalised out uniformly.
pub fn marginal_log_likelihood(g: &Network, data: &EffectDataset) -> Result<f64> {
    EmissionModel::marginal(data)?.log_likelihood(g)
}

/// Emission likelihood with the dataset's known attachment map.
pub fn attached_log_likelihood(g: &Network, data: &EffectDataset) -> Result<f64> {
    EmissionModel::attached(data)?.log_likelihood(g)
}

/// The dataset's natural emission: attached when it carries an attachment
/// map, marginal otherwise.
pub fn log_emission(g: &Network, data: &EffectDataset) -> Result<f64> {
    EmissionModel::new(data)?.log_likelihood(g)
}

/// Greedy hill-climbing over single-edge flips, starting at `start`.
///
/// Each step moves to the flip neighbour with the highest emission
/// likelihood if it strictly improves; ties go to the lowest `(r, c)`.
pub fn greedy_static_nem(data: &EffectDataset, start: &Network) -> Result<Network> {
    let model = EmissionModel::new(data)?;
    model.check_network(start)?;
    greedy_climb(&model, start.clone())
}

pub(crate) fn greedy_climb(model: &EmissionModel, mut current: Network) -> Result<Network> {
    let n = current.n();
    let mut score = model.eval(&current);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for idx in 0..n * (n - 1) {
            let (r, c) = off_diagonal_position(n, idx);
            current.toggle(r, c)?;
            let s = model.eval(&current);
            current.toggle(r, c)?;
            if best.is_none_or(|(b, _, _)| s > b) {
                best = Some((s, r, c));
            }
        }
        match best {
            Some((s, r, c)) if s > score => {
                current.toggle(r, c)?;
                score = s;
            }
            _ => return Ok(current),
        }
    }
}

#[derive(Clone, Debug)]
enum Scoring {
    Binary {
        rows: Vec<Vec<u64>>,
        ones: Vec<u32>,
        ln_alpha: f64,
        ln_1m_alpha: f64,
        ln_beta: f64,
        ln_1m_beta: f64,
    },
    Probability {
        // sum_k log(1 - p_ik)
        base: Vec<f64>,
        // log(p_ik) - log(1 - p_ik)
        log_odds: Vec<Vec<f64>>,
    },
}

/// Compiled emission likelihood for one timepoint.
#[derive(Clone, Debug)]
pub struct EmissionModel {
    n: usize,
    width: usize,
    words: usize,
    targets: Vec<usize>,
    // per perturbation: mask of the columns belonging to it
    perturbation_columns: Vec<Vec<u64>>,
    scoring: Scoring,
    attachments: Option<Vec<usize>>,
}

impl EmissionModel {
    pub fn new(data: &EffectDataset) -> Result<Self> {
        match data.attachments() {
            Some(_) => EmissionModel::attached(data),
            None => EmissionModel::marginal(data),
        }
    }

    pub fn marginal(data: &EffectDataset) -> Result<Self> {
        if !matches!(data.observations, Observations::Binary { .. }) {
            return Err(Error::ModeMismatch("marginal likelihood requires binary data".into()));
        }
        let mut model = EmissionModel::compile(data)?;
        model.attachments = None;
        Ok(model)
    }

    pub fn attached(data: &EffectDataset) -> Result<Self> {
        if data.attachments.is_none() {
            return Err(Error::MissingAttachments);
        }
        EmissionModel::compile(data)
    }

    fn compile(data: &EffectDataset) -> Result<Self> {
        let width = data.columns.len();
        let words = width.div_ceil(64).max(1);
        let mut perturbation_columns = vec![vec![0u64; words]; data.targets.len()];
        for (col, label) in data.columns.iter().enumerate() {
            perturbation_columns[label.perturbation][col / 64] |= 1 << (col % 64);
        }
        let scoring = match &data.observations {
            Observations::Binary { rates, rows } => {
                rates.check_open()?;
                let packed: Vec<Vec<u64>> = rows
                    .iter()
                    .map(|row| {
                        let mut w = vec![0u64; words];
                        for (col, &v) in row.iter().enumerate() {
                            if v == 1 {
                                w[col / 64] |= 1 << (col % 64);
                            }
                        }
                        w
                    })
                    .collect();
                let ones = packed.iter().map(|w| w.iter().map(|x| x.count_ones()).sum()).collect();
                Scoring::Binary {
                    rows: packed,
                    ones,
                    ln_alpha: rates.alpha.ln(),
                    ln_1m_alpha: (1.0 - rates.alpha).ln(),
                    ln_beta: rates.beta.ln(),
                    ln_1m_beta: (1.0 - rates.beta).ln(),
                }
            }
            Observations::Probability { rows } => Scoring::Probability {
                base: rows.iter().map(|r| r.iter().map(|p| (1.0 - p).ln()).sum()).collect(),
                log_odds: rows
                    .iter()
                    .map(|r| r.iter().map(|p| p.ln() - (1.0 - p).ln()).collect())
                    .collect(),
            },
        };
        Ok(EmissionModel {
            n: data.n,
            width,
            words,
            targets: data.targets.clone(),
            perturbation_columns,
            scoring,
            attachments: data.attachments.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_marginal(&self) -> bool {
        self.attachments.is_none()
    }

    pub fn check_network(&self, g: &Network) -> Result<()> {
        if g.n() != self.n {
            return Err(Error::shape(format!(
                "network has {} components, data expects {}",
                g.n(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn log_likelihood(&self, g: &Network) -> Result<f64> {
        self.check_network(g)?;
        Ok(self.eval(g))
    }

    /// Per-component column masks: bit `col` of entry `j` is set iff
    /// component `j` is in state 1 under the perturbation of column `col`.
    fn component_columns(&self, g: &Network) -> Vec<Vec<u64>> {
        let closure = g.transitive_closure();
        let mut out = vec![vec![0u64; self.words]; self.n];
        for (k, cols) in self.perturbation_columns.iter().enumerate() {
            let target = self.target_of(k);
            let mut affected = closure.row_mask(target) | (1 << target);
            while affected != 0 {
                let j = affected.trailing_zeros() as usize;
                affected &= affected - 1;
                for (o, c) in out[j].iter_mut().zip(cols) {
                    *o |= c;
                }
            }
        }
        out
    }

    fn target_of(&self, k: usize) -> usize {
        self.targets[k]
    }

    pub(crate) fn eval(&self, g: &Network) -> f64 {
        let states = self.component_columns(g);
        match &self.scoring {
            Scoring::Binary {
                rows,
                ones,
                ln_alpha,
                ln_1m_alpha,
                ln_beta,
                ln_1m_beta,
            } => {
                let width = self.width as i64;
                let state_ones: Vec<i64> = states
                    .iter()
                    .map(|w| w.iter().map(|x| x.count_ones() as i64).sum())
                    .collect();
                let cell = |i: usize, j: usize| {
                    let n11: i64 = rows[i]
                        .iter()
                        .zip(&states[j])
                        .map(|(d, s)| (d & s).count_ones() as i64)
                        .sum();
                    let n1 = ones[i] as i64;
                    let ns = state_ones[j];
                    let n10 = n1 - n11;
                    let n01 = ns - n11;
                    let n00 = width - n1 - ns + n11;
                    n10 as f64 * ln_alpha + n00 as f64 * ln_1m_alpha + n11 as f64 * ln_1m_beta + n01 as f64 * ln_beta
                };
                match &self.attachments {
                    Some(att) => att.iter().enumerate().map(|(i, &j)| cell(i, j)).sum(),
                    None => {
                        let m = rows.len();
                        let mut buf = vec![0.0; self.n];
                        let mut total = -(m as f64) * (self.n as f64).ln();
                        for i in 0..m {
                            for (j, b) in buf.iter_mut().enumerate() {
                                *b = cell(i, j);
                            }
                            total += log_sum_exp(&buf);
                        }
                        total
                    }
                }
            }
            Scoring::Probability { base, log_odds } => {
                let att = self
                    .attachments
                    .as_ref()
                    .expect("probability scoring is only compiled with attachments");
                att.iter()
                    .enumerate()
                    .map(|(i, &j)| {
                        let mut acc = base[i];
                        for (w, &word) in states[j].iter().enumerate() {
                            let mut bits = word;
                            while bits != 0 {
                                let b = bits.trailing_zeros() as usize;
                                bits &= bits - 1;
                                acc += log_odds[i][w * 64 + b];
                            }
                        }
                        acc
                    })
                    .sum()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::all_networks;
    use proptest::prelude::*;

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;

    fn rates(a: f64, b: f64) -> ErrorRates {
        ErrorRates::new(a, b).unwrap()
    }

    /// Reporters 1-4 on B, 5-8 on D, 9-10 on C.
    fn toy_attachments() -> Vec<usize> {
        let mut att = vec![B; 4];
        att.extend([D; 4]);
        att.extend([C; 2]);
        att
    }

    fn toy_truth() -> Network {
        Network::from_edges(4, &[(A, B), (A, C), (C, D), (A, D)]).unwrap()
    }

    fn noiseless(g: &Network, att: &[usize], n: usize, replicates: usize) -> Vec<Vec<u8>> {
        let s = g.state_matrix(&(0..n).collect::<Vec<_>>()).unwrap();
        att.iter()
            .map(|&j| {
                (0..n)
                    .flat_map(|k| std::iter::repeat_n(s.get(j, k) as u8, replicates))
                    .collect()
            })
            .collect()
    }

    /// Direct probability product over every attachment assignment.
    fn brute_force_marginal(g: &Network, rows: &[Vec<u8>], n: usize, r: ErrorRates) -> f64 {
        let targets: Vec<usize> = (0..n).collect();
        let s = g.state_matrix(&targets).unwrap();
        let cols = rows[0].len();
        let reps = cols / n;
        let m = rows.len();
        let mut total = 0.0;
        for code in 0..n.pow(m as u32) {
            let mut theta = Vec::with_capacity(m);
            let mut c = code;
            for _ in 0..m {
                theta.push(c % n);
                c /= n;
            }
            let mut p = 1.0;
            for (i, row) in rows.iter().enumerate() {
                for (col, &d) in row.iter().enumerate() {
                    let st = s.get(theta[i], col / reps);
                    p *= match (d == 1, st) {
                        (true, false) => r.alpha,
                        (false, false) => 1.0 - r.alpha,
                        (true, true) => 1.0 - r.beta,
                        (false, true) => r.beta,
                    };
                }
            }
            total += p;
        }
        (total / (n as f64).powi(m as i32)).ln()
    }

    #[test]
    fn local_probabilities_follow_error_table() {
        assert!((local_log_prob(true, false, 0.1, 0.2).unwrap() - 0.1f64.ln()).abs() < 1e-15);
        assert!((local_log_prob(false, false, 0.1, 0.2).unwrap() - 0.9f64.ln()).abs() < 1e-15);
        let total: f64 = [(true, false), (false, false), (true, true), (false, true)]
            .iter()
            .map(|&(d, s)| local_log_prob(d, s, 0.1, 0.2).unwrap().exp())
            .sum();
        assert!((total - 2.0).abs() < 1e-15);
        assert!(local_log_prob(true, true, 0.0, 0.2).is_err());
        assert!(local_log_prob(true, true, 0.1, 1.0).is_err());
    }

    #[test]
    fn single_component_single_cell() {
        let ds = EffectDataset::square_binary(1, 1, vec![vec![1]], rates(0.1, 0.1)).unwrap();
        let g = Network::empty(1).unwrap();
        assert!((marginal_log_likelihood(&g, &ds).unwrap() - 0.9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_component_hand_enumeration() {
        // reporter observes d = (1, 0) under perturbations (A, B); graph A -> B
        let r = rates(0.1, 0.2);
        let ds = EffectDataset::square_binary(2, 1, vec![vec![1, 0]], r).unwrap();
        let g = Network::from_edges(2, &[(0, 1)]).unwrap();
        // attach to A: states (1, 0) -> (1-b)(1-a); attach to B: states (1, 1) -> (1-b) b
        let p1 = 0.8 * 0.9;
        let p2 = 0.8 * 0.2;
        let expected = (0.5f64 * (p1 + p2)).ln();
        assert!((marginal_log_likelihood(&g, &ds).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn toy_truth_maximises_marginal_over_closed_graphs() {
        let att = toy_attachments();
        let rows = noiseless(&toy_truth(), &att, 4, 1);
        let ds = EffectDataset::square_binary(4, 1, rows, rates(0.05, 0.05)).unwrap();
        let truth_ll = marginal_log_likelihood(&toy_truth(), &ds).unwrap();
        let best = all_networks(4)
            .unwrap()
            .into_iter()
            .filter(|g| g.is_transitively_closed())
            .map(|g| marginal_log_likelihood(&g, &ds).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(truth_ll, best);
    }

    #[test]
    fn toy_nested_pattern() {
        let rows = noiseless(&toy_truth(), &toy_attachments(), 4, 1);
        // perturbing A hits every reporter; B only 1-4; C 5-10; D 5-8
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        assert_eq!(col(A), vec![1; 10]);
        assert_eq!(col(B), vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(col(C), vec![0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
        assert_eq!(col(D), vec![0, 0, 0, 0, 1, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn probability_mode_cells() {
        let ds = EffectDataset::probability(1, vec![0], ColumnLabel::grid(1, 1), vec![vec![0.8]])
            .unwrap()
            .with_attachments(vec![0])
            .unwrap();
        let g = Network::empty(1).unwrap();
        assert!((attached_log_likelihood(&g, &ds).unwrap() - 0.8f64.ln()).abs() < 1e-15);
        assert!(matches!(marginal_log_likelihood(&g, &ds), Err(Error::ModeMismatch(_))));

        let flat = EffectDataset::probability(3, vec![0, 1, 2], ColumnLabel::grid(3, 2), vec![vec![0.5; 6]; 3])
            .unwrap()
            .with_attachments(vec![0, 1, 2])
            .unwrap();
        let values: Vec<f64> = all_networks(3)
            .unwrap()
            .iter()
            .map(|g| attached_log_likelihood(g, &flat).unwrap())
            .collect();
        assert!(values.iter().all(|v| (v - values[0]).abs() < 1e-12));
    }

    #[test]
    fn probability_entries_are_clamped() {
        let ds = EffectDataset::probability(1, vec![0], ColumnLabel::grid(1, 2), vec![vec![0.0, 1.0]])
            .unwrap()
            .with_attachments(vec![0])
            .unwrap();
        let Observations::Probability { rows } = ds.observations() else {
            unreachable!()
        };
        assert_eq!(rows[0], vec![PROB_CLAMP, 1.0 - PROB_CLAMP]);
        assert!(attached_log_likelihood(&Network::empty(1).unwrap(), &ds)
            .unwrap()
            .is_finite());
        assert!(EffectDataset::probability(1, vec![0], ColumnLabel::grid(1, 1), vec![vec![1.5]]).is_err());
    }

    #[test]
    fn attached_equals_marginal_for_one_component() {
        let ds = EffectDataset::square_binary(1, 3, vec![vec![1, 0, 1], vec![0, 0, 1]], rates(0.1, 0.3)).unwrap();
        let g = Network::empty(1).unwrap();
        let marginal = marginal_log_likelihood(&g, &ds).unwrap();
        let ds = ds.with_attachments(vec![0, 0]).unwrap();
        assert!((attached_log_likelihood(&g, &ds).unwrap() - marginal).abs() < 1e-14);
        assert!(matches!(
            attached_log_likelihood(&g, &ds.clone().without_attachments()),
            Err(Error::MissingAttachments)
        ));
    }

    #[test]
    fn attached_binary_sums_local_terms() {
        let r = rates(0.15, 0.25);
        let g = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let rows = vec![vec![1, 0, 1, 1, 0, 0], vec![0, 1, 1, 0, 1, 1]];
        let ds = EffectDataset::square_binary(3, 2, rows.clone(), r)
            .unwrap()
            .with_attachments(vec![2, 1])
            .unwrap();
        let s = g.state_matrix(&[0, 1, 2]).unwrap();
        let mut expected = 0.0;
        for (i, &j) in [2usize, 1].iter().enumerate() {
            for (col, &d) in rows[i].iter().enumerate() {
                expected += local_log_prob(d == 1, s.get(j, col / 2), r.alpha, r.beta).unwrap();
            }
        }
        assert!((attached_log_likelihood(&g, &ds).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let r = rates(0.1, 0.1);
        assert!(EffectDataset::square_binary(2, 1, vec![vec![1, 0, 1]], r).is_err());
        assert!(EffectDataset::square_binary(2, 1, vec![vec![2, 0]], r).is_err());
        let ds = EffectDataset::square_binary(2, 1, vec![vec![1, 0]], r).unwrap();
        assert!(ds.clone().with_attachments(vec![0, 1]).is_err());
        assert!(ds.clone().with_attachments(vec![2]).is_err());
        assert!(marginal_log_likelihood(&Network::empty(3).unwrap(), &ds).is_err());
    }

    #[test]
    fn greedy_from_empty_on_empty_truth() {
        let att: Vec<usize> = (0..4).flat_map(|j| [j, j]).collect();
        let empty = Network::empty(4).unwrap();
        let rows = noiseless(&empty, &att, 4, 2);
        let ds = EffectDataset::square_binary(4, 2, rows, rates(0.1, 0.1)).unwrap();
        assert_eq!(greedy_static_nem(&ds, &empty).unwrap(), empty);
    }

    #[test]
    fn greedy_reaches_exhaustive_optimum_on_toy() {
        let rows = noiseless(&toy_truth(), &toy_attachments(), 4, 1);
        let ds = EffectDataset::square_binary(4, 1, rows, rates(0.05, 0.05)).unwrap();
        let start = Network::empty(4).unwrap();
        let fitted = greedy_static_nem(&ds, &start).unwrap();
        let best = all_networks(4)
            .unwrap()
            .iter()
            .map(|g| marginal_log_likelihood(g, &ds).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let got = marginal_log_likelihood(&fitted, &ds).unwrap();
        assert!((got - best).abs() < 1e-9, "greedy {got} vs optimum {best}");
        assert_eq!(fitted.transitive_closure(), toy_truth());
    }

    fn arb_case() -> impl Strategy<Value = (usize, Vec<Vec<u8>>, Vec<u64>, f64, f64)> {
        (1usize..=3, 1usize..=5, 1usize..=2).prop_flat_map(|(n, m, reps)| {
            (
                Just(n),
                proptest::collection::vec(proptest::collection::vec(0u8..=1, n * reps), m),
                proptest::collection::vec(any::<u64>(), n),
                0.01f64..0.49,
                0.01f64..0.49,
            )
        })
    }

    proptest! {
        #[test]
        fn marginal_matches_brute_force((n, rows, masks, a, b) in arb_case()) {
            let g = Network::from_row_masks(masks).unwrap();
            let reps = rows[0].len() / n;
            let r = rates(a, b);
            let ds = EffectDataset::square_binary(n, reps, rows.clone(), r).unwrap();
            let fast = marginal_log_likelihood(&g, &ds).unwrap();
            let slow = brute_force_marginal(&g, &rows, n, r);
            prop_assert!(((fast - slow) / slow).abs() < 1e-9, "{} vs {}", fast, slow);
            prop_assert!(fast <= 0.0);
        }

        #[test]
        fn marginal_invariant_to_row_and_replicate_permutation(
            (n, rows, masks, a, b) in arb_case(),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Network::from_row_masks(masks).unwrap();
            let reps = rows[0].len() / n;
            let r = rates(a, b);
            let base = marginal_log_likelihood(&g, &EffectDataset::square_binary(n, reps, rows.clone(), r).unwrap()).unwrap();

            let mut shuffled_rows = rows.clone();
            shuffled_rows.shuffle(&mut rng);
            let by_rows = marginal_log_likelihood(&g, &EffectDataset::square_binary(n, reps, shuffled_rows, r).unwrap()).unwrap();
            prop_assert!((base - by_rows).abs() < 1e-9);

            // permute replicate columns within each perturbation block
            let mut perm: Vec<usize> = (0..reps).collect();
            perm.shuffle(&mut rng);
            let swapped: Vec<Vec<u8>> = rows
                .iter()
                .map(|row| (0..n).flat_map(|k| perm.iter().map(move |&p| row[k * reps + p])).collect())
                .collect();
            let by_cols = marginal_log_likelihood(&g, &EffectDataset::square_binary(n, reps, swapped, r).unwrap()).unwrap();
            prop_assert!((base - by_cols).abs() < 1e-9);
        }

        #[test]
        fn complement_symmetry_when_rates_equal(d in any::<bool>(), s in any::<bool>(), e in 0.01f64..0.99) {
            let p = local_log_prob(d, s, e, e).unwrap();
            let q = local_log_prob(!d, !s, e, e).unwrap();
            prop_assert!((p - q).abs() < 1e-15);
        }
    }
}
