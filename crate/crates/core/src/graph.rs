//! Directed networks over a fixed set of pathway components.
//!
//! A [`Network`] stores one 64-bit row mask per component, so the component
//! count is limited to [`MAX_COMPONENTS`]. Self-loops cannot be represented:
//! every constructor and mutator masks the diagonal. Distances are popcounts
//! of XOR-ed rows and transitive closure is a bit-parallel Warshall pass.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported number of pathway components.
pub const MAX_COMPONENTS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Network {
    n: usize,
    rows: Vec<u64>,
}

/// L1 distance between two adjacency matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GraphDistance(pub u32);

impl GraphDistance {
    pub fn value(self) -> u32 {
        self.0
    }
}

impl Network {
    /// The graph on `n` components with no edges.
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_COMPONENTS {
            return Err(Error::invalid(format!(
                "component count must be in 1..={MAX_COMPONENTS}, got {n}"
            )));
        }
        Ok(Network { n, rows: vec![0; n] })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Network::empty(n)?;
        for &(r, c) in edges {
            g.check_pair(r, c)?;
            g.rows[r] |= 1 << c;
        }
        Ok(g)
    }

    /// Builds a network from a square 0/1 matrix. Diagonal entries must be 0.
    pub fn from_matrix(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut g = Network::empty(n)?;
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::shape(format!(
                    "adjacency row {r} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 if r == c => return Err(Error::SelfLoop(r)),
                    1 => g.rows[r] |= 1 << c,
                    other => {
                        return Err(Error::invalid(format!(
                            "adjacency entry ({r},{c}) must be 0 or 1, got {other}"
                        )))
                    }
                }
            }
        }
        Ok(g)
    }

    /// Builds a network from raw row masks; bits outside `0..n` and the
    /// diagonal are cleared.
    pub fn from_row_masks(rows: Vec<u64>) -> Result<Self> {
        let mut g = Network::empty(rows.len())?;
        let full = g.full_mask();
        for (r, mask) in rows.into_iter().enumerate() {
            g.rows[r] = mask & full & !(1 << r);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of representable directed edges, `n(n-1)`.
    pub fn possible_edges(&self) -> usize {
        self.n * (self.n - 1)
    }

    pub fn row_mask(&self, r: usize) -> u64 {
        self.rows[r]
    }

    pub fn has_edge(&self, r: usize, c: usize) -> bool {
        r < self.n && c < self.n && (self.rows[r] >> c) & 1 == 1
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |r| (0..self.n).filter_map(move |c| self.has_edge(r, c).then_some((r, c))))
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.has_edge(r, c) as u8).collect())
            .collect()
    }

    /// Sets or clears the edge `r -> c`.
    pub fn set_edge(&mut self, r: usize, c: usize, present: bool) -> Result<()> {
        self.check_pair(r, c)?;
        if present {
            self.rows[r] |= 1 << c;
        } else {
            self.rows[r] &= !(1 << c);
        }
        Ok(())
    }

    /// Toggles `r -> c` in place.
    pub fn toggle(&mut self, r: usize, c: usize) -> Result<()> {
        self.check_pair(r, c)?;
        self.rows[r] ^= 1 << c;
        Ok(())
    }

    /// Returns a copy with the edge `r -> c` toggled.
    pub fn flip_edge(&self, r: usize, c: usize) -> Result<Network> {
        let mut g = self.clone();
        g.toggle(r, c)?;
        Ok(g)
    }

    /// Smallest supergraph containing `r -> c` whenever `c` is reachable
    /// from `r`. Cycles never produce self-loops.
    pub fn transitive_closure(&self) -> Network {
        let mut rows = self.rows.clone();
        for k in 0..self.n {
            let via = rows[k];
            for row in rows.iter_mut() {
                if (*row >> k) & 1 == 1 {
                    *row |= via;
                }
            }
        }
        for (r, row) in rows.iter_mut().enumerate() {
            *row &= !(1 << r);
        }
        Network { n: self.n, rows }
    }

    pub fn is_transitively_closed(&self) -> bool {
        self.transitive_closure() == *self
    }

    /// Components reachable from `source` by a directed path of length ≥ 1,
    /// excluding `source` itself.
    pub fn reachable_from(&self, source: usize) -> u64 {
        let mut seen = 0u64;
        let mut frontier = self.rows[source];
        while frontier & !seen != 0 {
            let fresh = frontier & !seen;
            seen |= fresh;
            frontier = 0;
            let mut bits = fresh;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                frontier |= self.rows[j];
            }
        }
        seen & !(1 << source)
    }

    /// Perturbation states: component `j` is in state 1 under perturbation
    /// `k` iff `j` is the target of `k` or reachable from it.
    pub fn state_matrix(&self, targets: &[usize]) -> Result<StateMatrix> {
        let closure = self.transitive_closure();
        let mut affected = Vec::with_capacity(targets.len());
        for &t in targets {
            if t >= self.n {
                return Err(Error::IndexOutOfRange { index: t, n: self.n });
            }
            affected.push(closure.rows[t] | (1 << t));
        }
        Ok(StateMatrix { n: self.n, affected })
    }

    /// Number of differing adjacency entries.
    pub fn distance(&self, other: &Network) -> Result<GraphDistance> {
        if self.n != other.n {
            return Err(Error::shape(format!(
                "cannot compare networks of {} and {} components",
                self.n, other.n
            )));
        }
        Ok(GraphDistance(self.distance_unchecked(other)))
    }

    pub(crate) fn distance_unchecked(&self, other: &Network) -> u32 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    fn full_mask(&self) -> u64 {
        if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }

    fn check_pair(&self, r: usize, c: usize) -> Result<()> {
        for idx in [r, c] {
            if idx >= self.n {
                return Err(Error::IndexOutOfRange { index: idx, n: self.n });
            }
        }
        if r == c {
            return Err(Error::SelfLoop(r));
        }
        Ok(())
    }
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<_> = self.edges().collect();
        f.debug_struct("Network")
            .field("n", &self.n)
            .field("edges", &edges)
            .finish()
    }
}

/// Maps a linear index in `0..n(n-1)` to an off-diagonal position.
pub fn off_diagonal_position(n: usize, index: usize) -> (usize, usize) {
    debug_assert!(index < n * (n - 1));
    let r = index / (n - 1);
    let c = index % (n - 1);
    (r, if c >= r { c + 1 } else { c })
}

/// Free function form of [`Network::distance`].
pub fn graph_distance(u: &Network, v: &Network) -> Result<GraphDistance> {
    u.distance(v)
}

/// Every network on `n` components, in order of the bit pattern over
/// off-diagonal positions. Only sensible for `n <= 4`.
pub fn all_networks(n: usize) -> Result<Vec<Network>> {
    if !(1..=4).contains(&n) {
        return Err(Error::invalid(format!(
            "exhaustive enumeration is limited to 1..=4 components, got {n}"
        )));
    }
    let ne = n * (n - 1);
    let base = Network::empty(n)?;
    Ok((0u32..(1 << ne))
        .map(|pattern| {
            let mut g = base.clone();
            for idx in 0..ne {
                if (pattern >> idx) & 1 == 1 {
                    let (r, c) = off_diagonal_position(n, idx);
                    g.rows[r] |= 1 << c;
                }
            }
            g
        })
        .collect())
}

/// Component-by-perturbation state matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateMatrix {
    n: usize,
    // affected[k]: mask of components in state 1 under perturbation k
    affected: Vec<u64>,
}

impl StateMatrix {
    pub fn components(&self) -> usize {
        self.n
    }

    pub fn perturbations(&self) -> usize {
        self.affected.len()
    }

    pub fn get(&self, component: usize, perturbation: usize) -> bool {
        (self.affected[perturbation] >> component) & 1 == 1
    }

    /// Mask of components in state 1 under `perturbation`.
    pub fn affected(&self, perturbation: usize) -> u64 {
        self.affected[perturbation]
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|j| (0..self.affected.len()).map(|k| self.get(j, k) as u8).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{HashSet, VecDeque};

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;

    fn toy() -> Network {
        Network::from_edges(4, &[(A, B), (A, C), (C, D)]).unwrap()
    }

    fn naive_closure(g: &Network) -> Network {
        let n = g.n();
        let mut m = g.to_matrix();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if m[i][k] == 1 && m[k][j] == 1 {
                        m[i][j] = 1;
                    }
                }
            }
        }
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 0;
        }
        Network::from_matrix(&m).unwrap()
    }

    fn bfs_reach(g: &Network, s: usize) -> Vec<bool> {
        let mut seen = vec![false; g.n()];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for (v, seen_v) in seen.iter_mut().enumerate() {
                if g.has_edge(u, v) && !*seen_v {
                    *seen_v = true;
                    q.push_back(v);
                }
            }
        }
        seen
    }

    fn arb_network(n: usize) -> impl Strategy<Value = Network> {
        proptest::collection::vec(any::<u64>(), n).prop_map(|rows| Network::from_row_masks(rows).unwrap())
    }

    #[test]
    fn closure_adds_transitive_edge_of_toy() {
        let closed = toy().transitive_closure();
        assert!(closed.has_edge(A, D));
        assert_eq!(closed.edge_count(), 4);
        assert!(closed.is_transitively_closed());
        assert!(!toy().is_transitively_closed());
    }

    #[test]
    fn closure_of_empty_and_two_cycle() {
        let e = Network::empty(5).unwrap();
        assert_eq!(e.transitive_closure(), e);
        let cyc = Network::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(cyc.transitive_closure(), cyc);
        assert_eq!(cyc.transitive_closure(), naive_closure(&cyc));
    }

    #[test]
    fn chain_without_shortcut_is_not_closed() {
        let g = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(!g.is_transitively_closed());
    }

    #[test]
    fn closure_exhaustive_small() {
        for n in 1..=3 {
            for g in all_networks(n).unwrap() {
                let c = g.transitive_closure();
                assert_eq!(c, naive_closure(&g));
                assert_eq!(c.transitive_closure(), c);
                assert!(g.edges().all(|(r, cc)| c.has_edge(r, cc)));
                assert_eq!(g.is_transitively_closed(), c == g);
            }
        }
    }

    #[test]
    fn toy_state_matrix_propagates_from_a() {
        let s = toy().transitive_closure().state_matrix(&[A, B, C, D]).unwrap();
        for j in 0..4 {
            assert!(s.get(j, A));
        }
        assert_eq!(s.to_matrix()[D], vec![1, 0, 1, 1]);
        // non-closed graph gives the same states
        assert_eq!(toy().state_matrix(&[A, B, C, D]).unwrap(), s);
    }

    #[test]
    fn empty_graph_states_are_identity() {
        let s = Network::empty(4).unwrap().state_matrix(&[0, 1, 2, 3]).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                assert_eq!(s.get(j, k), j == k);
            }
        }
    }

    #[test]
    fn state_matrix_rejects_bad_target() {
        let err = toy().state_matrix(&[0, 4]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 4, n: 4 }));
    }

    #[test]
    fn distance_examples() {
        let u = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(u.distance(&u).unwrap(), GraphDistance(0));
        assert_eq!(u.distance(&u.flip_edge(2, 0).unwrap()).unwrap().value(), 1);
        let v = Network::from_edges(3, &[(0, 2), (2, 0), (2, 1)]).unwrap();
        let naive: u32 = (0..3)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .filter(|&(r, c)| u.has_edge(r, c) != v.has_edge(r, c))
            .count() as u32;
        assert_eq!(naive, 5);
        assert_eq!(graph_distance(&u, &v).unwrap().value(), naive);
        let w = Network::from_edges(3, &[(0, 1), (0, 2), (2, 0), (2, 1)]).unwrap();
        assert_eq!(u.distance(&w).unwrap().value(), 4);
        assert!(u.distance(&Network::empty(4).unwrap()).is_err());
    }

    #[test]
    fn flip_edge_contract() {
        let g = Network::empty(3).unwrap();
        let h = g.flip_edge(0, 2).unwrap();
        assert!(h.has_edge(0, 2));
        assert_eq!(h.flip_edge(0, 2).unwrap(), g);
        assert!(matches!(g.flip_edge(1, 1), Err(Error::SelfLoop(1))));
        let neighbours: HashSet<Network> = (0..6)
            .map(|i| {
                let (r, c) = off_diagonal_position(3, i);
                g.flip_edge(r, c).unwrap()
            })
            .collect();
        assert_eq!(neighbours.len(), 6);
        assert!(neighbours.iter().all(|x| x.distance(&g).unwrap().value() == 1));
    }

    #[test]
    fn from_matrix_rejects_self_loops() {
        assert!(matches!(
            Network::from_matrix(&[vec![1, 0], vec![0, 0]]),
            Err(Error::SelfLoop(0))
        ));
        assert!(Network::from_row_masks(vec![u64::MAX; 3]).unwrap().possible_edges() == 6);
        assert_eq!(Network::from_row_masks(vec![u64::MAX; 3]).unwrap().edge_count(), 6);
    }

    proptest! {
        #[test]
        fn closure_idempotent_and_monotone(g in (4usize..=5).prop_flat_map(arb_network)) {
            let c = g.transitive_closure();
            prop_assert_eq!(c.transitive_closure(), c.clone());
            prop_assert!(g.edges().all(|(r, cc)| c.has_edge(r, cc)));
            prop_assert_eq!(c, naive_closure(&g));
        }

        #[test]
        fn closed_check_matches_oracle(g in arb_network(6)) {
            prop_assert_eq!(g.is_transitively_closed(), g.transitive_closure() == g);
        }

        #[test]
        fn states_match_bfs_and_are_closure_invariant(g in arb_network(6)) {
            let targets: Vec<usize> = (0..6).collect();
            let s = g.state_matrix(&targets).unwrap();
            for k in 0..6 {
                let reach = bfs_reach(&g, k);
                for (j, &r) in reach.iter().enumerate() {
                    prop_assert_eq!(s.get(j, k), r);
                }
            }
            prop_assert_eq!(g.transitive_closure().state_matrix(&targets).unwrap(), s);
        }

        #[test]
        fn distance_is_a_metric(u in arb_network(5), v in arb_network(5), w in arb_network(5)) {
            let d = |a: &Network, b: &Network| a.distance(b).unwrap().value();
            prop_assert_eq!(d(&u, &v), d(&v, &u));
            prop_assert_eq!(d(&u, &v) == 0, u == v);
            prop_assert!(d(&u, &w) <= d(&u, &v) + d(&v, &w));
            prop_assert!(d(&u, &v) <= 20);
        }

        #[test]
        fn flip_moves_distance_one(g in arb_network(5), idx in 0usize..20) {
            let (r, c) = off_diagonal_position(5, idx);
            prop_assert_eq!(g.distance(&g.flip_edge(r, c).unwrap()).unwrap().value(), 1);
        }
    }
}
