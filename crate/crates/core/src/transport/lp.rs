//! Exact discrete maximal correlation by min-cost flow.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::Serialize;

use crate::measure::DiscreteMeasure;
use crate::numeric::dot;
use crate::{Error, Result};

/// Largest number of plan variables (`rows * cols`) accepted by the exact solver.
pub const LP_VARIABLE_LIMIT: usize = 10_000;

const CAPACITY_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Nonzero entries `(i, j, mass)`, sorted by `(i, j)`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for &(i, _, m) in &self.entries {
            s[i] += m;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for &(_, j, m) in &self.entries {
            s[j] += m;
        }
        s
    }

    pub fn correlation(&self, rho: &DiscreteMeasure, mu: &DiscreteMeasure) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, m)| m * dot(rho.atom(i), mu.atom(j)))
            .sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "mass"])?;
        for &(i, j, m) in &self.entries {
            w.write_record([i.to_string(), j.to_string(), format!("{m:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
        self.adj[to].push(id + 1);
        id
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Maximize `sum gamma_ij x_i . y_j` over couplings of `rho` and `mu`.
///
/// Successive shortest paths with Dijkstra and node potentials on the
/// bipartite network; costs are shifted to be nonnegative.
pub fn lp_max_correlation(rho: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<(TransportPlan, f64)> {
    if rho.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: mu.dim(),
        });
    }
    let (a, b) = (rho.len(), mu.len());
    let size = a * b;
    if size > LP_VARIABLE_LIMIT {
        return Err(Error::SizeExceeded {
            size,
            limit: LP_VARIABLE_LIMIT,
        });
    }
    let mut gain = vec![0.0; size];
    for i in 0..a {
        for j in 0..b {
            gain[i * b + j] = dot(rho.atom(i), mu.atom(j));
        }
    }
    let top = gain.iter().fold(f64::NEG_INFINITY, |m, &g| m.max(g));

    let (source, sink) = (a + b, a + b + 1);
    let mut net = Network::new(a + b + 2);
    for i in 0..a {
        net.add(source, i, rho.weight(i), 0.0);
    }
    let mut pair_edge = vec![0; size];
    for i in 0..a {
        for j in 0..b {
            pair_edge[i * b + j] = net.add(i, a + j, f64::INFINITY, top - gain[i * b + j]);
        }
    }
    for j in 0..b {
        net.add(a + j, sink, mu.weight(j), 0.0);
    }

    let nodes = a + b + 2;
    let mut potential = vec![0.0; nodes];
    let mut dist = vec![f64::INFINITY; nodes];
    let mut via = vec![usize::MAX; nodes];
    loop {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        via.iter_mut().for_each(|v| *v = usize::MAX);
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &net.adj[u] {
                let edge = &net.edges[e];
                if edge.cap <= CAPACITY_EPS {
                    continue;
                }
                let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[edge.to] {
                    dist[edge.to] = nd;
                    via[edge.to] = e;
                    heap.push(Entry(nd, edge.to));
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let reach = dist.iter().filter(|d| d.is_finite()).fold(0.0f64, |m, &d| m.max(d));
        for (p, d) in potential.iter_mut().zip(&dist) {
            *p += if d.is_finite() { *d } else { reach };
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let e = via[v];
            push = push.min(net.edges[e].cap);
            v = net.edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let e = via[v];
            net.edges[e].cap -= push;
            net.edges[e ^ 1].cap += push;
            v = net.edges[e ^ 1].to;
        }
    }

    let mut entries = Vec::new();
    for i in 0..a {
        for j in 0..b {
            let flow = net.edges[pair_edge[i * b + j] ^ 1].cap;
            if flow > CAPACITY_EPS {
                entries.push((i, j, flow));
            }
        }
    }
    let plan = TransportPlan {
        rows: a,
        cols: b,
        entries,
    };
    let t = plan.correlation(rho, mu);
    Ok((plan, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(1, points.iter().map(|&p| vec![p]).collect(), weights.to_vec()).unwrap()
    }

    #[test]
    fn orthogonal_supports_give_zero() {
        let rho = DiscreteMeasure::uniform(2, vec![vec![0.0, -1.0], vec![0.0, 1.0]]).unwrap();
        let mu = DiscreteMeasure::uniform(2, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let (_, t) = lp_max_correlation(&rho, &mu).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn comonotone_matching_wins() {
        let (plan, t) = lp_max_correlation(&m1(&[-2.0, 2.0], &[0.5, 0.5]), &m1(&[-1.0, 1.0], &[0.5, 0.5])).unwrap();
        assert_eq!(t, 2.0);
        assert_eq!(plan.entries, vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn marginals_are_exact_for_uneven_weights() {
        let rho = m1(&[0.3, -1.2, 2.0, 0.7], &[0.1, 0.2, 0.3, 0.4]);
        let mu = m1(&[1.0, -0.5, 0.2], &[0.55, 0.25, 0.2]);
        let (plan, t) = lp_max_correlation(&rho, &mu).unwrap();
        for (s, w) in plan.row_sums().iter().zip(rho.weights()) {
            assert!((s - w).abs() < 1e-12);
        }
        for (s, w) in plan.col_sums().iter().zip(mu.weights()) {
            assert!((s - w).abs() < 1e-12);
        }
        // co-monotone coupling by hand: sorted rho -1.2(.2) .3(.1) .7(.4) 2(.3);
        // sorted mu -.5(.25) .2(.2) 1(.55)
        let hand = 0.2 * 0.6 + 0.05 * (-0.15) + 0.05 * 0.06 + 0.15 * 0.14 + 0.25 * 0.7 + 0.3 * 2.0;
        assert!((t - hand).abs() < 1e-12, "{t} vs {hand}");
    }

    #[test]
    fn size_guard() {
        let many: Vec<Vec<f64>> = (0..101).map(|i| vec![i as f64]).collect();
        let rho = DiscreteMeasure::uniform(1, many.clone()).unwrap();
        assert!(matches!(
            lp_max_correlation(&rho, &rho),
            Err(Error::SizeExceeded { size: 10201, .. })
        ));
    }

    #[test]
    fn plan_csv_has_triples() {
        let (plan, _) = lp_max_correlation(&m1(&[-2.0, 2.0], &[0.5, 0.5]), &m1(&[-1.0, 1.0], &[0.5, 0.5])).unwrap();
        let mut out = Vec::new();
        plan.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "i,j,mass\n0,0,0.5\n1,1,0.5\n");
    }
}
