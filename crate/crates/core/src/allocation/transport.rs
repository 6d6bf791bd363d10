//! Balanced transportation problems solved exactly by successive shortest
//! paths with node potentials.
//!
//! Users are supply nodes, subcarriers are demand nodes holding `G` unit
//! slots each. All `G` slots of a subcarrier share one cost, so the slot
//! level graph collapses to a `K x N` bipartite graph with capacity `G` on
//! every subcarrier.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One group of the per-frame subcarrier assignment problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportInstance {
    /// Cost of giving one slot of subcarrier `n` to user `k`; `None` marks a
    /// forbidden pairing.
    pub costs: Vec<Vec<Option<f64>>>,
    /// Slots owed to each user.
    pub supply: Vec<usize>,
    /// Unit slots per subcarrier (the group size `G`).
    pub slots_per_subcarrier: usize,
}

impl TransportInstance {
    pub fn users(&self) -> usize {
        self.costs.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }

    pub fn total_supply(&self) -> usize {
        self.supply.iter().sum()
    }

    pub fn total_demand(&self) -> usize {
        self.subcarriers() * self.slots_per_subcarrier
    }

    fn check_balanced(&self) -> Result<()> {
        if self.supply.len() != self.users() {
            return Err(Error::Config("one supply per user required"));
        }
        let (supply, demand) = (self.total_supply(), self.total_demand());
        if supply != demand {
            return Err(Error::Unbalanced {
                supply: supply as u64,
                demand: demand as u64,
            });
        }
        Ok(())
    }

    /// `sum_{k,n} cost[k][n] * counts[k][n]`.
    pub fn evaluate(&self, counts: &[Vec<usize>]) -> f64 {
        let mut total = 0.0;
        for (row, crow) in self.costs.iter().zip(counts) {
            for (c, &x) in row.iter().zip(crow) {
                if x > 0 {
                    total += c.unwrap_or(f64::INFINITY) * x as f64;
                }
            }
        }
        total
    }
}

/// An integral solution: `counts[k][n]` slots of subcarrier `n` go to `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub counts: Vec<Vec<usize>>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: i64,
    cost: f64,
}

/// Min-cost flow on a small dense graph with non-negative arc costs.
#[derive(Debug, Clone)]
struct MinCostFlow {
    graph: Vec<Vec<Edge>>,
}

impl MinCostFlow {
    fn new(nodes: usize) -> Self {
        Self {
            graph: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> (usize, usize) {
        let i = self.graph[from].len();
        let j = self.graph[to].len() + usize::from(from == to);
        self.graph[from].push(Edge {
            to,
            rev: j,
            cap,
            cost,
        });
        self.graph[to].push(Edge {
            to: from,
            rev: i,
            cap: 0,
            cost: -cost,
        });
        (from, i)
    }

    /// Pushes up to `need` units from `s` to `t`; returns the flow sent.
    fn run(&mut self, s: usize, t: usize, need: i64) -> i64 {
        let n = self.graph.len();
        let mut potential = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut flow = 0;
        while flow < need {
            dist.fill(f64::INFINITY);
            done.fill(false);
            prev.fill(None);
            dist[s] = 0.0;
            // Dense Dijkstra: lowest index wins ties, which keeps the
            // augmentation order deterministic.
            loop {
                let mut u = usize::MAX;
                let mut best = f64::INFINITY;
                for v in 0..n {
                    if !done[v] && dist[v] < best {
                        best = dist[v];
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                if u == t {
                    break;
                }
                for (ei, e) in self.graph[u].iter().enumerate() {
                    if e.cap <= 0 || done[e.to] {
                        continue;
                    }
                    let reduced = (e.cost + potential[u] - potential[e.to]).max(0.0);
                    let nd = dist[u] + reduced;
                    if nd < dist[e.to] {
                        dist[e.to] = nd;
                        prev[e.to] = Some((u, ei));
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            // Nodes not settled before `t` move by `dist[t]`, which keeps
            // every residual reduced cost non-negative.
            let cap = dist[t];
            for v in 0..n {
                potential[v] += dist[v].min(cap);
            }
            let mut push = need - flow;
            let mut v = t;
            while let Some((u, ei)) = prev[v] {
                push = push.min(self.graph[u][ei].cap);
                v = u;
            }
            let mut v = t;
            while let Some((u, ei)) = prev[v] {
                let rev = self.graph[u][ei].rev;
                self.graph[u][ei].cap -= push;
                self.graph[v][rev].cap += push;
                v = u;
            }
            flow += push;
        }
        flow
    }
}

/// Exact minimum-cost integral solution of a balanced instance.
pub fn solve_transport(instance: &TransportInstance) -> Result<TransportSolution> {
    instance.check_balanced()?;
    let k_count = instance.users();
    let n_count = instance.subcarriers();
    let g = instance.slots_per_subcarrier as i64;
    let source = 0;
    let sink = 1 + k_count + n_count;
    let mut mcf = MinCostFlow::new(sink + 1);
    for (k, &s) in instance.supply.iter().enumerate() {
        if s > 0 {
            mcf.add_edge(source, 1 + k, s as i64, 0.0);
        }
    }
    let mut arcs = vec![vec![None; n_count]; k_count];
    for (k, row) in arcs.iter_mut().enumerate() {
        if instance.supply[k] == 0 {
            continue;
        }
        for (n, arc) in row.iter_mut().enumerate() {
            if let Some(c) = instance.costs[k][n] {
                *arc = Some(mcf.add_edge(1 + k, 1 + k_count + n, g, c));
            }
        }
    }
    for n in 0..n_count {
        mcf.add_edge(1 + k_count + n, sink, g, 0.0);
    }
    let need = instance.total_demand() as i64;
    if mcf.run(source, sink, need) < need {
        return Err(Error::Infeasible);
    }
    let mut counts = vec![vec![0usize; n_count]; k_count];
    for k in 0..k_count {
        for n in 0..n_count {
            if let Some((u, i)) = arcs[k][n] {
                counts[k][n] = (g - mcf.graph[u][i].cap) as usize;
            }
        }
    }
    let objective = instance.evaluate(&counts);
    Ok(TransportSolution { counts, objective })
}

/// Upper limit on the number of assignments [`brute_force_ilp`] will visit.
pub const BRUTE_FORCE_LIMIT: u128 = 5_000_000;

/// Number of quota-respecting slot assignments (a multinomial coefficient).
pub fn assignment_count(instance: &TransportInstance) -> u128 {
    let mut remaining = instance.total_supply() as u128;
    let mut total: u128 = 1;
    for &s in &instance.supply {
        // C(remaining, s)
        let mut c: u128 = 1;
        for i in 0..s as u128 {
            c = c * (remaining - i) / (i + 1);
            if c > BRUTE_FORCE_LIMIT * 1000 {
                return u128::MAX;
            }
        }
        total = total.saturating_mul(c);
        remaining -= s as u128;
    }
    total
}

/// Exhaustive search over every slot-level 0/1 assignment that respects the
/// quotas. Oracle for checking [`solve_transport`].
pub fn brute_force_ilp(instance: &TransportInstance) -> Result<TransportSolution> {
    instance.check_balanced()?;
    let count = assignment_count(instance);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let n_count = instance.subcarriers();
    let slots: Vec<usize> = (0..n_count)
        .flat_map(|n| core::iter::repeat_n(n, instance.slots_per_subcarrier))
        .collect();

    struct Search<'a> {
        inst: &'a TransportInstance,
        slots: &'a [usize],
        left: Vec<usize>,
        owner: Vec<usize>,
        best: f64,
        best_owner: Option<Vec<usize>>,
    }

    impl Search<'_> {
        fn go(&mut self, depth: usize, cost: f64) {
            if cost >= self.best {
                return;
            }
            if depth == self.slots.len() {
                self.best = cost;
                self.best_owner = Some(self.owner.clone());
                return;
            }
            let n = self.slots[depth];
            for k in 0..self.left.len() {
                if self.left[k] == 0 {
                    continue;
                }
                let Some(c) = self.inst.costs[k][n] else {
                    continue;
                };
                self.left[k] -= 1;
                self.owner[depth] = k;
                self.go(depth + 1, cost + c);
                self.left[k] += 1;
            }
        }
    }

    let mut search = Search {
        inst: instance,
        slots: &slots,
        left: instance.supply.clone(),
        owner: vec![0; slots.len()],
        best: f64::INFINITY,
        best_owner: None,
    };
    search.go(0, 0.0);
    let owner = search.best_owner.ok_or(Error::Infeasible)?;
    let mut counts = vec![vec![0usize; n_count]; instance.users()];
    for (slot, &k) in owner.iter().enumerate() {
        counts[k][slots[slot]] += 1;
    }
    let objective = instance.evaluate(&counts);
    Ok(TransportSolution { counts, objective })
}
