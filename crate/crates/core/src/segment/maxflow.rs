//! Dinic max-flow over a residual arc list.

use std::collections::VecDeque;

/// Directed network with nonnegative capacities. Arcs are stored in
/// forward/reverse pairs at indices `2i` and `2i + 1`.
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    n: usize,
    source: usize,
    sink: usize,
    head: Vec<usize>,
    cap: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(n: usize, source: usize, sink: usize) -> Self {
        assert!(source < n && sink < n && source != sink, "terminals must be distinct nodes");
        FlowNetwork {
            n,
            source,
            sink,
            head: Vec::new(),
            cap: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    pub fn with_capacity(n: usize, source: usize, sink: usize, arcs: usize) -> Self {
        let mut net = Self::new(n, source, sink);
        net.head.reserve(arcs * 2);
        net.cap.reserve(arcs * 2);
        net
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Adds u→v with capacity `cap`.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: f64) {
        self.add_pair(u, v, cap, 0.0);
    }

    /// Adds u→v and v→u sharing one residual pair.
    pub fn add_pair(&mut self, u: usize, v: usize, cap_uv: f64, cap_vu: f64) {
        debug_assert!(cap_uv >= 0.0 && cap_vu >= 0.0, "capacities must be nonnegative");
        let id = self.head.len();
        self.head.push(v);
        self.cap.push(cap_uv);
        self.head.push(u);
        self.cap.push(cap_vu);
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
    }

    /// (tail, head, capacity) of every stored arc with positive capacity.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.head.len())
            .filter(move |&a| self.cap[a] > 0.0)
            .map(move |a| (self.head[a ^ 1], self.head[a], self.cap[a]))
    }

    /// Sum of capacities on arcs leaving `side` (true = source side).
    pub fn cut_value(&self, side: &[bool]) -> f64 {
        self.arcs()
            .filter(|&(u, v, _)| side[u] && !side[v])
            .map(|(_, _, c)| c)
            .sum()
    }
}

/// Maximum flow value and the source side of a minimum cut (nodes reachable
/// from the source in the final residual graph).
pub fn max_flow(net: &FlowNetwork) -> (f64, Vec<bool>) {
    let mut residual = net.cap.clone();
    let n = net.n;
    let (s, t) = (net.source, net.sink);
    let mut level = vec![usize::MAX; n];
    let mut next = vec![0usize; n];
    let mut total = 0.0;
    let mut queue = VecDeque::with_capacity(n);
    let mut path: Vec<usize> = Vec::new();

    loop {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        level[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &a in &net.adj[u] {
                let v = net.head[a];
                if residual[a] > 0.0 && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if level[t] == usize::MAX {
            break;
        }
        next.iter_mut().for_each(|p| *p = 0);

        // blocking flow by iterative DFS over the level graph
        path.clear();
        let mut u = s;
        loop {
            if u == t {
                let bottleneck = path.iter().map(|&a| residual[a]).fold(f64::INFINITY, f64::min);
                let mut cut_at = path.len();
                for (i, &a) in path.iter().enumerate() {
                    residual[a] -= bottleneck;
                    residual[a ^ 1] += bottleneck;
                    if residual[a] <= 0.0 && cut_at == path.len() {
                        residual[a] = 0.0;
                        cut_at = i;
                    }
                }
                total += bottleneck;
                path.truncate(cut_at);
                u = path.last().map_or(s, |&a| net.head[a]);
                continue;
            }
            let mut advanced = false;
            while next[u] < net.adj[u].len() {
                let a = net.adj[u][next[u]];
                let v = net.head[a];
                if residual[a] > 0.0 && level[v] == level[u] + 1 {
                    path.push(a);
                    u = v;
                    advanced = true;
                    break;
                }
                next[u] += 1;
            }
            if advanced {
                continue;
            }
            // dead end: retreat
            level[u] = usize::MAX;
            match path.pop() {
                Some(a) => {
                    u = net.head[a ^ 1];
                    next[u] += 1;
                }
                None => break,
            }
        }
    }

    let mut side = vec![false; n];
    side[s] = true;
    queue.clear();
    queue.push_back(s);
    while let Some(u) = queue.pop_front() {
        for &a in &net.adj[u] {
            let v = net.head[a];
            if residual[a] > 0.0 && !side[v] {
                side[v] = true;
                queue.push_back(v);
            }
        }
    }
    (total, side)
}
