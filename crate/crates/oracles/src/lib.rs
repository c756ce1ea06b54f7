//! Deliberately naive reference implementations.
//!
//! Nothing here shares code with `evplan-core`; inputs are plain numbers so the
//! oracles cannot inherit a bug from the code they check.

/// Betweenness by enumerating every simple path between every unordered pair.
///
/// Paths within `1e-9` (relative) of the pair's shortest length count as
/// shortest. Values are normalized by `(n−1)(n−2)/2`.
pub fn betweenness_by_enumeration(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let paths = shortest_simple_paths(&adj, s, t);
            if paths.is_empty() {
                continue;
            }
            let total = paths.len() as f64;
            for path in &paths {
                for &v in &path[1..path.len() - 1] {
                    score[v] += 1.0 / total;
                }
            }
        }
    }
    if n <= 2 {
        return vec![0.0; n];
    }
    let pairs = ((n - 1) * (n - 2)) as f64 / 2.0;
    score.into_iter().map(|x| x / pairs).collect()
}

fn shortest_simple_paths(adj: &[Vec<(usize, f64)>], s: usize, t: usize) -> Vec<Vec<usize>> {
    struct Dfs<'a> {
        adj: &'a [Vec<(usize, f64)>],
        t: usize,
        on_path: Vec<bool>,
        path: Vec<usize>,
        best: f64,
        found: Vec<(f64, Vec<usize>)>,
    }
    impl Dfs<'_> {
        fn close(&self, a: f64, b: f64) -> bool {
            (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
        }
        fn go(&mut self, v: usize, len: f64) {
            if len > self.best && !self.close(len, self.best) {
                return;
            }
            if v == self.t {
                if len < self.best {
                    self.best = len;
                }
                self.found.push((len, self.path.clone()));
                return;
            }
            for i in 0..self.adj[v].len() {
                let (w, c) = self.adj[v][i];
                if self.on_path[w] {
                    continue;
                }
                self.on_path[w] = true;
                self.path.push(w);
                self.go(w, len + c);
                self.path.pop();
                self.on_path[w] = false;
            }
        }
    }
    let mut dfs = Dfs {
        adj,
        t,
        on_path: vec![false; adj.len()],
        path: vec![s],
        best: f64::INFINITY,
        found: Vec::new(),
    };
    dfs.on_path[s] = true;
    dfs.go(s, 0.0);
    let best = dfs.best;
    dfs.found
        .into_iter()
        .filter(|(len, _)| (len - best).abs() <= 1e-9 * len.abs().max(best.abs()).max(1.0))
        .map(|(_, p)| p)
        .collect()
}

/// Largest connected component size among nodes not removed, via union-find.
pub fn largest_component_union_find(n: usize, edges: &[(usize, usize)], removed: &[bool]) -> usize {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        if removed[a] || removed[b] {
            continue;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut size = vec![0; n];
    for v in (0..n).filter(|&v| !removed[v]) {
        let r = find(&mut parent, v);
        size[r] += 1;
    }
    size.into_iter().max().unwrap_or(0)
}

/// Single-source shortest distances by Bellman-Ford on a directed arc list.
pub fn bellman_ford(n: usize, arcs: &[(usize, usize, f64)], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for &(a, b, w) in arcs {
            if dist[a] + w < dist[b] {
                dist[b] = dist[a] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// One battery and charger, described without any closed-form shortcut.
#[derive(Debug, Clone, Copy)]
pub struct ChargeSetup {
    pub capacity_kwh: f64,
    pub power_kw: f64,
    pub tau_min: f64,
    pub soc_cv: f64,
}

impl ChargeSetup {
    /// kWh per minute delivered when the battery already holds `soc`.
    ///
    /// Full power below `soc_cv`; above it, power falls in proportion to the
    /// energy already delivered in the taper: `dE/dt = P/60 − (E − E_cv)/τ`.
    pub fn rate(&self, soc: f64) -> f64 {
        let full = self.power_kw / 60.0;
        if soc < self.soc_cv {
            full
        } else {
            full - (soc - self.soc_cv) * self.capacity_kwh / self.tau_min
        }
    }
}

fn rk4_step(setup: &ChargeSetup, soc: f64, h: f64, phase_cap: f64) -> f64 {
    let f = |s: f64| setup.rate(s.min(phase_cap)) / setup.capacity_kwh;
    let k1 = f(soc);
    let k2 = f(soc + h / 2.0 * k1);
    let k3 = f(soc + h / 2.0 * k2);
    let k4 = f(soc + h * k3);
    soc + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Minutes for SOC to climb from `from` to `to` in one phase, by RK4 time
/// stepping with a bisected final step. `None` if the rate stalls first.
fn time_in_phase(setup: &ChargeSetup, from: f64, to: f64, h: f64, phase_cap: f64) -> Option<f64> {
    let mut soc = from;
    let mut t = 0.0;
    let mut steps = 0usize;
    while soc < to {
        let next = rk4_step(setup, soc, h, phase_cap);
        if next >= to {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if rk4_step(setup, soc, mid, phase_cap) < to {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(t + 0.5 * (lo + hi));
        }
        if next <= soc || steps > 50_000_000 {
            return None;
        }
        soc = next;
        t += h;
        steps += 1;
    }
    Some(t)
}

/// Charging minutes from `from` to `to` by numerically integrating the rate.
pub fn charge_minutes_by_integration(setup: &ChargeSetup, from: f64, to: f64) -> Option<f64> {
    let h = setup.tau_min / 400.0;
    let mut total = 0.0;
    let mut soc = from;
    if soc < setup.soc_cv {
        let end = to.min(setup.soc_cv);
        total += time_in_phase(setup, soc, end, h.max(0.01), setup.soc_cv - 1e-15)?;
        soc = end;
    }
    if to > soc {
        total += time_in_phase(setup, soc.max(setup.soc_cv), to, h, f64::INFINITY)?;
    }
    Some(total)
}

/// Minimum k-means inertia over every assignment of points to `k` nonempty clusters.
pub fn best_partition(points: &[[f64; 2]], k: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut best = (f64::INFINITY, Vec::new());
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut labels = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            labels.push(c % k);
            c /= k;
        }
        let mut sum = vec![[0.0, 0.0]; k];
        let mut count = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sum[l][0] += p[0];
            sum[l][1] += p[1];
            count[l] += 1;
        }
        if count.contains(&0) {
            continue;
        }
        let inertia: f64 = points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| {
                let cx = sum[l][0] / count[l] as f64;
                let cy = sum[l][1] / count[l] as f64;
                (p[0] - cx).powi(2) + (p[1] - cy).powi(2)
            })
            .sum();
        if inertia < best.0 {
            best = (inertia, labels);
        }
    }
    best
}

/// First-come-first-served multi-server queue with fixed service time.
/// Returns each customer's wait in minutes, in arrival order.
pub fn simulate_fcfs(arrival_min: &[f64], ports: usize, service_min: f64) -> Vec<f64> {
    let mut free_at = vec![0.0f64; ports.max(1)];
    let mut waits = Vec::with_capacity(arrival_min.len());
    for &a in arrival_min {
        let (slot, &earliest) = free_at
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("at least one port");
        let start = a.max(earliest);
        waits.push(start - a);
        free_at[slot] = start + service_min;
    }
    waits
}

/// `count` arrivals evenly spread over one hour.
pub fn evenly_spaced_hour(count: usize) -> Vec<f64> {
    (0..count).map(|i| i as f64 * 60.0 / count as f64).collect()
}
