//! Open asymmetric TSP from a fixed start node 0.
//!
//! Returning to node 0 is free, so a tour is a Hamiltonian path starting at
//! 0. Small instances are solved exactly by Held–Karp dynamic programming;
//! larger ones by nearest-neighbour construction followed by 2-opt and
//! or-opt moves until no move improves the cost.

/// Cost of visiting `order` (node indices, excluding 0) starting from 0.
pub fn path_cost(cost: &[Vec<f64>], order: &[usize]) -> f64 {
    let mut c = 0.0;
    let mut prev = 0;
    for &j in order {
        c += cost[prev][j];
        prev = j;
    }
    c
}

pub fn solve_open_atsp(cost: &[Vec<f64>], exact_limit: usize) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n <= 1 {
        return (Vec::new(), 0.0);
    }
    if n - 1 <= exact_limit {
        held_karp(cost)
    } else {
        let mut order = nearest_neighbor(cost);
        improve(cost, &mut order);
        let c = path_cost(cost, &order);
        (order, c)
    }
}

fn held_karp(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let m = cost.len() - 1; // nodes 1..=m
    let full = 1usize << m;
    let mut dp = vec![f64::INFINITY; full * m];
    let mut parent = vec![usize::MAX; full * m];
    for j in 0..m {
        dp[(1 << j) * m + j] = cost[0][j + 1];
    }
    for mask in 1..full {
        for j in 0..m {
            if mask & (1 << j) == 0 {
                continue;
            }
            let cur = dp[mask * m + j];
            if !cur.is_finite() {
                continue;
            }
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let nm = mask | (1 << k);
                let cand = cur + cost[j + 1][k + 1];
                if cand < dp[nm * m + k] {
                    dp[nm * m + k] = cand;
                    parent[nm * m + k] = j;
                }
            }
        }
    }
    let last_mask = full - 1;
    let (mut best_j, mut best) = (0, f64::INFINITY);
    for j in 0..m {
        if dp[last_mask * m + j] < best {
            best = dp[last_mask * m + j];
            best_j = j;
        }
    }
    let mut order = Vec::with_capacity(m);
    let mut mask = last_mask;
    let mut j = best_j;
    loop {
        order.push(j + 1);
        let p = parent[mask * m + j];
        mask &= !(1 << j);
        if p == usize::MAX {
            break;
        }
        j = p;
    }
    order.reverse();
    (order, best)
}

fn nearest_neighbor(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut used = vec![false; n];
    used[0] = true;
    let mut order = Vec::with_capacity(n - 1);
    let mut cur = 0;
    for _ in 1..n {
        let next = (1..n)
            .filter(|j| !used[*j])
            .min_by(|a, b| cost[cur][*a].total_cmp(&cost[cur][*b]).then(a.cmp(b)))
            .expect("unvisited node remains");
        used[next] = true;
        order.push(next);
        cur = next;
    }
    order
}

fn improve(cost: &[Vec<f64>], order: &mut Vec<usize>) {
    let eps = 1e-12;
    loop {
        let base = path_cost(cost, order);
        let mut best: Option<Vec<usize>> = None;
        let mut best_cost = base - eps;
        let n = order.len();
        // 2-opt: reverse a segment (asymmetric costs, so recompute fully)
        for i in 0..n {
            for j in i + 1..n {
                let mut cand = order.clone();
                cand[i..=j].reverse();
                let c = path_cost(cost, &cand);
                if c < best_cost {
                    best_cost = c;
                    best = Some(cand);
                }
            }
        }
        // or-opt: move a run of 1..=3 nodes elsewhere
        for len in 1..=3.min(n) {
            for i in 0..=n - len {
                let run: Vec<usize> = order[i..i + len].to_vec();
                let mut rest: Vec<usize> = order[..i].to_vec();
                rest.extend_from_slice(&order[i + len..]);
                for at in 0..=rest.len() {
                    if at == i {
                        continue;
                    }
                    let mut cand = rest[..at].to_vec();
                    cand.extend_from_slice(&run);
                    cand.extend_from_slice(&rest[at..]);
                    let c = path_cost(cost, &cand);
                    if c < best_cost {
                        best_cost = c;
                        best = Some(cand);
                    }
                }
            }
        }
        match best {
            Some(b) => *order = b,
            None => break,
        }
    }
}
