use std::collections::VecDeque;

use crate::sparse::SparseMatrix;

/// Symmetric adjacency lists of the pattern of `A + A^T`, self-loops removed.
pub fn symmetric_adjacency(a: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn bfs_levels(adj: &[Vec<usize>], start: usize, seen: &mut [bool]) -> (Vec<usize>, usize) {
    let mut order = vec![start];
    let mut depth = vec![0usize];
    seen[start] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        let d = depth[head];
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                order.push(w);
                depth.push(d + 1);
            }
        }
        head += 1;
    }
    for &v in &order {
        seen[v] = false;
    }
    let last = *depth.last().unwrap();
    (order, last)
}

/// Reverse Cuthill-McKee permutation; `perm[k]` is the original index placed at position `k`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj = symmetric_adjacency(a);
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut placed = vec![false; n];
    let mut scratch = vec![false; n];
    let mut perm = Vec::with_capacity(n);

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if placed[seed] {
            continue;
        }
        // pseudo-peripheral start: walk to the far end of the level structure
        let mut start = seed;
        let (mut order, mut ecc) = bfs_levels(&adj, start, &mut scratch);
        for _ in 0..4 {
            let far = *order
                .iter()
                .rev()
                .take_while(|&&v| v != start)
                .min_by_key(|&&v| degree[v])
                .unwrap_or(&start);
            let (o2, e2) = bfs_levels(&adj, far, &mut scratch);
            if e2 <= ecc {
                break;
            }
            start = far;
            order = o2;
            ecc = e2;
        }

        let mut queue = VecDeque::from([start]);
        placed[start] = true;
        let mut nbrs = Vec::new();
        while let Some(v) = queue.pop_front() {
            perm.push(v);
            nbrs.clear();
            nbrs.extend(adj[v].iter().copied().filter(|&w| !placed[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                placed[w] = true;
                queue.push_back(w);
            }
        }
    }
    perm.reverse();
    perm
}

/// Half-bandwidth of `A` after the symmetric permutation `perm`.
pub fn bandwidth(a: &SparseMatrix, perm: &[usize]) -> usize {
    let mut pos = vec![0; perm.len()];
    for (k, &v) in perm.iter().enumerate() {
        pos[v] = k;
    }
    a.triplets().map(|(i, j, _)| pos[i].abs_diff(pos[j])).max().unwrap_or(0)
}
