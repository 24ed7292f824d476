//! Affinity clustering.
//!
//! Borůvka rounds: every active cluster links to its nearest other cluster
//! under average linkage, and the connected components of the link graph
//! become the clusters of the next round. Each round boundary is one level of
//! the hierarchy. Nearest-neighbour ties go to the lower cluster id.

use serde::{Deserialize, Serialize};

use super::{ClassHierarchy, DistanceMatrix, Merge, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMethod {
    /// Borůvka rounds; one level per round.
    #[default]
    Affinity,
    /// Classic average-linkage agglomeration; one level per merge.
    Agglomerative,
}

struct Cluster {
    id: usize,
    members: Vec<usize>,
}

fn average_linkage(d: &DistanceMatrix, a: &[usize], b: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in a {
        for &j in b {
            total += d.get(i, j);
        }
    }
    total / (a.len() * b.len()) as f64
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn partition_of(clusters: &[Cluster]) -> Partition {
    clusters.iter().map(|c| c.members.clone()).collect()
}

fn singletons(k: usize) -> Vec<Cluster> {
    (0..k)
        .map(|i| Cluster {
            id: i,
            members: vec![i],
        })
        .collect()
}

/// Builds the hierarchy with Borůvka-round affinity clustering.
pub fn affinity_cluster(d: &DistanceMatrix) -> ClassHierarchy {
    let k = d.len();
    let mut clusters = singletons(k);
    let mut next_id = k;
    let mut merges = Vec::new();
    let mut rounds: Vec<Partition> = vec![partition_of(&clusters)];

    let mut round = 0;
    while clusters.len() > 1 {
        let n = clusters.len();
        // clusters are kept in ascending id order, so a strict `<` keeps the
        // lower id on ties.
        let nearest: Vec<usize> = (0..n)
            .map(|a| {
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                for b in (0..n).filter(|&b| b != a) {
                    let dist = average_linkage(d, &clusters[a].members, &clusters[b].members);
                    if dist < best_d {
                        best_d = dist;
                        best = b;
                    }
                }
                best
            })
            .collect();

        let mut parent: Vec<usize> = (0..n).collect();
        for (a, &b) in nearest.iter().enumerate() {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }

        // Components ordered by their smallest class index get fresh ids.
        let mut components: Vec<(usize, Vec<usize>)> = Vec::new();
        for a in 0..n {
            let root = find(&mut parent, a);
            match components.iter_mut().find(|(r, _)| *r == root) {
                Some((_, members)) => members.push(a),
                None => components.push((root, vec![a])),
            }
        }
        components.sort_by_key(|(_, idx)| {
            idx.iter()
                .map(|&a| clusters[a].members[0])
                .min()
                .unwrap_or(usize::MAX)
        });

        let mut next = Vec::with_capacity(components.len());
        let mut new_id_of = vec![0; n];
        for (_, idx) in &components {
            let mut members: Vec<usize> = idx
                .iter()
                .flat_map(|&a| clusters[a].members.iter().copied())
                .collect();
            members.sort_unstable();
            for &a in idx {
                new_id_of[a] = next_id;
            }
            next.push(Cluster {
                id: next_id,
                members,
            });
            next_id += 1;
        }
        // Deduplicated link edges form a spanning forest of each component.
        let mut edges: Vec<(usize, usize)> = nearest
            .iter()
            .enumerate()
            .map(|(a, &b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        for (a, b) in edges {
            merges.push(Merge {
                left: clusters[a].id,
                right: clusters[b].id,
                merged: new_id_of[a],
                round,
            });
        }

        clusters = next;
        rounds.push(partition_of(&clusters));
        round += 1;
    }

    rounds.reverse();
    ClassHierarchy::new(k, merges, rounds).expect("rounds form a refining chain")
}

/// Average-linkage agglomerative clustering: merge the closest pair of
/// clusters until one remains. Every merge is a level.
pub fn agglomerative_cluster(d: &DistanceMatrix) -> ClassHierarchy {
    let k = d.len();
    let mut clusters = singletons(k);
    let mut next_id = k;
    let mut merges = Vec::new();
    let mut levels: Vec<Partition> = vec![partition_of(&clusters)];
    let mut round = 0;

    while clusters.len() > 1 {
        let mut best = (0, 1);
        let mut best_d = f64::INFINITY;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let dist = average_linkage(d, &clusters[a].members, &clusters[b].members);
                if dist < best_d {
                    best_d = dist;
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        let right = clusters.remove(b);
        let left = clusters.remove(a);
        merges.push(Merge {
            left: left.id,
            right: right.id,
            merged: next_id,
            round,
        });
        let mut members = left.members;
        members.extend(right.members);
        members.sort_unstable();
        clusters.push(Cluster {
            id: next_id,
            members,
        });
        clusters.sort_by_key(|c| c.id);
        next_id += 1;
        round += 1;
        levels.push(partition_of(&clusters));
    }

    levels.reverse();
    ClassHierarchy::new(k, merges, levels).expect("merges form a refining chain")
}

pub fn cluster_with(method: ClusterMethod, d: &DistanceMatrix) -> ClassHierarchy {
    match method {
        ClusterMethod::Affinity => affinity_cluster(d),
        ClusterMethod::Agglomerative => agglomerative_cluster(d),
    }
}
