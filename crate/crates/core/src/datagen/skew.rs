//! Label-skew layouts for the softmax world.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Concentration of the per-class allocation across clients.
pub const DIRICHLET_ALPHA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SkewSpec {
    /// Cluster `k` owns classes `k*u .. k*u + u`; no class is shared.
    DisjointLabels { classes_per_cluster: usize },
    /// Every cluster holds `classes_per_cluster` classes, of which the first
    /// `shared` are common to all clusters. Clients draw uniformly from their
    /// cluster's classes.
    OverlapLabels { classes_per_cluster: usize, shared: usize },
    /// All clusters see every class; cluster `k` relabels with its own
    /// permutation. Without explicit permutations each cluster applies two
    /// swaps of disjoint class pairs, unique per cluster.
    ConceptShift {
        #[serde(default)]
        permutations: Option<Vec<Vec<usize>>>,
    },
    /// `uniform_percent`% of a client's data is spread over all classes and
    /// the rest comes from the cluster's dominant class `k mod C`.
    DominantClass { uniform_percent: f64 },
}

pub(crate) struct Layout {
    pub class_weights: Vec<Vec<f64>>,
    pub label_maps: Vec<Vec<usize>>,
    pub degenerate: bool,
}

impl SkewSpec {
    /// Classes available to each cluster.
    pub fn cluster_classes(&self, classes: usize, clusters: usize) -> Result<Vec<Vec<usize>>> {
        match *self {
            SkewSpec::DisjointLabels { classes_per_cluster: u } => {
                if u == 0 || u > classes || u * clusters > classes {
                    return Err(Error::Infeasible(format!(
                        "{clusters} clusters with {u} disjoint classes each need more than {classes} classes"
                    )));
                }
                Ok((0..clusters).map(|k| (k * u..(k + 1) * u).collect()).collect())
            }
            SkewSpec::OverlapLabels { classes_per_cluster: u, shared: v } => {
                if u == 0 || u > classes || v > u {
                    return Err(Error::Infeasible(format!(
                        "overlap skew needs shared <= per-cluster <= classes, got {v}, {u}, {classes}"
                    )));
                }
                let pool = classes - v;
                Ok((0..clusters)
                    .map(|k| {
                        let mut set: Vec<usize> = (0..v).collect();
                        set.extend((0..u - v).map(|j| v + (k + j) % pool));
                        set
                    })
                    .collect())
            }
            SkewSpec::ConceptShift { .. } => Ok(vec![(0..classes).collect(); clusters]),
            SkewSpec::DominantClass { uniform_percent } => {
                if !(0.0..=100.0).contains(&uniform_percent) {
                    return Err(Error::invalid("uniform_percent must lie in [0, 100]"));
                }
                Ok(vec![(0..classes).collect(); clusters])
            }
        }
    }

    pub fn label_maps(&self, classes: usize, clusters: usize) -> Result<Vec<Vec<usize>>> {
        let identity: Vec<usize> = (0..classes).collect();
        match self {
            SkewSpec::ConceptShift { permutations: Some(perms) } => {
                if perms.len() != clusters {
                    return Err(Error::invalid(format!("expected {clusters} permutations, got {}", perms.len())));
                }
                for p in perms {
                    let mut sorted = p.clone();
                    sorted.sort_unstable();
                    if sorted != identity {
                        return Err(Error::invalid(format!("{p:?} is not a permutation of 0..{classes}")));
                    }
                }
                Ok(perms.clone())
            }
            SkewSpec::ConceptShift { permutations: None } => {
                let pairs = classes / 2;
                if pairs < 2 {
                    return Err(Error::Infeasible("two label swaps need at least four classes".into()));
                }
                Ok((0..clusters)
                    .map(|k| {
                        let mut p = identity.clone();
                        for pair in [k % pairs, (k + 1) % pairs] {
                            p.swap(2 * pair, 2 * pair + 1);
                        }
                        p
                    })
                    .collect())
            }
            _ => Ok(vec![identity; clusters]),
        }
    }

    pub(crate) fn layout(
        &self,
        classes: usize,
        clusters: usize,
        clients_per_cluster: usize,
        seed: u64,
    ) -> Result<Layout> {
        let owned = self.cluster_classes(classes, clusters)?;
        let label_maps = self.label_maps(classes, clusters)?;
        let clients = clusters * clients_per_cluster;
        let cluster_of = |i: usize| i / clients_per_cluster;

        let class_weights: Vec<Vec<f64>> = match *self {
            SkewSpec::DisjointLabels { .. } | SkewSpec::OverlapLabels { .. } | SkewSpec::ConceptShift { .. } => (0
                ..clients)
                .map(|i| {
                    let set = &owned[cluster_of(i)];
                    let mut w = vec![0.0; classes];
                    set.iter().for_each(|&c| w[c] = 1.0 / set.len() as f64);
                    w
                })
                .collect(),
            SkewSpec::DominantClass { uniform_percent } => {
                let shares = dirichlet_allocation(&owned, classes, clients_per_cluster, seed)?;
                let s = uniform_percent / 100.0;
                shares
                    .into_iter()
                    .enumerate()
                    .map(|(i, share)| {
                        let mut w: Vec<f64> = normalized(share).into_iter().map(|x| s * x).collect();
                        w[cluster_of(i) % classes] += 1.0 - s;
                        w
                    })
                    .collect()
            }
        };

        let signature = |k: usize| (owned[k].clone(), label_maps[k].clone());
        let degenerate = clusters > 1
            && !matches!(self, SkewSpec::DominantClass { .. })
            && (1..clusters).all(|k| signature(k) == signature(0));
        Ok(Layout { class_weights, label_maps, degenerate })
    }
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Splits every class among the clients holding it with Dirichlet shares;
/// returns each client's raw share of every class.
fn dirichlet_allocation(
    owned: &[Vec<usize>],
    classes: usize,
    clients_per_cluster: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let clients = owned.len() * clients_per_cluster;
    let gamma = Gamma::new(DIRICHLET_ALPHA, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let mut shares = vec![vec![0.0; classes]; clients];
    for class in 0..classes {
        let holders: Vec<usize> = (0..clients).filter(|&i| owned[i / clients_per_cluster].contains(&class)).collect();
        if holders.is_empty() {
            continue;
        }
        let mut rng = stream(seed, Purpose::Skew, 0, class as u64);
        let draws: Vec<f64> = holders.iter().map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE)).collect();
        let total: f64 = draws.iter().sum();
        for (&i, g) in holders.iter().zip(draws) {
            shares[i][class] = g / total;
        }
    }
    // a client whose every share underflowed still samples its classes
    for (i, row) in shares.iter_mut().enumerate() {
        if row.iter().sum::<f64>() <= 0.0 {
            owned[i / clients_per_cluster].iter().for_each(|&c| row[c] = 1.0);
        }
    }
    Ok(shares)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_labels_own_consecutive_pairs() {
        let sets = SkewSpec::DisjointLabels { classes_per_cluster: 2 }.cluster_classes(10, 5).unwrap();
        assert_eq!(sets, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7], vec![8, 9]]);
        assert!(SkewSpec::DisjointLabels { classes_per_cluster: 11 }.cluster_classes(10, 1).is_err());
        assert!(SkewSpec::DisjointLabels { classes_per_cluster: 3 }.cluster_classes(10, 5).is_err());
    }

    #[test]
    fn overlap_labels_share_at_least_v() {
        let sets = SkewSpec::OverlapLabels { classes_per_cluster: 4, shared: 2 }.cluster_classes(10, 5).unwrap();
        for a in 0..5 {
            assert_eq!(sets[a].len(), 4);
            for b in a + 1..5 {
                let common = sets[a].iter().filter(|c| sets[b].contains(c)).count();
                assert!(common >= 2);
                assert_ne!(sets[a], sets[b]);
            }
        }
        assert!(SkewSpec::OverlapLabels { classes_per_cluster: 2, shared: 3 }.cluster_classes(10, 5).is_err());
        assert!(SkewSpec::OverlapLabels { classes_per_cluster: 12, shared: 3 }.cluster_classes(10, 5).is_err());
    }

    #[test]
    fn default_concept_shift_uses_two_unique_swaps() {
        let maps = SkewSpec::ConceptShift { permutations: None }.label_maps(10, 5).unwrap();
        for (k, p) in maps.iter().enumerate() {
            let moved = p.iter().enumerate().filter(|(i, &c)| *i != c).count();
            assert_eq!(moved, 4);
            for q in &maps[k + 1..] {
                assert_ne!(p, q);
            }
        }
    }

    #[test]
    fn identity_concept_shift_is_flagged_degenerate() {
        let skew = SkewSpec::ConceptShift { permutations: Some(vec![(0..4).collect(); 3]) };
        assert!(skew.layout(4, 3, 2, 0).unwrap().degenerate);
        let bad = SkewSpec::ConceptShift { permutations: Some(vec![vec![0, 0, 1, 2]; 3]) };
        assert!(bad.layout(4, 3, 2, 0).is_err());
    }

    #[test]
    fn allocation_weights_are_distributions_over_owned_classes() {
        let skew = SkewSpec::OverlapLabels { classes_per_cluster: 4, shared: 2 };
        let layout = skew.layout(10, 5, 5, 3).unwrap();
        let sets = skew.cluster_classes(10, 5).unwrap();
        for (i, w) in layout.class_weights.iter().enumerate() {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (c, &x) in w.iter().enumerate() {
                assert_eq!(x > 0.0, sets[i / 5].contains(&c));
            }
        }
        let dom = SkewSpec::DominantClass { uniform_percent: 100.0 / 3.0 }.layout(10, 5, 5, 3).unwrap();
        for (i, w) in dom.class_weights.iter().enumerate() {
            assert!(w[i / 5] >= 2.0 / 3.0);
        }
    }
}
