//! Vector clustering of client embeddings: k-means (k-means++ seeding,
//! Lloyd iterations, best of several restarts) and Ward agglomeration.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult<T> {
    /// Cluster of every input row, in `0..k`.
    pub labels: Vec<usize>,
    /// `k x dim` centers (k-means only).
    pub centers: Option<Array2<T>>,
    /// Sum of squared distances of the rows to their cluster mean/center.
    pub inertia: T,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning k-means restart.
    pub inertia_history: Vec<T>,
}

impl<T> ClusterResult<T> {
    pub fn group_count(&self) -> usize {
        let mut seen: Vec<usize> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams { restarts: 10, max_iter: 100, tol: 1e-6 }
    }
}

fn check_points<T: Scalar>(points: &ArrayView2<'_, T>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if points.nrows() < k {
        return Err(Error::invalid(format!("{} points cannot form {k} clusters", points.nrows())));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering input"));
    }
    Ok(())
}

fn sq_dist<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Nearest center of every point (ties to the lowest index) and the inertia.
fn assign<T: Scalar>(points: &ArrayView2<'_, T>, centers: &Array2<T>) -> (Vec<usize>, Vec<T>, T) {
    let mut labels = Vec::with_capacity(points.nrows());
    let mut dists = Vec::with_capacity(points.nrows());
    for p in points.rows() {
        let (best, d) = centers
            .rows()
            .into_iter()
            .enumerate()
            .map(|(j, c)| (j, sq_dist(p, c)))
            .fold((0, T::infinity()), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        labels.push(best);
        dists.push(d);
    }
    let inertia = dists.iter().copied().sum();
    (labels, dists, inertia)
}

fn kmeans_plus_plus<T: Scalar, R: Rng + ?Sized>(points: &ArrayView2<'_, T>, k: usize, rng: &mut R) -> Array2<T> {
    let m = points.nrows();
    let mut chosen = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> =
        points.rows().into_iter().map(|p| sq_dist(p, points.row(chosen[0])).to_f64_lossy()).collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point coincides with a chosen center
            Err(_) => rng.random_range(0..m),
        };
        chosen.push(next);
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(next)).to_f64_lossy());
        }
    }
    points.select(Axis(0), &chosen)
}

fn lloyd<T: Scalar>(points: &ArrayView2<'_, T>, mut centers: Array2<T>, params: &KMeansParams) -> ClusterResult<T> {
    let k = centers.nrows();
    let tol = T::lit(params.tol);
    let (mut labels, mut dists, mut inertia) = assign(points, &centers);
    let mut history = vec![inertia];
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let mut sums = Array2::<T>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for (p, &l) in points.rows().into_iter().zip(&labels) {
            sums.row_mut(l).zip_mut_with(&p, |s, &x| *s += x);
            counts[l] += 1;
        }
        let mut taken = vec![false; points.nrows()];
        let mut shift = T::zero();
        for j in 0..k {
            let new_center: Array1<T> = if counts[j] > 0 {
                sums.row(j).mapv(|s| s / T::from_count(counts[j]))
            } else {
                // reseed an empty cluster at the point farthest from its center
                let far = (0..points.nrows())
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("at least k points");
                taken[far] = true;
                points.row(far).to_owned()
            };
            shift = shift.max(sq_dist(new_center.view(), centers.row(j)).sqrt());
            centers.row_mut(j).assign(&new_center);
        }
        (labels, dists, inertia) = assign(points, &centers);
        history.push(inertia);
        if shift < tol {
            break;
        }
    }
    ClusterResult { labels, centers: Some(centers), inertia, iterations, inertia_history: history }
}

/// Best-inertia k-means over `params.restarts` k-means++ initializations.
///
/// Each restart draws from its own stream seeded from `rng`, so the result is
/// a deterministic function of the input and the stream state. Equal inertia
/// keeps the earlier restart.
pub fn kmeans<T: Scalar, R: Rng + ?Sized>(
    points: ArrayView2<'_, T>,
    k: usize,
    params: &KMeansParams,
    rng: &mut R,
) -> Result<ClusterResult<T>> {
    check_points(&points, k)?;
    let seeds: Vec<u64> = (0..params.restarts.max(1)).map(|_| rng.random()).collect();
    let mut best: Option<ClusterResult<T>> = None;
    for seed in seeds {
        let mut restart_rng = StreamRng::seed_from_u64(seed);
        let init = kmeans_plus_plus(&points, k, &mut restart_rng);
        let result = lloyd(&points, init, params);
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Ward-linkage agglomerative clustering cut at `k` clusters.
///
/// Clusters are identified by their smallest member; among merges of equal
/// cost the lexicographically smallest pair of identifiers wins. Final labels
/// number the clusters by smallest member.
pub fn agglomerative<T: Scalar>(points: ArrayView2<'_, T>, k: usize) -> Result<ClusterResult<T>> {
    check_points(&points, k)?;
    let m = points.nrows();
    let mut groups: Vec<Option<(Vec<usize>, Array1<T>)>> =
        (0..m).map(|i| Some((vec![i], points.row(i).to_owned()))).collect();
    let mut active = m;
    let mut merges = 0;
    while active > k {
        let mut best: Option<(T, usize, usize)> = None;
        for a in 0..m {
            let Some((ma, ca)) = &groups[a] else { continue };
            for b in a + 1..m {
                let Some((mb, cb)) = &groups[b] else { continue };
                let (na, nb) = (T::from_count(ma.len()), T::from_count(mb.len()));
                let cost = na * nb / (na + nb) * sq_dist(ca.view(), cb.view());
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("more than k active clusters");
        let (mb, cb) = groups[b].take().expect("active");
        let (ma, ca) = groups[a].as_mut().expect("active");
        let (na, nb) = (T::from_count(ma.len()), T::from_count(mb.len()));
        *ca = (&*ca * na + &cb * nb) / (na + nb);
        ma.extend(mb);
        active -= 1;
        merges += 1;
    }
    let mut labels = vec![0; m];
    let mut inertia = T::zero();
    for (label, (members, centroid)) in groups.iter().flatten().enumerate() {
        for &i in members {
            labels[i] = label;
            inertia += sq_dist(points.row(i), centroid.view());
        }
    }
    Ok(ClusterResult { labels, centers: None, inertia, iterations: merges, inertia_history: Vec::new() })
}
