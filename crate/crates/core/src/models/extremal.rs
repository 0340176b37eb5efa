//! Tripletwise extremal coefficients and shape clustering of triples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelError;

/// `M / sum_t 1 / max(y_ti, y_tj, y_tk)`.
pub fn extremal_coeff(yi: &[f64], yj: &[f64], yk: &[f64]) -> Result<f64, ModelError> {
    let m = yi.len();
    if m == 0 || yj.len() != m || yk.len() != m {
        return Err(ModelError::Input(
            "series must be nonempty and of equal length".into(),
        ));
    }
    let mut acc = 0.0;
    for t in 0..m {
        let mx = yi[t].max(yj[t]).max(yk[t]);
        if !(mx > 0.0) {
            return Err(ModelError::Input(format!(
                "nonpositive yearly maximum at year {t}"
            )));
        }
        acc += 1.0 / mx;
    }
    Ok(m as f64 / acc)
}

/// Coefficient for one triple of columns in a `years x D` matrix.
pub fn triple_coeff(data: &[Vec<f64>], t: [usize; 3]) -> Result<f64, ModelError> {
    let mut acc = 0.0;
    for (year, row) in data.iter().enumerate() {
        let mx = row[t[0]].max(row[t[1]]).max(row[t[2]]);
        if !(mx > 0.0) {
            return Err(ModelError::Input(format!(
                "nonpositive yearly maximum at year {year}"
            )));
        }
        acc += 1.0 / mx;
    }
    Ok(data.len() as f64 / acc)
}

/// All `C(d, 3)` index triples in lexicographic order.
pub fn all_triples(d: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            for k in j + 1..d {
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// Sorted side lengths: invariant to translation, rotation and reflection.
pub fn triple_features(locations: &[[f64; 2]], t: [usize; 3]) -> [f64; 3] {
    let dist = |a: usize, b: usize| {
        let (p, q) = (locations[a], locations[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    };
    let mut f = [dist(t[0], t[1]), dist(t[0], t[2]), dist(t[1], t[2])];
    f.sort_by(f64::total_cmp);
    f
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripleClustering {
    pub triples: Vec<[usize; 3]>,
    /// Cluster index of each triple; clusters are numbered densely.
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
}

impl TripleClustering {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn nearest(p: &[f64; 3], centers: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (c, ctr) in centers.iter().enumerate() {
        let d = sq_dist(p, ctr);
        if d < bd {
            bd = d;
            best = c;
        }
    }
    best
}

/// Clusters all triples by shape with seeded k-means++ and Lloyd iterations.
/// Empty clusters are dropped and the rest renumbered.
pub fn cluster_triples(
    locations: &[[f64; 2]],
    k: usize,
    seed: u64,
) -> Result<TripleClustering, ModelError> {
    let d = locations.len();
    if d < 3 {
        return Err(ModelError::Config(format!(
            "need at least 3 locations, got {d}"
        )));
    }
    if k == 0 {
        return Err(ModelError::Config("cluster count must be positive".into()));
    }
    let triples = all_triples(d);
    let n = triples.len();
    let feats: Vec<[f64; 3]> = triples
        .iter()
        .map(|t| triple_features(locations, *t))
        .collect();
    let mut shapes: Vec<[f64; 3]> = Vec::new();
    let by_shape: Vec<usize> = feats
        .iter()
        .map(|f| match shapes.iter().position(|s| s == f) {
            Some(i) => i,
            None => {
                shapes.push(*f);
                shapes.len() - 1
            }
        })
        .collect();
    if k >= shapes.len() {
        return Ok(TripleClustering {
            assignment: by_shape,
            n_clusters: shapes.len(),
            triples,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![feats[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = feats.iter().map(|f| sq_dist(f, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // fewer distinct shapes than clusters
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, w) in d2.iter().enumerate() {
            if target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        let c = feats[pick];
        for (i, f) in feats.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(f, &c));
        }
        centers.push(c);
    }

    let mut assignment: Vec<usize> = feats.iter().map(|f| nearest(f, &centers)).collect();
    for _ in 0..100 {
        let mut sums = vec![[0.0; 3]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (f, &a) in feats.iter().zip(&assignment) {
            for j in 0..3 {
                sums[a][j] += f[j];
            }
            counts[a] += 1;
        }
        for (c, ctr) in centers.iter_mut().enumerate() {
            if counts[c] > 0 {
                for j in 0..3 {
                    ctr[j] = sums[c][j] / counts[c] as f64;
                }
            }
        }
        let next: Vec<usize> = feats.iter().map(|f| nearest(f, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    let mut relabel = vec![usize::MAX; centers.len()];
    let mut n_clusters = 0;
    for a in assignment.iter_mut() {
        if relabel[*a] == usize::MAX {
            relabel[*a] = n_clusters;
            n_clusters += 1;
        }
        *a = relabel[*a];
    }
    Ok(TripleClustering {
        triples,
        assignment,
        n_clusters,
    })
}

/// Mean coefficient per cluster using only triples flagged in `available`
/// (all triples when `None`). Clusters with no available triple are `None`.
pub fn cluster_means(
    coeffs: &[f64],
    clustering: &TripleClustering,
    available: Option<&[bool]>,
) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; clustering.n_clusters];
    let mut counts = vec![0usize; clustering.n_clusters];
    for (i, &a) in clustering.assignment.iter().enumerate() {
        if available.is_none_or(|av| av[i]) {
            sums[a] += coeffs[i];
            counts[a] += 1;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// L1 distance over components present in both vectors.
pub fn l1_distance(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_formula() {
        assert_eq!(
            extremal_coeff(&[1.0, 1.0], &[0.5, 0.2], &[1.0, 0.1]).unwrap(),
            1.0
        );
        let v = extremal_coeff(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
        assert!(extremal_coeff(&[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn triple_count() {
        assert_eq!(all_triples(3), vec![[0, 1, 2]]);
        assert_eq!(all_triples(10).len(), 120);
    }

    #[test]
    fn single_triple_single_cluster() {
        let c = cluster_triples(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]], 100, 1).unwrap();
        assert_eq!(c.n_clusters, 1);
        assert!(cluster_triples(&[[0.0, 0.0], [1.0, 0.0]], 1, 1).is_err());
    }

    #[test]
    fn missing_components_skipped() {
        let a = [Some(1.0), None, Some(2.0)];
        let b = [Some(0.0), Some(5.0), Some(0.0)];
        assert_eq!(l1_distance(&a, &b), 3.0);
    }
}
