//! Spectral clustering on Gaussian affinity graphs.
//!
//! The pipeline is: pairwise affinities, graph Laplacians, the k smallest
//! eigenvectors of the normalized Laplacian (cyclic Jacobi, exact enough at
//! the few-hundred-node scale this crate works at), row normalization, then
//! seeded k-means on the embedded rows.
//!
//! `relaxed_objective` scores an orthonormal basis against the similarity
//! operator `S = I - L_norm`; the top-k eigenbasis maximizes it, which is
//! what justifies reading cluster structure off those eigenvectors.

use crate::error::{Error, Result};
use crate::seeding::SeedStream;
use crate::tensor::Tensor;
use rand::Rng;

/// Gaussian affinity `exp(-d^2 / (2 bandwidth^2))` with a zeroed diagonal.
/// Bandwidth must be positive and finite.
pub fn affinity_matrix(points: &Tensor, bandwidth: f64) -> Result<Tensor> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Argument(format!(
            "bandwidth must be positive and finite, got {bandwidth}"
        )));
    }
    let n = points.rows();
    if n == 0 {
        return Err(Error::Argument("no points".into()));
    }
    let denom = 2.0 * bandwidth * bandwidth;
    let mut a = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let w = (-d2 / denom).exp();
            a.data_mut()[i * n + j] = w;
            a.data_mut()[j * n + i] = w;
        }
    }
    Ok(a)
}

/// Median of all pairwise Euclidean distances, the default bandwidth when
/// none is configured. Even-length medians take the lower middle value.
pub fn median_pairwise_distance(points: &Tensor) -> Result<f64> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::Argument("need at least two points".into()));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    Ok(dists[(dists.len() - 1) / 2])
}

/// Unnormalized Laplacian `D - A` and symmetric normalized Laplacian
/// `I - D^{-1/2} A D^{-1/2}`. A zero-degree node has no meaningful
/// normalization, so it is an error.
pub fn laplacians(affinity: &Tensor) -> Result<(Tensor, Tensor)> {
    let n = affinity.rows();
    if affinity.shape() != [n, n] {
        return Err(Error::Dimension("affinity must be square".into()));
    }
    let mut degree = vec![0.0; n];
    for i in 0..n {
        degree[i] = affinity.row(i).iter().sum();
        if degree[i] <= 0.0 {
            return Err(Error::IsolatedNode(i));
        }
    }
    let mut lap = Tensor::zeros(vec![n, n]);
    let mut lap_norm = Tensor::zeros(vec![n, n]);
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            let a = affinity.row(i)[j];
            let idx = i * n + j;
            if i == j {
                lap.data_mut()[idx] = degree[i] - a;
                lap_norm.data_mut()[idx] = 1.0 - a * inv_sqrt[i] * inv_sqrt[j];
            } else {
                lap.data_mut()[idx] = -a;
                lap_norm.data_mut()[idx] = -a * inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    Ok((lap, lap_norm))
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues ascending and eigenvectors as the columns of the
/// second tensor, in matching order. Each eigenvector is unit length and
/// sign-fixed so its largest-magnitude component (first such index on ties)
/// is positive, making results reproducible across reorderings.
pub fn sym_eig(m: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let n = m.rows();
    if m.shape() != [n, n] || n == 0 {
        return Err(Error::Dimension("matrix must be square and nonempty".into()));
    }
    let scale = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (m.row(i)[j] - m.row(j)[i]).abs();
            if diff > 1e-9 * scale.max(1.0) {
                return Err(Error::Argument(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut a = m.data().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    if scale > 0.0 {
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += 2.0 * a[i * n + j] * a[i * n + j];
                }
            }
            if off.sqrt() <= 1e-13 * scale {
                converged = true;
                break;
            }
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    // Below rounding relative to the diagonal the rotation
                    // is a no-op; zero the entry instead.
                    if apq.abs() <= f64::EPSILON * 0.5 * (app.abs() + aqq.abs()) {
                        a[p * n + q] = 0.0;
                        a[q * n + p] = 0.0;
                        continue;
                    }
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);

                    a[p * n + p] = app - t * apq;
                    a[q * n + q] = aqq + t * apq;
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    for i in 0..n {
                        if i != p && i != q {
                            let aip = a[i * n + p];
                            let aiq = a[i * n + q];
                            let nip = aip - s * (aiq + tau * aip);
                            let niq = aiq + s * (aip - tau * aiq);
                            a[i * n + p] = nip;
                            a[p * n + i] = nip;
                            a[i * n + q] = niq;
                            a[q * n + i] = niq;
                        }
                    }
                    for i in 0..n {
                        let vip = v[i * n + p];
                        let viq = v[i * n + q];
                        v[i * n + p] = c * vip - s * viq;
                        v[i * n + q] = s * vip + c * viq;
                    }
                }
            }
        }
        if !converged {
            return Err(Error::Convergence(format!(
                "jacobi sweeps exhausted at n = {n}"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        a[x * n + x]
            .partial_cmp(&a[y * n + y])
            .expect("diagonal is finite")
            .then(x.cmp(&y))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&j| a[j * n + j]).collect();
    let mut vectors = Tensor::zeros(vec![n, n]);
    for (col, &j) in order.iter().enumerate() {
        let mut best = 0;
        for i in 1..n {
            if v[i * n + j].abs() > v[best * n + j].abs() {
                best = i;
            }
        }
        let flip = if v[best * n + j] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors.data_mut()[i * n + col] = flip * v[i * n + j];
        }
    }
    Ok((eigenvalues, vectors))
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub assignments: Vec<usize>,
    pub centers: Tensor,
    pub wcss: f64,
}

/// Seeded k-means: k-means++ initialization then Lloyd iterations until
/// assignments stabilize. An emptied cluster is reseeded at the point
/// farthest from its current center, so every cluster stays populated.
pub fn kmeans(points: &Tensor, k: usize, rng: &mut SeedStream) -> Result<KmeansFit> {
    let (fit, _) = kmeans_traced(points, k, rng)?;
    Ok(fit)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_traced(points: &Tensor, k: usize, rng: &mut SeedStream) -> Result<(KmeansFit, Vec<f64>)> {
    let n = points.rows();
    let d = points.row_len();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k = {k} with {n} points")));
    }

    let mut centers = Tensor::zeros(vec![k, d]);
    centers.row_mut(0).copy_from_slice(points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(points.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(dist2(points.row(i), centers.row(c)));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut wcss_trace = Vec::new();
    for _ in 0..100 {
        let mut changed = false;
        let mut wcss = 0.0;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = dist2(points.row(i), centers.row(0));
            for c in 1..k {
                let dc = dist2(points.row(i), centers.row(c));
                if dc < best_d {
                    best_d = dc;
                    best = c;
                }
            }
            wcss += best_d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        wcss_trace.push(wcss);
        if !changed && wcss_trace.len() > 1 {
            break;
        }

        let mut counts = vec![0usize; k];
        let mut sums = Tensor::zeros(vec![k, d]);
        for i in 0..n {
            counts[assignments[i]] += 1;
            for (s, &x) in sums.row_mut(assignments[i]).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed from the point worst served by its own center.
                let far = (0..n)
                    .max_by(|&x, &y| {
                        dist2(points.row(x), centers.row(assignments[x]))
                            .partial_cmp(&dist2(points.row(y), centers.row(assignments[y])))
                            .expect("finite")
                    })
                    .expect("n > 0");
                centers.row_mut(c).copy_from_slice(points.row(far));
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
    }

    let wcss = *wcss_trace.last().expect("at least one iteration");
    Ok((
        KmeansFit {
            assignments,
            centers,
            wcss,
        },
        wcss_trace,
    ))
}

/// Result of a spectral clustering run. `embedding` holds the
/// row-normalized spectral coordinates actually fed to k-means, and
/// `eigenvalues` the full ascending spectrum of the normalized Laplacian
/// (useful for eyeballing the eigengap).
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub assignments: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    pub embedding: Tensor,
    pub k: usize,
}

/// Clusters raw points: Gaussian affinity, normalized Laplacian, k smallest
/// eigenvectors, row normalization, seeded k-means. `bandwidth = None`
/// falls back to the median pairwise distance.
pub fn spectral_cluster(
    points: &Tensor,
    k: usize,
    bandwidth: Option<f64>,
    rng: &mut SeedStream,
) -> Result<ClusterModel> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k = {k} with {n} points")));
    }
    let bw = match bandwidth {
        Some(b) => b,
        None => {
            let m = median_pairwise_distance(points)?;
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let affinity = affinity_matrix(points, bw)?;
    let (_, lap_norm) = laplacians(&affinity)?;
    let (eigenvalues, vectors) = sym_eig(&lap_norm)?;

    let mut embedding = Tensor::zeros(vec![n, k]);
    for i in 0..n {
        let row = embedding.row_mut(i);
        for (c, val) in row.iter_mut().enumerate() {
            *val = vectors.row(i)[c];
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    let fit = kmeans(&embedding, k, rng)?;
    Ok(ClusterModel {
        assignments: fit.assignments,
        eigenvalues,
        embedding,
        k,
    })
}

/// Similarity operator `I - L_norm`; its top eigenvectors are the bottom
/// eigenvectors of the normalized Laplacian.
pub fn similarity_operator(lap_norm: &Tensor) -> Tensor {
    let n = lap_norm.rows();
    let mut s = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..n {
            let v = -lap_norm.row(i)[j];
            s.data_mut()[i * n + j] = if i == j { 1.0 + v } else { v };
        }
    }
    s
}

/// Trace of `B^T S B` for an orthonormal basis held in the columns of
/// `basis`. Orthonormality is checked to 1e-8 before evaluating.
pub fn relaxed_objective(s: &Tensor, basis: &Tensor) -> Result<f64> {
    let n = s.rows();
    if s.shape() != [n, n] {
        return Err(Error::Dimension("operator must be square".into()));
    }
    if basis.rows() != n {
        return Err(Error::Dimension(format!(
            "basis has {} rows, operator is {n} x {n}",
            basis.rows()
        )));
    }
    let k = basis.row_len();
    for a in 0..k {
        for b in a..k {
            let mut dot = 0.0;
            for i in 0..n {
                dot += basis.row(i)[a] * basis.row(i)[b];
            }
            let want = if a == b { 1.0 } else { 0.0 };
            if (dot - want).abs() > 1e-8 {
                return Err(Error::Argument(format!(
                    "basis columns {a} and {b} are not orthonormal (dot = {dot})"
                )));
            }
        }
    }
    let mut trace = 0.0;
    for c in 0..k {
        for i in 0..n {
            let mut si_b = 0.0;
            for j in 0..n {
                si_b += s.row(i)[j] * basis.row(j)[c];
            }
            trace += basis.row(i)[c] * si_b;
        }
    }
    Ok(trace)
}

/// Picks `k_select` members spread across clusters: clusters are visited
/// round-robin (largest first, then by cluster id), and each visit takes
/// the highest-scoring unused member (lowest id on score ties). Exhausted
/// clusters drop out of the rotation.
pub fn scnet_select(
    scores: &[f64],
    assignments: &[usize],
    k_select: usize,
) -> Result<Vec<usize>> {
    let n = scores.len();
    if assignments.len() != n {
        return Err(Error::Dimension(format!(
            "{n} scores but {} assignments",
            assignments.len()
        )));
    }
    if k_select == 0 || k_select > n {
        return Err(Error::Argument(format!("k_select = {k_select} with {n} members")));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assignments.iter().enumerate() {
        clusters[c].push(i);
    }
    // Within each cluster, order members best-score-first so selection can
    // pop from the back.
    for members in clusters.iter_mut() {
        members.sort_by(|&x, &y| {
            scores[x]
                .partial_cmp(&scores[y])
                .expect("scores are finite")
                .then(y.cmp(&x))
        });
    }
    let mut order: Vec<usize> = (0..k).filter(|&c| !clusters[c].is_empty()).collect();
    order.sort_by_key(|&c| (usize::MAX - clusters[c].len(), c));

    let mut picked = Vec::with_capacity(k_select);
    while picked.len() < k_select {
        let mut progressed = false;
        for &c in &order {
            if picked.len() == k_select {
                break;
            }
            if let Some(m) = clusters[c].pop() {
                picked.push(m);
                progressed = true;
            }
        }
        if !progressed {
            return Err(Error::Argument("clusters exhausted before k_select".into()));
        }
    }
    Ok(picked)
}

/// Adjusted Rand index between two labelings of the same points. Both
/// degenerate-partition cases (everything singleton or everything one
/// cluster on both sides) only arise when the labelings agree, where the
/// index is defined as 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let n = a.len();
    if n == 0 || b.len() != n {
        return Err(Error::Dimension(format!(
            "labelings of {} and {} points",
            n,
            b.len()
        )));
    }
    let ka = a.iter().max().expect("nonempty") + 1;
    let kb = b.iter().max().expect("nonempty") + 1;
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let comb2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.iter().map(|&v| comb2(v)).sum();
    let sum_a: f64 = (0..ka)
        .map(|i| comb2((0..kb).map(|j| table[i * kb + j]).sum()))
        .sum();
    let sum_b: f64 = (0..kb)
        .map(|j| comb2((0..ka).map(|i| table[i * kb + j]).sum()))
        .sum();
    let total = comb2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;

    #[test]
    fn affinity_unit_distance_is_exp_minus_one() {
        // Two points at distance 1 with bandwidth 1/sqrt(2): the exponent
        // is exactly -1.
        let pts = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let a = affinity_matrix(&pts, 0.5f64.sqrt()).unwrap();
        assert_eq!(a.row(0)[0], 0.0);
        assert_eq!(a.row(1)[1], 0.0);
        assert!((a.row(0)[1] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(a.row(0)[1], a.row(1)[0]);
    }

    #[test]
    fn affinity_rejects_bad_bandwidth() {
        let pts = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(affinity_matrix(&pts, 0.0).is_err());
        assert!(affinity_matrix(&pts, -1.0).is_err());
        assert!(affinity_matrix(&pts, f64::NAN).is_err());
    }

    #[test]
    fn two_node_laplacians_are_analytic() {
        // Affinity 0.25 keeps every normalization step exact in floats:
        // sqrt(0.25) = 0.5 and 2 * 0.25 * 2 = 1.
        let mut a = Tensor::zeros(vec![2, 2]);
        a.data_mut()[1] = 0.25;
        a.data_mut()[2] = 0.25;
        let (lap, lap_norm) = laplacians(&a).unwrap();
        assert_eq!(lap.data(), &[0.25, -0.25, -0.25, 0.25]);
        assert_eq!(lap_norm.data(), &[1.0, -1.0, -1.0, 1.0]);
        // Unnormalized rows sum to zero by construction.
        for i in 0..2 {
            assert!((lap.row(i).iter().sum::<f64>()).abs() < 1e-15);
        }
    }

    #[test]
    fn laplacians_reject_isolated_nodes() {
        let a = Tensor::zeros(vec![3, 3]);
        assert!(matches!(laplacians(&a), Err(Error::IsolatedNode(0))));
    }

    #[test]
    fn sym_eig_identity() {
        let mut m = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            m.data_mut()[i * 3 + i] = 1.0;
        }
        let (vals, vecs) = sym_eig(&m).unwrap();
        assert_eq!(vals, vec![1.0, 1.0, 1.0]);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((vecs.row(i)[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sym_eig_3x3_matches_characteristic_roots() {
        // det(M - xI) factors as (2 - x)(x - 1)(x - 4) for this matrix, so
        // the spectrum is exactly {1, 2, 4}.
        let m = Tensor::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ])
        .unwrap();
        let (vals, vecs) = sym_eig(&m).unwrap();
        for (got, want) in vals.iter().zip(&[1.0, 2.0, 4.0]) {
            assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
        }
        // Residual check: M v = lambda v for each column.
        for c in 0..3 {
            for i in 0..3 {
                let mv: f64 = (0..3).map(|j| m.row(i)[j] * vecs.row(j)[c]).sum();
                assert!((mv - vals[c] * vecs.row(i)[c]).abs() < 1e-10);
            }
        }
    }

    // Frozen from an independent solver run on this exact matrix.
    #[test]
    fn sym_eig_5x5_matches_frozen_spectrum() {
        let m = Tensor::from_rows(&[
            vec![4.0, 1.0, -2.0, 0.5, 0.0],
            vec![1.0, 3.0, 0.0, 1.5, -1.0],
            vec![-2.0, 0.0, 5.0, 1.0, 0.5],
            vec![0.5, 1.5, 1.0, 2.0, 0.0],
            vec![0.0, -1.0, 0.5, 0.0, 1.0],
        ])
        .unwrap();
        let want = [
            0.2579213179288629,
            0.9192368071854745,
            2.2933158820749537,
            4.799310319769364,
            6.730215673041344,
        ];
        let (vals, _) = sym_eig(&m).unwrap();
        for (got, want) in vals.iter().zip(&want) {
            assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
        }
    }

    #[test]
    fn sym_eig_vectors_are_orthonormal_with_positive_peak() {
        let mut rng = stream(&[31]);
        let n = 8;
        let mut m = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-1.0..1.0);
                m.data_mut()[i * n + j] = v;
                m.data_mut()[j * n + i] = v;
            }
        }
        let (_, vecs) = sym_eig(&m).unwrap();
        for a in 0..n {
            for b in a..n {
                let dot: f64 = (0..n).map(|i| vecs.row(i)[a] * vecs.row(i)[b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
            let peak = (0..n).max_by(|&x, &y| {
                vecs.row(x)[a].abs().partial_cmp(&vecs.row(y)[a].abs()).unwrap()
            });
            assert!(vecs.row(peak.unwrap())[a] > 0.0);
        }
    }

    #[test]
    fn sym_eig_rejects_asymmetric_input() {
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(sym_eig(&m).is_err());
    }

    #[test]
    fn kmeans_k_equals_n_hits_every_point() {
        let pts = Tensor::from_rows(&[vec![0.0], vec![5.0], vec![10.0]]).unwrap();
        let fit = kmeans(&pts, 3, &mut stream(&[1])).unwrap();
        let mut seen = fit.assignments.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);
        assert!(fit.wcss < 1e-18);
    }

    #[test]
    fn kmeans_recovers_two_separated_blobs() {
        let mut rows = Vec::new();
        let mut rng = stream(&[77]);
        for i in 0..40 {
            let cx = if i < 20 { 0.0 } else { 100.0 };
            rows.push(vec![
                cx + rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
        }
        let pts = Tensor::from_rows(&rows).unwrap();
        let fit = kmeans(&pts, 2, &mut stream(&[3])).unwrap();
        let truth: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        assert_eq!(adjusted_rand_index(&fit.assignments, &truth).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_objective_never_increases() {
        let mut rng = stream(&[55]);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let pts = Tensor::from_rows(&rows).unwrap();
        let (_, trace) = kmeans_traced(&pts, 4, &mut stream(&[8])).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "wcss rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let pts = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(kmeans(&pts, 0, &mut stream(&[1])).is_err());
        assert!(kmeans(&pts, 3, &mut stream(&[1])).is_err());
    }

    #[test]
    fn spectral_separates_two_planted_blocks() {
        // Two tight groups far apart: the normalized Laplacian has two
        // near-zero eigenvalues and the clustering is exact.
        let mut rows = Vec::new();
        let mut rng = stream(&[12]);
        for i in 0..30 {
            let cx = if i < 15 { 0.0 } else { 50.0 };
            rows.push(vec![cx + rng.random_range(-0.5..0.5)]);
        }
        let pts = Tensor::from_rows(&rows).unwrap();
        let model = spectral_cluster(&pts, 2, Some(1.0), &mut stream(&[4])).unwrap();
        let truth: Vec<usize> = (0..30).map(|i| usize::from(i >= 15)).collect();
        assert_eq!(
            adjusted_rand_index(&model.assignments, &truth).unwrap(),
            1.0
        );
        assert!(model.eigenvalues[0] < 1e-6);
        assert!(model.eigenvalues[1] < 1e-6);
        assert!(model.eigenvalues[2] > 1e-3);
    }

    #[test]
    fn spectral_assignment_is_stable_under_point_permutation() {
        let mut rng = stream(&[13]);
        let mut rows = Vec::new();
        for i in 0..24 {
            let cx = if i % 2 == 0 { 0.0 } else { 30.0 };
            rows.push(vec![cx + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]);
        }
        let pts = Tensor::from_rows(&rows).unwrap();
        let m1 = spectral_cluster(&pts, 2, Some(1.0), &mut stream(&[9])).unwrap();
        // Reverse the point order, cluster, then map back.
        let rev: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
        let pts_rev = Tensor::from_rows(&rev).unwrap();
        let m2 = spectral_cluster(&pts_rev, 2, Some(1.0), &mut stream(&[9])).unwrap();
        let unrev: Vec<usize> = m2.assignments.iter().rev().copied().collect();
        assert_eq!(adjusted_rand_index(&m1.assignments, &unrev).unwrap(), 1.0);
    }

    #[test]
    fn relaxed_objective_on_diagonal_operator() {
        // For diag(3, 1, 0) and the first two axis vectors the trace is
        // exactly 4, the sum of the two largest eigenvalues.
        let s = Tensor::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let basis = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        assert!((relaxed_objective(&s, &basis).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn relaxed_objective_full_basis_gives_trace() {
        let m = Tensor::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let basis = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((relaxed_objective(&m, &basis).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn relaxed_objective_rejects_skewed_basis() {
        let s = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0, 0.9], vec![0.0, 0.1]]).unwrap();
        assert!(relaxed_objective(&s, &b).is_err());
    }

    #[test]
    fn scnet_select_spreads_across_clusters() {
        // Cluster 0 = {0, 1, 2}, cluster 1 = {3, 4}. Scores favor cluster 0
        // overall, but the rotation must still visit cluster 1.
        let scores = [0.9, 0.8, 0.7, 0.6, 0.5];
        let assign = [0, 0, 0, 1, 1];
        let picked = scnet_select(&scores, &assign, 2).unwrap();
        assert_eq!(picked, vec![0, 3]);
        let picked = scnet_select(&scores, &assign, 4).unwrap();
        assert_eq!(picked, vec![0, 3, 1, 4]);
    }

    #[test]
    fn scnet_select_breaks_score_ties_by_lower_id() {
        let scores = [0.5, 0.5, 0.5];
        let assign = [0, 0, 0];
        assert_eq!(scnet_select(&scores, &assign, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn scnet_select_single_cluster_is_greedy_top_k() {
        let scores = [0.1, 0.9, 0.4, 0.7];
        let assign = [0, 0, 0, 0];
        assert_eq!(scnet_select(&scores, &assign, 2).unwrap(), vec![1, 3]);
    }

    #[test]
    fn ari_extremes() {
        let a = [0, 0, 1, 1];
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        // Relabeled but identical partition.
        let b = [1, 1, 0, 0];
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0);
        // Independent split: one pair agreement pattern, index near zero.
        let c = [0, 1, 0, 1];
        let v = adjusted_rand_index(&a, &c).unwrap();
        assert!(v < 0.01, "got {v}");
    }
}
