use nalgebra::{DMatrix, SymmetricEigen};

/// Principal-component scores of `vectors` (rows), largest variance first.
///
/// Eigen-decomposes whichever of the covariance (D×D) or Gram (N×N) matrix
/// is smaller. Components whose eigenvalue is below `1e-12 × λ_max` are
/// reported as zero columns, so the output always has `n_components`
/// columns. The second value is the number of non-degenerate components.
pub(crate) fn principal_scores(vectors: &[Vec<f64>], n_components: usize) -> (Vec<Vec<f64>>, usize) {
    let n = vectors.len();
    if n == 0 {
        return (Vec::new(), 0);
    }
    let d = vectors[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);

    let mut scores = vec![vec![0.0; n_components]; n];
    let (values, vecs, via_gram) = if d <= n {
        let cov = centered.transpose() * &centered;
        let eig = SymmetricEigen::new(cov);
        (eig.eigenvalues, eig.eigenvectors, false)
    } else {
        let gram = &centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        (eig.eigenvalues, eig.eigenvectors, true)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let top = values[order[0]].max(0.0);
    let cutoff = 1e-12 * top;

    let mut rank = 0;
    for (c, &idx) in order.iter().take(n_components).enumerate() {
        let lambda = values[idx];
        if !(lambda > cutoff) || top == 0.0 {
            break;
        }
        rank += 1;
        let mut axis: Vec<f64> = vecs.column(idx).iter().copied().collect();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = axis
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        if via_gram {
            // X·v_k = u_k·σ_k with σ_k = sqrt(λ_k)
            let s = lambda.sqrt();
            for (i, row) in scores.iter_mut().enumerate() {
                row[c] = axis[i] * s;
            }
        } else {
            for (i, row) in scores.iter_mut().enumerate() {
                row[c] = (0..d).map(|j| centered[(i, j)] * axis[j]).sum();
            }
        }
    }
    (scores, rank)
}
