//! Dense kernels on the connected blocks of a sparse square matrix.

use ndarray::Array2;
use ndarray_linalg::{EigValsh, SVD, UPLO};
use num_complex::Complex64;

use crate::Result;

/// Connected components of the undirected graph on `0..n` with the given
/// edges, each component sorted, components ordered by smallest member.
pub fn components(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Vec::new());
        }
        out[slot[r]].push(i);
    }
    out
}

/// `(σ_min, σ_max)` of a square complex matrix.
pub fn singular_extremes(a: &Array2<Complex64>) -> Result<(f64, f64)> {
    if a.nrows() == 1 && a.ncols() == 1 {
        let s = a[[0, 0]].norm();
        return Ok((s, s));
    }
    let (_, s, _) = a.svd(false, false)?;
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min, max))
}

/// Eigenvalues of a Hermitian matrix stored in full, ascending.
pub fn hermitian_eigenvalues(a: &Array2<Complex64>) -> Result<Vec<f64>> {
    if a.nrows() == 1 {
        return Ok(vec![a[[0, 0]].re]);
    }
    let w = a.eigvalsh(UPLO::Lower)?;
    let mut v = w.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn components_of_chain_and_isolated() {
        let c = components(6, [(0, 2), (2, 4), (5, 1)]);
        assert_eq!(c, vec![vec![0, 2, 4], vec![1, 5], vec![3]]);
    }

    #[test]
    fn diag_singular_values() {
        let mut a = Array2::zeros((2, 2));
        a[[0, 0]] = Complex64::new(0.0, 2.0);
        a[[1, 1]] = Complex64::new(3.0, 0.0);
        let (lo, hi) = singular_extremes(&a).unwrap();
        assert!((lo - 2.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
    }

    #[test]
    fn random_matrix_against_nalgebra() {
        let n = 40;
        let v = rng::random_unit_vector(n * n, 7, 0);
        let a = Array2::from_shape_vec((n, n), v.clone()).unwrap();
        let b = nalgebra::DMatrix::from_row_slice(n, n, &v);
        let sv = b.singular_values();
        let (lo, hi) = singular_extremes(&a).unwrap();
        assert!((lo - sv.min()).abs() < 1e-12 * hi);
        assert!((hi - sv.max()).abs() < 1e-12 * hi);
    }
}
