//! Spectral radius and Perron vectors of nonnegative matrices.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

const POWER_ITERATION_CAP: usize = 20_000;
const GAP_TOL: f64 = 1e-14;

/// Power iteration on the shifted matrix `M + sI`, `s > 0`, which removes
/// periodicity. Returns `(rho, x)` once the Collatz–Wielandt bracket
/// `min (Ax)_i/x_i ≤ ρ(A) ≤ max (Ax)_i/x_i` is narrower than `GAP_TOL`.
/// `Err(last_iterate)` if an entry vanishes or the cap is reached.
fn shifted_power_iteration(m: &DMatrix<f64>) -> std::result::Result<(f64, DVector<f64>), DVector<f64>> {
    let k = m.nrows();
    let shift = 0.5 * m.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let a = m + DMatrix::identity(k, k) * shift;
    let mut x = DVector::from_element(k, 1.0 / k as f64);
    for _ in 0..POWER_ITERATION_CAP {
        let y = &a * &x;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..k {
            if x[i] <= 0.0 || y[i] <= 0.0 {
                return Err(y);
            }
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm = y.sum();
        x = y / norm;
        if hi - lo <= GAP_TOL * hi.max(1.0) {
            return Ok((0.5 * (lo + hi) - shift, x));
        }
    }
    Err(x)
}

const SCHUR_ITERATIONS: usize = 100_000;

/// All eigenvalues, from a real Schur decomposition. The QR iteration can
/// stall when diagonal entries vanish, so a stalled run is retried on
/// `M + sI`.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let k = m.nrows();
    for shift in [0.0, 1.0 + m.norm()] {
        let a = m + DMatrix::identity(k, k) * shift;
        if let Some(schur) = a.try_schur(f64::EPSILON, SCHUR_ITERATIONS) {
            return Ok(schur.complex_eigenvalues().iter().map(|z| z - shift).collect());
        }
    }
    Err(Error::NoConvergence { iterations: SCHUR_ITERATIONS, last_iterate: Vec::new() })
}

/// ρ(M) of a nonnegative square matrix.
///
/// Power iteration is tried first. When the iterate loses positivity the
/// matrix is reducible, and each strongly connected class is treated on its
/// own.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    match shifted_power_iteration(m) {
        Ok((rho, _)) => Ok(rho.max(0.0)),
        // reducible: ρ is the largest ρ over the strongly connected classes
        Err(_) => {
            let mut rho: f64 = 0.0;
            for class in strong_components(m) {
                let sub = DMatrix::from_fn(class.len(), class.len(), |i, j| m[(class[i], class[j])]);
                let r = if class.len() == 1 {
                    sub[(0, 0)]
                } else {
                    match shifted_power_iteration(&sub) {
                        Ok((r, _)) => r.max(0.0),
                        Err(last) => schur_radius(&sub, last)?,
                    }
                };
                rho = rho.max(r);
            }
            Ok(rho)
        }
    }
}

fn schur_radius(m: &DMatrix<f64>, last: DVector<f64>) -> Result<f64> {
    let eig = eigenvalues(m).map_err(|_| Error::NoConvergence {
        iterations: POWER_ITERATION_CAP,
        last_iterate: last.iter().copied().collect(),
    })?;
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Strongly connected classes of the digraph `i -> j` iff `m_{i,j} > 0`.
fn strong_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let k = m.nrows();
    let mut reach: Vec<Vec<bool>> = (0..k).map(|i| (0..k).map(|j| i == j || m[(i, j)] > 0.0).collect()).collect();
    for via in 0..k {
        for i in 0..k {
            if reach[i][via] {
                for j in 0..k {
                    if reach[via][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; k];
    let mut out = Vec::new();
    for i in 0..k {
        if !seen[i] {
            let class: Vec<usize> = (0..k).filter(|&j| reach[i][j] && reach[j][i]).collect();
            for &j in &class {
                seen[j] = true;
            }
            out.push(class);
        }
    }
    out
}

/// Perron root and right eigenvector of an irreducible nonnegative matrix,
/// normalized so that its first coordinate is 1.
pub fn perron_vector(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    if !is_irreducible(m) {
        return Err(Error::Reducible);
    }
    let k = m.nrows();
    if k == 1 {
        return Ok((m[(0, 0)], DVector::from_element(1, 1.0)));
    }
    let (rho, x) = shifted_power_iteration(m).map_err(|last| Error::NoConvergence {
        iterations: POWER_ITERATION_CAP,
        last_iterate: last.iter().copied().collect(),
    })?;
    let x0 = x[0];
    Ok((rho, x / x0))
}

/// Strong connectivity of the digraph `i -> j` iff `m_{i,j} > 0`.
pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    let k = m.nrows();
    if k == 0 {
        return false;
    }
    let reaches_all = |transpose: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let edge = if transpose { m[(j, i)] } else { m[(i, j)] };
                if edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    // K = 1 needs a positive loop for M^p_{1,1} > 0
    if k == 1 {
        return m[(0, 0)] > 0.0;
    }
    reaches_all(false) && reaches_all(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(k: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(k, k, v)
    }

    #[test]
    fn examples() {
        assert!((spectral_radius(&mat(2, &[2.0, 0.0, 0.0, 3.0])).unwrap() - 3.0).abs() < 1e-12);
        assert!((spectral_radius(&mat(2, &[0.0, 1.0, 1.0, 0.0])).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_radius(&mat(2, &[0.5; 4])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        // reducible, nilpotent part
        let r = spectral_radius(&mat(2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn perron_vector_of_permutation() {
        let (rho, r) = perron_vector(&mat(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-12);
        assert!(matches!(perron_vector(&mat(2, &[1.0, 1.0, 0.0, 1.0])), Err(Error::Reducible)));
    }

    #[test]
    fn irreducibility() {
        assert!(is_irreducible(&mat(2, &[0.0, 1.0, 1.0, 0.0])));
        assert!(!is_irreducible(&mat(2, &[1.0, 1.0, 0.0, 1.0])));
        assert!(!is_irreducible(&mat(1, &[0.0])));
    }

    fn nonneg_matrix() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..=4).prop_flat_map(|k| {
            proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], k * k)
                .prop_map(move |v| DMatrix::from_row_slice(k, k, &v))
        })
    }

    proptest! {
        #[test]
        fn agrees_with_dense_eigenvalues(m in nonneg_matrix()) {
            let rho = spectral_radius(&m).unwrap();
            let dense = eigenvalues(&m).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max);
            // rounding moves eigenvalues of a defective k×k block by O(ε^{1/k})
            let slack = 1e-14f64.powf(1.0 / m.nrows() as f64) * m.norm();
            prop_assert!((rho - dense).abs() <= 1e-9 * dense.max(1.0) + slack, "{} vs {}", rho, dense);
        }

        #[test]
        fn permutation_invariant(m in nonneg_matrix(), seed in 0u64..1000) {
            let k = m.nrows();
            let mut perm: Vec<usize> = (0..k).collect();
            // deterministic shuffle from the seed
            let mut s = seed;
            for i in (1..k).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let p = DMatrix::from_fn(k, k, |i, j| m[(perm[i], perm[j])]);
            let a = spectral_radius(&m).unwrap();
            let b = spectral_radius(&p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn monotone_in_entries(m in nonneg_matrix(), idx in 0usize..16, bump in 0.0f64..1.0) {
            let k = m.nrows();
            let mut bigger = m.clone();
            bigger[(idx / 4 % k, idx % k)] += bump;
            let a = spectral_radius(&m).unwrap();
            let b = spectral_radius(&bigger).unwrap();
            prop_assert!(b >= a - 1e-10 * a.max(1.0), "{} < {}", b, a);
        }
    }
}
