use crate::{Error, Mat3, Result, Vec3};

const MAX_SWEEPS: usize = 50;
const CONVERGENCE: f64 = 1e-13;
const SYMMETRY_TOLERANCE: f64 = 1e-12;
const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Eigendecomposition of a symmetric 3x3 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig3 {
    /// Sorted in descending order.
    pub eigenvalues: [f64; 3],
    /// Column `i` is the unit eigenvector of `eigenvalues[i]`.
    pub eigenvectors: Mat3,
    /// Two eigenvalues coincide within `1e-9 · max(1, λ₁)`.
    pub degenerate: bool,
}

impl SymEig3 {
    pub fn eigenvector(&self, i: usize) -> Vec3 {
        self.eigenvectors.column(i).into_owned()
    }
}

/// Cyclic Jacobi eigensolver for symmetric 3x3 matrices.
///
/// Sweeps the (0,1), (0,2), (1,2) pivots in that order until the
/// off-diagonal Frobenius norm drops below `1e-13 · ‖A‖`, for at most 50
/// sweeps.
pub fn sym_eig3(a: &Mat3) -> Result<SymEig3> {
    let scale = a.norm();
    let asym = (a - a.transpose()).abs().max();
    if !asym.is_finite() || !scale.is_finite() {
        return Err(Error::NonFiniteValue("matrix entry".into()));
    }
    if asym > SYMMETRY_TOLERANCE * scale.max(1.0) {
        return Err(Error::NonSymmetric(asym));
    }

    let mut m = (a + a.transpose()) * 0.5;
    let mut v = Mat3::identity();
    for _ in 0..MAX_SWEEPS {
        let off = (2.0 * (m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2))).sqrt();
        if off == 0.0 || off < CONVERGENCE * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = m[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
            // Smaller root of t² + 2tθ - 1 = 0.
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut j = Mat3::identity();
            j[(p, p)] = c;
            j[(q, q)] = c;
            j[(p, q)] = s;
            j[(q, p)] = -s;
            m = j.transpose() * m * j;
            m[(p, q)] = 0.0;
            m[(q, p)] = 0.0;
            v *= j;
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let eigenvalues = order.map(|i| m[(i, i)]);
    let eigenvectors = Mat3::from_columns(&order.map(|i| v.column(i).normalize()));
    let tol = DEGENERACY_TOLERANCE * eigenvalues[0].max(1.0);
    let degenerate = (eigenvalues[0] - eigenvalues[1]).abs() <= tol
        || (eigenvalues[1] - eigenvalues[2]).abs() <= tol
        || (eigenvalues[0] - eigenvalues[2]).abs() <= tol;
    Ok(SymEig3 {
        eigenvalues,
        eigenvectors,
        degenerate,
    })
}
