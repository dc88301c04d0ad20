//! State representations for one and two qubits: Bloch vectors, the
//! 15-component generalized Bloch decomposition, and conversions to and from
//! density matrices in the Pauli product basis.

use nalgebra::{Complex, Matrix2, Matrix3, Matrix4, SymmetricEigen, Vector3};

use crate::{Error, EPS_TOL};

pub type C64 = Complex<f64>;

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Pauli matrix by index: 0 -> x, 1 -> y, 2 -> z.
pub fn pauli(i: usize) -> Matrix2<C64> {
    match i {
        0 => Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)),
        1 => Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
        2 => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)),
        _ => panic!("pauli index out of range: {i}"),
    }
}

/// Qubit level splitting `omega` and noise switching rate `gamma`, both in
/// units of the coupling (the Hamiltonian is omega*sigma_z + B(t)*sigma_x
/// with |B| ~ 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub omega: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(omega: f64, gamma: f64) -> Self {
        Self { omega, gamma }
    }
}

/// rho = (I + n . sigma) / 2.
pub fn density_from_bloch(n: &Vector3<f64>) -> Matrix2<C64> {
    Matrix2::new(
        c(0.5 * (1.0 + n.z), 0.0),
        c(0.5 * n.x, -0.5 * n.y),
        c(0.5 * n.x, 0.5 * n.y),
        c(0.5 * (1.0 - n.z), 0.0),
    )
}

pub fn bloch_from_density(rho: &Matrix2<C64>) -> Vector3<f64> {
    let off = rho[(0, 1)];
    Vector3::new(
        2.0 * off.re,
        -2.0 * off.im,
        rho[(0, 0)].re - rho[(1, 1)].re,
    )
}

/// Two-qubit state in the Pauli product basis: local Bloch vectors `a`, `b`
/// and the 3x3 correlation matrix `c` with c_ij = <sigma_i (x) sigma_j>.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitBloch {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub c: Matrix3<f64>,
}

impl TwoQubitBloch {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>, c: Matrix3<f64>) -> Self {
        Self { a, b, c }
    }

    /// Maximally mixed marginals with diagonal correlations (c1, c2, c3).
    pub fn bell_diagonal(coords: Vector3<f64>) -> Self {
        Self {
            a: Vector3::zeros(),
            b: Vector3::zeros(),
            c: Matrix3::from_diagonal(&coords),
        }
    }

    /// (|00> + |11>)/sqrt(2); correlations diag(1, -1, 1).
    pub fn bell_psi_plus() -> Self {
        Self::bell_diagonal(Vector3::new(1.0, -1.0, 1.0))
    }

    /// The singlet (|01> - |10>)/sqrt(2); correlations -I.
    pub fn bell_singlet() -> Self {
        Self::bell_diagonal(Vector3::new(-1.0, -1.0, -1.0))
    }

    /// p * singlet + (1 - p) * I/4.
    pub fn werner(p: f64) -> Self {
        Self::bell_diagonal(Vector3::new(-p, -p, -p))
    }

    /// rho = (I (x) I + a.sigma (x) I + I (x) b.sigma + sum c_ij sigma_i (x) sigma_j) / 4.
    pub fn to_density(&self) -> Matrix4<C64> {
        let id = Matrix2::identity();
        let mut rho = id.kronecker(&id);
        for i in 0..3 {
            rho += pauli(i).kronecker(&id) * c(self.a[i], 0.0);
            rho += id.kronecker(&pauli(i)) * c(self.b[i], 0.0);
            for j in 0..3 {
                rho += pauli(i).kronecker(&pauli(j)) * c(self.c[(i, j)], 0.0);
            }
        }
        rho * c(0.25, 0.0)
    }

    pub fn from_density(rho: &Matrix4<C64>) -> Self {
        let id = Matrix2::identity();
        let mut out = Self::new(Vector3::zeros(), Vector3::zeros(), Matrix3::zeros());
        for i in 0..3 {
            out.a[i] = (rho * pauli(i).kronecker(&id)).trace().re;
            out.b[i] = (rho * id.kronecker(&pauli(i))).trace().re;
            for j in 0..3 {
                out.c[(i, j)] = (rho * pauli(i).kronecker(&pauli(j))).trace().re;
            }
        }
        out
    }
}

/// Transpose of the second tensor factor.
pub fn partial_transpose(rho: &Matrix4<C64>) -> Matrix4<C64> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + l, 2 * j + k)] = rho[(2 * i + k, 2 * j + l)];
                }
            }
        }
    }
    out
}

/// Reduced state of the first qubit.
pub fn partial_trace_b(rho: &Matrix4<C64>) -> Matrix2<C64> {
    let mut out = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            out[(i, j)] = rho[(2 * i, 2 * j)] + rho[(2 * i + 1, 2 * j + 1)];
        }
    }
    out
}

/// Reduced state of the second qubit.
pub fn partial_trace_a(rho: &Matrix4<C64>) -> Matrix2<C64> {
    let mut out = Matrix2::zeros();
    for k in 0..2 {
        for l in 0..2 {
            out[(k, l)] = rho[(k, l)] + rho[(2 + k, 2 + l)];
        }
    }
    out
}

fn hermiticity_defect<const D: usize>(m: &nalgebra::SMatrix<C64, D, D>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..D {
        for j in 0..D {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_density<const D: usize>(m: &nalgebra::SMatrix<C64, D, D>) -> Result<(), Error>
where
    nalgebra::Const<D>: nalgebra::DimSub<nalgebra::U1>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<nalgebra::Const<D>>
        + nalgebra::allocator::Allocator<nalgebra::Const<D>, nalgebra::Const<D>>
        + nalgebra::allocator::Allocator<nalgebra::DimDiff<nalgebra::Const<D>, nalgebra::U1>>,
{
    let herm = hermiticity_defect(m);
    if herm > EPS_TOL {
        return Err(Error::NonPhysical(format!("hermiticity defect {herm:.3e}")));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > EPS_TOL || tr.im.abs() > EPS_TOL {
        return Err(Error::NonPhysical(format!("trace {tr} != 1")));
    }
    let sym = nalgebra::OMatrix::from_fn_generic(
        nalgebra::Const::<D>,
        nalgebra::Const::<D>,
        |i, j| (m[(i, j)] + m[(j, i)].conj()) * c(0.5, 0.0),
    );
    let eigs = SymmetricEigen::new(sym).eigenvalues;
    let min = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min < -EPS_TOL {
        return Err(Error::NonPhysical(format!("negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

pub fn check_density2(rho: &Matrix2<C64>) -> Result<(), Error> {
    check_density(rho)
}

pub fn check_density4(rho: &Matrix4<C64>) -> Result<(), Error> {
    check_density(rho)
}

/// Diagonalize a symmetric correlation matrix by a pair of local rotations:
/// returns (coords, ra, rb) with ra^T * c * rb = diag(coords), ra = rb in
/// SO(3), coords sorted descending. Signed eigenvalues are the tetrahedron
/// coordinates of the state.
pub fn diagonalize_correlation(
    corr: &Matrix3<f64>,
) -> Result<(Vector3<f64>, Matrix3<f64>, Matrix3<f64>), Error> {
    diagonalize_correlation_tracking(corr, None)
}

/// Same as [`diagonalize_correlation`] but, when `prev` is given, orders the
/// coordinates by minimal distance to the previous step instead of
/// descending; keeps trajectories through the tetrahedron continuous.
pub fn diagonalize_correlation_tracking(
    corr: &Matrix3<f64>,
    prev: Option<&Vector3<f64>>,
) -> Result<(Vector3<f64>, Matrix3<f64>, Matrix3<f64>), Error> {
    let defect = (corr - corr.transpose()).abs().max();
    if defect > 1e-9 {
        return Err(Error::AsymmetricCorrelation(defect));
    }
    let sym = (corr + corr.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order = [0usize, 1, 2];
    match prev {
        None => order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .unwrap()
        }),
        Some(p) => {
            let perms = [
                [0, 1, 2],
                [0, 2, 1],
                [1, 0, 2],
                [1, 2, 0],
                [2, 0, 1],
                [2, 1, 0],
            ];
            let dist = |perm: &[usize; 3]| -> f64 {
                (0..3)
                    .map(|k| (eig.eigenvalues[perm[k]] - p[k]).powi(2))
                    .sum()
            };
            order = *perms
                .iter()
                .min_by(|x, y| dist(x).partial_cmp(&dist(y)).unwrap())
                .unwrap();
        }
    }

    let coords = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let mut rot = Matrix3::zeros();
    for (col, &src) in order.iter().enumerate() {
        rot.set_column(col, &eig.eigenvectors.column(src));
    }
    if rot.determinant() < 0.0 {
        // flipping one column keeps r^T C r diagonal and lands in SO(3)
        let flipped = -rot.column(2);
        rot.set_column(2, &flipped);
    }
    Ok((coords, rot, rot))
}
