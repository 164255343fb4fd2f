//! Small fixed-size tensor kit for 3x3 kinematics.
//!
//! Conventions used across the crate:
//!
//! * [`Mat3`] stores 9 entries row-major: `e[3*i + j]` is row `i`, col `j`.
//! * [`SymMat3`] stores the upper triangle as `[xx, xy, xz, yy, yz, zz]`.
//! * [`SymEigen`] returns eigenvalues in descending order with the matching
//!   orthonormal eigenvectors as *columns* of a `Mat3`.
//!
//! The symmetric eigensolver is analytic (trigonometric solution of the
//! characteristic cubic, eigenvectors from cross products of the rows of
//! `A - lambda I`) followed by a short Jacobi polish sweep, which restores
//! full orthonormality and squeezes the reconstruction residual to a few
//! ulps even for clustered spectra. All matrix functions of SPD matrices
//! (inverse square root, square root) go through this eigendecomposition;
//! there is no Denman-Beavers or scaling iteration anywhere, so every
//! consumer sees the exact same spectral decision about positivity.

use thiserror::Error;

/// Plain 3-vector; free helper functions below avoid a newtype.
pub type Vec3 = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    /// The matrix failed the SPD gate: its smallest eigenvalue does not
    /// clear the trace-scaled tolerance used by all SPD matrix functions.
    #[error("matrix not symmetric positive definite: min eigenvalue {min_eig:.6e} <= eps {eps:.6e}")]
    NotSpd { min_eig: f64, eps: f64 },
}

pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm2_3(a: &Vec3) -> f64 {
    dot3(a, a)
}

pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize3(a: &Vec3) -> Vec3 {
    let n = norm2_3(a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

// =====================================================================
// Mat3
// =====================================================================

/// Dense 3x3 matrix, row-major storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub e: [f64; 9],
}

impl Mat3 {
    pub const fn new(e: [f64; 9]) -> Self {
        Mat3 { e }
    }

    pub const fn zero() -> Self {
        Mat3 { e: [0.0; 9] }
    }

    pub const fn identity() -> Self {
        Mat3 {
            e: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Mat3 {
            e: [a, 0.0, 0.0, 0.0, b, 0.0, 0.0, 0.0, c],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.e[3 * i + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.e[3 * i + j] = v;
    }

    pub fn row(&self, i: usize) -> Vec3 {
        [self.e[3 * i], self.e[3 * i + 1], self.e[3 * i + 2]]
    }

    pub fn col(&self, j: usize) -> Vec3 {
        [self.e[j], self.e[3 + j], self.e[6 + j]]
    }

    pub fn transpose(&self) -> Mat3 {
        let e = &self.e;
        Mat3::new([e[0], e[3], e[6], e[1], e[4], e[7], e[2], e[5], e[8]])
    }

    pub fn mul(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += self.e[3 * i + k] * rhs.e[3 * k + j];
                }
                out[3 * i + j] = s;
            }
        }
        Mat3::new(out)
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        [
            dot3(&self.row(0), v),
            dot3(&self.row(1), v),
            dot3(&self.row(2), v),
        ]
    }

    pub fn add(&self, rhs: &Mat3) -> Mat3 {
        let mut out = self.e;
        for (o, r) in out.iter_mut().zip(rhs.e.iter()) {
            *o += r;
        }
        Mat3::new(out)
    }

    pub fn sub(&self, rhs: &Mat3) -> Mat3 {
        let mut out = self.e;
        for (o, r) in out.iter_mut().zip(rhs.e.iter()) {
            *o -= r;
        }
        Mat3::new(out)
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = self.e;
        for o in out.iter_mut() {
            *o *= s;
        }
        Mat3::new(out)
    }

    pub fn trace(&self) -> f64 {
        self.e[0] + self.e[4] + self.e[8]
    }

    pub fn det(&self) -> f64 {
        let e = &self.e;
        e[0] * (e[4] * e[8] - e[5] * e[7]) - e[1] * (e[3] * e[8] - e[5] * e[6])
            + e[2] * (e[3] * e[7] - e[4] * e[6])
    }

    /// Cofactor matrix: `Cof(A)[i][j]` is the signed minor of entry (i,j),
    /// so `A^T Cof(A) = det(A) I` and `Cof(A)^T = det(A) A^{-1}` when A is
    /// invertible.
    pub fn cofactor(&self) -> Mat3 {
        let e = &self.e;
        Mat3::new([
            e[4] * e[8] - e[5] * e[7],
            -(e[3] * e[8] - e[5] * e[6]),
            e[3] * e[7] - e[4] * e[6],
            -(e[1] * e[8] - e[2] * e[7]),
            e[0] * e[8] - e[2] * e[6],
            -(e[0] * e[7] - e[1] * e[6]),
            e[1] * e[5] - e[2] * e[4],
            -(e[0] * e[5] - e[2] * e[3]),
            e[0] * e[4] - e[1] * e[3],
        ])
    }

    /// Adjugate-based inverse; `None` when the determinant is zero or not
    /// finite. Callers that need a tolerance (e.g. |det F| cutoffs) test
    /// the determinant themselves before calling.
    pub fn try_inverse(&self) -> Option<Mat3> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.cofactor().transpose().scale(1.0 / d))
    }

    /// Squared Frobenius norm.
    pub fn frob2(&self) -> f64 {
        self.e.iter().map(|x| x * x).sum()
    }

    pub fn frob(&self) -> f64 {
        self.frob2().sqrt()
    }

    /// Frobenius inner product `A : B`.
    pub fn frob_inner(&self, rhs: &Mat3) -> f64 {
        self.e.iter().zip(rhs.e.iter()).map(|(a, b)| a * b).sum()
    }

    /// `A A^T`, returned in symmetric storage (exact symmetry).
    pub fn gram(&self) -> SymMat3 {
        let r0 = self.row(0);
        let r1 = self.row(1);
        let r2 = self.row(2);
        SymMat3 {
            e: [
                dot3(&r0, &r0),
                dot3(&r0, &r1),
                dot3(&r0, &r2),
                dot3(&r1, &r1),
                dot3(&r1, &r2),
                dot3(&r2, &r2),
            ],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.e.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Matrix exponential via scaling-and-squaring with a Taylor series
    /// on the scaled matrix. Accurate to machine precision for the modest
    /// norms used here (used by the cofactor-kinematics diagnostic).
    pub fn exp(&self) -> Mat3 {
        let norm = self.max_abs() * 3.0;
        let s = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let b = self.scale(0.5_f64.powi(s));
        let mut term = Mat3::identity();
        let mut sum = Mat3::identity();
        for k in 1..=24 {
            term = term.mul(&b).scale(1.0 / k as f64);
            sum = sum.add(&term);
            if term.max_abs() < 1e-18 * sum.max_abs() {
                break;
            }
        }
        let mut out = sum;
        for _ in 0..s {
            out = out.mul(&out);
        }
        out
    }
}

// =====================================================================
// SymMat3
// =====================================================================

/// Symmetric 3x3 matrix, upper-triangle storage `[xx, xy, xz, yy, yz, zz]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMat3 {
    pub e: [f64; 6],
}

/// Map (row, col) to the index in upper-triangle storage.
#[inline]
pub fn sym_index(i: usize, j: usize) -> usize {
    const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
    IDX[i][j]
}

impl SymMat3 {
    pub const fn new(e: [f64; 6]) -> Self {
        SymMat3 { e }
    }

    pub const fn zero() -> Self {
        SymMat3 { e: [0.0; 6] }
    }

    pub const fn identity() -> Self {
        SymMat3 {
            e: [1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        SymMat3 {
            e: [a, 0.0, 0.0, b, 0.0, c],
        }
    }

    pub fn scaled_identity(s: f64) -> Self {
        Self::diag(s, s, s)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.e[sym_index(i, j)]
    }

    pub fn to_mat3(&self) -> Mat3 {
        let [xx, xy, xz, yy, yz, zz] = self.e;
        Mat3::new([xx, xy, xz, xy, yy, yz, xz, yz, zz])
    }

    /// Symmetric part of a general matrix: `(M + M^T)/2`.
    pub fn from_mat3_symmetrized(m: &Mat3) -> SymMat3 {
        let e = &m.e;
        SymMat3::new([
            e[0],
            0.5 * (e[1] + e[3]),
            0.5 * (e[2] + e[6]),
            e[4],
            0.5 * (e[5] + e[7]),
            e[8],
        ])
    }

    pub fn add(&self, rhs: &SymMat3) -> SymMat3 {
        let mut out = self.e;
        for (o, r) in out.iter_mut().zip(rhs.e.iter()) {
            *o += r;
        }
        SymMat3::new(out)
    }

    pub fn sub(&self, rhs: &SymMat3) -> SymMat3 {
        let mut out = self.e;
        for (o, r) in out.iter_mut().zip(rhs.e.iter()) {
            *o -= r;
        }
        SymMat3::new(out)
    }

    pub fn scale(&self, s: f64) -> SymMat3 {
        let mut out = self.e;
        for o in out.iter_mut() {
            *o *= s;
        }
        SymMat3::new(out)
    }

    pub fn trace(&self) -> f64 {
        self.e[0] + self.e[3] + self.e[5]
    }

    pub fn det(&self) -> f64 {
        let [xx, xy, xz, yy, yz, zz] = self.e;
        xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz)
    }

    /// Squared Frobenius norm (off-diagonal entries count twice).
    pub fn frob2(&self) -> f64 {
        let [xx, xy, xz, yy, yz, zz] = self.e;
        xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz)
    }

    pub fn frob(&self) -> f64 {
        self.frob2().sqrt()
    }

    /// Frobenius inner product `A : B` of two symmetric matrices.
    pub fn frob_inner(&self, rhs: &SymMat3) -> f64 {
        let a = &self.e;
        let b = &rhs.e;
        a[0] * b[0] + a[3] * b[3] + a[5] * b[5] + 2.0 * (a[1] * b[1] + a[2] * b[2] + a[4] * b[4])
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        let [xx, xy, xz, yy, yz, zz] = self.e;
        [
            xx * v[0] + xy * v[1] + xz * v[2],
            xy * v[0] + yy * v[1] + yz * v[2],
            xz * v[0] + yz * v[1] + zz * v[2],
        ]
    }

    /// Congruence transform `F S F^T`, computed entry-wise in symmetric
    /// storage so the result is symmetric by construction.
    pub fn congruence(&self, f: &Mat3) -> SymMat3 {
        let sf = self.to_mat3().mul(&f.transpose()); // S F^T
        let mut out = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                out[sym_index(i, j)] = dot3(&f.row(i), &sf.col(j));
            }
        }
        SymMat3::new(out)
    }

    /// SPD tolerance, scaled by the trace: `1e-12 * (1 + tr)`. A matrix
    /// whose smallest eigenvalue does not exceed this is rejected by the
    /// SPD matrix functions. (For any matrix with non-positive trace the
    /// smallest eigenvalue is `<= tr/3`, which always falls below this
    /// threshold, so the formula needs no absolute value.)
    pub fn spd_eps(&self) -> f64 {
        1e-12 * (1.0 + self.trace())
    }

    pub fn sym_eigen(&self) -> SymEigen {
        sym_eigen(self)
    }

    pub fn min_eig(&self) -> f64 {
        self.sym_eigen().vals[2]
    }

    pub fn is_spd(&self) -> bool {
        self.min_eig() > self.spd_eps()
    }

    /// Apply a scalar function to the spectrum: `V f(D) V^T`. Fails with
    /// [`TensorError::NotSpd`] when the smallest eigenvalue does not clear
    /// [`SymMat3::spd_eps`]. Used for SPD square roots and inverse roots.
    fn spd_map(&self, f: impl Fn(f64) -> f64) -> Result<SymMat3, TensorError> {
        let eig = self.sym_eigen();
        let eps = self.spd_eps();
        if !(eig.vals[2] > eps) {
            return Err(TensorError::NotSpd {
                min_eig: eig.vals[2],
                eps,
            });
        }
        Ok(eig.recompose(f(eig.vals[0]), f(eig.vals[1]), f(eig.vals[2])))
    }

    pub fn spd_sqrt(&self) -> Result<SymMat3, TensorError> {
        self.spd_map(f64::sqrt)
    }

    pub fn spd_inv_sqrt(&self) -> Result<SymMat3, TensorError> {
        self.spd_map(|l| 1.0 / l.sqrt())
    }

    pub fn spd_inverse(&self) -> Result<SymMat3, TensorError> {
        self.spd_map(|l| 1.0 / l)
    }

    /// Square root and inverse square root from a single eigendecomposition.
    pub fn spd_sqrt_pair(&self) -> Result<(SymMat3, SymMat3), TensorError> {
        let eig = self.sym_eigen();
        let eps = self.spd_eps();
        if !(eig.vals[2] > eps) {
            return Err(TensorError::NotSpd {
                min_eig: eig.vals[2],
                eps,
            });
        }
        let r = [eig.vals[0].sqrt(), eig.vals[1].sqrt(), eig.vals[2].sqrt()];
        Ok((
            eig.recompose(r[0], r[1], r[2]),
            eig.recompose(1.0 / r[0], 1.0 / r[1], 1.0 / r[2]),
        ))
    }
}

// =====================================================================
// Symmetric eigendecomposition
// =====================================================================

/// Result of [`SymMat3::sym_eigen`]: `vals` descending, eigenvector `k`
/// in column `k` of `vecs`.
#[derive(Debug, Clone, Copy)]
pub struct SymEigen {
    pub vals: [f64; 3],
    pub vecs: Mat3,
}

impl SymEigen {
    /// Rebuild `V diag(a,b,c) V^T` in symmetric storage.
    pub fn recompose(&self, a: f64, b: f64, c: f64) -> SymMat3 {
        let v = &self.vecs;
        let d = [a, b, c];
        let mut out = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += d[k] * v.get(i, k) * v.get(j, k);
                }
                out[sym_index(i, j)] = s;
            }
        }
        SymMat3::new(out)
    }
}

/// Null-space direction of a (near) rank-2 symmetric matrix via the
/// largest cross product of its rows. Falls back to a vector orthogonal to
/// the dominant row for (near) rank-1 input; the Jacobi polish cleans up
/// whatever small error remains.
fn null_direction(m: &[[f64; 3]; 3]) -> Vec3 {
    let c01 = cross3(&m[0], &m[1]);
    let c02 = cross3(&m[0], &m[2]);
    let c12 = cross3(&m[1], &m[2]);
    let n01 = norm2_3(&c01);
    let n02 = norm2_3(&c02);
    let n12 = norm2_3(&c12);
    let (best, nbest) = if n01 >= n02 && n01 >= n12 {
        (c01, n01)
    } else if n02 >= n12 {
        (c02, n02)
    } else {
        (c12, n12)
    };
    let row_scale = m.iter().flatten().fold(0.0_f64, |a, x| a.max(x.abs()));
    if nbest > (1e-14 * (1.0 + row_scale)).powi(2) {
        return normalize3(&best);
    }
    // Rank <= 1: any direction orthogonal to the largest row works.
    let r = *m
        .iter()
        .max_by(|a, b| norm2_3(a).total_cmp(&norm2_3(b)))
        .unwrap();
    if norm2_3(&r) == 0.0 {
        return [1.0, 0.0, 0.0];
    }
    // Cross with the coordinate axis most orthogonal to r.
    let k = if r[0].abs() <= r[1].abs() && r[0].abs() <= r[2].abs() {
        [1.0, 0.0, 0.0]
    } else if r[1].abs() <= r[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    normalize3(&cross3(&r, &k))
}

/// Any unit vector orthogonal to the given unit vector.
fn any_unit_orthogonal(v: &Vec3) -> Vec3 {
    let axis = if v[0].abs() <= v[1].abs() && v[0].abs() <= v[2].abs() {
        [1.0, 0.0, 0.0]
    } else if v[1].abs() <= v[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    normalize3(&cross3(v, &axis))
}

/// One cyclic Jacobi sweep on `a` (full 3x3, kept exactly symmetric),
/// accumulating the rotations into the columns of `v`.
fn jacobi_sweep(a: &mut [[f64; 3]; 3], v: &mut [[f64; 3]; 3]) {
    for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
        let apq = a[p][q];
        if apq == 0.0 {
            continue;
        }
        let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
        let t = if tau >= 0.0 {
            1.0 / (tau + (1.0 + tau * tau).sqrt())
        } else {
            -1.0 / (-tau + (1.0 + tau * tau).sqrt())
        };
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = t * c;
        let app = a[p][p];
        let aqq = a[q][q];
        a[p][p] = app - t * apq;
        a[q][q] = aqq + t * apq;
        a[p][q] = 0.0;
        a[q][p] = 0.0;
        let r = 3 - p - q; // the untouched index
        let arp = a[r][p];
        let arq = a[r][q];
        a[r][p] = c * arp - s * arq;
        a[p][r] = a[r][p];
        a[r][q] = s * arp + c * arq;
        a[q][r] = a[r][q];
        for row in v.iter_mut() {
            let vp = row[p];
            let vq = row[q];
            row[p] = c * vp - s * vq;
            row[q] = s * vp + c * vq;
        }
    }
}

fn off_diag2(a: &[[f64; 3]; 3]) -> f64 {
    2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2])
}

fn sym_eigen(s: &SymMat3) -> SymEigen {
    let full = s.to_mat3();
    let scale = full.max_abs();
    if scale == 0.0 || !scale.is_finite() {
        return SymEigen {
            vals: [0.0; 3],
            vecs: Mat3::identity(),
        };
    }
    let inv = 1.0 / scale;
    let b = [
        [s.e[0] * inv, s.e[1] * inv, s.e[2] * inv],
        [s.e[1] * inv, s.e[3] * inv, s.e[4] * inv],
        [s.e[2] * inv, s.e[4] * inv, s.e[5] * inv],
    ];

    // Analytic eigenvalues (trigonometric solution of the characteristic
    // cubic of the scaled matrix).
    let q = (b[0][0] + b[1][1] + b[2][2]) / 3.0;
    let p1 = b[0][1] * b[0][1] + b[0][2] * b[0][2] + b[1][2] * b[1][2];
    let dd = [b[0][0] - q, b[1][1] - q, b[2][2] - q];
    let p2 = dd[0] * dd[0] + dd[1] * dd[1] + dd[2] * dd[2] + 2.0 * p1;

    let mut v = if p2 <= 1e-28 {
        // Numerically a multiple of the identity.
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    } else {
        let p = (p2 / 6.0).sqrt();
        let det_bq = {
            let m = Mat3::new([
                dd[0], b[0][1], b[0][2], b[0][1], dd[1], b[1][2], b[0][2], b[1][2], dd[2],
            ]);
            m.det()
        };
        let r = (det_bq / (2.0 * p * p * p)).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let l_hi = q + 2.0 * p * phi.cos();
        let l_lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        let l_mid = 3.0 * q - l_hi - l_lo;

        // Eigenvector of the best-isolated extreme eigenvalue first.
        let shifted = |l: f64| {
            [
                [b[0][0] - l, b[0][1], b[0][2]],
                [b[0][1], b[1][1] - l, b[1][2]],
                [b[0][2], b[1][2], b[2][2] - l],
            ]
        };
        let hi_isolated = (l_hi - l_mid) >= (l_mid - l_lo);
        let (l_first, l_second) = if hi_isolated { (l_hi, l_lo) } else { (l_lo, l_hi) };
        let v_first = null_direction(&shifted(l_first));
        let w = null_direction(&shifted(l_second));
        // Orthogonalize the second vector against the first.
        let proj = dot3(&w, &v_first);
        let raw = [
            w[0] - proj * v_first[0],
            w[1] - proj * v_first[1],
            w[2] - proj * v_first[2],
        ];
        let v_second = if norm2_3(&raw) < 1e-12 {
            any_unit_orthogonal(&v_first)
        } else {
            normalize3(&raw)
        };
        let v_third = cross3(&v_first, &v_second);
        // Columns ordered hi, mid, lo (polish + final sort fix any residue).
        let (vh, vm, vl) = if hi_isolated {
            (v_first, v_third, v_second)
        } else {
            (v_second, v_third, v_first)
        };
        [
            [vh[0], vm[0], vl[0]],
            [vh[1], vm[1], vl[1]],
            [vh[2], vm[2], vl[2]],
        ]
    };

    // Jacobi polish: rotate A into the analytic eigenbasis and kill the
    // remaining off-diagonal mass (at most two sweeps; one is typical).
    let vm = Mat3::new([
        v[0][0], v[0][1], v[0][2], v[1][0], v[1][1], v[1][2], v[2][0], v[2][1], v[2][2],
    ]);
    let bt = vm.transpose().mul(&Mat3::new([
        b[0][0], b[0][1], b[0][2], b[1][0], b[1][1], b[1][2], b[2][0], b[2][1], b[2][2],
    ]))
    .mul(&vm);
    let mut a = [
        [bt.get(0, 0), 0.5 * (bt.get(0, 1) + bt.get(1, 0)), 0.5 * (bt.get(0, 2) + bt.get(2, 0))],
        [0.0, bt.get(1, 1), 0.5 * (bt.get(1, 2) + bt.get(2, 1))],
        [0.0, 0.0, bt.get(2, 2)],
    ];
    a[1][0] = a[0][1];
    a[2][0] = a[0][2];
    a[2][1] = a[1][2];
    for _ in 0..2 {
        if off_diag2(&a) <= 1e-30 {
            break;
        }
        jacobi_sweep(&mut a, &mut v);
    }

    // Sort descending, permuting columns along.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let vals = [
        a[order[0]][order[0]] * scale,
        a[order[1]][order[1]] * scale,
        a[order[2]][order[2]] * scale,
    ];
    let vecs = Mat3::new([
        v[0][order[0]], v[0][order[1]], v[0][order[2]],
        v[1][order[0]], v[1][order[1]], v[1][order[2]],
        v[2][order[0]], v[2][order[1]], v[2][order[2]],
    ]);
    SymEigen { vals, vecs }
}

// =====================================================================
// Tests
// =====================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_mat(rng: &mut ChaCha8Rng, scale: f64) -> Mat3 {
        let mut e = [0.0; 9];
        for x in e.iter_mut() {
            *x = scale * (rng.gen::<f64>() * 2.0 - 1.0);
        }
        Mat3::new(e)
    }

    fn random_sym(rng: &mut ChaCha8Rng, scale: f64) -> SymMat3 {
        let mut e = [0.0; 6];
        for x in e.iter_mut() {
            *x = scale * (rng.gen::<f64>() * 2.0 - 1.0);
        }
        SymMat3::new(e)
    }

    /// Determinant by the raw Leibniz permutation sum; the independent
    /// oracle for `Mat3::det`.
    fn det_leibniz(m: &Mat3) -> f64 {
        const PERMS: [([usize; 3], f64); 6] = [
            ([0, 1, 2], 1.0),
            ([1, 2, 0], 1.0),
            ([2, 0, 1], 1.0),
            ([0, 2, 1], -1.0),
            ([1, 0, 2], -1.0),
            ([2, 1, 0], -1.0),
        ];
        PERMS
            .iter()
            .map(|(p, s)| s * m.get(0, p[0]) * m.get(1, p[1]) * m.get(2, p[2]))
            .sum()
    }

    #[test]
    fn det_matches_leibniz_oracle() {
        let mut r = rng(11);
        for _ in 0..200 {
            let m = random_mat(&mut r, 3.0);
            let d = m.det();
            let o = det_leibniz(&m);
            assert!(
                (d - o).abs() <= 1e-13 * (1.0 + o.abs()),
                "det {d} vs Leibniz {o}"
            );
        }
    }

    #[test]
    fn cofactor_transpose_times_matrix_is_det_identity() {
        let mut r = rng(12);
        for _ in 0..100 {
            let m = random_mat(&mut r, 2.0);
            let d = m.det();
            let prod = m.cofactor().transpose().mul(&m);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { d } else { 0.0 };
                    assert!(
                        (prod.get(i, j) - want).abs() <= 1e-12 * (1.0 + d.abs()),
                        "Cof^T A != det * I at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn cofactor_determinant_is_square_of_determinant_exactly_on_integers() {
        let mut r = rng(13);
        for _ in 0..100 {
            let mut e = [0.0; 9];
            for x in e.iter_mut() {
                *x = r.gen_range(-4i32..=4) as f64;
            }
            let m = Mat3::new(e);
            // Integer inputs in this range stay exact in f64 arithmetic.
            assert_eq!(m.cofactor().det(), m.det() * m.det());
        }
    }

    #[test]
    fn inverse_round_trip() {
        let mut r = rng(14);
        let mut tried = 0;
        while tried < 100 {
            let m = random_mat(&mut r, 2.0);
            if m.det().abs() < 0.1 {
                continue;
            }
            tried += 1;
            let inv = m.try_inverse().expect("well-conditioned matrix");
            let prod = m.mul(&inv);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((prod.get(i, j) - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn congruence_matches_explicit_triple_product() {
        let mut r = rng(15);
        for _ in 0..100 {
            let s = random_sym(&mut r, 2.0);
            let f = random_mat(&mut r, 2.0);
            let fast = s.congruence(&f);
            let slow = f.mul(&s.to_mat3()).mul(&f.transpose());
            for i in 0..3 {
                for j in 0..3 {
                    assert!((fast.get(i, j) - slow.get(i, j)).abs() < 1e-12 * (1.0 + slow.max_abs()));
                }
            }
        }
    }

    fn assert_eigen_quality(s: &SymMat3, tol: f64) {
        let eig = s.sym_eigen();
        assert!(
            eig.vals[0] >= eig.vals[1] && eig.vals[1] >= eig.vals[2],
            "eigenvalues not sorted: {:?}",
            eig.vals
        );
        // Orthonormal columns.
        let v = eig.vecs;
        let vtv = v.transpose().mul(&v);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (vtv.get(i, j) - want).abs() < 1e-13,
                    "V^T V not identity at ({i},{j}): {}",
                    vtv.get(i, j)
                );
            }
        }
        // Reconstruction.
        let rec = eig.recompose(eig.vals[0], eig.vals[1], eig.vals[2]);
        let scale = s.to_mat3().max_abs().max(1.0);
        for k in 0..6 {
            assert!(
                (rec.e[k] - s.e[k]).abs() < tol * scale,
                "reconstruction residual too large at {k}: {} vs {}",
                rec.e[k],
                s.e[k]
            );
        }
    }

    #[test]
    fn eigen_reconstructs_random_symmetric_matrices() {
        let mut r = rng(16);
        for _ in 0..500 {
            let s = random_sym(&mut r, 5.0);
            assert_eigen_quality(&s, 1e-13);
        }
    }

    #[test]
    fn eigen_handles_degenerate_spectra() {
        // Exactly repeated eigenvalues in various bases.
        let cases = vec![
            SymMat3::scaled_identity(3.0),
            SymMat3::diag(2.0, 2.0, 5.0),
            SymMat3::diag(5.0, 2.0, 2.0),
            SymMat3::diag(1e-8, 1e-8, 1.0),
            SymMat3::zero(),
        ];
        let mut r = rng(17);
        for s in cases {
            assert_eigen_quality(&s, 1e-13);
            // Same spectrum conjugated into a random orthonormal basis.
            let g = random_mat(&mut r, 1.0);
            let q = orthonormalize(&g);
            let rotated = s.congruence(&q);
            assert_eigen_quality(&rotated, 1e-12);
        }
    }

    #[test]
    fn eigen_handles_tiny_and_huge_scales() {
        let mut r = rng(18);
        for &scale in &[1e-18, 1e-9, 1.0, 1e9, 1e18] {
            for _ in 0..20 {
                let s = random_sym(&mut r, scale);
                assert_eigen_quality(&s, 1e-12);
            }
        }
    }

    fn orthonormalize(m: &Mat3) -> Mat3 {
        // Gram-Schmidt on columns; test helper only.
        let c0 = normalize3(&m.col(0));
        let c1r = m.col(1);
        let p = dot3(&c1r, &c0);
        let c1 = normalize3(&[c1r[0] - p * c0[0], c1r[1] - p * c0[1], c1r[2] - p * c0[2]]);
        let c2 = cross3(&c0, &c1);
        Mat3::new([
            c0[0], c1[0], c2[0],
            c0[1], c1[1], c2[1],
            c0[2], c1[2], c2[2],
        ])
    }

    #[test]
    fn spd_inv_sqrt_squares_back_to_inverse() {
        let mut r = rng(19);
        for _ in 0..100 {
            // Build SPD as G G^T + small ridge.
            let g = random_mat(&mut r, 1.5);
            let spd = g.gram().add(&SymMat3::scaled_identity(0.05));
            let is = spd.spd_inv_sqrt().expect("SPD by construction");
            let prod = is.to_mat3().mul(&is.to_mat3()).mul(&spd.to_mat3());
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (prod.get(i, j) - want).abs() < 1e-9,
                        "S^-1/2 S^-1/2 S != I at ({i},{j})"
                    );
                }
            }
            let (sq, isq) = spd.spd_sqrt_pair().unwrap();
            let back = sq.to_mat3().mul(&sq.to_mat3());
            for k in 0..9 {
                assert!((back.e[k] - spd.to_mat3().e[k]).abs() < 1e-10 * (1.0 + spd.to_mat3().max_abs()));
            }
            let ident = sq.to_mat3().mul(&isq.to_mat3());
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ident.get(i, j) - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn spd_map_rejects_indefinite_matrices() {
        let not_spd = SymMat3::diag(1.0, -0.5, 2.0);
        match not_spd.spd_inv_sqrt() {
            Err(TensorError::NotSpd { min_eig, .. }) => {
                assert!((min_eig + 0.5).abs() < 1e-12);
            }
            other => panic!("expected NotSpd, got {other:?}"),
        }
        // Barely positive but below the trace-scaled eps must also fail.
        let nearly = SymMat3::diag(1.0, 1e-15, 1.0);
        assert!(nearly.spd_inv_sqrt().is_err());
        assert!(!nearly.is_spd());
    }

    #[test]
    fn matrix_exponential_matches_series_and_inverse_identity() {
        let mut r = rng(20);
        for _ in 0..50 {
            let a = random_mat(&mut r, 0.8);
            let e = a.exp();
            let eneg = a.scale(-1.0).exp();
            let prod = e.mul(&eneg);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (prod.get(i, j) - want).abs() < 1e-12,
                        "exp(A) exp(-A) != I"
                    );
                }
            }
            // det(exp A) = exp(tr A)
            assert!((e.det() - a.trace().exp()).abs() < 1e-11 * a.trace().exp().max(1.0));
        }
    }

    #[test]
    fn gram_is_a_a_transpose() {
        let mut r = rng(21);
        for _ in 0..50 {
            let a = random_mat(&mut r, 2.0);
            let g = a.gram();
            let slow = a.mul(&a.transpose());
            for i in 0..3 {
                for j in 0..3 {
                    assert!((g.get(i, j) - slow.get(i, j)).abs() < 1e-13 * (1.0 + slow.max_abs()));
                }
            }
        }
    }

    #[test]
    fn frobenius_inner_products_agree_between_storages() {
        let mut r = rng(22);
        for _ in 0..50 {
            let a = random_sym(&mut r, 2.0);
            let b = random_sym(&mut r, 2.0);
            let fast = a.frob_inner(&b);
            let slow = a.to_mat3().frob_inner(&b.to_mat3());
            assert!((fast - slow).abs() < 1e-12 * (1.0 + slow.abs()));
            assert!((a.frob2() - a.to_mat3().frob2()).abs() < 1e-12 * (1.0 + a.frob2()));
        }
    }
}
