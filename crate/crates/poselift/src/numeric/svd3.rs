//! Small fixed-size decompositions for rigid/similarity alignment.

type Mat3 = [[f64; 3]; 3];

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat3_det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn mat3_apply(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn normalize(v: &[f64; 3]) -> [f64; 3] {
    let n = norm(v);
    if n == 0.0 {
        return *v;
    }
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of the returned matrix.
pub fn eigen_sym3(a: &Mat3) -> ([f64; 3], Mat3) {
    let mut m = *a;
    let mut v: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    for _sweep in 0..50 {
        let off = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
        if off < 1e-30 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if m[p][q].abs() < 1e-300 {
                continue;
            }
            // Rotation angle zeroing m[p][q].
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;

            let mpp = m[p][p];
            let mqq = m[q][q];
            let mpq = m[p][q];
            m[p][p] = c * c * mpp - 2.0 * s * c * mpq + s * s * mqq;
            m[q][q] = s * s * mpp + 2.0 * s * c * mpq + c * c * mqq;
            m[p][q] = 0.0;
            m[q][p] = 0.0;
            let r = 3 - p - q; // the remaining index
            let mrp = m[r][p];
            let mrq = m[r][q];
            m[r][p] = c * mrp - s * mrq;
            m[p][r] = m[r][p];
            m[r][q] = s * mrp + c * mrq;
            m[q][r] = m[r][q];

            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let vals = [m[order[0]][order[0]], m[order[1]][order[1]], m[order[2]][order[2]]];
    let mut vecs = [[0.0; 3]; 3];
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..3 {
            vecs[i][dst] = v[i][src];
        }
    }
    (vals, vecs)
}

/// Singular value decomposition `a = u * diag(s) * v^T` of a 3x3 matrix.
/// Singular values are non-negative and descending; `u` and `v` are
/// orthonormal (right-handed completion for rank-deficient inputs).
pub fn svd3(a: &Mat3) -> (Mat3, [f64; 3], Mat3) {
    let ata = mat3_mul(&mat3_transpose(a), a);
    let (vals, v) = eigen_sym3(&ata);
    let s = [
        vals[0].max(0.0).sqrt(),
        vals[1].max(0.0).sqrt(),
        vals[2].max(0.0).sqrt(),
    ];

    let tol = s[0] * 1e-12;
    let mut u_cols: Vec<[f64; 3]> = Vec::with_capacity(3);
    for k in 0..3 {
        let vk = [v[0][k], v[1][k], v[2][k]];
        let avk = mat3_apply(a, &vk);
        if s[k] > tol && s[k] > 0.0 {
            u_cols.push([avk[0] / s[k], avk[1] / s[k], avk[2] / s[k]]);
        } else {
            // Deferred: complete to an orthonormal basis below.
            u_cols.push([0.0; 3]);
        }
    }

    // Orthonormal completion for (near-)zero singular directions.
    for k in 0..3 {
        if norm(&u_cols[k]) > 0.5 {
            continue;
        }
        let filled: Vec<[f64; 3]> = u_cols.iter().filter(|c| norm(c) > 0.5).cloned().collect();
        u_cols[k] = match filled.len() {
            0 => {
                let mut e = [0.0; 3];
                e[k] = 1.0;
                e
            }
            1 => {
                // Any unit vector orthogonal to the single filled column.
                let f = filled[0];
                let pick = if f[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                normalize(&cross(&f, &pick))
            }
            _ => normalize(&cross(&filled[0], &filled[1])),
        };
    }

    let mut u = [[0.0; 3]; 3];
    for (k, col) in u_cols.iter().enumerate() {
        for i in 0..3 {
            u[i][k] = col[i];
        }
    }
    (u, s, v)
}
