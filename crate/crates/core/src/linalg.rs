//! Closed-form eigen-decomposition of symmetric 3x3 matrices.
//!
//! Eigenvalues come from the trigonometric solution of the characteristic
//! cubic. The eigenvector of the best-separated eigenvalue is taken from
//! cross products of rows of `A - λI`; the second one is solved inside the
//! orthogonal complement of the first, which keeps repeated eigenvalues
//! well-conditioned. A Rayleigh quotient pass refines the eigenvalues.

use nalgebra::{Matrix3, Vector3};

#[derive(Clone, Debug)]
pub struct SymEigen3 {
    /// Eigenvalues in descending order.
    pub values: [f64; 3],
    /// Unit eigenvectors, `vectors[i]` paired with `values[i]`.
    pub vectors: [Vector3<f64>; 3],
}

impl SymEigen3 {
    /// `‖A − QΛQᵀ‖_F`.
    pub fn residual(&self, a: &Matrix3<f64>) -> f64 {
        let mut r = *a;
        for i in 0..3 {
            r -= self.values[i] * self.vectors[i] * self.vectors[i].transpose();
        }
        r.norm()
    }
}

pub fn sym_eigen3(a: &Matrix3<f64>) -> SymEigen3 {
    let sym = 0.5 * (a + a.transpose());
    let max0 = sym.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max0 == 0.0 || !max0.is_finite() {
        return SymEigen3 {
            values: [0.0; 3],
            vectors: [Vector3::x(), Vector3::y(), Vector3::z()],
        };
    }
    let m = sym / max0;

    let a01 = m[(0, 1)];
    let a02 = m[(0, 2)];
    let a12 = m[(1, 2)];
    let q = m.trace() / 3.0;
    let b00 = m[(0, 0)] - q;
    let b11 = m[(1, 1)] - q;
    let b22 = m[(2, 2)] - q;
    let p = ((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * (a01 * a01 + a02 * a02 + a12 * a12))
        / 6.0)
        .sqrt();

    let (mut vals, vecs) = if p == 0.0 {
        ([q; 3], [Vector3::x(), Vector3::y(), Vector3::z()])
    } else {
        let c00 = b11 * b22 - a12 * a12;
        let c01 = a01 * b22 - a12 * a02;
        let c02 = a01 * a12 - b11 * a02;
        let det = (b00 * c00 - a01 * c01 + a02 * c02) / (p * p * p);
        let half_det = (0.5 * det).clamp(-1.0, 1.0);
        let angle = half_det.acos() / 3.0;
        let two_thirds_pi = 2.0 * std::f64::consts::FRAC_PI_3;
        let beta2 = angle.cos() * 2.0;
        let beta0 = (angle + two_thirds_pi).cos() * 2.0;
        let beta1 = -(beta0 + beta2);
        let ev = [q + p * beta0, q + p * beta1, q + p * beta2];

        if half_det >= 0.0 {
            let v2 = eigenvector_isolated(&m, ev[2]);
            let v1 = eigenvector_in_complement(&m, &v2, ev[1]);
            let v0 = v1.cross(&v2);
            (ev, [v0, v1, v2])
        } else {
            let v0 = eigenvector_isolated(&m, ev[0]);
            let v1 = eigenvector_in_complement(&m, &v0, ev[1]);
            let v2 = v0.cross(&v1);
            (ev, [v0, v1, v2])
        }
    };

    // Rayleigh refinement on the original scale.
    for i in 0..3 {
        vals[i] = vecs[i].dot(&(sym * vecs[i]));
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    SymEigen3 {
        values: [vals[order[0]], vals[order[1]], vals[order[2]]],
        vectors: [vecs[order[0]], vecs[order[1]], vecs[order[2]]],
    }
}

fn eigenvector_isolated(a: &Matrix3<f64>, eval: f64) -> Vector3<f64> {
    let r0 = Vector3::new(a[(0, 0)] - eval, a[(0, 1)], a[(0, 2)]);
    let r1 = Vector3::new(a[(0, 1)], a[(1, 1)] - eval, a[(1, 2)]);
    let r2 = Vector3::new(a[(0, 2)], a[(1, 2)], a[(2, 2)] - eval);
    let c = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let d = [c[0].norm_squared(), c[1].norm_squared(), c[2].norm_squared()];
    let mut best = 0;
    for i in 1..3 {
        if d[i] > d[best] {
            best = i;
        }
    }
    if d[best] == 0.0 {
        return Vector3::x();
    }
    c[best] / d[best].sqrt()
}

/// Unit vector orthogonal to `w` (which must be unit length).
pub(crate) fn orthogonal_complement(w: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = if w.x.abs() > w.y.abs() {
        let inv = 1.0 / (w.x * w.x + w.z * w.z).sqrt();
        Vector3::new(-w.z * inv, 0.0, w.x * inv)
    } else {
        let inv = 1.0 / (w.y * w.y + w.z * w.z).sqrt();
        Vector3::new(0.0, w.z * inv, -w.y * inv)
    };
    let v = w.cross(&u);
    (u, v)
}

fn eigenvector_in_complement(a: &Matrix3<f64>, v0: &Vector3<f64>, eval: f64) -> Vector3<f64> {
    let (u, v) = orthogonal_complement(v0);
    let au = a * u;
    let av = a * v;
    let mut m00 = u.dot(&au) - eval;
    let mut m01 = u.dot(&av);
    let mut m11 = v.dot(&av) - eval;
    let (abs00, abs01, abs11) = (m00.abs(), m01.abs(), m11.abs());
    if abs00 >= abs11 {
        if abs00.max(abs01) > 0.0 {
            if abs00 >= abs01 {
                m01 /= m00;
                m00 = 1.0 / (1.0 + m01 * m01).sqrt();
                m01 *= m00;
            } else {
                m00 /= m01;
                m01 = 1.0 / (1.0 + m00 * m00).sqrt();
                m00 *= m01;
            }
            m01 * u - m00 * v
        } else {
            u
        }
    } else if abs11.max(abs01) > 0.0 {
        if abs11 >= abs01 {
            m01 /= m11;
            m11 = 1.0 / (1.0 + m01 * m01).sqrt();
            m01 *= m11;
        } else {
            m11 /= m01;
            m01 = 1.0 / (1.0 + m11 * m11).sqrt();
            m11 *= m01;
        }
        m11 * u - m01 * v
    } else {
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check(a: &Matrix3<f64>) {
        let e = sym_eigen3(a);
        let scale = a.norm().max(1.0);
        assert!(e.residual(a) < 1e-12 * scale, "residual {}", e.residual(a));
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
        for i in 0..3 {
            assert!((e.vectors[i].norm() - 1.0).abs() < 1e-12);
        }
        // independent oracle: nalgebra's iterative solver
        let mut reference: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for i in 0..3 {
            assert!((reference[i] - e.values[i]).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn degenerate_spectra() {
        check(&Matrix3::zeros());
        check(&Matrix3::identity());
        check(&Matrix3::from_diagonal(&Vector3::new(0.0, 2.0, 2.0)));
        check(&Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, 1.0)));
        let n = Vector3::new(1.0, 2.0, -0.5).normalize();
        let proj = Matrix3::identity() - n * n.transpose();
        check(&(proj * 0.5));
    }

    proptest! {
        #[test]
        fn random_symmetric(v in proptest::array::uniform6(-10.0f64..10.0)) {
            let a = Matrix3::new(v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]);
            check(&a);
        }

        #[test]
        fn rank_one(v in proptest::array::uniform3(-3.0f64..3.0), s in -5.0f64..5.0) {
            let x = Vector3::from(v);
            check(&(s * x * x.transpose()));
        }
    }
}
