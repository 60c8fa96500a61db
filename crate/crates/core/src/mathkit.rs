//! Small fixed-size linear algebra and the fixed-step integrator shared by
//! the rest of the crate.

use nalgebra::{DVector, Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};

/// Default lower bound on `det(A Aᵀ)` before a wide matrix is declared singular.
pub const DETERMINANT_FLOOR: f64 = 1e-12;

/// Skew-symmetric matrix with `skew(a) * b == a × b`.
pub fn skew(c: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -c.z, c.y, //
        c.z, 0.0, -c.x, //
        -c.y, c.x, 0.0,
    )
}

/// Right pseudoinverse `Aᵀ(AAᵀ)⁻¹` of a full-row-rank 2×N matrix.
pub fn pinv_wide<const N: usize>(a: &SMatrix<f64, 2, N>) -> Result<SMatrix<f64, N, 2>> {
    pinv_wide_with_floor(a, DETERMINANT_FLOOR)
}

pub fn pinv_wide_with_floor<const N: usize>(
    a: &SMatrix<f64, 2, N>,
    floor: f64,
) -> Result<SMatrix<f64, N, 2>> {
    let gram = a * a.transpose();
    let det = gram[(0, 0)] * gram[(1, 1)] - gram[(0, 1)] * gram[(1, 0)];
    if !det.is_finite() || det.abs() <= floor {
        return Err(Error::SingularJacobian { det, floor });
    }
    let inv = nalgebra::Matrix2::new(
        gram[(1, 1)], -gram[(0, 1)], //
        -gram[(1, 0)], gram[(0, 0)],
    ) / det;
    Ok(a.transpose() * inv)
}

/// Time derivative of `pinv_wide(A)` given `Ȧ`:
/// `−A⁺ȦA⁺ + (I − A⁺A)ȦᵀA⁺ᵀA⁺`.
pub fn pinv_rate<const N: usize>(
    a: &SMatrix<f64, 2, N>,
    a_dot: &SMatrix<f64, 2, N>,
) -> Result<SMatrix<f64, N, 2>> {
    let pinv = pinv_wide(a)?;
    let null_proj = SMatrix::<f64, N, N>::identity() - pinv * a;
    Ok(-pinv * a_dot * pinv + null_proj * a_dot.transpose() * pinv.transpose() * pinv)
}

/// Fails with `NonFiniteState` unless every entry is finite.
pub fn ensure_finite<'a, I>(values: I, context: &'static str) -> Result<()>
where
    I: IntoIterator<Item = &'a f64>,
{
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { context })
    }
}

/// One classical Runge–Kutta step of `ṡ = f(t, s)`.
pub fn rk4_step<F>(mut f: F, t: f64, s: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let half = 0.5 * h;
    let k1 = f(t, s)?;
    ensure_finite(k1.iter(), "rk4 stage 1")?;
    let k2 = f(t + half, &(s + &k1 * half))?;
    ensure_finite(k2.iter(), "rk4 stage 2")?;
    let k3 = f(t + half, &(s + &k2 * half))?;
    ensure_finite(k3.iter(), "rk4 stage 3")?;
    let k4 = f(t + h, &(s + &k3 * h))?;
    ensure_finite(k4.iter(), "rk4 stage 4")?;
    let next = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    ensure_finite(next.iter(), "rk4 update")?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2x3, Matrix3x2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cross(a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            a.y * b.z - a.z * b.y,
            a.z * b.x - a.x * b.z,
            a.x * b.y - a.y * b.x,
        )
    }

    fn random_vec(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0))
    }

    #[test]
    fn skew_unit_x() {
        let s = skew(&Vector3::new(1.0, 0.0, 0.0));
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(s, expected);
    }

    #[test]
    fn skew_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_vec(&mut rng);
            let b = random_vec(&mut rng);
            let sa = skew(&a);
            assert_eq!(sa + sa.transpose(), Matrix3::zeros());
            assert_eq!(sa * a, Vector3::zeros());
            let lhs = sa * b;
            assert!((lhs - cross(&a, &b)).norm() < 1e-12);
            assert!((lhs + skew(&b) * a).norm() < 1e-12);
        }
    }

    #[test]
    fn pinv_orthonormal_rows() {
        let a = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let p = pinv_wide(&a).unwrap();
        assert_eq!(p, Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn pinv_identities_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = Matrix2x3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let p = pinv_wide(&a).unwrap();
            assert!((a * p - nalgebra::Matrix2::identity()).norm() < 1e-10);
            let proj = p * a;
            assert!((proj * proj - proj).norm() < 1e-10);
        }
    }

    #[test]
    fn pinv_rejects_identical_rows() {
        let a = Matrix2x3::new(1.0, 2.0, 3.0, 1.0, 2.0, 3.0);
        match pinv_wide(&a) {
            Err(Error::SingularJacobian { det, .. }) => assert_eq!(det, 0.0),
            other => panic!("expected SingularJacobian, got {other:?}"),
        }
    }

    #[test]
    fn pinv_rate_zero_for_constant_matrix() {
        let a = Matrix2x3::new(1.0, 0.5, -0.2, 0.3, 1.0, 0.7);
        assert_eq!(pinv_rate(&a, &Matrix2x3::zeros()).unwrap(), Matrix3x2::zeros());
    }

    #[test]
    fn pinv_rate_matches_rotation_derivative() {
        // A(t) = [[cos t, -sin t, 0], [sin t, cos t, 0]] has A⁺ = Aᵀ, so d/dt A⁺ = Ȧᵀ.
        let a = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let a_dot = Matrix2x3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0);
        let rate = pinv_rate(&a, &a_dot).unwrap();
        assert!((rate - a_dot.transpose()).norm() < 1e-14);
    }

    #[test]
    fn pinv_rate_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let base = Matrix2x3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let lin = Matrix2x3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let quad = Matrix2x3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let path = |t: f64| base + lin * t + quad * (t * t) + Matrix2x3::from_element(t.sin());
            let t0 = rng.gen_range(-0.5..0.5);
            let a_dot = lin + quad * (2.0 * t0) + Matrix2x3::from_element(t0.cos());
            let h = 1e-6;
            let fd = (pinv_wide(&path(t0 + h)).unwrap() - pinv_wide(&path(t0 - h)).unwrap())
                / (2.0 * h);
            let analytic = pinv_rate(&path(t0), &a_dot).unwrap();
            let rel = (analytic - fd).norm() / analytic.norm().max(1e-12);
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn rk4_zero_field_is_identity() {
        let s = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let next = rk4_step(|_, x| Ok(DVector::zeros(x.len())), 0.0, &s, 0.1).unwrap();
        assert_eq!(next, s);
    }

    fn decay(h: f64, steps: usize) -> f64 {
        let mut s = DVector::from_vec(vec![1.0]);
        for k in 0..steps {
            s = rk4_step(|_, x| Ok(-x), k as f64 * h, &s, h).unwrap();
        }
        s[0]
    }

    #[test]
    fn rk4_exponential_decay() {
        let v = decay(0.01, 100);
        assert!((v - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let exact = (-1.0f64).exp();
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&h| (decay(h, (1.0 / h).round() as usize) - exact).abs())
            .collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 4.0).abs() < 0.2, "observed order {slope}");
        }
    }

    #[test]
    fn rk4_rejects_non_finite_stage() {
        let s = DVector::from_vec(vec![1.0]);
        let r = rk4_step(|_, _| Ok(DVector::from_vec(vec![f64::NAN])), 0.0, &s, 0.1);
        assert!(matches!(r, Err(Error::NonFiniteState { .. })));
    }
}
