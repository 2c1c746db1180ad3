use ps_core::Real;

/// Symmetric 3x3 stored as [xx, xy, xz, yy, yz, zz].
///
/// Eigenvalues via the trigonometric closed form for symmetric matrices;
/// adequate for conditioning checks on Gram matrices.
pub fn sym3_eigenvalues<T: Real>(m: &[T; 6]) -> Option<[T; 3]> {
    let (a, b, c, d, e, f) = (m[0], m[1], m[2], m[3], m[4], m[5]);
    if ![a, b, c, d, e, f].iter().all(|v| v.is_finite()) {
        return None;
    }
    let three = T::of(3.0);
    let two = T::of(2.0);
    let tr = a + d + f;
    let q = tr / three;
    let aa = a - q;
    let dd = d - q;
    let ff = f - q;
    let p2 = aa * aa + dd * dd + ff * ff + two * (b * b + c * c + e * e);
    if p2 <= T::zero() {
        return Some([q, q, q]);
    }
    let p = (p2 / T::of(6.0)).sqrt();
    if !(p > T::zero()) {
        return Some([q, q, q]);
    }
    // det(B) with B = (M - q I) / p
    let (ba, bb, bc, bd, be, bf) = (aa / p, b / p, c / p, dd / p, e / p, ff / p);
    let det_b = ba * (bd * bf - be * be) - bb * (bb * bf - be * bc) + bc * (bb * be - bd * bc);
    let r = (det_b / two).max(-T::one()).min(T::one());
    let phi = r.acos() / three;
    let two_pi_3 = T::of(2.0 * std::f64::consts::PI / 3.0);
    let e1 = q + two * p * phi.cos();
    let e3 = q + two * p * (phi + two_pi_3).cos();
    let e2 = tr - e1 - e3;
    Some([e1, e2, e3]) // e1 >= e2 >= e3
}

/// Condition number lambda_max / lambda_min of a positive semi-definite
/// symmetric 3x3; None when singular or indefinite beyond rounding.
pub fn sym3_condition<T: Real>(m: &[T; 6]) -> Option<T> {
    let eig = sym3_eigenvalues(m)?;
    let (emax, emin) = (eig[0], eig[2]);
    if !(emin > T::zero()) {
        return None;
    }
    Some(emax / emin)
}

/// Solves M x = r for symmetric 3x3 M via the adjugate (closed form).
pub fn sym3_solve<T: Real>(m: &[T; 6], r: &[T; 3]) -> Option<[T; 3]> {
    let (a, b, c, d, e, f) = (m[0], m[1], m[2], m[3], m[4], m[5]);
    let co00 = d * f - e * e;
    let co01 = c * e - b * f;
    let co02 = b * e - c * d;
    let det = a * co00 + b * co01 + c * co02;
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let co11 = a * f - c * c;
    let co12 = b * c - a * e;
    let co22 = a * d - b * b;
    let x = (co00 * r[0] + co01 * r[1] + co02 * r[2]) / det;
    let y = (co01 * r[0] + co11 * r[1] + co12 * r[2]) / det;
    let z = (co02 * r[0] + co12 * r[1] + co22 * r[2]) / det;
    Some([x, y, z])
}
