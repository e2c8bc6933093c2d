//! Clamped B-spline bases and the difference penalty on their coefficients.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const CUBIC: usize = 3;

/// Checks that `knots` is a clamped knot vector for `degree`: boundary knots
/// repeated `degree + 1` times, interior knots strictly increasing and
/// strictly inside the boundary.
pub fn validate_knots(knots: &[f64], degree: usize) -> Result<()> {
    let order = degree + 1;
    if knots.len() < 2 * order {
        return Err(Error::BadKnots(format!(
            "need at least {} knots for degree {degree}, got {}",
            2 * order,
            knots.len()
        )));
    }
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::BadKnots("non-finite knot".into()));
    }
    let lo = knots[0];
    let hi = knots[knots.len() - 1];
    if !(lo < hi) {
        return Err(Error::BadKnots("boundary knots must satisfy lo < hi".into()));
    }
    let clamped = knots[..order].iter().all(|&k| k == lo) && knots[knots.len() - order..].iter().all(|&k| k == hi);
    if !clamped {
        return Err(Error::BadKnots(
            "boundary knots must be repeated degree + 1 times".into(),
        ));
    }
    let interior = &knots[order..knots.len() - order];
    let mut prev = lo;
    for &k in interior {
        if !(k > prev) {
            return Err(Error::BadKnots("interior knots must be strictly increasing".into()));
        }
        prev = k;
    }
    if !(hi > prev) {
        return Err(Error::BadKnots("interior knots must lie inside the boundary".into()));
    }
    Ok(())
}

pub fn basis_size(knots: &[f64], degree: usize) -> usize {
    knots.len() - degree - 1
}

/// Builds a clamped knot vector from boundary values and interior knots.
pub fn clamped_knots(lo: f64, hi: f64, interior: &[f64], degree: usize) -> Vec<f64> {
    let mut knots = vec![lo; degree + 1];
    knots.extend_from_slice(interior);
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    knots
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clamped cubic knot vector with interior knots at equally spaced
/// quantiles of `x`, aiming for `basis_size` functions. Coincident quantiles
/// are merged, so the realized basis can be smaller.
pub fn quantile_knots(x: &[f64], basis_size: usize, degree: usize) -> Result<Vec<f64>> {
    let mut sorted: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.len() < 2 {
        return Err(Error::BadKnots("need at least two finite values".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    if !(lo < hi) {
        return Err(Error::BadKnots("values are constant".into()));
    }
    let n_interior = basis_size.saturating_sub(degree + 1);
    let mut interior: Vec<f64> = (1..=n_interior)
        .map(|j| quantile_sorted(&sorted, j as f64 / (n_interior + 1) as f64))
        .filter(|&k| k > lo && k < hi)
        .collect();
    interior.dedup();
    Ok(clamped_knots(lo, hi, &interior, degree))
}

/// Index `i` of the knot span with `knots[i] <= x < knots[i + 1]`; the right
/// boundary maps to the last non-empty span.
pub fn find_span(knots: &[f64], degree: usize, x: f64) -> usize {
    let n = basis_size(knots, degree) - 1;
    if x >= knots[n + 1] {
        return n;
    }
    if x <= knots[degree] {
        return degree;
    }
    // upper_bound over knots[degree..=n+1]
    let slice = &knots[degree..=n + 1];
    let pos = slice.partition_point(|&k| k <= x);
    degree + pos - 1
}

/// The `degree + 1` non-zero basis values on `span` at `x` (de Boor's
/// triangular recursion).
pub fn basis_funs(knots: &[f64], degree: usize, span: usize, x: f64) -> Vec<f64> {
    let mut values = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    values[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    values
}

/// Clamps `x` to the boundary knots, reporting whether it moved.
pub fn clamp_to_knots(knots: &[f64], x: f64) -> (f64, bool) {
    let lo = knots[0];
    let hi = knots[knots.len() - 1];
    if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else {
        (x, false)
    }
}

/// Dense `n x K` basis matrix. Values outside the boundary knots are clamped.
pub fn bspline_basis(x: &[f64], knots: &[f64], degree: usize) -> Result<DMatrix<f64>> {
    validate_knots(knots, degree)?;
    let k = basis_size(knots, degree);
    let mut clamped = 0usize;
    let mut out = DMatrix::zeros(x.len(), k);
    for (row, &xi) in x.iter().enumerate() {
        if !xi.is_finite() {
            return Err(Error::InvalidInput("non-finite basis argument".into()));
        }
        let (xc, moved) = clamp_to_knots(knots, xi);
        clamped += moved as usize;
        let span = find_span(knots, degree, xc);
        for (j, v) in basis_funs(knots, degree, span, xc).into_iter().enumerate() {
            out[(row, span - degree + j)] = v;
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} basis argument(s) clamped to the boundary knots");
    }
    Ok(out)
}

/// Greville abscissae: the x-locations the coefficients of a clamped spline
/// are naturally attached to. A linear function has coefficients equal to
/// its values at these points.
pub fn greville(knots: &[f64], degree: usize) -> Vec<f64> {
    (0..basis_size(knots, degree))
        .map(|i| knots[i + 1..=i + degree].iter().sum::<f64>() / degree as f64)
        .collect()
}

/// `K x K` second-order difference penalty `D'D`. Differences are divided
/// differences over the Greville abscissae, rescaled by the mean abscissa
/// spacing, so the penalty reduces to the plain `[1, -2, 1]` stencil on
/// evenly spaced abscissae and its null space is exactly the linear
/// functions for any knot placement.
pub fn difference_penalty(knots: &[f64], degree: usize) -> DMatrix<f64> {
    let xi = greville(knots, degree);
    let k = xi.len();
    if k < 3 {
        return DMatrix::zeros(k, k);
    }
    let hbar = (xi[k - 1] - xi[0]) / (k - 1) as f64;
    let mut d = DMatrix::zeros(k - 2, k);
    for r in 1..k - 1 {
        let h0 = xi[r] - xi[r - 1];
        let h1 = xi[r + 1] - xi[r];
        let scale = 2.0 * hbar * hbar / (h0 + h1);
        d[(r - 1, r - 1)] = scale / h0;
        d[(r - 1, r)] = -scale * (1.0 / h0 + 1.0 / h1);
        d[(r - 1, r + 1)] = scale / h1;
    }
    d.tr_mul(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(k: usize) -> Vec<f64> {
        let n_int = k - 4;
        let interior: Vec<f64> = (1..=n_int).map(|j| j as f64 / (n_int + 1) as f64).collect();
        clamped_knots(0.0, 1.0, &interior, CUBIC)
    }

    #[test]
    fn partition_of_unity() {
        let knots = uniform(10);
        let x: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let b = bspline_basis(&x, &knots, CUBIC).unwrap();
        for r in 0..x.len() {
            assert!((b.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoints_interpolate() {
        let knots = uniform(10);
        let b = bspline_basis(&[0.0, 1.0], &knots, CUBIC).unwrap();
        assert_eq!(b[(0, 0)], 1.0);
        assert!(b.row(0).iter().skip(1).all(|&v| v == 0.0));
        assert_eq!(b[(1, 9)], 1.0);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(bspline_basis(&[0.5], &[0.0, 0.0, 0.0, 0.0, 0.5, 0.4, 1.0, 1.0, 1.0, 1.0], CUBIC).is_err());
        assert!(bspline_basis(&[0.5], &[0.0, 1.0], CUBIC).is_err());
        assert!(bspline_basis(&[0.5], &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0], CUBIC).is_err());
    }

    #[test]
    fn clamps_outside_range() {
        let knots = uniform(6);
        let b = bspline_basis(&[-3.0, 7.0], &knots, CUBIC).unwrap();
        assert_eq!(b[(0, 0)], 1.0);
        assert_eq!(b[(1, 5)], 1.0);
    }

    #[test]
    fn quantile_knots_merge_ties() {
        // mostly zeros, as with precipitation
        let mut x = vec![0.0; 80];
        x.extend((1..=20).map(|v| v as f64));
        let knots = quantile_knots(&x, 10, CUBIC).unwrap();
        validate_knots(&knots, CUBIC).unwrap();
        assert!(basis_size(&knots, CUBIC) < 10);
        assert!(quantile_knots(&[2.0, 2.0, 2.0], 10, CUBIC).is_err());
    }

    #[test]
    fn penalty_null_space_is_linear() {
        let interior = [0.05, 0.1, 0.3, 0.35, 0.7, 0.9];
        let knots = clamped_knots(0.0, 1.0, &interior, CUBIC);
        let p = difference_penalty(&knots, CUBIC);
        let xi = nalgebra::DVector::from_vec(greville(&knots, CUBIC));
        let ones = nalgebra::DVector::from_element(xi.len(), 1.0);
        assert!((&p * &xi).norm() < 1e-10);
        assert!((&p * &ones).norm() < 1e-10);
        // greville coefficients reproduce the identity function
        let x = [0.0, 0.12, 0.5, 0.77, 1.0];
        let b = bspline_basis(&x, &knots, CUBIC).unwrap();
        let fx = b * xi;
        for (a, b) in fx.iter().zip(x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_interior_has_second_difference_stencil() {
        let knots = uniform(40);
        let p = difference_penalty(&knots, CUBIC);
        let mid = 20;
        let row: Vec<f64> = (mid - 2..=mid + 2).map(|j| p[(mid, j)] / p[(mid, mid - 2)]).collect();
        let expect = [1.0, -4.0, 6.0, -4.0, 1.0];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{row:?}");
        }
    }
}
