use nalgebra::DMatrix;

/// Largest eigenvalue modulus of a dense square matrix given row-major.
pub fn spectral_radius(n: usize, row_major: &[f64]) -> f64 {
    assert_eq!(row_major.len(), n * n);
    let m = DMatrix::from_row_slice(n, n, row_major);
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    y[i] = x[i] + h;
    let up = f(&y);
    y[i] = x[i] - h;
    let down = f(&y);
    (up - down) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_has_unit_radius() {
        assert!((spectral_radius(2, &[0.0, -1.0, 1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((spectral_radius(2, &[2.0, 0.0, 0.0, -3.0]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn difference_of_cubic() {
        let mut f = |x: &[f64]| x[0].powi(3) + x[1];
        let d = central_difference(&mut f, &[2.0, 0.0], 0, 1e-5);
        assert!(rel_err(d, 12.0, 1e-12) < 1e-8);
    }
}
