//! Central finite differences, the independent oracle for every backward
//! rule in this crate.

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` for each index in `indices`, with
/// `h = step · max(1, |x_i|)`.
pub fn central_differences(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], indices: &[usize], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            let h = step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
