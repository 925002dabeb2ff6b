//! Tiny dense-vector helpers.
//!
//! Dimensions here are tiny (hundreds at most), so plain slices beat any
//! array library; everything below is written so the same call sequence
//! always produces the same floating-point result.

/// Dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Squared Euclidean norm.
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += c * x`, element-wise.
pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

/// `y *= c`, element-wise.
pub fn scale(y: &mut [f64], c: f64) {
    for yi in y.iter_mut() {
        *yi *= c;
    }
}

/// True when every element is finite.
pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}
