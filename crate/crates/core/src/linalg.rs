//! Small dense 2×2 helpers for cocycles and matrix products.

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

pub fn apply(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn trace(a: &Mat2) -> f64 {
    a[0][0] + a[1][1]
}

pub fn frobenius(a: &Mat2) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn scale(a: &Mat2, s: f64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

/// Singular values `(σ1, σ2)` with `σ1 >= σ2 >= 0`.
pub fn singular_values(a: &Mat2) -> (f64, f64) {
    let e = (a[0][0] + a[1][1]) / 2.0;
    let f = (a[0][0] - a[1][1]) / 2.0;
    let g = (a[1][0] + a[0][1]) / 2.0;
    let h = (a[1][0] - a[0][1]) / 2.0;
    let q = e.hypot(h);
    let r = f.hypot(g);
    (q + r, (q - r).abs())
}

/// Householder-free QR of a 2×2 matrix: `a = q r` with `r[0][0], r[1][1] >= 0`.
pub fn qr(a: &Mat2) -> (Mat2, Mat2) {
    let (c0, c1) = ([a[0][0], a[1][0]], [a[0][1], a[1][1]]);
    let n0 = c0[0].hypot(c0[1]);
    let q0 = if n0 > 0.0 { [c0[0] / n0, c0[1] / n0] } else { [1.0, 0.0] };
    let r01 = q0[0] * c1[0] + q0[1] * c1[1];
    // Second column of q is the rotation of q0; orientation follows det(a).
    let mut q1 = [-q0[1], q0[0]];
    let mut r11 = q1[0] * c1[0] + q1[1] * c1[1];
    if r11 < 0.0 {
        q1 = [-q1[0], -q1[1]];
        r11 = -r11;
    }
    ([[q0[0], q1[0]], [q0[1], q1[1]]], [[n0, r01], [0.0, r11]])
}

/// Unit left singular vector of the top singular value (image direction).
pub fn top_left_singular_vector(a: &Mat2) -> [f64; 2] {
    // Eigenvector of a aᵀ for its largest eigenvalue.
    let f = frobenius(a);
    if f == 0.0 {
        return [1.0, 0.0];
    }
    let b = scale(a, 1.0 / f);
    let p = b[0][0] * b[0][0] + b[0][1] * b[0][1];
    let r = b[1][0] * b[1][0] + b[1][1] * b[1][1];
    let q = b[0][0] * b[1][0] + b[0][1] * b[1][1];
    let theta = 0.5 * (2.0 * q).atan2(p - r);
    [theta.cos(), theta.sin()]
}
