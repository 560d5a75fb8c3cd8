//! Tensor Gauss–Legendre quadrature on rectangles.
//!
//! Used as the generic fallback for kernel cell integrals and as an
//! independent check of the closed-form antiderivatives.

use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const GL_ORDER: usize = 16;

/// Absolute tolerance between the one-cell and 2×2-subcell estimates.
pub const REFINEMENT_TOL: f64 = 1e-8;

/// Nodes and weights of the `GL_ORDER`-point rule on [-1, 1].
pub fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(legendre_rule::<GL_ORDER>)
}

fn legendre_rule<const N: usize>() -> ([f64; N], [f64; N]) {
    let mut nodes = [0.0; N];
    let mut weights = [0.0; N];
    let nf = N as f64;
    for i in 0..N.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_N.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(N, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(N, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[N - 1 - i] = x;
        weights[i] = w;
        weights[N - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// One tensor Gauss–Legendre pass over `[x0, x1] × [y0, y1]`.
pub fn tensor_rule<F>(f: &F, x0: f64, x1: f64, y0: f64, y1: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let (nodes, weights) = gauss_legendre();
    let hx = 0.5 * (x1 - x0);
    let hy = 0.5 * (y1 - y0);
    let cx = 0.5 * (x1 + x0);
    let cy = 0.5 * (y1 + y0);
    let mut acc = 0.0;
    for (xi, wx) in nodes.iter().zip(weights) {
        let x = cx + hx * xi;
        let mut row = 0.0;
        for (yj, wy) in nodes.iter().zip(weights) {
            row += wy * f(x, cy + hy * yj);
        }
        acc += wx * row;
    }
    acc * hx * hy
}

/// Integral over a rectangle, checked against a 2×2 subdivision.
pub fn cell_quadrature<F>(f: F, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let coarse = tensor_rule(&f, x0, x1, y0, y1);
    let xm = 0.5 * (x0 + x1);
    let ym = 0.5 * (y0 + y1);
    let fine = tensor_rule(&f, x0, xm, y0, ym)
        + tensor_rule(&f, xm, x1, y0, ym)
        + tensor_rule(&f, x0, xm, ym, y1)
        + tensor_rule(&f, xm, x1, ym, y1);
    if !(coarse - fine).abs().le(&REFINEMENT_TOL) {
        return Err(Error::QuadratureFailure { coarse, fine });
    }
    Ok(fine)
}

/// One-dimensional Gauss–Legendre integral over `n_sub` equal panels.
pub fn composite_1d<F>(f: F, a: f64, b: f64, n_sub: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let (nodes, weights) = gauss_legendre();
    let h = (b - a) / n_sub as f64;
    let mut acc = 0.0;
    for k in 0..n_sub {
        let lo = a + k as f64 * h;
        let c = lo + 0.5 * h;
        let mut panel = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            panel += w * f(c + 0.5 * h * x);
        }
        acc += panel * 0.5 * h;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_symmetric() {
        let (nodes, weights) = gauss_legendre();
        let s: f64 = weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        for i in 0..GL_ORDER {
            assert!((nodes[i] + nodes[GL_ORDER - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        // 16 points integrate degree 31 exactly.
        let v = tensor_rule(&|x: f64, y: f64| x.powi(30) * y.powi(2), 0.0, 1.0, 0.0, 2.0);
        let exact = (1.0 / 31.0) * (8.0 / 3.0);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn smooth_cell_converges() {
        let v = cell_quadrature(|x, y| (x * y).exp(), 0.0, 1.0, 0.0, 1.0).unwrap();
        // sum_k 1/(k! (k+1)^2)
        let mut exact = 0.0;
        let mut fact = 1.0;
        for k in 0..30 {
            if k > 0 {
                fact *= k as f64;
            }
            exact += 1.0 / (fact * ((k + 1) as f64).powi(2));
        }
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn singular_cell_is_rejected() {
        let r = cell_quadrature(|x, y| (x * y).powf(-0.45), 0.0, 1e-3, 0.0, 1e-3);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }
}
