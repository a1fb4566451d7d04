//! One-dimensional quadrature: adaptive Simpson for smooth integrands and
//! composite trapezoid weights for fixed grids.

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson integral of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Reversed limits give the negated integral.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -adaptive_simpson(f, b, a, tol);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0;
    refine(&f, a, m, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    m: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
    let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Nodes and composite trapezoid weights for `n` equally spaced points on
/// `[lo, hi]`, normalized so the weights sum to one.
pub fn trapezoid_nodes(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2, "trapezoid rule needs at least two nodes");
    let h = (hi - lo) / (n - 1) as f64;
    let interior = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = if i == n - 1 { hi } else { lo + i as f64 * h };
            let w = if i == 0 || i == n - 1 { 0.5 * interior } else { interior };
            (x, w)
        })
        .collect()
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + i as f64 * h })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_transcendentals() {
        let cubic = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((cubic - 0.0).abs() < 1e-12);
        let exp = adaptive_simpson(f64::exp, 0.0, 1.0, 1e-12);
        assert!((exp - (std::f64::consts::E - 1.0)).abs() < 1e-11);
        let sin = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-12);
        assert!((sin - 2.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_reversed_limits() {
        let fwd = adaptive_simpson(|x| x.sqrt(), 0.0, 1.0, 1e-10);
        let rev = adaptive_simpson(|x| x.sqrt(), 1.0, 0.0, 1e-10);
        assert!((fwd + rev).abs() < 1e-14);
        assert!((fwd - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn trapezoid_weights_sum_to_one() {
        let nodes = trapezoid_nodes(0.3, 0.7, 1024);
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(nodes[0].0, 0.3);
        assert_eq!(nodes[1023].0, 0.7);
        // Mean of the uniform distribution on [0.3, 0.7].
        let mean: f64 = nodes.iter().map(|(x, w)| x * w).sum();
        assert!((mean - 0.5).abs() < 1e-12);
    }
}
