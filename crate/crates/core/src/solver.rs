//! Brent's derivative-free scalar minimiser (golden section with parabolic steps).

/// Location and value of a minimum found by [`brent_minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 − √5)/2

/// Minimise a unimodal `f` on `[a, b]` to absolute-plus-relative tolerance
/// `tol` in `x`.
pub fn brent_minimize(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> Minimum {
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mid = 0.5 * (a + b);
        let tol1 = tol * libm::fabs(x) + 1e-12 * tol.max(f64::EPSILON);
        let tol2 = 2.0 * tol1;
        if libm::fabs(x - mid) <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if libm::fabs(e) > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = libm::fabs(q);
            let e_prev = e;
            if libm::fabs(p) < libm::fabs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if mid >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= mid { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if libm::fabs(d) >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Minimum { x, value: fx, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_asymmetric() {
        let m = brent_minimize(|x| (x - 1.3) * (x - 1.3) + 2.0, -10.0, 10.0, 1e-12, 200);
        assert!((m.x - 1.3).abs() < 1e-8 && (m.value - 2.0).abs() < 1e-15);
        let m = brent_minimize(|x| libm::exp(x) - 2.0 * x, -5.0, 5.0, 1e-12, 200);
        assert!((m.x - core::f64::consts::LN_2).abs() < 1e-7);
    }

    #[test]
    fn boundary_minimum() {
        let m = brent_minimize(|x| x, 2.0, 3.0, 1e-10, 500);
        assert!((m.x - 2.0).abs() < 1e-8);
    }
}
