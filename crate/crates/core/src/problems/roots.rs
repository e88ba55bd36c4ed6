/// Bisection on a sign-changing bracket, then Newton polishing with a secant
/// derivative. Returns `None` when `f(a)` and `f(b)` share a sign.
pub fn bracketed_root<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        if (b - a).abs() <= 1e-6 {
            break;
        }
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let mut x = 0.5 * (a + b);
    for _ in 0..50 {
        let fx = f(x);
        let h = 1e-7 * (1.0 + x.abs());
        let slope = (f(x + h) - f(x - h)) / (2.0 * h);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = (x - fx / slope).clamp(lo, hi);
        if (next - x).abs() <= tol {
            x = next;
            break;
        }
        x = next;
    }
    Some(x)
}
