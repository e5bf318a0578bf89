/// Root of `f` on [a, b] given f(a) > 0 >= f(b) (or the mirrored signs),
/// by the Illinois variant of regula falsi. Stops when |f| <= `ftol` or the
/// bracket is narrower than `xtol`. Returns the point on the far side of
/// the root (where the sign has changed) so a caller restarting there sees
/// the event as having fired.
pub fn find_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    xtol: f64,
    ftol: f64,
) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        let x = (a * fb - b * fa) / (fb - fa);
        let x = if x.is_finite() && x > a.min(b) && x < a.max(b) {
            x
        } else {
            0.5 * (a + b)
        };
        let fx = f(x);
        if fx.abs() <= ftol && fx.signum() == fb.signum() || fx == 0.0 {
            return x;
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let f = |x: f64| 2.0 - x * x * x;
        let x = find_root(f, 0.0, 3.0, f(0.0), f(3.0), 1e-14, 1e-13);
        assert!((x - 2f64.cbrt()).abs() < 1e-12);
        assert!(f(x) <= 0.0);
    }

    #[test]
    fn returns_point_past_the_crossing() {
        let f = |x: f64| 0.3 - x;
        let x = find_root(f, 0.0, 1.0, 0.3, -0.7, 1e-15, 1e-9);
        assert!(f(x) <= 0.0 && f(x) > -1e-9);
    }
}
