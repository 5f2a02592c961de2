//! Bounded scalar maximization.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`, run until the
/// bracket is narrower than `tol`.
///
/// The result is never worse than `f` at either endpoint or at any of the
/// `extra_candidates` lying inside the interval, so a multimodal objective
/// still gets the best of the probed points.
pub fn golden_section_max<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    extra_candidates: &[f64],
) -> Maximum
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = Maximum {
        x: mid,
        value: f(mid),
    };
    let others = [lo, hi].into_iter().chain(
        extra_candidates
            .iter()
            .copied()
            .filter(|x| (lo..=hi).contains(x)),
    );
    for x in others {
        let value = f(x);
        if value > best.value {
            best = Maximum { x, value };
        }
    }
    best
}
