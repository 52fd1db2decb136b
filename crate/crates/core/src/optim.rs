//! Small optimizers shared by the model families.

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a.min(b), a.max(b));
    if b - a <= tol {
        let x = 0.5 * (a + b);
        return (x, f(x));
    }
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let (xa, xb) = (a, b);
    let (fa, fb) = (f(xa), f(xb));
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (xa, fa), (xb, fb), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, p| if p.1 > best.1 { p } else { best })
}

/// Dense grid scan followed by golden-section refinement around the best
/// grid point. Returns the best point seen.
pub fn grid_golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, grid: usize, tol: f64) -> (f64, f64) {
    if b <= a {
        return (a, f(a));
    }
    let grid = grid.max(2);
    let step = (b - a) / (grid - 1) as f64;
    let mut best = (a, f64::NEG_INFINITY);
    let mut best_k = 0;
    for k in 0..grid {
        let x = if k + 1 == grid { b } else { a + step * k as f64 };
        let v = f(x);
        if v > best.1 {
            best = (x, v);
            best_k = k;
        }
    }
    let lo = a + step * best_k.saturating_sub(1) as f64;
    let hi = (a + step * (best_k + 1) as f64).min(b);
    let refined = golden_section_max(&mut f, lo, hi, tol);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-10,
            initial_step: 1.0,
        }
    }
}

/// Projected gradient ascent with backtracking (Armijo on the projected
/// step). `objective` returns `(value, gradient)`; `project` maps any point
/// onto the feasible set. Infeasible objective values must be `-inf`.
pub fn projected_gradient_ascent<O, P>(
    mut objective: O,
    project: P,
    start: Vec<f64>,
    opts: AscentOptions,
) -> (Vec<f64>, f64)
where
    O: FnMut(&[f64]) -> (f64, Vec<f64>),
    P: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = project(&start);
    let (mut fx, mut g) = objective(&x);
    let mut step = opts.initial_step;
    for _ in 0..opts.max_iter {
        let mut improved = false;
        let mut trial_step = step;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + trial_step * gi).collect();
            let cand = project(&cand);
            let moved: f64 = cand
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((c, xi), gi)| (c - xi) * gi)
                .sum();
            if moved <= 0.0 {
                trial_step *= 0.5;
                continue;
            }
            let (fc, gc) = objective(&cand);
            if fc.is_finite() && fc >= fx + 1e-4 * moved {
                let gain = fc - fx;
                let dx: f64 = cand.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                x = cand;
                fx = fc;
                g = gc;
                improved = true;
                step = (trial_step * 2.0).min(1e6);
                if gain <= opts.tol * (1.0 + fx.abs()) && dx <= 1e-12 {
                    return (x, fx);
                }
                if gain <= opts.tol * (1.0 + fx.abs()) * 1e-3 {
                    return (x, fx);
                }
                break;
            }
            trial_step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, fx)
}


/// Solve `(A + ridge I) x = b` for symmetric positive definite `A`.
pub fn cholesky_solve(a: &[f64], b: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let d = b.len();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j] + if i == j { ridge } else { 0.0 };
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[i * d + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|k| l[k * d + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * d + i];
    }
    Some(x)
}

/// Box-constrained maximization by projected Newton steps on the free
/// coordinates, with the Hessian taken from central differences of the
/// gradient; falls back to the gradient direction when the Hessian is not
/// negative definite.
pub fn projected_newton_box<O>(mut objective: O, lo: &[f64], hi: &[f64], start: Vec<f64>, max_iter: usize) -> (Vec<f64>, f64)
where
    O: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d = start.len();
    let clamp = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])).collect() };
    let mut x = clamp(&start);
    let (mut fx, mut g) = objective(&x);
    for _ in 0..max_iter {
        let free: Vec<usize> = (0..d)
            .filter(|&i| {
                let span = (hi[i] - lo[i]).max(1e-300);
                let at_lo = x[i] - lo[i] <= 1e-12 * span && g[i] < 0.0;
                let at_hi = hi[i] - x[i] <= 1e-12 * span && g[i] > 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        if free.is_empty() {
            break;
        }
        let k = free.len();
        let mut neg_h = vec![0.0; k * k];
        for (c, &j) in free.iter().enumerate() {
            let h = 1e-5 * (1.0 + x[j].abs());
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            let (_, gu) = objective(&up);
            let (_, gd) = objective(&dn);
            for (r, &i) in free.iter().enumerate() {
                neg_h[r * k + c] = -(gu[i] - gd[i]) / (2.0 * h);
            }
        }
        for r in 0..k {
            for c in 0..r {
                let v = 0.5 * (neg_h[r * k + c] + neg_h[c * k + r]);
                neg_h[r * k + c] = v;
                neg_h[c * k + r] = v;
            }
        }
        let gf: Vec<f64> = free.iter().map(|&i| g[i]).collect();
        let newton = cholesky_solve(&neg_h, &gf, 0.0);
        let mut dir = vec![0.0; d];
        let mut step = 1.0;
        match newton {
            Some(delta) => free.iter().zip(delta).for_each(|(&i, v)| dir[i] = v),
            None => {
                free.iter().for_each(|&i| dir[i] = g[i]);
                step = 1.0 / gf.iter().map(|v| v.abs()).fold(1e-300, f64::max);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand = clamp(&x.iter().zip(&dir).map(|(a, b)| a + step * b).collect::<Vec<_>>());
            let moved: f64 = cand.iter().zip(&x).zip(&g).map(|((c, a), gi)| (c - a) * gi).sum();
            if moved > 0.0 {
                let (fc, gc) = objective(&cand);
                if fc.is_finite() && fc >= fx + 1e-4 * moved {
                    let gain = fc - fx;
                    x = cand;
                    fx = fc;
                    g = gc;
                    accepted = gain > 1e-15 * (1.0 + fx.abs());
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, fx)
}

/// Maximize `sum_i w_i log v_i` subject to `lo <= v_i <= hi` and
/// `sum_i v_i = total`, for nonnegative weights.
///
/// KKT gives `v_i = clip(w_i / lambda, lo, hi)`; `lambda` is bracketed by
/// bisection, then solved exactly on the final clipping pattern.
/// Requires `n lo <= total <= n hi`.
pub fn box_simplex_mle(weights: &[f64], lo: f64, hi: f64, total: f64) -> Vec<f64> {
    let d = weights.len();
    let wsum: f64 = weights.iter().sum();
    if d == 0 {
        return Vec::new();
    }
    if !(wsum > 0.0) {
        return vec![(total / d as f64).clamp(lo, hi); d];
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if positive as f64 * hi + (d - positive) as f64 * lo <= total {
        // supported entries saturate at `hi`; the remainder goes to the rest
        let rest = total - positive as f64 * hi;
        let share = if d > positive { rest / (d - positive) as f64 } else { 0.0 };
        return weights
            .iter()
            .map(|&w| if w > 0.0 { hi } else { share.clamp(lo, hi) })
            .collect();
    }
    let at = |lambda: f64| -> Vec<f64> { weights.iter().map(|&w| (w / lambda).clamp(lo, hi)).collect() };
    let excess = |lambda: f64| at(lambda).iter().sum::<f64>() - total;
    let mut upper = wsum / total.max(f64::MIN_POSITIVE);
    while excess(upper) > 0.0 {
        upper *= 2.0;
    }
    let mut lower = upper / 2.0;
    while excess(lower) < 0.0 && lower > 1e-300 {
        lower /= 2.0;
    }
    for _ in 0..200 {
        let mid = (lower * upper).sqrt();
        if excess(mid) > 0.0 {
            lower = mid;
        } else {
            upper = mid;
        }
        if upper / lower - 1.0 < 1e-13 {
            break;
        }
    }
    let approx = at((lower * upper).sqrt());
    let saturated = |v: f64| v <= lo || v >= hi;
    let (mut fixed, mut free_w) = (0.0, 0.0);
    for (&v, &w) in approx.iter().zip(weights) {
        if saturated(v) {
            fixed += v;
        } else {
            free_w += w;
        }
    }
    if free_w > 0.0 && total - fixed > 0.0 {
        let lambda = free_w / (total - fixed);
        let exact: Vec<f64> = approx
            .iter()
            .zip(weights)
            .map(|(&v, &w)| if saturated(v) { v } else { w / lambda })
            .collect();
        if exact.iter().all(|&v| v >= lo && v <= hi) {
            return exact;
        }
    }
    approx
}

/// Clip into `[lo, hi]`, then move the normalization deficit onto the
/// unsaturated entries proportionally until the entries sum to `total`.
pub fn repair_row(v: &[f64], lo: f64, hi: f64, total: f64) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().map(|x| x.clamp(lo, hi)).collect();
    for _ in 0..=out.len() {
        let deficit = total - out.iter().sum::<f64>();
        if deficit.abs() <= 1e-15 * total.abs().max(1.0) {
            break;
        }
        let room: Vec<f64> = out
            .iter()
            .map(|&x| if deficit > 0.0 { hi - x } else { x - lo })
            .collect();
        let free: f64 = out
            .iter()
            .zip(&room)
            .filter(|(_, r)| **r > 0.0)
            .map(|(x, _)| *x)
            .sum();
        if free <= 0.0 {
            break;
        }
        for (x, r) in out.iter_mut().zip(&room) {
            if *r > 0.0 {
                let step = deficit * *x / free;
                *x = (*x + step).clamp(lo, hi);
            }
        }
    }
    // last resort: fill by available room
    let deficit = total - out.iter().sum::<f64>();
    if deficit.abs() > 1e-15 * total.abs().max(1.0) {
        let rooms: Vec<f64> = out
            .iter()
            .map(|&x| if deficit > 0.0 { hi - x } else { x - lo })
            .collect();
        let room_sum: f64 = rooms.iter().sum();
        if room_sum > 0.0 {
            for (x, r) in out.iter_mut().zip(&rooms) {
                *x += deficit.signum() * (deficit.abs() * r / room_sum);
            }
        }
    }
    out
}

#[cfg(test)]
mod simplex_tests {
    use super::*;

    #[test]
    fn box_simplex_interior_is_proportional() {
        let v = box_simplex_mle(&[3.0, 1.0], 0.1, 10.0, 2.0);
        assert!((v[0] - 1.5).abs() < 1e-14 && (v[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn box_simplex_respects_bounds() {
        let v = box_simplex_mle(&[100.0, 1.0, 0.0], 0.05, 0.9, 1.0);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert!((v[0] - 0.9).abs() < 1e-14);
        assert!((v[2] - 0.05).abs() < 1e-14);
        assert!((v[1] - 0.05).abs() < 1e-14);
    }

    #[test]
    fn repair_row_lands_in_box() {
        let v = repair_row(&[0.9, 0.0, 0.0, 0.5], 0.1, 0.6, 1.0);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(v.iter().all(|&x| (0.1 - 1e-15..=0.6 + 1e-15).contains(&x)));
    }
}
