//! BFGS minimizer with a backtracking Armijo line search.

pub(crate) struct Settings {
    pub max_iter: usize,
    /// Converged when the gradient infinity-norm drops below this.
    pub gtol: f64,
    /// Alternative stop: relative objective change below `ftol` for
    /// `ftol_window` consecutive iterations, with gradient under `loose_gtol`.
    pub ftol: f64,
    pub ftol_window: usize,
    pub loose_gtol: f64,
    /// Largest infinity-norm of a trial step.
    pub max_step: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self { max_iter: 500, gtol: 1e-6, ftol: 1e-10, ftol_window: 3, loose_gtol: 1e-4, max_step: 1.0 }
    }
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the value and gradient or `None` outside the domain.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, s: &Settings) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (mut fx, mut g) = f(&x0)?;
    let mut x = x0;
    let mut trace = vec![fx];
    if n == 0 {
        return Some(Minimum { x, f: fx, grad: g, iterations: 0, converged: true, trace });
    }
    let identity = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h, 1.0);
    let mut fresh = true;
    let mut stall = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < s.max_iter {
        let gnorm = inf_norm(&g);
        if gnorm < s.gtol || (stall >= s.ftol_window && gnorm <= s.loose_gtol) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            identity(&mut h, 1.0);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let dn = inf_norm(&d);
        if dn > s.max_step {
            let c = s.max_step / dn;
            d.iter_mut().for_each(|v| *v *= c);
            slope *= c;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            if let Some((fnew, gnew)) = f(&xn) {
                if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if fresh {
                break;
            }
            identity(&mut h, 1.0);
            fresh = true;
            continue;
        };

        let sv: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-12 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() {
            if fresh {
                identity(&mut h, sy / dot(&yv, &yv));
                fresh = false;
            }
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &yv)).collect();
            let yhy = dot(&yv, &hy);
            let a = (sy + yhy) / (sy * sy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += a * sv[i] * sv[j] - (hy[i] * sv[j] + sv[i] * hy[j]) / sy;
                }
            }
        }

        let rel = (fx - fnew).abs() / fnew.abs().max(1.0);
        stall = if rel < s.ftol { stall + 1 } else { 0 };
        x = xn;
        fx = fnew;
        g = gnew;
        trace.push(fx);
    }
    if !converged {
        let gnorm = inf_norm(&g);
        converged = gnorm < s.gtol || (stall >= s.ftol_window && gnorm <= s.loose_gtol);
    }
    Some(Minimum { x, f: fx, grad: g, iterations, converged, trace })
}
