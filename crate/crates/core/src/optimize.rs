//! Box-constrained Nelder-Mead.

use rand::Rng;

use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when `|f_worst - f_best| <= rel_tol * max(|f_best|, 1e-12)`.
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 500,
            rel_tol: 1e-8,
            restarts: 3,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Simplex search from `x0`, rebuilt around the best vertex until a fresh
/// simplex no longer improves (projection can collapse a simplex onto a
/// face). Infeasible points should evaluate to `+inf`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let mut m = simplex_run(f, x0, lo, hi, opts.max_iter, opts.rel_tol);
    while m.converged && m.iterations < opts.max_iter {
        let next = simplex_run(f, &m.x, lo, hi, opts.max_iter - m.iterations, opts.rel_tol);
        let improved = m.value - next.value > opts.rel_tol * m.value.abs().max(1e-12);
        let iterations = m.iterations + next.iterations.max(1);
        if !improved {
            m.iterations = iterations;
            break;
        }
        m = Minimum { iterations, ..next };
    }
    m
}

fn simplex_run<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], lo: &[f64], hi: &[f64], max_iter: usize, rel_tol: f64) -> Minimum {
    let dim = x0.len();
    let mut start = x0.to_vec();
    project(&mut start, lo, hi);
    let mut simplex = vec![start.clone()];
    for i in 0..dim {
        let mut v = start.clone();
        let step = 0.1 * (hi[i] - lo[i]).min(2.0 * v[i].abs().max(0.5));
        v[i] = if v[i] + step <= hi[i] { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let (best, worst) = (values[0], values[dim]);
        if best.is_finite() && (worst - best).abs() <= rel_tol * best.abs().max(1e-12) {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|v| v[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (w - c))
                .collect();
            project(&mut p, lo, hi);
            p
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[dim] = xe;
                values[dim] = fe;
            } else {
                simplex[dim] = xr;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = xr;
            values[dim] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[dim] {
            let x = along(-0.5);
            let v = f(&x);
            (x, v)
        } else {
            let x = along(0.5);
            let v = f(&x);
            (x, v)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = xc;
            values[dim] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=dim {
            let mut p: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            project(&mut p, lo, hi);
            values[i] = f(&p);
            simplex[i] = p;
        }
    }
    let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

/// Best of `opts.restarts` runs: the first from `x0`, the others from
/// deterministic jitters of it.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let mut r = rng::stream(opts.seed, &[x0.len() as u64]);
    let mut best: Option<Minimum> = None;
    let mut total_iter = 0;
    for k in 0..opts.restarts.max(1) {
        let start: Vec<f64> = if k == 0 {
            x0.to_vec()
        } else {
            x0.iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (v + 0.1 * (h - l) * (r.gen::<f64>() - 0.5)).clamp(*l, *h))
                .collect()
        };
        let m = nelder_mead(f, &start, lo, hi, opts);
        total_iter += m.iterations;
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one run");
    best.iterations = total_iter;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_iter: 5000,
            rel_tol: 1e-14,
            ..Default::default()
        };
        let m = minimize(&f, &[-1.0, 1.5], &[-3.0, -3.0], &[3.0, 3.0], &opts);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3, "{:?}", m);
    }

    #[test]
    fn active_bound() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2) + (x[1] + 0.2).powi(2);
        let m = minimize(&f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-4, "{m:?}");
        assert!((m.x[1] + 0.2).abs() < 1e-3, "{m:?}");
        assert!(m.converged);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let f = |x: &[f64]| if x[0] < 0.3 { f64::INFINITY } else { (x[0] - 0.2).powi(2) };
        let m = minimize(&f, &[0.8], &[0.0], &[1.0], &NelderMeadOptions::default());
        assert!(m.value.is_finite());
        assert!((m.x[0] - 0.3).abs() < 1e-3);
    }
}
