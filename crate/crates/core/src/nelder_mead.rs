//! Derivative-free simplex minimization.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop once every vertex lies within this distance of the best one.
    pub diameter_tol: f64,
    pub max_evals: usize,
    /// Initial simplex edge along each axis.
    pub initial_step: f64,
    /// Number of restarts from the best vertex after the first convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            diameter_tol: 1e-6,
            max_evals: 2000,
            initial_step: 0.1,
            restarts: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0`. Non-finite values are treated as `+inf`.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = x0.to_vec();
    let mut best_val = eval(&best, &mut evals);
    let mut converged = false;
    for _ in 0..=opts.restarts {
        let (x, v, c) = run(&mut eval, &best, best_val, opts, &mut evals);
        if v <= best_val {
            best = x;
            best_val = v;
        }
        converged = c;
        if evals >= opts.max_evals {
            break;
        }
    }
    NelderMeadResult {
        x: best,
        value: best_val,
        evals,
        converged,
    }
}

fn run<E>(
    eval: &mut E,
    x0: &[f64],
    f0: f64,
    opts: NelderMeadOptions,
    evals: &mut usize,
) -> (Vec<f64>, f64, bool)
where
    E: FnMut(&[f64], &mut usize) -> f64,
{
    let dim = x0.len();
    if dim == 0 {
        return (Vec::new(), f0, true);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f0));
    for k in 0..dim {
        let mut v = x0.to_vec();
        v[k] += opts.initial_step;
        let fv = eval(&v, evals);
        simplex.push((v, fv));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            let (x, v) = simplex.swap_remove(0);
            return (x, v, true);
        }
        if *evals >= opts.max_evals {
            let (x, v) = simplex.swap_remove(0);
            return (x, v, false);
        }

        let mut centroid = vec![0.0; dim];
        for (v, _) in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let towards = |coef: f64, worst: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + coef * (w - c))
                .collect()
        };
        let worst = simplex[dim].0.clone();
        let f_worst = simplex[dim].1;
        let f_second = simplex[dim - 1].1;
        let f_best = simplex[0].1;

        let xr = towards(-alpha, &worst);
        let fr = eval(&xr, evals);
        if fr < f_best {
            let xe = towards(-alpha * gamma, &worst);
            let fe = eval(&xe, evals);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = towards(-alpha * rho, &worst);
            let fc = eval(&xc, evals);
            (xc, fc)
        } else {
            let xc = towards(rho, &worst);
            let fc = eval(&xc, evals);
            (xc, fc)
        };
        if fc < f_worst.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let v: Vec<f64> = best
                .iter()
                .zip(&vertex.0)
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            let fv = eval(&v, evals);
            *vertex = (v, fv);
        }
    }
}
