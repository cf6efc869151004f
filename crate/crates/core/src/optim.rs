//! Box-constrained Nelder–Mead simplex search.
//!
//! Trial points are projected onto the box before evaluation. After the
//! simplex collapses, the search is restarted once from the best vertex with a
//! fresh simplex; this catches the premature collapses Nelder–Mead is prone to
//! in narrow curved valleys.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Relative spread of function values across the simplex.
    pub f_tol: f64,
    /// Simplex diameter, relative to `1 + |x|`.
    pub x_tol: f64,
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            f_tol: 1e-13,
            x_tol: 1e-9,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

pub fn minimize<F>(mut f: F, x0: &[f64], step: &[f64], lower: &[f64], upper: &[f64], opts: SimplexOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(step.len() == n && lower.len() == n && upper.len() == n);
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    project(&mut start);
    let mut best = (start.clone(), f64::INFINITY);
    let mut converged = false;

    for _round in 0..=opts.restarts {
        // initial simplex: step away from the box edge when needed
        let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
        for i in 0..n {
            let mut v = start.clone();
            v[i] = if start[i] + step[i] <= upper[i] {
                start[i] + step[i]
            } else {
                start[i] - step[i]
            };
            project(&mut v);
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();
        converged = false;

        while evals < opts.max_evals {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let f_best = values[0];
            let f_worst = values[n];
            let spread = (f_worst - f_best).abs();
            let diam = simplex[1..]
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread <= opts.f_tol * (f_best.abs() + 1e-300) && diam <= opts.x_tol.sqrt() || diam <= opts.x_tol {
                converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = (0..n)
                    .map(|j| centroid[j] + t * (simplex[n][j] - centroid[j]))
                    .collect();
                project(&mut p);
                p
            };

            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < values[0] {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < values[n] {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            // shrink towards the best vertex
            for i in 1..=n {
                let v: Vec<f64> = (0..n)
                    .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                    .collect();
                values[i] = eval(&v, &mut evals);
                simplex[i] = v;
            }
        }

        let (ib, fb) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .unwrap();
        if fb <= best.1 {
            best = (simplex[ib].clone(), fb);
        }
        start = best.0.clone();
        if !converged {
            break;
        }
    }

    Minimum {
        x: best.0,
        f: best.1,
        evals,
        converged,
    }
}
