//! A small derivative-free simplex minimiser used by the numeric modulus search.

pub(crate) struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimises `f` starting from the simplex `x0 + step * e_i`.
///
/// Non-finite values are treated as `+inf`, so the objective may signal
/// infeasible points that way.
pub(crate) fn minimize<F>(f: F, x0: &[f64], step: f64, max_iter: usize, ftol: f64) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;

        // Sort vertices by value; ties keep their previous order.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        if worst.is_finite() && (worst - best).abs() <= ftol * (1.0 + best.abs()) {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for x in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }

        let along = |coef: f64, out: &mut [f64]| {
            for j in 0..n {
                out[j] = centroid[j] + coef * (simplex[n][j] - centroid[j]);
            }
        };

        along(-1.0, &mut trial);
        let reflected = eval(&trial);
        if reflected < values[0] {
            along(-2.0, &mut trial2);
            let expanded = eval(&trial2);
            if expanded < reflected {
                simplex[n].copy_from_slice(&trial2);
                values[n] = expanded;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = reflected;
            }
            continue;
        }
        if reflected < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = reflected;
            continue;
        }

        let (coef, reference) = if reflected < values[n] {
            (-0.5, reflected)
        } else {
            (0.5, values[n])
        };
        along(coef, &mut trial2);
        let contracted = eval(&trial2);
        if contracted < reference {
            simplex[n].copy_from_slice(&trial2);
            values[n] = contracted;
            continue;
        }

        // Shrink towards the best vertex.
        let (head, tail) = simplex.split_at_mut(1);
        for (x, v) in tail.iter_mut().zip(values[1..].iter_mut()) {
            for (xi, bi) in x.iter_mut().zip(&head[0]) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = eval(x);
        }
    }

    let (best_idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is never empty");
    Minimum {
        point: simplex[best_idx].clone(),
        value: values[best_idx],
        iterations,
    }
}
