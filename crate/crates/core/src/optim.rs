//! Full-batch gradient descent with a step-halving line search.
//!
//! A step is accepted only if it does not increase the objective, so the
//! recorded trace is non-increasing. After an accepted step the learning
//! rate grows by `growth`; a rejected step is halved and retried.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub learning_rate: f64,
    pub growth: f64,
    pub max_halvings: usize,
}

impl StepSchedule {
    pub fn new(learning_rate: f64, growth: f64) -> Self {
        StepSchedule {
            learning_rate,
            growth,
            max_halvings: 20,
        }
    }
}

/// The objective left the admissible range at `iteration` (0 = initial point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Blowup {
    pub iteration: usize,
    pub objective: f64,
}

/// Minimizes `objective` from `params` for `iterations` steps.
///
/// Objectives that are non-finite or exceed `limit` are inadmissible.
/// Returns the trace `[f(x0), f(x1), ...]` of length `iterations + 1`.
pub(crate) fn descend<F, G>(
    params: &mut Vec<f64>,
    iterations: usize,
    schedule: StepSchedule,
    limit: f64,
    objective: F,
    gradient: G,
) -> Result<Vec<f64>, Blowup>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let admissible = |f: f64| f.is_finite() && f <= limit;
    let mut current = objective(params);
    if !admissible(current) {
        return Err(Blowup {
            iteration: 0,
            objective: current,
        });
    }
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(current);
    let mut lr = schedule.learning_rate;
    let mut trial = vec![0.0; params.len()];
    for iteration in 1..=iterations {
        let grad = gradient(params);
        let mut accepted = false;
        let mut last = current;
        for _ in 0..=schedule.max_halvings {
            for ((t, p), g) in trial.iter_mut().zip(params.iter()).zip(&grad) {
                *t = p - lr * g;
            }
            last = objective(&trial);
            if admissible(last) && last <= current {
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if accepted {
            std::mem::swap(params, &mut trial);
            current = last;
            lr *= schedule.growth;
        } else if !last.is_finite() {
            return Err(Blowup {
                iteration,
                objective: last,
            });
        } else {
            // No admissible decrease within the halving budget: stationary at
            // working precision. Restart the next search from the base rate.
            lr = schedule.learning_rate;
        }
        trace.push(current);
    }
    Ok(trace)
}

/// Central finite-difference gradient, for tests.
#[cfg(test)]
pub(crate) fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges_monotonically() {
        let f = |x: &[f64]| 0.5 * (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let g = |x: &[f64]| vec![x[0] - 3.0, 4.0 * (x[1] + 1.0)];
        let mut x = vec![0.0, 0.0];
        let trace = descend(&mut x, 200, StepSchedule::new(10.0, 1.2), f64::INFINITY, f, g).unwrap();
        assert_eq!(trace.len(), 201);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((x[0] - 3.0).abs() < 1e-8 && (x[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn inadmissible_start_is_reported() {
        let mut x = vec![1.0];
        let err = descend(&mut x, 5, StepSchedule::new(0.1, 1.0), 10.0, |_| 1e20, |_| vec![0.0]).unwrap_err();
        assert_eq!(err.iteration, 0);
    }
}
