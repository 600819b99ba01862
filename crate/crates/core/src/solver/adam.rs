//! Adam moments and a monotone descent loop built on them.

use crate::error::Result;

#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub(crate) fn new(lr: f64, dim: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// The update to subtract from the iterate for gradient `g`.
    pub(crate) fn step(&mut self, g: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(i, gi)| {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * gi;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * gi * gi;
                self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps)
            })
            .collect()
    }
}

pub(crate) struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    pub accepted: usize,
}

/// Adam on `value_grad` where every trial point must strictly decrease the
/// objective; rejected steps are halved up to 20 times before giving up.
///
/// `precondition` maps `(x, gradient)` to the direction fed to Adam and
/// `project` is applied to every trial point.
pub(crate) fn monotone_adam(
    x0: Vec<f64>,
    lr: f64,
    iters: usize,
    value: impl Fn(&[f64]) -> Result<f64>,
    value_grad: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    precondition: impl Fn(&[f64], Vec<f64>) -> Vec<f64>,
    project: impl Fn(&mut [f64]),
) -> Result<DescentOutcome> {
    let mut x = x0;
    let (mut fx, mut g) = value_grad(&x)?;
    let mut adam = Adam::new(lr, x.len());
    let mut accepted = 0;
    let mut fresh = true;
    let mut it = 0;
    while it < iters {
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        let step = adam.step(&precondition(&x, g.clone()));
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..=20 {
            let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - scale * s).collect();
            project(&mut trial);
            if let Ok(f) = value(&trial) {
                if f < fx {
                    next = Some(trial);
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some(trial) = next else {
            // momentum may point uphill; retry once from fresh moments
            if fresh {
                break;
            }
            adam = Adam::new(lr, x.len());
            fresh = true;
            continue;
        };
        let (f, gr) = value_grad(&trial)?;
        x = trial;
        fx = f;
        g = gr;
        accepted += 1;
        fresh = false;
        it += 1;
    }
    Ok(DescentOutcome { x, value: fx, accepted })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_has_length_lr() {
        let mut a = Adam::new(0.01, 2);
        let s = a.step(&[3.0, -0.2]);
        assert!((s[0] - 0.01).abs() < 1e-9 && (s[1] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn monotone_descent_on_quadratic() {
        let f = |x: &[f64]| Ok((x[0] - 1.0).powi(2) + 10.0 * (x[1] + 0.5).powi(2));
        let fg = |x: &[f64]| Ok((f(x)?, vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 0.5)]));
        let out = monotone_adam(vec![0.0, 0.0], 0.05, 2000, f, fg, |_, g| g, |_| {}).unwrap();
        assert!(out.value < 1e-6);
        // a stationary start is returned untouched
        let out = monotone_adam(vec![1.0, -0.5], 0.05, 100, f, fg, |_, g| g, |_| {}).unwrap();
        assert_eq!(out.x, vec![1.0, -0.5]);
        assert_eq!(out.accepted, 0);
    }
}
