//! Central finite-difference verification of network gradients.

use std::collections::BTreeMap;

use serde::Serialize;

use super::layers::ParamClass;
use super::model::Network;
use crate::error::Result;
use crate::tensor::RealTensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Gradients smaller than this are compared absolutely.
    pub floor: f64,
    /// Check at most this many evenly spaced entries per parameter tensor.
    pub max_per_tensor: Option<usize>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            max_per_tensor: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: ParamClass,
    pub checked: usize,
    /// Entries whose perturbation flipped a ReLU, where the loss is not
    /// differentiable along the probe.
    pub skipped: usize,
    pub max_rel_err: f64,
    /// `(analytic, numeric)` at the worst entry.
    pub worst: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub classes: Vec<ClassReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.classes.iter().all(|c| c.checked > 0 && c.max_rel_err <= self.tolerance)
    }

    pub fn class(&self, class: ParamClass) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class == class)
    }
}

/// Adds `delta` to entry `j` of parameter tensor `t` (in visit order).
fn nudge(net: &mut Network<f64>, t: usize, j: usize, delta: f64) {
    let mut idx = 0;
    net.visit_params(&mut |_, p, _| {
        if idx == t {
            p[j] += delta;
        }
        idx += 1;
    });
}

fn probe(net: &mut Network<f64>, images: &RealTensor<f64>, labels: &[usize], base: &[bool]) -> Result<(f64, bool)> {
    let loss = net.train_loss(images, labels)?;
    Ok((loss, net.activation_pattern() == base))
}

/// Compares backpropagated gradients with central differences of the
/// training-mode loss for every parameter class.
pub fn gradcheck(
    net: &mut Network<f64>,
    images: &RealTensor<f64>,
    labels: &[usize],
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    net.loss_and_grad(images, labels)?;
    let base = net.activation_pattern();
    let mut tensors: Vec<(ParamClass, Vec<f64>)> = Vec::new();
    net.visit_params(&mut |c, _, g| tensors.push((c, g.to_vec())));

    let mut reports: BTreeMap<ParamClass, ClassReport> = BTreeMap::new();
    let h = opts.step;
    for (t, (class, grads)) in tensors.iter().enumerate() {
        let entry = reports.entry(*class).or_insert(ClassReport {
            class: *class,
            checked: 0,
            skipped: 0,
            max_rel_err: 0.0,
            worst: (0.0, 0.0),
        });
        let n = grads.len();
        let picks: Vec<usize> = match opts.max_per_tensor {
            Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
            _ => (0..n).collect(),
        };
        for j in picks {
            // a probe that flips a ReLU is retried with smaller steps before
            // it is skipped
            let mut numeric = None;
            for step in [h, 0.1 * h, 0.01 * h] {
                nudge(net, t, j, step);
                let (lp, okp) = probe(net, images, labels, &base)?;
                nudge(net, t, j, -2.0 * step);
                let (lm, okm) = probe(net, images, labels, &base)?;
                nudge(net, t, j, step);
                if okp && okm {
                    numeric = Some((lp - lm) / (2.0 * step));
                    break;
                }
            }
            let Some(numeric) = numeric else {
                entry.skipped += 1;
                continue;
            };
            let analytic = grads[j];
            let err = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(opts.floor);
            entry.checked += 1;
            if err > entry.max_rel_err {
                entry.max_rel_err = err;
                entry.worst = (analytic, numeric);
            }
        }
    }
    Ok(GradcheckReport {
        tolerance: opts.tolerance,
        classes: reports.into_values().collect(),
    })
}
