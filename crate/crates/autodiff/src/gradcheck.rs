//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// One probed coordinate: parameter index, flat element index, analytic and
/// numeric derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub param: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a - n| / max(|a|, |n|)`, or the absolute difference when both
    /// magnitudes are below `floor`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        let diff = (self.analytic - self.numeric).abs();
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale < floor {
            diff
        } else {
            diff / scale
        }
    }
}

/// Builds a scalar loss from leaf variables registered in parameter order.
pub trait LossFn: Fn(&mut Tape<f64>, &[Var]) -> Result<Var> {}
impl<F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>> LossFn for F {}

fn eval(params: &[Tensor<f64>], f: &impl LossFn) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p)).collect();
    let loss = f(&mut tape, &vars)?;
    Ok(tape.value(loss)[0])
}

/// Analytic gradients of `f` for every parameter.
pub fn analytic(params: &[Tensor<f64>], f: &impl LossFn) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok(params
        .iter()
        .zip(&vars)
        .map(|(p, &v)| {
            grads
                .wrt(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; p.len()])
        })
        .collect())
}

/// Compares analytic and central-difference derivatives at the given
/// `(param, element)` coordinates.
pub fn check(
    params: &[Tensor<f64>],
    f: &impl LossFn,
    coords: &[(usize, usize)],
    eps: f64,
) -> Result<Vec<Probe>> {
    let grads = analytic(params, f)?;
    let mut work = params.to_vec();
    let mut probes = Vec::with_capacity(coords.len());
    for &(pi, ei) in coords {
        let orig = work[pi].data()[ei];
        work[pi].data_mut()[ei] = orig + eps;
        let plus = eval(&work, f)?;
        work[pi].data_mut()[ei] = orig - eps;
        let minus = eval(&work, f)?;
        work[pi].data_mut()[ei] = orig;
        probes.push(Probe {
            param: pi,
            element: ei,
            analytic: grads[pi][ei],
            numeric: (plus - minus) / (2.0 * eps),
        });
    }
    Ok(probes)
}

/// Every coordinate of every parameter that requires grad.
pub fn all_coords(params: &[Tensor<f64>]) -> Vec<(usize, usize)> {
    params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.requires_grad())
        .flat_map(|(i, p)| (0..p.len()).map(move |e| (i, e)))
        .collect()
}
