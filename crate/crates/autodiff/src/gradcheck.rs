//! Central finite-difference checks of analytic parameter gradients.

use crate::error::Result;
use crate::graph::{Graph, Tensor};
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    /// Coordinates probed per parameter tensor (evenly strided).
    pub max_coords: usize,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_floor: 1e-6,
            max_coords: usize::MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub failures: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

impl GradCheck {
    /// Compare the backward pass of `loss` against central differences for
    /// every (sampled) coordinate of every parameter in `store`.
    pub fn run<F>(&self, store: &ParamStore, loss: F) -> Result<GradCheckReport>
    where
        F: for<'g> Fn(&'g Graph, &ParamStore) -> Result<Tensor<'g>>,
    {
        let g = Graph::new();
        let out = loss(&g, store)?;
        g.backward(out)?;
        let analytic = g.param_grads(store);

        let eval = |s: &ParamStore| -> Result<f64> {
            let g = Graph::new();
            Ok(loss(&g, s)?.item())
        };

        let mut report = GradCheckReport::default();
        let mut probe = store.clone();
        let ids: Vec<ParamId> = store.iter().map(|(id, _)| id).collect();
        for (pi, id) in ids.into_iter().enumerate() {
            let n = store.get(id).data.len();
            let stride = n.div_ceil(self.max_coords.max(1)).max(1);
            for j in (0..n).step_by(stride) {
                let orig = store.get(id).data[j];
                probe.get_mut(id).data[j] = orig + self.step;
                let up = eval(&probe)?;
                probe.get_mut(id).data[j] = orig - self.step;
                let down = eval(&probe)?;
                probe.get_mut(id).data[j] = orig;
                let numeric = (up - down) / (2.0 * self.step);
                let a = analytic[pi][j];
                let diff = (a - numeric).abs();
                let scale = a.abs().max(numeric.abs());
                report.checked += 1;
                if scale > 0.0 {
                    report.max_rel_err = report.max_rel_err.max(diff / scale);
                }
                if diff > (self.rel_tol * scale).max(self.abs_floor) {
                    report.failures.push(Mismatch {
                        param: store.get(id).name.clone(),
                        index: j,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
        Ok(report)
    }
}
