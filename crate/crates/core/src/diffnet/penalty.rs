//! Input-gradient penalty `mean_b (||d critic_b / d x_b||_2 - 1)^2` and its
//! parameter gradient by double backpropagation.
//!
//! With `g_b` the input gradient of sample `b` and `v_b = 2 (||g_b|| - 1)
//! g_b / ||g_b||`, the parameter gradient of the penalty equals the parameter
//! gradient of `mean_b <v_b, g_b>` with `v` held fixed. `<v_b, g_b>` is the
//! directional derivative of the critic along `v_b`, which the graph computes
//! as a forward-mode tangent; reverse mode over that tangent gives the
//! second-order term.

use super::{Graph, Matrix, NodeId, ParamId, ParamStore, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradientPenalty {
    critic: NodeId,
    input: NodeId,
    direction: NodeId,
    objective: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyEval {
    /// Batch mean of `(||g|| - 1)^2`.
    pub penalty: f64,
    /// d penalty / d parameter, aligned with the `wrt` list.
    pub grads: Vec<Matrix>,
    /// Per-sample input-gradient norms.
    pub norms: Vec<f64>,
    /// Samples whose input gradient was exactly zero. They contribute a
    /// penalty of 1 and no parameter gradient.
    pub degenerate: usize,
}

impl GradientPenalty {
    /// Extends `graph` with the tangent nodes needed to differentiate the
    /// penalty of `critic` (rows x 1, one score per sample) with respect to
    /// the leaf `input`.
    pub fn attach(graph: &mut Graph, critic: NodeId, input: NodeId) -> Result<Self> {
        let (rows, cols) = graph.shape(critic);
        if cols != 1 {
            return Err(Error::Shape(format!(
                "critic output is {rows}x{cols}, expected one column"
            )));
        }
        if graph.shape(input).0 != rows {
            return Err(Error::Shape("critic and input disagree on batch size".into()));
        }
        if !matches!(graph.op(input), super::Op::Input(_) | super::Op::Aux) {
            return Err(Error::Unsupported("penalty input must be a leaf".into()));
        }
        let (ir, ic) = graph.shape(input);
        let direction = graph.aux(ir, ic);
        let tangent = graph.jvp(input, direction, critic)?;
        let objective = graph.mean(tangent);
        Ok(GradientPenalty {
            critic,
            input,
            direction,
            objective,
        })
    }

    pub fn critic(&self) -> NodeId {
        self.critic
    }

    /// Computes the penalty and its gradient for the parameters in `wrt`.
    /// Overwrites the direction leaf in `tape`; primal values are untouched.
    pub fn evaluate(
        &self,
        graph: &Graph,
        tape: &mut Tape,
        params: &ParamStore,
        wrt: &[ParamId],
    ) -> Result<PenaltyEval> {
        let rows = graph.shape(self.critic).0;
        let input_grad = graph
            .backward(tape, self.critic, Matrix::filled(rows, 1, 1.0), &[self.input])?
            .remove(0);

        let mut direction = Matrix::zeros(input_grad.rows(), input_grad.cols());
        let mut norms = Vec::with_capacity(rows);
        let mut total = 0.0;
        let mut degenerate = 0;
        for r in 0..rows {
            let g = input_grad.row(r);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(norm);
            total += (norm - 1.0) * (norm - 1.0);
            if norm == 0.0 {
                degenerate += 1;
                continue;
            }
            let factor = 2.0 * (norm - 1.0) / norm;
            for (d, v) in direction.row_mut(r).iter_mut().zip(g) {
                *d = factor * v;
            }
        }
        let penalty = total / rows as f64;

        graph.set_leaf(tape, params, self.direction, direction)?;
        let grads = graph.grad_params(tape, self.objective, params, wrt)?;
        Ok(PenaltyEval {
            penalty,
            grads,
            norms,
            degenerate,
        })
    }
}
