//! Per-instance mask optimisation: one free logit per subgraph edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::EdgeId;
use crate::numcore::{sigmoid, AdamConfig, AdamState};

use super::objective::{regularizer, TargetProblem};
use super::{EdgeExplainer, ExplainContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnExplainerConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Starting logit of every edge, so the initial mask is uniform.
    pub init_logit: f64,
    pub size_coef: f64,
    pub entropy_coef: f64,
}

impl Default for GnnExplainerConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.01,
            init_logit: 1.0,
            size_coef: 0.01,
            entropy_coef: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnExplainer {
    pub config: GnnExplainerConfig,
}

impl GnnExplainer {
    pub fn new(config: GnnExplainerConfig) -> Self {
        Self { config }
    }

    /// Total objective at `logits` with its gradient.
    pub fn objective(&self, problem: &TargetProblem<'_>, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let (ce, dce) = problem.loss_and_grad(&m)?;
        let (reg, dreg) = regularizer(&m, self.config.size_coef, self.config.entropy_coef);
        let grad = m.iter().zip(dce.iter().zip(&dreg)).map(|(&mi, (a, b))| (a + b) * mi * (1.0 - mi)).collect();
        Ok((ce + reg, grad))
    }

    /// Optimised mask logits over the target's subgraph.
    pub fn optimise(&self, problem: &TargetProblem<'_>) -> Result<Vec<f64>> {
        let mut logits = vec![self.config.init_logit; problem.len()];
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(self.config.learning_rate), &[("mask", logits.len())]);
        for step in 0..self.config.steps {
            let (loss, grad) = self.objective(problem, &logits)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("mask objective not finite at step {step}")));
            }
            adam.step(&mut [logits.as_mut_slice()], &[grad.as_slice()])?;
        }
        Ok(logits)
    }
}

impl EdgeExplainer for GnnExplainer {
    fn name(&self) -> &'static str {
        "GNNExplainer"
    }

    fn edge_logits(&self, ctx: &ExplainContext<'_>, target: EdgeId) -> Result<(Vec<EdgeId>, Vec<f64>)> {
        let problem = ctx.problem(target)?;
        let logits = self.optimise(&problem)?;
        Ok((problem.subgraph, logits))
    }
}
