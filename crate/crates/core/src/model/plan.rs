use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::numerics::Scalar;

/// One step of the layer-by-layer schedule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    pub params: usize,
    pub maccs: u64,
}

/// Execution plan read off a materialized network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub steps: Vec<PlanStep>,
}

impl LayerPlan {
    /// Largest `in + out` over all steps: the activation memory a
    /// two-buffer schedule needs.
    pub fn peak_pair(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.in_features + s.out_features)
            .max()
            .unwrap_or(0)
    }

    pub fn params_total(&self) -> usize {
        self.steps.iter().map(|s| s.params).sum()
    }

    pub fn macc_total(&self) -> u64 {
        self.steps.iter().map(|s| s.maccs).sum()
    }
}

/// Plan derived from the parameter tensors the network actually holds.
pub fn layer_plan<T: Scalar>(net: &Network<T>) -> LayerPlan {
    let c = *net.config();
    let bn_params = |i: usize| {
        let bn = net.batch_norms()[i];
        bn.gamma.value.len() + bn.beta.value.len() + bn.running_mean.len() + bn.running_var.len()
    };
    let sw = net.spatial.weight.value.shape();
    let tw = net.temporal.weight.value.shape();
    let dw = net.depthwise.weight.value.shape();
    let pw = net.pointwise.weight.value.shape();
    let fw = net.fc.weight.value.shape();
    let l1 = c.n_s;
    let l2 = c.len_after_temporal();
    let l3 = c.len_after_separable();
    let steps = vec![
        PlanStep {
            name: "spatial".into(),
            in_features: sw[1] * l1,
            out_features: sw[0] * l1,
            params: net.spatial.weight.value.len() + bn_params(0),
            maccs: (sw[0] * sw[1] * l1) as u64,
        },
        PlanStep {
            name: "temporal".into(),
            in_features: tw[0] * l1,
            out_features: tw[0] * l2,
            params: net.temporal.weight.value.len() + bn_params(1),
            maccs: (tw[0] * tw[1] * l1) as u64,
        },
        PlanStep {
            name: "separable".into(),
            in_features: dw[0] * l2,
            out_features: pw[0] * l3,
            params: net.depthwise.weight.value.len() + net.pointwise.weight.value.len() + bn_params(2),
            maccs: ((dw[0] * dw[1] + pw[0] * pw[1]) * l2) as u64,
        },
        PlanStep {
            name: "classifier".into(),
            in_features: fw[1],
            out_features: fw[0],
            params: net.fc.weight.value.len() + net.fc.bias.value.len(),
            maccs: (fw[0] * fw[1]) as u64,
        },
    ];
    LayerPlan { steps }
}
