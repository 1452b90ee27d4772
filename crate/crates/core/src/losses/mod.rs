//! Angular large-margin losses and the binary score losses.
//!
//! Angular losses take an [`AngularBatch`] and return the batch-mean value,
//! the per-sample terms and `dL/dtheta`. Chaining into feature or weight
//! gradients happens in [`crate::train`].

mod binary;
mod margin;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

pub(crate) use binary::sigmoid;
pub use binary::{double_loss, margin_sigmoid_ce, DoubleLossOutput, ScoreLossOutput, ScorePair};
pub use margin::{
    arcface_loss, combined_margin_cos_loss, combined_margin_cot_loss, cosface_loss, dual_cot_cos_loss,
    dual_cot_cos_loss_with, elastic_cot_loss, elastic_margins, elasticface_arc_loss, elasticface_cos_loss,
    generalized_lmcot_loss, generalized_lmcot_loss_with, lmcot_loss, margin_loss, norm_softmax_loss, softmax_loss,
    sphereface_loss, Margins, Trig,
};

use crate::angular::{AngularBatch, LossConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean of `per_sample`.
    pub value: f64,
    pub per_sample: Vec<f64>,
    /// Gradient of `value` w.r.t. the input matrix (angles, or logits for
    /// [`softmax_loss`]).
    pub grad: Array2<f64>,
}

/// Every angular loss, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AngularLoss {
    NormSoftmax,
    SphereFace,
    CosFace,
    ArcFace,
    ElasticArc,
    ElasticCos,
    LmCot,
    CombinedCos,
    CombinedCot,
    ElasticCot,
    GeneralizedCot,
    DualCotCos,
}

impl AngularLoss {
    pub const ALL: [AngularLoss; 12] = [
        AngularLoss::NormSoftmax,
        AngularLoss::SphereFace,
        AngularLoss::CosFace,
        AngularLoss::ArcFace,
        AngularLoss::ElasticArc,
        AngularLoss::ElasticCos,
        AngularLoss::LmCot,
        AngularLoss::CombinedCos,
        AngularLoss::CombinedCot,
        AngularLoss::ElasticCot,
        AngularLoss::GeneralizedCot,
        AngularLoss::DualCotCos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AngularLoss::NormSoftmax => "norm-softmax",
            AngularLoss::SphereFace => "sphereface",
            AngularLoss::CosFace => "cosface",
            AngularLoss::ArcFace => "arcface",
            AngularLoss::ElasticArc => "elastic-arc",
            AngularLoss::ElasticCos => "elastic-cos",
            AngularLoss::LmCot => "lmcot",
            AngularLoss::CombinedCos => "combined-cos",
            AngularLoss::CombinedCot => "combined-cot",
            AngularLoss::ElasticCot => "elastic-cot",
            AngularLoss::GeneralizedCot => "generalized-cot",
            AngularLoss::DualCotCos => "dual-cot-cos",
        }
    }

    /// Whether the target logit goes through a cotangent.
    pub fn uses_cot(self) -> bool {
        matches!(
            self,
            AngularLoss::LmCot
                | AngularLoss::CombinedCot
                | AngularLoss::ElasticCot
                | AngularLoss::GeneralizedCot
                | AngularLoss::DualCotCos
        )
    }

    pub fn evaluate(self, batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
        match self {
            AngularLoss::NormSoftmax => norm_softmax_loss(batch, cfg),
            AngularLoss::SphereFace => sphereface_loss(batch, cfg),
            AngularLoss::CosFace => cosface_loss(batch, cfg),
            AngularLoss::ArcFace => arcface_loss(batch, cfg),
            AngularLoss::ElasticArc => elasticface_arc_loss(batch, cfg),
            AngularLoss::ElasticCos => elasticface_cos_loss(batch, cfg),
            AngularLoss::LmCot => lmcot_loss(batch, cfg),
            AngularLoss::CombinedCos => combined_margin_cos_loss(batch, cfg),
            AngularLoss::CombinedCot => combined_margin_cot_loss(batch, cfg),
            AngularLoss::ElasticCot => elastic_cot_loss(batch, cfg),
            AngularLoss::GeneralizedCot => generalized_lmcot_loss(batch, cfg),
            AngularLoss::DualCotCos => dual_cot_cos_loss(batch, cfg),
        }
    }
}

impl fmt::Display for AngularLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AngularLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AngularLoss::ALL.into_iter().find(|l| l.name() == s).ok_or_else(|| Error::Config(format!("unknown loss '{s}'")))
    }
}
