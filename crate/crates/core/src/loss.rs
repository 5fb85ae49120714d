//! Hybrid segmentation loss and the combined training objective.

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::real::Real;

/// Per-level terms, finest level first.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub l_bce: [f64; 3],
    pub l_iou: [f64; 3],
    pub l_seg: [f64; 3],
    pub l_c: f64,
    pub total: f64,
}

impl LossReport {
    pub fn seg_total(&self) -> f64 {
        self.l_seg.iter().sum()
    }
}

/// `BCE + IoU` for one prediction map; returns `(loss, bce, iou)`.
pub fn seg_loss<T: Real>(g: &mut Graph<T>, logits: Var, target: Var) -> Result<(Var, Var, Var)> {
    let bce = g.bce_with_logits(logits, target)?;
    let iou = g.iou_loss(logits, target)?;
    Ok((g.add(bce, iou)?, bce, iou))
}

/// `Σᵢ L_seg(Pᵢ, G) + L_c`. `preds` must already match the target size.
pub fn total_loss<T: Real>(
    g: &mut Graph<T>,
    preds: [Var; 3],
    target: Var,
    l_c: Option<Var>,
) -> Result<(Var, LossReport)> {
    let mut r = LossReport::default();
    let mut total: Option<Var> = None;
    for (i, &p) in preds.iter().enumerate() {
        let (seg, bce, iou) = seg_loss(g, p, target)?;
        r.l_bce[i] = g.value(bce).data()[0].f64();
        r.l_iou[i] = g.value(iou).data()[0].f64();
        r.l_seg[i] = g.value(seg).data()[0].f64();
        total = Some(match total {
            None => seg,
            Some(t) => g.add(t, seg)?,
        });
    }
    let mut total = total.expect("three levels");
    if let Some(c) = l_c {
        r.l_c = g.value(c).data()[0].f64();
        total = g.add(total, c)?;
    }
    r.total = g.value(total).data()[0].f64();
    Ok((total, r))
}
