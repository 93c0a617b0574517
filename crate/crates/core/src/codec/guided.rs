use super::cost::{CodingMode, CostModel, RdCost};
use super::frame::{Frame, SignalPlane};
use super::rdo::{cu_origin, CU_COUNT};
use crate::error::{Error, Result};
use crate::hcpm::{binarize, Decision, DecisionMap, HcpmProb, Node, PartitionTree, ThresholdSet};
use crate::CTU_SIZE;

#[derive(Clone, Debug)]
pub struct CtuEncode {
    pub tree: PartitionTree,
    pub cost: RdCost,
    pub precoded_cu_count: usize,
}

/// Result of encoding a plane CTU by CTU.
#[derive(Clone, Debug, Default)]
pub struct EncodeStats {
    pub precoded_cu_count: usize,
    pub rd_total: f64,
    pub ctus: Vec<CtuEncode>,
}

impl EncodeStats {
    pub fn push(&mut self, ctu: CtuEncode) {
        self.precoded_cu_count += ctu.precoded_cu_count;
        self.rd_total += ctu.cost.cost;
        self.ctus.push(ctu);
    }

    /// Share of the exhaustive 85-per-CTU pre-coding that was skipped.
    pub fn cu_reduction(&self) -> f64 {
        if self.ctus.is_empty() {
            return 0.0;
        }
        1.0 - self.precoded_cu_count as f64 / (CU_COUNT * self.ctus.len()) as f64
    }
}

fn cell_index(depth: usize, z: usize) -> usize {
    [0, 1, 5][depth] + z
}

/// Encodes one CTU following the predicted decisions: `Split`/`NotSplit`
/// cells are final, `Uncertain` cells compare the parent against its four
/// children locally. Every CU whose cost is evaluated counts as pre-coded.
pub fn encode_ctu_with_prediction(
    model: &CostModel,
    plane: &SignalPlane,
    ctu_index: usize,
    qp: u8,
    prob: &HcpmProb,
    thresholds: &ThresholdSet,
) -> Result<CtuEncode> {
    let (cx, cy) = plane.ctu_origin(ctu_index)?;
    let decisions = binarize(prob, thresholds);
    let flag_cost = model.split_flag_cost(qp);
    let mut precoded = 0usize;

    struct Ctx<'a> {
        model: &'a CostModel,
        plane: &'a SignalPlane,
        origin: (usize, usize),
        qp: u8,
        decisions: DecisionMap,
        flag_cost: f64,
    }

    fn node_cost(ctx: &Ctx, depth: usize, z: usize, precoded: &mut usize) -> RdCost {
        let (x, y) = cu_origin(depth, z);
        *precoded += 1;
        ctx.model.block_cost(
            ctx.plane,
            ctx.origin.0 + x,
            ctx.origin.1 + y,
            CTU_SIZE >> depth,
            ctx.qp,
        )
    }

    fn children(ctx: &Ctx, depth: usize, z: usize, precoded: &mut usize) -> (Node, RdCost) {
        let mut acc = RdCost::default();
        let mut kids = [Node::Leaf, Node::Leaf, Node::Leaf, Node::Leaf];
        for (m, kid) in kids.iter_mut().enumerate() {
            let (n, c) = visit(ctx, depth + 1, z * 4 + m, precoded);
            *kid = n;
            acc.distortion += c.distortion;
            acc.rate += c.rate;
            acc.cost += c.cost;
            acc.lambda = c.lambda;
        }
        acc.rate += ctx.model.split_flag_bits;
        acc.cost += ctx.flag_cost;
        (Node::Split(Box::new(kids)), acc)
    }

    fn visit(ctx: &Ctx, depth: usize, z: usize, precoded: &mut usize) -> (Node, RdCost) {
        if depth == 3 {
            return (Node::Leaf, node_cost(ctx, depth, z, precoded));
        }
        match ctx.decisions.get(cell_index(depth, z)) {
            Decision::NotSplit => (Node::Leaf, node_cost(ctx, depth, z, precoded)),
            Decision::Split => children(ctx, depth, z, precoded),
            Decision::Uncertain => {
                let own = node_cost(ctx, depth, z, precoded);
                let (n, c) = children(ctx, depth, z, precoded);
                if c.cost < own.cost {
                    (n, c)
                } else {
                    (Node::Leaf, own)
                }
            }
        }
    }

    let ctx = Ctx {
        model,
        plane,
        origin: (cx, cy),
        qp,
        decisions,
        flag_cost,
    };
    let (root, cost) = visit(&ctx, 0, 0, &mut precoded);
    Ok(CtuEncode {
        tree: PartitionTree { root },
        cost,
        precoded_cu_count: precoded,
    })
}

/// Prediction-guided encoding of a whole plane; `probs` holds one map per
/// CTU in raster order.
pub fn encode_with_prediction(
    model: &CostModel,
    plane: &SignalPlane,
    qp: u8,
    probs: &[HcpmProb],
    thresholds: &ThresholdSet,
) -> Result<EncodeStats> {
    if probs.len() != plane.ctu_count() {
        return Err(Error::arg(format!(
            "{} probability maps for {} CTUs",
            probs.len(),
            plane.ctu_count()
        )));
    }
    thresholds.validate()?;
    let mut stats = EncodeStats::default();
    for (i, p) in probs.iter().enumerate() {
        stats.push(encode_ctu_with_prediction(model, plane, i, qp, p, thresholds)?);
    }
    Ok(stats)
}

impl EncodeStats {
    /// Convenience wrapper building the signal plane from a frame.
    pub fn encode_frame(
        frame: &Frame,
        mode: CodingMode,
        reference: Option<&Frame>,
        qp: u8,
        probs: &[HcpmProb],
        thresholds: &ThresholdSet,
    ) -> Result<EncodeStats> {
        let plane = match mode {
            CodingMode::Intra => SignalPlane::from_frame(frame),
            CodingMode::Inter => SignalPlane::residual(frame, reference)?,
        };
        encode_with_prediction(&CostModel::default(), &plane, qp, probs, thresholds)
    }
}
