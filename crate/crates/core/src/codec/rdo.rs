use super::cost::{CostModel, RdCost};
use super::frame::SignalPlane;
use super::guided::{CtuEncode, EncodeStats};
use crate::error::Result;
use crate::hcpm::{Node, PartitionTree};
use crate::CTU_SIZE;

/// CUs checked by exhaustive RDO in one CTU: 1 + 4 + 16 + 64.
pub const CU_COUNT: usize = 85;

const DEPTH_OFFSET: [usize; 4] = [0, 1, 5, 21];

/// Top-left corner (relative to the CTU) of the CU with z-order index `z`
/// at `depth`.
pub(crate) fn cu_origin(depth: usize, z: usize) -> (usize, usize) {
    let (mut x, mut y) = (0, 0);
    for level in 0..depth {
        let quad = (z >> (2 * (depth - 1 - level))) & 3;
        let half = CTU_SIZE >> (level + 1);
        x += (quad & 1) * half;
        y += (quad >> 1) * half;
    }
    (x, y)
}

/// Costs of all 85 candidate CUs of one CTU.
#[derive(Clone, Debug)]
pub struct CuCostTable {
    pub flag_cost: f64,
    pub split_flag_bits: f64,
    costs: Vec<RdCost>,
}

impl CuCostTable {
    pub fn compute(model: &CostModel, plane: &SignalPlane, ctu_index: usize, qp: u8) -> Result<Self> {
        let (cx, cy) = plane.ctu_origin(ctu_index)?;
        let mut costs = Vec::with_capacity(CU_COUNT);
        for depth in 0..4 {
            let size = CTU_SIZE >> depth;
            for z in 0..(1 << (2 * depth)) {
                let (x, y) = cu_origin(depth, z);
                costs.push(model.block_cost(plane, cx + x, cy + y, size, qp));
            }
        }
        Ok(CuCostTable {
            flag_cost: model.split_flag_cost(qp),
            split_flag_bits: model.split_flag_bits,
            costs,
        })
    }

    pub fn get(&self, depth: usize, z: usize) -> &RdCost {
        &self.costs[DEPTH_OFFSET[depth] + z]
    }
}

/// Aggregated cost of a partition: `J` accumulates bottom-up as
/// `Σ children + λ·flag`, matching the comparison order of the RDO search.
pub fn tree_cost(tree: &PartitionTree, table: &CuCostTable) -> RdCost {
    fn walk(n: &Node, depth: usize, z: usize, t: &CuCostTable) -> RdCost {
        match n {
            Node::Leaf => *t.get(depth, z),
            Node::Split(children) => {
                let mut acc = RdCost::default();
                for (m, c) in children.iter().enumerate() {
                    let sub = walk(c, depth + 1, z * 4 + m, t);
                    acc.distortion += sub.distortion;
                    acc.rate += sub.rate;
                    acc.cost += sub.cost;
                    acc.lambda = sub.lambda;
                }
                acc.rate += t.split_flag_bits;
                acc.cost += t.flag_cost;
                acc
            }
        }
    }
    walk(&tree.root, 0, 0, table)
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub tree: PartitionTree,
    pub cost: RdCost,
    pub precoded_cu_count: usize,
}

/// Exhaustive RDO over one CTU: every one of the 85 CUs is pre-coded, then a
/// parent is split iff `Σ J_sub + λ·flag_bits < J_parent`.
pub fn oracle_rdo(model: &CostModel, plane: &SignalPlane, ctu_index: usize, qp: u8) -> Result<OracleResult> {
    let table = CuCostTable::compute(model, plane, ctu_index, qp)?;
    Ok(oracle_from_table(&table))
}

pub(crate) fn oracle_from_table(table: &CuCostTable) -> OracleResult {
    fn best(depth: usize, z: usize, t: &CuCostTable) -> (Node, RdCost) {
        let own = *t.get(depth, z);
        if depth == 3 {
            return (Node::Leaf, own);
        }
        let mut acc = RdCost::default();
        let mut kids: [Node; 4] = [Node::Leaf, Node::Leaf, Node::Leaf, Node::Leaf];
        for (m, kid) in kids.iter_mut().enumerate() {
            let (n, c) = best(depth + 1, z * 4 + m, t);
            *kid = n;
            acc.distortion += c.distortion;
            acc.rate += c.rate;
            acc.cost += c.cost;
            acc.lambda = c.lambda;
        }
        acc.rate += t.split_flag_bits;
        acc.cost += t.flag_cost;
        if acc.cost < own.cost {
            (Node::Split(Box::new(kids)), acc)
        } else {
            (Node::Leaf, own)
        }
    }
    let (root, cost) = best(0, 0, table);
    OracleResult {
        tree: PartitionTree { root },
        cost,
        precoded_cu_count: CU_COUNT,
    }
}

/// Oracle RDO over every CTU of a plane.
pub fn oracle_frame(model: &CostModel, plane: &SignalPlane, qp: u8) -> Result<EncodeStats> {
    let mut stats = EncodeStats::default();
    for i in 0..plane.ctu_count() {
        let r = oracle_rdo(model, plane, i, qp)?;
        stats.push(CtuEncode {
            tree: r.tree,
            cost: r.cost,
            precoded_cu_count: r.precoded_cu_count,
        });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Frame;
    use crate::hcpm::enumerate_partitions;

    fn plane_from(f: impl Fn(usize, usize) -> u8) -> SignalPlane {
        let luma = (0..64 * 64).map(|i| f(i % 64, i / 64)).collect();
        SignalPlane::from_frame(&Frame::new(64, 64, luma).unwrap())
    }

    #[test]
    fn z_order_origins() {
        assert_eq!(cu_origin(0, 0), (0, 0));
        assert_eq!(cu_origin(1, 3), (32, 32));
        assert_eq!(cu_origin(2, 1), (16, 0));
        assert_eq!(cu_origin(2, 6), (32, 16));
        assert_eq!(cu_origin(3, 63), (56, 56));
    }

    #[test]
    fn constant_ctu_stays_whole() {
        let p = plane_from(|_, _| 140);
        for qp in crate::DEFAULT_QPS {
            let r = oracle_rdo(&CostModel::default(), &p, 0, qp).unwrap();
            assert_eq!(r.tree, PartitionTree::unsplit());
            assert_eq!(r.precoded_cu_count, 85);
        }
    }

    #[test]
    fn distinct_textured_quadrants_split_at_level_one() {
        let p = plane_from(|x, y| {
            let base = [20u8, 220, 90, 160][2 * (y / 32) + x / 32];
            base.wrapping_add(((x * 13 + y * 7) % 5) as u8)
        });
        for qp in crate::DEFAULT_QPS {
            let r = oracle_rdo(&CostModel::default(), &p, 0, qp).unwrap();
            assert!(matches!(r.tree.root, Node::Split(_)), "qp {}", qp);
        }
    }

    #[test]
    fn oracle_cost_is_the_minimum_over_all_partitions() {
        let p = plane_from(|x, y| ((x * x + 3 * y) % 97) as u8 + if x > 40 { 100 } else { 0 });
        let table = CuCostTable::compute(&CostModel::default(), &p, 0, 27).unwrap();
        let best = oracle_from_table(&table);
        let min = enumerate_partitions(3)
            .iter()
            .map(|t| tree_cost(t, &table).cost)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best.cost.cost, min);
        assert_eq!(tree_cost(&best.tree, &table).cost, best.cost.cost);
    }
}
