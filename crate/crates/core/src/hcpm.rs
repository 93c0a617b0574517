//! Hierarchical CU partition map (HCPM).
//!
//! One 64×64 CTU is described by 21 ternary labels: one for the CTU itself,
//! four for its 32×32 quadrants and sixteen for the 16×16 blocks. 8×8 CUs
//! have no label of their own; a 16×16 block labelled `Split` is divided into
//! four 8×8 leaves.
//!
//! Cells are ordered level by level in raster order: index 0 is the CTU,
//! indices `1 + i` are quadrants (`i = 2·row + col`), indices `5 + 4·i + j`
//! are the sub-blocks `j` (raster within quadrant `i`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of labels in one HCPM.
pub const HCPM_CELLS: usize = 21;

/// Encoded size of a label block in dataset records.
pub const LABEL_BYTES: usize = HCPM_CELLS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Label {
    NotSplit = 0,
    Split = 1,
    Null = 255,
}

impl Label {
    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Label::NotSplit),
            1 => Ok(Label::Split),
            255 => Ok(Label::Null),
            _ => Err(Error::MalformedHcpm(format!("label byte {}", b))),
        }
    }

    pub fn is_split(self) -> bool {
        self == Label::Split
    }
}

/// HCPM level (1, 2 or 3) of a cell index.
pub fn level_of(cell: usize) -> usize {
    match cell {
        0 => 1,
        1..=4 => 2,
        5..=20 => 3,
        _ => panic!("cell index {} out of range", cell),
    }
}

/// Parent cell of a level-2/3 cell.
pub fn parent_of(cell: usize) -> Option<usize> {
    match cell {
        0 => None,
        1..=4 => Some(0),
        5..=20 => Some(1 + (cell - 5) / 4),
        _ => None,
    }
}

/// Cell range of one level.
pub fn level_cells(level: usize) -> std::ops::Range<usize> {
    match level {
        1 => 0..1,
        2 => 1..5,
        3 => 5..21,
        _ => panic!("level {} out of range", level),
    }
}

/// Cell index of the CU at `depth` (0..=2) whose top-left corner is
/// `(x, y)` inside the CTU.
pub fn cell_at(depth: usize, x: usize, y: usize) -> usize {
    match depth {
        0 => 0,
        1 => 1 + 2 * (y / 32) + x / 32,
        2 => {
            let quad = 2 * (y / 32) + x / 32;
            5 + 4 * quad + 2 * ((y % 32) / 16) + (x % 32) / 16
        }
        _ => panic!("depth {} has no HCPM cell", depth),
    }
}

/// Ternary label map of one CTU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Hcpm {
    cells: [Label; HCPM_CELLS],
}

impl Hcpm {
    /// Builds and validates a map from its 21 cells.
    pub fn from_cells(cells: [Label; HCPM_CELLS]) -> Result<Self> {
        let h = Hcpm { cells };
        h.validate()?;
        Ok(h)
    }

    /// The single 64×64 CU partition.
    pub fn unsplit() -> Self {
        let mut cells = [Label::Null; HCPM_CELLS];
        cells[0] = Label::NotSplit;
        Hcpm { cells }
    }

    pub fn cells(&self) -> &[Label; HCPM_CELLS] {
        &self.cells
    }

    pub fn level1(&self) -> Label {
        self.cells[0]
    }

    pub fn level2(&self) -> &[Label] {
        &self.cells[1..5]
    }

    pub fn level3(&self) -> &[Label] {
        &self.cells[5..21]
    }

    /// Checks the null-nesting rules: level 1 is never null, and a cell is
    /// null exactly when its parent is not `Split`.
    pub fn validate(&self) -> Result<()> {
        if self.cells[0] == Label::Null {
            return Err(Error::MalformedHcpm("level-1 label is null".into()));
        }
        for cell in 1..HCPM_CELLS {
            let parent = self.cells[parent_of(cell).unwrap()];
            let should_be_null = parent != Label::Split;
            if should_be_null != (self.cells[cell] == Label::Null) {
                return Err(Error::MalformedHcpm(format!(
                    "cell {} is {:?} under parent {:?}",
                    cell, self.cells[cell], parent
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> [u8; LABEL_BYTES] {
        let mut out = [0u8; LABEL_BYTES];
        for (o, l) in out.iter_mut().zip(&self.cells) {
            *o = *l as u8;
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != LABEL_BYTES {
            return Err(Error::shape(LABEL_BYTES, bytes.len()));
        }
        let mut cells = [Label::Null; HCPM_CELLS];
        for (c, &b) in cells.iter_mut().zip(bytes) {
            *c = Label::from_byte(b)?;
        }
        Hcpm::from_cells(cells)
    }

    /// Per-cell training targets and validity mask (null cells masked out).
    pub fn targets(&self) -> ([f32; HCPM_CELLS], [f32; HCPM_CELLS]) {
        let mut y = [0.0; HCPM_CELLS];
        let mut m = [0.0; HCPM_CELLS];
        for (i, l) in self.cells.iter().enumerate() {
            match l {
                Label::Split => {
                    y[i] = 1.0;
                    m[i] = 1.0;
                }
                Label::NotSplit => m[i] = 1.0,
                Label::Null => {}
            }
        }
        (y, m)
    }
}

/// Quad-tree node. Depth is implied by position (root = depth 0).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Leaf,
    Split(Box<[Node; 4]>),
}

impl Node {
    fn split(children: [Node; 4]) -> Node {
        Node::Split(Box::new(children))
    }
}

/// Quad-tree partition of one 64×64 CTU (max depth 3, i.e. 8×8 leaves).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PartitionTree {
    pub root: Node,
}

/// A leaf CU: top-left corner inside the CTU and edge length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeafCu {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub depth: usize,
}

impl PartitionTree {
    pub fn unsplit() -> Self {
        PartitionTree { root: Node::Leaf }
    }

    pub fn full_depth() -> Self {
        fn build(depth: usize) -> Node {
            if depth == 3 {
                Node::Leaf
            } else {
                Node::split([build(depth + 1), build(depth + 1), build(depth + 1), build(depth + 1)])
            }
        }
        PartitionTree { root: build(0) }
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf => 0,
                Node::Split(c) => 1 + c.iter().map(walk).max().unwrap_or(0),
            }
        }
        walk(&self.root)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() > 3 {
            return Err(Error::MalformedHcpm(format!("tree depth {} exceeds 3", self.depth())));
        }
        Ok(())
    }

    /// Leaves in z-order.
    pub fn leaves(&self) -> Vec<LeafCu> {
        fn walk(n: &Node, x: usize, y: usize, size: usize, depth: usize, out: &mut Vec<LeafCu>) {
            match n {
                Node::Leaf => out.push(LeafCu { x, y, size, depth }),
                Node::Split(c) => {
                    let h = size / 2;
                    for (i, child) in c.iter().enumerate() {
                        walk(child, x + (i % 2) * h, y + (i / 2) * h, h, depth + 1, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 0, 0, 64, 0, &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    pub fn split_count(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf => 0,
                Node::Split(c) => 1 + c.iter().map(walk).sum::<usize>(),
            }
        }
        walk(&self.root)
    }

    /// Depth of the leaf covering each 16×16 unit, raster order over the
    /// 4×4 unit grid; a unit divided into 8×8 CUs reports depth 3.
    pub fn unit_depths(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        for leaf in self.leaves() {
            let (ux, uy) = (leaf.x / 16, leaf.y / 16);
            let span = (leaf.size / 16).max(1);
            for dy in 0..span {
                for dx in 0..span {
                    out[(uy + dy) * 4 + ux + dx] = leaf.depth as u8;
                }
            }
        }
        out
    }
}

pub fn tree_to_hcpm(tree: &PartitionTree) -> Result<Hcpm> {
    tree.validate()?;
    let mut cells = [Label::Null; HCPM_CELLS];
    cells[0] = Label::NotSplit;
    if let Node::Split(quads) = &tree.root {
        cells[0] = Label::Split;
        for (i, q) in quads.iter().enumerate() {
            cells[1 + i] = Label::NotSplit;
            if let Node::Split(blocks) = q {
                cells[1 + i] = Label::Split;
                for (j, b) in blocks.iter().enumerate() {
                    cells[5 + 4 * i + j] = match b {
                        Node::Leaf => Label::NotSplit,
                        Node::Split(_) => Label::Split,
                    };
                }
            }
        }
    }
    Hcpm::from_cells(cells)
}

pub fn hcpm_to_tree(h: &Hcpm) -> Result<PartitionTree> {
    h.validate()?;
    let c = h.cells();
    let leaf4 = || [Node::Leaf, Node::Leaf, Node::Leaf, Node::Leaf];
    if !c[0].is_split() {
        return Ok(PartitionTree::unsplit());
    }
    let quad = |i: usize| {
        if !c[1 + i].is_split() {
            return Node::Leaf;
        }
        let block = |j: usize| {
            if c[5 + 4 * i + j].is_split() {
                Node::split(leaf4())
            } else {
                Node::Leaf
            }
        };
        Node::split([block(0), block(1), block(2), block(3)])
    };
    Ok(PartitionTree {
        root: Node::split([quad(0), quad(1), quad(2), quad(3)]),
    })
}

/// Number of legal partitions of one CTU with at most `max_depth` splits
/// along any path: `N(0) = 1`, `N(d) = 1 + N(d−1)^4`.
pub fn count_partition_patterns(max_depth: u32) -> Result<u64> {
    if !(1..=3).contains(&max_depth) {
        return Err(Error::arg(format!("max_depth {} not in 1..=3", max_depth)));
    }
    Ok((0..max_depth).fold(1u64, |n, _| 1 + n.pow(4)))
}

/// Every legal partition tree with depth ≤ `max_depth`.
pub fn enumerate_partitions(max_depth: u32) -> Vec<PartitionTree> {
    fn nodes(remaining: u32) -> Vec<Node> {
        let mut out = vec![Node::Leaf];
        if remaining == 0 {
            return out;
        }
        let sub = nodes(remaining - 1);
        for a in &sub {
            for b in &sub {
                for c in &sub {
                    for d in &sub {
                        out.push(Node::split([a.clone(), b.clone(), c.clone(), d.clone()]));
                    }
                }
            }
        }
        out
    }
    nodes(max_depth).into_iter().map(|root| PartitionTree { root }).collect()
}

/// Split / not-split / uncertain thresholds per level.
///
/// `lower[l]` is ᾱ and `upper[l]` is α for level `l + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl ThresholdSet {
    /// Single 0.5 threshold at all levels.
    pub fn single() -> Self {
        ThresholdSet {
            lower: [0.5; 3],
            upper: [0.5; 3],
        }
    }

    /// Symmetric uncertain zones whose half-width at level `l` is
    /// `0.5·d^(2 − 0.5·l)`; `d` is the full zone width at level 2.
    pub fn from_width(d: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::arg(format!("uncertain-zone width {} outside [0, 1]", d)));
        }
        let mut t = ThresholdSet::single();
        for l in 1..=3 {
            let half = 0.5 * d.powf(2.0 - 0.5 * l as f64);
            t.upper[l - 1] = 0.5 + half;
            t.lower[l - 1] = 0.5 - half;
        }
        Ok(t)
    }

    /// Explicit per-level zones, e.g. `[(0.4, 0.6), (0.3, 0.7), (0.2, 0.8)]`.
    pub fn from_zones(zones: [(f64, f64); 3]) -> Result<Self> {
        let t = ThresholdSet {
            lower: zones.map(|z| z.0),
            upper: zones.map(|z| z.1),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for l in 0..3 {
            let (lo, hi) = (self.lower[l], self.upper[l]);
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(Error::arg(format!("level {} zone [{}, {}] invalid", l + 1, lo, hi)));
            }
        }
        Ok(())
    }

    pub fn is_single(&self) -> bool {
        self.lower == self.upper
    }

    /// Decision for a split probability at `level` (1..=3).
    ///
    /// With a degenerate zone (ᾱ = α) ties resolve to `Split`. Otherwise the
    /// closed zone `[ᾱ, α]` is uncertain.
    pub fn decide(&self, level: usize, p: f64) -> Decision {
        let (lo, hi) = (self.lower[level - 1], self.upper[level - 1]);
        if lo == hi {
            if p >= hi {
                Decision::Split
            } else {
                Decision::NotSplit
            }
        } else if p > hi {
            Decision::Split
        } else if p < lo {
            Decision::NotSplit
        } else {
            Decision::Uncertain
        }
    }
}

pub fn thresholds_from_width(d: f64) -> Result<ThresholdSet> {
    ThresholdSet::from_width(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Split,
    NotSplit,
    Uncertain,
}

/// Predicted split probabilities with per-cell validity.
///
/// Invalid cells carry probability 0 and were not emitted by the predictor
/// (early termination); consumers treat them as `NotSplit`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HcpmProb {
    pub probs: [f32; HCPM_CELLS],
    pub valid: [bool; HCPM_CELLS],
}

impl Default for HcpmProb {
    fn default() -> Self {
        HcpmProb {
            probs: [0.0; HCPM_CELLS],
            valid: [false; HCPM_CELLS],
        }
    }
}

impl HcpmProb {
    /// All cells valid with a constant probability.
    pub fn constant(p: f32) -> Self {
        HcpmProb {
            probs: [p; HCPM_CELLS],
            valid: [true; HCPM_CELLS],
        }
    }

    /// Ground-truth labels as hard probabilities; null cells become invalid.
    pub fn from_labels(h: &Hcpm) -> Self {
        let mut p = HcpmProb::default();
        for (i, l) in h.cells().iter().enumerate() {
            match l {
                Label::Split => {
                    p.probs[i] = 1.0;
                    p.valid[i] = true;
                }
                Label::NotSplit => p.valid[i] = true,
                Label::Null => {}
            }
        }
        p
    }

    pub fn prob(&self, cell: usize) -> Option<f32> {
        self.valid[cell].then_some(self.probs[cell])
    }

    /// Probabilities must lie in [0, 1]; an invalid parent implies invalid
    /// children.
    pub fn validate(&self) -> Result<()> {
        for i in 0..HCPM_CELLS {
            let p = self.probs[i];
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(format!("probability {} at cell {} outside [0, 1]", p, i)));
            }
            if let Some(par) = parent_of(i) {
                if self.valid[i] && !self.valid[par] {
                    return Err(Error::arg(format!("cell {} valid under invalid parent", i)));
                }
            }
        }
        if !self.valid[0] {
            return Err(Error::arg("level-1 probability missing"));
        }
        Ok(())
    }
}

/// Per-cell decisions; `None` marks cells without a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionMap {
    pub cells: [Option<Decision>; HCPM_CELLS],
}

impl DecisionMap {
    pub fn get(&self, cell: usize) -> Decision {
        self.cells[cell].unwrap_or(Decision::NotSplit)
    }

    pub fn uncertain_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Some(Decision::Uncertain)).count()
    }

    /// Hard partition implied by the decisions; missing and uncertain cells
    /// count as `NotSplit`.
    pub fn to_hcpm(&self) -> Hcpm {
        let mut cells = [Label::Null; HCPM_CELLS];
        for i in 0..HCPM_CELLS {
            let open = match parent_of(i) {
                None => true,
                Some(p) => cells[p] == Label::Split,
            };
            if open {
                cells[i] = if self.get(i) == Decision::Split {
                    Label::Split
                } else {
                    Label::NotSplit
                };
            }
        }
        Hcpm { cells }
    }
}

pub fn binarize(p: &HcpmProb, t: &ThresholdSet) -> DecisionMap {
    let mut cells = [None; HCPM_CELLS];
    for (i, c) in cells.iter_mut().enumerate() {
        if p.valid[i] {
            *c = Some(t.decide(level_of(i), p.probs[i] as f64));
        }
    }
    DecisionMap { cells }
}
