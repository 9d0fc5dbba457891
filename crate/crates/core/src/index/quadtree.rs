use std::sync::atomic::AtomicBool;

use super::{is_cancelled, Cancelled, IndexEntry, IndexKind, RangeIndex};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geo::{intersects, BoundingBox, TimeRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrant {
    NW,
    NE,
    SW,
    SE,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::NW, Quadrant::NE, Quadrant::SW, Quadrant::SE];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::NW => "NW",
            Quadrant::NE => "NE",
            Quadrant::SW => "SW",
            Quadrant::SE => "SE",
        }
    }

    pub fn of(self, b: &BoundingBox) -> BoundingBox {
        let mid_lon = (b.min_lon() + b.max_lon()) / 2.0;
        let mid_lat = (b.min_lat() + b.max_lat()) / 2.0;
        let (lon0, lon1) = match self {
            Quadrant::NW | Quadrant::SW => (b.min_lon(), mid_lon),
            Quadrant::NE | Quadrant::SE => (mid_lon, b.max_lon()),
        };
        let (lat0, lat1) = match self {
            Quadrant::NW | Quadrant::NE => (mid_lat, b.max_lat()),
            Quadrant::SW | Quadrant::SE => (b.min_lat(), mid_lat),
        };
        BoundingBox::from_bounds_unchecked(lon0, lon1, lat0, lat1)
    }
}

/// Path of quadrants from the world box down to the deepest quadrant that
/// fully contains `bbox`, at most `max_depth` steps, joined with `.`.
/// An empty path means only the world box contains it.
pub fn quadtree_path(bbox: &BoundingBox, max_depth: usize) -> String {
    let mut node = BoundingBox::WORLD;
    let mut parts = Vec::new();
    for _ in 0..max_depth {
        match Quadrant::ALL.into_iter().find(|q| q.of(&node).contains(bbox)) {
            Some(q) => {
                parts.push(q.as_str());
                node = q.of(&node);
            }
            None => break,
        }
    }
    parts.join(".")
}

#[derive(Debug, Clone)]
struct Node {
    bbox: BoundingBox,
    depth: u32,
    /// NW, NE, SW, SE
    children: Option<[u32; 4]>,
    entries: Vec<u32>,
}

/// Region quadtree over the world box with split-on-overflow leaves.
///
/// Entries that straddle a split line stay at the internal node whose
/// quadrants they cross. Nodes live in an arena; `nodes[0]` is the root.
///
/// Structure section: `leaf_capacity u32 | max_depth u32 | node_count u32`
/// followed by nodes in pre-order, each `has_children u8 | positions list`.
/// Node boxes are recomputed from the world box on decode.
#[derive(Debug)]
pub struct QuadTreeIndex {
    entries: Vec<IndexEntry>,
    nodes: Vec<Node>,
    leaf_capacity: usize,
    max_depth: usize,
}

impl QuadTreeIndex {
    pub(crate) fn build(entries: Vec<IndexEntry>, leaf_capacity: usize, max_depth: usize) -> Self {
        let mut tree = Self {
            entries,
            nodes: vec![Node {
                bbox: BoundingBox::WORLD,
                depth: 0,
                children: None,
                entries: Vec::new(),
            }],
            leaf_capacity,
            max_depth,
        };
        for pos in 0..tree.entries.len() as u32 {
            tree.insert(pos);
        }
        tree
    }

    fn child_containing(&self, node: usize, bbox: &BoundingBox) -> Option<usize> {
        let children = self.nodes[node].children?;
        children
            .into_iter()
            .map(|c| c as usize)
            .find(|&c| self.nodes[c].bbox.contains(bbox))
    }

    fn insert(&mut self, pos: u32) {
        let bbox = self.entries[pos as usize].bbox;
        let mut node = 0;
        while self.nodes[node].children.is_some() {
            match self.child_containing(node, &bbox) {
                Some(c) => node = c,
                None => break,
            }
        }
        self.nodes[node].entries.push(pos);
        self.maybe_split(node);
    }

    fn maybe_split(&mut self, node: usize) {
        let n = &self.nodes[node];
        if n.children.is_some() || n.entries.len() <= self.leaf_capacity || n.depth as usize >= self.max_depth {
            return;
        }
        let parent = n.bbox;
        let depth = n.depth + 1;
        let first = self.nodes.len() as u32;
        for q in Quadrant::ALL {
            self.nodes.push(Node {
                bbox: q.of(&parent),
                depth,
                children: None,
                entries: Vec::new(),
            });
        }
        self.nodes[node].children = Some([first, first + 1, first + 2, first + 3]);

        let pending = std::mem::take(&mut self.nodes[node].entries);
        for pos in pending {
            let bbox = self.entries[pos as usize].bbox;
            match self.child_containing(node, &bbox) {
                Some(c) => self.nodes[c].entries.push(pos),
                None => self.nodes[node].entries.push(pos),
            }
        }
        for c in first..first + 4 {
            self.maybe_split(c as usize);
        }
    }

    pub(crate) fn decode(entries: Vec<IndexEntry>, r: &mut Reader<'_>) -> Result<Self> {
        let leaf_capacity = r.u32()? as usize;
        let max_depth = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut tree = Self {
            entries,
            nodes: Vec::with_capacity(count.min(r.remaining())),
            leaf_capacity,
            max_depth,
        };
        // pre-order: a node's children are decoded right after it
        fn read_node(
            tree: &mut QuadTreeIndex,
            r: &mut Reader<'_>,
            bbox: BoundingBox,
            depth: u32,
            budget: usize,
        ) -> Result<u32> {
            if tree.nodes.len() >= budget || depth > 64 {
                return Err(Error::format("quadtree index", "node count mismatch"));
            }
            let id = tree.nodes.len();
            let has_children = r.u8()? != 0;
            let entries = r.u32_list()?;
            tree.nodes.push(Node {
                bbox,
                depth,
                children: None,
                entries,
            });
            if has_children {
                let mut ids = [0u32; 4];
                for (slot, q) in ids.iter_mut().zip(Quadrant::ALL) {
                    *slot = read_node(tree, r, q.of(&bbox), depth + 1, budget)?;
                }
                tree.nodes[id].children = Some(ids);
            }
            Ok(id as u32)
        }
        if count > 0 {
            read_node(&mut tree, r, BoundingBox::WORLD, 0, count)?;
        }
        if tree.nodes.len() != count {
            return Err(Error::format("quadtree index", "node count mismatch"));
        }
        let n = tree.entries.len() as u32;
        if tree.nodes.iter().flat_map(|n| &n.entries).any(|p| *p >= n) {
            return Err(Error::format("quadtree index", "entry position out of range"));
        }
        Ok(tree)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth as usize).max().unwrap_or(0)
    }

    /// `(parent box, child boxes)` for every internal node.
    pub fn internal_nodes(&self) -> impl Iterator<Item = (BoundingBox, [BoundingBox; 4])> + '_ {
        self.nodes.iter().filter_map(|n| {
            n.children
                .map(|c| (n.bbox, c.map(|id| self.nodes[id as usize].bbox)))
        })
    }

    /// `(node box, entry boxes, has_children)` for every node.
    pub fn node_entries(&self) -> impl Iterator<Item = (BoundingBox, Vec<BoundingBox>, bool)> + '_ {
        self.nodes.iter().map(|n| {
            let boxes = n.entries.iter().map(|p| self.entries[*p as usize].bbox).collect();
            (n.bbox, boxes, n.children.is_some())
        })
    }

    /// Children boxes of a node, if split.
    pub fn children_of(&self, node_box: &BoundingBox) -> Option<[BoundingBox; 4]> {
        self.nodes
            .iter()
            .find(|n| n.bbox == *node_box)
            .and_then(|n| n.children.map(|c| c.map(|id| self.nodes[id as usize].bbox)))
    }

    fn encode_node(&self, id: usize, w: &mut Writer) {
        let n = &self.nodes[id];
        w.u8(n.children.is_some() as u8);
        w.u32_list(&n.entries);
        if let Some(children) = n.children {
            for c in children {
                self.encode_node(c as usize, w);
            }
        }
    }
}

impl RangeIndex for QuadTreeIndex {
    fn kind(&self) -> IndexKind {
        IndexKind::QuadTree
    }

    fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    fn search(&self, b: &BoundingBox, t: &TimeRange, cancel: &AtomicBool) -> Result<Vec<u32>, Cancelled> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if is_cancelled(cancel) {
                return Err(Cancelled);
            }
            let node = &self.nodes[id];
            for &pos in &node.entries {
                if self.entries[pos as usize].matches(b, t) {
                    out.push(pos);
                }
            }
            if let Some(children) = node.children {
                for c in children.into_iter().rev() {
                    if intersects(&self.nodes[c as usize].bbox, b) {
                        stack.push(c as usize);
                    }
                }
            }
        }
        Ok(out)
    }

    fn encode_structure(&self, w: &mut Writer) {
        w.u32(self.leaf_capacity as u32);
        w.u32(self.max_depth as u32);
        w.u32(self.nodes.len() as u32);
        self.encode_node(0, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::TileId;

    #[test]
    fn path_of_small_box() {
        let b = BoundingBox::new(116.0, 116.1, 39.0, 39.1).unwrap();
        let p = quadtree_path(&b, 12);
        assert!(p.starts_with("NE"), "{p}");
        assert!(p.split('.').count() <= 12);
        // box straddling the prime meridian stays at the root
        let straddle = BoundingBox::new(-1.0, 1.0, 10.0, 11.0).unwrap();
        assert_eq!(quadtree_path(&straddle, 12), "");
    }

    #[test]
    fn split_keeps_straddlers_at_parent() {
        let mut entries = Vec::new();
        for i in 0..9 {
            let lon = 10.0 + i as f64;
            entries.push(IndexEntry::new(
                TileId::from(format!("e{i}")),
                BoundingBox::new(lon, lon + 0.5, 10.0, 10.5).unwrap(),
                TimeRange::instant(0),
            ));
        }
        entries.push(IndexEntry::new(
            TileId::from("straddle"),
            BoundingBox::new(-5.0, 5.0, 1.0, 2.0).unwrap(),
            TimeRange::instant(0),
        ));
        let tree = QuadTreeIndex::build(entries, 8, 12);
        assert!(tree.node_count() > 1);
        let root = &tree.nodes[0];
        assert_eq!(root.entries.len(), 1);
        assert_eq!(tree.entries[root.entries[0] as usize].id.as_str(), "straddle");
    }

    #[test]
    fn max_depth_bounds_coincident_entries() {
        let entries: Vec<_> = (0..100)
            .map(|i| {
                IndexEntry::new(
                    TileId::from(format!("c{i}")),
                    BoundingBox::new(50.0, 50.0, 20.0, 20.0).unwrap(),
                    TimeRange::instant(i),
                )
            })
            .collect();
        let tree = QuadTreeIndex::build(entries, 8, 6);
        assert!(tree.depth() <= 6);
        let q = BoundingBox::new(49.0, 51.0, 19.0, 21.0).unwrap();
        assert_eq!(tree.range_query(&q, &TimeRange::ALL).len(), 100);
    }
}
