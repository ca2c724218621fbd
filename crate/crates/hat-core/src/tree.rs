//! Rooted directed trees over an ordered leaf set.
//!
//! Nodes live in a flat arena and are referenced by [`NodeId`] (a `usize`
//! assigned in DFS preorder, root = 0). Each node records the contiguous
//! slice of the left-to-right leaf ordering that its subtree covers, which
//! is what makes tree-compatible partitions representable as barrier
//! vectors downstream.
//!
//! Structural invariants enforced at construction:
//!
//! - exactly one root; every other node has exactly one parent; no cycles
//!   (guaranteed by building from a nested description);
//! - at least two leaves;
//! - every internal node has out-degree >= 2 (unary chains are rejected,
//!   not collapsed: a degree-1 node's hypothesis is vacuous);
//! - node labels are unique.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{HatError, Result};

/// Index into the tree's node arena. Assigned in DFS preorder.
pub type NodeId = usize;

/// A single node of a [`Tree`].
#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// 1-based depth; the root has depth 1.
    pub depth: usize,
    /// Start of this node's leaf slice in `leaf_order`.
    pub leaf_start: usize,
    /// Number of leaves under (or equal to) this node.
    pub leaf_len: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.children.len()
    }
}

/// Per-node structural summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeStats {
    /// Out-degree.
    pub deg: usize,
    /// 1-based depth.
    pub depth: usize,
    /// Leaves under the node.
    pub n_leaves: usize,
}

/// An immutable rooted directed tree. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Leaf node ids in DFS left-to-right order.
    leaf_order: Vec<NodeId>,
    /// Position of each leaf in `leaf_order`; `usize::MAX` for internal nodes.
    leaf_pos: Vec<usize>,
    /// Internal (non-leaf) nodes grouped by depth; `by_depth[d - 1]` holds
    /// depth `d`. The deepest level is always empty (max-depth nodes are
    /// leaves) and is not stored.
    by_depth: Vec<Vec<NodeId>>,
    label_index: HashMap<String, NodeId>,
    max_depth: usize,
    max_degree: usize,
    min_degree: usize,
}

/// Nested description used to build a [`Tree`]; produced by the parsers and
/// by the scenario generators.
#[derive(Debug, Clone, Default)]
pub struct NestedNode {
    pub label: Option<String>,
    pub children: Vec<NestedNode>,
}

impl NestedNode {
    pub fn leaf(label: impl Into<String>) -> Self {
        NestedNode {
            label: Some(label.into()),
            children: Vec::new(),
        }
    }

    pub fn internal(label: Option<String>, children: Vec<NestedNode>) -> Self {
        NestedNode { label, children }
    }
}

/// Supported serialization formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    Newick,
    Json,
}

impl Tree {
    /// Build a tree from a nested description, assigning DFS-preorder ids
    /// and checking every structural invariant. Unlabeled nodes get the
    /// label `n<id>`.
    pub fn from_nested(root: &NestedNode) -> Result<Tree> {
        let mut nodes: Vec<Node> = Vec::new();
        build_arena(root, None, &mut nodes)?;

        // Depths (parents precede children in preorder).
        for i in 0..nodes.len() {
            nodes[i].depth = match nodes[i].parent {
                None => 1,
                Some(p) => nodes[p].depth + 1,
            };
        }

        // Leaf order and contiguous leaf slices. Preorder visits a subtree's
        // leaves consecutively, so a single left-to-right pass suffices.
        let mut leaf_order = Vec::new();
        let mut leaf_pos = vec![usize::MAX; nodes.len()];
        for i in 0..nodes.len() {
            if nodes[i].is_leaf() {
                leaf_pos[i] = leaf_order.len();
                leaf_order.push(i);
            }
        }
        if leaf_order.len() < 2 {
            return Err(HatError::InvalidTree(format!(
                "tree must have at least 2 leaves, found {}",
                leaf_order.len()
            )));
        }
        // leaf_start/leaf_len in reverse preorder: children are finalized
        // before their parent.
        for i in (0..nodes.len()).rev() {
            if nodes[i].is_leaf() {
                nodes[i].leaf_start = leaf_pos[i];
                nodes[i].leaf_len = 1;
            } else {
                let first = nodes[i].children[0];
                nodes[i].leaf_start = nodes[first].leaf_start;
                nodes[i].leaf_len = nodes[i].children.iter().map(|&c| nodes[c].leaf_len).sum();
            }
        }

        let mut label_index = HashMap::with_capacity(nodes.len());
        for n in &nodes {
            if label_index.insert(n.label.clone(), n.id).is_some() {
                return Err(HatError::InvalidTree(format!(
                    "duplicate label {:?}",
                    n.label
                )));
            }
        }

        let max_depth = nodes.iter().map(|n| n.depth).max().unwrap();
        let mut by_depth = vec![Vec::new(); max_depth];
        for n in &nodes {
            if !n.is_leaf() {
                by_depth[n.depth - 1].push(n.id);
            }
        }
        let max_degree = nodes.iter().map(Node::degree).max().unwrap();
        let min_degree = nodes
            .iter()
            .filter(|n| !n.is_leaf())
            .map(Node::degree)
            .min()
            .unwrap();

        Ok(Tree {
            nodes,
            leaf_order,
            leaf_pos,
            by_depth,
            label_index,
            max_depth,
            max_degree,
            min_degree,
        })
    }

    /// Parse a serialized tree in the given format.
    pub fn parse(text: &str, format: TreeFormat) -> Result<Tree> {
        match format {
            TreeFormat::Newick => Self::parse_newick(text),
            TreeFormat::Json => Self::parse_json(text),
        }
    }

    /// Parse the Newick subset: labels `[A-Za-z0-9_.-]+`, no branch lengths,
    /// terminating `;`. Internal labels are optional.
    pub fn parse_newick(text: &str) -> Result<Tree> {
        let mut p = NewickParser {
            bytes: text.as_bytes(),
            pos: 0,
        };
        let nested = p.parse_tree()?;
        Tree::from_nested(&nested)
    }

    /// Parse the JSON format `{"label": str, "children": [...]}`. A missing
    /// or empty `children` array marks a leaf.
    pub fn parse_json(text: &str) -> Result<Tree> {
        let v: JsonTreeNode = serde_json::from_str(text)
            .map_err(|e| HatError::Parse { pos: 0, msg: format!("json: {e}") })?;
        Tree::from_nested(&v.into_nested())
    }

    /// Serialize to the Newick subset. Deterministic: same tree, same bytes.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_newick(self.root(), &mut out);
        out.push(';');
        out
    }

    fn write_newick(&self, u: NodeId, out: &mut String) {
        let node = &self.nodes[u];
        if !node.is_leaf() {
            out.push('(');
            for (i, &c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.write_newick(c, out);
            }
            out.push(')');
        }
        let _ = write!(out, "{}", node.label);
    }

    /// Serialize to the JSON format. Deterministic: same tree, same bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.json_node(self.root())).expect("tree JSON serialization")
    }

    fn json_node(&self, u: NodeId) -> JsonTreeNode {
        let node = &self.nodes[u];
        JsonTreeNode {
            label: Some(node.label.clone()),
            children: node.children.iter().map(|&c| self.json_node(c)).collect(),
        }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, u: NodeId) -> &Node {
        &self.nodes[u]
    }

    pub fn try_node(&self, u: NodeId) -> Result<&Node> {
        self.nodes
            .get(u)
            .ok_or_else(|| HatError::UnknownNode(format!("id {u}")))
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of leaves.
    pub fn p(&self) -> usize {
        self.leaf_order.len()
    }

    pub fn is_leaf(&self, u: NodeId) -> bool {
        self.nodes[u].is_leaf()
    }

    pub fn is_internal(&self, u: NodeId) -> bool {
        !self.nodes[u].is_leaf()
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.nodes[u].degree()
    }

    pub fn depth(&self, u: NodeId) -> usize {
        self.nodes[u].depth
    }

    pub fn parent(&self, u: NodeId) -> Option<NodeId> {
        self.nodes[u].parent
    }

    pub fn children(&self, u: NodeId) -> &[NodeId] {
        &self.nodes[u].children
    }

    pub fn label(&self, u: NodeId) -> &str {
        &self.nodes[u].label
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.label_index.get(label).copied()
    }

    pub fn node_stats(&self, u: NodeId) -> NodeStats {
        let n = &self.nodes[u];
        NodeStats {
            deg: n.degree(),
            depth: n.depth,
            n_leaves: n.leaf_len,
        }
    }

    /// Maximum node depth D (leaves included; the root has depth 1).
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Maximum out-degree over all nodes.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Minimum out-degree over internal nodes (>= 2 by construction).
    pub fn min_degree(&self) -> usize {
        self.min_degree
    }

    /// Leaf node ids in left-to-right order.
    pub fn leaf_order(&self) -> &[NodeId] {
        &self.leaf_order
    }

    /// Position of a leaf in the leaf order.
    pub fn leaf_position(&self, u: NodeId) -> Option<usize> {
        if self.is_leaf(u) {
            Some(self.leaf_pos[u])
        } else {
            None
        }
    }

    /// The contiguous `(start, len)` slice of the leaf order covered by `u`.
    pub fn leaf_range(&self, u: NodeId) -> (usize, usize) {
        (self.nodes[u].leaf_start, self.nodes[u].leaf_len)
    }

    /// Number of leaves under `u`.
    pub fn n_leaves(&self, u: NodeId) -> usize {
        self.nodes[u].leaf_len
    }

    /// Leaf ids under `u`, a contiguous slice of the leaf order.
    pub fn leaves_under(&self, u: NodeId) -> Result<&[NodeId]> {
        let n = self.try_node(u)?;
        Ok(&self.leaf_order[n.leaf_start..n.leaf_start + n.leaf_len])
    }

    /// Non-leaf nodes at exactly depth `d` (1-based), in leaf-order-consistent
    /// (preorder) order. Errors if `d` is outside `1..=max_depth`.
    pub fn internal_nodes_at_depth(&self, d: usize) -> Result<&[NodeId]> {
        if d == 0 || d > self.max_depth {
            return Err(HatError::InvalidInput(format!(
                "depth {d} out of range 1..={}",
                self.max_depth
            )));
        }
        Ok(self.by_depth.get(d - 1).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// All internal node ids in preorder.
    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.id)
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    /// Ids of the subtree rooted at `u` (preorder, `u` first).
    pub fn subtree_nodes(&self, u: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![u];
        while let Some(v) = stack.pop() {
            out.push(v);
            // Push children reversed so preorder pops left-to-right.
            for &c in self.nodes[v].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Internal nodes of the subtree rooted at `u`, including `u` itself when
    /// it is internal.
    pub fn subtree_internal_nodes(&self, u: NodeId) -> Vec<NodeId> {
        self.subtree_nodes(u)
            .into_iter()
            .filter(|&v| self.is_internal(v))
            .collect()
    }

    /// Height of the subtree below `u`: max depth within the subtree minus
    /// `depth(u)`. Zero for leaves.
    pub fn subtree_height(&self, u: NodeId) -> usize {
        let mut h = 0;
        for v in self.subtree_nodes(u) {
            h = h.max(self.nodes[v].depth - self.nodes[u].depth);
        }
        h
    }
}

fn build_arena(n: &NestedNode, parent: Option<NodeId>, nodes: &mut Vec<Node>) -> Result<NodeId> {
    if n.children.len() == 1 {
        return Err(HatError::InvalidTree(format!(
            "unary internal node{}",
            n.label
                .as_deref()
                .map(|l| format!(" {l:?}"))
                .unwrap_or_default()
        )));
    }
    let id = nodes.len();
    let label = n.label.clone().unwrap_or_else(|| format!("n{id}"));
    nodes.push(Node {
        id,
        label,
        parent,
        children: Vec::new(),
        depth: 0,
        leaf_start: 0,
        leaf_len: 0,
    });
    for child in &n.children {
        let c = build_arena(child, Some(id), nodes)?;
        nodes[id].children.push(c);
    }
    Ok(id)
}

#[derive(Serialize, Deserialize)]
struct JsonTreeNode {
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<JsonTreeNode>,
}

impl JsonTreeNode {
    fn into_nested(self) -> NestedNode {
        NestedNode {
            label: self.label,
            children: self.children.into_iter().map(Self::into_nested).collect(),
        }
    }
}

struct NewickParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> NewickParser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(HatError::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn parse_tree(&mut self) -> Result<NestedNode> {
        self.skip_ws();
        let root = self.parse_element()?;
        self.skip_ws();
        match self.peek() {
            Some(b';') => self.pos += 1,
            _ => return self.err("expected ';'"),
        }
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return self.err("trailing characters after ';'");
        }
        Ok(root)
    }

    fn parse_element(&mut self) -> Result<NestedNode> {
        self.skip_ws();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut children = vec![self.parse_element()?];
            loop {
                self.skip_ws();
                match self.peek() {
                    Some(b',') => {
                        self.pos += 1;
                        children.push(self.parse_element()?);
                    }
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return self.err("expected ',' or ')'"),
                }
            }
            self.skip_ws();
            let label = self.maybe_label();
            Ok(NestedNode { label, children })
        } else {
            match self.maybe_label() {
                Some(l) => Ok(NestedNode::leaf(l)),
                None => self.err("expected '(' or a label"),
            }
        }
    }

    fn maybe_label(&mut self) -> Option<String> {
        let start = self.pos;
        while matches!(
            self.peek(),
            Some(b) if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-'
        ) {
            self.pos += 1;
        }
        if self.pos > start {
            Some(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
        } else {
            None
        }
    }
}
