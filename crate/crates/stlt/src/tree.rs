//! Signal temporal logic trees.
//!
//! Set nodes and operator nodes alternate. Set nodes are numbered in
//! breadth-first order, so `X0` is the root. Paths and temporal fragments are
//! enumerated depth-first with children in formula order.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::dynamics::Dynamics;
use crate::formula::{Formula, Interval, PredicateDecl};
use crate::reach::{set_node_region, ReachEngine, ReachError, TemporalOp};
use crate::regions::{Region, RegionError};

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("formula is not in desired form: {0}")]
    NotDesiredForm(String),
    #[error("undeclared predicate `{0}`")]
    UnknownPredicate(String),
    #[error("set node for `{formula}`: {source}")]
    Reach {
        formula: String,
        #[source]
        source: ReachError,
    },
    #[error(transparent)]
    Region(#[from] RegionError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    And,
    Or,
    Eventually(Interval),
    Always(Interval),
}

impl OpKind {
    pub fn is_temporal(&self) -> bool {
        matches!(self, OpKind::Eventually(_) | OpKind::Always(_))
    }

    /// Offset added to the parent's start interval to obtain the child's.
    pub fn start_offset(&self) -> (f64, f64) {
        match *self {
            OpKind::And | OpKind::Or => (0.0, 0.0),
            OpKind::Eventually(i) => (i.lo, i.hi),
            OpKind::Always(i) => (i.lo, i.lo),
        }
    }

    /// Extra duration contributed to the child.
    pub fn duration(&self) -> f64 {
        match *self {
            OpKind::Always(i) => i.hi - i.lo,
            _ => 0.0,
        }
    }

    pub fn interval(&self) -> Option<Interval> {
        match *self {
            OpKind::Eventually(i) | OpKind::Always(i) => Some(i),
            _ => None,
        }
    }
}

impl std::fmt::Display for OpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OpKind::And => write!(f, "&"),
            OpKind::Or => write!(f, "|"),
            OpKind::Eventually(i) => write!(f, "F{i}"),
            OpKind::Always(i) => write!(f, "G{i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SetNode {
    pub region: Region,
    /// Formula whose satisfying set this node represents.
    pub formula: Formula,
    pub index: usize,
    pub start_lo: f64,
    pub start_hi: f64,
    pub duration: f64,
    pub fixed: bool,
}

impl SetNode {
    pub fn t_end(&self) -> f64 {
        self.start_hi + self.duration
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Set(SetNode),
    Op(OpKind),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletePath {
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalFragment {
    pub op: NodeId,
    pub child: NodeId,
    /// Set node above the operator.
    pub parent: NodeId,
    pub predecessor: Option<usize>,
    pub top_layer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// First set node after the last disjunction (the root when there is none).
    pub gate: NodeId,
    pub paths: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Stlt {
    nodes: Vec<Node>,
    set_ids: Vec<NodeId>,
}

/// Start-interval change made by [`Stlt::online_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct StartChange {
    pub node: NodeId,
    pub old: (f64, f64),
    pub new: (f64, f64),
    pub triggered: bool,
}

struct Builder<'a> {
    preds: HashMap<&'a str, &'a Region>,
    dynamics: &'a Dynamics,
    engine: &'a ReachEngine,
}

/// Nodes in construction order, before breadth-first renumbering.
enum Proto {
    Set { region: Region, formula: Formula, op: Option<(OpKind, Vec<Proto>)> },
}

impl Builder<'_> {
    fn build(&self, phi: &Formula) -> Result<Proto, TreeError> {
        let leaf = |region: Region| Ok(Proto::Set { region, formula: phi.clone(), op: None });
        match phi {
            Formula::True => leaf(Region::Universe),
            Formula::Pred(n) => leaf(self.lookup(n)?.clone()),
            Formula::NegPred(n) => leaf(self.lookup(n)?.clone().complement()),
            Formula::And(cs) | Formula::Or(cs) => {
                let kids = cs.iter().map(|c| self.build(c)).collect::<Result<Vec<_>, _>>()?;
                let regions = kids.iter().map(|Proto::Set { region, .. }| region.clone()).collect();
                let (kind, region) = if matches!(phi, Formula::And(_)) {
                    (OpKind::And, Region::Intersection(regions))
                } else {
                    (OpKind::Or, Region::Union(regions))
                };
                Ok(Proto::Set { region, formula: phi.clone(), op: Some((kind, kids)) })
            }
            Formula::Eventually(c, i) | Formula::Always(c, i) => {
                let child = self.build(c)?;
                let (op, kind) = match phi {
                    Formula::Eventually(..) => (TemporalOp::Eventually, OpKind::Eventually(*i)),
                    _ => (TemporalOp::Always, OpKind::Always(*i)),
                };
                let Proto::Set { region: child_region, .. } = &child;
                let region = set_node_region(op, child_region, *i, self.dynamics, self.engine)
                    .map_err(|source| TreeError::Reach { formula: phi.to_string(), source })?;
                Ok(Proto::Set { region, formula: phi.clone(), op: Some((kind, vec![child])) })
            }
            Formula::Until(..) => Err(TreeError::NotDesiredForm(phi.to_string())),
        }
    }

    fn lookup(&self, name: &str) -> Result<&Region, TreeError> {
        self.preds.get(name).copied().ok_or_else(|| TreeError::UnknownPredicate(name.to_string()))
    }
}

/// Builds the tree of a desired-form formula and computes its time codes.
pub fn build_tree(
    phi: &Formula,
    preds: &[PredicateDecl],
    dynamics: &Dynamics,
    engine: &ReachEngine,
) -> Result<Stlt, TreeError> {
    if !phi.is_desired_form() {
        return Err(TreeError::NotDesiredForm(phi.to_string()));
    }
    let builder = Builder { preds: preds.iter().map(|p| (p.name.as_str(), &p.region)).collect(), dynamics, engine };
    let proto = builder.build(phi)?;
    let mut tree = Stlt::from_proto(proto);
    tree.compute_time_codes();
    Ok(tree)
}

impl Stlt {
    fn from_proto(root: Proto) -> Stlt {
        let mut nodes: Vec<Node> = Vec::new();
        let mut set_ids = Vec::new();
        let mut queue: VecDeque<(Proto, Option<NodeId>)> = VecDeque::from([(root, None)]);
        while let Some((Proto::Set { region, formula, op }, parent)) = queue.pop_front() {
            let id = nodes.len();
            let index = set_ids.len();
            set_ids.push(id);
            nodes.push(Node {
                kind: NodeKind::Set(SetNode { region, formula, index, start_lo: 0.0, start_hi: 0.0, duration: 0.0, fixed: false }),
                parent,
                children: vec![],
            });
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            if let Some((kind, kids)) = op {
                let op_id = nodes.len();
                nodes.push(Node { kind: NodeKind::Op(kind), parent: Some(id), children: vec![] });
                nodes[id].children.push(op_id);
                for k in kids {
                    queue.push_back((k, Some(op_id)));
                }
            }
        }
        // operator nodes sit between layers; reorder the arena breadth-first over all nodes
        let mut order = Vec::with_capacity(nodes.len());
        let mut q = VecDeque::from([0usize]);
        while let Some(n) = q.pop_front() {
            order.push(n);
            q.extend(nodes[n].children.iter().copied());
        }
        let mut remap = vec![0; nodes.len()];
        for (new, old) in order.iter().enumerate() {
            remap[*old] = new;
        }
        let mut arena: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
        let nodes: Vec<Node> = order
            .iter()
            .map(|&old| {
                let mut n = arena[old].take().unwrap();
                n.parent = n.parent.map(|p| remap[p]);
                n.children.iter_mut().for_each(|c| *c = remap[*c]);
                n
            })
            .collect();
        let set_ids = {
            let mut ids: Vec<NodeId> = set_ids.iter().map(|&o| remap[o]).collect();
            ids.sort_unstable();
            ids
        };
        let mut tree = Stlt { nodes, set_ids };
        for (i, &id) in tree.set_ids.clone().iter().enumerate() {
            tree.set_mut(id).index = i;
        }
        tree
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Set node ids in breadth-first order (`X0, X1, ...`).
    pub fn set_nodes(&self) -> &[NodeId] {
        &self.set_ids
    }

    /// Node id of `X{index}`.
    pub fn x(&self, index: usize) -> NodeId {
        self.set_ids[index]
    }

    pub fn op_count(&self) -> usize {
        self.nodes.len() - self.set_ids.len()
    }

    pub fn set(&self, id: NodeId) -> &SetNode {
        match &self.nodes[id].kind {
            NodeKind::Set(s) => s,
            NodeKind::Op(_) => panic!("node {id} is an operator node"),
        }
    }

    fn set_mut(&mut self, id: NodeId) -> &mut SetNode {
        match &mut self.nodes[id].kind {
            NodeKind::Set(s) => s,
            NodeKind::Op(_) => panic!("node {id} is an operator node"),
        }
    }

    pub fn op(&self, id: NodeId) -> OpKind {
        match &self.nodes[id].kind {
            NodeKind::Op(k) => *k,
            NodeKind::Set(_) => panic!("node {id} is a set node"),
        }
    }

    pub fn is_set(&self, id: NodeId) -> bool {
        matches!(self.nodes[id].kind, NodeKind::Set(_))
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn start(&self, id: NodeId) -> (f64, f64) {
        let s = self.set(id);
        (s.start_lo, s.start_hi)
    }

    pub fn label(&self, id: NodeId) -> String {
        match &self.nodes[id].kind {
            NodeKind::Set(s) => format!("X{}", s.index),
            NodeKind::Op(k) => k.to_string(),
        }
    }

    /// Root and leaves are set nodes; set and operator nodes alternate;
    /// a set node has at most one child.
    pub fn check_structure(&self) -> Result<(), String> {
        if !self.is_set(self.root()) {
            return Err("root is not a set node".into());
        }
        for (id, n) in self.nodes.iter().enumerate() {
            match n.kind {
                NodeKind::Set(_) => {
                    if n.children.len() > 1 || n.children.iter().any(|&c| self.is_set(c)) {
                        return Err(format!("set node {id} must have at most one operator child"));
                    }
                }
                NodeKind::Op(k) => {
                    if n.children.is_empty() || n.children.iter().any(|&c| !self.is_set(c)) {
                        return Err(format!("operator node {id} must have set-node children"));
                    }
                    if k.is_temporal() && n.children.len() != 1 {
                        return Err(format!("temporal node {id} must have one child"));
                    }
                }
            }
        }
        Ok(())
    }

    /// No And/F/G operator is an ancestor of an Or operator.
    pub fn or_only_at_top(&self) -> bool {
        self.nodes.iter().all(|n| {
            if !matches!(n.kind, NodeKind::Op(OpKind::Or)) {
                return true;
            }
            let mut cur = n.parent;
            while let Some(p) = cur {
                if let NodeKind::Op(k) = self.nodes[p].kind {
                    if k != OpKind::Or {
                        return false;
                    }
                }
                cur = self.nodes[p].parent;
            }
            true
        })
    }

    /// Start intervals and durations, top-down from the root.
    pub fn compute_time_codes(&mut self) {
        for i in 0..self.nodes.len() {
            if let NodeKind::Set(_) = self.nodes[i].kind {
                let (lo, hi, d) = match self.nodes[i].parent {
                    None => (0.0, 0.0, 0.0),
                    Some(op) => self.propagated(op),
                };
                let s = self.set_mut(i);
                s.start_lo = lo;
                s.start_hi = hi;
                s.duration = d;
                s.fixed = false;
            }
        }
    }

    /// Start interval and duration implied by the parent of operator `op`.
    fn propagated(&self, op: NodeId) -> (f64, f64, f64) {
        let kind = self.op(op);
        let p = self.set(self.nodes[op].parent.expect("operator has a parent"));
        let (a, b) = kind.start_offset();
        (p.start_lo + a, p.start_hi + b, p.duration + kind.duration())
    }

    /// A set node may trigger only as the child of an `F` whose parent set node has a known start.
    ///
    /// Children of `&`, `|` and `G` inherit their start from the parent, and an `F` child
    /// fixed before its parent would commit to a coding the parent can later contradict.
    fn can_trigger(&self, id: NodeId) -> bool {
        let Some(op) = self.nodes[id].parent else { return false };
        if !matches!(self.op(op), OpKind::Eventually(_)) {
            return false;
        }
        let p = self.set(self.nodes[op].parent.expect("operator has a parent"));
        p.start_lo == p.start_hi
    }

    /// Event-triggered start-time update at time `t` and state `x`.
    ///
    /// Nodes are visited breadth-first so a parent fixed in this call already
    /// constrains its descendants when they are checked.
    pub fn online_update(&mut self, t: f64, x: &[f64]) -> Result<Vec<StartChange>, RegionError> {
        let mut changes = Vec::new();
        for id in 0..self.nodes.len() {
            let NodeKind::Set(s) = &self.nodes[id].kind else { continue };
            if s.fixed || s.start_lo == s.start_hi || t < s.start_lo || t > s.start_hi {
                continue;
            }
            if !self.can_trigger(id) {
                continue;
            }
            if s.region.eval(x)? < 0.0 {
                continue;
            }
            let old = (s.start_lo, s.start_hi);
            let s = self.set_mut(id);
            s.start_lo = t;
            s.start_hi = t;
            s.fixed = true;
            changes.push(StartChange { node: id, old, new: (t, t), triggered: true });
            self.repropagate(id, &mut changes);
        }
        Ok(changes)
    }

    fn repropagate(&mut self, from: NodeId, changes: &mut Vec<StartChange>) {
        let mut stack: Vec<NodeId> = self.nodes[from].children.clone();
        while let Some(op) = stack.pop() {
            for c in self.nodes[op].children.clone() {
                let s = self.set(c);
                if s.fixed || s.start_lo == s.start_hi {
                    continue;
                }
                let old = (s.start_lo, s.start_hi);
                let (lo, hi, _) = self.propagated(op);
                let s = self.set_mut(c);
                s.start_lo = lo;
                s.start_hi = hi;
                if lo == hi {
                    s.fixed = true;
                }
                if old != (lo, hi) {
                    changes.push(StartChange { node: c, old, new: (lo, hi), triggered: false });
                }
                stack.extend(self.nodes[c].children.iter().copied());
            }
        }
    }

    /// Root-to-leaf paths, depth-first with children in formula order.
    pub fn complete_paths(&self) -> Vec<CompletePath> {
        let mut out = Vec::new();
        let mut stack = vec![vec![self.root()]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            let kids = &self.nodes[last].children;
            if kids.is_empty() {
                out.push(CompletePath { nodes: path });
                continue;
            }
            for &k in kids.iter().rev() {
                let mut p = path.clone();
                p.push(k);
                stack.push(p);
            }
        }
        out
    }

    /// Temporal fragments in depth-first order with predecessor links.
    pub fn temporal_fragments(&self) -> Vec<TemporalFragment> {
        let mut ops = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(n) = stack.pop() {
            if let NodeKind::Op(k) = self.nodes[n].kind {
                if k.is_temporal() {
                    ops.push(n);
                }
            }
            stack.extend(self.nodes[n].children.iter().rev().copied());
        }
        let index_of: HashMap<NodeId, usize> = ops.iter().enumerate().map(|(i, &op)| (op, i)).collect();
        ops.iter()
            .map(|&op| {
                let parent = self.nodes[op].parent.unwrap();
                let mut cur = self.nodes[parent].parent;
                let mut predecessor = None;
                while let Some(a) = cur {
                    if let Some(&i) = index_of.get(&a) {
                        predecessor = Some(i);
                        break;
                    }
                    cur = self.nodes[a].parent;
                }
                TemporalFragment { op, child: self.nodes[op].children[0], parent, predecessor, top_layer: predecessor.is_none() }
            })
            .collect()
    }

    /// Groups complete paths by the set node right after their last disjunction.
    pub fn branches(&self) -> Vec<Branch> {
        let paths = self.complete_paths();
        let mut out: Vec<Branch> = Vec::new();
        let gates: Vec<Option<NodeId>> = paths
            .iter()
            .map(|p| {
                p.nodes
                    .iter()
                    .rposition(|&n| matches!(self.nodes[n].kind, NodeKind::Op(OpKind::Or)))
                    .map(|i| p.nodes[i + 1])
            })
            .collect();
        assert!(
            gates.iter().all(Option::is_some) || gates.iter().all(Option::is_none),
            "disjunctions must lie on every path or on none"
        );
        for (i, g) in gates.iter().enumerate() {
            let gate = g.unwrap_or(self.root());
            match out.iter_mut().find(|b| b.gate == gate) {
                Some(b) => b.paths.push(i),
                None => out.push(Branch { gate, paths: vec![i] }),
            }
        }
        out
    }

    /// Fragments whose operator lies on one of the branch's paths.
    pub fn branch_fragments(&self, branch: &Branch) -> Vec<usize> {
        let paths = self.complete_paths();
        let on_branch: std::collections::HashSet<NodeId> =
            branch.paths.iter().flat_map(|&p| paths[p].nodes.iter().copied()).collect();
        self.temporal_fragments().iter().enumerate().filter(|(_, f)| on_branch.contains(&f.op)).map(|(i, _)| i).collect()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph stlt {\n  node [fontname=\"Helvetica\"];\n");
        for (id, n) in self.nodes.iter().enumerate() {
            match &n.kind {
                NodeKind::Set(x) => {
                    let _ = writeln!(
                        s,
                        "  n{id} [shape=box, label=\"X{}\\n[{}, {}]\\nD={} te={}\"];",
                        x.index,
                        x.start_lo,
                        x.start_hi,
                        x.duration,
                        x.t_end()
                    );
                }
                NodeKind::Op(k) => {
                    let _ = writeln!(s, "  n{id} [shape=ellipse, label=\"{k}\"];");
                }
            }
        }
        for (id, n) in self.nodes.iter().enumerate() {
            for c in &n.children {
                let _ = writeln!(s, "  n{id} -> n{c};");
            }
        }
        s.push_str("}\n");
        s
    }

    pub fn codes_csv(&self) -> String {
        let mut s = String::from("node,start_lo,start_hi,duration,t_end,fixed,formula\n");
        for &id in &self.set_ids {
            let x = self.set(id);
            let _ = writeln!(
                s,
                "X{},{},{},{},{},{},\"{}\"",
                x.index,
                x.start_lo,
                x.start_hi,
                x.duration,
                x.t_end(),
                x.fixed,
                x.formula.to_string().replace('"', "'")
            );
        }
        s
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::formula::{parse_formula, to_desired_form};

    pub(crate) fn example1_preds() -> Vec<PredicateDecl> {
        vec![
            PredicateDecl { name: "mu1".into(), region: Region::disk(&[-4.0, -4.0], 1.0) },
            PredicateDecl { name: "mu2".into(), region: Region::disk(&[4.0, 0.0], 4.0) },
            PredicateDecl { name: "mu3".into(), region: Region::disk(&[1.0, -4.0], 2.0) },
        ]
    }

    pub(crate) fn example1_tree() -> Stlt {
        let phi = parse_formula("F[0,15](G[2,10] mu1 | (mu2 U[5,10] mu3))").unwrap();
        let hat = to_desired_form(&phi).unwrap();
        build_tree(&hat, &example1_preds(), &Dynamics::single_integrator(2, 1.0), &ReachEngine::Analytic).unwrap()
    }

    fn disk_of(r: &Region) -> (Vec<f64>, f64) {
        match r {
            Region::Disk { center, radius } => (center.clone(), *radius),
            other => panic!("not a disk: {other:?}"),
        }
    }

    #[test]
    fn example1_structure() {
        let t = example1_tree();
        t.check_structure().unwrap();
        assert!(t.or_only_at_top());
        assert_eq!(t.set_nodes().len(), 10);
        assert_eq!(t.op_count(), 7);
        assert_eq!(t.op(t.node(t.x(0)).children[0]), OpKind::Or);
        assert_eq!(disk_of(&t.set(t.x(3)).region), (vec![-4.0, -4.0], 3.0));
        assert_eq!(disk_of(&t.set(t.x(1)).region), (vec![-4.0, -4.0], 18.0));
        assert_eq!(disk_of(&t.set(t.x(2)).region), (vec![4.0, 0.0], 19.0));
        assert_eq!(disk_of(&t.set(t.x(6)).region), (vec![4.0, 0.0], 4.0));
        assert_eq!(disk_of(&t.set(t.x(7)).region), (vec![1.0, -4.0], 12.0));
        assert_eq!(disk_of(&t.set(t.x(5)).region), (vec![-4.0, -4.0], 1.0));
        assert!(matches!(t.set(t.x(0)).region, Region::Union(_)));
        let x4 = &t.set(t.x(4)).region;
        assert_eq!(x4.eval(&[4.0, 0.0]).unwrap(), 4.0);
    }

    #[test]
    fn example1_time_codes() {
        let t = example1_tree();
        let expect = [
            (0.0, 0.0),
            (0.0, 0.0),
            (0.0, 0.0),
            (0.0, 15.0),
            (0.0, 15.0),
            (2.0, 17.0),
            (0.0, 15.0),
            (0.0, 15.0),
            (0.0, 15.0),
            (5.0, 25.0),
        ];
        for (i, e) in expect.iter().enumerate() {
            assert_eq!(t.start(t.x(i)), *e, "X{i}");
        }
        assert_eq!(t.set(t.x(5)).duration, 8.0);
        assert_eq!(t.set(t.x(5)).t_end(), 25.0);
        assert_eq!(t.set(t.x(9)).duration, 0.0);
        assert_eq!(t.set(t.x(8)).duration, 10.0);
    }

    #[test]
    fn child_start_is_parent_plus_offset() {
        let t = example1_tree();
        for (id, n) in t.nodes().iter().enumerate() {
            if let NodeKind::Op(k) = n.kind {
                let p = t.start(n.parent.unwrap());
                let (a, b) = k.start_offset();
                for &c in &n.children {
                    assert_eq!(t.start(c), (p.0 + a, p.1 + b), "below {id}");
                }
            }
        }
    }

    #[test]
    fn example1_paths_fragments_branches() {
        let t = example1_tree();
        let paths = t.complete_paths();
        assert_eq!(paths.len(), 3);
        let labels: Vec<String> = paths[0].nodes.iter().map(|&n| t.label(n)).collect();
        assert_eq!(labels, ["X0", "|", "X1", "F[0,15]", "X3", "G[2,10]", "X5"]);
        let frags = t.temporal_fragments();
        assert_eq!(frags.len(), 5);
        let names: Vec<(String, String)> = frags.iter().map(|f| (t.label(f.op), t.label(f.child))).collect();
        assert_eq!(
            names,
            [("F[0,15]", "X3"), ("G[2,10]", "X5"), ("F[0,15]", "X4"), ("G[0,10]", "X8"), ("F[5,10]", "X9")]
                .map(|(a, b)| (a.to_string(), b.to_string()))
        );
        assert_eq!(frags[1].predecessor, Some(0));
        assert_eq!(frags[3].predecessor, Some(2));
        assert_eq!(frags[4].predecessor, Some(2));
        assert!(frags[0].top_layer && frags[2].top_layer && !frags[4].top_layer);
        let branches = t.branches();
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0], Branch { gate: t.x(1), paths: vec![0] });
        assert_eq!(branches[1], Branch { gate: t.x(2), paths: vec![1, 2] });
        assert_eq!(t.branch_fragments(&branches[1]), vec![2, 3, 4]);
    }

    #[test]
    fn trigger_at_five_fixes_subtree() {
        let mut t = example1_tree();
        let changes = t.online_update(5.0, &[4.0, 0.0]).unwrap();
        for i in [4, 6, 7, 8] {
            assert_eq!(t.start(t.x(i)), (5.0, 5.0), "X{i}");
            assert!(t.set(t.x(i)).fixed);
        }
        assert_eq!(t.start(t.x(9)), (10.0, 15.0));
        assert!(!t.set(t.x(9)).fixed);
        assert!(changes.iter().any(|c| c.node == t.x(4) && c.triggered));
        assert!(changes.iter().any(|c| c.node == t.x(9) && c.new == (10.0, 15.0)));
        // fixed nodes stay put
        let again = t.online_update(6.0, &[4.0, 0.0]).unwrap();
        assert!(again.iter().all(|c| c.node == t.x(9) || c.node == t.x(3)));
        assert_eq!(t.start(t.x(4)), (5.0, 5.0));
    }

    #[test]
    fn inherited_starts_wait_for_the_parent() {
        let mut t = example1_tree();
        // inside X7 (radius 12 around mu3) and mu3 itself, outside X4 = X6
        let x = [1.0, -4.0];
        assert!(t.set(t.x(7)).region.contains(&x).unwrap());
        assert!(!t.set(t.x(4)).region.contains(&x).unwrap());
        let changes = t.online_update(6.0, &x).unwrap();
        assert!(changes.iter().all(|c| ![t.x(5), t.x(7), t.x(9)].contains(&c.node)), "{changes:?}");
        assert_eq!(t.start(t.x(7)), (0.0, 15.0));
        assert_eq!(t.start(t.x(9)), (5.0, 25.0));
        // X3 sits under the root disjunction with a known start and may trigger
        let mut t = example1_tree();
        let changes = t.online_update(1.0, &[-4.0, -4.0]).unwrap();
        assert!(changes.iter().any(|c| c.node == t.x(3) && c.triggered));
        assert!(!changes.iter().any(|c| c.node == t.x(5) && c.triggered));
        assert_eq!(t.start(t.x(5)), (3.0, 3.0));
    }

    #[test]
    fn no_trigger_outside_window_or_set() {
        let mut t = example1_tree();
        assert!(t.online_update(30.0, &[4.0, 0.0]).unwrap().is_empty());
        assert!(t.online_update(3.0, &[100.0, 100.0]).unwrap().is_empty());
        assert_eq!(t.start(t.x(9)), (5.0, 25.0));
    }

    #[test]
    fn single_predicate_tree() {
        let preds = example1_preds();
        let t = build_tree(&Formula::pred("mu1"), &preds, &Dynamics::single_integrator(2, 1.0), &ReachEngine::Analytic).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.complete_paths(), vec![CompletePath { nodes: vec![0] }]);
        assert!(t.temporal_fragments().is_empty());
        assert_eq!(t.branches(), vec![Branch { gate: 0, paths: vec![0] }]);
        assert!(t.to_dot().contains("n0 [shape=box"));
    }

    #[test]
    fn single_always_codes() {
        let preds = example1_preds();
        let phi = Formula::always(Formula::pred("mu1"), 3.0, 7.0);
        let t = build_tree(&phi, &preds, &Dynamics::single_integrator(2, 1.0), &ReachEngine::Analytic).unwrap();
        assert_eq!(t.start(t.x(1)), (3.0, 3.0));
        assert_eq!(t.set(t.x(1)).duration, 4.0);
    }

    #[test]
    fn conjunction_region_matches_paper_sets() {
        let preds = example1_preds();
        let phi = parse_formula("G[0,10] mu2 & F[5,10] mu3").unwrap();
        let t = build_tree(&phi, &preds, &Dynamics::single_integrator(2, 1.0), &ReachEngine::Analytic).unwrap();
        let Region::Intersection(parts) = &t.set(t.root()).region else { panic!() };
        assert_eq!(disk_of(&parts[0]), (vec![4.0, 0.0], 4.0));
        assert_eq!(disk_of(&parts[1]), (vec![1.0, -4.0], 12.0));
        // X6 inside X7 on samples
        for i in 0..200 {
            let x = [-20.0 + 0.2 * i as f64, (i as f64 * 0.7).sin() * 10.0];
            assert!(parts[0].eval(&x).unwrap() <= parts[1].eval(&x).unwrap());
        }
    }

    #[test]
    fn rejects_until_and_unknown_predicates() {
        let preds = example1_preds();
        let d = Dynamics::single_integrator(2, 1.0);
        let phi = parse_formula("mu1 U[0,1] mu2").unwrap();
        assert!(matches!(build_tree(&phi, &preds, &d, &ReachEngine::Analytic), Err(TreeError::NotDesiredForm(_))));
        let phi = parse_formula("F[0,1] nope").unwrap();
        assert!(matches!(build_tree(&phi, &preds, &d, &ReachEngine::Analytic), Err(TreeError::UnknownPredicate(_))));
    }

    #[test]
    fn codes_csv_lists_every_set_node() {
        let t = example1_tree();
        let csv = t.codes_csv();
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.contains("X9,5,25,0,25,false"));
    }
}
