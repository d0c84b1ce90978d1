use std::collections::{BTreeMap, VecDeque};

use super::model::{ForestModel, Tree, TreeNode};
use super::stats::forward;
use super::{feature_seed, ForestConfig};
use crate::error::{Error, Result};
use crate::party::MASTER;
use crate::phase::{RF_FIND, RF_FINALIZE, RF_SAMPLE, RF_SETUP, RF_SPLIT, RF_STATS, RF_STEP};
use crate::pipeline::{check_responses, Pipeline, Round};
use crate::prediction::Predictions;
use crate::transport::{broadcast, Transport};
use crate::wire::{ids_to_floats, Body, Message};

#[derive(Debug, Clone, PartialEq)]
pub enum NodeOutcome {
    Leaf { value: f64 },
    Split { party: usize, feature: usize, quantile: usize },
}

/// What happened at one node, in processing order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    pub tree: usize,
    pub node: usize,
    pub depth: usize,
    pub ids: Vec<u64>,
    pub outcome: NodeOutcome,
}

#[derive(Debug, Clone)]
struct NodeWork {
    node: usize,
    ids: Vec<u64>,
    depth: usize,
}

#[derive(Debug, Clone, Copy)]
struct Chosen {
    party: usize,
    feature: usize,
    quantile: usize,
    n_left: usize,
    n_right: usize,
}

enum Pending {
    Nothing,
    Sample,
    Stats(NodeWork),
    Find(NodeWork),
    Split(NodeWork, Chosen, u64),
}

#[derive(Default)]
struct TreeBuild {
    nodes: Vec<Option<TreeNode>>,
    queue: VecDeque<NodeWork>,
}

impl TreeBuild {
    fn reserve(&mut self) -> usize {
        self.nodes.push(None);
        self.nodes.len() - 1
    }
}

/// Coordinator side of forest training: one node per step, trees in sequence, nodes
/// breadth-first.
pub struct ForestTrainer {
    parties: Vec<String>,
    active: usize,
    config: ForestConfig,
    setup_rounds: u8,
    finish_sent: bool,
    n_samples: usize,
    trees: Vec<Tree>,
    build: TreeBuild,
    pending: Pending,
    next_record: u64,
    trace: Vec<NodeTrace>,
}

impl ForestTrainer {
    /// `active` indexes the party holding labels.
    pub fn new(parties: Vec<String>, active: usize, config: ForestConfig) -> Result<Self> {
        config.validate()?;
        if active >= parties.len() {
            return Err(Error::Config(format!(
                "active party index {active} out of {} parties",
                parties.len()
            )));
        }
        Ok(Self {
            parties,
            active,
            config,
            setup_rounds: 0,
            finish_sent: false,
            n_samples: 0,
            trees: Vec::new(),
            build: TreeBuild::default(),
            pending: Pending::Nothing,
            next_record: 0,
            trace: Vec::new(),
        })
    }

    pub fn model(&self) -> ForestModel {
        ForestModel {
            algorithm: "forest".into(),
            parties: self.parties.clone(),
            trees: self.trees.clone(),
        }
    }

    pub fn trace(&self) -> &[NodeTrace] {
        &self.trace
    }

    pub fn nodes(&self) -> usize {
        self.trace.len()
    }

    fn passive(&self) -> impl Iterator<Item = (usize, &String)> {
        self.parties.iter().enumerate().filter(move |(p, _)| *p != self.active)
    }

    fn to_active(&self, phase: i32, body: Body) -> Round {
        Round::Send(vec![Message::request(MASTER, &self.parties[self.active], phase, body)])
    }

    fn start_tree(&mut self) -> Round {
        self.build = TreeBuild::default();
        self.pending = Pending::Sample;
        self.to_active(
            RF_SAMPLE,
            Body::new()
                .with("tree", self.trees.len() as i64)
                .with("fraction", self.config.subsample),
        )
    }

    fn tree_body(&self, work: &NodeWork) -> Body {
        Body::new()
            .with("tree", self.trees.len() as i64)
            .with("node", work.node as i64)
            .with("ids", ids_to_floats(&work.ids))
    }

    fn next_node(&mut self) -> Result<Round> {
        let Some(work) = self.build.queue.pop_front() else {
            let nodes = std::mem::take(&mut self.build.nodes)
                .into_iter()
                .enumerate()
                .map(|(id, n)| n.ok_or_else(|| Error::Protocol(format!("node {id} was never resolved"))))
                .collect::<Result<Vec<_>>>()?;
            self.trees.push(Tree { nodes });
            return Ok(if self.trees.len() < self.config.n_trees {
                self.start_tree()
            } else {
                Round::Done
            });
        };
        let forced = work.depth >= self.config.max_depth
            || work.ids.len() < 2 * self.config.min_leaf
            || self.build.nodes.len() + 2 > self.config.node_budget();
        if forced {
            let body = self.tree_body(&work).with("force_leaf", 1i64);
            self.pending = Pending::Find(work);
            return Ok(self.to_active(RF_FIND, body));
        }
        let tree = self.trees.len();
        let requests = self
            .parties
            .iter()
            .enumerate()
            .map(|(p, name)| {
                let body = self
                    .tree_body(&work)
                    .with("seed", feature_seed(self.config.seed, tree, work.node, p) as i64);
                Message::request(MASTER, name, RF_STATS, body)
            })
            .collect();
        self.pending = Pending::Stats(work);
        Ok(Round::Send(requests))
    }

    fn resolve(&mut self, work: &NodeWork, node: TreeNode, outcome: NodeOutcome) {
        self.build.nodes[work.node] = Some(node);
        self.trace.push(NodeTrace {
            tree: self.trees.len(),
            node: work.node,
            depth: work.depth,
            ids: work.ids.clone(),
            outcome,
        });
    }

    fn on_stats(&mut self, work: NodeWork, responses: &[Message]) -> Result<Round> {
        let mut body = self.tree_body(&work).with("force_leaf", 0i64);
        let mut sources = Vec::new();
        for (p, r) in responses.iter().enumerate() {
            if p != self.active {
                forward(&mut body, &format!("p{p}."), &r.body);
                sources.push(p as f64);
            }
        }
        body.insert("sources", sources);
        self.pending = Pending::Find(work);
        Ok(self.to_active(RF_FIND, body))
    }

    fn on_find(&mut self, work: NodeWork, response: &Message) -> Result<Round> {
        let b = &response.body;
        if b.int("leaf")? != 0 {
            let value = b.float("value")?;
            let leaf = TreeNode::Leaf {
                value,
                samples: work.ids.len(),
            };
            self.resolve(&work, leaf, NodeOutcome::Leaf { value });
            return self.next_node();
        }
        let chosen = Chosen {
            party: b.index("party")?,
            feature: b.index("feature")?,
            quantile: b.index("quantile")?,
            n_left: b.index("n_left")?,
            n_right: b.index("n_right")?,
        };
        let owner = self
            .parties
            .get(chosen.party)
            .ok_or_else(|| Error::Protocol(format!("split names unknown party {}", chosen.party)))?
            .clone();
        let record = self.next_record;
        self.next_record += 1;
        let body = self
            .tree_body(&work)
            .with("record", record as i64)
            .with("feature", chosen.feature as i64)
            .with("quantile", chosen.quantile as i64);
        self.pending = Pending::Split(work, chosen, record);
        Ok(Round::Send(vec![Message::request(MASTER, owner, RF_SPLIT, body)]))
    }

    fn on_split(&mut self, work: NodeWork, chosen: Chosen, record: u64, response: &Message) -> Result<Round> {
        let left = response.body.ids("left")?;
        let right = response.body.ids("right")?;
        if left.len() != chosen.n_left || right.len() != chosen.n_right {
            return Err(Error::Protocol(format!(
                "owner split node {} into {}/{} samples, statistics promised {}/{}",
                work.node,
                left.len(),
                right.len(),
                chosen.n_left,
                chosen.n_right
            )));
        }
        let l = self.build.reserve();
        let r = self.build.reserve();
        let node = TreeNode::Split {
            record,
            party: chosen.party,
            feature: chosen.feature,
            quantile: chosen.quantile,
            left: l,
            right: r,
            samples: work.ids.len(),
        };
        let outcome = NodeOutcome::Split {
            party: chosen.party,
            feature: chosen.feature,
            quantile: chosen.quantile,
        };
        self.resolve(&work, node, outcome);
        let depth = work.depth + 1;
        self.build.queue.push_back(NodeWork { node: l, ids: left, depth });
        self.build.queue.push_back(NodeWork { node: r, ids: right, depth });
        self.next_node()
    }
}

fn single(responses: &[Message]) -> Result<&Message> {
    match responses {
        [r] => Ok(r),
        other => Err(Error::Protocol(format!("expected one response, got {}", other.len()))),
    }
}

impl Pipeline for ForestTrainer {
    fn init(&mut self, responses: &[Message]) -> Result<Round> {
        match self.setup_rounds {
            0 => {
                self.setup_rounds = 1;
                let c = &self.config;
                let body = Body::new()
                    .with("party", self.active as i64)
                    .with("quantiles", c.quantiles as i64)
                    .with("min_leaf", c.min_leaf as i64)
                    .with("epsilon", c.epsilon)
                    .with("seed", c.seed as i64)
                    .with("key_bits", i64::from(c.key_bits))
                    .with("allow_insecure", i64::from(c.allow_insecure_keys));
                Ok(self.to_active(RF_SETUP, body))
            }
            1 => {
                self.setup_rounds = 2;
                let r = single(responses)?;
                self.n_samples = r.body.index("N")?;
                let mut requests = Vec::new();
                for (p, name) in self.passive() {
                    let mut body = Body::new()
                        .with("party", p as i64)
                        .with("quantiles", self.config.quantiles as i64)
                        .with("min_leaf", self.config.min_leaf as i64)
                        .with("epsilon", self.config.epsilon)
                        .with("seed", self.config.seed as i64);
                    for key in ["n", "y", "y.exp"] {
                        let v = r
                            .body
                            .get(key)
                            .ok_or_else(|| Error::Protocol(format!("active setup lacks {key:?}")))?;
                        body.insert(key, v.clone());
                    }
                    requests.push(Message::request(MASTER, name, RF_SETUP, body));
                }
                Ok(if requests.is_empty() {
                    Round::Done
                } else {
                    Round::Send(requests)
                })
            }
            _ => {
                for r in responses {
                    let n = r.body.index("N")?;
                    if n != self.n_samples {
                        return Err(Error::Protocol(format!(
                            "{} has {n} samples, active party has {}",
                            r.sender, self.n_samples
                        )));
                    }
                }
                Ok(Round::Done)
            }
        }
    }

    fn step(&mut self, responses: &[Message]) -> Result<Round> {
        match std::mem::replace(&mut self.pending, Pending::Nothing) {
            Pending::Nothing => Ok(self.start_tree()),
            Pending::Sample => {
                let ids = single(responses)?.body.ids("ids")?;
                let root = self.build.reserve();
                self.build.queue.push_back(NodeWork {
                    node: root,
                    ids,
                    depth: 0,
                });
                self.next_node()
            }
            Pending::Stats(work) => self.on_stats(work, responses),
            Pending::Find(work) => self.on_find(work, single(responses)?),
            Pending::Split(work, chosen, record) => {
                self.on_split(work, chosen, record, single(responses)?)
            }
        }
    }

    fn finish(&mut self, _responses: &[Message]) -> Result<Round> {
        if self.finish_sent {
            return Ok(Round::Done);
        }
        self.finish_sent = true;
        Ok(Round::Send(
            self.parties
                .iter()
                .map(|name| {
                    Message::request(
                        MASTER,
                        name,
                        RF_FINALIZE,
                        Body::new().with("trees", self.trees.len() as i64),
                    )
                })
                .collect(),
        ))
    }
}

/// Walks every tree for every sample, asking the owner of each split which way to go.
/// All pending (tree, sample) pairs advance together, one batched request per owner.
pub fn predict_forest<T: Transport + ?Sized>(
    transport: &T,
    model: &ForestModel,
    ids: &[u64],
) -> Result<Predictions> {
    if model.trees.is_empty() {
        return Err(Error::Config("forest has no trees".into()));
    }
    let mut position = vec![vec![0usize; ids.len()]; model.trees.len()];
    let max_depth = model.trees.iter().map(|t| t.nodes.len()).max().unwrap_or(0);
    for round in 0.. {
        if round > max_depth {
            return Err(Error::Config("forest topology contains a cycle".into()));
        }
        let mut batches: BTreeMap<usize, Vec<(usize, usize, u64)>> = BTreeMap::new();
        for (t, tree) in model.trees.iter().enumerate() {
            for (i, &node) in position[t].iter().enumerate() {
                let current = tree
                    .nodes
                    .get(node)
                    .ok_or_else(|| Error::Config(format!("tree {t} has no node {node}")))?;
                if let TreeNode::Split { record, party, .. } = current {
                    batches.entry(*party).or_default().push((t, i, *record));
                }
            }
        }
        if batches.is_empty() {
            break;
        }
        let mut requests = Vec::with_capacity(batches.len());
        for (&party, items) in &batches {
            let owner = model
                .parties
                .get(party)
                .ok_or_else(|| Error::Config(format!("split owned by unknown party {party}")))?;
            let records: Vec<f64> = items.iter().map(|&(_, _, r)| r as f64).collect();
            let sample_ids: Vec<u64> = items.iter().map(|&(_, i, _)| ids[i]).collect();
            let body = Body::new()
                .with("records", records)
                .with("ids", ids_to_floats(&sample_ids));
            requests.push(Message::request(MASTER, owner, RF_STEP, body));
        }
        let responses = broadcast(transport, &requests)?;
        check_responses(&responses)?;
        for ((_, items), r) in batches.iter().zip(&responses) {
            let dirs = r.body.float_vec("directions")?;
            if dirs.len() != items.len() {
                return Err(Error::Protocol(format!("{} answered {} of {} steps", r.sender, dirs.len(), items.len())));
            }
            for (&(t, i, _), &d) in items.iter().zip(dirs) {
                if let TreeNode::Split { left, right, .. } = model.trees[t].nodes[position[t][i]] {
                    position[t][i] = if d == 0.0 { left } else { right };
                }
            }
        }
    }
    let mut scores = vec![0.0; ids.len()];
    for (t, tree) in model.trees.iter().enumerate() {
        for (i, s) in scores.iter_mut().enumerate() {
            if let TreeNode::Leaf { value, .. } = tree.nodes[position[t][i]] {
                *s += value;
            }
        }
    }
    let n_trees = model.trees.len() as f64;
    for s in &mut scores {
        *s /= n_trees;
    }
    let labels = scores.iter().map(|&s| if s >= 0.5 { 1.0 } else { 0.0 }).collect();
    Ok(Predictions {
        ids: ids.to_vec(),
        scores,
        labels,
    })
}
