//! Feedback policies extracted from a solved field.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{fmt17, Grid, NodeTag, TimeStamp};
use crate::model::HybridState;
use crate::operators::{Action, NodeUpdate};
use crate::scalar::{distance, Scalar};

/// Per-node control and discrete action.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<S> {
    pub grid: Arc<Grid<S>>,
    pub tags: Vec<NodeTag>,
    /// Index into `u_samples`; `None` on autonomous nodes.
    pub controls: Vec<Option<usize>>,
    pub actions: Vec<Action>,
    pub u_samples: Vec<Vec<S>>,
    pub stamp: TimeStamp<S>,
}

impl<S: Scalar> Policy<S> {
    pub fn from_updates(
        grid: Arc<Grid<S>>,
        tags: Vec<NodeTag>,
        updates: &[NodeUpdate<S>],
        u_samples: Vec<Vec<S>>,
        stamp: TimeStamp<S>,
    ) -> Self {
        Self {
            grid,
            tags,
            controls: updates.iter().map(|u| u.control).collect(),
            actions: updates.iter().map(|u| u.action).collect(),
            u_samples,
            stamp,
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Candidate nodes for a query point: the enclosing cell's corners, nearest first.
    fn neighbours(&self, x: &HybridState<S>) -> Vec<usize> {
        let cg = self.grid.chart(x.chart);
        let mut nodes = cg.cell_corners(&x.coords);
        nodes.push(cg.nearest(&x.coords));
        nodes.sort_unstable();
        nodes.dedup();
        nodes.sort_by(|&a, &b| {
            let da = distance(&self.grid.coords(a), &x.coords);
            let db = distance(&self.grid.coords(b), &x.coords);
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        nodes
    }

    /// Continuous control at `x`, read from the nearest node that carries one.
    pub fn control_at(&self, x: &HybridState<S>) -> &[S] {
        let idx = self
            .neighbours(x)
            .into_iter()
            .find_map(|n| self.controls[n])
            .unwrap_or(0);
        &self.u_samples[idx]
    }

    /// `v` sample index for an autonomous jump at `x`.
    pub fn autonomous_at(&self, x: &HybridState<S>) -> usize {
        self.neighbours(x)
            .into_iter()
            .find_map(|n| match self.actions[n] {
                Action::Autonomous(v) => Some(v),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Destination node for a controlled jump at `x`, or `None` to decline.
    pub fn controlled_at(&self, x: &HybridState<S>) -> Option<usize> {
        self.neighbours(x)
            .into_iter()
            .find(|&n| self.tags[n] == NodeTag::Controlled)
            .and_then(|n| match self.actions[n] {
                Action::Jump(d) => Some(d),
                _ => None,
            })
    }

    pub fn jump_count(&self) -> usize {
        self.actions.iter().filter(|a| matches!(a, Action::Jump(_))).count()
    }

    /// Columns: `node, chart, x1.., tag, u_index, u1.., action, target`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.max_dim();
        let m = self.u_samples.iter().map(Vec::len).max().unwrap_or(0);
        let mut header = String::from("node,chart");
        for k in 1..=d {
            header.push_str(&format!(",x{k}"));
        }
        header.push_str(",tag,u_index");
        for k in 1..=m {
            header.push_str(&format!(",u{k}"));
        }
        header.push_str(",action,target");
        writeln!(w, "{header}")?;
        for n in 0..self.len() {
            let s = self.grid.state(n);
            let mut line = format!("{n},{}", s.chart.0);
            for k in 0..d {
                line.push(',');
                if let Some(v) = s.coords.get(k) {
                    line.push_str(&fmt17(*v));
                }
            }
            line.push_str(&format!(",{}", self.tags[n].as_str()));
            match self.controls[n] {
                Some(i) => {
                    line.push_str(&format!(",{i}"));
                    for k in 0..m {
                        line.push(',');
                        if let Some(v) = self.u_samples[i].get(k) {
                            line.push_str(&fmt17(*v));
                        }
                    }
                }
                None => {
                    line.push(',');
                    line.push_str(&",".repeat(m));
                }
            }
            let a = self.actions[n];
            line.push_str(&format!(",{},", a.name()));
            if let Some(t) = a.target() {
                line.push_str(&t.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads a CSV written by [`Policy::write_csv`] for a known grid and
    /// control sample list.
    pub fn read_csv<R: BufRead>(grid: Arc<Grid<S>>, u_samples: Vec<Vec<S>>, stamp: TimeStamp<S>, r: R) -> Result<Self> {
        let n = grid.len();
        let mut tags = vec![None; n];
        let mut controls = vec![None; n];
        let mut actions = vec![Action::Continue; n];
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty policy CSV".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let col = |name: &str| {
            cols.iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::Format(format!("policy CSV lacks `{name}`")))
        };
        let (c_node, c_tag, c_u, c_action, c_target) = (
            col("node")?,
            col("tag")?,
            col("u_index")?,
            col("action")?,
            col("target")?,
        );
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Format(format!("bad policy row `{line}`"));
            let node: usize = f.get(c_node).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if node >= n {
                return Err(Error::Format(format!("policy node {node} outside grid")));
            }
            tags[node] = Some(match *f.get(c_tag).ok_or_else(bad)? {
                "A" => NodeTag::Autonomous,
                "C" => NodeTag::Controlled,
                "free" => NodeTag::Free,
                _ => return Err(bad()),
            });
            let u = f.get(c_u).ok_or_else(bad)?;
            controls[node] = if u.is_empty() {
                None
            } else {
                let i: usize = u.parse().map_err(|_| bad())?;
                if i >= u_samples.len() {
                    return Err(bad());
                }
                Some(i)
            };
            let target = f.get(c_target).and_then(|s| s.parse::<usize>().ok());
            actions[node] = match (*f.get(c_action).ok_or_else(bad)?, target) {
                ("continue", _) => Action::Continue,
                ("decline", _) => Action::Decline,
                ("jump", Some(t)) => Action::Jump(t),
                ("autonomous", Some(t)) => Action::Autonomous(t),
                _ => return Err(bad()),
            };
        }
        let tags = tags
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Format("policy CSV does not cover every node".into()))?;
        Ok(Self {
            grid,
            tags,
            controls,
            actions,
            u_samples,
            stamp,
        })
    }
}
