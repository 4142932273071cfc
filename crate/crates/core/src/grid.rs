//! Rectilinear per-chart grids and gridded value fields.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChartId, HybridModel, HybridState, RegionKind};
use crate::scalar::Scalar;

const MAX_NODES: usize = 50_000_000;
const BINARY_MAGIC: &[u8; 4] = b"HQVF";
const BINARY_VERSION: u32 = 1;

/// How to lay a grid over a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GridSpec<S> {
    /// Target spacing on every axis.
    pub h: S,
    /// Half-width of the truncation box; defaults to the model's.
    pub trunc_radius: Option<S>,
}

impl<S: Scalar> GridSpec<S> {
    pub fn new(h: S) -> Self {
        Self { h, trunc_radius: None }
    }

    pub fn with_trunc_radius(mut self, r: S) -> Self {
        self.trunc_radius = Some(r);
        self
    }
}

/// Grid over one chart. Nodes are numbered row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ChartGrid<S> {
    pub chart: ChartId,
    pub lo: Vec<S>,
    pub spacing: Vec<S>,
    pub counts: Vec<usize>,
    strides: Vec<usize>,
    offset: usize,
}

/// Interpolation weights over global node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil<S> {
    pub entries: Vec<(usize, S)>,
    /// Distance between the query point and the point actually interpolated.
    pub clamp: S,
}

impl<S: Scalar> Stencil<S> {
    pub fn apply(&self, values: &[S]) -> S {
        self.entries.iter().fold(S::zero(), |acc, &(i, w)| acc + w * values[i])
    }
}

impl<S: Scalar> ChartGrid<S> {
    fn new(chart: ChartId, lo: Vec<S>, spacing: Vec<S>, counts: Vec<usize>, offset: usize) -> Self {
        let d = counts.len();
        let mut strides = vec![1; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * counts[k + 1];
        }
        Self {
            chart,
            lo,
            spacing,
            counts,
            strides,
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global index of this chart's first node.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn hi(&self) -> Vec<S> {
        self.lo
            .iter()
            .zip(&self.spacing)
            .zip(&self.counts)
            .map(|((&l, &h), &n)| l + h * S::from_usize_lossy(n.saturating_sub(1)))
            .collect()
    }

    /// Largest spacing over the axes.
    pub fn max_spacing(&self) -> S {
        self.spacing.iter().copied().fold(S::zero(), S::max)
    }

    pub fn multi_index(&self, local: usize) -> Vec<usize> {
        let mut rem = local;
        self.strides
            .iter()
            .map(|&s| {
                let i = rem / s;
                rem %= s;
                i
            })
            .collect()
    }

    pub fn local_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }

    pub fn coords_into(&self, local: usize, out: &mut [S]) {
        let mut rem = local;
        for k in 0..self.dim() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            out[k] = self.lo[k] + self.spacing[k] * S::from_usize_lossy(i);
        }
    }

    pub fn coords(&self, local: usize) -> Vec<S> {
        let mut out = vec![S::zero(); self.dim()];
        self.coords_into(local, &mut out);
        out
    }

    /// Multilinear interpolation stencil; points outside the grid are
    /// clamped to its bounding box.
    pub fn stencil(&self, x: &[S]) -> Stencil<S> {
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![S::zero(); d];
        let mut clamp2 = S::zero();
        for k in 0..d {
            let n = self.counts[k];
            let lo = self.lo[k];
            let hi = lo + self.spacing[k] * S::from_usize_lossy(n - 1);
            let xc = x[k].max(lo).min(hi);
            if x[k].is_nan() {
                clamp2 = S::infinity();
            } else {
                clamp2 = clamp2 + (x[k] - xc) * (x[k] - xc);
            }
            if n == 1 || self.spacing[k] == S::zero() {
                continue;
            }
            let s = (xc - lo) / self.spacing[k];
            let i = s.floor().to_usize().unwrap_or(0).min(n - 2);
            base[k] = i;
            frac[k] = (s - S::from_usize_lossy(i)).max(S::zero()).min(S::one());
        }
        let mut entries = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut w = S::one();
            let mut idx = 0;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                if up && self.counts[k] == 1 {
                    w = S::zero();
                    break;
                }
                let wk = if up { frac[k] } else { S::one() - frac[k] };
                w = w * wk;
                idx += (base[k] + usize::from(up)) * self.strides[k];
            }
            if w != S::zero() {
                entries.push((self.offset + idx, w));
            }
        }
        Stencil {
            entries,
            clamp: clamp2.sqrt(),
        }
    }

    /// Global index of the node nearest to `x`.
    pub fn nearest(&self, x: &[S]) -> usize {
        let mut multi = vec![0usize; self.dim()];
        for k in 0..self.dim() {
            if self.counts[k] == 1 || self.spacing[k] == S::zero() {
                continue;
            }
            let s = ((x[k] - self.lo[k]) / self.spacing[k]).round();
            let s = s.max(S::zero()).to_usize().unwrap_or(0);
            multi[k] = s.min(self.counts[k] - 1);
        }
        self.offset + self.local_index(&multi)
    }

    /// Global indices of the `2^d` corners of the cell containing `x`.
    pub fn cell_corners(&self, x: &[S]) -> Vec<usize> {
        let d = self.dim();
        let mut base = vec![0usize; d];
        for k in 0..d {
            let n = self.counts[k];
            if n == 1 || self.spacing[k] == S::zero() {
                continue;
            }
            let s = ((x[k] - self.lo[k]) / self.spacing[k]).floor();
            base[k] = s.max(S::zero()).to_usize().unwrap_or(0).min(n - 2);
        }
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut multi = base.clone();
            let mut ok = true;
            for k in 0..d {
                if (corner >> k) & 1 == 1 {
                    if self.counts[k] == 1 {
                        ok = false;
                        break;
                    }
                    multi[k] += 1;
                }
            }
            if ok {
                out.push(self.offset + self.local_index(&multi));
            }
        }
        out
    }
}

/// Axis description used to rebuild a grid without a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ChartAxes<S> {
    pub lo: Vec<S>,
    pub spacing: Vec<S>,
    pub counts: Vec<usize>,
}

/// Grids over every chart, with one global node numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<S> {
    pub charts: Vec<ChartGrid<S>>,
    total: usize,
}

impl<S: Scalar> Grid<S> {
    /// Lays a grid of spacing close to `spec.h` over each chart's domain
    /// truncated to `[-r, r]^d`.
    pub fn build(model: &HybridModel<S>, spec: &GridSpec<S>) -> Result<Self> {
        if !(spec.h > S::zero()) {
            return Err(Error::InvalidGrid(format!("spacing {} must be positive", spec.h)));
        }
        let radius = spec.trunc_radius.unwrap_or_else(|| model.default_trunc_radius());
        let mut axes = Vec::with_capacity(model.chart_count());
        for i in 0..model.chart_count() {
            let (lo, hi) = model.window(ChartId(i), radius);
            let mut spacing = Vec::with_capacity(lo.len());
            let mut counts = Vec::with_capacity(lo.len());
            for (&l, &h) in lo.iter().zip(&hi) {
                if !(h >= l) {
                    return Err(Error::InvalidGrid(format!(
                        "chart {i} is empty after truncation to radius {radius}"
                    )));
                }
                let cells = ((h - l) / spec.h - S::lit(1e-9)).ceil().max(S::zero());
                let cells = cells
                    .to_usize()
                    .filter(|&c| c < MAX_NODES)
                    .ok_or_else(|| Error::InvalidGrid("too many nodes".into()))?;
                if cells == 0 {
                    spacing.push(S::zero());
                    counts.push(1);
                } else {
                    spacing.push((h - l) / S::from_usize_lossy(cells));
                    counts.push(cells + 1);
                }
            }
            axes.push(ChartAxes { lo, spacing, counts });
        }
        Self::from_axes(axes)
    }

    pub fn from_axes(axes: Vec<ChartAxes<S>>) -> Result<Self> {
        let mut charts = Vec::with_capacity(axes.len());
        let mut offset = 0usize;
        for (i, a) in axes.into_iter().enumerate() {
            if a.lo.len() != a.counts.len() || a.spacing.len() != a.counts.len() || a.counts.is_empty() {
                return Err(Error::InvalidGrid(format!("chart {i}: inconsistent axis description")));
            }
            if a.counts.contains(&0) {
                return Err(Error::InvalidGrid(format!("chart {i}: empty axis")));
            }
            let n = a
                .counts
                .iter()
                .try_fold(1usize, |acc, &c| acc.checked_mul(c))
                .filter(|&n| n <= MAX_NODES)
                .ok_or_else(|| Error::InvalidGrid("too many nodes".into()))?;
            charts.push(ChartGrid::new(ChartId(i), a.lo, a.spacing, a.counts, offset));
            offset += n;
        }
        if offset > MAX_NODES {
            return Err(Error::InvalidGrid("too many nodes".into()));
        }
        Ok(Self { charts, total: offset })
    }

    pub fn axes(&self) -> Vec<ChartAxes<S>> {
        self.charts
            .iter()
            .map(|c| ChartAxes {
                lo: c.lo.clone(),
                spacing: c.spacing.clone(),
                counts: c.counts.clone(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn chart(&self, id: ChartId) -> &ChartGrid<S> {
        &self.charts[id.0]
    }

    /// Chart and local index of a global node.
    pub fn locate(&self, node: usize) -> (ChartId, usize) {
        let i = self
            .charts
            .iter()
            .rposition(|c| c.offset <= node)
            .expect("node index within grid");
        (ChartId(i), node - self.charts[i].offset)
    }

    pub fn coords(&self, node: usize) -> Vec<S> {
        let (c, local) = self.locate(node);
        self.charts[c.0].coords(local)
    }

    pub fn state(&self, node: usize) -> HybridState<S> {
        let (c, local) = self.locate(node);
        HybridState {
            chart: c,
            coords: self.charts[c.0].coords(local),
        }
    }

    /// Largest spacing over all charts and axes.
    pub fn max_spacing(&self) -> S {
        self.charts.iter().map(ChartGrid::max_spacing).fold(S::zero(), S::max)
    }

    pub fn stencil(&self, state: &HybridState<S>) -> Stencil<S> {
        self.charts[state.chart.0].stencil(&state.coords)
    }

    pub fn max_dim(&self) -> usize {
        self.charts.iter().map(ChartGrid::dim).max().unwrap_or(0)
    }
}

/// Region membership of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeTag {
    Autonomous,
    Controlled,
    Free,
}

impl NodeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeTag::Autonomous => "A",
            NodeTag::Controlled => "C",
            NodeTag::Free => "free",
        }
    }

    pub fn region(self) -> Option<RegionKind> {
        match self {
            NodeTag::Autonomous => Some(RegionKind::Autonomous),
            NodeTag::Controlled => Some(RegionKind::Controlled),
            NodeTag::Free => None,
        }
    }
}

/// Tolerance for classifying grid nodes against region boundaries.
pub(crate) fn node_tolerance<S: Scalar>(model: &HybridModel<S>, x: &[S]) -> S {
    let scale = x.iter().fold(S::one(), |acc, v| acc.max(v.abs()));
    model.boundary_tol.max(S::lit(64.0) * S::epsilon() * scale)
}

/// Tags every node by signed distance: `A` takes precedence over `C`.
pub fn classify_nodes<S: Scalar>(model: &HybridModel<S>, grid: &Grid<S>) -> Vec<NodeTag> {
    (0..grid.len())
        .map(|n| {
            let s = grid.state(n);
            let tol = node_tolerance(model, &s.coords);
            if model.sd_autonomous(s.chart, &s.coords) <= tol {
                NodeTag::Autonomous
            } else if model.sd_controlled(s.chart, &s.coords) <= tol {
                NodeTag::Controlled
            } else {
                NodeTag::Free
            }
        })
        .collect()
}

/// Nodes within half a cell of a destination set (and inside the domain).
pub fn destination_nodes<S: Scalar>(model: &HybridModel<S>, grid: &Grid<S>) -> Vec<usize> {
    let two = S::lit(2.0);
    (0..grid.len())
        .filter(|&n| {
            let s = grid.state(n);
            let cg = grid.chart(s.chart);
            let half = cg.max_spacing() / two;
            let tol = node_tolerance(model, &s.coords);
            model.sd_destination(s.chart, &s.coords) <= half + tol && model.sd_domain(s.chart, &s.coords) <= tol
        })
        .collect()
}

/// Whether a field is the stationary solution or a time slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound = "S: Scalar")]
pub enum TimeStamp<S> {
    Stationary,
    Slice(S),
}

/// Nodal values over a grid, interpolated multilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField<S> {
    pub grid: Arc<Grid<S>>,
    pub values: Vec<S>,
    pub stamp: TimeStamp<S>,
}

impl<S: Scalar> ValueField<S> {
    pub fn constant(grid: Arc<Grid<S>>, value: S, stamp: TimeStamp<S>) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values, stamp }
    }

    pub fn zeros(grid: Arc<Grid<S>>) -> Self {
        Self::constant(grid, S::zero(), TimeStamp::Stationary)
    }

    pub fn from_fn(grid: Arc<Grid<S>>, stamp: TimeStamp<S>, mut f: impl FnMut(&HybridState<S>) -> S) -> Self {
        let values = (0..grid.len()).map(|n| f(&grid.state(n))).collect();
        Self { grid, values, stamp }
    }

    pub fn with_values(&self, values: Vec<S>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid.clone(),
            values,
            stamp: self.stamp,
        }
    }

    pub fn interpolate(&self, state: &HybridState<S>) -> S {
        self.grid.stencil(state).apply(&self.values)
    }

    pub fn shifted(&self, c: S) -> Self {
        self.with_values(self.values.iter().map(|&v| v + c).collect())
    }

    /// Sup norm of the difference to another field on the same grid.
    pub fn sup_diff(&self, other: &Self) -> S {
        crate::scalar::sup_diff(&self.values, &other.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.max_dim();
        let mut header = String::from("chart,node");
        for k in 1..=d {
            header.push_str(&format!(",x{k}"));
        }
        header.push_str(",value");
        writeln!(w, "{header}")?;
        for n in 0..self.grid.len() {
            let s = self.grid.state(n);
            let mut line = format!("{},{}", s.chart.0, n);
            for k in 0..d {
                match s.coords.get(k) {
                    Some(v) => line.push_str(&format!(",{}", fmt17(*v))),
                    None => line.push(','),
                }
            }
            line.push_str(&format!(",{}", fmt17(self.values[n])));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the `value` column of a CSV written by [`ValueField::write_csv`]
    /// onto a known grid.
    pub fn read_csv<R: BufRead>(grid: Arc<Grid<S>>, stamp: TimeStamp<S>, r: R) -> Result<Self> {
        let mut values = vec![S::nan(); grid.len()];
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let node_col = cols
            .iter()
            .position(|c| *c == "node")
            .ok_or_else(|| Error::Format("missing `node` column".into()))?;
        let value_col = cols
            .iter()
            .position(|c| *c == "value")
            .ok_or_else(|| Error::Format("missing `value` column".into()))?;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let node: usize = fields
                .get(node_col)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad node in `{line}`")))?;
            let value: f64 = fields
                .get(value_col)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad value in `{line}`")))?;
            if node >= values.len() {
                return Err(Error::Format(format!("node {node} outside grid")));
            }
            values[node] = S::lit(value);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Format("CSV does not cover every node".into()));
        }
        Ok(Self { grid, values, stamp })
    }

    /// Compact little-endian layout: magic, version, chart count, per chart
    /// `dim` then `(count, lo, spacing)` per axis, the time stamp (NaN when
    /// stationary), then all values row-major as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.charts.len() as u32).to_le_bytes())?;
        for c in &self.grid.charts {
            w.write_all(&(c.dim() as u32).to_le_bytes())?;
            for k in 0..c.dim() {
                w.write_all(&(c.counts[k] as u64).to_le_bytes())?;
                w.write_all(&c.lo[k].as_f64().to_le_bytes())?;
                w.write_all(&c.spacing[k].as_f64().to_le_bytes())?;
            }
        }
        let stamp = match self.stamp {
            TimeStamp::Stationary => f64::NAN,
            TimeStamp::Slice(t) => t.as_f64(),
        };
        w.write_all(&stamp.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("not a value-field file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != BINARY_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let charts = read_u32(&mut r)? as usize;
        let mut axes = Vec::with_capacity(charts);
        for _ in 0..charts {
            let d = read_u32(&mut r)? as usize;
            let mut a = ChartAxes {
                lo: Vec::with_capacity(d),
                spacing: Vec::with_capacity(d),
                counts: Vec::with_capacity(d),
            };
            for _ in 0..d {
                a.counts.push(read_u64(&mut r)? as usize);
                a.lo.push(S::lit(read_f64(&mut r)?));
                a.spacing.push(S::lit(read_f64(&mut r)?));
            }
            axes.push(a);
        }
        let grid = Arc::new(Grid::from_axes(axes)?);
        let stamp = read_f64(&mut r)?;
        let stamp = if stamp.is_nan() {
            TimeStamp::Stationary
        } else {
            TimeStamp::Slice(S::lit(stamp))
        };
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(S::lit(read_f64(&mut r)?));
        }
        Ok(Self { grid, values, stamp })
    }
}

/// Formats with 17 significant digits.
pub fn fmt17<S: Scalar>(v: S) -> String {
    format!("{:.16e}", v.as_f64())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
