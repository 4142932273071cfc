//! Closed regions built from smooth primitives, with exact signed distances
//! and outward normals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// Default tolerance for "on the boundary", in state units.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// A closed subset of one chart.
///
/// Signed distance is negative inside, zero on the boundary, positive
/// outside. Unions use the pointwise minimum of their parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound = "S: Scalar")]
pub enum Region<S> {
    Ball {
        center: Vec<S>,
        radius: S,
    },
    /// Axis-aligned box `lo <= x <= hi`.
    Box {
        lo: Vec<S>,
        hi: Vec<S>,
    },
    /// `{ x : normal . x <= offset }`; the normal need not be unit length.
    HalfSpace {
        normal: Vec<S>,
        offset: S,
    },
    Union {
        parts: Vec<Region<S>>,
    },
}

impl<S: Scalar> Region<S> {
    pub fn ball(center: Vec<S>, radius: S) -> Self {
        Region::Ball { center, radius }
    }

    pub fn cuboid(lo: Vec<S>, hi: Vec<S>) -> Self {
        Region::Box { lo, hi }
    }

    pub fn half_space(normal: Vec<S>, offset: S) -> Self {
        Region::HalfSpace { normal, offset }
    }

    pub fn union(parts: Vec<Region<S>>) -> Self {
        Region::Union { parts }
    }

    /// Ambient dimension, or `None` for an empty union.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Ball { center, .. } => Some(center.len()),
            Region::Box { lo, .. } => Some(lo.len()),
            Region::HalfSpace { normal, .. } => Some(normal.len()),
            Region::Union { parts } => parts.first().and_then(Region::dim),
        }
    }

    /// Structural checks: consistent dimensions, positive radii, nonzero
    /// normals, `lo <= hi`.
    pub fn check(&self, dim: usize) -> Result<()> {
        let mismatch = |got: usize| Error::DimensionMismatch { expected: dim, got };
        match self {
            Region::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(mismatch(center.len()));
                }
                if !(*radius > S::zero()) {
                    return Err(Error::InvalidModel(format!("ball radius {radius} must be positive")));
                }
            }
            Region::Box { lo, hi } => {
                if lo.len() != dim {
                    return Err(mismatch(lo.len()));
                }
                if hi.len() != dim {
                    return Err(mismatch(hi.len()));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return Err(Error::InvalidModel("box needs lo <= hi on every axis".into()));
                }
            }
            Region::HalfSpace { normal, offset } => {
                if normal.len() != dim {
                    return Err(mismatch(normal.len()));
                }
                if !(norm(normal) > S::zero()) || !offset.is_finite() {
                    return Err(Error::InvalidModel("half-space needs a nonzero normal".into()));
                }
            }
            Region::Union { parts } => {
                if parts.is_empty() {
                    return Err(Error::InvalidModel("union needs at least one part".into()));
                }
                for part in parts {
                    part.check(dim)?;
                }
            }
        }
        Ok(())
    }

    pub fn signed_distance(&self, x: &[S]) -> Result<S> {
        match self.dim() {
            Some(d) if d == x.len() => Ok(self.sd(x)),
            Some(d) => Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            }),
            None => Err(Error::InvalidModel("empty union".into())),
        }
    }

    /// Signed distance without the dimension check.
    pub fn sd(&self, x: &[S]) -> S {
        match self {
            Region::Ball { center, radius } => {
                let r2 = x
                    .iter()
                    .zip(center)
                    .fold(S::zero(), |acc, (&a, &c)| acc + (a - c) * (a - c));
                r2.sqrt() - *radius
            }
            Region::Box { lo, hi } => {
                let two = S::lit(2.0);
                let mut outside = S::zero();
                let mut inside = S::neg_infinity();
                for ((&xi, &l), &h) in x.iter().zip(lo).zip(hi) {
                    let c = (l + h) / two;
                    let half = (h - l) / two;
                    let q = (xi - c).abs() - half;
                    if q > S::zero() {
                        outside = outside + q * q;
                    }
                    inside = inside.max(q);
                }
                outside.sqrt() + inside.min(S::zero())
            }
            Region::HalfSpace { normal, offset } => (dot(normal, x) - *offset) / norm(normal),
            Region::Union { parts } => parts.iter().map(|p| p.sd(x)).fold(S::infinity(), S::min),
        }
    }

    pub fn contains(&self, x: &[S], tol: S) -> bool {
        self.sd(x) <= tol
    }

    /// Unit outward normal at a boundary point.
    pub fn outward_normal(&self, x: &[S], tol: S) -> Result<Vec<S>> {
        let sd = self.signed_distance(x)?;
        if sd.abs() > tol {
            return Err(Error::NotOnBoundary {
                distance: sd.abs().as_f64(),
                tolerance: tol.as_f64(),
            });
        }
        self.normal_unchecked(x)
    }

    /// Gradient of the signed distance, defined away from the medial axis.
    pub fn normal_unchecked(&self, x: &[S]) -> Result<Vec<S>> {
        match self {
            Region::Ball { center, .. } => {
                let diff: Vec<S> = x.iter().zip(center).map(|(&a, &c)| a - c).collect();
                let n = norm(&diff);
                if n == S::zero() {
                    return Err(Error::ModelFault("normal undefined at a ball center".into()));
                }
                Ok(diff.into_iter().map(|v| v / n).collect())
            }
            Region::Box { lo, hi } => {
                let two = S::lit(2.0);
                let mut q = Vec::with_capacity(x.len());
                let mut sign = Vec::with_capacity(x.len());
                for ((&xi, &l), &h) in x.iter().zip(lo).zip(hi) {
                    let c = (l + h) / two;
                    q.push((xi - c).abs() - (h - l) / two);
                    sign.push(if xi >= c { S::one() } else { -S::one() });
                }
                let mut out = vec![S::zero(); x.len()];
                if q.iter().any(|&v| v > S::zero()) {
                    for i in 0..x.len() {
                        out[i] = q[i].max(S::zero()) * sign[i];
                    }
                    let n = norm(&out);
                    out.iter_mut().for_each(|v| *v = *v / n);
                } else {
                    let mut best = 0;
                    for i in 1..q.len() {
                        if q[i] > q[best] {
                            best = i;
                        }
                    }
                    out[best] = sign[best];
                }
                Ok(out)
            }
            Region::HalfSpace { normal, .. } => {
                let n = norm(normal);
                Ok(normal.iter().map(|&v| v / n).collect())
            }
            Region::Union { parts } => {
                let mut best = 0;
                let mut best_sd = S::infinity();
                for (i, p) in parts.iter().enumerate() {
                    let d = p.sd(x);
                    if d < best_sd {
                        best_sd = d;
                        best = i;
                    }
                }
                parts[best].normal_unchecked(x)
            }
        }
    }

    /// Axis-aligned bounding box, `None` when unbounded.
    pub fn bounding_box(&self) -> Option<(Vec<S>, Vec<S>)> {
        match self {
            Region::Ball { center, radius } => Some((
                center.iter().map(|&c| c - *radius).collect(),
                center.iter().map(|&c| c + *radius).collect(),
            )),
            Region::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            Region::HalfSpace { .. } => None,
            Region::Union { parts } => {
                let mut acc: Option<(Vec<S>, Vec<S>)> = None;
                for p in parts {
                    let (lo, hi) = p.bounding_box()?;
                    acc = Some(match acc {
                        None => (lo, hi),
                        Some((alo, ahi)) => (
                            alo.iter().zip(&lo).map(|(&a, &b)| a.min(b)).collect(),
                            ahi.iter().zip(&hi).map(|(&a, &b)| a.max(b)).collect(),
                        ),
                    });
                }
                acc
            }
        }
    }

    /// The primitives making up this region.
    pub fn primitives(&self) -> Vec<&Region<S>> {
        match self {
            Region::Union { parts } => parts.iter().flat_map(|p| p.primitives()).collect(),
            other => vec![other],
        }
    }

    /// Random points on the boundary that fall inside the window `[lo, hi]`.
    ///
    /// For unions only points on the boundary of the union itself are kept.
    pub fn sample_boundary<R: Rng>(&self, rng: &mut R, count: usize, window: (&[S], &[S])) -> Vec<Vec<S>> {
        let prims = self.primitives();
        let tol = S::lit(1e-7);
        let mut out = Vec::new();
        if prims.is_empty() {
            return out;
        }
        let attempts = count * 8 + 16;
        for k in 0..attempts {
            if out.len() >= count {
                break;
            }
            let prim = prims[k % prims.len()];
            let Some(p) = prim.boundary_point(rng, window) else {
                continue;
            };
            if !in_window(&p, window, tol) {
                continue;
            }
            if prims.len() > 1 && self.sd(&p).abs() > tol {
                continue;
            }
            out.push(p);
        }
        out
    }

    fn boundary_point<R: Rng>(&self, rng: &mut R, window: (&[S], &[S])) -> Option<Vec<S>> {
        match self {
            Region::Ball { center, radius } => {
                let dir = random_direction(rng, center.len());
                Some(center.iter().zip(&dir).map(|(&c, &d)| c + *radius * d).collect())
            }
            Region::Box { lo, hi } => {
                let d = lo.len();
                let axis = rng.random_range(0..d);
                let upper = rng.random_bool(0.5);
                let mut p: Vec<S> = (0..d).map(|i| uniform(rng, lo[i], hi[i])).collect();
                p[axis] = if upper { hi[axis] } else { lo[axis] };
                Some(p)
            }
            Region::HalfSpace { normal, offset } => {
                let p: Vec<S> = (0..normal.len())
                    .map(|i| uniform(rng, window.0[i], window.1[i]))
                    .collect();
                let n2 = dot(normal, normal);
                let s = (dot(normal, &p) - *offset) / n2;
                Some(p.iter().zip(normal).map(|(&pi, &ni)| pi - s * ni).collect())
            }
            Region::Union { .. } => None,
        }
    }

    /// Random points of the region inside the window, by rejection.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R, count: usize, window: (&[S], &[S])) -> Vec<Vec<S>> {
        let (lo, hi) = match self.bounding_box() {
            Some((blo, bhi)) => (
                blo.iter().zip(window.0).map(|(&a, &b)| a.max(b)).collect::<Vec<_>>(),
                bhi.iter().zip(window.1).map(|(&a, &b)| a.min(b)).collect::<Vec<_>>(),
            ),
            None => (window.0.to_vec(), window.1.to_vec()),
        };
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let attempts = count * 20 + 32;
        for _ in 0..attempts {
            if out.len() >= count {
                break;
            }
            let p: Vec<S> = lo.iter().zip(&hi).map(|(&a, &b)| uniform(rng, a, b)).collect();
            if self.sd(&p) <= S::zero() {
                out.push(p);
            }
        }
        out
    }
}

fn in_window<S: Scalar>(p: &[S], window: (&[S], &[S]), tol: S) -> bool {
    p.iter()
        .zip(window.0)
        .zip(window.1)
        .all(|((&x, &l), &h)| x >= l - tol && x <= h + tol)
}

pub(crate) fn uniform<S: Scalar, R: Rng>(rng: &mut R, lo: S, hi: S) -> S {
    let u: f64 = rng.random();
    lo + (hi - lo) * S::lit(u)
}

/// Uniformly distributed unit vector.
pub fn random_direction<S: Scalar, R: Rng>(rng: &mut R, dim: usize) -> Vec<S> {
    if dim == 1 {
        return vec![if rng.random_bool(0.5) { S::one() } else { -S::one() }];
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|a| S::lit(a / n)).collect();
        }
    }
}
