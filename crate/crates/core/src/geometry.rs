//! Half-open intervals, axis-aligned boxes and their dyadic partitions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidInterval { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t < self.hi
    }

    /// Left edge of dyadic block `i` at `level`; edge `2^level` is `hi` exactly.
    pub fn dyadic_edge(&self, level: u32, i: usize) -> f64 {
        let count = 1usize << level;
        if i >= count {
            self.hi
        } else {
            self.lo + i as f64 * self.length() / count as f64
        }
    }

    pub fn dyadic_block(&self, level: u32, i: usize) -> Interval {
        Interval {
            lo: self.dyadic_edge(level, i),
            hi: self.dyadic_edge(level, i + 1),
        }
    }

    /// Index of the level-`level` dyadic block containing `t`.
    pub fn dyadic_index(&self, level: u32, t: f64) -> Result<usize> {
        if !self.contains(t) {
            return Err(Error::OutsideDomain(format!("{t} not in {self}")));
        }
        let count = 1usize << level;
        let width = self.length() / count as f64;
        let mut i = (((t - self.lo) / width).floor() as usize).min(count - 1);
        // floor can land one block off when the edge itself is rounded
        if t < self.dyadic_edge(level, i) {
            i -= 1;
        } else if i + 1 < count && t >= self.dyadic_edge(level, i + 1) {
            i += 1;
        }
        Ok(i)
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(v: Interval) -> Self {
        [v.lo, v.hi]
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?},{:?})", self.lo, self.hi)
    }
}

impl FromStr for Interval {
    type Err = Error;

    /// Accepts `[lo,hi)`; a closing `]` is read the same way.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidBox(format!("malformed interval literal `{s}`"));
        let inner = s
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(')').or_else(|| r.strip_suffix(']')))
            .ok_or_else(bad)?;
        let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        Interval::new(lo, hi)
    }
}

/// Product of named half-open intervals, 1 to 3 axes.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    axes: Vec<(String, Interval)>,
}

impl IntervalBox {
    pub fn new(axes: Vec<(String, Interval)>) -> Result<Self> {
        Self::with_max_dim(axes, MAX_DIM)
    }

    /// Boxes used internally for the stage-1 system problem carry one extra
    /// axis (the free dependent variable).
    pub(crate) fn with_max_dim(axes: Vec<(String, Interval)>, max_dim: usize) -> Result<Self> {
        if axes.is_empty() || axes.len() > max_dim {
            return Err(Error::InvalidBox(format!(
                "dimension {} outside 1..={max_dim}",
                axes.len()
            )));
        }
        for (i, (name, _)) in axes.iter().enumerate() {
            if axes[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::InvalidBox(format!("duplicate axis `{name}`")));
            }
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[(String, Interval)] {
        &self.axes
    }

    pub fn names(&self) -> Vec<&str> {
        self.axes.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn interval(&self, k: usize) -> Interval {
        self.axes[k].1
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|(_, iv)| iv.length()).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.axes.iter().zip(x).all(|((_, iv), &t)| iv.contains(t))
    }

    pub(crate) fn extended(&self, name: &str, interval: Interval) -> Result<Self> {
        let mut axes = self.axes.clone();
        axes.push((name.to_string(), interval));
        Self::with_max_dim(axes, MAX_DIM + 1)
    }

    fn with_intervals(&self, intervals: impl Iterator<Item = Interval>) -> Self {
        Self {
            axes: self
                .axes
                .iter()
                .zip(intervals)
                .map(|((n, _), iv)| (n.clone(), iv))
                .collect(),
        }
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (name, iv)) in self.axes.iter().enumerate() {
            if k > 0 {
                f.write_str(";")?;
            }
            write!(f, "{name}={iv}")?;
        }
        Ok(())
    }
}

impl FromStr for IntervalBox {
    type Err = Error;

    /// Parses `x1=[-0.5,0.5);x2=[-0.5,0.5)`.
    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .split(';')
            .filter(|part| !part.trim().is_empty())
            .map(|part| {
                let (name, iv) = part
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidBox(format!("missing `=` in `{part}`")))?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::InvalidBox(format!("missing axis name in `{part}`")));
                }
                Ok((name.to_string(), iv.parse()?))
            })
            .collect::<Result<Vec<_>>>()?;
        IntervalBox::new(axes)
    }
}

/// Multi-indices of a `(2^level)^dim` grid in row-major order (last axis fastest).
pub fn multi_indices(dim: usize, per_axis: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = per_axis.pow(dim as u32);
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; dim];
        for k in (0..dim).rev() {
            idx[k] = flat % per_axis;
            flat /= per_axis;
        }
        idx
    })
}

/// Level-`level` dyadic partition of a box.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicGrid {
    base: IntervalBox,
    level: u32,
}

impl DyadicGrid {
    pub fn new(base: IntervalBox, level: u32) -> Self {
        Self { base, level }
    }

    pub fn base(&self) -> &IntervalBox {
        &self.base
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn blocks_per_axis(&self) -> usize {
        1 << self.level
    }

    /// Block width along axis `k`.
    pub fn spacing(&self, k: usize) -> f64 {
        self.base.interval(k).length() / self.blocks_per_axis() as f64
    }

    pub fn block(&self, index: &[usize]) -> IntervalBox {
        self.base.with_intervals(
            self.base
                .axes
                .iter()
                .zip(index)
                .map(|((_, iv), &i)| iv.dyadic_block(self.level, i)),
        )
    }

    /// All blocks in row-major multi-index order.
    pub fn blocks(&self) -> Vec<IntervalBox> {
        multi_indices(self.base.dim(), self.blocks_per_axis())
            .map(|idx| self.block(&idx))
            .collect()
    }

    /// The unique block containing `x`, with its multi-index.
    pub fn shrinking_block(&self, x: &[f64]) -> Result<(Vec<usize>, IntervalBox)> {
        if x.len() != self.base.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.base.dim(),
                got: x.len(),
            });
        }
        let index = self
            .base
            .axes
            .iter()
            .zip(x)
            .map(|((_, iv), &t)| iv.dyadic_index(self.level, t))
            .collect::<Result<Vec<_>>>()?;
        let block = self.block(&index);
        Ok((index, block))
    }
}

pub fn dyadic_blocks(base: &IntervalBox, level: u32) -> Vec<IntervalBox> {
    DyadicGrid::new(base.clone(), level).blocks()
}
