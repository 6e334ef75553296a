//! Finite unions of closed real intervals.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval endpoints out of order: [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Sorted, pairwise disjoint closed intervals.
///
/// `resolution` bounds how far the sampled hull may undershoot the true set:
/// it is the largest jump of any sampled branch between neighbouring grid
/// points, or zero for sets that are known exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IntervalUnion {
    pub components: Vec<Interval>,
    pub resolution: f64,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Merges arbitrary intervals; touching or overlapping ones coalesce.
    pub fn from_intervals(mut items: Vec<Interval>) -> Self {
        items.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut out: Vec<Interval> = Vec::with_capacity(items.len());
        for it in items {
            match out.last_mut() {
                Some(last) if it.lo <= last.hi => last.hi = last.hi.max(it.hi),
                _ => out.push(it),
            }
        }
        IntervalUnion {
            components: out,
            resolution: 0.0,
        }
    }

    /// Merges points into components whenever they are within `tol`.
    pub fn from_points(points: &[f64], tol: f64) -> Self {
        Self::from_intervals(
            points
                .iter()
                .map(|&p| Interval::new(p - 0.5 * tol, p + 0.5 * tol))
                .collect(),
        )
        .shrink(0.5 * tol)
    }

    fn shrink(mut self, by: f64) -> Self {
        for c in &mut self.components {
            c.lo += by;
            c.hi -= by;
        }
        self
    }

    pub fn union(&self, other: &IntervalUnion) -> Self {
        let mut items = self.components.clone();
        items.extend_from_slice(&other.components);
        let mut u = Self::from_intervals(items);
        u.resolution = self.resolution.max(other.resolution);
        u
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.components.iter().any(|c| c.contains(x))
    }

    pub fn distance(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.distance(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the component nearest to `x`.
    pub fn nearest(&self, x: f64) -> Option<(usize, f64)> {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.distance(x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Open gaps between consecutive components, all lying below `cutoff`.
    pub fn gaps_below(&self, cutoff: f64) -> Vec<Interval> {
        self.components
            .windows(2)
            .filter(|w| w[1].lo <= cutoff)
            .map(|w| Interval::new(w[0].hi, w[1].lo))
            .collect()
    }

    /// Components that intersect `(-inf, cutoff]`.
    pub fn below(&self, cutoff: f64) -> Vec<Interval> {
        self.components
            .iter()
            .filter(|c| c.lo <= cutoff)
            .copied()
            .collect()
    }

    /// Interval around component `i` whose endpoints sit in the middle of the
    /// neighbouring gaps; below the first component it reaches one unit
    /// further down, and past the last it stops at `cutoff`.
    pub fn isolating_interval(&self, i: usize, cutoff: f64) -> Interval {
        let c = &self.components;
        let lo = if i == 0 { c[0].lo - 1.0 } else { 0.5 * (c[i - 1].hi + c[i].lo) };
        let hi = if i + 1 < c.len() { 0.5 * (c[i].hi + c[i + 1].lo) } else { cutoff };
        Interval::new(lo, hi)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["component", "lo", "hi", "resolution"])?;
        for (i, c) in self.components.iter().enumerate() {
            wr.write_record([
                i.to_string(),
                format!("{:.12e}", c.lo),
                format!("{:.12e}", c.hi),
                format!("{:.3e}", self.resolution),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}
