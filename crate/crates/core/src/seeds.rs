//! Labeled click collections and their JSON form.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridIndex, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "fg")]
    Foreground,
    #[serde(rename = "bg")]
    Background,
}

/// One click as it appears on the wire: `{"coords": [...], "label": "fg"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub coords: Vec<usize>,
    pub label: Label,
}

/// Distinct grid positions sharing one label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedSet {
    points: Vec<GridIndex>,
    label: Label,
}

impl SeedSet {
    /// Builds a set, dropping repeated positions (first occurrence wins).
    pub fn new(points: impl IntoIterator<Item = GridIndex>, label: Label) -> Self {
        let mut seen = HashSet::new();
        let points = points
            .into_iter()
            .filter(|p| seen.insert(p.clone()))
            .collect();
        SeedSet { points, label }
    }

    pub fn empty(label: Label) -> Self {
        SeedSet {
            points: Vec::new(),
            label,
        }
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn points(&self) -> &[GridIndex] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: GridIndex) {
        if !self.points.contains(&p) {
            self.points.push(p);
        }
    }

    pub fn extend(&mut self, other: &SeedSet) {
        for p in &other.points {
            self.push(p.clone());
        }
    }

    /// Linear indices, failing on the first point outside `shape`.
    pub fn linear_indices(&self, shape: &Shape) -> Result<Vec<usize>> {
        self.points.iter().map(|p| shape.linear(&p.0)).collect()
    }

    /// Same as [`linear_indices`](Self::linear_indices) but also rejects an empty set.
    pub fn require_indices(&self, shape: &Shape) -> Result<Vec<usize>> {
        if self.points.is_empty() {
            return Err(Error::EmptySeeds);
        }
        self.linear_indices(shape)
    }

    pub fn to_seeds(&self) -> Vec<Seed> {
        self.points
            .iter()
            .map(|p| Seed {
                coords: p.0.clone(),
                label: self.label,
            })
            .collect()
    }
}

/// Split wire seeds into `(foreground, background)` sets.
pub fn split_seeds(seeds: &[Seed]) -> (SeedSet, SeedSet) {
    let pick = |l: Label| {
        SeedSet::new(
            seeds
                .iter()
                .filter(|s| s.label == l)
                .map(|s| GridIndex(s.coords.clone())),
            l,
        )
    };
    (pick(Label::Foreground), pick(Label::Background))
}

/// Reject a batch that labels one cell both ways.
pub fn check_contradictions(fg: &SeedSet, bg: &SeedSet) -> Result<()> {
    let fgs: HashSet<&GridIndex> = fg.points().iter().collect();
    if let Some(p) = bg.points().iter().find(|p| fgs.contains(p)) {
        return Err(Error::Constraint(format!(
            "cell {:?} clicked as both foreground and background",
            p.0
        )));
    }
    Ok(())
}

pub fn parse_seeds(json: &str) -> Result<Vec<Seed>> {
    Ok(serde_json::from_str(json)?)
}

pub fn seeds_to_json(seeds: &[Seed]) -> String {
    serde_json::to_string_pretty(seeds).expect("seeds serialize")
}
