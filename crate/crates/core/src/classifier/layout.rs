use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Category id used for background points in label files.
pub const BACKGROUND: u32 = 0;

/// Row layout of the cosine weight matrix: `[background | base… | novel…]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLayout {
    pub base_class_ids: Vec<u32>,
    pub novel_class_ids: Vec<u32>,
    /// One flag per row; background and base rows are always active.
    pub active: Vec<bool>,
}

impl ClassLayout {
    pub fn new(base_class_ids: Vec<u32>, novel_class_ids: Vec<u32>) -> Result<Self> {
        let mut layout = ClassLayout {
            active: Vec::new(),
            base_class_ids,
            novel_class_ids,
        };
        layout.active = (0..layout.total_classes())
            .map(|row| row <= layout.base_class_ids.len())
            .collect();
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for &id in self.base_class_ids.iter().chain(&self.novel_class_ids) {
            if id == BACKGROUND {
                return Err(Error::InvalidConfig(
                    "category id 0 is reserved for background".into(),
                ));
            }
            if !seen.insert(id) {
                return Err(Error::InvalidConfig(format!("duplicate category id {id}")));
            }
        }
        if self.active.len() != self.total_classes() {
            return Err(Error::InvalidConfig(format!(
                "layout has {} active flags for {} rows",
                self.active.len(),
                self.total_classes()
            )));
        }
        if !self.active[..=self.base_class_ids.len()].iter().all(|&a| a) {
            return Err(Error::InvalidConfig(
                "background and base rows must be active".into(),
            ));
        }
        Ok(())
    }

    pub fn total_classes(&self) -> usize {
        1 + self.base_class_ids.len() + self.novel_class_ids.len()
    }

    pub fn num_base(&self) -> usize {
        self.base_class_ids.len()
    }

    /// Row of a category id; background (id 0) maps to row 0.
    pub fn row_of(&self, category: u32) -> Option<usize> {
        if category == BACKGROUND {
            return Some(0);
        }
        if let Some(i) = self.base_class_ids.iter().position(|&c| c == category) {
            return Some(1 + i);
        }
        self.novel_class_ids
            .iter()
            .position(|&c| c == category)
            .map(|i| 1 + self.base_class_ids.len() + i)
    }

    /// Category id stored at a row; `BACKGROUND` for row 0.
    pub fn category_of(&self, row: usize) -> u32 {
        if row == 0 {
            BACKGROUND
        } else if row <= self.base_class_ids.len() {
            self.base_class_ids[row - 1]
        } else {
            self.novel_class_ids[row - 1 - self.base_class_ids.len()]
        }
    }

    pub fn is_base(&self, category: u32) -> bool {
        self.base_class_ids.contains(&category)
    }

    pub fn is_novel(&self, category: u32) -> bool {
        self.novel_class_ids.contains(&category)
    }

    pub fn is_active(&self, row: usize) -> bool {
        self.active[row]
    }

    pub fn active_novel(&self) -> Vec<u32> {
        self.novel_class_ids
            .iter()
            .copied()
            .filter(|&c| self.row_of(c).is_some_and(|r| self.active[r]))
            .collect()
    }
}
