use serde::{Deserialize, Serialize};

use crate::maskops::{MaskGrid, PromptPoint};
use crate::numcore::RngState;
use crate::{Error, Result};

/// Placement attempts per shape before a scene is declared too crowded.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
}

/// An axis-aligned shape inside its bounding box `[y0, y0+h) × [x0, x0+w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub y0: usize,
    pub x0: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        if y < self.y0 || x < self.x0 || y >= self.y0 + self.h || x >= self.x0 + self.w {
            return false;
        }
        match self.kind {
            ShapeKind::Rectangle => true,
            ShapeKind::Ellipse => {
                let (ry, rx) = (self.h as f64 / 2.0, self.w as f64 / 2.0);
                let dy = (y - self.y0) as f64 + 0.5 - ry;
                let dx = (x - self.x0) as f64 + 0.5 - rx;
                (dy / ry).powi(2) + (dx / rx).powi(2) <= 1.0
            }
        }
    }

    pub fn rasterize(&self, height: usize, width: usize) -> MaskGrid {
        MaskGrid::from_fn(height, width, |y, x| self.contains(y, x))
    }

    /// Bounding boxes at least one pixel apart.
    fn separated_from(&self, other: &Shape) -> bool {
        self.y0 > other.y0 + other.h
            || other.y0 > self.y0 + self.h
            || self.x0 > other.x0 + other.w
            || other.x0 > self.x0 + self.w
    }
}

/// A placed object and its category.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    pub class_id: u32,
    pub mask: MaskGrid,
}

pub(super) struct Placement<'a> {
    pub height: usize,
    pub width: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Every placed shape must cover at least one of these points.
    pub required_points: Option<&'a [PromptPoint]>,
}

impl Placement<'_> {
    pub fn place(&self, classes: &[u32], rng: &mut RngState) -> Result<Vec<SceneObject>> {
        let mut objects: Vec<SceneObject> = Vec::with_capacity(classes.len());
        for &class_id in classes {
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let shape = self.random_shape(rng);
                if !objects.iter().all(|o| shape.separated_from(&o.shape)) {
                    continue;
                }
                if let Some(points) = self.required_points {
                    if !points.iter().any(|p| shape.contains(p.y, p.x)) {
                        continue;
                    }
                }
                placed = Some(shape);
                break;
            }
            let shape = placed.ok_or(Error::SceneTooCrowded(MAX_PLACEMENT_ATTEMPTS))?;
            objects.push(SceneObject {
                shape,
                class_id,
                mask: shape.rasterize(self.height, self.width),
            });
        }
        Ok(objects)
    }

    fn random_shape(&self, rng: &mut RngState) -> Shape {
        let span = self.max_size - self.min_size + 1;
        let h = self.min_size + rng.next_below(span);
        let w = self.min_size + rng.next_below(span);
        let kind = if rng.next_below(2) == 0 {
            ShapeKind::Rectangle
        } else {
            ShapeKind::Ellipse
        };
        Shape {
            kind,
            y0: rng.next_below(self.height - h + 1),
            x0: rng.next_below(self.width - w + 1),
            h,
            w,
        }
    }
}
