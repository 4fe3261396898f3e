//! Axis-aligned boxes, IoU, and the box-identity relation used by every loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two boxes denote the same object when their IoU exceeds this value.
pub const SAME_BOX_IOU: f64 = 0.25;

/// Closed axis-aligned box `[x_min, x_max] x [y_min, y_max]`. Coordinates are
/// unit-agnostic; area carries no `+1` pixel correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain(format!("box coordinates must be finite: {coords:?}")));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::domain(format!("box has min > max: {coords:?}")));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;
    fn try_from(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union; `0` when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Box identity: IoU strictly above [`SAME_BOX_IOU`].
pub fn same_box(pred: &BoundingBox, truth: &BoundingBox) -> bool {
    iou(pred, truth) > SAME_BOX_IOU
}

/// Among proposals identical to `truth`, the one with the smallest score.
/// Score ties go to the larger IoU with `truth`, then to the first in input
/// order. Returns the proposal's index.
pub fn match_truth_to_proposals<'a, I>(truth: &BoundingBox, proposals: I) -> Option<usize>
where
    I: IntoIterator<Item = (&'a BoundingBox, f64)>,
{
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, (b, s)) in proposals.into_iter().enumerate() {
        let o = iou(b, truth);
        if o <= SAME_BOX_IOU {
            continue;
        }
        match best {
            Some((_, bs, bo)) if bs < s || (bs == s && bo >= o) => {}
            _ => best = Some((i, s, o)),
        }
    }
    best.map(|(i, _, _)| i)
}
