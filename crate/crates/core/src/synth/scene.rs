use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pose::{Point, IMAGE_H, IMAGE_W};

/// Ground-line band (image rows) where the actor can stand and furniture rests.
pub const FLOOR_TOP: f64 = 150.0;
pub const FLOOR_BOTTOM: f64 = 280.0;
const SIDE_MARGIN: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Affordance {
    Sit,
    Lie,
    Touch,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FurnitureKind {
    Chair,
    Couch,
    Cabinet,
    Table,
}

impl FurnitureKind {
    pub const ALL: [FurnitureKind; 4] = [
        FurnitureKind::Chair,
        FurnitureKind::Couch,
        FurnitureKind::Cabinet,
        FurnitureKind::Table,
    ];

    /// Width, height and surface height in pixels.
    pub fn dims(self) -> (f64, f64, f64) {
        match self {
            FurnitureKind::Chair => (40.0, 40.0, 22.0),
            FurnitureKind::Couch => (120.0, 50.0, 28.0),
            FurnitureKind::Cabinet => (40.0, 60.0, 60.0),
            FurnitureKind::Table => (60.0, 40.0, 40.0),
        }
    }

    pub fn affordance(self) -> Affordance {
        match self {
            FurnitureKind::Chair => Affordance::Sit,
            FurnitureKind::Couch => Affordance::Lie,
            FurnitureKind::Cabinet => Affordance::Touch,
            FurnitureKind::Table => Affordance::None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FurnitureKind::Chair => "chair",
            FurnitureKind::Couch => "couch",
            FurnitureKind::Cabinet => "cabinet",
            FurnitureKind::Table => "table",
        }
    }
}

/// Axis-aligned rectangle `[x0, x1) × [y0, y1)` in image pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: Point<f64>) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }

    pub fn inside_image(&self) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= IMAGE_W as f64 && self.y1 <= IMAGE_H as f64
    }

    pub fn center(&self) -> Point<f64> {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Furniture {
    pub kind: FurnitureKind,
    pub affordance: Affordance,
    pub rect: Rect,
    pub surface_height: f64,
}

impl Furniture {
    /// Floor point under the middle of the piece.
    pub fn base(&self) -> Point<f64> {
        Point::new(0.5 * (self.rect.x0 + self.rect.x1), self.rect.y1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub furniture: Vec<Furniture>,
    pub ambient: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn interactive(&self) -> Vec<usize> {
        (0..self.furniture.len())
            .filter(|&i| self.furniture[i].affordance != Affordance::None)
            .collect()
    }
}

/// Random floor point for the actor's ground anchor.
pub fn random_floor_point(rng: &mut impl Rng) -> Point<f64> {
    Point::new(
        rng.gen_range(SIDE_MARGIN + 30.0..IMAGE_W as f64 - SIDE_MARGIN - 30.0),
        rng.gen_range(FLOOR_TOP..FLOOR_BOTTOM),
    )
}

/// Two to five pairwise-disjoint pieces, at least one of which can be interacted with.
pub fn generate_scene(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ambient = rng.gen_range(0.15..0.25);
    let target = rng.gen_range(2..=5);
    let mut furniture: Vec<Furniture> = Vec::new();
    let mut attempts = 0;
    while furniture.len() < target && (attempts < 1000 || furniture.len() < 2) {
        attempts += 1;
        let kind = if furniture.is_empty() {
            FurnitureKind::ALL[rng.gen_range(0..3)]
        } else {
            FurnitureKind::ALL[rng.gen_range(0..4)]
        };
        let (w, h, surface) = kind.dims();
        let x0 = rng.gen_range(SIDE_MARGIN..IMAGE_W as f64 - SIDE_MARGIN - w).round();
        let y1 = rng.gen_range(FLOOR_TOP..FLOOR_BOTTOM).round();
        let rect = Rect {
            x0,
            y0: y1 - h,
            x1: x0 + w,
            y1,
        };
        if furniture.iter().any(|f| f.rect.intersects(&rect)) {
            continue;
        }
        furniture.push(Furniture {
            kind,
            affordance: kind.affordance(),
            rect,
            surface_height: surface,
        });
    }
    SceneSpec {
        width: IMAGE_W,
        height: IMAGE_H,
        furniture,
        ambient,
        seed,
    }
}
