use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::image::{BinaryMask, Image, IMAGE_SIZE};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConceptId {
    /// Enlarged heart: large, fixed location.
    Cardio,
    /// Bright disk inside a lung: small, random location.
    Nodule,
    /// Brightened band at a lung base: medium, one of two locations.
    Effusion,
}

impl ConceptId {
    pub const ALL: [ConceptId; 3] = [ConceptId::Cardio, ConceptId::Nodule, ConceptId::Effusion];

    pub fn name(self) -> &'static str {
        match self {
            ConceptId::Cardio => "CARDIO",
            ConceptId::Nodule => "NODULE",
            ConceptId::Effusion => "EFFUSION",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConceptId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ConceptId::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown concept {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StyleId {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub noise_sigma: f64,
    pub offset: f64,
    pub contrast: f64,
}

impl StyleId {
    pub const ALL: [StyleId; 2] = [StyleId::A, StyleId::B];

    pub fn params(self) -> StyleParams {
        match self {
            StyleId::A => StyleParams {
                noise_sigma: 0.02,
                offset: 0.0,
                contrast: 1.0,
            },
            StyleId::B => StyleParams {
                noise_sigma: 0.05,
                offset: 0.05,
                contrast: 0.9,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StyleId::A => "A",
            StyleId::B => "B",
        }
    }
}

impl fmt::Display for StyleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StyleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "A" | "a" => Ok(StyleId::A),
            "B" | "b" => Ok(StyleId::B),
            _ => Err(Error::InvalidArgument(format!("unknown style {s:?}"))),
        }
    }
}

/// Axis-aligned ellipse in pixel coordinates; pixel `(x, y)` is tested at its
/// center `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl Ellipse {
    pub const fn new(cx: f64, cy: f64, rx: f64, ry: f64) -> Self {
        Self { cx, cy, rx, ry }
    }

    #[inline]
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        let dx = (px - self.cx) / self.rx;
        let dy = (py - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }

    #[inline]
    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        self.contains_point(x as f64 + 0.5, y as f64 + 0.5)
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.ry
    }
}

pub const TORSO: Ellipse = Ellipse::new(32.0, 33.0, 28.0, 29.0);
pub const LUNG_LEFT: Ellipse = Ellipse::new(18.0, 28.0, 9.0, 18.0);
pub const LUNG_RIGHT: Ellipse = Ellipse::new(46.0, 28.0, 9.0, 18.0);
pub const HEART: Ellipse = Ellipse::new(32.0, 41.0, 7.0, 9.0);

const BACKGROUND_LEVEL: f64 = 0.05;
const TORSO_LEVEL: f64 = 0.45;
const LUNG_LEVEL: f64 = 0.2;
const HEART_LEVEL: f64 = 0.7;
const EFFUSION_LEVEL: f64 = 0.5;
const NODULE_BOOST: f64 = 0.35;

const CARDIO_SCALE: (f64, f64) = (1.4, 1.8);
const NODULE_RADIUS: (f64, f64) = (2.0, 4.0);
/// Nodule centers are drawn from the lung ellipse shrunk by this factor so the
/// whole disk stays inside the torso.
const NODULE_CENTER_SHRINK: f64 = 0.7;
const EFFUSION_HEIGHT: (u64, u64) = (6, 12);

// Independent RNG streams per sample seed.
const STREAM_CARDIO: u64 = 1;
const STREAM_NODULE: u64 = 2;
const STREAM_EFFUSION: u64 = 3;
const STREAM_NOISE: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LungSide {
    Left,
    Right,
}

impl LungSide {
    pub fn ellipse(self) -> Ellipse {
        match self {
            LungSide::Left => LUNG_LEFT,
            LungSide::Right => LUNG_RIGHT,
        }
    }

    fn draw(rng: &mut Rng) -> Self {
        if rng.below(2) == 0 {
            LungSide::Left
        } else {
            LungSide::Right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardioGeometry {
    /// Multiplier on the heart's horizontal semi-axis.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoduleGeometry {
    pub side: LungSide,
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl NoduleGeometry {
    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffusionGeometry {
    pub side: LungSide,
    /// Band height in pixels, measured up from the lung's lowest point.
    pub height: u32,
}

impl EffusionGeometry {
    pub fn band_contains_pixel(&self, x: usize, y: usize) -> bool {
        let lung = self.side.ellipse();
        let py = y as f64 + 0.5;
        py >= lung.bottom() - self.height as f64 && lung.contains_pixel(x, y)
    }
}

/// Concept geometry drawn from a sample seed. Each concept reads its own
/// stream, so its geometry does not depend on the style or on which other
/// concepts are present.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhantomGeometry {
    pub cardio: Option<CardioGeometry>,
    pub nodule: Option<NoduleGeometry>,
    pub effusion: Option<EffusionGeometry>,
}

impl PhantomGeometry {
    pub fn draw(concepts: &BTreeSet<ConceptId>, seed: u64) -> Self {
        let mut g = PhantomGeometry::default();
        if concepts.contains(&ConceptId::Cardio) {
            let mut rng = Rng::stream(seed, STREAM_CARDIO);
            g.cardio = Some(CardioGeometry {
                scale: rng.uniform(CARDIO_SCALE.0, CARDIO_SCALE.1),
            });
        }
        if concepts.contains(&ConceptId::Nodule) {
            let mut rng = Rng::stream(seed, STREAM_NODULE);
            let side = LungSide::draw(&mut rng);
            let lung = side.ellipse();
            let (cx, cy) = loop {
                let u = rng.uniform(-1.0, 1.0);
                let v = rng.uniform(-1.0, 1.0);
                if u * u + v * v <= 1.0 {
                    break (
                        lung.cx + u * lung.rx * NODULE_CENTER_SHRINK,
                        lung.cy + v * lung.ry * NODULE_CENTER_SHRINK,
                    );
                }
            };
            let radius = rng.uniform(NODULE_RADIUS.0, NODULE_RADIUS.1);
            g.nodule = Some(NoduleGeometry {
                side,
                cx,
                cy,
                radius,
            });
        }
        if concepts.contains(&ConceptId::Effusion) {
            let mut rng = Rng::stream(seed, STREAM_EFFUSION);
            let side = LungSide::draw(&mut rng);
            let span = EFFUSION_HEIGHT.1 - EFFUSION_HEIGHT.0 + 1;
            let height = (EFFUSION_HEIGHT.0 + rng.below(span)) as u32;
            g.effusion = Some(EffusionGeometry { side, height });
        }
        g
    }

    pub fn heart(&self) -> Ellipse {
        match self.cardio {
            Some(c) => Ellipse {
                rx: HEART.rx * c.scale,
                ..HEART
            },
            None => HEART,
        }
    }

    /// Noise-free intensity before styling.
    pub fn base_intensity(&self, x: usize, y: usize) -> f64 {
        let mut v = BACKGROUND_LEVEL;
        if TORSO.contains_pixel(x, y) {
            v = TORSO_LEVEL;
        }
        if LUNG_LEFT.contains_pixel(x, y) || LUNG_RIGHT.contains_pixel(x, y) {
            v = LUNG_LEVEL;
        }
        if let Some(e) = self.effusion {
            if e.band_contains_pixel(x, y) {
                v = EFFUSION_LEVEL;
            }
        }
        if self.heart().contains_pixel(x, y) {
            v = HEART_LEVEL;
        }
        if let Some(n) = self.nodule {
            if n.contains_pixel(x, y) {
                v += NODULE_BOOST;
            }
        }
        v
    }

    /// Pixels the concept changed relative to the concept-free phantom.
    pub fn mask(&self, concept: ConceptId) -> Option<BinaryMask> {
        let n = IMAGE_SIZE;
        match concept {
            ConceptId::Cardio => self.cardio.map(|_| {
                let heart = self.heart();
                BinaryMask::from_fn(n, n, |x, y| {
                    heart.contains_pixel(x, y) && !HEART.contains_pixel(x, y)
                })
            }),
            ConceptId::Nodule => self.nodule.map(|g| {
                BinaryMask::from_fn(n, n, |x, y| g.contains_pixel(x, y) && TORSO.contains_pixel(x, y))
            }),
            ConceptId::Effusion => self.effusion.map(|g| {
                let heart = self.heart();
                BinaryMask::from_fn(n, n, |x, y| {
                    g.band_contains_pixel(x, y) && !heart.contains_pixel(x, y)
                })
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub image: Image,
    pub labels: BTreeSet<ConceptId>,
    pub masks: BTreeMap<ConceptId, BinaryMask>,
    pub style: StyleId,
    pub seed: u64,
}

impl Sample {
    pub fn has(&self, concept: ConceptId) -> bool {
        self.labels.contains(&concept)
    }

    pub fn mask(&self, concept: ConceptId) -> Option<&BinaryMask> {
        self.masks.get(&concept)
    }
}

/// Renders one phantom. The result depends only on `(style, concepts, seed)`;
/// `id` is left at 0 for the dataset writer to assign.
pub fn generate_sample(style: StyleId, concepts: &BTreeSet<ConceptId>, seed: u64) -> Sample {
    let geometry = PhantomGeometry::draw(concepts, seed);
    let params = style.params();
    let mut noise = Rng::stream(seed, STREAM_NOISE);
    let n = IMAGE_SIZE;
    let mut pixels = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let base = geometry.base_intensity(x, y);
            let v = base * params.contrast + params.offset + params.noise_sigma * noise.normal();
            pixels.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    let masks = concepts
        .iter()
        .filter_map(|&c| geometry.mask(c).map(|m| (c, m)))
        .collect();
    Sample {
        id: 0,
        image: Image::new(n, n, pixels).expect("phantom pixels are finite"),
        labels: concepts.clone(),
        masks,
        style,
        seed,
    }
}
