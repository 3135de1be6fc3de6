//! Procedural mini-scenes with colour, scale, shape and orientation
//! factors.
//!
//! The scene is a flat wall band above a floor band with a single sprite in
//! front. Every factor maps to one visual property, so the renderer is a
//! pure function of the factor state.

use crate::data::{FactorDef, FactorSpace, SamplePair};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

pub const SCENE_IMAGE_EXTENT: usize = 32;
pub const SCENE_SHAPE_COUNT: usize = 4;

const FACTOR_FLOOR: &str = "floor_colour";
const FACTOR_WALL: &str = "wall_colour";
const FACTOR_OBJECT: &str = "object_colour";
const FACTOR_SCALE: &str = "scale";
const FACTOR_SHAPE: &str = "shape";
const FACTOR_ORIENTATION: &str = "orientation";

/// Ten anchors per surface. Palette positions are continuous in [0,9] and
/// snap to the nearest anchor, so reduced extents still pick distinct,
/// well-separated colours.
const FLOOR_PALETTE: [[f32; 3]; 10] = [
    [0.45, 0.30, 0.18],
    [0.55, 0.42, 0.22],
    [0.35, 0.38, 0.20],
    [0.25, 0.30, 0.32],
    [0.50, 0.26, 0.30],
    [0.30, 0.22, 0.40],
    [0.60, 0.50, 0.35],
    [0.20, 0.42, 0.38],
    [0.42, 0.18, 0.16],
    [0.15, 0.20, 0.22],
];

const WALL_PALETTE: [[f32; 3]; 10] = [
    [0.85, 0.80, 0.70],
    [0.75, 0.85, 0.90],
    [0.90, 0.75, 0.75],
    [0.70, 0.78, 0.68],
    [0.92, 0.88, 0.60],
    [0.65, 0.70, 0.85],
    [0.88, 0.68, 0.55],
    [0.60, 0.82, 0.78],
    [0.80, 0.65, 0.85],
    [0.95, 0.92, 0.88],
];

const OBJECT_PALETTE: [[f32; 3]; 10] = [
    [0.90, 0.10, 0.10],
    [0.95, 0.55, 0.05],
    [0.90, 0.85, 0.10],
    [0.20, 0.75, 0.15],
    [0.05, 0.60, 0.60],
    [0.10, 0.25, 0.90],
    [0.55, 0.10, 0.85],
    [0.90, 0.15, 0.60],
    [0.40, 0.40, 0.40],
    [0.05, 0.05, 0.05],
];

/// Continuous visual properties of one scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneDescription {
    /// Palette positions in [0, 9].
    pub floor_colour: f64,
    pub wall_colour: f64,
    pub object_colour: f64,
    /// Sprite size multiplier.
    pub scale: f64,
    pub shape: usize,
    /// In-plane rotation in radians.
    pub orientation: f64,
}

impl Default for SceneDescription {
    fn default() -> Self {
        SceneDescription {
            floor_colour: 2.0,
            wall_colour: 7.0,
            object_colour: 4.0,
            scale: 0.8,
            shape: 0,
            orientation: 0.0,
        }
    }
}

/// A canonical scene factor at a custom extent: the name picks the range
/// and periodicity, only the quantisation density changes.
pub fn scene_factor(name: &str, extent: usize) -> Result<FactorDef> {
    Ok(match name {
        FACTOR_FLOOR | FACTOR_WALL | FACTOR_OBJECT => FactorDef::aperiodic(name, extent, 0.0, 9.0),
        FACTOR_SCALE => FactorDef::aperiodic(name, extent, 1.0 / 1.9, 1.0),
        FACTOR_SHAPE => FactorDef::aperiodic(name, extent, 0.0, 3.0),
        FACTOR_ORIENTATION => FactorDef::periodic(name, extent, 0.0, std::f64::consts::TAU),
        _ => {
            return Err(Error::contract(format!("scene_factor: unknown scene factor '{name}'")))
        }
    })
}

/// All six canonical factors at their full extents.
pub fn scene6_factor_space() -> FactorSpace {
    let full = [
        (FACTOR_FLOOR, 10),
        (FACTOR_WALL, 10),
        (FACTOR_OBJECT, 10),
        (FACTOR_SCALE, 8),
        (FACTOR_SHAPE, 4),
        (FACTOR_ORIENTATION, 15),
    ];
    FactorSpace::new(full.map(|(name, extent)| scene_factor(name, extent).unwrap()).to_vec())
        .expect("canonical scene space is valid")
}

/// Desk-scale three-factor slice: object colour, scale, orientation.
pub fn scene3_factor_space() -> FactorSpace {
    FactorSpace::new(vec![
        FactorDef::aperiodic(FACTOR_OBJECT, 6, 0.0, 9.0),
        FactorDef::aperiodic(FACTOR_SCALE, 4, 1.0 / 1.9, 1.0),
        FactorDef::periodic(FACTOR_ORIENTATION, 9, 0.0, std::f64::consts::TAU),
    ])
    .expect("scene3 space is valid")
}

/// Reduced space used by enumeration tests: all six factors at tiny
/// extents.
pub fn scene_reduced_factor_space(extents: [usize; 6]) -> Result<FactorSpace> {
    let full = scene6_factor_space();
    FactorSpace::new(
        full.factors
            .iter()
            .zip(extents)
            .map(|(f, extent)| FactorDef { extent, ..f.clone() })
            .collect(),
    )
}

/// Build the continuous description from factor indices, filling unlisted
/// factors with defaults.
pub fn description_from_indices(space: &FactorSpace, indices: &[usize]) -> Result<SceneDescription> {
    if indices.len() != space.arity() {
        return Err(Error::contract("scene description: index arity mismatch"));
    }
    if space.arity() > 6 {
        return Err(Error::contract("scene description: more than six factors"));
    }
    let mut desc = SceneDescription::default();
    for (f, &idx) in space.factors.iter().zip(indices) {
        let value = f.dequantise(idx)?;
        match f.name.as_str() {
            FACTOR_FLOOR => desc.floor_colour = value,
            FACTOR_WALL => desc.wall_colour = value,
            FACTOR_OBJECT => desc.object_colour = value,
            FACTOR_SCALE => desc.scale = value,
            FACTOR_SHAPE => desc.shape = value.round() as usize,
            FACTOR_ORIENTATION => desc.orientation = value,
            other => {
                return Err(Error::contract(format!("scene description: unknown factor '{other}'")));
            }
        }
    }
    if desc.shape >= SCENE_SHAPE_COUNT {
        return Err(Error::contract(format!("scene description: shape {} out of range", desc.shape)));
    }
    Ok(desc)
}

fn palette_colour(palette: &[[f32; 3]; 10], position: f64) -> [f32; 3] {
    let idx = position.round().clamp(0.0, 9.0) as usize;
    palette[idx]
}

/// Sprite membership test in the unit frame ([-1, 1] square, y downward).
fn inside_sprite(shape: usize, x: f64, y: f64) -> bool {
    match shape {
        // Arrow pointing +x with a tail bar.
        0 => {
            let head = x >= -0.4 && x <= 1.0 && y.abs() <= 0.62 * (1.0 - (x + 0.4) / 1.4);
            let tail = (-1.0..=-0.4).contains(&x) && y.abs() <= 0.18;
            head || tail
        }
        // Flag: pole on the left, triangular banner on the upper right,
        // widening from the pole top downward to y = -0.1.
        1 => {
            let pole = (x + 0.5).abs() <= 0.12 && y.abs() <= 1.0;
            let along = (y + 1.0) / 0.9;
            let banner = (-1.0..=-0.1).contains(&y) && x >= -0.38 && x <= -0.38 + 1.28 * along;
            pole || banner
        }
        // L: vertical bar plus a foot to the right.
        2 => {
            let vertical = (-0.85..=-0.25).contains(&x) && y.abs() <= 1.0;
            let foot = (-0.85..=0.9).contains(&x) && (0.4..=1.0).contains(&y);
            vertical || foot
        }
        // T: top bar plus a stem.
        3 => {
            let bar = x.abs() <= 0.9 && (-1.0..=-0.5).contains(&y);
            let stem = x.abs() <= 0.25 && (-0.5..=1.0).contains(&y);
            bar || stem
        }
        _ => false,
    }
}

/// Render the scene: wall band, floor band, one sprite, 2x2 supersampled
/// coverage. RGB channel-first in [0, 1].
pub fn render_scene(desc: &SceneDescription) -> Result<Tensor<f32>> {
    if desc.shape >= SCENE_SHAPE_COUNT {
        return Err(Error::contract(format!("render_scene: shape {} out of range", desc.shape)));
    }
    if !(0.1..=1.2).contains(&desc.scale) {
        return Err(Error::contract(format!("render_scene: scale {} out of range", desc.scale)));
    }
    let n = SCENE_IMAGE_EXTENT;
    let floor = palette_colour(&FLOOR_PALETTE, desc.floor_colour);
    let wall = palette_colour(&WALL_PALETTE, desc.wall_colour);
    let object = palette_colour(&OBJECT_PALETTE, desc.object_colour);
    let horizon = n / 2;
    let (cx, cy) = (16.0f64, 19.0f64);
    let half_extent = 9.0 * desc.scale;
    let (cos, sin) = (desc.orientation.cos(), desc.orientation.sin());
    let mut img = Tensor::zeros(&[3, n, n]);
    let plane = n * n;
    for row in 0..n {
        for col in 0..n {
            let background = if row < horizon { wall } else { floor };
            let mut hits = 0u32;
            for sub in [(-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)] {
                let px = col as f64 + sub.0 - cx;
                let py = row as f64 + sub.1 - cy;
                // Rotate into the sprite frame and normalise by size.
                let ux = (cos * px + sin * py) / half_extent;
                let uy = (-sin * px + cos * py) / half_extent;
                if inside_sprite(desc.shape, ux, uy) {
                    hits += 1;
                }
            }
            let cover = hits as f32 / 4.0;
            for ch in 0..3 {
                img.data_mut()[ch * plane + row * n + col] =
                    background[ch] + cover * (object[ch] - background[ch]);
            }
        }
    }
    Ok(img)
}

/// Sample a (source, target) scene pair related by a uniform valid offset.
pub fn synth_scene_pair(space: &FactorSpace, rng: &mut SeedStream) -> Result<SamplePair> {
    let source_indices = space.sample_indices(rng);
    let offset = space.sample_offset(&source_indices, rng)?;
    let target_indices = space.compose_indices(&source_indices, &offset)?;
    let source = render_scene(&description_from_indices(space, &source_indices)?)?;
    let target = render_scene(&description_from_indices(space, &target_indices)?)?;
    Ok(SamplePair { source, target, offset, source_indices })
}
