//! Grid scenes of colored shapes and their deterministic rendering.

use std::fmt;
use std::str::FromStr;

use lsa_tensor::Tensor;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Red,
    Green,
    Blue,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
        }
    }

    fn channel(self) -> usize {
        self as usize
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown shape `{s}`")))
    }
}

impl FromStr for Color {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Color::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown color `{s}`")))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Object {
    pub row: usize,
    pub col: usize,
    pub color: Color,
    pub shape: Shape,
}

pub const MIN_OBJECTS: usize = 2;
pub const MAX_OBJECTS: usize = 6;
pub const DEFAULT_GRID: usize = 4;
pub const IMAGE_SIZE: usize = 32;

/// Objects kept sorted by cell (row-major), at most one per cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Scene {
    grid: usize,
    objects: Vec<Object>,
}

impl Scene {
    /// Any object count is accepted here; generated scenes hold 2 to 6.
    pub fn new(grid: usize, mut objects: Vec<Object>) -> Result<Self> {
        if grid == 0 || !IMAGE_SIZE.is_multiple_of(grid) {
            return Err(Error::Data(format!("grid {grid} does not tile a {IMAGE_SIZE}-pixel image")));
        }
        if let Some(o) = objects.iter().find(|o| o.row >= grid || o.col >= grid) {
            return Err(Error::Data(format!("object at {},{} lies outside the {grid}x{grid} grid", o.row, o.col)));
        }
        objects.sort();
        if let Some(w) = objects.windows(2).find(|w| (w[0].row, w[0].col) == (w[1].row, w[1].col)) {
            return Err(Error::Data(format!("two objects share cell {},{}", w[0].row, w[0].col)));
        }
        Ok(Scene { grid, objects })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn objects(&self) -> &[Object] {
        &self.objects
    }

    /// `4x4:red-circle@0,1;blue-square@2,3`, with `-` for an empty scene.
    pub fn spec(&self) -> String {
        let body = if self.objects.is_empty() {
            "-".to_string()
        } else {
            self.objects
                .iter()
                .map(|o| format!("{}-{}@{},{}", o.color, o.shape, o.row, o.col))
                .collect::<Vec<_>>()
                .join(";")
        };
        format!("{g}x{g}:{body}", g = self.grid)
    }

    pub fn parse_spec(spec: &str) -> Result<Self> {
        let bad = || Error::Data(format!("malformed scene spec `{spec}`"));
        let (dims, body) = spec.trim().split_once(':').ok_or_else(bad)?;
        let (a, b) = dims.split_once('x').ok_or_else(bad)?;
        let grid: usize = a.parse().map_err(|_| bad())?;
        if b.parse::<usize>().map_err(|_| bad())? != grid {
            return Err(bad());
        }
        let mut objects = Vec::new();
        if body != "-" {
            for item in body.split(';') {
                let (what, at) = item.split_once('@').ok_or_else(bad)?;
                let (color, shape) = what.split_once('-').ok_or_else(bad)?;
                let (row, col) = at.split_once(',').ok_or_else(bad)?;
                objects.push(Object {
                    row: row.parse().map_err(|_| bad())?,
                    col: col.parse().map_err(|_| bad())?,
                    color: color.parse()?,
                    shape: shape.parse()?,
                });
            }
        }
        Scene::new(grid, objects)
    }

    /// `[3, 32, 32]` image in `[0, 1]`: black background, each object drawn
    /// in its pure RGB channel inside its own cell.
    pub fn render(&self) -> Tensor {
        let mut img = vec![0.0; 3 * IMAGE_SIZE * IMAGE_SIZE];
        self.render_into(&mut img);
        Tensor::new(vec![3, IMAGE_SIZE, IMAGE_SIZE], img).expect("fixed image shape")
    }

    /// Writes the image into a zeroed `3·32·32` buffer.
    pub fn render_into(&self, img: &mut [f64]) {
        let cell = IMAGE_SIZE / self.grid;
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        for o in &self.objects {
            let ch = o.color.channel();
            for y in 0..cell {
                for x in 0..cell {
                    if covers(o.shape, cell, y, x) {
                        img[ch * plane + (o.row * cell + y) * IMAGE_SIZE + o.col * cell + x] = 1.0;
                    }
                }
            }
        }
    }
}

/// Whether pixel `(y, x)` of a `cell`-sized square belongs to the shape.
fn covers(shape: Shape, cell: usize, y: usize, x: usize) -> bool {
    let c = cell as f64;
    let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
    let margin = c / 8.0;
    match shape {
        Shape::Square => py > margin && py < c - margin && px > margin && px < c - margin,
        Shape::Circle => {
            let r = c / 2.0 - margin;
            (py - c / 2.0).powi(2) + (px - c / 2.0).powi(2) <= r * r
        }
        Shape::Triangle => {
            // apex at the top centre, base along the bottom margin
            let top = margin;
            let bottom = c - margin;
            if py < top || py > bottom {
                return false;
            }
            let half = (py - top) / (bottom - top) * (c / 2.0 - margin);
            (px - c / 2.0).abs() <= half
        }
    }
}
