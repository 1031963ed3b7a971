//! Structured questions, their English templates and an exact evaluator.

use std::fmt;

use crate::data::scene::{Color, Object, Scene, Shape};
use crate::encoder::words;
use crate::error::{Error, Result};

pub const ANSWERS: [&str; 15] = [
    "yes", "no", "red", "green", "blue", "circle", "square", "triangle", "0", "1", "2", "3", "4", "5", "6",
];

pub fn answer_index(answer: &str) -> Option<usize> {
    ANSWERS.iter().position(|a| *a == answer)
}

pub fn answer_space() -> Vec<String> {
    ANSWERS.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Existence,
    Attribute,
    SpatialRelation,
    Comparison,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Existence, Family::Attribute, Family::SpatialRelation, Family::Comparison];

    pub fn name(self) -> &'static str {
        match self {
            Family::Existence => "existence",
            Family::Attribute => "attribute",
            Family::SpatialRelation => "spatial-relation",
            Family::Comparison => "comparison",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown question family `{s}`")))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Matches objects by optional color and shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Descriptor {
    pub color: Option<Color>,
    pub shape: Option<Shape>,
}

impl Descriptor {
    pub fn matches(&self, o: &Object) -> bool {
        self.color.is_none_or(|c| c == o.color) && self.shape.is_none_or(|s| s == o.shape)
    }

    fn words(&self, plural: bool) -> String {
        let noun = self.shape.map_or("object", Shape::name);
        let s = if plural { "s" } else { "" };
        match self.color {
            Some(c) => format!("{c} {noun}{s}"),
            None => format!("{noun}{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below];

    /// Whether `a` stands in this relation to `b`.
    pub fn holds(self, a: &Object, b: &Object) -> bool {
        match self {
            Relation::LeftOf => a.col < b.col,
            Relation::RightOf => a.col > b.col,
            Relation::Above => a.row < b.row,
            Relation::Below => a.row > b.row,
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            Relation::LeftOf => "left of",
            Relation::RightOf => "right of",
            Relation::Above => "above",
            Relation::Below => "below",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Leftmost against rightmost.
    Horizontal,
    /// Topmost against bottommost.
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Attribute {
    Color,
    Shape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Question {
    Exists(Descriptor),
    QueryColor(Shape),
    QueryShape(Color),
    Count(Descriptor),
    Relate(Descriptor, Relation, Descriptor),
    MoreThan(Descriptor, Descriptor),
    SameExtremes(Axis, Attribute),
}

impl Question {
    pub fn family(&self) -> Family {
        match self {
            Question::Exists(_) => Family::Existence,
            Question::QueryColor(_) | Question::QueryShape(_) | Question::Count(_) => Family::Attribute,
            Question::Relate(..) => Family::SpatialRelation,
            Question::MoreThan(..) | Question::SameExtremes(..) => Family::Comparison,
        }
    }

    pub fn text(&self) -> String {
        match self {
            Question::Exists(d) => format!("is there a {}?", d.words(false)),
            Question::QueryColor(s) => format!("what color is the {s}?"),
            Question::QueryShape(c) => format!("what shape is the {c} object?"),
            Question::Count(d) => format!("how many {} are there?", d.words(true)),
            Question::Relate(a, r, b) => format!("is there a {} {} a {}?", a.words(false), r.phrase(), b.words(false)),
            Question::MoreThan(a, b) => format!("are there more {} than {}?", a.words(true), b.words(true)),
            Question::SameExtremes(axis, attr) => {
                let (x, y) = match axis {
                    Axis::Horizontal => ("leftmost", "rightmost"),
                    Axis::Vertical => ("topmost", "bottommost"),
                };
                let what = match attr {
                    Attribute::Color => "color",
                    Attribute::Shape => "shape",
                };
                format!("is the {x} object the same {what} as the {y} object?")
            }
        }
    }

    /// Inverse of [`text`](Self::text).
    pub fn parse(text: &str) -> Result<Self> {
        let w = words(text);
        let w: Vec<&str> = w.iter().map(String::as_str).collect();
        let bad = || Error::Data(format!("unrecognized question `{text}`"));
        let q = match w.as_slice() {
            ["is", "there", "a", rest @ ..] => match split_relation(rest) {
                Some((a, r, b)) => Question::Relate(descriptor(a, false)?, r, descriptor(b, false)?),
                None => Question::Exists(descriptor(rest, false)?),
            },
            ["what", "color", "is", "the", s] => Question::QueryColor(s.parse()?),
            ["what", "shape", "is", "the", c, "object"] => Question::QueryShape(c.parse()?),
            ["how", "many", rest @ .., "are", "there"] => Question::Count(descriptor(rest, true)?),
            ["are", "there", "more", rest @ ..] => {
                let k = rest.iter().position(|t| *t == "than").ok_or_else(bad)?;
                Question::MoreThan(descriptor(&rest[..k], true)?, descriptor(&rest[k + 1..], true)?)
            }
            ["is", "the", x, "object", "the", "same", what, "as", "the", y, "object"] => {
                let axis = match (*x, *y) {
                    ("leftmost", "rightmost") => Axis::Horizontal,
                    ("topmost", "bottommost") => Axis::Vertical,
                    _ => return Err(bad()),
                };
                let attr = match *what {
                    "color" => Attribute::Color,
                    "shape" => Attribute::Shape,
                    _ => return Err(bad()),
                };
                Question::SameExtremes(axis, attr)
            }
            _ => return Err(bad()),
        };
        Ok(q)
    }
}

fn split_relation<'a>(w: &'a [&'a str]) -> Option<(&'a [&'a str], Relation, &'a [&'a str])> {
    for i in 0..w.len() {
        let (r, skip) = match (w[i], w.get(i + 1)) {
            ("left", Some(&"of")) => (Relation::LeftOf, 2),
            ("right", Some(&"of")) => (Relation::RightOf, 2),
            ("above", _) => (Relation::Above, 1),
            ("below", _) => (Relation::Below, 1),
            _ => continue,
        };
        let rest = &w[i + skip..];
        if rest.first() == Some(&"a") {
            return Some((&w[..i], r, &rest[1..]));
        }
    }
    None
}

fn descriptor(w: &[&str], plural: bool) -> Result<Descriptor> {
    let bad = || Error::Data(format!("unrecognized object description `{}`", w.join(" ")));
    let (color, noun) = match w {
        [noun] => (None, *noun),
        [c, noun] => (Some(c.parse::<Color>()?), *noun),
        _ => return Err(bad()),
    };
    let noun = if plural { noun.strip_suffix('s').ok_or_else(bad)? } else { noun };
    let shape = if noun == "object" { None } else { Some(noun.parse::<Shape>()?) };
    Ok(Descriptor { color, shape })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn unique<'a>(it: impl Iterator<Item = &'a Object>, what: &str) -> Result<&'a Object> {
    let found: Vec<&Object> = it.collect();
    match found.as_slice() {
        [o] => Ok(o),
        [] => Err(Error::Unanswerable(format!("no {what} in the scene"))),
        _ => Err(Error::Unanswerable(format!("{} objects match {what}", found.len()))),
    }
}

/// The two extreme objects along `axis`, each required to be unique.
pub fn extremes(scene: &Scene, axis: Axis) -> Result<(Object, Object)> {
    let key = |o: &Object| match axis {
        Axis::Horizontal => o.col,
        Axis::Vertical => o.row,
    };
    let objs = scene.objects();
    let lo = objs.iter().map(key).min().ok_or_else(|| Error::Unanswerable("empty scene".into()))?;
    let hi = objs.iter().map(key).max().expect("non-empty");
    let a = unique(objs.iter().filter(|o| key(o) == lo), "the first extreme")?;
    let b = unique(objs.iter().filter(|o| key(o) == hi), "the second extreme")?;
    Ok((*a, *b))
}

/// A pair of distinct objects witnessing a relation question, if any.
pub fn relate_witness(scene: &Scene, a: &Descriptor, r: Relation, b: &Descriptor) -> Option<(Object, Object)> {
    let objs = scene.objects();
    objs.iter().enumerate().find_map(|(i, x)| {
        objs.iter()
            .enumerate()
            .find(|&(j, y)| i != j && a.matches(x) && b.matches(y) && r.holds(x, y))
            .map(|(_, y)| (*x, *y))
    })
}

/// Exact answer of `q` on `scene`.
pub fn evaluate(scene: &Scene, q: &Question) -> Result<&'static str> {
    let objs = scene.objects();
    let count = |d: &Descriptor| objs.iter().filter(|o| d.matches(o)).count();
    Ok(match q {
        Question::Exists(d) => yes_no(count(d) > 0),
        Question::QueryColor(s) => unique(objs.iter().filter(|o| o.shape == *s), s.name())?.color.name(),
        Question::QueryShape(c) => unique(objs.iter().filter(|o| o.color == *c), c.name())?.shape.name(),
        Question::Count(d) => {
            let n = count(d);
            *ANSWERS.get(8 + n).ok_or_else(|| Error::Unanswerable(format!("count {n} exceeds the answer space")))?
        }
        Question::Relate(a, r, b) => yes_no(relate_witness(scene, a, *r, b).is_some()),
        Question::MoreThan(a, b) => yes_no(count(a) > count(b)),
        Question::SameExtremes(axis, attr) => {
            let (x, y) = extremes(scene, *axis)?;
            yes_no(match attr {
                Attribute::Color => x.color == y.color,
                Attribute::Shape => x.shape == y.shape,
            })
        }
    })
}
