//! The image tool suite exposed to the model.
//!
//! Every successful call reads one or two registry resources, renders a new
//! raster, and registers it under the next id. Failed calls leave the
//! registry untouched.

pub mod blur;
pub mod draw;
pub mod ops;
mod schema;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use ops::{Channel, ColorFamily, Point, Rect};
pub use schema::tool_schema;

use crate::raster::{Raster, Rgb};
use crate::registry::{Registry, RegistryError, ResourceId};

/// Largest coordinate magnitude accepted in geometry arguments.
pub const MAX_COORD: i64 = 65_536;
pub const MAX_THICKNESS: u32 = 64;
pub const DEFAULT_HUE_TOLERANCE: f64 = 25.0;
pub const DEFAULT_DRAW_COLOR: Rgb = Rgb::new(0xFF, 0, 0);
pub const DEFAULT_GRID_COLOR: Rgb = Rgb::new(0xFF, 0, 0);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("unknown resource {0:?}")]
    UnknownResource(String),
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
}

impl From<RegistryError> for ToolError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::UnknownResource(id) | RegistryError::BadId(id) => ToolError::UnknownResource(id),
            other => ToolError::InvalidArgs(other.to_string()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ToolError {
    ToolError::InvalidArgs(msg.into())
}

/// External tool names, as shown to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    DrawLine,
    DrawRectangle,
    DrawCircle,
    Crop,
    CompareCrops,
    OverlayGrid,
    ExtractChannel,
    SampleColor,
    IsolateColor,
    Blur,
}

impl ToolName {
    pub const ALL: [ToolName; 10] = [
        ToolName::DrawLine,
        ToolName::DrawRectangle,
        ToolName::DrawCircle,
        ToolName::Crop,
        ToolName::CompareCrops,
        ToolName::OverlayGrid,
        ToolName::ExtractChannel,
        ToolName::SampleColor,
        ToolName::IsolateColor,
        ToolName::Blur,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::DrawLine => "draw_line",
            ToolName::DrawRectangle => "draw_rectangle",
            ToolName::DrawCircle => "draw_circle",
            ToolName::Crop => "crop",
            ToolName::CompareCrops => "compare_crops",
            ToolName::OverlayGrid => "overlay_grid",
            ToolName::ExtractChannel => "extract_channel",
            ToolName::SampleColor => "sample_color",
            ToolName::IsolateColor => "isolate_color",
            ToolName::Blur => "blur",
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ToolError::UnknownTool(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Line { from: Point, to: Point },
    /// Outline through two opposite corners, both inclusive.
    Rectangle { corner_a: Point, corner_b: Point },
    Circle { center: Point, radius: i64 },
}

/// A validated tool invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolRequest {
    DrawPrimitive {
        source: ResourceId,
        shape: Shape,
        color: Rgb,
        thickness: u32,
    },
    Crop {
        source: ResourceId,
        rect: Rect,
    },
    CompareCrops {
        source_a: ResourceId,
        rect_a: Rect,
        source_b: ResourceId,
        rect_b: Rect,
    },
    OverlayGrid {
        source: ResourceId,
        rows: u32,
        cols: u32,
        color: Rgb,
    },
    ExtractChannel {
        source: ResourceId,
        channel: Channel,
    },
    SampleColor {
        source: ResourceId,
        point: Point,
        window: u32,
    },
    IsolateColor {
        source: ResourceId,
        family: ColorFamily,
        hue_tolerance: f64,
    },
    Blur {
        source: ResourceId,
        radius: u32,
    },
}

/// Result of one successful tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutcome {
    pub new_id: ResourceId,
    pub observation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

struct Args<'a>(&'a Map<String, Value>);

impl Args<'_> {
    fn raw(&self, key: &str) -> Option<&Value> {
        self.0.get(key).filter(|v| !v.is_null())
    }

    fn int(&self, key: &str) -> Result<i64, ToolError> {
        let v = self.raw(key).ok_or_else(|| invalid(format!("missing `{key}`")))?;
        let n = if let Some(i) = v.as_i64() {
            i
        } else if let Some(f) = v.as_f64() {
            // Models sometimes send 12.0 for 12.
            if !f.is_finite() || f.abs() > MAX_COORD as f64 * 2.0 {
                return Err(invalid(format!("`{key}` out of range")));
            }
            f.round() as i64
        } else if let Some(i) = v.as_str().and_then(|s| s.trim().parse::<i64>().ok()) {
            i
        } else {
            return Err(invalid(format!("`{key}` must be an integer")));
        };
        if n.abs() > MAX_COORD {
            return Err(invalid(format!("`{key}` = {n} exceeds ±{MAX_COORD}")));
        }
        Ok(n)
    }

    fn int_or(&self, key: &str, default: i64) -> Result<i64, ToolError> {
        match self.raw(key) {
            Some(_) => self.int(key),
            None => Ok(default),
        }
    }

    fn string(&self, key: &str) -> Result<&str, ToolError> {
        self.raw(key)
            .and_then(Value::as_str)
            .ok_or_else(|| invalid(format!("`{key}` must be a string")))
    }

    fn resource(&self, key: &str) -> Result<ResourceId, ToolError> {
        let name = self.string(key)?;
        name.trim()
            .parse()
            .map_err(|_| ToolError::UnknownResource(name.to_string()))
    }

    fn color_or(&self, key: &str, default: Rgb) -> Result<Rgb, ToolError> {
        match self.raw(key) {
            None => Ok(default),
            Some(_) => self
                .string(key)?
                .parse()
                .map_err(|e: crate::raster::RasterError| invalid(e.to_string())),
        }
    }

    fn point(&self, kx: &str, ky: &str) -> Result<Point, ToolError> {
        Ok(Point {
            x: self.int(kx)?,
            y: self.int(ky)?,
        })
    }

    fn rect(&self, prefix: &str) -> Result<Rect, ToolError> {
        Ok(Rect {
            x0: self.int(&format!("{prefix}x0"))?,
            y0: self.int(&format!("{prefix}y0"))?,
            x1: self.int(&format!("{prefix}x1"))?,
            y1: self.int(&format!("{prefix}y1"))?,
        })
    }

    fn count(&self, key: &str, min: i64) -> Result<u32, ToolError> {
        let n = self.int(key)?;
        if n < min {
            return Err(invalid(format!("`{key}` must be at least {min}, got {n}")));
        }
        Ok(n as u32)
    }
}

impl ToolRequest {
    /// Parses and validates a flat argument record for `tool`.
    pub fn parse(tool: ToolName, args: &Map<String, Value>) -> Result<Self, ToolError> {
        let a = Args(args);
        let draw_style = |a: &Args| -> Result<(Rgb, u32), ToolError> {
            let color = a.color_or("color", DEFAULT_DRAW_COLOR)?;
            let thickness = a.int_or("thickness", 1)?;
            if thickness < 1 {
                return Err(invalid(format!("thickness must be >= 1, got {thickness}")));
            }
            if thickness > i64::from(MAX_THICKNESS) {
                return Err(invalid(format!("thickness must be <= {MAX_THICKNESS}")));
            }
            Ok((color, thickness as u32))
        };
        Ok(match tool {
            ToolName::DrawLine => {
                let (color, thickness) = draw_style(&a)?;
                ToolRequest::DrawPrimitive {
                    source: a.resource("source")?,
                    shape: Shape::Line {
                        from: a.point("x0", "y0")?,
                        to: a.point("x1", "y1")?,
                    },
                    color,
                    thickness,
                }
            }
            ToolName::DrawRectangle => {
                let (color, thickness) = draw_style(&a)?;
                ToolRequest::DrawPrimitive {
                    source: a.resource("source")?,
                    shape: Shape::Rectangle {
                        corner_a: a.point("x0", "y0")?,
                        corner_b: a.point("x1", "y1")?,
                    },
                    color,
                    thickness,
                }
            }
            ToolName::DrawCircle => {
                let (color, thickness) = draw_style(&a)?;
                let radius = a.int("radius")?;
                if radius < 0 {
                    return Err(invalid(format!("radius must be >= 0, got {radius}")));
                }
                ToolRequest::DrawPrimitive {
                    source: a.resource("source")?,
                    shape: Shape::Circle {
                        center: a.point("cx", "cy")?,
                        radius,
                    },
                    color,
                    thickness,
                }
            }
            ToolName::Crop => ToolRequest::Crop {
                source: a.resource("source")?,
                rect: a.rect("")?,
            },
            ToolName::CompareCrops => ToolRequest::CompareCrops {
                source_a: a.resource("source_a")?,
                rect_a: a.rect("a_")?,
                source_b: a.resource("source_b")?,
                rect_b: a.rect("b_")?,
            },
            ToolName::OverlayGrid => ToolRequest::OverlayGrid {
                source: a.resource("source")?,
                rows: a.count("rows", 1)?,
                cols: a.count("cols", 1)?,
                color: a.color_or("color", DEFAULT_GRID_COLOR)?,
            },
            ToolName::ExtractChannel => {
                let name = a.string("channel")?;
                let channel = match name.trim().to_ascii_uppercase().as_str() {
                    "R" | "RED" => Channel::R,
                    "G" | "GREEN" => Channel::G,
                    "B" | "BLUE" => Channel::B,
                    _ => return Err(invalid(format!("channel must be R, G or B, got {name:?}"))),
                };
                ToolRequest::ExtractChannel {
                    source: a.resource("source")?,
                    channel,
                }
            }
            ToolName::SampleColor => {
                let window = a.int_or("window", 1)?;
                if window < 1 || window % 2 == 0 {
                    return Err(invalid(format!("window must be an odd size >= 1, got {window}")));
                }
                ToolRequest::SampleColor {
                    source: a.resource("source")?,
                    point: a.point("x", "y")?,
                    window: window as u32,
                }
            }
            ToolName::IsolateColor => {
                let name = a.string("family")?;
                let family = ColorFamily::parse(name)
                    .ok_or_else(|| invalid(format!("unknown color family {name:?}")))?;
                let hue_tolerance = match a.raw("hue_tolerance") {
                    None => DEFAULT_HUE_TOLERANCE,
                    Some(v) => v
                        .as_f64()
                        .ok_or_else(|| invalid("`hue_tolerance` must be a number"))?,
                };
                if !(hue_tolerance > 0.0 && hue_tolerance < 180.0) {
                    return Err(invalid(format!(
                        "hue_tolerance must be in (0, 180) degrees, got {hue_tolerance}"
                    )));
                }
                ToolRequest::IsolateColor {
                    source: a.resource("source")?,
                    family,
                    hue_tolerance,
                }
            }
            ToolName::Blur => ToolRequest::Blur {
                source: a.resource("source")?,
                radius: a.count("radius", 1)?,
            },
        })
    }

    pub fn tool_name(&self) -> &'static str {
        match self {
            ToolRequest::DrawPrimitive { shape, .. } => match shape {
                Shape::Line { .. } => "draw_line",
                Shape::Rectangle { .. } => "draw_rectangle",
                Shape::Circle { .. } => "draw_circle",
            },
            ToolRequest::Crop { .. } => "crop",
            ToolRequest::CompareCrops { .. } => "compare_crops",
            ToolRequest::OverlayGrid { .. } => "overlay_grid",
            ToolRequest::ExtractChannel { .. } => "extract_channel",
            ToolRequest::SampleColor { .. } => "sample_color",
            ToolRequest::IsolateColor { .. } => "isolate_color",
            ToolRequest::Blur { .. } => "blur",
        }
    }

    pub fn sources(&self) -> Vec<ResourceId> {
        match self {
            ToolRequest::CompareCrops {
                source_a, source_b, ..
            } => vec![*source_a, *source_b],
            ToolRequest::DrawPrimitive { source, .. }
            | ToolRequest::Crop { source, .. }
            | ToolRequest::OverlayGrid { source, .. }
            | ToolRequest::ExtractChannel { source, .. }
            | ToolRequest::SampleColor { source, .. }
            | ToolRequest::IsolateColor { source, .. }
            | ToolRequest::Blur { source, .. } => vec![*source],
        }
    }
}

/// What a request produces before registration.
struct Rendered {
    raster: Raster,
    /// Observation text; `{id}` is replaced with the new resource id.
    observation: String,
    value: Option<Value>,
}

fn render(reg: &Registry, req: &ToolRequest) -> Result<Rendered, ToolError> {
    let fetch = |id: ResourceId| -> Result<&Raster, ToolError> { Ok(reg.get(id)?.raster.as_ref()) };
    let dims = |r: &Raster| format!("{}x{}", r.width(), r.height());
    Ok(match req {
        ToolRequest::DrawPrimitive {
            source,
            shape,
            color,
            thickness,
        } => {
            let src = fetch(*source)?;
            let (path, what) = match *shape {
                Shape::Line { from, to } => (
                    draw::line_points((from.x, from.y), (to.x, to.y)),
                    format!("line ({},{})-({},{})", from.x, from.y, to.x, to.y),
                ),
                Shape::Rectangle { corner_a, corner_b } => (
                    draw::rectangle_points((corner_a.x, corner_a.y), (corner_b.x, corner_b.y)),
                    format!(
                        "rectangle outline ({},{})-({},{})",
                        corner_a.x, corner_a.y, corner_b.x, corner_b.y
                    ),
                ),
                Shape::Circle { center, radius } => (
                    draw::circle_points((center.x, center.y), radius),
                    format!("circle outline center ({},{}) radius {radius}", center.x, center.y),
                ),
            };
            let mut out = src.clone();
            draw::stamp_path(&mut out, &path, *color, *thickness);
            Rendered {
                observation: format!(
                    "{{id}}: drew {what} in {color} (thickness {thickness}) on a copy of {source} ({}).",
                    dims(src)
                ),
                raster: out,
                value: None,
            }
        }
        ToolRequest::Crop { source, rect } => {
            let src = fetch(*source)?;
            let clamped = rect
                .clamp_to(src)
                .ok_or_else(|| invalid(format!("crop outside image: {rect} vs {}", dims(src))))?;
            let out = ops::crop(src, clamped);
            let note = if clamped != *rect {
                format!(" (clamped from {rect})")
            } else {
                String::new()
            };
            Rendered {
                observation: format!(
                    "{{id}}: crop of {source} at {clamped}{note}, size {}.",
                    dims(&out)
                ),
                raster: out,
                value: Some(json!({ "rect": clamped })),
            }
        }
        ToolRequest::CompareCrops {
            source_a,
            rect_a,
            source_b,
            rect_b,
        } => {
            let (ra, rb) = (fetch(*source_a)?, fetch(*source_b)?);
            let ca = rect_a
                .clamp_to(ra)
                .ok_or_else(|| invalid(format!("left crop outside image: {rect_a} vs {}", dims(ra))))?;
            let cb = rect_b
                .clamp_to(rb)
                .ok_or_else(|| invalid(format!("right crop outside image: {rect_b} vs {}", dims(rb))))?;
            let out = ops::side_by_side(&ops::crop(ra, ca), &ops::crop(rb, cb));
            Rendered {
                observation: format!(
                    "{{id}}: side-by-side comparison {}; left = {source_a} {ca}, right = {source_b} {cb}; \
                     halves separated by an {}-px gray column, unused area white.",
                    dims(&out),
                    ops::SEPARATOR_WIDTH
                ),
                raster: out,
                value: Some(json!({ "left": ca, "right": cb })),
            }
        }
        ToolRequest::OverlayGrid {
            source,
            rows,
            cols,
            color,
        } => {
            let src = fetch(*source)?;
            if *rows > src.height() || *cols > src.width() {
                return Err(invalid(format!(
                    "grid {rows}x{cols} finer than image {}",
                    dims(src)
                )));
            }
            Rendered {
                observation: format!(
                    "{{id}}: {rows} rows x {cols} cols grid in {color} over {source}; \
                     vertical lines at x={:?}, horizontal lines at y={:?}.",
                    ops::grid_positions(src.width(), *cols),
                    ops::grid_positions(src.height(), *rows)
                ),
                raster: ops::overlay_grid(src, *rows, *cols, *color),
                value: None,
            }
        }
        ToolRequest::ExtractChannel { source, channel } => {
            let src = fetch(*source)?;
            Rendered {
                observation: format!("{{id}}: {channel:?} channel of {source} as grayscale."),
                raster: ops::extract_channel(src, *channel),
                value: None,
            }
        }
        ToolRequest::SampleColor {
            source,
            point,
            window,
        } => {
            let src = fetch(*source)?;
            if !src.contains(point.x, point.y) {
                return Err(invalid(format!(
                    "sample point ({},{}) outside image {}",
                    point.x,
                    point.y,
                    dims(src)
                )));
            }
            let color = ops::window_mean(src, *point, *window);
            Rendered {
                observation: format!(
                    "{{id}}: sampled {source} at ({},{}) with {window}x{window} window: {color} \
                     (r={}, g={}, b={}); crosshair marker drawn at the sample point.",
                    point.x, point.y, color.r, color.g, color.b
                ),
                raster: ops::crosshair(src, *point),
                value: Some(json!({
                    "hex": color.to_hex(),
                    "r": color.r,
                    "g": color.g,
                    "b": color.b,
                })),
            }
        }
        ToolRequest::IsolateColor {
            source,
            family,
            hue_tolerance,
        } => {
            let src = fetch(*source)?;
            let (out, kept) = ops::isolate_color(src, *family, *hue_tolerance);
            Rendered {
                observation: format!(
                    "{{id}}: kept {kept} {} pixels of {source} (hue within {hue_tolerance} deg); \
                     everything else set to white.",
                    family.name()
                ),
                raster: out,
                value: Some(json!({ "kept_pixels": kept })),
            }
        }
        ToolRequest::Blur { source, radius } => {
            let src = fetch(*source)?;
            if i64::from(*radius) > MAX_COORD {
                return Err(invalid(format!("radius must be <= {MAX_COORD}")));
            }
            Rendered {
                observation: format!(
                    "{{id}}: blurred {source} with radius {radius} ({} box passes).",
                    blur::PASSES
                ),
                raster: blur::blur(src, *radius),
                value: None,
            }
        }
    })
}

/// Runs a validated request and registers its output.
pub fn apply(reg: &mut Registry, req: &ToolRequest, arguments: &Value) -> Result<ToolOutcome, ToolError> {
    let rendered = render(reg, req)?;
    let id = reg.allocate(rendered.raster, req.tool_name(), arguments, &req.sources())?;
    Ok(ToolOutcome {
        new_id: id,
        observation: rendered.observation.replace("{id}", &id.to_string()),
        value: rendered.value,
    })
}

/// Parses, validates and runs one call by external tool name.
pub fn execute(reg: &mut Registry, tool: &str, arguments: &Value) -> Result<ToolOutcome, ToolError> {
    let name: ToolName = tool.parse()?;
    let empty = Map::new();
    let map = match arguments {
        Value::Object(m) => m,
        Value::Null => &empty,
        _ => return Err(invalid("arguments must be a key/value object")),
    };
    let req = ToolRequest::parse(name, map)?;
    apply(reg, &req, arguments)
}
