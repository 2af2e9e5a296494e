//! JSON function schemas advertised to the model.

use serde_json::{json, Value};

use super::ToolName;

fn int(desc: &str) -> Value {
    json!({ "type": "integer", "description": desc })
}

fn source(desc: &str) -> Value {
    json!({ "type": "string", "description": desc })
}

fn color(desc: &str) -> Value {
    json!({ "type": "string", "pattern": "^#[0-9A-Fa-f]{6}$", "description": desc })
}

fn object(properties: Value, required: &[&str]) -> Value {
    json!({ "type": "object", "properties": properties, "required": required })
}

/// `{name, description, parameters}` for one tool.
pub fn tool_schema(tool: ToolName) -> Value {
    let src = || source("Resource id to read, e.g. \"original\" or \"img_002\".");
    let (description, parameters) = match tool {
        ToolName::DrawLine => (
            "Draw a straight line segment on a copy of a resource.",
            object(
                json!({
                    "source": src(),
                    "x0": int("Start x."), "y0": int("Start y."),
                    "x1": int("End x."), "y1": int("End y."),
                    "color": color("Line color, default #FF0000."),
                    "thickness": int("Line width in pixels, default 1."),
                }),
                &["source", "x0", "y0", "x1", "y1"],
            ),
        ),
        ToolName::DrawRectangle => (
            "Draw a rectangle outline through two opposite corners (inclusive) on a copy of a resource.",
            object(
                json!({
                    "source": src(),
                    "x0": int("First corner x."), "y0": int("First corner y."),
                    "x1": int("Opposite corner x."), "y1": int("Opposite corner y."),
                    "color": color("Outline color, default #FF0000."),
                    "thickness": int("Outline width in pixels, default 1."),
                }),
                &["source", "x0", "y0", "x1", "y1"],
            ),
        ),
        ToolName::DrawCircle => (
            "Draw a circle outline on a copy of a resource.",
            object(
                json!({
                    "source": src(),
                    "cx": int("Center x."), "cy": int("Center y."),
                    "radius": int("Radius in pixels, >= 0."),
                    "color": color("Outline color, default #FF0000."),
                    "thickness": int("Outline width in pixels, default 1."),
                }),
                &["source", "cx", "cy", "radius"],
            ),
        ),
        ToolName::Crop => (
            "Crop a region for zoomed-in inspection. x1/y1 are exclusive; the box is clamped to the image.",
            object(
                json!({
                    "source": src(),
                    "x0": int("Left."), "y0": int("Top."),
                    "x1": int("Right (exclusive)."), "y1": int("Bottom (exclusive)."),
                }),
                &["source", "x0", "y0", "x1", "y1"],
            ),
        ),
        ToolName::CompareCrops => (
            "Place two cropped regions side by side (left | gray separator | right) for direct comparison.",
            object(
                json!({
                    "source_a": src(),
                    "a_x0": int("Left crop left."), "a_y0": int("Left crop top."),
                    "a_x1": int("Left crop right (exclusive)."), "a_y1": int("Left crop bottom (exclusive)."),
                    "source_b": src(),
                    "b_x0": int("Right crop left."), "b_y0": int("Right crop top."),
                    "b_x1": int("Right crop right (exclusive)."), "b_y1": int("Right crop bottom (exclusive)."),
                }),
                &["source_a", "a_x0", "a_y0", "a_x1", "a_y1", "source_b", "b_x0", "b_y0", "b_x1", "b_y1"],
            ),
        ),
        ToolName::OverlayGrid => (
            "Overlay an evenly spaced grid of 1-px lines to help group and count items.",
            object(
                json!({
                    "source": src(),
                    "rows": int("Number of rows, >= 1."),
                    "cols": int("Number of columns, >= 1."),
                    "color": color("Grid color, default #FF0000."),
                }),
                &["source", "rows", "cols"],
            ),
        ),
        ToolName::ExtractChannel => (
            "Show a single color channel as a grayscale image.",
            object(
                json!({
                    "source": src(),
                    "channel": { "type": "string", "enum": ["R", "G", "B"] },
                }),
                &["source", "channel"],
            ),
        ),
        ToolName::SampleColor => (
            "Read the exact color at a point (mean over an odd window) and mark the spot with a crosshair.",
            object(
                json!({
                    "source": src(),
                    "x": int("Point x."), "y": int("Point y."),
                    "window": int("Odd window size, default 1."),
                }),
                &["source", "x", "y"],
            ),
        ),
        ToolName::IsolateColor => (
            "Keep only pixels of one hue family (Ishihara-style figure isolation); everything else turns white.",
            object(
                json!({
                    "source": src(),
                    "family": { "type": "string", "enum": ["red", "orange", "yellow", "green", "cyan", "blue", "purple", "magenta"] },
                    "hue_tolerance": { "type": "number", "description": "Degrees around the family hue, default 25." },
                }),
                &["source", "family"],
            ),
        ),
        ToolName::Blur => (
            "Apply a strong blur to reveal large-scale hidden patterns.",
            object(
                json!({ "source": src(), "radius": int("Blur radius in pixels, >= 1.") }),
                &["source", "radius"],
            ),
        ),
    };
    json!({
        "name": tool.as_str(),
        "description": description,
        "parameters": parameters,
    })
}
