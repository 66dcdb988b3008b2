//! Minimal SVG overlays: boxes, points and 2σ covariance ellipses, one `<g>`
//! per layer.

use std::fmt::Write;

use crate::geometry::{obb_to_qbb, Gaussian2, Obb};
use crate::linalg::Vec2;

enum Shape {
    Polygon(Vec<Vec2>),
    Circle(Vec2, f64),
    Ellipse {
        center: Vec2,
        rx: f64,
        ry: f64,
        degrees: f64,
    },
}

struct Layer {
    id: String,
    stroke: String,
    shapes: Vec<Shape>,
}

#[derive(Default)]
pub struct SvgDoc {
    layers: Vec<Layer>,
    lo: Option<Vec2>,
    hi: Option<Vec2>,
}

impl SvgDoc {
    pub fn new() -> Self {
        Self::default()
    }

    fn layer(&mut self, id: &str, stroke: &str) -> &mut Layer {
        let pos = match self.layers.iter().position(|l| l.id == id) {
            Some(p) => p,
            None => {
                self.layers.push(Layer {
                    id: id.to_string(),
                    stroke: stroke.to_string(),
                    shapes: Vec::new(),
                });
                self.layers.len() - 1
            }
        };
        &mut self.layers[pos]
    }

    fn grow(&mut self, p: Vec2, pad: f64) {
        let (lo, hi) = (p - Vec2::new(pad, pad), p + Vec2::new(pad, pad));
        self.lo = Some(self.lo.map_or(lo, |m| Vec2::new(m.x.min(lo.x), m.y.min(lo.y))));
        self.hi = Some(self.hi.map_or(hi, |m| Vec2::new(m.x.max(hi.x), m.y.max(hi.y))));
    }

    pub fn add_box(&mut self, layer: &str, stroke: &str, b: &Obb) {
        let corners = obb_to_qbb(b).corners.to_vec();
        for &c in &corners {
            self.grow(c, 0.0);
        }
        self.layer(layer, stroke).shapes.push(Shape::Polygon(corners));
    }

    pub fn add_point(&mut self, layer: &str, stroke: &str, p: Vec2, radius: f64) {
        self.grow(p, radius);
        self.layer(layer, stroke).shapes.push(Shape::Circle(p, radius));
    }

    /// Ellipse with semi-axes `2√λ` along the eigenvectors of Σ.
    pub fn add_ellipse(&mut self, layer: &str, stroke: &str, g: &Gaussian2) {
        let e = g.sigma().eigen();
        let (rx, ry) = (2.0 * e.major.sqrt(), 2.0 * e.minor.max(0.0).sqrt());
        self.grow(g.mu(), rx);
        self.layer(layer, stroke).shapes.push(Shape::Ellipse {
            center: g.mu(),
            rx,
            ry,
            degrees: e.angle.to_degrees(),
        });
    }

    pub fn render(&self) -> String {
        let lo = self.lo.unwrap_or(Vec2::ZERO);
        let hi = self.hi.unwrap_or(Vec2::new(1.0, 1.0));
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
        let margin = 0.05 * span;
        let stroke_width = 0.004 * span;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}">"#,
            fmt_num(lo.x - margin),
            fmt_num(lo.y - margin),
            fmt_num(hi.x - lo.x + 2.0 * margin),
            fmt_num(hi.y - lo.y + 2.0 * margin)
        );
        for layer in &self.layers {
            let _ = writeln!(
                out,
                r#"  <g id="{}" fill="none" stroke="{}" stroke-width="{}">"#,
                layer.id,
                layer.stroke,
                fmt_num(stroke_width)
            );
            for shape in &layer.shapes {
                match shape {
                    Shape::Polygon(pts) => {
                        let list: Vec<String> = pts
                            .iter()
                            .map(|p| format!("{},{}", fmt_num(p.x), fmt_num(p.y)))
                            .collect();
                        let _ = writeln!(out, r#"    <polygon points="{}"/>"#, list.join(" "));
                    }
                    Shape::Circle(c, r) => {
                        let _ = writeln!(
                            out,
                            r#"    <circle cx="{}" cy="{}" r="{}"/>"#,
                            fmt_num(c.x),
                            fmt_num(c.y),
                            fmt_num(*r)
                        );
                    }
                    Shape::Ellipse {
                        center,
                        rx,
                        ry,
                        degrees,
                    } => {
                        let _ = writeln!(
                            out,
                            r#"    <ellipse cx="{0}" cy="{1}" rx="{2}" ry="{3}" transform="rotate({4} {0} {1})"/>"#,
                            fmt_num(center.x),
                            fmt_num(center.y),
                            fmt_num(*rx),
                            fmt_num(*ry),
                            fmt_num(*degrees)
                        );
                    }
                }
            }
            out.push_str("  </g>\n");
        }
        out.push_str("</svg>\n");
        out
    }
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}
