use std::fmt::Write;

use crate::scene::{RoomNodeKind, SceneGraph, Vec3};

const MARGIN: f64 = 0.3;
const PX_PER_M: f64 = 100.0;

fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn rect(out: &mut String, class: &str, lo: &Vec3, hi: &Vec3) {
    let _ = writeln!(
        out,
        r#"  <rect class="{class}" x="{}" y="{}" width="{}" height="{}"/>"#,
        num(lo[0]),
        num(lo[2]),
        num(hi[0] - lo[0]),
        num(hi[2] - lo[2])
    );
}

/// Top-down view on the x–z floor plane, in metres (svg y = world z).
pub fn render_svg(scene: &SceneGraph) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut grow = |a: &Vec3, b: &Vec3| {
        lo[0] = lo[0].min(a[0]);
        lo[1] = lo[1].min(a[2]);
        hi[0] = hi[0].max(b[0]);
        hi[1] = hi[1].max(b[2]);
    };
    for n in &scene.room_nodes {
        grow(&n.bbox_min, &n.bbox_max);
    }
    for f in &scene.furniture {
        let (a, b) = f.bbox();
        grow(&a, &b);
    }
    let (x0, z0) = (lo[0] - MARGIN, lo[1] - MARGIN);
    let (w, h) = (hi[0] - lo[0] + 2.0 * MARGIN, hi[1] - lo[1] + 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="{}" height="{}">"#,
        num(x0),
        num(z0),
        num(w),
        num(h),
        (w * PX_PER_M).round(),
        (h * PX_PER_M).round()
    );
    let _ = writeln!(
        out,
        r#"  <style>.floor{{fill:#f4f1ea;stroke:none}}.wall{{stroke:#333;stroke-width:0.06}}.door{{fill:#b5835a}}.window{{fill:#7fb3d5}}.furniture{{fill:#d9d9d9;fill-opacity:0.8;stroke:#555;stroke-width:0.02}}.heading{{stroke:#c0392b;stroke-width:0.03}}text{{font-size:0.16px;font-family:sans-serif;text-anchor:middle}}</style>"#
    );
    let _ = writeln!(out, r#"  <title>{}</title>"#, scene.room_type.name());

    let mut order: Vec<&crate::scene::RoomNode> = scene.room_nodes.iter().collect();
    // floor first so the other elements draw on top of it
    order.sort_by_key(|n| n.kind != RoomNodeKind::Floor);
    for n in order {
        let (a, b) = (&n.bbox_min, &n.bbox_max);
        match n.kind {
            RoomNodeKind::Floor => {
                let _ = writeln!(
                    out,
                    r#"  <polygon class="floor" points="{},{} {},{} {},{} {},{}"/>"#,
                    num(a[0]),
                    num(a[2]),
                    num(b[0]),
                    num(a[2]),
                    num(b[0]),
                    num(b[2]),
                    num(a[0]),
                    num(b[2])
                );
            }
            RoomNodeKind::Wall => {
                let ((x1, z1), (x2, z2)) = if b[0] - a[0] >= b[2] - a[2] {
                    let z = 0.5 * (a[2] + b[2]);
                    ((a[0], z), (b[0], z))
                } else {
                    let x = 0.5 * (a[0] + b[0]);
                    ((x, a[2]), (x, b[2]))
                };
                let _ = writeln!(
                    out,
                    r#"  <line class="wall" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                    num(x1),
                    num(z1),
                    num(x2),
                    num(z2)
                );
            }
            RoomNodeKind::Door => rect(&mut out, "door", a, b),
            RoomNodeKind::Window => rect(&mut out, "window", a, b),
        }
    }

    for (i, f) in scene.furniture.iter().enumerate() {
        let (a, b) = f.bbox();
        let c = f.location;
        let reach = 0.5 * f.size[0].min(f.size[2]);
        let _ = writeln!(out, r#"  <g class="item" id="item-{i}">"#);
        rect(&mut out, "furniture", &a, &b);
        let _ = writeln!(
            out,
            r#"  <line class="heading" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            num(c[0]),
            num(c[2]),
            num(c[0] + reach * f.orientation[0]),
            num(c[2] + reach * f.orientation[2])
        );
        let _ = writeln!(out, r#"  <text x="{}" y="{}">{}</text>"#, num(c[0]), num(c[2]), escape(&f.label()));
        let _ = writeln!(out, "  </g>");
    }
    out.push_str("</svg>\n");
    out
}
