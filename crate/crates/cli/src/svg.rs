// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small helpers shared by the SVG renderers.

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if c.is_control() => out.push_str(&format!("&#x{:x};", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// `hsl` hue from red (0°) at `t = 0` to violet (270°) at `t = 1`.
pub(crate) fn rainbow(t: f64) -> String {
    format!("hsl({:.0},80%,45%)", 270.0 * t.clamp(0.0, 1.0))
}
