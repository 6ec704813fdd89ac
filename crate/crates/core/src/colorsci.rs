//! sRGB → CIE L*a*b* conversion, the CIEDE2000 colour difference, and
//! palette lookup with a near-black bias.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ColorError {
    #[error("channel value {0} outside [0, 255]")]
    OutOfRange(f64),
    #[error("palette is empty")]
    EmptyPalette,
    #[error("palette entries {0} and {1} are indistinguishable")]
    DuplicateEntry(usize, usize),
}

/// An 8-bit sRGB colour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Srgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Srgb {
    pub const BLACK: Srgb = Srgb::new(0, 0, 0);
    pub const WHITE: Srgb = Srgb::new(255, 255, 255);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub fn to_lab(self) -> LabColor {
        srgb_to_lab(self.r as f64, self.g as f64, self.b as f64).expect("u8 channels are in range")
    }

    pub fn to_hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }
}

impl fmt::Display for Srgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// An sRGB colour with straight 8-bit alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Rgba {
    pub rgb: Srgb,
    pub a: u8,
}

impl Rgba {
    pub const fn new(r: u8, g: u8, b: u8, a: u8) -> Self {
        Self { rgb: Srgb::new(r, g, b), a }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    pub L: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { L: l, a, b }
    }

    pub fn chroma(&self) -> f64 {
        self.a.hypot(self.b)
    }
}

// D65 reference white, 2° observer.
const WHITE_X: f64 = 0.95047;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.08883;

fn srgb_eotf(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const EPS: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    if t > EPS {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// Converts sRGB channels in `[0, 255]` to L*a*b* under D65.
pub fn srgb_to_lab(r: f64, g: f64, b: f64) -> Result<LabColor, ColorError> {
    for c in [r, g, b] {
        if !(0.0..=255.0).contains(&c) {
            return Err(ColorError::OutOfRange(c));
        }
    }
    let (r, g, b) = (srgb_eotf(r / 255.0), srgb_eotf(g / 255.0), srgb_eotf(b / 255.0));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (lab_f(x / WHITE_X), lab_f(y / WHITE_Y), lab_f(z / WHITE_Z));
    Ok(LabColor { L: 116.0 * fy - 16.0, a: 500.0 * (fx - fy), b: 200.0 * (fy - fz) })
}

/// CIEDE2000 colour difference with unit weighting factors.
pub fn ciede2000(x: LabColor, y: LabColor) -> f64 {
    let c_bar = (x.chroma() + y.chroma()) / 2.0;
    let c_bar7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + 25f64.powi(7))).sqrt());

    let a1 = (1.0 + g) * x.a;
    let a2 = (1.0 + g) * y.a;
    let c1 = a1.hypot(x.b);
    let c2 = a2.hypot(y.b);
    let hue = |b: f64, a: f64| {
        if b == 0.0 && a == 0.0 {
            0.0
        } else {
            b.atan2(a).rem_euclid(2.0 * PI)
        }
    };
    let h1 = hue(x.b, a1);
    let h2 = hue(y.b, a2);

    let dl = y.L - x.L;
    let dc = c2 - c1;
    let dh_small = if c1 * c2 == 0.0 {
        0.0
    } else {
        let d = h2 - h1;
        if d > PI {
            d - 2.0 * PI
        } else if d < -PI {
            d + 2.0 * PI
        } else {
            d
        }
    };
    let dh = 2.0 * (c1 * c2).sqrt() * (dh_small / 2.0).sin();

    let l_bar = (x.L + y.L) / 2.0;
    let c_bar_p = (c1 + c2) / 2.0;
    let h_bar = if c1 * c2 == 0.0 {
        h1 + h2
    } else if (h1 - h2).abs() <= PI {
        (h1 + h2) / 2.0
    } else if h1 + h2 < 2.0 * PI {
        (h1 + h2 + 2.0 * PI) / 2.0
    } else {
        (h1 + h2 - 2.0 * PI) / 2.0
    };

    let t = 1.0 - 0.17 * (h_bar - 30f64.to_radians()).cos()
        + 0.24 * (2.0 * h_bar).cos()
        + 0.32 * (3.0 * h_bar + 6f64.to_radians()).cos()
        - 0.20 * (4.0 * h_bar - 63f64.to_radians()).cos();
    let d_theta = 30f64.to_radians() * (-((h_bar.to_degrees() - 275.0) / 25.0).powi(2)).exp();
    let c_bar_p7 = c_bar_p.powi(7);
    let r_c = 2.0 * (c_bar_p7 / (c_bar_p7 + 25f64.powi(7))).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * c_bar_p;
    let s_h = 1.0 + 0.015 * c_bar_p * t;
    let r_t = -(2.0 * d_theta).sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = dh / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th).max(0.0).sqrt()
}

/// ΔE00 between two 8-bit colours.
pub fn delta_e(a: Srgb, b: Srgb) -> f64 {
    if a == b {
        0.0
    } else {
        ciede2000(a.to_lab(), b.to_lab())
    }
}

/// Thresholds below which a colour snaps to the palette's black entry.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearBlackBias {
    pub L_max: f64,
    pub C_max: f64,
}

impl Default for NearBlackBias {
    fn default() -> Self {
        Self { L_max: 20.0, C_max: 10.0 }
    }
}

/// Palette entries at or darker than this count as "black".
const BLACK_L: f64 = 5.0;
const BLACK_C: f64 = 5.0;
/// Entries closer than this are duplicates.
pub const DUPLICATE_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub srgb: Srgb,
    pub lab: LabColor,
    pub is_black: bool,
}

impl PaletteEntry {
    pub fn new(srgb: Srgb) -> Self {
        let lab = srgb.to_lab();
        let is_black = lab.L < BLACK_L && lab.chroma() < BLACK_C;
        Self { srgb, lab, is_black }
    }
}

/// Reference colours extracted from an input document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    colors: Vec<PaletteEntry>,
    pub source: String,
}

impl Palette {
    pub fn new(colors: Vec<Srgb>, source: impl Into<String>) -> Result<Self, ColorError> {
        if colors.is_empty() {
            return Err(ColorError::EmptyPalette);
        }
        let entries: Vec<PaletteEntry> = colors.into_iter().map(PaletteEntry::new).collect();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                if ciede2000(entries[i].lab, entries[j].lab) < DUPLICATE_DELTA {
                    return Err(ColorError::DuplicateEntry(i, j));
                }
            }
        }
        Ok(Self { colors: entries, source: source.into() })
    }

    pub fn entries(&self) -> &[PaletteEntry] {
        &self.colors
    }

    pub fn colors(&self) -> impl Iterator<Item = Srgb> + '_ {
        self.colors.iter().map(|e| e.srgb)
    }

    pub fn black(&self) -> Option<&PaletteEntry> {
        self.colors.iter().find(|e| e.is_black)
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

/// Index of the palette entry a colour maps to.
///
/// An exact palette colour always maps to itself, which keeps the mapping
/// idempotent even for dark non-black entries.
pub fn nearest_palette_index(c: Srgb, palette: &Palette, bias: NearBlackBias) -> usize {
    let lab = c.to_lab();
    let entries = palette.entries();
    if let Some(i) = entries.iter().position(|e| e.srgb == c) {
        return i;
    }
    if lab.L < bias.L_max && lab.chroma() < bias.C_max {
        if let Some(i) = entries.iter().position(|e| e.is_black) {
            return i;
        }
    }
    let any_colored = entries.iter().any(|e| !e.is_black);
    let mut best = (f64::INFINITY, 0usize);
    for (i, e) in entries.iter().enumerate() {
        if any_colored && e.is_black {
            continue;
        }
        let d = ciede2000(lab, e.lab);
        // strict comparison keeps the earlier entry on ties
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Maps a colour onto the palette, passing alpha through unchanged.
pub fn nearest_palette_color(c: Rgba, palette: &Palette, bias: NearBlackBias) -> Rgba {
    let i = nearest_palette_index(c.rgb, palette, bias);
    Rgba { rgb: palette.entries()[i].srgb, a: c.a }
}
