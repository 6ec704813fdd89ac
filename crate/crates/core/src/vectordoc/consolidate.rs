//! Vector-domain cleanup: colour sparsification, micro-stroke removal,
//! part merging and palette alignment.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::raster::path_fill_area;
use super::{Canvas, DrawableElement, VectorDocument};
use crate::colorsci::{delta_e, nearest_palette_color, ColorError, NearBlackBias, Palette, Rgba, Srgb, DUPLICATE_DELTA};
use crate::maskops::PartId;

const MAX_ROUNDS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsolidationConfig {
    /// Cumulative area share the dominant colours must reach.
    pub keep_share: f64,
    /// Colours at or above this share are always kept.
    pub min_share: f64,
    /// Dropped colours fold into the nearest kept colour below this ΔE00.
    pub fold_max: f64,
    /// Kept colours closer than this ΔE00 merge into the larger one.
    pub dup_max: f64,
    /// Stroke-only elements shorter than this fraction of the canvas
    /// diagonal are removed.
    pub micro_stroke_frac: f64,
}

impl Default for ConsolidationConfig {
    fn default() -> Self {
        Self { keep_share: 0.95, min_share: 0.01, fold_max: 10.0, dup_max: 2.0, micro_stroke_frac: 0.01 }
    }
}

/// Total filled area per fill colour, largest first (ties by colour).
pub fn fill_color_areas(doc: &VectorDocument) -> Vec<(Srgb, f64)> {
    let mut areas: HashMap<Srgb, f64> = HashMap::new();
    for e in &doc.elements {
        if let Some(c) = e.paint.fill {
            *areas.entry(c).or_default() += path_fill_area(e, &doc.canvas);
        }
    }
    let mut out: Vec<(Srgb, f64)> = areas.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

fn recolor(doc: &VectorDocument, map: &HashMap<Srgb, Srgb>) -> VectorDocument {
    let mut out = doc.clone();
    for e in &mut out.elements {
        if let Some(c) = e.paint.fill {
            if let Some(t) = map.get(&c) {
                e.paint.fill = Some(*t);
            }
        }
    }
    out
}

fn consolidate_once(doc: &VectorDocument, cfg: &ConsolidationConfig) -> VectorDocument {
    let ranked = fill_color_areas(doc);
    let total: f64 = ranked.iter().map(|(_, a)| a).sum();
    if ranked.len() < 2 || total <= 0.0 {
        return doc.clone();
    }

    let mut kept: Vec<Srgb> = Vec::new();
    let mut dropped: Vec<Srgb> = Vec::new();
    let mut cum = 0.0;
    for (c, a) in &ranked {
        let reached = cum >= cfg.keep_share * total;
        if !reached || *a >= cfg.min_share * total {
            kept.push(*c);
        } else {
            dropped.push(*c);
        }
        cum += a;
    }

    let mut map: HashMap<Srgb, Srgb> = HashMap::new();
    let mut area: HashMap<Srgb, f64> = ranked.iter().copied().collect();
    let mut retained = Vec::new();
    for c in dropped {
        let nearest = kept
            .iter()
            .map(|k| (*k, delta_e(c, *k)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one kept colour");
        if nearest.1 < cfg.fold_max {
            map.insert(c, nearest.0);
            *area.get_mut(&nearest.0).expect("kept") += area[&c];
        } else {
            retained.push(c);
        }
    }
    kept.extend(retained);

    // merge near-duplicates into the larger-area colour
    kept.sort_by(|a, b| area[b].total_cmp(&area[a]).then(a.cmp(b)));
    let mut survivors: Vec<Srgb> = Vec::new();
    for c in kept {
        let target = survivors
            .iter()
            .map(|s| (*s, delta_e(c, *s)))
            .filter(|(_, d)| *d < cfg.dup_max)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match target {
            Some((s, _)) => {
                map.insert(c, s);
            }
            None => survivors.push(c),
        }
    }
    // resolve chains left by folding into a colour that later merged
    let resolved: HashMap<Srgb, Srgb> = map
        .keys()
        .map(|k| {
            let mut t = map[k];
            while let Some(n) = map.get(&t) {
                t = *n;
            }
            (*k, t)
        })
        .collect();
    recolor(doc, &resolved)
}

/// Keeps dominant fill colours by filled-area share and folds the rest into
/// their nearest kept colour; near-duplicate kept colours are merged.
/// Iterated to a fixpoint, so applying it twice equals applying it once.
pub fn consolidate_colors(doc: &VectorDocument, cfg: &ConsolidationConfig) -> VectorDocument {
    let mut cur = doc.clone();
    for _ in 0..MAX_ROUNDS {
        let next = consolidate_once(&cur, cfg);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Drops stroke-only elements shorter than `len_frac` of the canvas diagonal.
pub fn remove_micro_strokes(doc: &VectorDocument, len_frac: f64) -> VectorDocument {
    let limit = len_frac * doc.canvas.diagonal();
    let mut out = doc.clone();
    out.elements
        .retain(|e| !(e.paint.fill.is_none() && e.paint.stroke.is_some() && e.outline_length() < limit));
    out
}

/// Combines per-part elements into one document, one `part-<id>` group per
/// part, larger masks painted first (ties by ascending id).
pub fn merge_parts(
    parts: &BTreeMap<PartId, Vec<DrawableElement>>,
    areas: &BTreeMap<PartId, usize>,
    canvas: Canvas,
) -> VectorDocument {
    let mut order: Vec<PartId> = parts.keys().copied().collect();
    order.sort_by(|a, b| {
        let (aa, ab) = (areas.get(a).copied().unwrap_or(0), areas.get(b).copied().unwrap_or(0));
        ab.cmp(&aa).then(a.cmp(b))
    });
    let mut doc = VectorDocument::new(canvas);
    for id in order {
        for e in &parts[&id] {
            let mut e = e.clone();
            e.group = Some(format!("part-{}", id.0));
            doc.elements.push(e);
        }
    }
    doc
}

/// Reference palette: distinct fill and stroke colours ordered by painted
/// area, largest first. Stroke area is approximated by length × width.
pub fn extract_palette(doc: &VectorDocument) -> Result<Palette, ColorError> {
    let [_, _, w, h] = doc.canvas.user_rect();
    let canvas_area = (w * h).max(f64::MIN_POSITIVE);
    let mut entries: Vec<(Srgb, f64)> = Vec::new();
    let mut add = |c: Srgb, a: f64| match entries.iter_mut().find(|(e, _)| delta_e(*e, c) < DUPLICATE_DELTA) {
        Some(slot) => slot.1 += a,
        None => entries.push((c, a)),
    };
    for e in &doc.elements {
        if let Some(c) = e.paint.fill {
            add(c, path_fill_area(e, &doc.canvas));
        }
        if let Some(c) = e.paint.stroke {
            add(c, e.outline_length() * e.paint.stroke_width * e.transform.mean_scale() / canvas_area);
        }
    }
    // stable: equal areas keep first-use order
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    Palette::new(entries.into_iter().map(|(c, _)| c).collect(), "svg")
}

/// Replaces every fill and stroke colour by its nearest palette entry.
/// Opacities are untouched.
pub fn align_palette(doc: &VectorDocument, palette: &Palette, bias: NearBlackBias) -> VectorDocument {
    let map = |c: Srgb| nearest_palette_color(Rgba { rgb: c, a: 255 }, palette, bias).rgb;
    let mut out = doc.clone();
    for e in &mut out.elements {
        e.paint.fill = e.paint.fill.map(map);
        e.paint.stroke = e.paint.stroke.map(map);
    }
    out
}

/// Micro-stroke removal, colour consolidation and palette alignment,
/// repeated until the document stops changing.
pub fn consolidate_and_align(
    doc: &VectorDocument,
    palette: &Palette,
    bias: NearBlackBias,
    cfg: &ConsolidationConfig,
) -> VectorDocument {
    let mut cur = doc.clone();
    for _ in 0..MAX_ROUNDS {
        let cleaned = remove_micro_strokes(&cur, cfg.micro_stroke_frac);
        let next = align_palette(&consolidate_colors(&cleaned, cfg), palette, bias);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}
