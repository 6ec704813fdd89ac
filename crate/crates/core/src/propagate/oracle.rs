use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PropagationBackend, PropagationErrorKind, PropagationJob};
use crate::formats::LabelMap;
use crate::maskops::{MaskSet, PartId, PartMask};
use crate::synthscene::{part_bitmap, render_labels, SceneSpec};
use crate::viewsphere::{ViewId, ViewPose};

/// Ground-truth propagation on a synthetic scene.
///
/// Each scene part is mapped to the registry part whose reference masks
/// overlap it most; only mapped parts are emitted, so parts no reference
/// has seen stay missing. `dropout` removes each (view, part) pair with
/// that probability, keyed by `seed`.
#[derive(Debug)]
pub struct OracleBackend {
    pub scene: SceneSpec,
    pub dropout: f64,
    pub seed: u64,
    cache: Mutex<BTreeMap<(u64, u64), Arc<LabelMap>>>,
}

impl OracleBackend {
    pub fn new(scene: SceneSpec, dropout: f64, seed: u64) -> Self {
        Self { scene, dropout, seed, cache: Mutex::new(BTreeMap::new()) }
    }

    fn labels(&self, pose: &ViewPose) -> Arc<LabelMap> {
        let key = (pose.yaw_deg().to_bits(), pose.pitch_deg().to_bits());
        if let Some(l) = self.cache.lock().expect("cache lock").get(&key) {
            return Arc::clone(l);
        }
        let l = Arc::new(render_labels(&self.scene, pose));
        self.cache.lock().expect("cache lock").insert(key, Arc::clone(&l));
        l
    }

    fn dropped(&self, view: ViewId, part: PartId) -> bool {
        if self.dropout <= 0.0 {
            return false;
        }
        let key = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((view.0 as u64) << 16) ^ part.0 as u64;
        ChaCha8Rng::seed_from_u64(key).gen::<f64>() < self.dropout
    }
}

impl PropagationBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn propagate(&self, job: &PropagationJob) -> Result<MaskSet, PropagationErrorKind> {
        if job.dims() != self.scene.image_size {
            return Err(PropagationErrorKind::Backend(format!(
                "target image is {:?} but the scene renders {:?}",
                job.dims(),
                self.scene.image_size
            )));
        }
        // votes[registry part][scene part] = overlapping reference pixels
        let mut votes: BTreeMap<PartId, BTreeMap<u16, usize>> = BTreeMap::new();
        for r in &job.references {
            let gt = self.labels(&r.pose);
            if gt.dimensions() != r.maskset.dims() {
                return Err(PropagationErrorKind::Backend(format!("reference view {} does not match the scene", r.pose.id())));
            }
            for m in &r.maskset.masks {
                let tally = votes.entry(m.part_id).or_default();
                for (x, y) in m.bitmap.iter_set() {
                    let g = gt.get_pixel(x, y).0[0];
                    if g != 0 {
                        *tally.entry(g).or_insert(0) += 1;
                    }
                }
            }
        }
        let mut claims: BTreeMap<u16, (usize, PartId)> = BTreeMap::new();
        for (part, tally) in votes {
            let Some((&g, &n)) = tally.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else { continue };
            let e = claims.entry(g).or_insert((n, part));
            if n > e.0 {
                *e = (n, part);
            }
        }

        let view = job.target.id();
        let gt = self.labels(&job.target);
        let (w, h) = job.dims();
        let mut out = MaskSet::new(view, w, h);
        for (g, (_, part)) in claims {
            if self.dropped(view, part) {
                continue;
            }
            if let Some(m) = PartMask::from_bitmap(part, view, part_bitmap(&gt, PartId(g)), job.target_image) {
                out.masks.push(m);
            }
        }
        out.masks.sort_by_key(|m| m.part_id);
        Ok(out)
    }
}
