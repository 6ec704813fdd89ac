use std::process::Command;

use serde_json::json;

use super::{PropagationBackend, PropagationErrorKind, PropagationJob};
use crate::formats::{labels_to_maskset, maskset_to_labels, read_labels, write_labels, write_rgba, FormatError};
use crate::maskops::MaskSet;
use crate::vectordoc::shell_quote;

/// Runs a shell command per job. `{job}` and `{output}` in the template
/// are replaced by the quoted paths of the job file and the label map the
/// command must write.
///
/// Outputs are only as deterministic as the command.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalBackend {
    pub command: String,
}

fn backend_err(context: &str, e: impl std::fmt::Display) -> PropagationErrorKind {
    PropagationErrorKind::Backend(format!("{context}: {e}"))
}

impl PropagationBackend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn propagate(&self, job: &PropagationJob) -> Result<MaskSet, PropagationErrorKind> {
        let dir = tempfile::tempdir().map_err(|e| backend_err("temp dir", e))?;
        let p = |name: String| dir.path().join(name);
        let target_png = p(format!("target_{}.png", job.target.id()));
        write_rgba(&target_png, job.target_image).map_err(|e| backend_err("writing job", e))?;
        let mut refs = Vec::new();
        for r in &job.references {
            let id = r.pose.id();
            let (img, labels) = (p(format!("ref_{id}.png")), p(format!("ref_{id}_labels.png")));
            write_rgba(&img, r.image).map_err(|e| backend_err("writing job", e))?;
            write_labels(&labels, &maskset_to_labels(r.maskset)).map_err(|e| backend_err("writing job", e))?;
            refs.push(json!({
                "id": id.0,
                "yaw_deg": r.pose.yaw_deg(),
                "pitch_deg": r.pose.pitch_deg(),
                "image": img,
                "labels": labels,
                "distance_rad": r.distance_rad,
            }));
        }
        let output = p("output.png".into());
        let job_path = p("job.json".into());
        let doc = json!({
            "target": {
                "id": job.target.id().0,
                "yaw_deg": job.target.yaw_deg(),
                "pitch_deg": job.target.pitch_deg(),
                "image": target_png,
            },
            "references": refs,
            "output": output,
        });
        std::fs::write(&job_path, serde_json::to_vec_pretty(&doc).expect("job serializes"))
            .map_err(|e| backend_err("writing job", e))?;

        let cmd = self
            .command
            .replace("{job}", &shell_quote(&job_path.to_string_lossy()))
            .replace("{output}", &shell_quote(&output.to_string_lossy()));
        let res = Command::new("sh").arg("-c").arg(&cmd).output().map_err(|e| backend_err(&format!("spawning `{cmd}`"), e))?;
        if !res.status.success() {
            return Err(PropagationErrorKind::Backend(format!(
                "`{cmd}` exited with {}: {}",
                res.status,
                String::from_utf8_lossy(&res.stderr).trim()
            )));
        }
        let labels = read_labels(&output).map_err(|e| backend_err("reading output", e))?;
        labels_to_maskset(&labels, job.target_image, job.target.id(), Some(job.registry)).map_err(|e| match e {
            FormatError::DimensionMismatch { expected, got } => PropagationErrorKind::DimensionMismatch { expected, got },
            FormatError::UnknownPart(p) => PropagationErrorKind::UnknownPart(p),
            other => backend_err("reading output", other),
        })
    }
}
