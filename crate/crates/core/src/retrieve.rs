//! Waypoint retrieval: rank scan frames against each waypoint description,
//! then let a chooser pick one frame per description and order the visits.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{hash_embedding, Embedding, FrameRecord, SyntheticScene};
use crate::error::{Error, Result};
use crate::geom::Pose4;

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointDescription {
    pub k: usize,
    pub text: String,
    pub d: Embedding,
}

impl WaypointDescription {
    pub fn new(k: usize, text: impl Into<String>, d: Embedding) -> Result<Self> {
        Ok(WaypointDescription {
            k,
            text: text.into(),
            d: d.normalized()?,
        })
    }
}

#[derive(Deserialize)]
struct RawDescription {
    k: usize,
    text: String,
    #[serde(default)]
    emb: Option<Vec<f64>>,
    #[serde(default)]
    landmark_label: Option<String>,
}

/// Parses the description list `[{"k", "text", "emb"?, "landmark_label"?}]`.
///
/// An explicit `emb` wins; otherwise a `landmark_label` resolves to that
/// landmark's semantic vector in `scene`; otherwise the text is hashed to a
/// unit vector of dimension `dim`.
pub fn parse_descriptions(text: &str, scene: Option<&SyntheticScene>, dim: usize) -> Result<Vec<WaypointDescription>> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
        record: e.line(),
        message: format!("expected a JSON array of descriptions: {e}"),
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for (record, value) in raw.into_iter().enumerate() {
        let r: RawDescription = serde_json::from_value(value).map_err(|e| Error::Parse {
            record,
            message: e.to_string(),
        })?;
        if !seen.insert(r.k) {
            return Err(Error::Parse {
                record,
                message: format!("duplicate description index {}", r.k),
            });
        }
        let d = match (r.emb, &r.landmark_label) {
            (Some(v), _) => Embedding::unit(v).map_err(|e| Error::Parse {
                record,
                message: e.to_string(),
            })?,
            (None, Some(label)) => {
                let scene = scene.ok_or_else(|| Error::Parse {
                    record,
                    message: format!("landmark_label {label:?} needs a synthetic scene"),
                })?;
                scene
                    .landmark(label)
                    .ok_or_else(|| Error::Parse {
                        record,
                        message: format!("unknown landmark {label:?}"),
                    })?
                    .semantic
                    .clone()
            }
            (None, None) => hash_embedding(&r.text, dim),
        };
        out.push(WaypointDescription { k: r.k, text: r.text, d });
    }
    Ok(out)
}

pub fn load_descriptions(path: &Path, scene: Option<&SyntheticScene>, dim: usize) -> Result<Vec<WaypointDescription>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_descriptions(&text, scene, dim)
}

/// Top-scoring frames for one description, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub k: usize,
    pub frames: Vec<FrameRecord>,
    pub scores: Vec<f64>,
}

fn check_dims(d: &WaypointDescription, frames: &[FrameRecord]) -> Result<()> {
    if let Some(f) = frames.iter().find(|f| f.embedding.dim() != d.d.dim()) {
        return Err(Error::InvalidArgument(format!(
            "description {} has dimension {} but frame {} has {}",
            d.k,
            d.d.dim(),
            f.id,
            f.embedding.dim()
        )));
    }
    Ok(())
}

/// Cosine similarity of every frame to the description, in frame order.
pub fn score_frames(description: &WaypointDescription, frames: &[FrameRecord]) -> Result<Vec<(u64, f64)>> {
    check_dims(description, frames)?;
    frames
        .iter()
        .map(|f| Ok((f.id, crate::embed::cosine(&description.d, &f.embedding)?)))
        .collect()
}

/// The `top_k` frames per description by descending cosine similarity,
/// ties broken by lower frame id.
pub fn retrieve_candidates(descriptions: &[WaypointDescription], frames: &[FrameRecord], top_k: usize) -> Result<Vec<CandidateSet>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames to retrieve from".into()));
    }
    if top_k == 0 || top_k > frames.len() {
        return Err(Error::InvalidArgument(format!(
            "top_k = {top_k} must be in 1..={}",
            frames.len()
        )));
    }
    descriptions
        .iter()
        .map(|d| {
            let scores = score_frames(d, frames)?;
            let mut order: Vec<usize> = (0..frames.len()).collect();
            order.sort_by(|&a, &b| scores[b].1.total_cmp(&scores[a].1).then(frames[a].id.cmp(&frames[b].id)));
            order.truncate(top_k);
            Ok(CandidateSet {
                k: d.k,
                frames: order.iter().map(|&i| frames[i].clone()).collect(),
                scores: order.iter().map(|&i| scores[i].1).collect(),
            })
        })
        .collect()
}

/// Frame chosen for one description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedWaypoint {
    pub k: usize,
    pub frame_id: u64,
    pub pose: Pose4,
    pub score: f64,
}

/// Initial waypoints in visiting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedWaypoints {
    pub waypoints: Vec<OrderedWaypoint>,
}

impl OrderedWaypoints {
    pub fn poses(&self) -> Vec<Pose4> {
        self.waypoints.iter().map(|w| w.pose).collect()
    }
}

/// `(description index, chosen frame id)` pairs in visiting order.
pub type Selection = Vec<(usize, u64)>;

/// Picks one frame per candidate set and orders the waypoints.
pub trait Chooser {
    fn choose(&mut self, sets: &[CandidateSet], descriptions: &[WaypointDescription]) -> Result<Selection>;
}

/// Best-scoring frame per set, visited in ascending description index.
#[derive(Debug, Default, Clone, Copy)]
pub struct DeterministicChooser;

impl Chooser for DeterministicChooser {
    fn choose(&mut self, sets: &[CandidateSet], _: &[WaypointDescription]) -> Result<Selection> {
        let mut picks: Selection = sets
            .iter()
            .map(|s| {
                let first = s.frames.first().ok_or_else(|| Error::Chooser {
                    k: s.k,
                    message: "empty candidate set".into(),
                })?;
                Ok((s.k, first.id))
            })
            .collect::<Result<_>>()?;
        picks.sort_by_key(|p| p.0);
        Ok(picks)
    }
}

/// Replays a fixed script: per visit, a description index and a slot in its
/// candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedChooser {
    pub picks: Vec<ScriptedPick>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPick {
    pub k: usize,
    pub slot: usize,
}

impl ScriptedChooser {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            record: e.line(),
            message: format!("{}: {e}", path.display()),
        })
    }
}

impl Chooser for ScriptedChooser {
    fn choose(&mut self, sets: &[CandidateSet], _: &[WaypointDescription]) -> Result<Selection> {
        self.picks
            .iter()
            .map(|p| {
                let set = sets.iter().find(|s| s.k == p.k).ok_or_else(|| Error::Chooser {
                    k: p.k,
                    message: "script names a description without candidates".into(),
                })?;
                let frame = set.frames.get(p.slot).ok_or_else(|| Error::Chooser {
                    k: p.k,
                    message: format!("slot {} beyond {} candidates", p.slot, set.frames.len()),
                })?;
                Ok((p.k, frame.id))
            })
            .collect()
    }
}

/// Runs the chooser and checks that it picked exactly one candidate frame
/// per set.
pub fn select_and_sort(
    candidates: &[CandidateSet],
    descriptions: &[WaypointDescription],
    chooser: &mut dyn Chooser,
) -> Result<OrderedWaypoints> {
    if candidates.is_empty() {
        return Ok(OrderedWaypoints { waypoints: Vec::new() });
    }
    let selection = chooser.choose(candidates, descriptions)?;
    let by_k: HashMap<usize, &CandidateSet> = candidates.iter().map(|s| (s.k, s)).collect();
    let mut used = HashSet::new();
    let mut waypoints = Vec::with_capacity(selection.len());
    for (k, frame_id) in selection {
        let set = by_k.get(&k).ok_or_else(|| Error::Chooser {
            k,
            message: "no candidate set with this index".into(),
        })?;
        if !used.insert(k) {
            return Err(Error::Chooser {
                k,
                message: "description chosen twice".into(),
            });
        }
        let slot = set.frames.iter().position(|f| f.id == frame_id).ok_or_else(|| Error::Chooser {
            k,
            message: format!("frame {frame_id} is not among the candidates"),
        })?;
        waypoints.push(OrderedWaypoint {
            k,
            frame_id,
            pose: set.frames[slot].pose,
            score: set.scores[slot],
        });
    }
    if let Some(missing) = candidates.iter().find(|s| !used.contains(&s.k)) {
        return Err(Error::Chooser {
            k: missing.k,
            message: "no frame chosen for this description".into(),
        });
    }
    Ok(OrderedWaypoints { waypoints })
}

/// CSV with header `x,y,score`: floor-plan position of each frame and its
/// similarity.
pub fn heatmap_csv(frames: &[FrameRecord], scores: &[(u64, f64)]) -> String {
    let mut out = String::from("x,y,score\n");
    for (f, (_, s)) in frames.iter().zip(scores) {
        out.push_str(&format!("{},{},{}\n", f.pose.p.x, f.pose.p.y, s));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(id: u64, emb: Vec<f64>) -> FrameRecord {
        FrameRecord {
            id,
            pose: Pose4::from_xyz(id as f64, 0.0, 1.0, 0.0).unwrap(),
            embedding: Embedding::unit(emb).unwrap(),
            time_index: id as i64,
        }
    }

    fn desc(k: usize, emb: Vec<f64>) -> WaypointDescription {
        WaypointDescription::new(k, format!("d{k}"), Embedding::new(emb).unwrap()).unwrap()
    }

    #[test]
    fn self_match_ranks_first() {
        let frames: Vec<_> = (0..5).map(|i| frame(i, vec![1.0, i as f64, 0.5 * i as f64])).collect();
        let d = desc(0, frames[3].embedding.as_slice().to_vec());
        let sets = retrieve_candidates(&[d], &frames, 3).unwrap();
        assert_eq!(sets[0].frames[0].id, 3);
        assert!((sets[0].scores[0] - 1.0).abs() < 1e-12);
        assert!(sets[0].scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn ties_go_to_lower_id() {
        let frames = vec![frame(7, vec![0.0, 1.0]), frame(2, vec![0.0, 1.0]), frame(4, vec![1.0, 0.0])];
        let sets = retrieve_candidates(&[desc(0, vec![0.0, 1.0])], &frames, 2).unwrap();
        assert_eq!(sets[0].frames.iter().map(|f| f.id).collect::<Vec<_>>(), vec![2, 7]);
    }

    #[test]
    fn score_examples() {
        let d = desc(0, vec![1.0, 0.0, 0.0]);
        let ortho = vec![frame(0, vec![0.0, 1.0, 0.0]), frame(1, vec![0.0, 0.0, 1.0])];
        assert!(score_frames(&d, &ortho).unwrap().iter().all(|(_, s)| *s == 0.0));
        let anti = vec![frame(0, vec![1.0, 0.0, 0.0]), frame(1, vec![-1.0, 0.0, 0.0])];
        let s: Vec<f64> = score_frames(&d, &anti).unwrap().iter().map(|x| x.1).collect();
        assert_eq!(s, vec![1.0, -1.0]);
        let wrong = vec![frame(0, vec![1.0, 0.0])];
        assert!(matches!(score_frames(&d, &wrong), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn precondition_errors() {
        let d = desc(0, vec![1.0, 0.0]);
        assert!(retrieve_candidates(&[d.clone()], &[], 1).is_err());
        assert!(retrieve_candidates(&[d.clone()], &[frame(0, vec![1.0, 0.0])], 2).is_err());
        assert!(retrieve_candidates(&[d], &[frame(0, vec![1.0, 0.0])], 0).is_err());
    }

    #[test]
    fn matches_full_sort_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = rng.random_range(3..30);
            // coarse values so exact ties happen
            let frames: Vec<_> = (0..n)
                .map(|i| frame(i as u64 * 3 % 31, (0..4).map(|_| rng.random_range(-2..3) as f64 + 0.1).collect()))
                .collect();
            let mut uniq = HashSet::new();
            if !frames.iter().all(|f| uniq.insert(f.id)) {
                continue;
            }
            let d = desc(0, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
            let k = rng.random_range(1..=n);
            let got = retrieve_candidates(&[d.clone()], &frames, k).unwrap();
            let mut all: Vec<(f64, u64)> = frames
                .iter()
                .map(|f| (crate::embed::cosine(&d.d, &f.embedding).unwrap(), f.id))
                .collect();
            all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let want: Vec<u64> = all.iter().take(k).map(|x| x.1).collect();
            assert_eq!(got[0].frames.iter().map(|f| f.id).collect::<Vec<_>>(), want);
        }
    }

    fn three_sets() -> (Vec<CandidateSet>, Vec<WaypointDescription>) {
        let frames: Vec<_> = (0..9).map(|i| frame(i, vec![1.0 + i as f64, (i % 3) as f64, 1.0])).collect();
        let descs = vec![desc(0, vec![1.0, 0.0, 0.0]), desc(1, vec![0.0, 1.0, 0.0]), desc(2, vec![0.0, 0.0, 1.0])];
        (retrieve_candidates(&descs, &frames, 3).unwrap(), descs)
    }

    #[test]
    fn deterministic_chooser_takes_argmax_in_k_order() {
        let (sets, descs) = three_sets();
        let a = select_and_sort(&sets, &descs, &mut DeterministicChooser).unwrap();
        let b = select_and_sort(&sets, &descs, &mut DeterministicChooser).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.waypoints.iter().map(|w| w.k).collect::<Vec<_>>(), vec![0, 1, 2]);
        for (w, s) in a.waypoints.iter().zip(&sets) {
            assert_eq!(w.frame_id, s.frames[0].id);
            assert_eq!(w.pose, s.frames[0].pose);
        }
    }

    #[test]
    fn scripted_chooser_passes_through() {
        let (sets, descs) = three_sets();
        let mut rev = ScriptedChooser {
            picks: vec![ScriptedPick { k: 2, slot: 0 }, ScriptedPick { k: 1, slot: 0 }, ScriptedPick { k: 0, slot: 0 }],
        };
        let out = select_and_sort(&sets, &descs, &mut rev).unwrap();
        assert_eq!(out.waypoints.iter().map(|w| w.k).collect::<Vec<_>>(), vec![2, 1, 0]);

        let mut third = ScriptedChooser {
            picks: (0..3).map(|k| ScriptedPick { k, slot: 2 }).collect(),
        };
        let out = select_and_sort(&sets, &descs, &mut third).unwrap();
        let want: Vec<u64> = sets.iter().map(|s| s.frames[2].id).collect();
        assert_eq!(out.waypoints.iter().map(|w| w.frame_id).collect::<Vec<_>>(), want);
    }

    #[test]
    fn chooser_errors_name_the_description() {
        let (sets, descs) = three_sets();
        let mut missing = ScriptedChooser {
            picks: vec![ScriptedPick { k: 0, slot: 0 }, ScriptedPick { k: 2, slot: 0 }],
        };
        assert!(matches!(select_and_sort(&sets, &descs, &mut missing), Err(Error::Chooser { k: 1, .. })));
        let mut bad_slot = ScriptedChooser {
            picks: vec![ScriptedPick { k: 1, slot: 5 }],
        };
        assert!(matches!(select_and_sort(&sets, &descs, &mut bad_slot), Err(Error::Chooser { k: 1, .. })));
        assert!(select_and_sort(&[], &descs, &mut DeterministicChooser).unwrap().waypoints.is_empty());
    }

    #[test]
    fn description_sources() {
        let text = r#"[{"k": 0, "text": "window", "emb": [0, 2]}, {"k": 1, "text": "door"}]"#;
        let d = parse_descriptions(text, None, 8).unwrap();
        assert_eq!(d[0].d.as_slice(), &[0.0, 1.0]);
        assert_eq!(d[1].d, hash_embedding("door", 8));
        assert!(parse_descriptions(r#"[{"k": 0, "text": "a"}, {"k": 0, "text": "b"}]"#, None, 4).is_err());
        assert!(parse_descriptions(r#"[{"k": 0, "text": "a", "landmark_label": "x"}]"#, None, 4).is_err());
    }

    #[test]
    fn heatmap_format() {
        let frames = vec![frame(1, vec![1.0, 0.0])];
        assert_eq!(heatmap_csv(&frames, &[(1, 0.5)]), "x,y,score\n1,0,0.5\n");
    }
}
