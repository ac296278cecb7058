use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::render::render_png_base64;
use super::{Duel, PreferenceOracle, Verdict};
use crate::embed::SyntheticScene;
use crate::error::{Error, Result};
use crate::retrieve::{CandidateSet, Chooser, Selection, WaypointDescription};

/// Strict verdict parse: a JSON object whose `verdict` is exactly `"A"`
/// (incumbent) or `"B"` (challenger).
pub fn parse_verdict(body: &str) -> Result<Verdict> {
    #[derive(Deserialize)]
    struct Body {
        verdict: String,
    }
    let b: Body = serde_json::from_str(body).map_err(|e| Error::Oracle(format!("malformed verdict body: {e}")))?;
    match b.verdict.as_str() {
        "A" => Ok(Verdict::Incumbent),
        "B" => Ok(Verdict::Challenger),
        other => Err(Error::Oracle(format!("verdict must be \"A\" or \"B\", got {other:?}"))),
    }
}

fn client(timeout: Duration) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| Error::Oracle(format!("cannot build HTTP client: {e}")))
}

fn post(client: &reqwest::blocking::Client, url: &str, body: &serde_json::Value) -> Result<String> {
    let resp = client.post(url).json(body).send().map_err(|e| {
        if e.is_timeout() {
            Error::Timeout
        } else {
            Error::Oracle(format!("{url}: {e}"))
        }
    })?;
    let status = resp.status();
    let text = resp.text().map_err(|e| Error::Oracle(format!("{url}: {e}")))?;
    if !status.is_success() {
        return Err(Error::Oracle(format!("{url}: HTTP {status}")));
    }
    Ok(text)
}

/// Client for a vision-language comparison service: `POST {base}/compare`
/// with both views as base64 PNG.
pub struct RemoteOracle {
    base: String,
    client: reqwest::blocking::Client,
    pub width: u32,
    pub height: u32,
}

impl RemoteOracle {
    pub fn new(base: impl Into<String>, timeout: Duration) -> Result<Self> {
        Ok(RemoteOracle {
            base: base.into().trim_end_matches('/').to_string(),
            client: client(timeout)?,
            width: 320,
            height: 240,
        })
    }
}

impl PreferenceOracle for RemoteOracle {
    fn compare(&mut self, duel: &Duel) -> Result<Verdict> {
        let body = json!({
            "description": duel.description.text,
            "image_a": render_png_base64(duel.scene, &duel.incumbent, self.width, self.height)?,
            "image_b": render_png_base64(duel.scene, &duel.challenger, self.width, self.height)?,
        });
        let text = post(&self.client, &format!("{}/compare", self.base), &body)?;
        parse_verdict(&text)
    }
}

#[derive(Deserialize)]
struct SelectBody {
    picks: Vec<SelectPick>,
}

#[derive(Serialize, Deserialize)]
struct SelectPick {
    k: usize,
    frame_id: u64,
}

/// Parses `{"picks": [{"k", "frame_id"}, …]}`, in visiting order.
pub fn parse_select(body: &str, first_k: usize) -> Result<Selection> {
    let b: SelectBody = serde_json::from_str(body).map_err(|e| Error::Chooser {
        k: first_k,
        message: format!("malformed selection body: {e}"),
    })?;
    Ok(b.picks.into_iter().map(|p| (p.k, p.frame_id)).collect())
}

/// Chooser backed by `POST {base}/select`. Candidate images are rendered
/// from the synthetic scene when one is given.
pub struct RemoteChooser {
    base: String,
    client: reqwest::blocking::Client,
    scene: Option<SyntheticScene>,
    pub width: u32,
    pub height: u32,
}

impl RemoteChooser {
    pub fn new(base: impl Into<String>, timeout: Duration, scene: Option<SyntheticScene>) -> Result<Self> {
        Ok(RemoteChooser {
            base: base.into().trim_end_matches('/').to_string(),
            client: client(timeout)?,
            scene,
            width: 320,
            height: 240,
        })
    }
}

impl Chooser for RemoteChooser {
    fn choose(&mut self, sets: &[CandidateSet], descriptions: &[WaypointDescription]) -> Result<Selection> {
        let first_k = sets.first().map_or(0, |s| s.k);
        let mut payload = Vec::with_capacity(sets.len());
        for s in sets {
            let text = descriptions.iter().find(|d| d.k == s.k).map_or("", |d| d.text.as_str());
            let mut cands = Vec::with_capacity(s.frames.len());
            for (f, score) in s.frames.iter().zip(&s.scores) {
                let image = match &self.scene {
                    Some(scene) => Some(render_png_base64(scene, &f.pose, self.width, self.height).map_err(|e| Error::Chooser {
                        k: s.k,
                        message: e.to_string(),
                    })?),
                    None => None,
                };
                cands.push(json!({"frame_id": f.id, "score": score, "image": image}));
            }
            payload.push(json!({"k": s.k, "description": text, "candidates": cands}));
        }
        let text = post(&self.client, &format!("{}/select", self.base), &json!({ "sets": payload })).map_err(|e| Error::Chooser {
            k: first_k,
            message: e.to_string(),
        })?;
        parse_select(&text, first_k)
    }
}
