//! Preference oracles: answer "is the challenger view better than the
//! incumbent view for this description?".

mod human;
mod remote;
mod render;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::embed::{Embedding, SyntheticScene};
use crate::error::Result;
use crate::geom::Pose4;
use crate::retrieve::WaypointDescription;

pub use human::{HumanOracle, PendingComparison, SessionHub, SessionStatus, SubmitError};
pub use remote::{parse_select, parse_verdict, RemoteChooser, RemoteOracle};
pub use render::{encode_png, label_color, render_png, render_png_base64, render_schematic, BACKGROUND};
pub use synthetic::{synthetic_compare, ScriptedOracle, SyntheticOracle, SyntheticUtility};

/// Outcome of one comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Incumbent,
    Challenger,
}

impl Verdict {
    /// `+1` for the challenger, `−1` for the incumbent.
    pub fn sign(self) -> i8 {
        match self {
            Verdict::Challenger => 1,
            Verdict::Incumbent => -1,
        }
    }
}

/// Everything an oracle may look at for one comparison. View A is the
/// incumbent, view B the challenger.
#[derive(Debug, Clone, Copy)]
pub struct Duel<'a> {
    pub iteration: usize,
    pub description: &'a WaypointDescription,
    pub scene: &'a SyntheticScene,
    pub incumbent: Pose4,
    pub challenger: Pose4,
    pub view_incumbent: &'a Embedding,
    pub view_challenger: &'a Embedding,
}

pub trait PreferenceOracle {
    fn compare(&mut self, duel: &Duel) -> Result<Verdict>;
}

impl<T: PreferenceOracle + ?Sized> PreferenceOracle for Box<T> {
    fn compare(&mut self, duel: &Duel) -> Result<Verdict> {
        (**self).compare(duel)
    }
}

/// Never promotes a challenger.
#[derive(Debug, Default, Clone, Copy)]
pub struct AlwaysIncumbent;

impl PreferenceOracle for AlwaysIncumbent {
    fn compare(&mut self, _: &Duel) -> Result<Verdict> {
        Ok(Verdict::Incumbent)
    }
}
