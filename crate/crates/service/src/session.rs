//! One annotation session: image, margin points, click rounds and the mask
//! produced after each round. Only legal transitions mutate state; a failed
//! request leaves the session untouched.

use serde::{Deserialize, Serialize};

use interseg_core::pipeline::{refine_step, stage1, PipelineParams, Provider, Stage1, Timing};
use interseg_core::seeds::{check_contradictions, split_seeds};
use interseg_core::{BinaryMask, BoundingBox, GridIndex, Label, ScalarGrid, Seed, SeedSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingPoints,
    Segmented,
    Accepted,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Invalid(#[from] interseg_core::Error),
    /// The request is not legal in the current state.
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    NotFound(String),
}

pub type SessionResult<T> = std::result::Result<T, SessionError>;

fn state(msg: &str) -> SessionError {
    SessionError::State(msg.to_string())
}

/// A margin point on the wire; any `label` field is ignored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    image: ScalarGrid,
    params: PipelineParams,
    margin_points: Vec<Point>,
    stage: Option<Stage1>,
    click_history: Vec<Vec<Seed>>,
    mask_history: Vec<BinaryMask>,
    status: Status,
    last_timings: Vec<Timing>,
}

impl Session {
    /// The image is rounded to the stored single precision so that a session
    /// replayed from disk computes exactly what the live one did.
    pub fn new(id: String, image: ScalarGrid, params: PipelineParams) -> Self {
        let single = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<f64>>();
        let image = ScalarGrid::new(image.dims(), &single(image.spacing()), single(image.data()))
            .expect("rounding keeps a valid grid");
        Session {
            id,
            image,
            params,
            margin_points: Vec::new(),
            stage: None,
            click_history: Vec::new(),
            mask_history: Vec::new(),
            status: Status::AwaitingPoints,
            last_timings: Vec::new(),
        }
    }

    pub fn image(&self) -> &ScalarGrid {
        &self.image
    }

    pub fn params(&self) -> &PipelineParams {
        &self.params
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn margin_points(&self) -> &[Point] {
        &self.margin_points
    }

    pub fn click_history(&self) -> &[Vec<Seed>] {
        &self.click_history
    }

    pub fn mask_history(&self) -> &[BinaryMask] {
        &self.mask_history
    }

    pub fn bbox(&self) -> Option<&BoundingBox> {
        self.stage.as_ref().map(|s| &s.frame.bbox)
    }

    /// Timings of the most recent mutating step.
    pub fn last_timings(&self) -> &[Timing] {
        &self.last_timings
    }

    /// Index of the latest mask; `None` before stage 1.
    pub fn round(&self) -> Option<usize> {
        self.mask_history.len().checked_sub(1)
    }

    fn check_points(&self, coords: &[Vec<usize>], what: &str) -> SessionResult<()> {
        let shape = self.image.shape();
        for c in coords {
            if !shape.contains(c) {
                return Err(interseg_core::Error::OutOfBounds(format!(
                    "{what} {c:?} outside image {:?}",
                    shape.dims()
                ))
                .into());
            }
        }
        Ok(())
    }

    pub fn submit_points(&mut self, points: &[Point]) -> SessionResult<&BinaryMask> {
        match self.status {
            Status::Accepted => return Err(state("session accepted")),
            Status::Segmented => return Err(state("margin points already submitted")),
            Status::AwaitingPoints => {}
        }
        if points.len() < 2 {
            return Err(interseg_core::Error::Parameter(format!(
                "need at least 2 margin points, got {}",
                points.len()
            ))
            .into());
        }
        let coords: Vec<Vec<usize>> = points.iter().map(|p| p.coords.clone()).collect();
        self.check_points(&coords, "point")?;
        let seeds = SeedSet::new(coords.into_iter().map(GridIndex), Label::Foreground);
        let (st, timings) = stage1(&self.image, &seeds, &Provider::Baseline, &self.params)?;
        self.margin_points = points.to_vec();
        self.mask_history.push(st.mask.clone());
        self.stage = Some(st);
        self.status = Status::Segmented;
        self.last_timings = timings;
        Ok(self.mask_history.last().unwrap())
    }

    pub fn submit_clicks(&mut self, clicks: &[Seed]) -> SessionResult<&BinaryMask> {
        match self.status {
            Status::Accepted => return Err(state("session accepted")),
            Status::AwaitingPoints => return Err(state("margin points required first")),
            Status::Segmented => {}
        }
        if clicks.is_empty() {
            return Err(interseg_core::Error::EmptySeeds.into());
        }
        let coords: Vec<Vec<usize>> = clicks.iter().map(|c| c.coords.clone()).collect();
        self.check_points(&coords, "click")?;
        let (fg, bg) = split_seeds(clicks);
        check_contradictions(&fg, &bg)?;
        let all: Vec<Seed> = self
            .click_history
            .iter()
            .flatten()
            .chain(clicks)
            .cloned()
            .collect();
        let out = refine_step(self.stage.as_ref().expect("segmented"), &all, &self.params)?;
        self.click_history.push(clicks.to_vec());
        self.mask_history.push(out.mask);
        self.last_timings = out.timings;
        Ok(self.mask_history.last().unwrap())
    }

    pub fn undo(&mut self) -> SessionResult<&BinaryMask> {
        if self.status == Status::Accepted {
            return Err(state("session accepted"));
        }
        if self.click_history.is_empty() {
            return Err(state("nothing to undo"));
        }
        self.click_history.pop();
        self.mask_history.pop();
        self.last_timings.clear();
        Ok(self.mask_history.last().unwrap())
    }

    pub fn accept(&mut self) -> SessionResult<()> {
        match self.status {
            Status::Accepted => Err(state("session accepted")),
            Status::AwaitingPoints => Err(state("nothing to accept")),
            Status::Segmented => {
                self.status = Status::Accepted;
                Ok(())
            }
        }
    }

    /// Mask after `round`, the latest when `None`.
    pub fn mask(&self, round: Option<usize>) -> SessionResult<&BinaryMask> {
        let Some(latest) = self.round() else {
            return Err(SessionError::NotFound("no mask before margin points".into()));
        };
        let r = round.unwrap_or(latest);
        self.mask_history
            .get(r)
            .ok_or_else(|| SessionError::NotFound(format!("round {r} out of range 0..={latest}")))
    }

    pub fn record(&self) -> SessionRecord {
        SessionRecord {
            id: self.id.clone(),
            params: self.params.clone(),
            margin_points: self.margin_points.clone(),
            click_history: self.click_history.clone(),
            status: self.status,
        }
    }

    /// Rebuild a session by replaying its recorded requests.
    pub fn replay(image: ScalarGrid, rec: &SessionRecord) -> SessionResult<Self> {
        let mut s = Session::new(rec.id.clone(), image, rec.params.clone());
        if rec.status == Status::AwaitingPoints {
            return Ok(s);
        }
        s.submit_points(&rec.margin_points)?;
        for batch in &rec.click_history {
            s.submit_clicks(batch)?;
        }
        if rec.status == Status::Accepted {
            s.accept()?;
        }
        Ok(s)
    }
}

/// Everything needed besides the image to reconstruct a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub params: PipelineParams,
    pub margin_points: Vec<Point>,
    pub click_history: Vec<Vec<Seed>>,
    pub status: Status,
}
