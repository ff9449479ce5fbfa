use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{init_linear, Activation, Init, ParamStore, Rng, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Survival,
    Grade,
}

impl Task {
    pub fn out_width(self) -> usize {
        match self {
            Task::Survival => 1,
            Task::Grade => 3,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "survival" | "surv" => Ok(Task::Survival),
            "grade" | "grade3" => Ok(Task::Grade),
            other => Err(Error::Configuration(format!("unknown task `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Survival => "survival",
            Task::Grade => "grade",
        }
    }
}

/// Hazard in (-3, 3) for survival; log-probabilities over three grades.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputHead {
    pub prefix: String,
    pub in_width: usize,
    pub task: Task,
}

pub const HAZARD_RANGE: f64 = 3.0;

impl OutputHead {
    pub fn new(prefix: impl Into<String>, in_width: usize, task: Task) -> Self {
        Self {
            prefix: prefix.into(),
            in_width,
            task,
        }
    }

    pub fn init(&self, store: &mut ParamStore, init: Init, rng: &mut Rng) {
        init_linear(store, &self.prefix, self.in_width, self.task.out_width(), init, rng);
    }

    /// Pre-activation scores, `[B, out]`.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        tape.linear(store, &self.prefix, h)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        let z = self.logits(tape, store, h)?;
        activate(tape, z, self.task)
    }
}

pub fn activate(tape: &mut Tape, z: Var, task: Task) -> Result<Var> {
    match task {
        Task::Survival => {
            let s = tape.act(z, Activation::Sigmoid)?;
            Ok(tape.scale_shift(s, 2.0 * HAZARD_RANGE, -HAZARD_RANGE))
        }
        Task::Grade => tape.act(z, Activation::LogSoftmax),
    }
}
