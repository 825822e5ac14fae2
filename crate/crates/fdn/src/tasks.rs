//! Synthetic 1D regression tasks with explicit interpolation and
//! extrapolation regions.
//!
//! The ambient domain is (-L, L); training inputs are sampled uniformly from
//! the interpolation region [-l, l]; ID test points sit on an even grid over
//! [-l, l] and OOD test points on even grids strictly inside the two
//! extrapolation lobes. Targets are noiseless.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adiff::StreamRng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Step,
    Sine,
    Quadratic,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Step, TaskKind::Sine, TaskKind::Quadratic];

    pub fn parse(s: &str) -> Result<TaskKind> {
        match s {
            "step" => Ok(TaskKind::Step),
            "sine" => Ok(TaskKind::Sine),
            "quadratic" => Ok(TaskKind::Quadratic),
            other => Err(Error::InvalidArg(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskKind::Step => "step",
            TaskKind::Sine => "sine",
            TaskKind::Quadratic => "quadratic",
        };
        f.write_str(s)
    }
}

/// Target functions:
/// step      -> 1 if x > 0, 0 if x < 0, 1/2 at x = 0
/// sine      -> 1.54 sin(2.39 x)
/// quadratic -> 0.43 x^2 - 0.41
pub fn target_fn(kind: TaskKind, x: f64) -> f64 {
    match kind {
        TaskKind::Step => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                0.0
            } else {
                0.5
            }
        }
        TaskKind::Sine => 1.54 * (2.39 * x).sin(),
        TaskKind::Quadratic => 0.43 * x * x - 0.41,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Half-width of the interpolation region [-l, l].
    pub l: f64,
    /// Half-width of the ambient domain (-L, L).
    pub ambient: f64,
    pub n_train: usize,
    pub n_test_id: usize,
    pub n_test_ood: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            kind: TaskKind::Quadratic,
            l: 1.0,
            ambient: 2.0,
            n_train: 256,
            n_test_id: 200,
            n_test_ood: 200,
        }
    }
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        TaskSpec {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l < self.ambient) {
            return Err(Error::InvalidArg(format!(
                "require 0 < l < L, got l={} L={}",
                self.l, self.ambient
            )));
        }
        if self.n_train == 0 || self.n_test_id == 0 || self.n_test_ood == 0 {
            return Err(Error::InvalidArg("sample counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TestId,
    TestOod,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::TestId => "test_id",
            Split::TestOod => "test_ood",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Indices of one split, in storage order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn points(&self, split: Split) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x
            .iter()
            .zip(&self.y)
            .zip(&self.split)
            .filter(move |(_, &s)| s == split)
            .map(|((&x, &y), _)| (x, y))
    }

    /// CSV with header `x,y,split`; floats carry 17 significant digits so a
    /// parse round-trips to the same bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,split\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{}\n",
                self.x[i], self.y[i], self.split[i]
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Inclusive even grid over [lo, hi].
fn even_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Even grid strictly inside (lo, hi): midpoints of n equal cells.
fn open_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
        .collect()
}

/// Build the train / test_id / test_ood splits for a task. Only the training
/// inputs consume randomness (uniform over [-l, l]); both test grids are
/// deterministic in the spec.
pub fn make_dataset(spec: &TaskSpec, rng: &mut StreamRng) -> Result<Dataset> {
    spec.validate()?;
    let mut x = Vec::new();
    let mut split = Vec::new();

    for _ in 0..spec.n_train {
        x.push(rng.uniform_in(-spec.l, spec.l));
        split.push(Split::Train);
    }
    for xi in even_grid(-spec.l, spec.l, spec.n_test_id) {
        x.push(xi);
        split.push(Split::TestId);
    }
    let per_lobe = spec.n_test_ood / 2;
    let left = open_grid(-spec.ambient, -spec.l, per_lobe);
    let right = open_grid(spec.l, spec.ambient, spec.n_test_ood - per_lobe);
    for xi in left.into_iter().chain(right) {
        x.push(xi);
        split.push(Split::TestOod);
    }

    let y = x.iter().map(|&xi| target_fn(spec.kind, xi)).collect();
    Ok(Dataset {
        spec: *spec,
        x,
        y,
        split,
    })
}
