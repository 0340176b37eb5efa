use std::time::Instant;

use serde::{Deserialize, Serialize};

/// How stage costs are measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Elapsed wall-clock seconds.
    Wall,
    /// Thread CPU seconds.
    Cpu,
    /// Model-declared cost units; deterministic.
    #[default]
    Sim,
}

impl CostMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostMode::Wall => "wall",
            CostMode::Cpu => "cpu",
            CostMode::Sim => "sim",
        }
    }
}

impl std::str::FromStr for CostMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wall" => Ok(CostMode::Wall),
            "cpu" => Ok(CostMode::Cpu),
            "sim" => Ok(CostMode::Sim),
            other => Err(format!(
                "unknown cost mode {other:?} (expected wall, cpu or sim)"
            )),
        }
    }
}

fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid out-pointer for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// Measures one stage.
pub struct CostClock {
    mode: CostMode,
    wall: Instant,
    cpu: f64,
}

impl CostClock {
    pub fn start(mode: CostMode) -> Self {
        Self {
            mode,
            wall: Instant::now(),
            cpu: if mode == CostMode::Cpu {
                thread_cpu_seconds()
            } else {
                0.0
            },
        }
    }

    /// Cost of the work since `start`, given the model's declared units.
    pub fn stop(&self, declared: f64) -> f64 {
        match self.mode {
            CostMode::Sim => declared,
            CostMode::Wall => self.wall.elapsed().as_secs_f64(),
            CostMode::Cpu => (thread_cpu_seconds() - self.cpu).max(0.0),
        }
    }
}
