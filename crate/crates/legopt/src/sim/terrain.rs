//! Parkour terrains: piecewise-constant heightfields with edge queries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{TaskConfig, TaskKind};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("obstacle parameter must be > 0, got {0}")]
    InvalidObstacle(f64),
    #[error("task needs at least 2 waypoints with strictly increasing x")]
    InvalidWaypoints,
    #[error("v_cmd must be > 0, got {0}")]
    InvalidSpeed(f64),
}

/// Validated task description: terrain kind, obstacle parameter, waypoints,
/// target speed and episode length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub obstacle_size: f64,
    pub obstacle_x: f64,
    /// Ordered 2D goal points.
    pub waypoints: Vec<[f64; 2]>,
    pub v_cmd: f64,
    pub episode_len: usize,
}

impl TaskSpec {
    /// Build from config; waypoint z = terrain height at the waypoint plus
    /// `stand_height` (the default robot's standing body height).
    pub fn from_config(
        task: &TaskConfig,
        stand_height: f64,
        gap_depth: f64,
    ) -> Result<(Self, Terrain), TaskError> {
        if task.obstacle_size <= 0.0 {
            return Err(TaskError::InvalidObstacle(task.obstacle_size));
        }
        if task.v_cmd <= 0.0 {
            return Err(TaskError::InvalidSpeed(task.v_cmd));
        }
        if task.waypoint_xs.len() < 2 || task.waypoint_xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TaskError::InvalidWaypoints);
        }
        let terrain = match task.kind {
            TaskKind::LongJump => Terrain::with_gap(task.obstacle_x, task.obstacle_size, gap_depth),
            TaskKind::HighJump => Terrain::with_step(task.obstacle_x, task.obstacle_size),
        };
        let waypoints = task
            .waypoint_xs
            .iter()
            .map(|&x| [x, terrain.height(x) + stand_height])
            .collect();
        Ok((
            TaskSpec {
                kind: task.kind,
                obstacle_size: task.obstacle_size,
                obstacle_x: task.obstacle_x,
                waypoints,
                v_cmd: task.v_cmd,
                episode_len: task.episode_len,
            },
            terrain,
        ))
    }

    /// x beyond which the obstacle counts as crossed.
    pub fn obstacle_end(&self) -> f64 {
        match self.kind {
            TaskKind::LongJump => self.obstacle_x + self.obstacle_size,
            TaskKind::HighJump => self.obstacle_x,
        }
    }
}

/// Piecewise-constant heightfield. `heights[i]` applies on
/// `[breaks[i-1], breaks[i])` with open ends at both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    breaks: Vec<f64>,
    heights: Vec<f64>,
}

impl Terrain {
    pub fn flat(height: f64) -> Self {
        Self {
            breaks: vec![],
            heights: vec![height],
        }
    }

    /// Flat ground with a gap of `width` starting at `x_gap`, `depth` deep.
    pub fn with_gap(x_gap: f64, width: f64, depth: f64) -> Self {
        Self {
            breaks: vec![x_gap, x_gap + width],
            heights: vec![0.0, -depth, 0.0],
        }
    }

    /// Step up of `height` at `x_step`.
    pub fn with_step(x_step: f64, height: f64) -> Self {
        Self {
            breaks: vec![x_step],
            heights: vec![0.0, height],
        }
    }

    /// Height h(x); defined for all x.
    pub fn height(&self, x: f64) -> f64 {
        let idx = self.breaks.partition_point(|&b| b <= x);
        self.heights[idx]
    }

    /// x-positions where the height changes.
    pub fn edges(&self) -> &[f64] {
        &self.breaks
    }

    /// Horizontal distance from `x` to the nearest edge (infinite when the
    /// terrain has no edges).
    pub fn nearest_edge_distance(&self, x: f64) -> f64 {
        self.breaks
            .iter()
            .map(|&b| (x - b).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Contact query for a point: penetration depth and outward surface
    /// normal of the minimum-translation separation, or None when the point
    /// is above ground. Vertical faces at edges push sideways so that a foot
    /// striking a platform front face is repelled instead of teleported up.
    pub fn contact(&self, p: [f64; 2]) -> Option<Contact> {
        let h = self.height(p[0]);
        let vertical_depth = h - p[1];
        if vertical_depth <= 0.0 {
            return None;
        }
        let mut best = Contact {
            depth: vertical_depth,
            normal: [0.0, 1.0],
        };
        for (i, &bx) in self.breaks.iter().enumerate() {
            let (lo, hi) = (self.heights[i], self.heights[i + 1]);
            // The vertical face at bx spans [min(lo,hi), max(lo,hi)]; only a
            // point inside that span and inside the taller side can be pushed
            // out horizontally.
            if p[1] >= lo.min(hi) && p[1] < lo.max(hi) {
                let face_depth = if hi > lo { p[0] - bx } else { bx - p[0] };
                if face_depth > 0.0 && face_depth < best.depth {
                    let n = if hi > lo { [-1.0, 0.0] } else { [1.0, 0.0] };
                    best = Contact {
                        depth: face_depth,
                        normal: n,
                    };
                }
            }
        }
        Some(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub depth: f64,
    pub normal: [f64; 2],
}

/// Build the terrain for a task (obstacle geometry only).
pub fn make_terrain(task: &TaskSpec, gap_depth: f64) -> Terrain {
    match task.kind {
        TaskKind::LongJump => Terrain::with_gap(task.obstacle_x, task.obstacle_size, gap_depth),
        TaskKind::HighJump => Terrain::with_step(task.obstacle_x, task.obstacle_size),
    }
}
