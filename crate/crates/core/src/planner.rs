//! Counter-augmented state-lattice A* over informative and basic motion primitives.
//!
//! Poses sit at cell centres with `H` heading levels. Informative primitives
//! cost nothing and increment their usage counter; basic primitives (one-cell
//! straight moves and on-the-spot rotations) cost `L̄` each. A plan must end
//! at the goal pose with every counter at its required value.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::Schedule;
use crate::primitives::{pose_trace, PrimitiveLibrary};
use crate::sim::{BodyVelocity, Pose, SimError, Tau};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("primitive `{name}` moves less than half a cell in every coordinate")]
    NonRepresentable { name: String },
    #[error("lattice needs at least one heading level and a positive cell size")]
    BadLattice,
    #[error("{what} cell ({x}, {y}) is outside the map")]
    OutOfBounds { what: &'static str, x: i64, y: i64 },
    #[error("{what} cell ({x}, {y}) is blocked")]
    Blocked { what: &'static str, x: i64, y: i64 },
    #[error("required counters {required:?} do not match {informative} informative primitives")]
    BadCounters { required: Vec<usize>, informative: usize },
    #[error("no plan: open set exhausted after {expanded} expansions; best counters reached {max_counters:?}")]
    Infeasible { max_counters: Vec<usize>, expanded: usize },
    #[error("primitive id {0} not in library")]
    UnknownPrimitive(usize),
    #[error("map parse error: {0}")]
    MapParse(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    pub headings: usize,
    /// Cell edge length, m.
    pub cell_size: f64,
    /// Margin added around swept trajectory extents, in cells.
    pub inflation_cells: f64,
    /// Cost of one basic primitive.
    pub basic_cost: f64,
    /// Trajectory samples covered by one swept box.
    pub samples_per_box: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { headings: 4, cell_size: 2.0, inflation_cells: 0.5, basic_cost: 1.0, samples_per_box: 8 }
    }
}

impl LatticeConfig {
    fn validate(&self) -> Result<(), PlanError> {
        if self.headings == 0 || !(self.cell_size > 0.0) || !(self.inflation_cells >= 0.0) {
            return Err(PlanError::BadLattice);
        }
        Ok(())
    }

    pub fn heading_angle(&self, h: usize) -> f64 {
        2.0 * PI * (h % self.headings) as f64 / self.headings as f64
    }

    /// Exact `(cos, sin)` for quarter turns.
    fn rotation(&self, h: usize) -> (f64, f64) {
        let h = h % self.headings;
        if (4 * h).is_multiple_of(self.headings) {
            match 4 * h / self.headings {
                0 => (1.0, 0.0),
                1 => (0.0, 1.0),
                2 => (-1.0, 0.0),
                _ => (0.0, -1.0),
            }
        } else {
            let a = self.heading_angle(h);
            (a.cos(), a.sin())
        }
    }
}

/// Axis-aligned box in cell units, relative to the start cell centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl CellBox {
    fn around(points: &[(f64, f64)], margin: f64) -> Self {
        let mut b = CellBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for &(x, y) in points {
            b.min_x = b.min_x.min(x);
            b.min_y = b.min_y.min(y);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        }
        b.min_x -= margin;
        b.min_y -= margin;
        b.max_x += margin;
        b.max_y += margin;
        b
    }

    /// Box placed at cell `(x, y)`, in absolute cell coordinates.
    pub fn at(&self, x: i64, y: i64) -> CellBox {
        let cx = x as f64 + 0.5;
        let cy = y as f64 + 0.5;
        CellBox { min_x: self.min_x + cx, min_y: self.min_y + cy, max_x: self.max_x + cx, max_y: self.max_y + cy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PrimitiveKind {
    /// Increments counter `counter`.
    Informative { counter: usize },
    Basic,
}

/// Motion of a primitive started at one heading level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingVariant {
    pub dx: i64,
    pub dy: i64,
    pub dh: i64,
    pub boxes: Vec<CellBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub id: usize,
    pub name: String,
    pub kind: PrimitiveKind,
    /// Library primitive the signal comes from, for informative primitives.
    pub source_id: Option<usize>,
    pub cost: f64,
    /// Indexed by start heading level.
    pub variants: Vec<HeadingVariant>,
    pub signal: Vec<Tau>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasicMove {
    Straight,
    RotateCw,
    RotateCcw,
}

/// Straight one cell, rotate clockwise, rotate counter-clockwise; ids start at `first_id`.
pub fn basic_primitives(cfg: &LatticeConfig, first_id: usize) -> Result<Vec<MotionPrimitive>, PlanError> {
    cfg.validate()?;
    let m = cfg.inflation_cells;
    let moves = [(BasicMove::Straight, "straight"), (BasicMove::RotateCw, "rotate cw"), (BasicMove::RotateCcw, "rotate ccw")];
    Ok(moves
        .iter()
        .enumerate()
        .map(|(i, &(mv, name))| {
            let variants = (0..cfg.headings)
                .map(|h| match mv {
                    BasicMove::Straight => {
                        let (c, s) = cfg.rotation(h);
                        let (dx, dy) = (c.round() as i64, s.round() as i64);
                        HeadingVariant {
                            dx,
                            dy,
                            dh: 0,
                            boxes: vec![CellBox::around(&[(0.0, 0.0), (dx as f64, dy as f64)], m)],
                        }
                    }
                    BasicMove::RotateCw | BasicMove::RotateCcw => HeadingVariant {
                        dx: 0,
                        dy: 0,
                        dh: if mv == BasicMove::RotateCw { -1 } else { 1 },
                        boxes: vec![CellBox::around(&[(0.0, 0.0)], m)],
                    },
                })
                .collect();
            MotionPrimitive {
                id: first_id + i,
                name: name.to_string(),
                kind: PrimitiveKind::Basic,
                source_id: None,
                cost: cfg.basic_cost,
                variants,
                signal: Vec::new(),
            }
        })
        .collect())
}

/// Informative primitive from a velocity sequence started at a cell centre.
pub fn informative_primitive(
    id: usize,
    counter: usize,
    name: &str,
    velocities: &[BodyVelocity],
    dt: f64,
    signal: Vec<Tau>,
    cfg: &LatticeConfig,
) -> Result<MotionPrimitive, PlanError> {
    cfg.validate()?;
    let trace = pose_trace(&Pose::default(), velocities, dt)?;
    let end = *trace.last().expect("trace includes start");
    let step = 2.0 * PI / cfg.headings as f64;
    if end.x.abs() < 0.5 * cfg.cell_size && end.y.abs() < 0.5 * cfg.cell_size && end.psi.abs() < 0.5 * step {
        return Err(PlanError::NonRepresentable { name: name.to_string() });
    }
    let dh = (end.psi / step).round() as i64;
    let chunk = cfg.samples_per_box.max(1);
    let variants = (0..cfg.headings)
        .map(|h| {
            let (c, s) = cfg.rotation(h);
            let pts: Vec<(f64, f64)> = trace
                .iter()
                .map(|p| ((c * p.x - s * p.y) / cfg.cell_size, (s * p.x + c * p.y) / cfg.cell_size))
                .collect();
            let (ex, ey) = *pts.last().unwrap();
            let boxes = pts
                .chunks(chunk)
                .enumerate()
                .map(|(i, part)| {
                    let mut span = part.to_vec();
                    if let Some(next) = pts.get((i + 1) * chunk) {
                        span.push(*next);
                    }
                    CellBox::around(&span, cfg.inflation_cells)
                })
                .collect();
            HeadingVariant { dx: ex.round() as i64, dy: ey.round() as i64, dh, boxes }
        })
        .collect();
    Ok(MotionPrimitive {
        id,
        name: name.to_string(),
        kind: PrimitiveKind::Informative { counter },
        source_id: None,
        cost: 0.0,
        variants,
        signal,
    })
}

/// Informative primitives for every scheduled segment with repetitions, then the basic set.
///
/// Returns the primitive set and the required counter vector.
pub fn build_primitive_set(
    schedule: &Schedule,
    lib: &PrimitiveLibrary,
    cfg: &LatticeConfig,
) -> Result<(Vec<MotionPrimitive>, Vec<usize>), PlanError> {
    let mut prims = Vec::new();
    let mut required = Vec::new();
    for seg in schedule.segments.iter().filter(|s| s.repetitions > 0) {
        let p = lib.get(seg.id).ok_or(PlanError::UnknownPrimitive(seg.id))?;
        let len = seg.segment_len.min(p.expected_trajectory.len());
        let mut m = informative_primitive(
            prims.len(),
            required.len(),
            &p.label,
            &p.expected_trajectory[..len],
            lib.dt(),
            p.input_signal[..len].to_vec(),
            cfg,
        )?;
        m.source_id = Some(p.id);
        prims.push(m);
        required.push(seg.repetitions);
    }
    let first = prims.len();
    prims.extend(basic_primitives(cfg, first)?);
    Ok((prims, required))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// Row-major occupancy, index `y * width + x`.
    #[serde(skip)]
    grid: Vec<bool>,
    blocked: Vec<(usize, usize)>,
}

impl OccupancyMap {
    pub fn new(width: usize, height: usize, cell_size: f64) -> Self {
        Self { width, height, cell_size, grid: vec![false; width * height], blocked: Vec::new() }
    }

    pub fn block(&mut self, x: usize, y: usize) {
        if x < self.width && y < self.height && !self.grid[y * self.width + x] {
            self.grid[y * self.width + x] = true;
            self.blocked.push((x, y));
        }
    }

    pub fn block_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.block(x, y);
            }
        }
    }

    pub fn is_blocked(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.grid[y as usize * self.width + x as usize]
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn blocked_cells(&self) -> &[(usize, usize)] {
        &self.blocked
    }

    /// Text grid: one line per row starting at `y = 0`, `#` blocked, anything else free.
    pub fn from_text(text: &str, cell_size: f64) -> Result<Self, PlanError> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let width = lines.first().map_or(0, |l| l.chars().count());
        if width == 0 || lines.iter().any(|l| l.chars().count() != width) {
            return Err(PlanError::MapParse("rows must be non-empty and equally long".into()));
        }
        let mut map = Self::new(width, lines.len(), cell_size);
        for (y, line) in lines.iter().enumerate() {
            for (x, ch) in line.chars().enumerate() {
                if ch == '#' {
                    map.block(x, y);
                }
            }
        }
        Ok(map)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if self.grid[y * self.width + x] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let raw: OccupancyMap = serde_json::from_str(text).map_err(|e| PlanError::MapParse(e.to_string()))?;
        let mut map = Self::new(raw.width, raw.height, raw.cell_size);
        for (x, y) in raw.blocked {
            if x >= map.width || y >= map.height {
                return Err(PlanError::MapParse(format!("blocked cell ({x}, {y}) outside the map")));
            }
            map.block(x, y);
        }
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }

    /// True iff the box lies inside the map (touching the border is fine) and
    /// neither overlaps nor touches any blocked cell.
    pub fn box_is_free(&self, b: &CellBox) -> bool {
        if b.min_x < 0.0 || b.min_y < 0.0 || b.max_x > self.width as f64 || b.max_y > self.height as f64 {
            return false;
        }
        let x0 = ((b.min_x - 1.0).ceil().max(0.0)) as usize;
        let y0 = ((b.min_y - 1.0).ceil().max(0.0)) as usize;
        let x1 = (b.max_x.floor() as usize).min(self.width - 1);
        let y1 = (b.max_y.floor() as usize).min(self.height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.grid[y * self.width + x] {
                    return false;
                }
            }
        }
        true
    }
}

/// Synthetic 35 × 44 reference map with a few islands and a narrow strait.
pub fn reference_map() -> OccupancyMap {
    let mut m = OccupancyMap::new(35, 44, LatticeConfig::default().cell_size);
    m.block_rect(0, 16, 14, 19);
    m.block_rect(21, 16, 34, 19);
    m.block_rect(8, 28, 12, 33);
    m.block_rect(24, 30, 30, 35);
    m.block_rect(26, 5, 29, 8);
    m.block_rect(5, 6, 7, 8);
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeState {
    pub x: i64,
    pub y: i64,
    pub heading: usize,
    pub counters: Vec<usize>,
}

/// True iff every swept box of the primitive, started at the state, is free.
pub fn collision_check(prim: &MotionPrimitive, state: &LatticeState, map: &OccupancyMap) -> bool {
    prim.variants[state.heading % prim.variants.len()]
        .boxes
        .iter()
        .all(|b| map.box_is_free(&b.at(state.x, state.y)))
}

/// Applies a primitive's lattice delta and counter increment; counters above `cap` are rejected.
pub fn apply(prim: &MotionPrimitive, state: &LatticeState, headings: usize, cap: &[usize]) -> Option<LatticeState> {
    let v = &prim.variants[state.heading % prim.variants.len()];
    let mut counters = state.counters.clone();
    if let PrimitiveKind::Informative { counter } = prim.kind {
        let c = counters.get_mut(counter)?;
        *c += 1;
        if *c > *cap.get(counter)? {
            return None;
        }
    }
    let h = (state.heading as i64 + v.dh).rem_euclid(headings as i64) as usize;
    Some(LatticeState { x: state.x + v.dx, y: state.y + v.dy, heading: h, counters })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicWeights {
    pub euclid: f64,
    pub heading: f64,
    pub remaining: f64,
}

impl HeuristicWeights {
    pub fn default_for(cfg: &LatticeConfig) -> Self {
        Self { euclid: 1.0, heading: 0.5 * cfg.cell_size, remaining: 5.0 * cfg.cell_size }
    }

    pub fn zero() -> Self {
        Self { euclid: 0.0, heading: 0.0, remaining: 0.0 }
    }
}

/// `w₁·euclid + w₂·heading gap + w₃·Σ (n_q - g^q)`; distance in metres, heading gap in levels.
pub fn heuristic(state: &LatticeState, goal: &LatticeState, w: &HeuristicWeights, cfg: &LatticeConfig) -> f64 {
    let dx = (state.x - goal.x) as f64 * cfg.cell_size;
    let dy = (state.y - goal.y) as f64 * cfg.cell_size;
    let hd = cfg.headings as i64;
    let raw = (state.heading as i64 - goal.heading as i64).rem_euclid(hd);
    let gap = raw.min(hd - raw) as f64;
    let remaining: usize = goal.counters.iter().zip(&state.counters).map(|(n, g)| n.saturating_sub(*g)).sum();
    w.euclid * (dx * dx + dy * dy).sqrt() + w.heading * gap + w.remaining * remaining as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub primitive_id: usize,
    pub start: LatticeState,
    pub end: LatticeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub states: Vec<LatticeState>,
    pub primitive_ids: Vec<usize>,
    pub total_cost: f64,
    pub expanded: usize,
}

impl Plan {
    pub fn steps(&self) -> Vec<PlanStep> {
        self.primitive_ids
            .iter()
            .zip(self.states.windows(2))
            .map(|(&id, w)| PlanStep { primitive_id: id, start: w[0].clone(), end: w[1].clone() })
            .collect()
    }

    /// Concatenated input signals of the plan's primitives.
    pub fn stitched_signal(&self, prims: &[MotionPrimitive]) -> Vec<Tau> {
        self.primitive_ids.iter().flat_map(|&id| prims[id].signal.iter().copied()).collect()
    }

    pub fn basic_count(&self, prims: &[MotionPrimitive]) -> usize {
        self.primitive_ids.iter().filter(|&&id| prims[id].kind == PrimitiveKind::Basic).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub state: LatticeState,
    pub g: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    h: f64,
    seq: u64,
    node: usize,
    g: f64,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap on (f, h, seq).
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Indexer {
    width: usize,
    height: usize,
    headings: usize,
    radix: Vec<usize>,
    counter_states: usize,
}

impl Indexer {
    fn new(map: &OccupancyMap, headings: usize, required: &[usize]) -> Self {
        let radix: Vec<usize> = required.iter().map(|n| n + 1).collect();
        let counter_states = radix.iter().product();
        Self { width: map.width, height: map.height, headings, radix, counter_states }
    }

    fn len(&self) -> usize {
        self.width * self.height * self.headings * self.counter_states
    }

    fn pose_index(&self, s: &LatticeState) -> usize {
        ((s.y as usize * self.width) + s.x as usize) * self.headings + s.heading
    }

    fn index(&self, s: &LatticeState) -> usize {
        let mut c = 0;
        for (g, r) in s.counters.iter().zip(&self.radix) {
            c = c * r + g;
        }
        self.pose_index(s) * self.counter_states + c
    }

    fn state(&self, mut idx: usize) -> LatticeState {
        let mut c = idx % self.counter_states;
        idx /= self.counter_states;
        let heading = idx % self.headings;
        idx /= self.headings;
        let x = idx % self.width;
        let y = idx / self.width;
        let mut counters = vec![0; self.radix.len()];
        for (slot, r) in counters.iter_mut().zip(&self.radix).rev() {
            *slot = c % r;
            c /= r;
        }
        LatticeState { x: x as i64, y: y as i64, heading, counters }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    pub record_trace: bool,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub plan: Plan,
    pub trace: Vec<Expansion>,
}

fn check_cell(map: &OccupancyMap, what: &'static str, x: i64, y: i64) -> Result<(), PlanError> {
    if !map.in_bounds(x, y) {
        return Err(PlanError::OutOfBounds { what, x, y });
    }
    if map.is_blocked(x, y) {
        return Err(PlanError::Blocked { what, x, y });
    }
    Ok(())
}

/// A* from `start` (zero counters) to `goal` (required counters).
#[allow(clippy::too_many_arguments)]
pub fn astar_plan(
    start: (i64, i64, usize),
    goal: (i64, i64, usize),
    required: &[usize],
    prims: &[MotionPrimitive],
    map: &OccupancyMap,
    weights: &HeuristicWeights,
    cfg: &LatticeConfig,
    opts: &SearchOptions,
) -> Result<SearchOutcome, PlanError> {
    cfg.validate()?;
    check_cell(map, "start", start.0, start.1)?;
    check_cell(map, "goal", goal.0, goal.1)?;
    let informative = prims.iter().filter(|p| matches!(p.kind, PrimitiveKind::Informative { .. })).count();
    let counters_ok = prims.iter().all(|p| match p.kind {
        PrimitiveKind::Informative { counter } => counter < required.len(),
        PrimitiveKind::Basic => true,
    });
    if !counters_ok || informative < required.iter().filter(|&&n| n > 0).count() {
        return Err(PlanError::BadCounters { required: required.to_vec(), informative });
    }
    let headings = cfg.headings;
    let start_state = LatticeState { x: start.0, y: start.1, heading: start.2 % headings, counters: vec![0; required.len()] };
    let goal_state = LatticeState { x: goal.0, y: goal.1, heading: goal.2 % headings, counters: required.to_vec() };

    let ix = Indexer::new(map, headings, required);
    let mut g_cost = vec![f64::INFINITY; ix.len()];
    let mut parent: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX); ix.len()];
    let n_poses = map.width * map.height * headings;
    // Collision results per (pose, primitive): 0 unknown, 1 free, 2 colliding.
    let mut free_cache = vec![0u8; n_poses * prims.len()];

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let s0 = ix.index(&start_state);
    g_cost[s0] = 0.0;
    let h0 = heuristic(&start_state, &goal_state, weights, cfg);
    heap.push(OpenEntry { f: h0, h: h0, seq, node: s0, g: 0.0 });
    let mut expanded = 0usize;
    let mut trace = Vec::new();
    let mut best_counters = start_state.counters.clone();

    while let Some(entry) = heap.pop() {
        if entry.g > g_cost[entry.node] {
            continue;
        }
        let state = ix.state(entry.node);
        expanded += 1;
        if opts.record_trace {
            trace.push(Expansion { state: state.clone(), g: entry.g, f: entry.f });
        }
        let sum: usize = state.counters.iter().sum();
        if sum > best_counters.iter().sum::<usize>() {
            best_counters = state.counters.clone();
        }
        if state == goal_state {
            let plan = reconstruct(&ix, &parent, entry.node, entry.g, expanded);
            return Ok(SearchOutcome { plan, trace });
        }
        let pose = ix.pose_index(&state);
        for (pi, prim) in prims.iter().enumerate() {
            let Some(next) = apply(prim, &state, headings, required) else { continue };
            if !map.in_bounds(next.x, next.y) {
                continue;
            }
            let slot = &mut free_cache[pose * prims.len() + pi];
            if *slot == 0 {
                *slot = if collision_check(prim, &state, map) { 1 } else { 2 };
            }
            if *slot == 2 {
                continue;
            }
            let ni = ix.index(&next);
            let ng = entry.g + prim.cost;
            if ng < g_cost[ni] {
                g_cost[ni] = ng;
                parent[ni] = (entry.node as u32, pi as u32);
                let h = heuristic(&next, &goal_state, weights, cfg);
                seq += 1;
                heap.push(OpenEntry { f: ng + h, h, seq, node: ni, g: ng });
            }
        }
    }
    Err(PlanError::Infeasible { max_counters: best_counters, expanded })
}

fn reconstruct(ix: &Indexer, parent: &[(u32, u32)], mut node: usize, cost: f64, expanded: usize) -> Plan {
    let mut states = vec![ix.state(node)];
    let mut ids = Vec::new();
    while parent[node].0 != u32::MAX {
        let (p, prim) = parent[node];
        ids.push(prim as usize);
        node = p as usize;
        states.push(ix.state(node));
    }
    states.reverse();
    ids.reverse();
    Plan { states, primitive_ids: ids, total_cost: cost, expanded }
}
