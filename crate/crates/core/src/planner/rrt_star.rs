use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::sim::{Point, WorldMap};

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub max_iterations: usize,
    /// Steering step, m.
    pub step: f64,
    /// Rewire constant; `None` derives `2 sqrt(1.5 area / pi)` from the map.
    pub gamma: Option<f64>,
    pub goal_bias: f64,
    pub goal_tolerance: f64,
    /// Obstacle inflation used for collision checks, m.
    pub clearance: f64,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            step: 0.5,
            gamma: None,
            goal_bias: 0.05,
            goal_tolerance: 0.3,
            clearance: 0.4,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidArgument(format!("planner step must be > 0, got {}", self.step)));
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(Error::InvalidArgument(format!("goal bias must lie in [0, 1), got {}", self.goal_bias)));
        }
        if !(self.goal_tolerance >= 0.0) || !(self.clearance >= 0.0) {
            return Err(Error::InvalidArgument("goal tolerance and clearance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Search tree: node positions, parent links and cost-to-come.
#[derive(Debug, Clone, Default)]
pub struct PlanTree {
    pub nodes: Vec<Point>,
    pub parent: Vec<Option<usize>>,
    pub cost: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl PlanTree {
    fn with_root(root: Point) -> Self {
        Self {
            nodes: vec![root],
            parent: vec![None],
            cost: vec![0.0],
            children: vec![Vec::new()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, p: Point, parent: usize) -> usize {
        let id = self.nodes.len();
        self.cost.push(self.cost[parent] + self.nodes[parent].distance(p));
        self.nodes.push(p);
        self.parent.push(Some(parent));
        self.children.push(Vec::new());
        self.children[parent].push(id);
        id
    }

    fn reparent(&mut self, node: usize, new_parent: usize) {
        if let Some(old) = self.parent[node] {
            self.children[old].retain(|&c| c != node);
        }
        self.parent[node] = Some(new_parent);
        self.children[new_parent].push(node);
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            let p = self.parent[n].expect("non-root");
            self.cost[n] = self.cost[p] + self.nodes[p].distance(self.nodes[n]);
            stack.extend_from_slice(&self.children[n]);
        }
    }

    /// Root-to-node waypoint list.
    pub fn branch(&self, mut node: usize) -> Vec<Point> {
        let mut out = vec![self.nodes[node]];
        while let Some(p) = self.parent[node] {
            out.push(self.nodes[p]);
            node = p;
        }
        out.reverse();
        out
    }

    /// Largest deviation between stored costs and costs recomputed by walking
    /// parent links to the root; `None` if a parent chain is cyclic.
    pub fn cost_inconsistency(&self) -> Option<f64> {
        let mut worst = 0.0f64;
        for start in 0..self.len() {
            let mut total = 0.0;
            let mut node = start;
            let mut hops = 0;
            while let Some(p) = self.parent[node] {
                total += self.nodes[p].distance(self.nodes[node]);
                node = p;
                hops += 1;
                if hops > self.len() {
                    return None;
                }
            }
            if node != 0 {
                return None;
            }
            worst = worst.max((total - self.cost[start]).abs());
        }
        Some(worst)
    }

    /// Plain-text dump: one `node id x y parent cost` line per node.
    pub fn dump(&self) -> String {
        let mut out = String::from("# node id x y parent cost\n");
        for i in 0..self.len() {
            let parent = self.parent[i].map_or(-1, |p| p as i64);
            let _ = writeln!(out, "node {i} {} {} {parent} {}", self.nodes[i].x, self.nodes[i].y, self.cost[i]);
        }
        out
    }
}

/// Outcome of a planning query.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanResult {
    /// Waypoints from start to goal and their total length.
    Path { waypoints: Vec<Point>, cost: f64 },
    Infeasible,
}

impl PlanResult {
    pub fn waypoints(&self) -> Option<&[Point]> {
        match self {
            PlanResult::Path { waypoints, .. } => Some(waypoints),
            PlanResult::Infeasible => None,
        }
    }

    pub fn cost(&self) -> Option<f64> {
        match self {
            PlanResult::Path { cost, .. } => Some(*cost),
            PlanResult::Infeasible => None,
        }
    }
}

/// Incremental RRT* search.
pub struct RrtStar<'a> {
    map: &'a WorldMap,
    cfg: PlannerConfig,
    goal: Point,
    gamma: f64,
    tree: PlanTree,
    /// Nodes within goal tolerance whose final segment to the goal is free.
    goal_nodes: Vec<usize>,
    rng: StreamRng,
    iterations: usize,
}

impl<'a> RrtStar<'a> {
    pub fn new(map: &'a WorldMap, start: Point, goal: Point, cfg: &PlannerConfig) -> Result<Self> {
        cfg.validate()?;
        for (what, p) in [("start", start), ("goal", goal)] {
            if !map.is_free(p, cfg.clearance) {
                return Err(Error::InvalidArgument(format!(
                    "{what} ({}, {}) is not collision-free",
                    p.x, p.y
                )));
            }
        }
        let area = map.bounds().area();
        let gamma = cfg
            .gamma
            .unwrap_or_else(|| 2.0 * (1.5 * area / std::f64::consts::PI).sqrt());
        let mut search = Self {
            map,
            cfg: cfg.clone(),
            goal,
            gamma,
            tree: PlanTree::with_root(start),
            goal_nodes: Vec::new(),
            rng: rng::stream(cfg.seed, "planner"),
            iterations: 0,
        };
        search.consider_goal_node(0);
        Ok(search)
    }

    pub fn tree(&self) -> &PlanTree {
        &self.tree
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn consider_goal_node(&mut self, id: usize) {
        let p = self.tree.nodes[id];
        if p.distance(self.goal) <= self.cfg.goal_tolerance
            && self.map.segment_is_free(p, self.goal, self.cfg.clearance)
        {
            self.goal_nodes.push(id);
        }
    }

    fn nearest(&self, p: Point) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.tree.nodes.iter().enumerate() {
            let d = n.distance(p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn radius(&self) -> f64 {
        let n = (self.tree.len() + 1) as f64;
        (self.gamma * (n.ln() / n).sqrt()).min(self.cfg.step)
    }

    /// One sample-steer-connect-rewire round.
    pub fn iterate(&mut self) {
        self.iterations += 1;
        let bounds = self.map.bounds();
        let sample = if self.rng.random::<f64>() < self.cfg.goal_bias {
            self.goal
        } else {
            Point::new(
                self.rng.random_range(bounds.x0..bounds.x1),
                self.rng.random_range(bounds.y0..bounds.y1),
            )
        };
        let nearest = self.nearest(sample);
        let from = self.tree.nodes[nearest];
        let d = from.distance(sample);
        if d == 0.0 {
            return;
        }
        let new = if d <= self.cfg.step {
            sample
        } else {
            from.lerp(sample, self.cfg.step / d)
        };
        let clearance = self.cfg.clearance;
        if !self.map.segment_is_free(from, new, clearance) {
            return;
        }

        let radius = self.radius();
        let near: Vec<usize> = (0..self.tree.len())
            .filter(|&i| self.tree.nodes[i].distance(new) <= radius)
            .collect();

        let mut parent = nearest;
        let mut best = self.tree.cost[nearest] + d.min(self.cfg.step);
        for &i in &near {
            let c = self.tree.cost[i] + self.tree.nodes[i].distance(new);
            if c < best && self.map.segment_is_free(self.tree.nodes[i], new, clearance) {
                parent = i;
                best = c;
            }
        }
        let id = self.tree.push(new, parent);

        for &i in &near {
            if i == parent {
                continue;
            }
            let c = self.tree.cost[id] + new.distance(self.tree.nodes[i]);
            if c < self.tree.cost[i] && self.map.segment_is_free(new, self.tree.nodes[i], clearance) {
                self.tree.reparent(i, id);
            }
        }
        self.consider_goal_node(id);
    }

    /// Cheapest start-to-goal path found so far.
    pub fn best(&self) -> PlanResult {
        let best = self
            .goal_nodes
            .iter()
            .map(|&i| (i, self.tree.cost[i] + self.tree.nodes[i].distance(self.goal)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            None => PlanResult::Infeasible,
            Some((i, cost)) => {
                let mut waypoints = self.tree.branch(i);
                if waypoints.last() != Some(&self.goal) {
                    waypoints.push(self.goal);
                }
                PlanResult::Path { waypoints, cost }
            }
        }
    }
}

/// Runs RRT* for `max_iterations` and returns the minimum-cost path.
pub fn plan(start: Point, goal: Point, map: &WorldMap, cfg: &PlannerConfig) -> Result<PlanResult> {
    let mut search = RrtStar::new(map, start, goal, cfg)?;
    if start == goal {
        return Ok(search.best());
    }
    for _ in 0..cfg.max_iterations {
        search.iterate();
    }
    Ok(search.best())
}

/// Resamples a polyline every `spacing` meters of arc length; the final
/// point is always included.
pub fn extract_subgoals(path: &[Point], spacing: f64) -> Result<Vec<Point>> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("sub-goal spacing must be > 0, got {spacing}")));
    }
    let Some(&last) = path.last() else {
        return Err(Error::InvalidArgument("empty path".into()));
    };
    let total: f64 = path.windows(2).map(|w| w[0].distance(w[1])).sum();
    let mut out = Vec::new();
    let mut k = 1usize;
    let mut travelled = 0.0;
    for w in path.windows(2) {
        let len = w[0].distance(w[1]);
        while len > 0.0 {
            let target = k as f64 * spacing;
            if target >= total - 1e-9 || target > travelled + len {
                break;
            }
            out.push(w[0].lerp(w[1], (target - travelled) / len));
            k += 1;
        }
        travelled += len;
    }
    out.push(last);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Rect;

    fn empty_map() -> WorldMap {
        WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![]).unwrap()
    }

    #[test]
    fn start_equal_goal_is_trivial() {
        let p = Point::new(2.0, 2.0);
        let r = plan(p, p, &empty_map(), &PlannerConfig::default()).unwrap();
        assert_eq!(r, PlanResult::Path { waypoints: vec![p], cost: 0.0 });
    }

    #[test]
    fn separating_wall_is_infeasible() {
        let map = WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![Rect::new(4.5, 0.0, 5.5, 10.0)]).unwrap();
        let cfg = PlannerConfig {
            max_iterations: 1500,
            ..Default::default()
        };
        let r = plan(Point::new(1.0, 1.0), Point::new(9.0, 9.0), &map, &cfg).unwrap();
        assert_eq!(r, PlanResult::Infeasible);
    }

    #[test]
    fn rejects_colliding_endpoints() {
        let map = WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![Rect::new(4.0, 4.0, 6.0, 6.0)]).unwrap();
        assert!(plan(Point::new(5.0, 5.0), Point::new(9.0, 9.0), &map, &PlannerConfig::default()).is_err());
    }

    #[test]
    fn subgoals_on_a_straight_path() {
        let path = [Point::new(0.0, 0.0), Point::new(4.0, 0.0)];
        let sg = extract_subgoals(&path, 1.0).unwrap();
        let xs: Vec<f64> = sg.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn subgoals_across_corners() {
        let path = [Point::new(0.0, 0.0), Point::new(1.5, 0.0), Point::new(1.5, 2.0)];
        let sg = extract_subgoals(&path, 1.0).unwrap();
        assert_eq!(sg.len(), 4);
        assert!((sg[1].x - 1.5).abs() < 1e-12 && (sg[1].y - 0.5).abs() < 1e-12);
        assert_eq!(sg[3], Point::new(1.5, 2.0));
    }

    #[test]
    fn short_path_yields_only_goal() {
        let path = [Point::new(0.0, 0.0), Point::new(0.5, 0.0)];
        assert_eq!(extract_subgoals(&path, 1.0).unwrap(), vec![Point::new(0.5, 0.0)]);
        assert!(extract_subgoals(&path, 0.0).is_err());
        assert!(extract_subgoals(&[], 1.0).is_err());
    }

    #[test]
    fn costs_stay_consistent_through_rewiring() {
        let map = WorldMap::bundled();
        let cfg = PlannerConfig {
            seed: 9,
            ..Default::default()
        };
        let mut search = RrtStar::new(&map, Point::new(1.0, 1.0), Point::new(7.0, 7.0), &cfg).unwrap();
        for _ in 0..300 {
            search.iterate();
            assert!(search.tree().cost_inconsistency().unwrap() < 1e-9);
        }
    }
}
