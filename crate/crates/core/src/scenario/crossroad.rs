//! Vehicles crossing a four-way intersection, each keeping a safe gap to the
//! closest earlier vehicle whose path crosses its own.
//!
//! A vehicle without such a predecessor is a leader and tracks a reference
//! speed; its state is `v_ref − v_i`. A follower `i` with predecessor `j`
//! has state `(p_j − p_i − d_i, v_j − v_i)`. Inputs are accelerations.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::blockmat::Mat;
use crate::error::{Error, Result};
use crate::game::LqGame;
use crate::rhc::ClosedLoopTrace;

const CONFLICTS: &str = include_str!("../../resources/conflicts.txt");

/// Path-conflict relation between direction labels such as `NS` (enter from
/// the north, leave to the south).
#[derive(Clone, Debug)]
pub struct ConflictTable {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    table: Vec<Vec<bool>>,
}

impl ConflictTable {
    /// Parses the text matrix format: `#` comments, a header row of labels,
    /// then one row per label with `0`/`1` entries.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let labels: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Parse("conflict table has no header".into()))?
            .split_whitespace()
            .map(str::to_owned)
            .collect();
        let index: HashMap<String, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        let mut table = vec![Vec::new(); labels.len()];
        for line in lines {
            let mut parts = line.split_whitespace();
            let label = parts.next().unwrap_or_default();
            let &row = index
                .get(label)
                .ok_or_else(|| Error::Parse(format!("unknown row label {label}")))?;
            table[row] = parts
                .map(|p| match p {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Parse(format!("bad conflict entry {other}"))),
                })
                .collect::<Result<_>>()?;
        }
        let n = labels.len();
        for (i, row) in table.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Parse(format!("row {} has {} entries", labels[i], row.len())));
            }
            for j in 0..n {
                if row[j] != table[j][i] {
                    return Err(Error::Parse(format!(
                        "conflict table not symmetric at {}/{}",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(ConflictTable {
            labels,
            index,
            table,
        })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static ConflictTable {
        static TABLE: OnceLock<ConflictTable> = OnceLock::new();
        TABLE.get_or_init(|| ConflictTable::parse(CONFLICTS).expect("shipped table parses"))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn conflict(&self, a: &str, b: &str) -> Result<bool> {
        let idx = |l: &str| {
            self.index
                .get(l)
                .copied()
                .ok_or_else(|| Error::SpecError(format!("unknown direction {l}")))
        };
        Ok(self.table[idx(a)?][idx(b)?])
    }

    /// For each vehicle, the latest earlier vehicle whose path conflicts
    /// with its own; `None` marks a leader.
    pub fn predecessors(&self, directions: &[String]) -> Result<Vec<Option<usize>>> {
        for d in directions {
            self.conflict(d, d)?;
        }
        (0..directions.len())
            .map(|i| {
                for j in (0..i).rev() {
                    if self.conflict(&directions[i], &directions[j])? {
                        return Ok(Some(j));
                    }
                }
                Ok(None)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossroadParams {
    /// Sampling time in seconds.
    pub tau: f64,
    pub v_ref: f64,
    /// Desired gap to the predecessor.
    pub gap: f64,
    /// Minimum admissible gap.
    pub d_min: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub horizon: usize,
    /// Local pre-stabilizing feedback: each vehicle adds this times the sum
    /// of its own state entries to its input.
    pub prestabilizer_gain: f64,
    /// Initial speed of every vehicle.
    pub initial_speed: f64,
    /// Initial gap excess per position of separation from the predecessor.
    pub initial_gap_step: f64,
}

impl Default for CrossroadParams {
    fn default() -> Self {
        CrossroadParams {
            tau: 0.1,
            v_ref: 10.0,
            gap: 10.0,
            d_min: 5.0,
            v_min: 0.0,
            v_max: 15.0,
            u_min: -3.0,
            u_max: 3.0,
            horizon: 10,
            prestabilizer_gain: 0.1,
            initial_speed: 8.0,
            initial_gap_step: 5.0,
        }
    }
}

/// Crossroad description. `predecessors` (0-based) is derived from the
/// conflict table when absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossroadSpec {
    pub directions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predecessors: Option<Vec<Option<usize>>>,
    #[serde(default)]
    pub params: CrossroadParams,
}

pub const DEFAULT_DIRECTIONS: [&str; 15] = [
    "NS", "ES", "WE", "NW", "WN", "WN", "WS", "NE", "NE", "EW", "NS", "ES", "WS", "SW", "WE",
];

pub fn default_15_vehicle_spec() -> CrossroadSpec {
    CrossroadSpec {
        directions: DEFAULT_DIRECTIONS.iter().map(|s| s.to_string()).collect(),
        predecessors: None,
        params: CrossroadParams::default(),
    }
}

impl CrossroadSpec {
    /// The first `k` vehicles.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.directions.len() {
            return Err(Error::SpecError(format!(
                "cannot select {k} of {} vehicles",
                self.directions.len()
            )));
        }
        Ok(CrossroadSpec {
            directions: self.directions[..k].to_vec(),
            predecessors: self.predecessors.as_ref().map(|p| p[..k].to_vec()),
            params: self.params.clone(),
        })
    }

    pub fn resolved_predecessors(&self) -> Result<Vec<Option<usize>>> {
        let pred = match &self.predecessors {
            Some(p) => p.clone(),
            None => ConflictTable::builtin().predecessors(&self.directions)?,
        };
        if pred.len() != self.directions.len() {
            return Err(Error::SpecError(format!(
                "{} predecessors for {} vehicles",
                pred.len(),
                self.directions.len()
            )));
        }
        for (i, p) in pred.iter().enumerate() {
            if let Some(j) = *p {
                if j >= i {
                    return Err(Error::SpecError(format!(
                        "vehicle {i} follows vehicle {j}; predecessors must arrive earlier"
                    )));
                }
            }
        }
        Ok(pred)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite numbers serialize")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// An assembled crossroad game and the maps back to physical quantities.
#[derive(Clone, Debug)]
pub struct Crossroad {
    pub spec: CrossroadSpec,
    pub predecessors: Vec<Option<usize>>,
    /// Game in the physical inputs, before pre-stabilization.
    pub physical: LqGame<f64>,
    pub prestabilizer: Vec<Mat<f64>>,
    /// Game in the residual inputs; this is the one to compile and simulate.
    pub game: LqGame<f64>,
    /// First state index of each vehicle.
    pub offsets: Vec<usize>,
    /// `v_i = v_ref + velocity_map[i] · x`
    pub velocity_map: Vec<Vec<f64>>,
}

pub fn build_crossroad(spec: &CrossroadSpec) -> Result<Crossroad> {
    let pr = &spec.params;
    if !(pr.tau > 0.0) {
        return Err(Error::SpecError("sampling time must be positive".into()));
    }
    if pr.horizon == 0 {
        return Err(Error::SpecError("horizon must be at least 1".into()));
    }
    let pred = spec.resolved_predecessors()?;
    let na = pred.len();
    if na == 0 {
        return Err(Error::SpecError("no vehicles".into()));
    }
    let dims: Vec<usize> = pred.iter().map(|p| if p.is_some() { 2 } else { 1 }).collect();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let n: usize = dims.iter().sum();
    let tau = pr.tau;
    let half_tau2 = tau * tau / 2.0;

    let mut a = Mat::identity(n);
    let mut b = vec![Mat::zeros(n, 1); na];
    for i in 0..na {
        let o = offsets[i];
        match pred[i] {
            None => b[i][(o, 0)] = -tau,
            Some(j) => {
                a[(o, o + 1)] = tau;
                b[i][(o, 0)] = -half_tau2;
                b[i][(o + 1, 0)] = -tau;
                b[j][(o, 0)] += half_tau2;
                b[j][(o + 1, 0)] += tau;
            }
        }
    }

    let mut velocity_map = vec![vec![0.0; n]; na];
    for i in 0..na {
        let o = offsets[i];
        velocity_map[i] = match pred[i] {
            None => {
                let mut c = vec![0.0; n];
                c[o] = -1.0;
                c
            }
            Some(j) => {
                let mut c = velocity_map[j].clone();
                c[o + 1] -= 1.0;
                c
            }
        };
    }

    // input box on the physical acceleration
    let mut du = vec![Mat::zeros(2 * na, 1); na];
    let mut du_offset = Vec::with_capacity(2 * na);
    for (i, d) in du.iter_mut().enumerate() {
        d[(2 * i, 0)] = 1.0;
        d[(2 * i + 1, 0)] = -1.0;
        du_offset.push(-pr.u_max);
        du_offset.push(pr.u_min);
    }
    // safety distance for followers, speed limits for everyone
    let mut dx_rows: Vec<Vec<f64>> = Vec::new();
    let mut dx_offset = Vec::new();
    for i in 0..na {
        if pred[i].is_some() {
            let mut r = vec![0.0; n];
            r[offsets[i]] = -1.0;
            dx_rows.push(r);
            dx_offset.push(pr.d_min - pr.gap);
        }
    }
    for c in &velocity_map {
        dx_rows.push(c.clone());
        dx_offset.push(pr.v_ref - pr.v_max);
        dx_rows.push(c.iter().map(|v| -v).collect());
        dx_offset.push(pr.v_min - pr.v_ref);
    }
    let dx = Mat::from_rows(&dx_rows)?;

    let physical = LqGame {
        a,
        b,
        q: vec![Mat::identity(n); na],
        r: vec![Mat::scalar(1.0); na],
        du,
        ex: Mat::zeros(2 * na, n),
        du_offset,
        dx,
        dx_offset,
        horizon: pr.horizon,
    }
    .validated()?;
    let prestabilizer: Vec<Mat<f64>> = (0..na)
        .map(|i| {
            let mut k = Mat::zeros(1, n);
            for s in 0..dims[i] {
                k[(0, offsets[i] + s)] = pr.prestabilizer_gain;
            }
            k
        })
        .collect();
    let game = physical.prestabilize(&prestabilizer)?;
    Ok(Crossroad {
        spec: spec.clone(),
        predecessors: pred,
        physical,
        prestabilizer,
        game,
        offsets,
        velocity_map,
    })
}

impl Crossroad {
    pub fn n_vehicles(&self) -> usize {
        self.predecessors.len()
    }

    /// All vehicles at the initial speed; each follower's gap exceeds the
    /// desired one by `initial_gap_step` per position separating it from
    /// its predecessor.
    pub fn default_initial_state(&self) -> Vec<f64> {
        let pr = &self.spec.params;
        let mut x = vec![0.0; self.game.n_states()];
        for (i, p) in self.predecessors.iter().enumerate() {
            let o = self.offsets[i];
            match *p {
                None => x[o] = pr.v_ref - pr.initial_speed,
                Some(j) => x[o] = pr.initial_gap_step * (i - j) as f64,
            }
        }
        x
    }

    pub fn velocity(&self, x: &[f64], i: usize) -> f64 {
        self.spec.params.v_ref
            + self.velocity_map[i]
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Gap to the predecessor; `None` for a leader.
    pub fn distance(&self, x: &[f64], i: usize) -> Option<f64> {
        self.predecessors[i].map(|_| x[self.offsets[i]] + self.spec.params.gap)
    }

    /// Physical accelerations from residual inputs at a state.
    pub fn accelerations(&self, x: &[f64], residual: &[f64]) -> Vec<f64> {
        self.prestabilizer
            .iter()
            .zip(residual)
            .map(|(k, r)| k.matvec(x)[0] + r)
            .collect()
    }

    /// Per-vehicle distance and velocity at every recorded state.
    pub fn distance_velocity_rows(&self, trace: &ClosedLoopTrace<f64>) -> Vec<DistanceVelocityRow> {
        let mut rows = Vec::new();
        for (t, x) in trace.states.iter().enumerate() {
            for agent in 0..self.n_vehicles() {
                rows.push(DistanceVelocityRow {
                    t,
                    agent,
                    distance: self.distance(x, agent),
                    velocity: self.velocity(x, agent),
                });
            }
        }
        rows
    }
}

/// One line of the distance/velocity CSV (`t,agent,distance,velocity`);
/// the distance is empty for leaders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceVelocityRow {
    pub t: usize,
    pub agent: usize,
    pub distance: Option<f64>,
    pub velocity: f64,
}

pub fn write_distance_velocity_csv<W: Write>(w: W, rows: &[DistanceVelocityRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in rows {
        wr.serialize(row)?;
    }
    if rows.is_empty() {
        wr.write_record(["t", "agent", "distance", "velocity"])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_distance_velocity_csv<R: Read>(r: R) -> Result<Vec<DistanceVelocityRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| Ok(row?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dirs: &[&str]) -> CrossroadSpec {
        CrossroadSpec {
            directions: dirs.iter().map(|s| s.to_string()).collect(),
            predecessors: None,
            params: CrossroadParams::default(),
        }
    }

    #[test]
    fn default_precedence() {
        let pred = default_15_vehicle_spec().resolved_predecessors().unwrap();
        assert_eq!(pred[0], None);
        assert_eq!(pred[1], Some(0));
        assert_eq!(pred[3], Some(0));
        assert_eq!(pred.iter().filter(|p| p.is_none()).count(), 1);
        for (i, p) in pred.iter().enumerate().skip(1) {
            assert!(p.unwrap() < i);
        }
    }

    #[test]
    fn single_leader() {
        let c = build_crossroad(&spec(&["NS"])).unwrap();
        assert_eq!(c.physical.a, Mat::scalar(1.0));
        assert_eq!(c.physical.b[0], Mat::scalar(-0.1));
    }

    #[test]
    fn leader_follower_kinematics() {
        let c = build_crossroad(&spec(&["NS", "ES"])).unwrap();
        assert_eq!(c.predecessors, vec![None, Some(0)]);
        let g = &c.physical;
        let close = |a: Vec<f64>, b: [f64; 3]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(g.b[1].col_vec(0), [0.0, -0.005, -0.1]));
        assert!(close(g.b[0].col_vec(0), [-0.1, 0.005, 0.1]));

        // simulate positions and speeds directly
        let tau = 0.1;
        let (mut p0, mut v0, mut p1, mut v1) = (30.0, 9.0, 12.0, 7.5);
        let state = |p0: f64, v0: f64, p1: f64, v1: f64| vec![10.0 - v0, p0 - p1 - 10.0, v0 - v1];
        let mut x = state(p0, v0, p1, v1);
        for k in 0..5 {
            let (a0, a1) = (0.3 * k as f64 - 0.5, 1.0 - 0.2 * k as f64);
            x = g.step(&x, &[vec![a0], vec![a1]]);
            p0 += tau * v0 + tau * tau / 2.0 * a0;
            v0 += tau * a0;
            p1 += tau * v1 + tau * tau / 2.0 * a1;
            v1 += tau * a1;
            let expect = state(p0, v0, p1, v1);
            for (a, b) in x.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((c.velocity(&x, 1) - v1).abs() < 1e-12);
            assert!((c.distance(&x, 1).unwrap() - (p0 - p1)).abs() < 1e-12);
        }
    }

    #[test]
    fn prestabilized_dynamics_are_schur() {
        let c = build_crossroad(&default_15_vehicle_spec()).unwrap();
        let rho = crate::linalg::spectral_radius(&c.game.a).unwrap();
        assert!(rho < 1.0, "{rho}");
    }

    #[test]
    fn bad_precedence_rejected() {
        let mut s = spec(&["NS", "ES"]);
        s.predecessors = Some(vec![Some(1), None]);
        assert!(matches!(build_crossroad(&s), Err(Error::SpecError(_))));
        assert!(matches!(build_crossroad(&spec(&["XY"])), Err(Error::SpecError(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let s = default_15_vehicle_spec();
        assert_eq!(CrossroadSpec::from_json(&s.to_json()).unwrap(), s);
        let short = CrossroadSpec::from_json(r#"{"directions":["NS","ES"]}"#).unwrap();
        assert_eq!(short.params, CrossroadParams::default());
    }
}
