//! Scenario outcome scoring shared by the commands and the acceptance suite.

use serde::{Deserialize, Serialize};

use vine_core::localization::DeadReckoningMode;
use vine_core::simulator::{localize_run, run_scenario, NoiseModel, ScenarioConfig, ScenarioRun, ScriptVariant};
use vine_core::Polyline;

use crate::CliError;

/// Junction points closer than this to the body polyline count as passed.
pub const PASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    /// Branch index chosen at each junction reached, in order.
    pub choices: Vec<usize>,
    /// Turn angle of each choice, degrees; 0 is straight on.
    pub angles_deg: Vec<f64>,
    pub turns: usize,
    /// Junctions where the body runs through both the junction point and
    /// the start of the chosen branch.
    pub passed_through: usize,
    pub exit_segment: String,
}

impl BranchOutcome {
    pub fn straight_through(&self) -> bool {
        self.turns == 0
    }
}

pub fn branch_outcome(run: &ScenarioRun) -> BranchOutcome {
    let net = &run.network;
    let body: Polyline = run.final_state.body_polyline();
    let on_body = |p: &_| body.distance_to(p).is_some_and(|d| d <= PASS_TOLERANCE);
    let mut out = BranchOutcome {
        choices: Vec::new(),
        angles_deg: Vec::new(),
        turns: 0,
        passed_through: 0,
        exit_segment: String::new(),
    };
    for rj in run.route.junctions() {
        let j = &net.junctions[rj.junction];
        let angle = j.angles_deg[rj.branch];
        let branch_start = net.segments[j.branches[rj.branch]].start;
        out.choices.push(rj.branch);
        out.angles_deg.push(angle);
        if angle != 0.0 {
            out.turns += 1;
        }
        // a junction the tip has not yet left does not count
        if run.final_state.route_position > rj.s && on_body(&j.position) && on_body(&branch_start) {
            out.passed_through += 1;
        }
    }
    if let Some(&last) = run.route.segments().last() {
        out.exit_segment = net.segments[last].id.clone();
    }
    out
}

/// Whether the tip ended inside the branch that turns upward.
pub fn climbed(run: &ScenarioRun) -> bool {
    let net = &run.network;
    let Some(rj) = run.route.junctions().first() else {
        return false;
    };
    let segment = &net.segments[net.junctions[rj.junction].branches[rj.branch]];
    let up = segment.axis().z > 0.0;
    let tip = run.final_state.tip_position();
    let entered = run.final_state.route_position > rj.s && net.contains(&tip).inside;
    up && entered && tip.z > net.junctions[rj.junction].position.z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimbStats {
    pub runs: usize,
    pub successes: usize,
}

/// Runs the climb `runs` times with consecutive seeds from `seed`.
pub fn climb_trials(variant: ScriptVariant, seed: u64, runs: usize, base: &ScenarioConfig) -> Result<ClimbStats, CliError> {
    let mut successes = 0;
    for k in 0..runs as u64 {
        let cfg = ScenarioConfig {
            preset: "climb45".into(),
            seed: seed + k,
            variant,
            ..base.clone()
        };
        if climbed(&run_scenario(&cfg)?) {
            successes += 1;
        }
    }
    Ok(ClimbStats { runs, successes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub runs: usize,
    /// Runs where heading mode had the lower mean tracking error.
    pub heading_wins: usize,
    pub heading_mean: Vec<f64>,
    pub velocity_mean: Vec<f64>,
}

/// Localizes `runs` noisy runs of `preset` in both dead-reckoning modes.
pub fn monte_carlo(
    preset: &str,
    noise: NoiseModel,
    seed: u64,
    runs: usize,
    base: &ScenarioConfig,
) -> Result<MonteCarloResult, CliError> {
    let mut out = MonteCarloResult {
        runs,
        heading_wins: 0,
        heading_mean: Vec::with_capacity(runs),
        velocity_mean: Vec::with_capacity(runs),
    };
    for k in 0..runs as u64 {
        let cfg = ScenarioConfig {
            preset: preset.into(),
            seed: seed + k,
            noise,
            ..base.clone()
        };
        let run = run_scenario(&cfg)?;
        let h = localize_run(&run, DeadReckoningMode::Heading)?.error.mean;
        let v = localize_run(&run, DeadReckoningMode::Velocity)?.error.mean;
        if h < v {
            out.heading_wins += 1;
        }
        out.heading_mean.push(h);
        out.velocity_mean.push(v);
    }
    Ok(out)
}
