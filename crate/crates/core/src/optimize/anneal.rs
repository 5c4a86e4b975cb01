use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::moves::{donor_stays_connected, foreign_neighbors};
use super::{finish, Context, Scratch, SearchStats, SolveResult, SolverConfig, State};
use crate::district::{BlockId, District, SchoolId, Zoning};
use crate::error::Result;
use crate::scenario::ScenarioTable;

/// Emitted by [`local_search_optimize_with`] as the search progresses.
#[derive(Debug)]
pub enum SearchEvent<'a> {
    /// A move was accepted; `zoning` is the new current state.
    Accepted {
        restart: usize,
        zoning: &'a Zoning,
        objective: f64,
    },
    /// The restart's incumbent improved.
    Incumbent {
        restart: usize,
        zoning: &'a Zoning,
        objective: f64,
    },
}

/// Simulated annealing from the status quo. Restarts run in parallel with
/// independent streams of `config.seed`; the best incumbent wins.
pub fn local_search_optimize(district: &District, table: &ScenarioTable, config: &SolverConfig) -> Result<SolveResult> {
    local_search_optimize_with(district, table, config, &|_| {})
}

pub fn local_search_optimize_with(
    district: &District,
    table: &ScenarioTable,
    config: &SolverConfig,
    observer: &(dyn Fn(&SearchEvent<'_>) + Sync),
) -> Result<SolveResult> {
    config.validate()?;
    let started = Instant::now();
    let ctx = Context::new(district, table, &config.params()?)?;
    let start = State::new(&ctx, district.status_quo());
    let t0 = match config.initial_temperature {
        Some(t) => t,
        None => calibrate_temperature(&ctx, &start, config.seed),
    };
    let runs: Vec<(State, SearchStats)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| anneal(&ctx, &start, config, t0, r, started, observer))
        .collect();
    let mut stats = SearchStats::default();
    let mut best = &start;
    for (state, s) in &runs {
        stats.absorb(s);
        if state.better_than(best) {
            best = state;
        }
    }
    let restart_objectives = runs.iter().map(|(s, _)| s.objective).collect();
    let mut result = finish(&ctx, best.clone(), restart_objectives, stats, started)?;
    result.initial_temperature = Some(t0);
    Ok(result)
}

/// Proposals drawn to calibrate the temperature.
const CALIBRATION_SAMPLES: usize = 256;
/// Used when no feasible move is found during calibration.
const FALLBACK_TEMPERATURE: f64 = 1e-3;

/// Reusable buffers for drawing one proposal.
struct Proposer {
    movable: Vec<usize>,
    scratch: Scratch,
    seen: Vec<bool>,
    queue: VecDeque<BlockId>,
    targets: Vec<SchoolId>,
}

enum Proposal {
    NoCandidate,
    Disconnects,
    OutOfBounds,
    Feasible { block: usize, to: SchoolId, objective: f64 },
}

impl Proposer {
    fn new(ctx: &Context<'_>) -> Self {
        let n = ctx.district.n_blocks();
        Proposer {
            movable: (0..n).filter(|&b| !ctx.is_campus[b]).collect(),
            scratch: Scratch::default(),
            seen: vec![false; n],
            queue: VecDeque::new(),
            targets: Vec::new(),
        }
    }

    /// Draws a random non-campus block and a random admissible neighbouring
    /// school, then checks the move. On `Feasible` the scratch holds the
    /// evaluation for [`State::apply`].
    fn propose(&mut self, ctx: &Context<'_>, state: &State, rng: &mut ChaCha8Rng) -> Proposal {
        let district = ctx.district;
        let b = self.movable[rng.random_range(0..self.movable.len())];
        let block = BlockId::from_index(b);
        foreign_neighbors(&state.zoning, district, block, &mut self.targets);
        self.targets.retain(|&s| ctx.admissible(b, s));
        if self.targets.is_empty() {
            return Proposal::NoCandidate;
        }
        let to = self.targets[rng.random_range(0..self.targets.len())];
        let from = state.zoning.as_slice()[b];
        let size = state.zone_size[from.index()];
        if !donor_stays_connected(&state.zoning, district, block, size, &mut self.seen, &mut self.queue) {
            return Proposal::Disconnects;
        }
        match state.evaluate(ctx, b, to, true, &mut self.scratch) {
            Some(objective) => Proposal::Feasible { block: b, to, objective },
            None => Proposal::OutOfBounds,
        }
    }
}

/// Mean |Δ| over ln 2 along a random walk from the status quo that accepts
/// every feasible proposal.
fn calibrate_temperature(ctx: &Context<'_>, start: &State, seed: u64) -> f64 {
    let mut proposer = Proposer::new(ctx);
    if proposer.movable.is_empty() {
        return FALLBACK_TEMPERATURE;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut state = start.clone();
    let (mut sum, mut n) = (0.0, 0usize);
    for _ in 0..CALIBRATION_SAMPLES {
        if let Proposal::Feasible { block, to, objective } = proposer.propose(ctx, &state, &mut rng) {
            let delta = (objective - state.objective).abs();
            if delta > 0.0 {
                sum += delta;
                n += 1;
            }
            state.apply(ctx, block, to, &proposer.scratch);
        }
    }
    if n == 0 {
        FALLBACK_TEMPERATURE
    } else {
        sum / n as f64 / std::f64::consts::LN_2
    }
}

fn anneal(
    ctx: &Context<'_>,
    start: &State,
    config: &SolverConfig,
    t0: f64,
    restart: usize,
    started: Instant,
    observer: &(dyn Fn(&SearchEvent<'_>) + Sync),
) -> (State, SearchStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let mut proposer = Proposer::new(ctx);
    let per_level = config.moves_per_temperature.unwrap_or(2 * ctx.district.n_blocks()).max(1);
    let max_iter = config.max_iterations.unwrap_or(u64::MAX);
    let t_min = t0 * config.final_temperature_ratio;

    let mut stats = SearchStats::default();
    let mut state = start.clone();
    let mut best = start.clone();
    let mut temperature = t0;

    'levels: while temperature >= t_min && !proposer.movable.is_empty() {
        stats.temperature_levels += 1;
        for _ in 0..per_level {
            if stats.proposals >= max_iter {
                break 'levels;
            }
            if stats.proposals % 256 == 0 && started.elapsed().as_secs_f64() > config.time_limit_secs {
                stats.timed_out = true;
                break 'levels;
            }
            stats.proposals += 1;
            let (b, to, objective) = match proposer.propose(ctx, &state, &mut rng) {
                Proposal::NoCandidate => {
                    stats.no_candidate += 1;
                    continue;
                }
                Proposal::Disconnects => {
                    stats.rejected_contiguity += 1;
                    continue;
                }
                Proposal::OutOfBounds => {
                    stats.rejected_population += 1;
                    continue;
                }
                Proposal::Feasible { block, to, objective } => (block, to, objective),
            };
            let delta = objective - state.objective;
            let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp();
            if !accept {
                stats.rejected_metropolis += 1;
                continue;
            }
            state.apply(ctx, b, to, &proposer.scratch);
            stats.accepted += 1;
            observer(&SearchEvent::Accepted {
                restart,
                zoning: &state.zoning,
                objective: state.objective,
            });
            if state.better_than(&best) {
                best.clone_from(&state);
                stats.improvements += 1;
                observer(&SearchEvent::Incumbent {
                    restart,
                    zoning: &best.zoning,
                    objective: best.objective,
                });
            }
        }
        temperature *= config.cooling;
    }
    (best, stats)
}
