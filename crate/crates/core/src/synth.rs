//! Synthetic districts.
//!
//! Blocks are cells of a jittered rectangular grid with rook adjacency.
//! SES is a Gaussian blur of white noise thresholded into student-weighted
//! terciles. Status-quo zones grow greedily from campus blocks, so they are
//! contiguous by construction. Historical choice labels come from a latent
//! utility model whose zoned-school and magnet coefficients are calibrated
//! by bisection to hit the requested follow rate and magnet opt-out share.
//!
//! Randomness comes from one ChaCha8 generator seeded with `seed`, drawn in
//! a fixed order: blocks, then schools, then students. Label simulation uses
//! stream 1 of the same seed.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::choice::nearest_schools;
use crate::district::{
    Block, BlockId, Cell, District, History, Race, Ratings, School, SchoolId, Student, StudentId,
    LOWER_SES,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub n_blocks: usize,
    pub n_schools: usize,
    pub n_magnets: usize,
    pub n_students: usize,
    pub n_choice_zones: usize,
    /// Length scale (km) of the SES blur.
    pub ses_correlation_length: f64,
    /// Share of students attending their zoned school.
    pub follow_rate_target: f64,
    /// Share of students attending a magnet other than their zoned school.
    /// `None` keeps `beta_magnet` fixed.
    pub magnet_share_target: Option<f64>,
    pub seed: u64,

    pub cell_km: f64,
    pub empty_block_share: f64,
    pub speed_kmh: f64,
    pub fixed_minutes: f64,

    /// Utility per minute of travel (subtracted).
    pub beta_travel: f64,
    pub beta_magnet: f64,
    pub beta_same_zone: f64,
    pub beta_rating: f64,
    /// Scale of the persistent per-student taste shared across years.
    pub taste_scale: f64,
    /// Extra utility of leaving the zoned school, by SES category.
    pub optout_bias_by_ses: [f64; 3],
    pub new_student_share: f64,
    pub sibling_share: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n_blocks: 400,
            n_schools: 8,
            n_magnets: 2,
            n_students: 3000,
            n_choice_zones: 3,
            ses_correlation_length: 1.5,
            follow_rate_target: 0.65,
            magnet_share_target: Some(0.20),
            seed: 42,
            cell_km: 0.5,
            empty_block_share: 0.1,
            speed_kmh: 30.0,
            fixed_minutes: 2.0,
            beta_travel: 0.15,
            beta_magnet: 1.0,
            beta_same_zone: 0.6,
            beta_rating: 1.0,
            taste_scale: 2.0,
            optout_bias_by_ses: [0.0; 3],
            new_student_share: 0.15,
            sibling_share: 0.35,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_blocks == 0 || self.n_schools == 0 {
            return fail("need at least one block and one school".into());
        }
        if self.n_schools > self.n_blocks {
            return fail(format!("{} schools cannot have distinct campuses on {} blocks", self.n_schools, self.n_blocks));
        }
        if self.n_magnets > self.n_schools {
            return fail(format!("{} magnets exceed {} schools", self.n_magnets, self.n_schools));
        }
        if self.n_students < 2 {
            return fail("need at least two students".into());
        }
        if self.n_choice_zones == 0 || self.n_choice_zones > self.n_schools {
            return fail(format!("choice zone count {} must lie in 1..={}", self.n_choice_zones, self.n_schools));
        }
        if !(self.follow_rate_target > 0.0 && self.follow_rate_target < 1.0) {
            return fail(format!("follow_rate_target {} must lie in (0, 1)", self.follow_rate_target));
        }
        if let Some(m) = self.magnet_share_target {
            if !(0.0..1.0).contains(&m) {
                return fail(format!("magnet_share_target {m} must lie in [0, 1)"));
            }
            if self.n_magnets == 0 && m > 0.0 {
                return fail("magnet_share_target needs at least one magnet".into());
            }
        }
        if !(self.ses_correlation_length > 0.0 && self.cell_km > 0.0 && self.speed_kmh > 0.0) {
            return fail("lengths and speeds must be positive".into());
        }
        if !(self.fixed_minutes > 0.0) {
            return fail("fixed_minutes must be positive so every travel time is positive".into());
        }
        if !(0.0..1.0).contains(&self.empty_block_share) {
            return fail("empty_block_share must lie in [0, 1)".into());
        }
        Ok(())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

struct Geometry {
    centroids: Vec<[f64; 2]>,
    cells: Vec<Cell>,
    neighbors: Vec<Vec<BlockId>>,
    ses_index: Vec<f64>,
    weights: Vec<f64>,
}

fn build_blocks(p: &GenParams, rng: &mut ChaCha8Rng) -> Geometry {
    let n = p.n_blocks;
    let rows = (n as f64).sqrt().floor().max(1.0) as usize;
    let cols = n.div_ceil(rows);
    let h = p.cell_km;
    let mut centroids = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n);
    let mut neighbors = vec![Vec::new(); n];
    for k in 0..n {
        let (r, c) = (k / cols, k % cols);
        let min = [c as f64 * h, r as f64 * h];
        let jx: f64 = rng.random_range(-0.25..0.25);
        let jy: f64 = rng.random_range(-0.25..0.25);
        centroids.push([min[0] + (0.5 + jx) * h, min[1] + (0.5 + jy) * h]);
        cells.push(Cell {
            min,
            max: [min[0] + h, min[1] + h],
        });
        if c + 1 < cols && k + 1 < n {
            neighbors[k].push(BlockId::from_index(k + 1));
            neighbors[k + 1].push(BlockId::from_index(k));
        }
        if k + cols < n {
            neighbors[k].push(BlockId::from_index(k + cols));
            neighbors[k + cols].push(BlockId::from_index(k));
        }
    }
    for nb in neighbors.iter_mut() {
        nb.sort();
    }

    let noise: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let two_l2 = 2.0 * p.ses_correlation_length.powi(2);
    let ses_index = (0..n)
        .map(|a| {
            let (mut num, mut den) = (0.0, 0.0);
            for (b, z) in noise.iter().enumerate() {
                let w = (-dist(centroids[a], centroids[b]).powi(2) / two_l2).exp();
                num += w * z;
                den += w;
            }
            num / den
        })
        .collect();

    let density = LogNormal::new(0.0, 0.6).expect("valid lognormal");
    let weights = (0..n)
        .map(|_| {
            let empty = rng.random::<f64>() < p.empty_block_share;
            let w = density.sample(rng);
            if empty {
                0.0
            } else {
                w
            }
        })
        .collect();

    Geometry {
        centroids,
        cells,
        neighbors,
        ses_index,
        weights,
    }
}

/// Weighted Lloyd iterations from a farthest-point start; each center snaps
/// to a distinct block.
fn place_campuses(p: &GenParams, g: &Geometry, rng: &mut ChaCha8Rng) -> Vec<BlockId> {
    let n = p.n_blocks;
    let mut centers: Vec<[f64; 2]> = vec![g.centroids[rng.random_range(0..n)]];
    while centers.len() < p.n_schools {
        let far = (0..n)
            .max_by(|&a, &b| {
                let da = centers.iter().map(|c| dist(*c, g.centroids[a])).fold(f64::INFINITY, f64::min);
                let db = centers.iter().map(|c| dist(*c, g.centroids[b])).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("non-empty");
        centers.push(g.centroids[far]);
    }
    for _ in 0..15 {
        let mut acc = vec![[0.0f64; 3]; centers.len()];
        for b in 0..n {
            let w = g.weights[b] + 0.05;
            let k = nearest_center(&centers, g.centroids[b]);
            acc[k][0] += w * g.centroids[b][0];
            acc[k][1] += w * g.centroids[b][1];
            acc[k][2] += w;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[2] > 0.0 {
                *c = [a[0] / a[2], a[1] / a[2]];
            }
        }
    }
    let mut taken = vec![false; n];
    centers
        .iter()
        .map(|c| {
            let b = (0..n)
                .filter(|&b| !taken[b])
                .min_by(|&a, &b| dist(*c, g.centroids[a]).total_cmp(&dist(*c, g.centroids[b])).then(a.cmp(&b)))
                .expect("more blocks than schools");
            taken[b] = true;
            BlockId::from_index(b)
        })
        .collect()
}

fn nearest_center(centers: &[[f64; 2]], x: [f64; 2]) -> usize {
    (0..centers.len())
        .min_by(|&a, &b| dist(centers[a], x).total_cmp(&dist(centers[b], x)).then(a.cmp(&b)))
        .expect("non-empty")
}

/// Farthest-point selection among `points` starting from `first`.
fn spread_subset(points: &[[f64; 2]], k: usize, first: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(k);
    if k == 0 {
        return chosen;
    }
    chosen.push(first);
    while chosen.len() < k {
        let next = (0..points.len())
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| {
                let da = chosen.iter().map(|&c| dist(points[c], points[a])).fold(f64::INFINITY, f64::min);
                let db = chosen.iter().map(|&c| dist(points[c], points[b])).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= points");
        chosen.push(next);
    }
    chosen
}

/// Capacity-balanced region growing: the zone with the most remaining
/// capacity absorbs its nearest unassigned adjacent block.
fn grow_zones(
    neighbors: &[Vec<BlockId>],
    travel: &[Vec<f64>],
    population: &[usize],
    campuses: &[BlockId],
    capacity: &[f64],
) -> Result<Vec<SchoolId>> {
    let n = neighbors.len();
    let mut zone: Vec<Option<SchoolId>> = vec![None; n];
    let mut pop = vec![0usize; campuses.len()];
    for (s, c) in campuses.iter().enumerate() {
        zone[c.index()] = Some(SchoolId::from_index(s));
        pop[s] += population[c.index()];
    }
    let mut remaining = n - campuses.len();
    while remaining > 0 {
        let mut best: Option<(usize, usize)> = None;
        let mut order: Vec<usize> = (0..campuses.len()).collect();
        order.sort_by(|&a, &b| {
            (capacity[b] - pop[b] as f64).total_cmp(&(capacity[a] - pop[a] as f64)).then(a.cmp(&b))
        });
        for s in order {
            let frontier = (0..n).filter(|&b| {
                zone[b].is_none()
                    && neighbors[b].iter().any(|nb| zone[nb.index()] == Some(SchoolId::from_index(s)))
            });
            if let Some(b) = frontier.min_by(|&a, &b| travel[a][s].total_cmp(&travel[b][s]).then(a.cmp(&b))) {
                best = Some((s, b));
                break;
            }
        }
        let (s, b) = best.ok_or_else(|| Error::Config("block graph is disconnected".into()))?;
        zone[b] = Some(SchoolId::from_index(s));
        pop[s] += population[b];
        remaining -= 1;
    }
    Ok(zone.into_iter().map(|z| z.expect("all assigned")).collect())
}

fn race_for(ses: u8, rng: &mut ChaCha8Rng) -> Race {
    const MIX: [[f64; 7]; 3] = [
        [0.40, 0.15, 0.02, 0.01, 0.36, 0.01, 0.05],
        [0.30, 0.32, 0.03, 0.01, 0.28, 0.00, 0.06],
        [0.16, 0.53, 0.05, 0.005, 0.18, 0.005, 0.07],
    ];
    let idx = WeightedIndex::new(MIX[ses as usize]).expect("valid weights").sample(rng);
    Race::ALL[idx]
}

/// Builds a district and simulates its historical choice labels.
pub fn generate_district(params: &GenParams) -> Result<District> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_blocks = params.n_blocks;
    let n_schools = params.n_schools;

    // blocks
    let g = build_blocks(params, &mut rng);

    // schools
    let campuses = place_campuses(params, &g, &mut rng);
    let campus_pts: Vec<[f64; 2]> = campuses.iter().map(|c| g.centroids[c.index()]).collect();
    let magnet_set = if params.n_magnets > 0 {
        spread_subset(&campus_pts, params.n_magnets, rng.random_range(0..n_schools))
    } else {
        Vec::new()
    };
    let zone_first = rng.random_range(0..n_schools);
    let zone_centers = spread_subset(&campus_pts, params.n_choice_zones, zone_first);
    let rating_noise = Normal::new(0.0, 1.2).expect("valid normal");
    let ses_mean = g.ses_index.iter().sum::<f64>() / n_blocks as f64;
    let ses_sd = (g.ses_index.iter().map(|v| (v - ses_mean).powi(2)).sum::<f64>() / n_blocks as f64)
        .sqrt()
        .max(1e-12);
    let mut schools = Vec::with_capacity(n_schools);
    for (s, &campus) in campuses.iter().enumerate() {
        let z = (g.ses_index[campus.index()] - ses_mean) / ses_sd;
        let mut rating = || (5.5 + 1.5 * z + rating_noise.sample(&mut rng)).round().clamp(1.0, 10.0);
        let ratings = Ratings {
            overall: rating(),
            test: rating(),
            progress: rating(),
            equity: rating(),
        };
        let mut by_dist: Vec<(f64, u16)> = zone_centers
            .iter()
            .enumerate()
            .map(|(o, &c)| (dist(campus_pts[c], campus_pts[s]), o as u16))
            .collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut zones = vec![by_dist[0].1];
        if by_dist.len() > 1 && by_dist[0].0 > 0.0 && by_dist[1].0 <= 1.3 * by_dist[0].0 {
            zones.push(by_dist[1].1);
        }
        zones.sort();
        schools.push(School {
            id: SchoolId::from_index(s),
            campus_block: campus,
            is_magnet: magnet_set.contains(&s),
            current_enrollment: 0,
            ratings,
            choice_zones: zones,
        });
    }

    let travel: Vec<Vec<f64>> = g
        .centroids
        .iter()
        .map(|&c| {
            campus_pts
                .iter()
                .map(|&cp| dist(c, cp) / params.speed_kmh * 60.0 + params.fixed_minutes)
                .collect()
        })
        .collect();

    // students
    let picker = WeightedIndex::new(&g.weights)
        .map_err(|e| Error::Config(format!("no populated blocks: {e}")))?;
    let mut homes: Vec<usize> = (0..params.n_students).map(|_| picker.sample(&mut rng)).collect();
    homes.sort();
    let mut population = vec![0usize; n_blocks];
    for &b in &homes {
        population[b] += 1;
    }
    let category = ses_terciles(&g.ses_index, &population);

    let students: Vec<Student> = homes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let ses = category[b];
            let race = race_for(ses, &mut rng);
            let grade = rng.random_range(0..6u8);
            let new_to_system = rng.random::<f64>() < params.new_student_share;
            let has_sibling = rng.random::<f64>() < params.sibling_share;
            Student {
                id: StudentId::from_index(i),
                block: BlockId::from_index(b),
                ses_category: ses,
                race,
                grade,
                actual_school: SchoolId(0),
                history: History {
                    new_to_system,
                    has_sibling,
                    ..History::default()
                },
            }
        })
        .collect();

    let build = |status_quo: &[SchoolId]| {
        let blocks: Vec<Block> = (0..n_blocks)
            .map(|b| Block {
                id: BlockId::from_index(b),
                centroid: g.centroids[b],
                cell: g.cells[b],
                neighbors: g.neighbors[b].clone(),
                status_quo_school: status_quo[b],
                travel_time: travel[b].clone(),
                resident_students: Vec::new(),
                ses_index: g.ses_index[b],
            })
            .collect();
        let students = students
            .iter()
            .map(|s| Student {
                actual_school: status_quo[s.block.index()],
                ..s.clone()
            })
            .collect();
        District::new(blocks, schools.clone(), students, params.n_choice_zones)
    };

    let capacity = vec![params.n_students as f64 / n_schools as f64; n_schools];
    let status_quo = grow_zones(&g.neighbors, &travel, &population, &campuses, &capacity)?;
    let district = build(&status_quo)?;
    if params.n_magnets > 0 {
        let r = 12.min(n_schools);
        if let Some(b) = district.blocks().iter().find(|b| {
            !nearest_schools(&district, b.id, r).iter().any(|s| district.school(*s).is_magnet)
        }) {
            return Err(Error::Config(format!(
                "block {} has no magnet among its nearest {r} schools; add magnets",
                b.id
            )));
        }
    }
    simulate_history(&district, params)
}

/// Student-weighted terciles of the block SES index. Forces at least one
/// lower-SES and one other populated block when the split degenerates.
fn ses_terciles(ses: &[f64], population: &[usize]) -> Vec<u8> {
    let n: usize = population.iter().sum();
    let mut order: Vec<usize> = (0..ses.len()).collect();
    order.sort_by(|&a, &b| ses[a].total_cmp(&ses[b]).then(a.cmp(&b)));
    let mut category = vec![1u8; ses.len()];
    let mut before = 0usize;
    for &b in &order {
        let mid = before as f64 + population[b] as f64 / 2.0;
        category[b] = ((3.0 * mid / n as f64).floor() as u8).min(2);
        before += population[b];
    }
    let populated: Vec<usize> = order.iter().copied().filter(|&b| population[b] > 0).collect();
    if let (Some(&lo), Some(&hi)) = (populated.first(), populated.last()) {
        if populated.iter().all(|&b| category[b] != LOWER_SES) {
            category[lo] = LOWER_SES;
        }
        if lo != hi && populated.iter().all(|&b| category[b] == LOWER_SES) {
            category[hi] = 2;
        }
    }
    category
}

struct ChoiceSim {
    /// Utility without the magnet and zoned terms, `[student][school]`.
    base: Vec<Vec<f64>>,
    zoned: Vec<usize>,
    magnet: Vec<bool>,
    /// Taste plus one year's noise, per year.
    shocks: [Vec<Vec<f64>>; 3],
}

impl ChoiceSim {
    fn choose(&self, year: usize, n: usize, beta_magnet: f64, beta_zoned: f64) -> usize {
        let mut best = 0;
        let mut best_u = f64::NEG_INFINITY;
        for (s, b) in self.base[n].iter().enumerate() {
            let mut u = b + self.shocks[year][n][s];
            if self.magnet[s] {
                u += beta_magnet;
            }
            if s == self.zoned[n] {
                u += beta_zoned;
            }
            if u > best_u {
                best_u = u;
                best = s;
            }
        }
        best
    }

    fn rates(&self, beta_magnet: f64, beta_zoned: f64) -> (f64, f64) {
        let (mut follow, mut magnet) = (0usize, 0usize);
        for n in 0..self.zoned.len() {
            let c = self.choose(0, n, beta_magnet, beta_zoned);
            if c == self.zoned[n] {
                follow += 1;
            } else if self.magnet[c] {
                magnet += 1;
            }
        }
        let n = self.zoned.len() as f64;
        (follow as f64 / n, magnet as f64 / n)
    }
}

/// Smallest `x` in `[lo, hi]` (to bisection precision) with `f(x) >= target`
/// for non-decreasing `f`.
fn bisect(mut lo: f64, mut hi: f64, target: f64, f: impl Fn(f64) -> f64) -> f64 {
    if f(lo) >= target {
        return lo;
    }
    if f(hi) < target {
        return hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Fills `actual_school` and the choice-history flags from the latent
/// utility process, and resets every school's enrollment to its label count.
pub fn simulate_history(district: &District, params: &GenParams) -> Result<District> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(1);
    let n_schools = district.n_schools();
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let magnet: Vec<bool> = district.schools().iter().map(|s| s.is_magnet).collect();

    let mut base = Vec::with_capacity(district.n_students());
    let mut zoned = Vec::with_capacity(district.n_students());
    let mut shocks: [Vec<Vec<f64>>; 3] = Default::default();
    let mut sibling_draw = Vec::with_capacity(district.n_students());
    for st in district.students() {
        let s0 = district.status_quo_school_of(st);
        let zs = district.school(s0);
        let row: Vec<f64> = district
            .schools()
            .iter()
            .map(|s| {
                let mut u = -params.beta_travel * district.travel_time(st.block, s.id)
                    + params.beta_rating * s.ratings.overall / zs.ratings.overall;
                if s.id != s0 {
                    if s.choice_zones.iter().any(|z| zs.choice_zones.contains(z)) {
                        u += params.beta_same_zone;
                    }
                    u += params.optout_bias_by_ses[st.ses_category as usize];
                }
                u
            })
            .collect();
        base.push(row);
        zoned.push(s0.index());
        let taste: Vec<f64> = (0..n_schools).map(|_| params.taste_scale * gumbel.sample(&mut rng)).collect();
        for year in shocks.iter_mut() {
            year.push(taste.iter().map(|t| t + gumbel.sample(&mut rng)).collect());
        }
        sibling_draw.push(rng.random::<f64>());
    }
    let sim = ChoiceSim {
        base,
        zoned,
        magnet,
        shocks,
    };

    let mut beta_magnet = params.beta_magnet;
    let mut beta_zoned = bisect(-30.0, 30.0, params.follow_rate_target, |b| sim.rates(beta_magnet, b).0);
    if let Some(target) = params.magnet_share_target {
        for _ in 0..8 {
            beta_magnet = bisect(-30.0, 30.0, target, |b| sim.rates(b, beta_zoned).1);
            beta_zoned = bisect(-30.0, 30.0, params.follow_rate_target, |b| sim.rates(beta_magnet, b).0);
        }
    }

    let mut enrollment = vec![0u32; n_schools];
    let students: Vec<Student> = district
        .students()
        .iter()
        .enumerate()
        .map(|(n, st)| {
            let now = sim.choose(0, n, beta_magnet, beta_zoned);
            let prior = [sim.choose(1, n, beta_magnet, beta_zoned), sim.choose(2, n, beta_magnet, beta_zoned)];
            let s0 = sim.zoned[n];
            enrollment[now] += 1;
            let known = !st.history.new_to_system;
            let history = History {
                new_to_system: st.history.new_to_system,
                has_sibling: st.history.has_sibling,
                attended_same_school_as_sibling: known && st.history.has_sibling && sibling_draw[n] < 0.75,
                opted_out_before: known && prior.iter().any(|&p| p != s0),
                opted_out_to_magnet_before: known && prior.iter().any(|&p| p != s0 && sim.magnet[p]),
                attended_multiple_schools: known && prior[0] != prior[1],
            };
            Student {
                actual_school: SchoolId::from_index(now),
                history,
                ..st.clone()
            }
        })
        .collect();
    district.with_students(students, enrollment)
}

/// Share of students whose label is their status-quo zoned school.
pub fn follow_rate(district: &District) -> f64 {
    let n = district
        .students()
        .iter()
        .filter(|s| s.actual_school == district.status_quo_school_of(s))
        .count();
    n as f64 / district.n_students() as f64
}

/// Share of students attending a magnet that is not their zoned school.
pub fn magnet_opt_out_share(district: &District) -> f64 {
    let n = district
        .students()
        .iter()
        .filter(|s| s.actual_school != district.status_quo_school_of(s) && district.school(s.actual_school).is_magnet)
        .count();
    n as f64 / district.n_students() as f64
}
