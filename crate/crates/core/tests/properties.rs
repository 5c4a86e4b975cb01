use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rwc::choice::{ChoiceModel, FollowModel, FrequencyModel};
use rwc::district::{
    check_contiguity, counts_under_attendance, dissimilarity, is_feasible, BlockId, District, FeasibilityParams,
    SchoolCounts, SchoolId, Zoning,
};
use rwc::optimize::{boundary_moves, objective_delta};
use rwc::scenario::{saa_objective, sample_scenarios, ScenarioTable};
use rwc::synth::{generate_district, GenParams};

struct Fixture {
    district: District,
    table: ScenarioTable,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let district = generate_district(&GenParams {
            n_blocks: 64,
            n_schools: 5,
            n_magnets: 1,
            n_students: 600,
            n_choice_zones: 2,
            seed: 21,
            ..GenParams::default()
        })
        .unwrap();
        let table = sample_scenarios(&FrequencyModel::default(), &district, 6, 4).unwrap();
        Fixture { district, table }
    })
}

/// Zoning reached from the status quo by `steps` random boundary moves.
fn walk(district: &District, params: &FeasibilityParams, steps: usize, seed: u64) -> Zoning {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = district.status_quo();
    for _ in 0..steps {
        let moves = boundary_moves(&z, district, params);
        if moves.is_empty() {
            break;
        }
        let m = moves[rng.random_range(0..moves.len())];
        z.set(m.block, m.to);
    }
    z
}

fn counts_strategy() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    prop::collection::vec((0u32..50, 0u32..50), 2..8).prop_map(|v| {
        let total: Vec<u32> = v.iter().map(|&(a, b)| a + b).collect();
        let lower: Vec<u32> = v.iter().map(|&(a, _)| a).collect();
        (total, lower)
    })
}

fn nondegenerate(total: &[u32], lower: &[u32]) -> Option<(usize, usize)> {
    let g: u32 = lower.iter().sum();
    let n: u32 = total.iter().sum();
    (g > 0 && g < n).then_some((g as usize, n as usize))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dissimilarity_is_bounded_and_scale_free((total, lower) in counts_strategy(), k in 2u32..9) {
        let Some((g, n)) = nondegenerate(&total, &lower) else { return Ok(()); };
        let d = dissimilarity(&SchoolCounts { total: total.clone(), lower_ses: lower.clone() }, g, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let scaled = SchoolCounts {
            total: total.iter().map(|c| c * k).collect(),
            lower_ses: lower.iter().map(|c| c * k).collect(),
        };
        let ds = dissimilarity(&scaled, g * k as usize, n * k as usize).unwrap();
        prop_assert!((d - ds).abs() < 1e-12);
    }

    #[test]
    fn dissimilarity_ignores_school_order((total, lower) in counts_strategy(), rot in 0usize..8) {
        let Some((g, n)) = nondegenerate(&total, &lower) else { return Ok(()); };
        let d = dissimilarity(&SchoolCounts { total: total.clone(), lower_ses: lower.clone() }, g, n).unwrap();
        let r = rot % total.len();
        let mut t2 = total.clone();
        let mut l2 = lower.clone();
        t2.rotate_left(r);
        l2.rotate_left(r);
        let d2 = dissimilarity(&SchoolCounts { total: t2, lower_ses: l2 }, g, n).unwrap();
        prop_assert!((d - d2).abs() < 1e-12);
    }

    #[test]
    fn attendance_counts_partition_the_students(seed in any::<u64>()) {
        let d = &fixture().district;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attended: Vec<SchoolId> = (0..d.n_students())
            .map(|_| SchoolId::from_index(rng.random_range(0..d.n_schools())))
            .collect();
        let c = counts_under_attendance(d, &attended).unwrap();
        prop_assert_eq!(c.total.iter().sum::<u32>() as usize, d.n_students());
        prop_assert_eq!(c.lower_ses.iter().sum::<u32>() as usize, d.lower_ses_total());
        prop_assert!(c.lower_ses.iter().zip(&c.total).all(|(g, t)| g <= t));
    }

    #[test]
    fn feasibility_is_monotone_in_alpha_and_tau(
        steps in 0usize..30,
        seed in any::<u64>(),
        alpha in 0.0f64..0.6,
        tau in 0.0f64..0.6,
        da in 0.0f64..0.4,
        dt in 0.0f64..0.4,
    ) {
        let f = fixture();
        let loose = FeasibilityParams::new(1.0, 1.0).unwrap();
        let z = walk(&f.district, &loose, steps, seed);
        let tight = FeasibilityParams::new(alpha, tau).unwrap();
        let wide = FeasibilityParams::new(alpha + da, tau + dt).unwrap();
        if is_feasible(&z, &f.district, &tight, &f.table).passed() {
            prop_assert!(is_feasible(&z, &f.district, &wide, &f.table).passed());
        }
    }

    #[test]
    fn choice_distributions_sum_to_one(student in 0usize..600, zoned in 0usize..5) {
        let d = &fixture().district;
        let st = &d.students()[student];
        let models: [&dyn ChoiceModel; 2] = [&FollowModel, &FrequencyModel::default()];
        for m in models {
            let p = m.distribution(d, st, SchoolId::from_index(zoned)).unwrap();
            prop_assert!(p.probs().iter().all(|&v| v >= 0.0));
            prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn objective_delta_matches_full_recompute(steps in 0usize..20, pick in any::<u64>(), seed in any::<u64>()) {
        let f = fixture();
        let loose = FeasibilityParams::new(1.0, 1.0).unwrap();
        let z = walk(&f.district, &loose, steps, seed);
        let moves = boundary_moves(&z, &f.district, &loose);
        prop_assume!(!moves.is_empty());
        let mv = moves[(pick % moves.len() as u64) as usize];
        let delta = objective_delta(&z, mv, &f.table, &f.district).unwrap();
        let mut after = z.clone();
        after.set(mv.block, mv.to);
        let before = saa_objective(&z, &f.table, &f.district).unwrap().mean;
        let after = saa_objective(&after, &f.table, &f.district).unwrap().mean;
        prop_assert!((delta - (after - before)).abs() < 1e-12);
    }

    /// Common random numbers: a student whose zoned school is unchanged
    /// makes the same choice in every scenario.
    #[test]
    fn unchanged_students_choose_identically(steps in 1usize..20, seed in any::<u64>()) {
        let f = fixture();
        let loose = FeasibilityParams::new(1.0, 1.0).unwrap();
        let z = walk(&f.district, &loose, steps, seed);
        let sq = f.district.status_quo();
        for i in 0..f.table.n_scenarios() {
            let a = f.table.realize(&sq, i);
            let b = f.table.realize(&z, i);
            for st in f.district.students() {
                if sq.school_of(st.block) == z.school_of(st.block) {
                    prop_assert_eq!(a.attended[st.id.index()], b.attended[st.id.index()]);
                }
            }
        }
    }
}

/// Union-find over same-school edges; contiguous iff every school's blocks
/// share one component that contains its campus.
fn contiguous_oracle(z: &Zoning, d: &District) -> bool {
    let n = d.n_blocks();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for b in d.blocks() {
        for nb in &b.neighbors {
            if z.school_of(b.id) == z.school_of(*nb) {
                let (ra, rb) = (find(&mut parent, b.id.index()), find(&mut parent, nb.index()));
                parent[ra] = rb;
            }
        }
    }
    for s in d.schools() {
        if z.school_of(s.campus_block) != s.id {
            return false;
        }
    }
    for b in 0..n {
        let s = z.as_slice()[b];
        let campus = d.school(s).campus_block.index();
        if find(&mut parent, b) != find(&mut parent, campus) {
            return false;
        }
    }
    true
}

#[test]
fn contiguity_check_agrees_with_union_find_on_1000_zonings() {
    let d = &fixture().district;
    let loose = FeasibilityParams::new(1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut positives, mut negatives) = (0, 0);
    for k in 0..1000u64 {
        let mut z = walk(d, &loose, (k % 40) as usize, k);
        // scramble a few blocks so that disconnected zonings appear too
        for _ in 0..rng.random_range(0..3) {
            let b = BlockId::from_index(rng.random_range(0..d.n_blocks()));
            z.set(b, SchoolId::from_index(rng.random_range(0..d.n_schools())));
        }
        let expect = contiguous_oracle(&z, d);
        assert_eq!(check_contiguity(&z, d).passed(), expect, "zoning {k}");
        if expect {
            positives += 1;
        } else {
            negatives += 1;
        }
    }
    assert!(positives > 100 && negatives > 100, "{positives} contiguous, {negatives} not");
}

#[test]
fn scenario_table_round_trips_through_disk() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    f.table.write(&path, "cafe").unwrap();
    let (back, hash) = ScenarioTable::read(&path).unwrap();
    assert_eq!(hash, "cafe");
    assert_eq!(back, f.table);
}
