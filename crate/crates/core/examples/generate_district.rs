//! Synthesize a district with an enrollment history and save it.
//!
//! cargo run --release --example generate_district -- [seed] [out-dir]

use std::path::PathBuf;

use rwc::district::{write_district, ArtifactStamp, LOWER_SES};
use rwc::synth::{follow_rate, generate_district, magnet_opt_out_share, GenParams};

fn main() -> rwc::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(42, |s| s.parse().expect("seed is an integer"));
    let out = args.next().map(PathBuf::from);

    let params = GenParams { seed, ..GenParams::default() };
    let district = generate_district(&params)?;

    println!("blocks {}  schools {}  students {}", district.n_blocks(), district.n_schools(), district.n_students());
    println!("lower-SES students {}", district.lower_ses_total());
    println!("historical follow rate {:.3}", follow_rate(&district));
    println!("opt-outs going to a magnet {:.3}", magnet_opt_out_share(&district));
    println!();
    println!("school  campus  magnet  enrollment  zones    rating  lower-SES zoned");
    let sq = district.status_quo();
    for school in district.schools() {
        let zoned_lower = district
            .students()
            .iter()
            .filter(|s| s.ses_category == LOWER_SES && sq.school_of(s.block) == school.id)
            .count();
        println!(
            "{:>6}  {:>6}  {:>6}  {:>10}  {:<7}  {:>6.0}  {:>15}",
            school.id,
            school.campus_block,
            if school.is_magnet { "yes" } else { "" },
            school.current_enrollment,
            format!("{:?}", school.choice_zones),
            school.ratings.overall,
            zoned_lower
        );
    }

    if let Some(dir) = out {
        write_district(&dir, &district, &ArtifactStamp::default())?;
        println!("\nwrote {}", dir.display());
    }
    Ok(())
}
