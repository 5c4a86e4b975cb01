//! Follow, frequency and logit choice distributions for a few students.

use rwc::choice::{logit_train, ChoiceModel, Dataset, FollowModel, FrequencyModel, LogitChoiceModel, LogitConfig};
use rwc::district::StudentId;
use rwc::synth::{generate_district, GenParams};

fn main() -> rwc::Result<()> {
    let district = generate_district(&GenParams {
        n_blocks: 100,
        n_students: 1000,
        seed: 9,
        ..GenParams::default()
    })?;
    let ids: Vec<StudentId> = (0..district.n_students()).map(StudentId::from_index).collect();
    let fit = logit_train(&Dataset::from_students(&district, &ids), &LogitConfig::default())?;
    println!("logit trained: {} steps, final loss {:.4}", fit.iterations, fit.losses.last().unwrap());
    let logit = LogitChoiceModel::new(fit.model)?;

    let models: [&dyn ChoiceModel; 3] = [&FollowModel, &FrequencyModel::default(), &logit];
    for st in district.students().iter().step_by(250) {
        let zoned = district.status_quo_school_of(st);
        println!(
            "\nstudent {} in block {} (SES {}), zoned to {}, attends {}",
            st.id, st.block, st.ses_category, zoned, st.actual_school
        );
        for m in models {
            let p = m.distribution(&district, st, zoned)?;
            let shown: Vec<String> = p.probs().iter().map(|v| format!("{v:.2}")).collect();
            println!("  {:>9}: [{}]  top choice {}", m.name(), shown.join(" "), p.argmax());
        }
    }
    Ok(())
}
