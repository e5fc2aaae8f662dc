//! Draw a few students from the fixture AFM parameters and show how their
//! chance of a correct answer grows with practice on each skill.

use fastforward::afm::load_afm_params;
use fastforward::rng::{derive, Purpose};
use fastforward::skills::load_pool_file;

fn main() -> fastforward::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let (skills, _) = load_pool_file(dir.join("pool_synthetic.json"))?;
    let afm = load_afm_params(dir.join("afm_synthetic.json"), &skills)?;

    for s in 0..3 {
        let mut student = afm.draw_student(&mut derive(42, Purpose::Proficiency, 0, s, 0));
        println!("student {s}: theta = {:+.3}", student.theta);
        println!("  {:<18} {:>6} {:>6} {:>6} {:>6}", "skill", "T=0", "T=5", "T=10", "T=20");
        for skill in skills.ids() {
            let mut row = Vec::new();
            for t in [0, 5, 10, 20] {
                student.set_opportunities(skill, t);
                row.push(format!("{:>6.3}", afm.p_correct(&student, skill)));
            }
            println!("  {:<18} {}", skills.name(skill), row.join(" "));
        }
    }
    Ok(())
}
