//! Show which problem each selector would serve first for a student who has
//! already mastered the constant skills.

use fastforward::bkt::{BktModel, BktParams, BktState};
use fastforward::rng::{derive, Purpose};
use fastforward::selectors::{score_problem, Selector, SelectorKind};
use fastforward::skills::load_pool_file;

fn main() -> fastforward::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let (skills, pool) = load_pool_file(dir.join("pool_synthetic.json"))?;
    let model = BktModel::uniform(BktParams::default(), skills.len())?;

    let mut bkt = BktState::new(&model);
    for name in ["add/subtr-const", "cancel-const", "comb-const", "simplify-division"] {
        bkt.set_posterior(skills.lookup(name).unwrap(), 0.97);
    }

    println!("{:<16} {:>5} {:>10} {:>10}", "problem", "steps", "difficulty", "unmastered");
    for p in pool.problems() {
        let s = score_problem(p, &bkt, &model);
        println!("{:<16} {:>5} {:>10.3} {:>10}", p.id, p.len(), s.mean_difficulty, s.unmastered_count);
    }
    println!();
    for kind in SelectorKind::ALL {
        let mut rng = derive(3, Purpose::Selection, kind.condition_id(), 0, 0);
        let picked = Selector::new(kind).select(&pool, &bkt, &model, &mut rng)?;
        match picked {
            Some(i) => println!("{kind:<17} -> {}", pool.problem(i).id),
            None => println!("{kind:<17} -> nothing to serve"),
        }
    }
    Ok(())
}
