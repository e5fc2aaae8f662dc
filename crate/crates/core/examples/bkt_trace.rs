//! Trace one skill's mastery estimate through a sequence of responses.
//!
//!     cargo run --example bkt_trace -- 1101110

use fastforward::bkt::BktParams;

fn main() {
    let responses = std::env::args().nth(1).unwrap_or_else(|| "0110111".to_string());
    let params = BktParams::default();
    let mut p = params.p_init;
    println!("start        P(L) = {p:.4}");
    for (i, c) in responses.chars().enumerate() {
        let correct = match c {
            '1' => true,
            '0' => false,
            other => {
                eprintln!("responses must be 0/1, got {other:?}");
                std::process::exit(2);
            }
        };
        let before = p;
        p = params.update(p, correct);
        println!(
            "step {:>2} {}  P(L) {:.4} -> {:.4}{}",
            i + 1,
            if correct { "right" } else { "wrong" },
            before,
            p,
            if params.is_mastered(p) { "  mastered" } else { "" }
        );
    }
}
