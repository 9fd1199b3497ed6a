//! Random program and input generators shared by the test targets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A small valid program over `E0/1`, `E1/2` and up to four IDB relations,
/// with `Flip` and `Geo` heads.
pub fn random_program(rng: &mut ChaCha8Rng) -> String {
    let idb: Vec<(String, usize)> = (0..rng.gen_range(1..=4))
        .map(|i| (format!("R{i}"), rng.gen_range(1..=3)))
        .collect();
    let mut rels: Vec<(String, usize)> = vec![("E0".into(), 1), ("E1".into(), 2)];
    rels.extend(idb.iter().cloned());
    let vars = ["x", "y", "z"];
    let mut src = String::from("edb E0/1. edb E1/2.\n");
    for (r, a) in &idb {
        src.push_str(&format!("idb {r}/{a}.\n"));
    }
    for _ in 0..rng.gen_range(1..=6) {
        let mut body_vars: Vec<&str> = Vec::new();
        let mut body = Vec::new();
        for _ in 0..rng.gen_range(1..=2) {
            let (r, a) = &rels[rng.gen_range(0..rels.len())];
            let args: Vec<String> = (0..*a)
                .map(|_| {
                    if rng.gen_bool(0.15) {
                        rng.gen_range(0..3).to_string()
                    } else {
                        let v = vars[rng.gen_range(0..vars.len())];
                        if !body_vars.contains(&v) {
                            body_vars.push(v);
                        }
                        v.to_string()
                    }
                })
                .collect();
            body.push(format!("{r}({})", args.join(", ")));
        }
        let (h, ha) = &idb[rng.gen_range(0..idb.len())];
        let delta_at = rng.gen_bool(0.6).then(|| rng.gen_range(0..*ha));
        let head: Vec<String> = (0..*ha)
            .map(|i| {
                if Some(i) == delta_at {
                    if rng.gen_bool(0.5) {
                        format!("Flip[{}]", [0.2, 0.5, 0.8][rng.gen_range(0..3)])
                    } else {
                        format!("Geo[{}]", [0.3, 0.6, 0.9][rng.gen_range(0..3)])
                    }
                } else if body_vars.is_empty() || rng.gen_bool(0.1) {
                    rng.gen_range(0..3).to_string()
                } else {
                    body_vars[rng.gen_range(0..body_vars.len())].to_string()
                }
            })
            .collect();
        src.push_str(&format!("{h}({}) :- {}.\n", head.join(", "), body.join(", ")));
    }
    src
}

pub fn random_input(rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    for _ in 0..rng.gen_range(1..=3) {
        out.push_str(&format!("E0({}).\n", rng.gen_range(0..3)));
    }
    for _ in 0..rng.gen_range(0..=3) {
        out.push_str(&format!("E1({}, {}).\n", rng.gen_range(0..3), rng.gen_range(0..3)));
    }
    out
}
