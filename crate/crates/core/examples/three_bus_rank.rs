// Rank of the dual nullspace on two three-bus systems. With identical lines
// there is one pair of solutions and the relaxation is tight (rank 2). The
// default lines are tuned so that two pairs of solutions disappear at the
// same controlled voltage, and the nullspace rank becomes 4.
//
//     cargo run --release --example three_bus_rank

use gridcert::caseio::{three_bus, ThreeBusParams};
use gridcert::sdpcert::{rank_study, RankStudyOptions};

fn main() -> Result<(), gridcert::Error> {
    let opts = RankStudyOptions {
        cross_check: true,
        ..RankStudyOptions::default()
    };
    for (name, params) in [
        ("identical lines", ThreeBusParams::uniform(0.01, 0.1)),
        ("default", ThreeBusParams::default()),
    ] {
        let study = rank_study(&three_bus(&params)?, &opts)?;
        let fc = study.cross_check.expect("requested");
        println!("{name}:");
        println!("  slack voltage bound {:.6}", study.objective.sqrt());
        println!("  {} solutions at nominal voltages", fc.solutions_at_nominal);
        println!("  pairs disappear at scales {:?}", fc.pair_disappearances);
        println!("  nullspace rank {}", study.nullspace_rank);
    }
    Ok(())
}
