// Certifies the 14-bus system at the base loading and at five times the
// base loading.
//
//     cargo run --release --example certify_ieee14

use gridcert::caseio::load_case;
use gridcert::sdpcert::certify;

fn main() -> Result<(), gridcert::Error> {
    let base = load_case("ieee14")?;
    for multiplier in [1.0, 5.0] {
        let model = base.scale_injections(multiplier)?;
        let c = certify(&model)?;
        println!("multiplier {multiplier}:");
        println!("  V_lower = {:.4} pu (slack setpoint {:.4})", c.v_lower, c.v0);
        println!("  sigma = {:.4}, eta = {:.4}", c.sigma, c.eta);
        println!("  nullspace rank {}, verdict {:?}", c.nullspace_rank, c.verdict);
        if c.insolvable_certified {
            println!(
                "  no solution; uniform loading must drop below {:.4}",
                c.eta * multiplier
            );
        }
    }
    Ok(())
}
