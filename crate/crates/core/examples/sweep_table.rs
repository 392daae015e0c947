// Newton-Raphson and the certificate side by side over a list of loadings
// around the 14-bus nose.
//
//     cargo run --release --example sweep_table

use gridcert::caseio::load_case;
use gridcert::sdpcert::{sweep, SweepOptions};

const MULTIPLIERS: [f64; 21] = [
    1.0, 2.0, 3.0, 4.0, 4.01, 4.02, 4.03, 4.04, 4.05, 4.055, 4.056, 4.057, 4.058, 4.059, 4.06,
    4.061, 4.062, 4.063, 4.064, 4.065, 5.0,
];

fn main() -> Result<(), gridcert::Error> {
    let model = load_case("ieee14")?;
    let opts = SweepOptions {
        with_nr: true,
        ..SweepOptions::default()
    };
    let rows = sweep(&model, &MULTIPLIERS, &opts)?;
    println!("{:>10}  {:>4}  {:>7}  insolvable", "multiplier", "NR", "V_lower");
    for r in &rows {
        let nr = if r.nr_converged == Some(true) { "yes" } else { "no" };
        match &r.certificate {
            Some(c) => println!(
                "{:>10.3}  {nr:>4}  {:>7.4}  {}",
                r.multiplier, c.v_lower, c.insolvable_certified
            ),
            None => println!("{:>10.3}  {nr:>4}  error: {:?}", r.multiplier, r.error),
        }
    }
    Ok(())
}
