// PV curves of the 14-bus system by continuation power flow: once at the
// nominal voltages and once with the slack and PV setpoints divided by the
// voltage margin, where the nose should sit at multiplier 1.
//
//     cargo run --release --example pv_curve

use gridcert::caseio::load_case;
use gridcert::continuation::{scale_controlled_voltages, trace_pv_curve, Branch, CpfOptions};
use gridcert::sdpcert::certify;

fn main() -> Result<(), gridcert::Error> {
    let model = load_case("ieee14")?;
    let sigma = certify(&model)?.sigma;

    for scale in [1.0, 1.0 / sigma] {
        let scaled = scale_controlled_voltages(&model, scale)?;
        let trace = trace_pv_curve(&scaled, &CpfOptions::default())?;
        let upper = trace.points.iter().filter(|p| p.branch == Branch::Upper).count();
        println!(
            "voltages x{scale:.4}: {} points ({upper} on the upper branch), bus {} monitored",
            trace.points.len(),
            trace.monitored_bus
        );
        for p in trace.points.iter().step_by(5) {
            println!("  {:7.4}  {:.4}  {}", p.multiplier, p.v_monitored, p.branch.as_str());
        }
        println!("  nose at multiplier {:.5}", trace.nose_multiplier);
    }
    Ok(())
}
