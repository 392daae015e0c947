// Reads a case in MATPOWER format, solves it and writes it back out.
//
//     cargo run --release --example parse_case

use gridcert::caseio::{emit_case, parse_case, to_network};
use gridcert::powerflow::{nr_solve, NrOptions, PowerFlowState};

const CASE: &str = "function mpc = case4
mpc.baseMVA = 100;
%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin
mpc.bus = [
	1	3	0	0	0	0	1	1.02	0	230	1	1.1	0.9;
	2	1	50	20	0	0	1	1	0	230	1	1.1	0.9;
	3	2	0	0	0	0	1	1.01	0	230	1	1.1	0.9;
	4	1	80	30	0	5	1	1	0	230	1	1.1	0.9;
];
%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin
mpc.gen = [
	1	0	0	300	-300	1.02	100	1	250	0;
	3	60	0	300	-300	1.01	100	1	250	0;
];
%% fbus tbus r x b rateA rateB rateC ratio angle status
mpc.branch = [
	1	2	0.01	0.08	0.02	0	0	0	0	0	1;
	1	4	0.02	0.12	0.03	0	0	0	0	0	1;
	2	3	0.01	0.09	0.02	0	0	0	0	0	1;
	3	4	0.015	0.1	0.02	0	0	0	0.98	0	1;
];
";

fn main() -> Result<(), gridcert::Error> {
    let case = parse_case(CASE)?;
    let model = to_network(&case)?;
    println!(
        "{}: {} buses, {} branches",
        model.name(),
        model.n_buses(),
        model.branches().len()
    );
    let report = nr_solve(&model, &PowerFlowState::flat(&model), &NrOptions::default())?;
    let state = report.state.expect("the sample case solves");
    for (bus, (v, d)) in model.buses().iter().zip(state.v.iter().zip(&state.delta)) {
        println!("  bus {}: {v:.4} pu, {:7.3} deg", bus.id, d.to_degrees());
    }
    let text = emit_case(&case);
    assert_eq!(parse_case(&text)?, case);
    println!("{} lines when written back", text.lines().count());
    Ok(())
}
