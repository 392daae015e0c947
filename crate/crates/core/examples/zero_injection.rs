// Zero-injection operating points. With every injection removed and the
// PV reactive output absorbed by shunts, each bundled system has a flat
// solution, and the Jacobian there is nonsingular. For two buses the
// existence condition has a closed form.
//
//     cargo run --release --example zero_injection

use gridcert::caseio::{builtin_case, BuiltinCase, ThreeBusParams, TwoBusParams};
use gridcert::powerflow::{
    check_zero_injection_jacobian, two_bus_zero_injection_exists, zero_injection_solution,
};

fn main() -> Result<(), gridcert::Error> {
    let cases = [
        ("two_bus", BuiltinCase::TwoBus(TwoBusParams::new(1.0, -10.0, 1.02, 1.0))),
        ("three_bus", BuiltinCase::ThreeBus(ThreeBusParams::default())),
        ("ieee14", BuiltinCase::Ieee14),
        ("ieee118", BuiltinCase::Ieee118),
    ];
    for (name, case) in cases {
        let model = builtin_case(&case)?;
        let z = zero_injection_solution(&model)?;
        let check = check_zero_injection_jacobian(&model, &z)?;
        let vmin = z.state.v.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{name:>9}: min |V| {vmin:.4}, {} PV shunts, Jacobian singular values in [{:.3e}, {:.3e}]",
            z.delta_d.len(),
            check.min_singular_value,
            check.max_singular_value
        );
    }

    println!("two-bus existence (g = 1, b = -1, slack 1.0):");
    for v_pv in [0.5, 1.0, 1.5, 2.0] {
        println!(
            "  V_pv = {v_pv}: {}",
            two_bus_zero_injection_exists(1.0, -1.0, v_pv, 1.0)
        );
    }
    Ok(())
}
