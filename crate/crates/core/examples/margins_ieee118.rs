// Margins of the 118-bus system at four times its base loading, where it
// has no solution: how far the loading must come down, and how far the
// controlled voltages would have to go up.
//
//     cargo run --release --example margins_ieee118

use gridcert::caseio::load_case;
use gridcert::report::{emit_report, Format, Margins, Report};
use gridcert::sdpcert::certify;

fn main() -> Result<(), gridcert::Error> {
    let multiplier = 4.0;
    let model = load_case("ieee118")?.scale_injections(multiplier)?;
    let certificate = certify(&model)?;
    let report = Report::Margins {
        case: "ieee118".into(),
        margins: Margins::new(multiplier, certificate),
    };
    print!("{}", emit_report(&report, Format::Human));
    Ok(())
}
