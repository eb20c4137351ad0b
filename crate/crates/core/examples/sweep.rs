//! Generic parameter sweep: spacer thickness against the stack spectrum, and
//! bias against the DE pipeline.

use snspd::designopt::{sweep, SweepContext, SweepSpec};
use snspd::detector::DetectorChannelModel;
use snspd::materials::MaterialDb;
use snspd::thinfilm::LayerStack;

fn main() -> snspd::Result<()> {
    let db = MaterialDb::bundled();
    let ctx = SweepContext {
        stack: Some(LayerStack::reference_device()),
        model: Some(DetectorChannelModel::from_json(include_str!(
            "../data/systems/ch1.json"
        ))?),
        wavelength: Some(1550e-9),
        ..Default::default()
    };
    let spacer = SweepSpec {
        variable: "thickness_nm:1".into(),
        grid: vec![150.0, 200.0, 250.0, 300.0],
        pipeline: "stack-spectrum".into(),
    };
    print!("{}", sweep(&spacer, &ctx, &db)?.to_aligned_text());
    let bias = SweepSpec {
        variable: "bias_norm".into(),
        grid: vec![0.95, 0.97, 0.99],
        pipeline: "de-curve".into(),
    };
    print!("{}", sweep(&bias, &ctx, &db)?.to_aligned_text());
    Ok(())
}
