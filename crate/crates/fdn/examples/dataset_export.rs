//! The three synthetic tasks and their interpolation/extrapolation splits,
//! exported as CSV next to the current directory.
//!
//!     cargo run --release --example dataset_export

use fdn::adiff::StreamRng;
use fdn::tasks::{make_dataset, Split, TaskKind, TaskSpec};

fn main() -> fdn::Result<()> {
    for kind in TaskKind::ALL {
        let spec = TaskSpec::new(kind);
        let mut rng = StreamRng::new(7).derive(&format!("data/{kind}"));
        let ds = make_dataset(&spec, &mut rng)?;
        let path = std::path::PathBuf::from(format!("{kind}_dataset.csv"));
        ds.write_csv(&path)?;
        println!(
            "{kind}: {} train in [-{}, {}], {} ID, {} OOD in the ({}, {}) lobes -> {}",
            ds.indices(Split::Train).len(),
            spec.l,
            spec.l,
            ds.indices(Split::TestId).len(),
            ds.indices(Split::TestOod).len(),
            spec.l,
            spec.ambient,
            path.display()
        );
    }
    Ok(())
}
