//! Runs every bundled figure recipe and prints its summary.

use snspd::materials::MaterialDb;
use snspd::recipes::{reproduce, FIGURES};

fn main() -> snspd::Result<()> {
    let db = MaterialDb::bundled();
    for fig in FIGURES {
        let r = reproduce(fig, &db, 0)?;
        println!("== {fig} ({} tables)\n{}", r.tables.len(), r.summary);
    }
    Ok(())
}
