//! The simplified model (identity adjacency, one linear layer, no attention)
//! against a factorization machine, first on a hand-sized input, then on
//! many random ones.
//!
//! ```text
//! cargo run --example fm_reduction
//! ```

use fignn::fm_reduction::{simplified_predict, vanilla_fm_predict, verify_reduction, ReductionCase};
use fignn::rng::{rng, Stream};

fn main() -> fignn::Result<()> {
    let case = ReductionCase::random(&mut rng(11, Stream::Reduction));
    let p = &case.params;
    let fm = vanilla_fm_predict(&case.x, p.bias, p.linear_weights().view(), p.embeddings.view());
    let ours = simplified_predict(&case.x, &case.params, true)?;
    println!("x = {:?}\nFM {fm:.12}\nsimplified {ours:.12}", case.x);

    let report = verify_reduction(1000, 0)?;
    print!("{report}");
    Ok(())
}
