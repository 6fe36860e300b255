pub mod banded;
pub mod dense;
pub mod sparse;

pub use banded::{BandedCholesky, BandedLu};
pub use dense::{symmetric_eigen, DMatrix, DenseLu, RCOND_THRESHOLD};
pub use sparse::{reverse_cuthill_mckee, CsrMatrix};
