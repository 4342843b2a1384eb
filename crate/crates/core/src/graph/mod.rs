//! Graph data model, dataset files, batching, splitting and the synthetic
//! compositional dataset.

mod batch;
mod instance;
mod io;
mod split;
pub mod synthetic;

pub use batch::{batch, GraphBatch};
pub use instance::{Dataset, GraphInstance};
pub use io::{decode_line, encode_line, load_jsonl, save_jsonl};
pub use split::{split, Split, SplitSpec};
pub use synthetic::{gen_component, gen_synthetic_dataset, gen_synthetic_graph, ComponentKind, SyntheticSpec};
