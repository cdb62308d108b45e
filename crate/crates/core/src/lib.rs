//! Derived-datatype engine.
//!
//! Nested datatype definitions (named, contiguous, vector, hvector and
//! subarray) are translated into a chain of dense/stream nodes, rewritten to
//! a unique canonical form, lowered to a compact [`StridedBlock`] and packed
//! or unpacked on plain byte buffers by a host executor that follows the same
//! word-size and block/grid plan a device kernel would use.
//!
//! The [`perfmodel`] module chooses between the device, one-shot and staged
//! transfer strategies from a sampled machine profile, and [`halo`] replays a
//! periodic 3D halo exchange on top of all of it.

pub mod canon;
pub mod desc;
pub mod error;
pub mod halo;
pub mod ir;
pub mod pack;
pub mod perfmodel;
pub mod plan;
pub mod typemodel;

pub use error::{Error, Result};
pub use ir::{DenseData, StreamData, TypeData, TypeNode};
pub use pack::{Block, BlockList, ExecMode, PackOptions};
pub use perfmodel::{MachineProfile, MethodChoice, ModelQuery, PerfModel};
pub use plan::{CountStrategy, PackPlan, StridedBlock};
pub use typemodel::{ArrayOrder, CommittedType, Lowering, NamedKind, TypeDef, TypeId, TypeRegistry};
