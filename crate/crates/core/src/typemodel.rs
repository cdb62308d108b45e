//! Datatype definitions, their size/extent rules and the commit pipeline.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use crate::canon;
use crate::error::{Error, Result};
use crate::ir;
use crate::pack::{self, Block};
use crate::plan::{self, PackPlan, StridedBlock};

/// Predefined element types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NamedKind {
    Byte,
    Int,
    Float,
    Double,
}

impl NamedKind {
    pub const fn size(self) -> usize {
        match self {
            NamedKind::Byte => 1,
            NamedKind::Int | NamedKind::Float => 4,
            NamedKind::Double => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NamedKind::Byte => "byte",
            NamedKind::Int => "int",
            NamedKind::Float => "float",
            NamedKind::Double => "double",
        }
    }

    /// Case-insensitive lookup; accepts an optional `MPI_` prefix.
    pub fn from_name(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        let bare = lower.strip_prefix("mpi_").unwrap_or(&lower);
        match bare {
            "byte" => Some(NamedKind::Byte),
            "int" => Some(NamedKind::Int),
            "float" => Some(NamedKind::Float),
            "double" => Some(NamedKind::Double),
            _ => None,
        }
    }
}

/// Storage order of a subarray. Only [`ArrayOrder::C`] is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ArrayOrder {
    #[default]
    C,
    Fortran,
}

/// A datatype definition tree. Each node owns its inner type.
///
/// Subarray dimension 0 is the fastest-varying one: its stride is the inner
/// extent, and dimension `i` strides over the product of all lower sizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeDef {
    Named(NamedKind),
    Contiguous {
        count: usize,
        inner: Box<TypeDef>,
    },
    /// `stride` counts inner extents.
    Vector {
        count: usize,
        blocklength: usize,
        stride: usize,
        inner: Box<TypeDef>,
    },
    /// `stride` is in bytes.
    Hvector {
        count: usize,
        blocklength: usize,
        stride: usize,
        inner: Box<TypeDef>,
    },
    Subarray {
        sizes: Vec<usize>,
        subsizes: Vec<usize>,
        offsets: Vec<usize>,
        inner: Box<TypeDef>,
    },
}

fn overflow() -> Error {
    Error::invalid("layout exceeds the addressable range")
}

impl TypeDef {
    pub fn named(kind: NamedKind) -> TypeDef {
        TypeDef::Named(kind)
    }

    pub fn contiguous(count: usize, inner: TypeDef) -> Result<TypeDef> {
        let def = TypeDef::Contiguous {
            count,
            inner: Box::new(inner),
        };
        def.validate()?;
        Ok(def)
    }

    pub fn vector(count: usize, blocklength: usize, stride: usize, inner: TypeDef) -> Result<TypeDef> {
        let def = TypeDef::Vector {
            count,
            blocklength,
            stride,
            inner: Box::new(inner),
        };
        def.validate()?;
        Ok(def)
    }

    pub fn hvector(count: usize, blocklength: usize, stride_bytes: usize, inner: TypeDef) -> Result<TypeDef> {
        let def = TypeDef::Hvector {
            count,
            blocklength,
            stride: stride_bytes,
            inner: Box::new(inner),
        };
        def.validate()?;
        Ok(def)
    }

    /// C-order subarray.
    pub fn subarray(
        ndims: usize,
        sizes: &[usize],
        subsizes: &[usize],
        offsets: &[usize],
        inner: TypeDef,
    ) -> Result<TypeDef> {
        Self::subarray_with_order(ndims, sizes, subsizes, offsets, ArrayOrder::C, inner)
    }

    pub fn subarray_with_order(
        ndims: usize,
        sizes: &[usize],
        subsizes: &[usize],
        offsets: &[usize],
        order: ArrayOrder,
        inner: TypeDef,
    ) -> Result<TypeDef> {
        if order != ArrayOrder::C {
            return Err(Error::UnsupportedOrder);
        }
        if ndims == 0 {
            return Err(Error::invalid("subarray needs at least one dimension"));
        }
        if sizes.len() != ndims || subsizes.len() != ndims || offsets.len() != ndims {
            return Err(Error::invalid(format!(
                "subarray with ndims={ndims} got {} sizes, {} subsizes, {} offsets",
                sizes.len(),
                subsizes.len(),
                offsets.len()
            )));
        }
        let def = TypeDef::Subarray {
            sizes: sizes.to_vec(),
            subsizes: subsizes.to_vec(),
            offsets: offsets.to_vec(),
            inner: Box::new(inner),
        };
        def.validate()?;
        Ok(def)
    }

    /// Checks structural bounds and that size and extent are representable.
    pub fn validate(&self) -> Result<()> {
        self.measure().map(|_| ())
    }

    /// Checked (size, extent).
    fn measure(&self) -> Result<(usize, usize)> {
        match self {
            TypeDef::Named(k) => Ok((k.size(), k.size())),
            TypeDef::Contiguous { count, inner } => {
                let (s, e) = inner.measure()?;
                Ok((
                    count.checked_mul(s).ok_or_else(overflow)?,
                    count.checked_mul(e).ok_or_else(overflow)?,
                ))
            }
            TypeDef::Vector {
                count,
                blocklength,
                stride,
                inner,
            } => {
                let (s, e) = inner.measure()?;
                let size = count
                    .checked_mul(*blocklength)
                    .and_then(|n| n.checked_mul(s))
                    .ok_or_else(overflow)?;
                let extent = if *count == 0 {
                    0
                } else {
                    (count - 1)
                        .checked_mul(*stride)
                        .and_then(|n| n.checked_add(*blocklength))
                        .and_then(|n| n.checked_mul(e))
                        .ok_or_else(overflow)?
                };
                Ok((size, extent))
            }
            TypeDef::Hvector {
                count,
                blocklength,
                stride,
                inner,
            } => {
                let (s, e) = inner.measure()?;
                let size = count
                    .checked_mul(*blocklength)
                    .and_then(|n| n.checked_mul(s))
                    .ok_or_else(overflow)?;
                let extent = if *count == 0 {
                    0
                } else {
                    (count - 1)
                        .checked_mul(*stride)
                        .and_then(|n| n.checked_add(blocklength.checked_mul(e)?))
                        .ok_or_else(overflow)?
                };
                Ok((size, extent))
            }
            TypeDef::Subarray {
                sizes,
                subsizes,
                offsets,
                inner,
            } => {
                let n = sizes.len();
                if n == 0 || subsizes.len() != n || offsets.len() != n {
                    return Err(Error::invalid("subarray dimension lists disagree"));
                }
                if sizes.contains(&0) || subsizes.contains(&0) {
                    return Err(Error::invalid("subarray sizes and subsizes must be positive"));
                }
                // A dimension may run past its own size into the next row, as
                // a vector whose blocks exceed the stride does, but every
                // described element must lie inside the allocation.
                let mut pitch = 1usize;
                let mut last = 0usize;
                for i in 0..n {
                    let end = offsets[i].checked_add(subsizes[i] - 1).ok_or_else(overflow)?;
                    last = end
                        .checked_mul(pitch)
                        .and_then(|x| x.checked_add(last))
                        .ok_or_else(overflow)?;
                    pitch = pitch.checked_mul(sizes[i]).ok_or_else(overflow)?;
                }
                if last >= pitch {
                    return Err(Error::invalid(format!(
                        "subarray region (offsets {offsets:?}, subsizes {subsizes:?}) extends past the {sizes:?} allocation"
                    )));
                }
                let (s, e) = inner.measure()?;
                let sub: usize = subsizes
                    .iter()
                    .try_fold(1usize, |acc, &x| acc.checked_mul(x))
                    .ok_or_else(overflow)?;
                let full: usize = sizes
                    .iter()
                    .try_fold(1usize, |acc, &x| acc.checked_mul(x))
                    .ok_or_else(overflow)?;
                Ok((
                    sub.checked_mul(s).ok_or_else(overflow)?,
                    full.checked_mul(e).ok_or_else(overflow)?,
                ))
            }
        }
    }

    /// Total described bytes of one object.
    pub fn size(&self) -> usize {
        match self {
            TypeDef::Named(k) => k.size(),
            TypeDef::Contiguous { count, inner } => count * inner.size(),
            TypeDef::Vector {
                count,
                blocklength,
                inner,
                ..
            }
            | TypeDef::Hvector {
                count,
                blocklength,
                inner,
                ..
            } => count * blocklength * inner.size(),
            TypeDef::Subarray { subsizes, inner, .. } => subsizes.iter().product::<usize>() * inner.size(),
        }
    }

    /// Span used to place consecutive objects in multi-count operations.
    pub fn extent(&self) -> usize {
        match self {
            TypeDef::Named(k) => k.size(),
            TypeDef::Contiguous { count, inner } => count * inner.extent(),
            TypeDef::Vector {
                count,
                blocklength,
                stride,
                inner,
            } => {
                if *count == 0 {
                    0
                } else {
                    ((count - 1) * stride + blocklength) * inner.extent()
                }
            }
            TypeDef::Hvector {
                count,
                blocklength,
                stride,
                inner,
            } => {
                if *count == 0 {
                    0
                } else {
                    (count - 1) * stride + blocklength * inner.extent()
                }
            }
            TypeDef::Subarray { sizes, inner, .. } => sizes.iter().product::<usize>() * inner.extent(),
        }
    }

    /// Nesting depth; a named type has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            TypeDef::Named(_) => 1,
            TypeDef::Contiguous { inner, .. }
            | TypeDef::Vector { inner, .. }
            | TypeDef::Hvector { inner, .. }
            | TypeDef::Subarray { inner, .. } => 1 + inner.depth(),
        }
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for TypeDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeDef::Named(k) => write!(f, "{}", k.name()),
            TypeDef::Contiguous { count, inner } => write!(f, "contiguous({count}, {inner})"),
            TypeDef::Vector {
                count,
                blocklength,
                stride,
                inner,
            } => write!(f, "vector({count}, {blocklength}, {stride}, {inner})"),
            TypeDef::Hvector {
                count,
                blocklength,
                stride,
                inner,
            } => write!(f, "hvector({count}, {blocklength}, {stride}, {inner})"),
            TypeDef::Subarray {
                sizes,
                subsizes,
                offsets,
                inner,
            } => write!(
                f,
                "subarray({}, [{}], [{}], [{}], {inner})",
                sizes.len(),
                join(sizes),
                join(subsizes),
                join(offsets)
            ),
        }
    }
}

pub fn type_size(def: &TypeDef) -> usize {
    def.size()
}

pub fn type_extent(def: &TypeDef) -> usize {
    def.extent()
}

/// Opaque handle of a committed type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub u64);

/// Result of lowering a committed type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lowering {
    Strided { canon: StridedBlock, plan: PackPlan },
    /// No strided form exists; pack and unpack go through the oracle block
    /// list, kept here in definition order.
    Unsupported { reason: String, blocks: Vec<Block> },
}

#[derive(Debug, Clone)]
pub struct CommittedType {
    id: TypeId,
    def: TypeDef,
    lowering: Lowering,
    size: usize,
    extent: usize,
    span: usize,
    overlapping: bool,
}

impl PartialEq for CommittedType {
    /// Content equality; the handle is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.def == other.def
            && self.lowering == other.lowering
            && self.size == other.size
            && self.extent == other.extent
            && self.span == other.span
            && self.overlapping == other.overlapping
    }
}

impl CommittedType {
    /// Runs translate, simplify, lowering and planning for `def`.
    pub fn build(id: TypeId, def: TypeDef) -> Result<CommittedType> {
        def.validate()?;
        let size = def.size();
        let extent = def.extent();

        let lowered = canon::simplify(ir::translate(&def)).and_then(|chain| plan::to_strided_block(&chain));
        let (lowering, span, overlapping) = match lowered {
            Ok(canon) => {
                let plan = plan::make_plan(&canon);
                let span = canon.span();
                let overlapping = canon.is_overlapping();
                (Lowering::Strided { canon, plan }, span, overlapping)
            }
            Err(e) => {
                let blocks = pack::flatten_raw(&def);
                let span = blocks.iter().map(|b| b.end()).max().unwrap_or(0);
                let overlapping = pack::BlockList::normalize(blocks.clone()).overlap;
                let reason = e.to_string();
                (Lowering::Unsupported { reason, blocks }, span, overlapping)
            }
        };

        Ok(CommittedType {
            id,
            def,
            lowering,
            size,
            extent,
            span,
            overlapping,
        })
    }

    pub fn id(&self) -> TypeId {
        self.id
    }

    pub fn def(&self) -> &TypeDef {
        &self.def
    }

    pub fn lowering(&self) -> &Lowering {
        &self.lowering
    }

    /// Canonical strided form, `None` for unsupported lowerings.
    pub fn canon(&self) -> Option<&StridedBlock> {
        match &self.lowering {
            Lowering::Strided { canon, .. } => Some(canon),
            Lowering::Unsupported { .. } => None,
        }
    }

    pub fn plan(&self) -> Option<&PackPlan> {
        match &self.lowering {
            Lowering::Strided { plan, .. } => Some(plan),
            Lowering::Unsupported { .. } => None,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    /// One past the last described byte of a single object.
    pub fn span(&self) -> usize {
        self.span
    }

    /// Whether some byte is described more than once.
    pub fn is_overlapping(&self) -> bool {
        self.overlapping
    }

    /// Bytes a buffer must hold to cover `count` objects laid out at extent pitch.
    pub fn required_span(&self, count: usize) -> usize {
        if count == 0 || self.size == 0 {
            0
        } else {
            (count - 1) * self.extent + self.span
        }
    }
}

/// Registry of committed types. Commits run outside the lock.
#[derive(Debug, Default)]
pub struct TypeRegistry {
    next: AtomicU64,
    types: RwLock<HashMap<TypeId, Arc<CommittedType>>>,
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn commit(&self, def: TypeDef) -> Result<Arc<CommittedType>> {
        let id = TypeId(self.next.fetch_add(1, Ordering::Relaxed));
        let committed = Arc::new(CommittedType::build(id, def)?);
        self.types
            .write()
            .expect("registry lock poisoned")
            .insert(id, Arc::clone(&committed));
        Ok(committed)
    }

    pub fn get(&self, id: TypeId) -> Option<Arc<CommittedType>> {
        self.types.read().expect("registry lock poisoned").get(&id).cloned()
    }

    /// Drops a committed type; outstanding `Arc`s stay valid.
    pub fn free(&self, id: TypeId) -> bool {
        self.types.write().expect("registry lock poisoned").remove(&id).is_some()
    }

    pub fn len(&self) -> usize {
        self.types.read().expect("registry lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Commits `def` without a registry, using handle 0.
pub fn commit(def: TypeDef) -> Result<CommittedType> {
    CommittedType::build(TypeId(0), def)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn float() -> TypeDef {
        TypeDef::named(NamedKind::Float)
    }

    fn byte() -> TypeDef {
        TypeDef::named(NamedKind::Byte)
    }

    #[test]
    fn named_sizes() {
        assert_eq!(TypeDef::named(NamedKind::Byte).size(), 1);
        assert_eq!(float().size(), 4);
        assert_eq!(TypeDef::named(NamedKind::Int).size(), 4);
        assert_eq!(TypeDef::named(NamedKind::Double).extent(), 8);
    }

    #[test]
    fn constructor_sizes_and_extents() {
        let row = TypeDef::contiguous(100, float()).unwrap();
        assert_eq!((row.size(), row.extent()), (400, 400));

        let v = TypeDef::vector(3, 4, 8, float()).unwrap();
        assert_eq!(v.size(), 48);
        assert_eq!(v.extent(), 80);

        let empty = TypeDef::vector(0, 4, 8, float()).unwrap();
        assert_eq!((empty.size(), empty.extent()), (0, 0));
        assert_eq!(TypeDef::contiguous(0, byte()).unwrap().size(), 0);

        let hv = TypeDef::hvector(13, 1, 256, TypeDef::contiguous(400, byte()).unwrap()).unwrap();
        assert_eq!(hv.extent(), 3472);

        let sub = TypeDef::subarray(3, &[256, 512, 1024], &[400, 13, 47], &[0, 0, 0], byte()).unwrap();
        assert_eq!(sub.size(), 244_400);
        assert_eq!(sub.extent(), 256 * 512 * 1024);
    }

    #[test]
    fn subarray_bounds() {
        let err = TypeDef::subarray(1, &[8], &[4], &[6], byte()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert!(TypeDef::subarray(2, &[8], &[4], &[0], byte()).is_err());
        assert!(TypeDef::subarray(0, &[], &[], &[], byte()).is_err());
        assert!(TypeDef::subarray(1, &[8], &[0], &[0], byte()).is_err());
        // Rows may spill into the next row but not out of the allocation.
        assert!(TypeDef::subarray(2, &[4, 2], &[5, 1], &[0, 0], byte()).is_ok());
        assert!(TypeDef::subarray(2, &[4, 2], &[3, 2], &[2, 0], byte()).is_err());
        assert!(TypeDef::subarray(2, &[4, 2], &[3, 2], &[1, 0], byte()).is_ok());
        assert_eq!(
            TypeDef::subarray_with_order(1, &[8], &[4], &[0], ArrayOrder::Fortran, byte()),
            Err(Error::UnsupportedOrder)
        );
    }

    #[test]
    fn overflow_is_rejected() {
        let big = TypeDef::contiguous(usize::MAX / 2, byte()).unwrap();
        assert!(TypeDef::contiguous(4, big).is_err());
    }

    #[test]
    fn registry_commit_and_lookup() {
        let reg = TypeRegistry::new();
        let a = reg.commit(float()).unwrap();
        let b = reg.commit(float()).unwrap();
        assert_ne!(a.id(), b.id());
        assert_eq!(*a, *b);
        assert_eq!(reg.len(), 2);
        assert!(reg.get(a.id()).is_some());
        assert!(reg.free(a.id()));
        assert!(reg.get(a.id()).is_none());
    }

    #[test]
    fn stride_zero_falls_back_to_oracle() {
        let t = commit(TypeDef::hvector(3, 1, 0, float()).unwrap()).unwrap();
        assert!(t.canon().is_none());
        assert!(t.is_overlapping());
        assert_eq!(t.size(), 12);
        match t.lowering() {
            Lowering::Unsupported { blocks, .. } => assert_eq!(blocks.len(), 3),
            other => panic!("expected fallback, got {other:?}"),
        }
    }

    #[test]
    fn registry_concurrent_commits() {
        let reg = Arc::new(TypeRegistry::new());
        std::thread::scope(|s| {
            for i in 1..=8usize {
                let reg = Arc::clone(&reg);
                s.spawn(move || {
                    let def = TypeDef::vector(i, 2, 4, float()).unwrap();
                    reg.commit(def).unwrap();
                });
            }
        });
        assert_eq!(reg.len(), 8);
    }
}
