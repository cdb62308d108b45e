//! Translation of definitions into a chain of dense/stream nodes.
//!
//! Every node contributes its `offset` additively: the absolute position of
//! a byte is the sum of all node offsets, plus `index * stride` at each stream
//! level, plus its position inside the terminal dense run.

use std::fmt;

use crate::pack::{push_run, Block};
use crate::typemodel::TypeDef;

/// A run of contiguous bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DenseData {
    pub offset: usize,
    pub extent: usize,
}

/// `count` repetitions of the child, `stride` bytes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamData {
    pub offset: usize,
    pub stride: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeData {
    Dense(DenseData),
    Stream(StreamData),
}

impl TypeData {
    pub fn dense(offset: usize, extent: usize) -> Self {
        TypeData::Dense(DenseData { offset, extent })
    }

    pub fn stream(offset: usize, stride: usize, count: usize) -> Self {
        TypeData::Stream(StreamData { offset, stride, count })
    }

    pub fn offset(&self) -> usize {
        match self {
            TypeData::Dense(d) => d.offset,
            TypeData::Stream(s) => s.offset,
        }
    }

    pub(crate) fn offset_mut(&mut self) -> &mut usize {
        match self {
            TypeData::Dense(d) => &mut d.offset,
            TypeData::Stream(s) => &mut s.offset,
        }
    }
}

impl fmt::Display for TypeData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeData::Dense(d) => write!(f, "Dense{{off {}, extent {}}}", d.offset, d.extent),
            TypeData::Stream(s) => write!(f, "Stream{{off {}, stride {}, count {}}}", s.offset, s.stride, s.count),
        }
    }
}

/// One level of the translated hierarchy. Stream nodes carry exactly one
/// child, dense nodes none.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypeNode {
    pub data: TypeData,
    pub child: Option<Box<TypeNode>>,
}

impl TypeNode {
    pub fn dense(offset: usize, extent: usize) -> Self {
        TypeNode {
            data: TypeData::dense(offset, extent),
            child: None,
        }
    }

    /// Wraps `child` under a stream node.
    pub fn stream(offset: usize, stride: usize, count: usize, child: TypeNode) -> Self {
        TypeNode {
            data: TypeData::stream(offset, stride, count),
            child: Some(Box::new(child)),
        }
    }

    /// Builds a chain from head-first data. Returns `None` for an empty list.
    pub fn from_chain(chain: &[TypeData]) -> Option<TypeNode> {
        let (last, rest) = chain.split_last()?;
        let mut node = TypeNode {
            data: *last,
            child: None,
        };
        for data in rest.iter().rev() {
            node = TypeNode {
                data: *data,
                child: Some(Box::new(node)),
            };
        }
        Some(node)
    }

    /// Head-first copy of the node data.
    pub fn to_chain(&self) -> Vec<TypeData> {
        self.iter().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TypeData> {
        std::iter::successors(Some(self), |n| n.child.as_deref()).map(|n| &n.data)
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dense nodes are leaves, stream nodes have a child.
    pub fn is_well_formed(&self) -> bool {
        std::iter::successors(Some(self), |n| n.child.as_deref()).all(|n| match n.data {
            TypeData::Dense(_) => n.child.is_none(),
            TypeData::Stream(_) => n.child.is_some(),
        })
    }

    /// Contiguous runs described by the chain, in index order (outermost
    /// level slowest), with runs that continue each other merged.
    pub fn blocks(&self) -> Vec<Block> {
        let chain = self.to_chain();
        let mut runs: Vec<Block> = Vec::new();
        for data in chain.iter().rev() {
            match data {
                TypeData::Dense(d) => {
                    runs = if d.extent == 0 { Vec::new() } else { vec![Block::new(0, d.extent)] };
                }
                TypeData::Stream(s) => {
                    let mut next = Vec::with_capacity(runs.len() * s.count);
                    for i in 0..s.count {
                        for b in &runs {
                            push_run(&mut next, Block::new(b.offset + i * s.stride, b.len));
                        }
                    }
                    runs = next;
                }
            }
        }
        let base: usize = chain.iter().map(TypeData::offset).sum();
        for b in &mut runs {
            b.offset += base;
        }
        runs
    }
}

impl fmt::Display for TypeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, data) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "{data}")?;
        }
        Ok(())
    }
}

/// Translates a definition node by node; no simplification happens here.
pub fn translate(def: &TypeDef) -> TypeNode {
    match def {
        TypeDef::Named(kind) => TypeNode::dense(0, kind.size()),
        TypeDef::Contiguous { count, inner } => TypeNode::stream(0, inner.extent(), *count, translate(inner)),
        TypeDef::Vector {
            count,
            blocklength,
            stride,
            inner,
        } => {
            let elem = inner.extent();
            let block = TypeNode::stream(0, elem, *blocklength, translate(inner));
            TypeNode::stream(0, stride * elem, *count, block)
        }
        TypeDef::Hvector {
            count,
            blocklength,
            stride,
            inner,
        } => {
            let block = TypeNode::stream(0, inner.extent(), *blocklength, translate(inner));
            TypeNode::stream(0, *stride, *count, block)
        }
        TypeDef::Subarray {
            sizes,
            subsizes,
            offsets,
            inner,
        } => {
            let mut node = translate(inner);
            let mut stride = inner.extent();
            for i in 0..sizes.len() {
                node = TypeNode::stream(offsets[i] * stride, stride, subsizes[i], node);
                stride *= sizes[i];
            }
            node
        }
    }
}
