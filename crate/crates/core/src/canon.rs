//! Canonicalization of translated chains.
//!
//! Four rewrites run in turn until a full round changes nothing:
//!
//!   * dense folding: a stream whose stride equals its dense child's extent
//!     becomes one larger dense run;
//!   * stream elision: streams of a single element disappear;
//!   * stream flattening: a stream over a stream that continues the child's
//!     pitch becomes one longer stream;
//!   * sorting: streams are ordered by stride, largest at the head.
//!
//! Removed nodes hand their offset to a surviving node, so the sum of offsets
//! along the chain is conserved by every rewrite.

use std::cmp::Reverse;

use crate::error::{Error, Result};
use crate::ir::{StreamData, TypeData, TypeNode};

fn chain_of(node: &TypeNode) -> Vec<TypeData> {
    node.to_chain()
}

fn node_of(chain: &[TypeData]) -> TypeNode {
    TypeNode::from_chain(chain).expect("rewrites never empty a chain")
}

fn fold_dense(chain: &mut Vec<TypeData>) -> bool {
    let mut changed = false;
    while chain.len() >= 2 {
        let n = chain.len();
        let (TypeData::Stream(parent), TypeData::Dense(child)) = (chain[n - 2], chain[n - 1]) else {
            break;
        };
        if child.extent != parent.stride {
            break;
        }
        chain.pop();
        chain[n - 2] = TypeData::dense(parent.offset + child.offset, parent.count * parent.stride);
        changed = true;
    }
    changed
}

fn elide_streams(chain: &mut Vec<TypeData>) -> bool {
    let mut changed = false;
    let mut i = chain.len();
    while i > 0 {
        i -= 1;
        if let TypeData::Stream(s) = chain[i] {
            if s.count == 1 && i + 1 < chain.len() {
                chain.remove(i);
                *chain[i].offset_mut() += s.offset;
                changed = true;
            }
        }
    }
    changed
}

fn flatten_streams(chain: &mut Vec<TypeData>) -> bool {
    let mut changed = false;
    let mut i = chain.len().saturating_sub(1);
    while i > 0 {
        i -= 1;
        if let (TypeData::Stream(parent), TypeData::Stream(child)) = (chain[i], chain[i + 1]) {
            if parent.stride == child.count * child.stride {
                chain[i] = TypeData::stream(parent.offset + child.offset, child.stride, parent.count * child.count);
                chain.remove(i + 1);
                changed = true;
            }
        }
    }
    changed
}

fn sort_key(s: &StreamData) -> (Reverse<usize>, Reverse<usize>, usize) {
    (Reverse(s.stride), Reverse(s.count), s.offset)
}

fn sort_chain(chain: &mut [TypeData]) -> bool {
    let Some((_, streams)) = chain.split_last_mut() else {
        return false;
    };
    let mut data: Vec<StreamData> = streams
        .iter()
        .filter_map(|d| match d {
            TypeData::Stream(s) => Some(*s),
            TypeData::Dense(_) => None,
        })
        .collect();
    if data.len() != streams.len() {
        // Malformed chain; leave it alone.
        return false;
    }
    if data.windows(2).all(|w| sort_key(&w[0]) <= sort_key(&w[1])) {
        return false;
    }
    data.sort_by_key(sort_key);
    for (slot, s) in streams.iter_mut().zip(data) {
        *slot = TypeData::Stream(s);
    }
    true
}

/// Folds stream-over-dense pairs whose stride matches the dense extent,
/// bottom-up.
pub fn dense_folding(node: TypeNode) -> (TypeNode, bool) {
    let mut chain = chain_of(&node);
    let changed = fold_dense(&mut chain);
    (node_of(&chain), changed)
}

/// Removes every single-element stream, including a count-1 head.
pub fn stream_elision(node: TypeNode) -> (TypeNode, bool) {
    let mut chain = chain_of(&node);
    let changed = elide_streams(&mut chain);
    (node_of(&chain), changed)
}

/// Merges stream pairs where `parent.stride == child.count * child.stride`.
pub fn stream_flatten(node: TypeNode) -> (TypeNode, bool) {
    let mut chain = chain_of(&node);
    let changed = flatten_streams(&mut chain);
    (node_of(&chain), changed)
}

/// Orders the streams above the dense base by stride (descending), then
/// count (descending), then offset (ascending).
pub fn sort_streams(node: TypeNode) -> (TypeNode, bool) {
    let mut chain = chain_of(&node);
    let changed = sort_chain(&mut chain);
    (node_of(&chain), changed)
}

/// Rewrites `node` to canonical form.
///
/// Types that describe no bytes collapse to an empty dense run. A stream
/// with stride 0 and more than one element is rejected with
/// [`Error::InvalidLayout`].
pub fn simplify(node: TypeNode) -> Result<TypeNode> {
    simplify_counted(node).map(|(n, _)| n)
}

/// [`simplify`], also returning the number of rounds run (the last round
/// being the one that changed nothing).
pub fn simplify_counted(node: TypeNode) -> Result<(TypeNode, usize)> {
    if !node.is_well_formed() {
        return Err(Error::InvalidLayout(format!("malformed chain: {node}")));
    }
    let mut chain = chain_of(&node);

    let empty = chain.iter().any(|d| match d {
        TypeData::Dense(d) => d.extent == 0,
        TypeData::Stream(s) => s.count == 0,
    });
    if empty {
        return Ok((TypeNode::dense(0, 0), 0));
    }
    if let Some(TypeData::Stream(s)) = chain
        .iter()
        .find(|d| matches!(d, TypeData::Stream(s) if s.stride == 0 && s.count > 1))
    {
        return Err(Error::InvalidLayout(format!(
            "stream of {} coincident elements (stride 0)",
            s.count
        )));
    }

    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut changed = fold_dense(&mut chain);
        changed |= elide_streams(&mut chain);
        changed |= flatten_streams(&mut chain);
        changed |= sort_chain(&mut chain);
        if !changed {
            break;
        }
    }
    Ok((node_of(&chain), rounds))
}
