//! Expected subscriptions recomputed from scratch.

use probevm_core::instrument::BindingId;
use probevm_core::interp::Engine;
use probevm_core::node::{NodeId, RootId};

use crate::filter::FilterSpec;

/// Every `(root, node, binding)` a full scan of the current trees selects,
/// sorted like `Engine::live_subscriptions`.
pub fn expected_subscriptions(
    engine: &Engine,
    bindings: &[(BindingId, FilterSpec)],
) -> Vec<(RootId, NodeId, BindingId)> {
    let mut out = Vec::new();
    for root in engine.root_ids() {
        let r = engine.root(root);
        for n in r.program_nodes() {
            for (id, spec) in bindings {
                if spec.matches_node(r.node(n)) {
                    out.push((root, n, *id));
                }
            }
        }
    }
    out.sort();
    out
}
