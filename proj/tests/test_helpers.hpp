#pragma once

#include <memory>
#include <vector>

#include "prooflab/instance.hpp"
#include "prooflab/mdp.hpp"

namespace prooflab::testing {

// Chain kernel with `len` forced steps: action `ref` advances, everything
// else fails. Class c has M candidates.
inline Kernel chain_kernel(int len, int M = 2, int ref = 0) {
  Kernel k;
  auto classes = std::make_shared<ClassTable>();
  for (int i = 0; i < len; ++i) {
    DecisionClass dc;
    dc.key = "chain:" + std::to_string(i);
    dc.type = DecisionType::Flat;
    dc.num_candidates = M;
    dc.reference = ref;
    classes->classes.push_back(dc);
    Kernel::Node node;
    node.cls = i;
    node.next.assign(static_cast<std::size_t>(M), kFailureNode);
    node.next[static_cast<std::size_t>(ref)] =
        i + 1 < len ? static_cast<std::int32_t>(i + 1) : kSuccessNode;
    k.nodes.push_back(std::move(node));
  }
  k.start = 0;
  k.classes = classes;
  return k;
}

// Fixed-probability policy shared by every class.
struct FixedPolicy {
  std::vector<double> row;
  PolicyFn fn() const {
    const auto* r = &row;
    return [r](int) -> std::span<const double> { return {r->data(), r->size()}; };
  }
};

inline GenParams default_params() {
  GenParams p;
  p.D = 2;
  p.b_eff = 2;
  p.r = 2;
  p.alpha = 0.5;
  p.K0 = 8.0;
  p.M = 4;
  p.beta = 2.0;
  p.C0 = 4.0;
  p.rho = 0.02;
  return p;
}

}  // namespace prooflab::testing
