#include "prooflab/mdp.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace prooflab {

const char* decision_type_name(DecisionType t) {
  switch (t) {
    case DecisionType::Dec: return "dec";
    case DecisionType::Sol: return "sol";
    case DecisionType::Flat: return "flat";
  }
  return "?";
}

void ProverState::canonicalize() {
  std::sort(goals.begin(), goals.end(), [](const GoalToken& a, const GoalToken& b) {
    if (a.depth != b.depth) return a.depth > b.depth;  // deepest first
    if (a.uid != b.uid) return a.uid < b.uid;
    if (a.remaining != b.remaining) return a.remaining < b.remaining;
    return a.occurrence < b.occurrence;
  });
}

std::string ProverState::canonical_key() const {
  if (status == Status::Success) return "S";
  if (status == Status::Failure) return "F";
  ProverState copy = *this;
  copy.canonicalize();
  std::ostringstream os;
  for (const GoalToken& g : copy.goals) {
    os << g.uid << ':' << g.depth << ':' << g.remaining << ':' << g.occurrence << ';';
  }
  return os.str();
}

std::int32_t step(const Kernel& k, std::int32_t node, int choice) {
  if (node == kSuccessNode || node == kFailureNode) return node;  // absorbing
  const Kernel::Node& n = k.node(node);
  if (choice < 0 || choice >= static_cast<int>(n.next.size())) {
    throw ContractError("step: choice index out of range for the candidate set");
  }
  return n.next[static_cast<std::size_t>(choice)];
}

static double terminal_value(std::int32_t node) {
  return node == kSuccessNode ? 1.0 : 0.0;
}

std::vector<std::vector<double>> reach_value_table(const Kernel& k, const PolicyFn& pi,
                                                   int horizon) {
  if (horizon < 0) throw ContractError("reach_value_table: negative horizon");
  const std::size_t n = k.nodes.size();
  if (n > 1'000'000) throw ResourceError("reach_value_table: state count exceeds cap");
  std::vector<std::vector<double>> v(static_cast<std::size_t>(horizon) + 1,
                                     std::vector<double>(n, 0.0));
  for (int t = 1; t <= horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const Kernel::Node& node = k.nodes[i];
      std::span<const double> p = pi(node.cls);
      if (p.size() != node.next.size()) {
        throw ContractError("reach_value: policy undefined on a reachable class");
      }
      double acc = 0.0;
      for (std::size_t a = 0; a < node.next.size(); ++a) {
        std::int32_t nx = node.next[a];
        double val = nx >= 0 ? v[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(nx)]
                             : terminal_value(nx);
        acc += p[a] * val;
      }
      v[static_cast<std::size_t>(t)][i] = acc;
    }
  }
  return v;
}

double reach_value_exact(const Kernel& k, const PolicyFn& pi, int horizon,
                         std::int32_t start) {
  if (start == kSuccessNode) return 1.0;
  if (start == kFailureNode) return 0.0;
  auto v = reach_value_table(k, pi, horizon);
  return v[static_cast<std::size_t>(horizon)][static_cast<std::size_t>(start)];
}

int min_proof_length(const Kernel& k, std::int32_t start, int cap) {
  if (cap < 0) throw ContractError("min_proof_length: negative cap");
  if (start == kSuccessNode) return 0;
  if (start == kFailureNode) return kInfiniteLength;
  std::vector<int> dist(k.nodes.size(), -1);
  std::deque<std::int32_t> queue;
  dist[static_cast<std::size_t>(start)] = 0;
  queue.push_back(start);
  while (!queue.empty()) {
    std::int32_t cur = queue.front();
    queue.pop_front();
    int d = dist[static_cast<std::size_t>(cur)];
    if (d >= cap) continue;
    for (std::int32_t nx : k.node(cur).next) {
      if (nx == kSuccessNode) return d + 1;
      if (nx == kFailureNode) continue;
      if (dist[static_cast<std::size_t>(nx)] < 0) {
        dist[static_cast<std::size_t>(nx)] = d + 1;
        queue.push_back(nx);
      }
    }
  }
  return kInfiniteLength;
}

OptimalPolicy::OptimalPolicy(const Kernel& k) {
  const std::size_t n = k.nodes.size();
  // Backward distances to Success via BFS on the reversed edges would need an
  // explicit reverse graph; with a few thousand nodes a forward fixed point is
  // simpler and exact.
  std::vector<int> dist(n, kInfiniteLength);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::int32_t nx : k.nodes[i].next) {
        int cand;
        if (nx == kSuccessNode) {
          cand = 1;
        } else if (nx == kFailureNode) {
          continue;
        } else {
          int dn = dist[static_cast<std::size_t>(nx)];
          if (dn == kInfiniteLength) continue;
          cand = dn + 1;
        }
        if (cand < dist[i]) {
          dist[i] = cand;
          changed = true;
        }
      }
    }
  }
  rows_.resize(n);
  int max_cls = -1;
  for (std::size_t i = 0; i < n; ++i) max_cls = std::max(max_cls, k.nodes[i].cls);
  by_class_.assign(static_cast<std::size_t>(max_cls) + 1, {});
  for (std::size_t i = 0; i < n; ++i) {
    const Kernel::Node& node = k.nodes[i];
    int best = 0;
    int best_d = kInfiniteLength;
    for (std::size_t a = 0; a < node.next.size(); ++a) {
      std::int32_t nx = node.next[a];
      int d;
      if (nx == kSuccessNode) {
        d = 1;
      } else if (nx == kFailureNode) {
        d = kInfiniteLength;
      } else {
        int dn = dist[static_cast<std::size_t>(nx)];
        d = dn == kInfiniteLength ? kInfiniteLength : dn + 1;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(a);
      }
    }
    rows_[i].assign(node.next.size(), 0.0);
    rows_[i][static_cast<std::size_t>(best)] = 1.0;
    by_class_[static_cast<std::size_t>(node.cls)] = rows_[i];
  }
}

std::span<const double> OptimalPolicy::probs_for_node(std::int32_t node) const {
  return rows_.at(static_cast<std::size_t>(node));
}

PolicyFn OptimalPolicy::view(const Kernel&) const {
  const auto* rows = &by_class_;
  return [rows](int cls) -> std::span<const double> {
    const auto& row = rows->at(static_cast<std::size_t>(cls));
    return {row.data(), row.size()};
  };
}

Trace rollout(const Kernel& k, const PolicyFn& pi, int horizon, std::int32_t start,
              Rng& rng) {
  Trace trace;
  std::int32_t cur = start;
  for (int t = 0; t < horizon; ++t) {
    if (cur == kSuccessNode) {
      trace.final_status = Status::Success;
      return trace;
    }
    if (cur == kFailureNode) {
      trace.final_status = Status::Failure;
      return trace;
    }
    const Kernel::Node& node = k.node(cur);
    std::span<const double> p = pi(node.cls);
    if (p.size() != node.next.size()) {
      throw ContractError("rollout: policy undefined at a reached state");
    }
    int choice = rng.categorical(p);
    trace.steps.push_back(
        {t, cur, node.cls, choice, k.classes->at(node.cls).type});
    cur = node.next[static_cast<std::size_t>(choice)];
  }
  if (cur == kSuccessNode) {
    trace.final_status = Status::Success;
  } else if (cur == kFailureNode) {
    trace.final_status = Status::Failure;
  } else {
    trace.final_status = Status::Open;
    trace.final_node = cur;
  }
  return trace;
}

// ---- Random layered test MDPs ----------------------------------------------

static std::vector<double> random_floored_probs(int m, double rho, Rng& rng) {
  std::vector<double> e(static_cast<std::size_t>(m));
  double total = 0.0;
  for (double& x : e) {
    x = -std::log(1.0 - rng.uniform01());
    total += x;
  }
  std::vector<double> p(static_cast<std::size_t>(m));
  double free_mass = 1.0 - rho * m;
  for (int i = 0; i < m; ++i) {
    p[static_cast<std::size_t>(i)] = rho + free_mass * e[static_cast<std::size_t>(i)] / total;
  }
  return p;
}

RandomMdp random_mdp(const RandomMdpParams& params, Rng& rng) {
  if (params.num_layers < 1 || params.width < 1 || params.num_candidates < 2) {
    throw ParameterError("random_mdp: need >=1 layer, >=1 width, >=2 candidates");
  }
  if (!(params.rho > 0.0) || params.rho * params.num_candidates > 1.0) {
    throw ParameterError("random_mdp: rho out of range");
  }
  RandomMdp out;
  auto classes = std::make_shared<ClassTable>();
  const int L = params.num_layers;
  const int W = params.width;
  const int M = params.num_candidates;
  auto node_id = [W](int layer, int slot) { return layer * W + slot; };
  for (int layer = 0; layer < L; ++layer) {
    for (int slot = 0; slot < W; ++slot) {
      Kernel::Node node;
      node.cls = node_id(layer, slot);
      DecisionClass dc;
      dc.key = "rnd:" + std::to_string(layer) + ":" + std::to_string(slot);
      dc.type = DecisionType::Flat;
      dc.num_candidates = M;
      node.next.resize(static_cast<std::size_t>(M));
      for (int a = 0; a < M; ++a) {
        double u = rng.uniform01();
        std::int32_t nx;
        if (layer == L - 1) {
          nx = u < params.fail_prob ? kFailureNode : kSuccessNode;
        } else if (u < params.fail_prob) {
          nx = kFailureNode;
        } else if (u < params.fail_prob + params.early_success) {
          nx = kSuccessNode;
        } else {
          nx = node_id(layer + 1, rng.uniform_int(W));
        }
        node.next[static_cast<std::size_t>(a)] = nx;
      }
      // Keep Success reachable from every node so h_L(start) > 0.
      bool has_onward = false;
      for (std::int32_t nx : node.next) has_onward |= (nx != kFailureNode);
      if (!has_onward) {
        node.next[0] = layer == L - 1 ? kSuccessNode : node_id(layer + 1, rng.uniform_int(W));
      }
      dc.reference = 0;
      for (std::size_t a = 0; a < node.next.size(); ++a) {
        if (node.next[a] != kFailureNode) {
          dc.reference = static_cast<int>(a);
          break;
        }
      }
      classes->classes.push_back(dc);
      out.kernel.nodes.push_back(std::move(node));
      out.conditionals.push_back(random_floored_probs(M, params.rho, rng));
    }
  }
  out.kernel.start = 0;
  out.kernel.classes = classes;
  return out;
}

PolicyFn RandomMdp::q() const {
  const auto* rows = &conditionals;
  return [rows](int cls) -> std::span<const double> {
    const auto& row = rows->at(static_cast<std::size_t>(cls));
    return {row.data(), row.size()};
  };
}

}  // namespace prooflab
