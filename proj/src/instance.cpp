#include "prooflab/instance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace prooflab {

const char* mode_name(Mode m) { return m == Mode::Hier ? "hier" : "flat"; }

PolicyFn GeneratorConditionals::policy() const {
  const auto* rows = &probs;
  return [rows](int cls) -> std::span<const double> {
    const auto& row = rows->at(static_cast<std::size_t>(cls));
    return {row.data(), row.size()};
  };
}

int HierClassIndex::cls_of(int uid, int remaining) const {
  if (remaining > 0) return sol_cls.at(static_cast<std::size_t>(uid)).at(static_cast<std::size_t>(remaining - 1));
  return dec_cls.at(static_cast<std::size_t>(uid));
}

int FlatClassIndex::cls_of(int occ, int remaining) const {
  if (remaining > 0) return sol_cls.at(static_cast<std::size_t>(occ)).at(static_cast<std::size_t>(remaining - 1));
  return dec_cls.at(static_cast<std::size_t>(occ));
}

HierClassIndex build_hier_classes(const ProofDag& z, const GenParams& params, Rng& rng) {
  HierClassIndex idx;
  auto table = std::make_shared<ClassTable>();
  idx.dec_cls.assign(z.nodes.size(), -1);
  idx.sol_cls.assign(z.nodes.size(), {});
  std::map<std::string, int> homo;  // key -> cls, when classes are shared

  auto intern = [&](const std::string& key, DecisionType type, const DagNode& n,
                    int remaining) {
    if (params.homogeneous_classes) {
      auto it = homo.find(key);
      if (it != homo.end()) return it->second;
    }
    DecisionClass dc;
    dc.key = key;
    dc.type = type;
    dc.num_candidates = params.M;
    dc.reference = rng.uniform_int(params.M);
    dc.uid = params.homogeneous_classes ? -1 : n.uid;
    dc.depth = n.depth;
    dc.remaining = remaining;
    int cls = table->size();
    table->classes.push_back(std::move(dc));
    if (params.homogeneous_classes) homo.emplace(key, cls);
    return cls;
  };

  for (const DagNode& n : z.nodes) {
    if (n.terminal) {
      idx.sol_cls[static_cast<std::size_t>(n.uid)].resize(static_cast<std::size_t>(n.solver_len));
      for (int rem = 1; rem <= n.solver_len; ++rem) {
        std::string key = params.homogeneous_classes
                              ? "sol:d" + std::to_string(n.depth) + ":r" + std::to_string(rem)
                              : "sol:u" + std::to_string(n.uid) + ":r" + std::to_string(rem);
        idx.sol_cls[static_cast<std::size_t>(n.uid)][static_cast<std::size_t>(rem - 1)] =
            intern(key, DecisionType::Sol, n, rem);
      }
    } else {
      std::string key = params.homogeneous_classes ? "dec:d" + std::to_string(n.depth)
                                                   : "dec:u" + std::to_string(n.uid);
      idx.dec_cls[static_cast<std::size_t>(n.uid)] = intern(key, DecisionType::Dec, n, 0);
    }
  }
  idx.table = table;
  return idx;
}

FlatClassIndex build_flat_classes(const ProofDag& z, const ProofTree& tree,
                                  const GenParams& params, const HierClassIndex& hier,
                                  Rng& rng) {
  FlatClassIndex idx;
  auto table = std::make_shared<ClassTable>();
  idx.dec_cls.assign(tree.nodes.size(), -1);
  idx.sol_cls.assign(tree.nodes.size(), {});
  // Candidate sets at unfolded contexts are their own sets: references are
  // fresh labels unless the instance mirrors its uid conditionals.
  auto reference_for = [&](int uid, int rem) {
    if (params.mirror_flat) return hier.table->at(hier.cls_of(uid, rem)).reference;
    return rng.uniform_int(params.M);
  };
  for (const TreeNode& t : tree.nodes) {
    const DagNode& n = z.node(t.uid);
    if (n.terminal) {
      idx.sol_cls[static_cast<std::size_t>(t.occ)].resize(static_cast<std::size_t>(n.solver_len));
      for (int rem = 1; rem <= n.solver_len; ++rem) {
        DecisionClass dc;
        dc.key = "flat:o" + std::to_string(t.occ) + ":r" + std::to_string(rem);
        dc.type = DecisionType::Flat;
        dc.num_candidates = params.M;
        dc.reference = reference_for(t.uid, rem);
        dc.uid = t.uid;
        dc.depth = t.depth;
        dc.remaining = rem;
        dc.occurrence = t.occ;
        idx.sol_cls[static_cast<std::size_t>(t.occ)][static_cast<std::size_t>(rem - 1)] = table->size();
        table->classes.push_back(std::move(dc));
      }
    } else {
      DecisionClass dc;
      dc.key = "flat:o" + std::to_string(t.occ);
      dc.type = DecisionType::Flat;
      dc.num_candidates = params.M;
      dc.reference = reference_for(t.uid, 0);
      dc.uid = t.uid;
      dc.depth = t.depth;
      dc.remaining = 0;
      dc.occurrence = t.occ;
      idx.dec_cls[static_cast<std::size_t>(t.occ)] = table->size();
      table->classes.push_back(std::move(dc));
    }
  }
  idx.table = table;
  return idx;
}

// Gap with distribution function min(1, C0 u^beta), truncated to [0, g_max].
static double sample_gap(const GenParams& params, double g_max, Rng& rng) {
  if (std::isinf(params.beta)) return g_max;
  double u = rng.uniform01();
  double g = std::pow(u / params.C0, 1.0 / params.beta);
  return std::min(g, g_max);
}

std::vector<double> margin_rank_profile(int M, int k, double rho, double g) {
  const double kTailDecay = 0.5;
  double E = 1.0 - rho * M;
  double tail_geo = (1.0 - std::pow(kTailDecay, M - k)) / (1.0 - kTailDecay);
  double b = (E - k * g) / (k + tail_geo);
  std::vector<double> v(static_cast<std::size_t>(M));
  for (int i = 0; i < k; ++i) v[static_cast<std::size_t>(i)] = rho + b + g;
  for (int i = k; i < M; ++i) {
    v[static_cast<std::size_t>(i)] = rho + b * std::pow(kTailDecay, i - k);
  }
  return v;
}

GeneratorConditionals make_conditionals(const ClassTable& classes, const GenParams& params,
                                        Rng& rng) {
  if (params.rho * params.M > 1.0) {
    throw ParameterError("make_conditionals: floor times candidate count exceeds 1");
  }
  GeneratorConditionals q;
  q.margin_k = params.margin_k;
  const int M = params.M;
  const int k = params.margin_k;
  const double g_max = (1.0 - params.rho * M) / k;
  q.probs.reserve(classes.classes.size());
  q.gaps.reserve(classes.classes.size());
  for (const DecisionClass& dc : classes.classes) {
    double g = sample_gap(params, g_max, rng);
    std::vector<double> by_rank = margin_rank_profile(M, k, params.rho, g);
    // Rank 1 goes to the reference action; remaining ranks to the other
    // candidates in shuffled order.
    std::vector<int> others;
    others.reserve(static_cast<std::size_t>(M - 1));
    for (int a = 0; a < M; ++a) {
      if (a != dc.reference) others.push_back(a);
    }
    rng.shuffle(others);
    std::vector<double> row(static_cast<std::size_t>(M));
    row[static_cast<std::size_t>(dc.reference)] = by_rank[0];
    for (int i = 0; i < M - 1; ++i) {
      row[static_cast<std::size_t>(others[static_cast<std::size_t>(i)])] =
          by_rank[static_cast<std::size_t>(i + 1)];
    }
    q.probs.push_back(std::move(row));
    q.gaps.push_back(g);
  }
  return q;
}

GeneratorConditionals mirror_flat_conditionals(const FlatClassIndex& flat,
                                               const HierClassIndex& hier,
                                               const ProofTree& tree,
                                               const GeneratorConditionals& hier_q) {
  GeneratorConditionals q;
  q.margin_k = hier_q.margin_k;
  q.probs.resize(flat.table->classes.size());
  q.gaps.resize(flat.table->classes.size());
  for (const TreeNode& t : tree.nodes) {
    int dec = flat.dec_cls[static_cast<std::size_t>(t.occ)];
    if (dec >= 0) {
      int src = hier.cls_of(t.uid, 0);
      q.probs[static_cast<std::size_t>(dec)] = hier_q.probs[static_cast<std::size_t>(src)];
      q.gaps[static_cast<std::size_t>(dec)] = hier_q.gaps[static_cast<std::size_t>(src)];
    }
    const auto& sols = flat.sol_cls[static_cast<std::size_t>(t.occ)];
    for (int rem = 1; rem <= static_cast<int>(sols.size()); ++rem) {
      int src = hier.cls_of(t.uid, rem);
      auto c = static_cast<std::size_t>(sols[static_cast<std::size_t>(rem - 1)]);
      q.probs[c] = hier_q.probs[static_cast<std::size_t>(src)];
      q.gaps[c] = hier_q.gaps[static_cast<std::size_t>(src)];
    }
  }
  return q;
}

// ---- Kernel compilation ------------------------------------------------------

namespace {

// One emitted decision point of the canonical walk.
struct WalkStep {
  int cls;
  std::vector<GoalToken> stack;  // open goals at decision time
};

// Hier walk: depth-first over unique nodes; a child enters the stack only the
// first time any parent pushes it (sharing).
void hier_walk(const ProofDag& z, const HierClassIndex& idx, std::vector<WalkStep>& out) {
  std::vector<char> seen(z.nodes.size(), 0);
  std::vector<GoalToken> stack;
  auto token = [&](int uid) {
    const DagNode& n = z.node(uid);
    return GoalToken{uid, n.depth, 0, n.terminal ? n.solver_len : 0};
  };
  seen[static_cast<std::size_t>(z.root)] = 1;
  stack.push_back(token(z.root));
  while (!stack.empty()) {
    GoalToken g = stack.back();
    const DagNode& n = z.node(g.uid);
    if (n.terminal) {
      out.push_back({idx.cls_of(g.uid, g.remaining), stack});
      if (g.remaining > 1) {
        stack.back().remaining--;
      } else {
        stack.pop_back();
      }
    } else {
      out.push_back({idx.cls_of(g.uid, 0), stack});
      stack.pop_back();
      for (std::size_t i = n.children.size(); i-- > 0;) {
        int c = n.children[i];
        if (!seen[static_cast<std::size_t>(c)]) {
          seen[static_cast<std::size_t>(c)] = 1;
          stack.push_back(token(c));
        }
      }
    }
  }
}

void flat_walk(const ProofDag& z, const ProofTree& tree, const FlatClassIndex& idx,
               std::vector<WalkStep>& out) {
  std::vector<GoalToken> stack;
  auto token = [&](int occ) {
    const TreeNode& t = tree.node(occ);
    const DagNode& n = z.node(t.uid);
    return GoalToken{t.uid, t.depth, occ, n.terminal ? n.solver_len : 0};
  };
  stack.push_back(token(tree.root));
  while (!stack.empty()) {
    GoalToken g = stack.back();
    const TreeNode& t = tree.node(g.occurrence);
    const DagNode& n = z.node(g.uid);
    if (n.terminal) {
      out.push_back({idx.cls_of(g.occurrence, g.remaining), stack});
      if (g.remaining > 1) {
        stack.back().remaining--;
      } else {
        stack.pop_back();
      }
    } else {
      out.push_back({idx.cls_of(g.occurrence, 0), stack});
      stack.pop_back();
      for (std::size_t i = t.children.size(); i-- > 0;) {
        stack.push_back(token(t.children[static_cast<std::size_t>(i)]));
      }
    }
  }
}

Kernel compile_walk(const std::vector<WalkStep>& walk,
                    std::shared_ptr<const ClassTable> classes, Validity validity) {
  Kernel k;
  k.classes = std::move(classes);
  k.start = 0;
  k.nodes.reserve(walk.size());
  for (std::size_t i = 0; i < walk.size(); ++i) {
    const DecisionClass& dc = k.classes->at(walk[i].cls);
    Kernel::Node node;
    node.cls = walk[i].cls;
    node.goals = walk[i].stack;
    std::int32_t onward =
        i + 1 < walk.size() ? static_cast<std::int32_t>(i + 1) : kSuccessNode;
    node.next.assign(static_cast<std::size_t>(dc.num_candidates),
                     validity == Validity::Strict ? kFailureNode : onward);
    node.next[static_cast<std::size_t>(dc.reference)] = onward;
    k.nodes.push_back(std::move(node));
  }
  if (k.nodes.empty()) {
    throw ContractError("compile_walk: empty decision walk");
  }
  return k;
}

}  // namespace

const Kernel& Env::kernel(Mode m, Validity v) const {
  if (m == Mode::Hier) return v == Validity::Strict ? hier_strict : hier_perm;
  return v == Validity::Strict ? flat_strict : flat_perm;
}

const ClassTable& Env::classes(Mode m) const {
  return m == Mode::Hier ? *hier.table : *flat.table;
}

const GeneratorConditionals& Env::q(Mode m) const {
  return m == Mode::Hier ? hier_q : flat_q;
}

long long Env::num_decisions(Mode m) const {
  return m == Mode::Hier ? counts.n_hier : counts.n_flat;
}

Env make_env(const GenParams& params, std::uint64_t seed) {
  params.validate();
  Env env;
  env.params = params;
  env.seed = seed;
  Rng dag_rng = Rng::stream(seed, 0x11);
  Rng cls_rng = Rng::stream(seed, 0x22);
  Rng cond_rng = Rng::stream(seed, 0x33);
  env.dag = sample_dag(params, dag_rng);
  env.tree = unfold(env.dag);
  env.counts = decision_counts(env.dag, env.tree);
  env.hier = build_hier_classes(env.dag, params, cls_rng);
  env.flat = build_flat_classes(env.dag, env.tree, params, env.hier, cls_rng);
  env.hier_q = make_conditionals(*env.hier.table, params, cond_rng);
  if (params.mirror_flat) {
    env.flat_q = mirror_flat_conditionals(env.flat, env.hier, env.tree, env.hier_q);
  } else {
    Rng flat_rng = Rng::stream(seed, 0x44);
    env.flat_q = make_conditionals(*env.flat.table, params, flat_rng);
  }

  std::vector<WalkStep> hw, fw;
  hier_walk(env.dag, env.hier, hw);
  flat_walk(env.dag, env.tree, env.flat, fw);
  env.hier_strict = compile_walk(hw, env.hier.table, Validity::Strict);
  env.hier_perm = compile_walk(hw, env.hier.table, Validity::Permissive);
  env.flat_strict = compile_walk(fw, env.flat.table, Validity::Strict);
  env.flat_perm = compile_walk(fw, env.flat.table, Validity::Permissive);
  return env;
}

Env make_env(const GenParams& params) { return make_env(params, params.seed); }

Trace reference_trace(const Env& env, Mode mode) {
  const Kernel& k = env.kernel(mode, Validity::Strict);
  Trace trace;
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(k.nodes.size()); ++i) {
    const Kernel::Node& node = k.node(i);
    const DecisionClass& dc = k.classes->at(node.cls);
    trace.steps.push_back({static_cast<int>(i), i, node.cls, dc.reference, dc.type});
  }
  trace.final_status = Status::Success;
  return trace;
}

Trace sample_labeled_trace(const Env& env, Mode mode, Rng& rng) {
  const Kernel& k = env.kernel(mode, Validity::Permissive);
  PolicyFn q = env.q(mode).policy();
  return rollout(k, q, k.num_nodes() + 1, k.start, rng);
}

}  // namespace prooflab
