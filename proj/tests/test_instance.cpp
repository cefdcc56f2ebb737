#include <doctest.h>

#include <cmath>
#include <map>

#include "prooflab/instance.hpp"
#include "prooflab/learners.hpp"
#include "test_helpers.hpp"

using namespace prooflab;
using namespace prooflab::testing;

TEST_CASE("compiled kernels are chains of the decision counts") {
  Env env = make_env(default_params(), 21);
  CHECK(env.hier_strict.num_nodes() == env.counts.n_hier);
  CHECK(env.flat_strict.num_nodes() == env.counts.n_flat);
  CHECK(min_proof_length(env.hier_strict, env.hier_strict.start, 1 << 20) ==
        static_cast<int>(env.counts.n_hier));
  CHECK(min_proof_length(env.flat_strict, env.flat_strict.start, 1 << 20) ==
        static_cast<int>(env.counts.n_flat));
}

TEST_CASE("strict kernels reject every non-reference action") {
  Env env = make_env(default_params(), 22);
  const Kernel& k = env.hier_strict;
  for (std::int32_t i = 0; i < k.num_nodes(); ++i) {
    const DecisionClass& dc = k.classes->at(k.node(i).cls);
    for (int a = 0; a < dc.num_candidates; ++a) {
      std::int32_t nxt = step(k, i, a);
      if (a == dc.reference) {
        CHECK(nxt != kFailureNode);
      } else {
        CHECK(nxt == kFailureNode);
      }
    }
  }
}

TEST_CASE("permissive kernels advance on every label") {
  Env env = make_env(default_params(), 23);
  const Kernel& k = env.flat_perm;
  for (std::int32_t i = 0; i < k.num_nodes(); ++i) {
    const DecisionClass& dc = k.classes->at(k.node(i).cls);
    std::int32_t want = step(k, i, dc.reference);
    for (int a = 0; a < dc.num_candidates; ++a) {
      CHECK(step(k, i, a) == want);
    }
  }
}

TEST_CASE("the reference trace is the unique minimal proof") {
  Env env = make_env(default_params(), 24);
  for (Mode mode : {Mode::Hier, Mode::Flat}) {
    Trace ref = reference_trace(env, mode);
    CHECK(ref.successful());
    CHECK(ref.length() == env.num_decisions(mode));
    // Replaying the reference actions through the strict kernel succeeds.
    const Kernel& k = env.kernel(mode, Validity::Strict);
    std::int32_t cur = k.start;
    for (const TraceStep& s : ref.steps) cur = step(k, cur, s.choice);
    CHECK(cur == kSuccessNode);
  }
}

TEST_CASE("labeled traces are success-filtered and carry q labels") {
  Env env = make_env(default_params(), 25);
  Rng rng(25);
  // Every labeled trace succeeds and visits each class exactly once.
  std::map<int, std::map<int, int>> counts;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    Trace t = sample_labeled_trace(env, Mode::Hier, rng);
    CHECK(t.successful());
    CHECK(t.length() == env.counts.n_hier);
    for (const TraceStep& s : t.steps) counts[s.cls][s.choice]++;
  }
  // Empirical label frequencies approach the designed conditionals.
  for (const auto& [cls, hist] : counts) {
    const auto& q = env.hier_q.probs[static_cast<std::size_t>(cls)];
    for (const auto& [choice, cnt] : hist) {
      double phat = static_cast<double>(cnt) / n;
      CHECK(std::abs(phat - q[static_cast<std::size_t>(choice)]) < 0.02);
    }
  }
}

TEST_CASE("flat conditionals mirror their uid's vectors when asked") {
  GenParams p = default_params();
  p.mirror_flat = true;
  Env env = make_env(p, 26);
  for (const TreeNode& t : env.tree.nodes) {
    const DagNode& n = env.dag.node(t.uid);
    if (n.terminal) {
      for (int rem = 1; rem <= n.solver_len; ++rem) {
        int fc = env.flat.cls_of(t.occ, rem);
        int hc = env.hier.cls_of(t.uid, rem);
        CHECK(env.flat_q.probs[static_cast<std::size_t>(fc)] ==
              env.hier_q.probs[static_cast<std::size_t>(hc)]);
        CHECK(env.flat.table->at(fc).reference == env.hier.table->at(hc).reference);
      }
    } else {
      int fc = env.flat.cls_of(t.occ, 0);
      int hc = env.hier.cls_of(t.uid, 0);
      CHECK(env.flat_q.probs[static_cast<std::size_t>(fc)] ==
            env.hier_q.probs[static_cast<std::size_t>(hc)]);
    }
  }
}

TEST_CASE("hier walk visits each unique node once; flat walk each occurrence") {
  Env env = make_env(default_params(), 27);
  // Hier classes: one dec class per non-terminal uid, L sol classes per terminal.
  long long expect_hier = 0;
  for (const DagNode& n : env.dag.nodes) expect_hier += n.terminal ? n.solver_len : 1;
  CHECK(expect_hier == env.counts.n_hier);
  CHECK(env.hier.table->size() == env.counts.n_hier);
  CHECK(env.flat.table->size() == env.counts.n_flat);
}

TEST_CASE("homogeneous classes collapse by (type, depth, remaining)") {
  GenParams p = default_params();
  p.homogeneous_classes = true;
  Env env = make_env(p, 28);
  std::map<std::string, int> keys;
  for (int c = 0; c < env.hier.table->size(); ++c) keys[env.hier.table->at(c).key]++;
  for (const auto& [key, cnt] : keys) CHECK(cnt == 1);
  // Nodes at the same depth share a decomposition class.
  int c0 = env.hier.cls_of(1, 0);
  int c1 = env.hier.cls_of(2, 0);
  if (!env.dag.node(1).terminal && !env.dag.node(2).terminal) CHECK(c0 == c1);
}

TEST_CASE("state snapshots carry the open-goal stacks") {
  Env env = make_env(default_params(), 29);
  const Kernel& k = env.hier_strict;
  // The first node's stack is just the root goal.
  REQUIRE_FALSE(k.node(0).goals.empty());
  CHECK(k.node(0).goals.back().uid == env.dag.root);
  // Stacks are never empty at a decision point.
  for (std::int32_t i = 0; i < k.num_nodes(); ++i) {
    CHECK_FALSE(k.node(i).goals.empty());
  }
}
