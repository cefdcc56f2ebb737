#pragma once

#include <memory>
#include <string>
#include <vector>

#include "prooflab/cut_elim.hpp"
#include "prooflab/dag.hpp"
#include "prooflab/mdp.hpp"

namespace prooflab {

enum class Mode { Hier, Flat };
enum class Validity { Strict, Permissive };

const char* mode_name(Mode m);

// Generator action conditionals, aligned with a ClassTable: probs[c] is the
// categorical over the candidate set of class c, gaps[c] the realized top-k gap.
struct GeneratorConditionals {
  std::vector<std::vector<double>> probs;
  std::vector<double> gaps;
  int margin_k = 1;

  PolicyFn policy() const;
};

// Decision classes of the hierarchical view: one `dec` class per non-terminal
// uid, one `sol` class per (terminal uid, remaining). With homogeneous
// classes, nodes at equal (type, depth, remaining) share a class.
struct HierClassIndex {
  std::shared_ptr<const ClassTable> table;
  std::vector<int> dec_cls;                 // per uid; -1 on terminals
  std::vector<std::vector<int>> sol_cls;    // per uid, index rem-1; empty on non-terminals

  int cls_of(int uid, int remaining) const;
};

// Flat classes: one per (occurrence, remaining); sharing is invisible.
struct FlatClassIndex {
  std::shared_ptr<const ClassTable> table;
  std::vector<int> dec_cls;                 // per occ
  std::vector<std::vector<int>> sol_cls;    // per occ

  int cls_of(int occ, int remaining) const;
};

HierClassIndex build_hier_classes(const ProofDag& z, const GenParams& params, Rng& rng);
FlatClassIndex build_flat_classes(const ProofDag& z, const ProofTree& tree,
                                  const GenParams& params, const HierClassIndex& hier,
                                  Rng& rng);

// Descending rank profile with the gap g injected between ranks k and k+1:
// a flat head, a geometric tail, everything >= rho, unit sum.
std::vector<double> margin_rank_profile(int M, int k, double rho, double g);

// Draws one categorical per class: a margin-law gap g between ranks k and
// k+1, the reference action at rank 1, remaining mass spread geometrically
// above the floor. Deterministic given the rng stream.
GeneratorConditionals make_conditionals(const ClassTable& classes, const GenParams& params,
                                        Rng& rng);

// Flat conditionals mirror the hierarchical ones: an occurrence inherits the
// vector of its uid (cut elimination copies subproofs verbatim).
GeneratorConditionals mirror_flat_conditionals(const FlatClassIndex& flat,
                                               const HierClassIndex& hier,
                                               const ProofTree& tree,
                                               const GeneratorConditionals& hier_q);

// One benchmark problem: a latent DAG, its unfolding, designed conditionals,
// and compiled kernels for both protocols.
//
// Strict kernels model the verifier: the reference action advances the proof,
// every other candidate is rejected into the failure sink. Permissive kernels
// model the success-filtered observation process: the proof skeleton advances
// regardless and the chosen index is just the recorded label, so labeled
// traces sampled under q carry A ~ q(.|class) at every decision point.
struct Env {
  GenParams params;
  std::uint64_t seed = 0;
  ProofDag dag;
  ProofTree tree;
  DecisionCounts counts;

  HierClassIndex hier;
  FlatClassIndex flat;
  GeneratorConditionals hier_q;
  GeneratorConditionals flat_q;

  Kernel hier_strict, hier_perm, flat_strict, flat_perm;

  const Kernel& kernel(Mode m, Validity v) const;
  const ClassTable& classes(Mode m) const;
  const GeneratorConditionals& q(Mode m) const;
  long long num_decisions(Mode m) const;
};

Env make_env(const GenParams& params, std::uint64_t seed);
// Uses the seed embedded in the parameter block.
Env make_env(const GenParams& params);

// The canonical successful proof: reference actions in kernel order.
Trace reference_trace(const Env& env, Mode mode);

// One success-filtered labeled trace: a permissive rollout under q.
Trace sample_labeled_trace(const Env& env, Mode mode, Rng& rng);

}  // namespace prooflab
