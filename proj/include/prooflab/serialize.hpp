#pragma once

#include <string>

#include "prooflab/cut_elim.hpp"
#include "prooflab/dag.hpp"
#include "prooflab/learners.hpp"
#include "prooflab/mdp.hpp"

namespace prooflab {

// Line-oriented versioned text formats. Writers are deterministic; reading a
// written file and writing it again reproduces the bytes exactly.

std::string write_dag(const ProofDag& z);
ProofDag read_dag(const std::string& text);

std::string write_tree(const ProofDag& z, const ProofTree& tree);
ProofTree read_tree(const std::string& text);

std::string write_trace(const Trace& trace, const ClassTable& classes);
Trace read_trace(const std::string& text);

std::string write_dataset(const Dataset& data);
Dataset read_dataset(const std::string& text);

std::string write_policy(const TabularPolicy& policy);
TabularPolicy read_policy(const std::string& text);

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace prooflab
