#include "prooflab/serialize.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace prooflab {

std::string format_double(double x) {
  char buf[64];
  // Shortest round-trip representation.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == x) return buf;
  }
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ResourceError("write_file: cannot open " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("read_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

// Token reader for the line formats.
struct LineParser {
  std::istringstream in;
  std::string line;
  int lineno = 0;

  explicit LineParser(const std::string& text) : in(text) {}

  bool next() {
    while (std::getline(in, line)) {
      lineno++;
      if (!line.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError("line " + std::to_string(lineno) + ": " + why);
  }
};

void expect_header(LineParser& p, const std::string& header) {
  if (!p.next() || p.line != header) {
    throw ParseError("missing or wrong header; expected '" + header + "'");
  }
}

DecisionType parse_type(const std::string& s, LineParser& p) {
  if (s == "dec") return DecisionType::Dec;
  if (s == "sol") return DecisionType::Sol;
  if (s == "flat") return DecisionType::Flat;
  p.fail("unknown decision type '" + s + "'");
}

}  // namespace

std::string write_dag(const ProofDag& z) {
  std::ostringstream os;
  os << "prooflab-dag v1\n";
  for (const DagNode& n : z.nodes) {
    os << "node " << n.uid << ' ' << n.depth << ' ' << (n.terminal ? 1 : 0) << ' '
       << n.solver_len << '\n';
  }
  for (const DagNode& n : z.nodes) {
    for (int c : n.children) os << "edge " << n.uid << ' ' << c << '\n';
  }
  return os.str();
}

ProofDag read_dag(const std::string& text) {
  LineParser p(text);
  expect_header(p, "prooflab-dag v1");
  ProofDag z;
  while (p.next()) {
    std::istringstream ls(p.line);
    std::string kind;
    ls >> kind;
    if (kind == "node") {
      DagNode n;
      int term = 0;
      if (!(ls >> n.uid >> n.depth >> term >> n.solver_len)) p.fail("bad node line");
      n.terminal = term != 0;
      if (n.uid != z.num_nodes()) p.fail("nodes must appear in uid order");
      z.max_depth = std::max(z.max_depth, n.depth);
      z.nodes.push_back(std::move(n));
    } else if (kind == "edge") {
      int a = 0, b = 0;
      if (!(ls >> a >> b)) p.fail("bad edge line");
      if (a < 0 || a >= z.num_nodes() || b < 0 || b >= z.num_nodes()) p.fail("edge out of range");
      z.nodes[static_cast<std::size_t>(a)].children.push_back(b);
    } else {
      p.fail("unknown record '" + kind + "'");
    }
  }
  if (z.nodes.empty()) throw ParseError("dag file without nodes");
  for (const DagNode& n : z.nodes) {
    if (n.depth == 0) {
      z.root = n.uid;
      break;
    }
  }
  return z;
}

std::string write_tree(const ProofDag& z, const ProofTree& tree) {
  std::ostringstream os;
  os << "prooflab-tree v1\n";
  for (const TreeNode& t : tree.nodes) {
    const DagNode& n = z.node(t.uid);
    os << "node " << t.occ << ' ' << t.uid << ' ' << t.depth << ' ' << (n.terminal ? 1 : 0)
       << ' ' << n.solver_len << '\n';
  }
  for (const TreeNode& t : tree.nodes) {
    for (int c : t.children) os << "edge " << t.occ << ' ' << c << '\n';
  }
  return os.str();
}

ProofTree read_tree(const std::string& text) {
  LineParser p(text);
  expect_header(p, "prooflab-tree v1");
  ProofTree tree;
  while (p.next()) {
    std::istringstream ls(p.line);
    std::string kind;
    ls >> kind;
    if (kind == "node") {
      TreeNode t;
      int term = 0, len = 0;
      if (!(ls >> t.occ >> t.uid >> t.depth >> term >> len)) p.fail("bad node line");
      if (t.occ != tree.num_nodes()) p.fail("nodes must appear in occurrence order");
      tree.nodes.push_back(std::move(t));
    } else if (kind == "edge") {
      int a = 0, b = 0;
      if (!(ls >> a >> b)) p.fail("bad edge line");
      tree.nodes.at(static_cast<std::size_t>(a)).children.push_back(b);
    } else {
      p.fail("unknown record '" + kind + "'");
    }
  }
  return tree;
}

std::string write_trace(const Trace& trace, const ClassTable& classes) {
  std::ostringstream os;
  os << "prooflab-trace v1\n";
  for (const TraceStep& s : trace.steps) {
    os << "step " << s.t << ' ' << classes.at(s.cls).key << ' ' << s.cls << ' ' << s.choice
       << ' ' << decision_type_name(s.type) << '\n';
  }
  os << "end ";
  switch (trace.final_status) {
    case Status::Success: os << "success"; break;
    case Status::Failure: os << "failure"; break;
    case Status::Open: os << "open"; break;
  }
  os << '\n';
  return os.str();
}

Trace read_trace(const std::string& text) {
  LineParser p(text);
  expect_header(p, "prooflab-trace v1");
  Trace trace;
  bool ended = false;
  while (p.next()) {
    std::istringstream ls(p.line);
    std::string kind;
    ls >> kind;
    if (kind == "step") {
      TraceStep s;
      std::string key, type;
      if (!(ls >> s.t >> key >> s.cls >> s.choice >> type)) p.fail("bad step line");
      s.type = parse_type(type, p);
      trace.steps.push_back(s);
    } else if (kind == "end") {
      std::string status;
      ls >> status;
      if (status == "success") {
        trace.final_status = Status::Success;
      } else if (status == "failure") {
        trace.final_status = Status::Failure;
      } else if (status == "open") {
        trace.final_status = Status::Open;
      } else {
        p.fail("unknown end status");
      }
      ended = true;
    } else {
      p.fail("unknown record '" + kind + "'");
    }
  }
  if (!ended) throw ParseError("trace file without end record");
  return trace;
}

std::string write_dataset(const Dataset& data) {
  std::ostringstream os;
  os << "prooflab-dataset v1\n";
  os << "traces " << data.num_traces << '\n';
  for (const DatasetRow& r : data.rows) {
    os << "row " << r.cls << ' ' << r.choice << ' ' << decision_type_name(r.type) << ' '
       << r.trace_id << '\n';
  }
  return os.str();
}

Dataset read_dataset(const std::string& text) {
  LineParser p(text);
  expect_header(p, "prooflab-dataset v1");
  Dataset data;
  while (p.next()) {
    std::istringstream ls(p.line);
    std::string kind;
    ls >> kind;
    if (kind == "traces") {
      if (!(ls >> data.num_traces)) p.fail("bad traces line");
    } else if (kind == "row") {
      DatasetRow r;
      std::string type;
      if (!(ls >> r.cls >> r.choice >> type >> r.trace_id)) p.fail("bad row line");
      r.type = parse_type(type, p);
      data.rows.push_back(r);
    } else {
      p.fail("unknown record '" + kind + "'");
    }
  }
  return data;
}

std::string write_policy(const TabularPolicy& policy) {
  std::ostringstream os;
  os << "prooflab-policy v1\n";
  os << "rho " << format_double(policy.rho) << '\n';
  for (std::size_t c = 0; c < policy.rows.size(); ++c) {
    os << "row " << c;
    for (double v : policy.rows[c]) os << ' ' << format_double(v);
    os << '\n';
  }
  return os.str();
}

TabularPolicy read_policy(const std::string& text) {
  LineParser p(text);
  expect_header(p, "prooflab-policy v1");
  TabularPolicy policy;
  while (p.next()) {
    std::istringstream ls(p.line);
    std::string kind;
    ls >> kind;
    if (kind == "rho") {
      if (!(ls >> policy.rho)) p.fail("bad rho line");
    } else if (kind == "row") {
      std::size_t c = 0;
      if (!(ls >> c)) p.fail("bad row line");
      if (c != policy.rows.size()) p.fail("rows must appear in class order");
      std::vector<double> row;
      double v;
      while (ls >> v) row.push_back(v);
      if (row.empty()) p.fail("empty policy row");
      policy.rows.push_back(std::move(row));
    } else {
      p.fail("unknown record '" + kind + "'");
    }
  }
  return policy;
}

}  // namespace prooflab
