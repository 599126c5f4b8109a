#pragma once

// Thin builders pairing a parameter-name prefix with the graph ops that use
// it: define() registers tensors in a ParameterSet, the apply methods pull
// them into a Graph by name.

#include <string>
#include <utility>
#include <vector>

#include "tminer/graph.hpp"
#include "tminer/params.hpp"

namespace tminer::nc {

template <class Real>
struct Dense {
  std::string prefix;
  int in = 0, out = 0;

  void define(ParameterSet<Real>& ps) const {
    ps.add(prefix + ".W", in, out, Init::Glorot);
    ps.add(prefix + ".b", 1, out, Init::Zero);
  }
  NodeId apply(Graph<Real>& g, const ParameterSet<Real>& ps, NodeId x) const {
    NodeId W = g.param(prefix + ".W", ps.get(prefix + ".W"));
    NodeId b = g.param(prefix + ".b", ps.get(prefix + ".b"));
    return g.add_rowvec(g.matmul(x, W), b);
  }
};

template <class Real>
struct Gru {
  std::string prefix;
  int in = 0, hidden = 0;

  void define(ParameterSet<Real>& ps) const {
    for (const char* gate : {"z", "r", "h"}) {
      ps.add(prefix + ".W" + gate, in, hidden, Init::Glorot);
      ps.add(prefix + ".U" + gate, hidden, hidden, Init::Glorot);
      ps.add(prefix + ".b" + gate, 1, hidden, Init::Zero);
    }
  }
  NodeId step(Graph<Real>& g, const ParameterSet<Real>& ps, NodeId x, NodeId h) const {
    auto p = [&](const std::string& s) { return g.param(prefix + s, ps.get(prefix + s)); };
    return g.gru_cell(x, h, p(".Wz"), p(".Uz"), p(".bz"), p(".Wr"), p(".Ur"), p(".br"),
                      p(".Wh"), p(".Uh"), p(".bh"));
  }
};

template <class Real>
struct Lstm {
  std::string prefix;
  int in = 0, hidden = 0;

  void define(ParameterSet<Real>& ps) const {
    ps.add(prefix + ".Wx", in, 4 * hidden, Init::Glorot);
    ps.add(prefix + ".Wh", hidden, 4 * hidden, Init::Glorot);
    ps.add(prefix + ".b", 1, 4 * hidden, Init::Zero);
  }
  // returns (h, c)
  std::pair<NodeId, NodeId> step(Graph<Real>& g, const ParameterSet<Real>& ps, NodeId x,
                                 NodeId h, NodeId c) const {
    NodeId hc = g.lstm_cell(x, h, c, g.param(prefix + ".Wx", ps.get(prefix + ".Wx")),
                            g.param(prefix + ".Wh", ps.get(prefix + ".Wh")),
                            g.param(prefix + ".b", ps.get(prefix + ".b")));
    return {g.slice_cols(hc, 0, hidden), g.slice_cols(hc, hidden, 2 * hidden)};
  }
};

template <class Real>
struct Embedding {
  std::string prefix;
  int vocab = 0, dim = 0;

  void define(ParameterSet<Real>& ps) const {
    ps.add(prefix + ".table", vocab, dim, Init::Glorot);
  }
  NodeId table(Graph<Real>& g, const ParameterSet<Real>& ps) const {
    return g.param(prefix + ".table", ps.get(prefix + ".table"));
  }
  NodeId lookup(Graph<Real>& g, const ParameterSet<Real>& ps, const std::vector<int>& ids) const {
    return g.gather_rows(table(g, ps), ids);
  }
  // rows of `soft` are distributions over the vocabulary
  NodeId soft_lookup(Graph<Real>& g, const ParameterSet<Real>& ps, NodeId soft) const {
    return g.matmul(soft, table(g, ps));
  }
};

}  // namespace tminer::nc
