#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "structsum/diffcore/tensor.hpp"

namespace structsum::structattn {

using diffcore::Shape;
using diffcore::Tensor;

inline constexpr std::size_t kBruteMaxNodes = 7;

struct DenseMarginals {
  Tensor edge;  // [K x K]
  Tensor root;  // [K]
};

// Parent array; the root has parent -1.
using ParentArray = std::vector<int>;

// True when `parent` describes one spanning tree with exactly one root.
inline bool is_tree(const ParentArray& parent) {
  const std::size_t n = parent.size();
  std::size_t roots = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (parent[k] == -1) {
      ++roots;
    } else if (parent[k] < 0 || static_cast<std::size_t>(parent[k]) >= n || static_cast<std::size_t>(parent[k]) == k) {
      return false;
    }
  }
  if (roots != 1) return false;
  // 0 = unvisited, 1 = on current path, 2 = reaches the root
  std::vector<char> state(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> path;
    std::size_t v = s;
    while (true) {
      if (state[v] == 2) break;
      if (state[v] == 1) return false;
      state[v] = 1;
      path.push_back(v);
      if (parent[v] == -1) break;
      v = static_cast<std::size_t>(parent[v]);
    }
    for (std::size_t u : path) state[u] = 2;
  }
  return true;
}

// Calls visit(parent) for every single-rooted spanning arborescence over n nodes.
template <typename Visit>
void for_each_arborescence(std::size_t n, Visit&& visit) {
  // Digit k in [0, n): value k itself marks node k as the root.
  std::vector<std::size_t> digits(n, 0);
  ParentArray parent(n);
  while (true) {
    for (std::size_t k = 0; k < n; ++k) parent[k] = digits[k] == k ? -1 : static_cast<int>(digits[k]);
    if (is_tree(parent)) visit(static_cast<const ParentArray&>(parent));
    std::size_t i = 0;
    for (; i < n; ++i) {
      if (++digits[i] < n) break;
      digits[i] = 0;
    }
    if (i == n) break;
  }
}

// Exact marginals by enumerating every rooted spanning arborescence.
// Weight of a tree = exp(roots[root]) * prod over edges exp(scores[parent][child]).
inline DenseMarginals brute_marginals(const Tensor& scores, const Tensor& roots) {
  const std::size_t n = roots.size();
  if (scores.rank() != 2 || scores.rows() != n || scores.cols() != n || n == 0) {
    throw ShapeMismatch("brute_marginals: scores " + diffcore::shape_string(scores.shape()));
  }
  if (n > kBruteMaxNodes) throw TooLarge("brute-force enumeration limited to " + std::to_string(kBruteMaxNodes) + " nodes");
  std::vector<std::pair<double, ParentArray>> trees;
  double best = -std::numeric_limits<double>::infinity();
  for_each_arborescence(n, [&](const ParentArray& parent) {
    double logw = 0.0;
    for (std::size_t k = 0; k < n; ++k) logw += parent[k] == -1 ? roots[k] : scores.at(parent[k], k);
    best = std::max(best, logw);
    trees.emplace_back(logw, parent);
  });
  DenseMarginals out{Tensor(Shape{n, n}), Tensor(Shape{n})};
  double z = 0.0;
  for (auto& [logw, parent] : trees) {
    const double w = std::exp(logw - best);
    z += w;
    for (std::size_t k = 0; k < n; ++k) {
      if (parent[k] == -1) {
        out.root[k] += w;
      } else {
        out.edge.at(parent[k], k) += w;
      }
    }
  }
  for (double& v : out.edge.values()) v /= z;
  for (double& v : out.root.values()) v /= z;
  return out;
}

namespace detail {

// Maximum spanning arborescence rooted at `root` over dense weights
// w[u][v] (edge u -> v); -inf marks a missing edge. Chu-Liu/Edmonds by
// recursive cycle contraction.
inline std::vector<int> max_arborescence(const std::vector<std::vector<double>>& w, std::size_t root) {
  const std::size_t n = w.size();
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<int> best(n, -1);
  for (std::size_t v = 0; v < n; ++v) {
    if (v == root) continue;
    double bw = kNone;
    for (std::size_t u = 0; u < n; ++u) {
      if (u == v) continue;
      if (best[v] == -1 || w[u][v] > bw) {
        bw = w[u][v];
        best[v] = static_cast<int>(u);
      }
    }
  }
  // Look for a cycle in the greedy choice.
  std::vector<int> mark(n, -1);
  std::vector<std::size_t> cycle;
  for (std::size_t s = 0; s < n && cycle.empty(); ++s) {
    std::size_t v = s;
    while (v != root && mark[v] == -1) {
      mark[v] = static_cast<int>(s);
      v = static_cast<std::size_t>(best[v]);
    }
    if (v != root && mark[v] == static_cast<int>(s)) {
      std::size_t u = v;
      do {
        cycle.push_back(u);
        u = static_cast<std::size_t>(best[u]);
      } while (u != v);
    }
  }
  if (cycle.empty()) return best;

  std::vector<bool> in_cycle(n, false);
  for (std::size_t v : cycle) in_cycle[v] = true;
  // Contracted node ids: non-cycle nodes keep an index, the cycle becomes `c`.
  std::vector<std::size_t> id(n);
  std::vector<std::size_t> orig;
  for (std::size_t v = 0; v < n; ++v) {
    if (!in_cycle[v]) {
      id[v] = orig.size();
      orig.push_back(v);
    }
  }
  const std::size_t c = orig.size();
  for (std::size_t v : cycle) id[v] = c;
  const std::size_t m = c + 1;
  std::vector<std::vector<double>> cw(m, std::vector<double>(m, kNone));
  std::vector<std::vector<std::size_t>> enter(m, std::vector<std::size_t>(m, 0));  // cycle node entered
  std::vector<std::vector<std::size_t>> leave(m, std::vector<std::size_t>(m, 0));  // cycle node left from
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      if (u == v || (in_cycle[u] && in_cycle[v])) continue;
      double weight = w[u][v];
      if (weight == kNone) continue;
      if (in_cycle[v]) weight -= w[static_cast<std::size_t>(best[v])][v];
      const std::size_t cu = id[u], cv = id[v];
      if (weight > cw[cu][cv]) {
        cw[cu][cv] = weight;
        enter[cu][cv] = v;
        leave[cu][cv] = u;
      }
    }
  std::vector<int> sub = max_arborescence(cw, id[root]);
  std::vector<int> result(n, -1);
  for (std::size_t v : cycle) result[v] = best[v];
  for (std::size_t cv = 0; cv < m; ++cv) {
    if (sub[cv] < 0) continue;
    const auto cu = static_cast<std::size_t>(sub[cv]);
    result[enter[cu][cv]] = static_cast<int>(leave[cu][cv]);
  }
  result[root] = -1;
  return result;
}

}  // namespace detail

// Highest-scoring tree under the marginals: root = argmax of the root
// marginals, edges by maximum arborescence over log edge marginals.
inline ParentArray extract_tree(const Tensor& edge, const Tensor& root) {
  const std::size_t n = root.size();
  if (n == 0) return {};
  const auto root_idx =
      static_cast<std::size_t>(std::max_element(root.values().begin(), root.values().end()) - root.values().begin());
  std::vector<std::vector<double>> w(n, std::vector<double>(n));
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) w[u][v] = std::log(std::max(edge.at(u, v), 1e-300));
  std::vector<int> parent = detail::max_arborescence(w, root_idx);
  parent[root_idx] = -1;
  return parent;
}

struct TreeStats {
  std::size_t depth = 0;          // nodes on the longest root-to-leaf path
  std::size_t max_branching = 0;  // most children of any node
  std::size_t root_fanout = 0;    // children of the root
};

inline TreeStats tree_stats(const ParentArray& parent) {
  if (!is_tree(parent)) throw Error("tree_stats: not a single-rooted tree");
  const std::size_t n = parent.size();
  std::vector<std::size_t> children(n, 0), level(n, 0);
  std::size_t root = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (parent[k] == -1) {
      root = k;
    } else {
      ++children[static_cast<std::size_t>(parent[k])];
    }
  }
  TreeStats s;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t d = 1;
    for (int v = parent[k]; v != -1; v = parent[static_cast<std::size_t>(v)]) ++d;
    s.depth = std::max(s.depth, d);
  }
  s.max_branching = n ? *std::max_element(children.begin(), children.end()) : 0;
  s.root_fanout = n ? children[root] : 0;
  return s;
}

}  // namespace structsum::structattn
