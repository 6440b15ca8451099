#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "etcons/linalg.hpp"

namespace etcons {

/// Unit-weight directed communication graph. Agents are 0-based here; the
/// edge-list file format is 1-based. An edge (from, to) means agent `to`
/// receives the broadcasts of agent `from`.
class DirectedGraph {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  explicit DirectedGraph(std::size_t n_agents);
  DirectedGraph(std::size_t n_agents, const std::vector<Edge>& edges);

  /// Throws std::invalid_argument on self-loops or out-of-range indices.
  /// Duplicate edges are ignored.
  void add_edge(std::size_t from, std::size_t to);

  std::size_t n_agents() const { return n_agents_; }
  /// Sorted, duplicate-free.
  const std::vector<Edge>& edges() const { return edges_; }
  bool has_edge(std::size_t from, std::size_t to) const;

  /// Agents that `agent` receives from (the neighbour set N_i).
  const std::vector<std::size_t>& in_neighbors(std::size_t agent) const;
  /// Agents that receive from `agent`.
  const std::vector<std::size_t>& out_neighbors(std::size_t agent) const;

  friend bool operator==(const DirectedGraph& a, const DirectedGraph& b) {
    return a.n_agents_ == b.n_agents_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t n_agents_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::vector<std::size_t>> out_;
};

/// L = D - A with a_ij = 1 iff agent i receives from agent j.
Mat laplacian(const DirectedGraph& g);

/// True iff some agent reaches every other agent along directed edges.
bool has_spanning_tree(const DirectedGraph& g);

/// Unitary block-triangular reduction of a Laplacian with the consensus
/// mode isolated: laplacian = s_left * l_reduced * s_left^{-1},
/// l_reduced(0,0) == 0 and l_reduced(1:,0) == 0.
struct SpectralDecomposition {
  Mat laplacian;
  CMat s_left;
  CMat l_reduced;
  /// Smallest real part among the nonzero eigenvalues; +inf for one agent.
  double lambda2_real = 0.0;
  /// Diagonal of l_reduced, zero eigenvalue first.
  CVec eigenvalues;

  std::size_t n_agents() const {
    return static_cast<std::size_t>(laplacian.rows());
  }
  CMat s_left_inverse() const;
  /// Stabilized block J_{2:N} (lower-right (N-1)x(N-1) of l_reduced).
  CMat stabilized_block() const;
  /// ‖s_left * l_reduced * s_left^{-1} - L‖ / ‖L‖ (absolute when L = 0).
  double reconstruction_error() const;
};

/// Eigenvalues within 1e-9 * max(‖L‖, 1) of zero count as zero.
inline constexpr double kZeroEigenvalueTolerance = 1e-9;

/// Ordered complex Schur reduction with the zero eigenvalue first.
/// Throws InfeasibleError("spanning tree") unless exactly one eigenvalue is
/// zero.
SpectralDecomposition spectral_transform(const Mat& laplacian);

}  // namespace etcons
