#include "etcons/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "etcons/error.hpp"

namespace etcons {

DirectedGraph::DirectedGraph(std::size_t n_agents)
    : n_agents_(n_agents), in_(n_agents), out_(n_agents) {
  if (n_agents == 0) {
    throw std::invalid_argument("DirectedGraph: need at least one agent");
  }
}

DirectedGraph::DirectedGraph(std::size_t n_agents,
                             const std::vector<Edge>& edges)
    : DirectedGraph(n_agents) {
  for (const auto& [from, to] : edges) add_edge(from, to);
}

void DirectedGraph::add_edge(std::size_t from, std::size_t to) {
  if (from >= n_agents_ || to >= n_agents_) {
    throw std::invalid_argument("DirectedGraph: edge (" +
                                std::to_string(from) + ", " +
                                std::to_string(to) + ") out of range");
  }
  if (from == to) {
    throw std::invalid_argument("DirectedGraph: self-loop on agent " +
                                std::to_string(from));
  }
  const Edge e{from, to};
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
  if (it != edges_.end() && *it == e) return;
  edges_.insert(it, e);
  auto& in = in_[to];
  in.insert(std::lower_bound(in.begin(), in.end(), from), from);
  auto& out = out_[from];
  out.insert(std::lower_bound(out.begin(), out.end(), to), to);
}

bool DirectedGraph::has_edge(std::size_t from, std::size_t to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

const std::vector<std::size_t>& DirectedGraph::in_neighbors(
    std::size_t agent) const {
  return in_.at(agent);
}

const std::vector<std::size_t>& DirectedGraph::out_neighbors(
    std::size_t agent) const {
  return out_.at(agent);
}

Mat laplacian(const DirectedGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_agents());
  Mat l = Mat::Zero(n, n);
  for (const auto& [from, to] : g.edges()) {
    const auto i = static_cast<Eigen::Index>(to);
    const auto j = static_cast<Eigen::Index>(from);
    l(i, j) -= 1.0;
    l(i, i) += 1.0;
  }
  return l;
}

bool has_spanning_tree(const DirectedGraph& g) {
  const std::size_t n = g.n_agents();
  std::vector<char> seen(n);
  std::vector<std::size_t> stack;
  for (std::size_t root = 0; root < n; ++root) {
    std::fill(seen.begin(), seen.end(), 0);
    seen[root] = 1;
    stack.assign(1, root);
    std::size_t reached = 1;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (const std::size_t w : g.out_neighbors(v)) {
        if (seen[w]) continue;
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
    if (reached == n) return true;
  }
  return false;
}

CMat SpectralDecomposition::s_left_inverse() const {
  return s_left.partialPivLu().inverse();
}

CMat SpectralDecomposition::stabilized_block() const {
  const auto n = l_reduced.rows();
  return l_reduced.bottomRightCorner(n - 1, n - 1);
}

double SpectralDecomposition::reconstruction_error() const {
  const CMat rebuilt = s_left * l_reduced * s_left_inverse();
  const double err = spectral_norm(CMat(rebuilt - laplacian.cast<Complex>()));
  const double scale = spectral_norm(laplacian);
  return scale > 0.0 ? err / scale : err;
}

SpectralDecomposition spectral_transform(const Mat& laplacian) {
  if (laplacian.rows() != laplacian.cols() || laplacian.rows() == 0) {
    throw std::invalid_argument("spectral_transform: need a square matrix");
  }
  const double tol =
      kZeroEigenvalueTolerance * std::max(spectral_norm(laplacian), 1.0);
  const auto is_zero = [tol](Complex z) { return std::abs(z) <= tol; };

  SchurForm form = ordered_schur(laplacian.cast<Complex>(), is_zero);
  const auto n = form.t.rows();
  Eigen::Index zeros = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_zero(form.t(i, i))) ++zeros;
  }
  if (zeros != 1) {
    throw InfeasibleError(
        "spanning tree",
        "Laplacian has " + std::to_string(zeros) +
            " zero eigenvalues; the graph has no directed spanning tree");
  }

  // Make the consensus eigenvector real and positive. With Q' = Q D,
  // D = diag(conj(p), 1, ...), T' = D^H T D.
  const Complex lead = form.q(0, 0);
  if (std::abs(lead) > 0.0) {
    const Complex phase = lead / std::abs(lead);
    form.q.col(0) *= std::conj(phase);
    form.t.row(0) *= phase;
    form.t.col(0) *= std::conj(phase);
  }
  form.t(0, 0) = Complex(0.0, 0.0);

  SpectralDecomposition out;
  out.laplacian = laplacian;
  out.s_left = std::move(form.q);
  out.l_reduced = std::move(form.t);
  out.eigenvalues = out.l_reduced.diagonal();
  out.lambda2_real = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 1; i < n; ++i) {
    out.lambda2_real = std::min(out.lambda2_real, out.eigenvalues(i).real());
  }
  return out;
}

}  // namespace etcons
