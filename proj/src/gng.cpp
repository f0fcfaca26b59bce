#include "gmje/gng.hpp"

#include <algorithm>
#include <functional>
#include <limits>

namespace gmje {

void GngConfig::validate() const {
  if (!(epsilon_n > 0.0 && epsilon_n <= epsilon_b && epsilon_b < 1.0)) {
    throw std::invalid_argument("GngConfig: need 0 < epsilon_n <= epsilon_b < 1");
  }
  if (lambda_interval < 1) throw std::invalid_argument("GngConfig: lambda >= 1");
  if (a_max < 1) throw std::invalid_argument("GngConfig: a_max >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("GngConfig: 0 < alpha < 1");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("GngConfig: 0 < beta < 1");
  if (k_max < 2) throw std::invalid_argument("GngConfig: k_max >= 2");
}

GngGraph GngGraph::init(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("GngGraph::init: dimension mismatch");
  if ((a - b).norm() == 0.0) throw DegenerateSeed("GngGraph::init: seed points are identical");
  GngGraph g;
  g.nodes_.push_back({0, a, 0.0});
  g.nodes_.push_back({1, b, 0.0});
  g.next_id_ = 2;
  g.edges_[{0, 1}] = 0;
  return g;
}

GngGraph GngGraph::from_snapshot(std::vector<Node> nodes,
                                 std::map<std::pair<int, int>, int> edges) {
  if (nodes.empty()) throw std::invalid_argument("GngGraph::from_snapshot: no nodes");
  std::sort(nodes.begin(), nodes.end(),
            [](const Node& a, const Node& b) { return a.id < b.id; });
  GngGraph g;
  g.next_id_ = nodes.back().id + 1;
  g.nodes_ = std::move(nodes);
  g.edges_ = std::move(edges);
  return g;
}

int GngGraph::index_of(int id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id == id) return static_cast<int>(i);
  }
  throw std::logic_error("GngGraph: unknown node id");
}

std::vector<int> GngGraph::neighbor_ids(int id) const {
  std::vector<int> out;
  for (const auto& [key, age] : edges_) {
    (void)age;
    if (key.first == id) out.push_back(key.second);
    if (key.second == id) out.push_back(key.first);
  }
  return out;
}

void GngGraph::step(const VectorXd& z, const GngConfig& cfg) {
  cfg.validate();
  if (nodes_.empty()) throw std::logic_error("GngGraph: empty graph");
  if (z.size() != nodes_.front().position.size()) {
    throw std::invalid_argument("GngGraph::step: input dimension mismatch");
  }
  ++step_counter_;

  // Nearest pair search; ties broken by lowest node id (nodes_ is id-ordered).
  int s1 = -1, s2 = -1;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();
  last_scan_distance_evals_ = 0;
  for (const Node& node : nodes_) {
    double d = (z - node.position).squaredNorm();
    ++last_scan_distance_evals_;
    if (d < d1) {
      d2 = d1;
      s2 = s1;
      d1 = d;
      s1 = node.id;
    } else if (d < d2) {
      d2 = d;
      s2 = node.id;
    }
  }
  last_quantization_error_ = d1;

  // Winner error accrual and prototype pulls.
  Node& winner = nodes_[index_of(s1)];
  winner.error += d1;
  winner.position += cfg.epsilon_b * (z - winner.position);
  for (int nid : neighbor_ids(s1)) {
    Node& nb = nodes_[index_of(nid)];
    nb.position += cfg.epsilon_n * (z - nb.position);
  }

  // Create or refresh the (s1, s2) edge, then age all winner-incident edges.
  if (s2 >= 0) {
    edges_[{std::min(s1, s2), std::max(s1, s2)}] = 0;
  }
  for (auto& [key, age] : edges_) {
    if (key.first == s1 || key.second == s1) ++age;
  }

  // Prune over-aged edges and remove isolated nodes.
  for (auto it = edges_.begin(); it != edges_.end();) {
    if (it->second > cfg.a_max) {
      it = edges_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = nodes_.begin(); it != nodes_.end();) {
    if (neighbor_ids(it->id).empty() && nodes_.size() > 1) {
      it = nodes_.erase(it);
    } else {
      ++it;
    }
  }

  // Interval insertion between the max-error node and its max-error neighbor.
  if (step_counter_ % cfg.lambda_interval == 0 &&
      static_cast<int>(nodes_.size()) < cfg.k_max) {
    int u = -1;
    double max_err = -1.0;
    for (const Node& node : nodes_) {
      if (node.error > max_err) {
        max_err = node.error;
        u = node.id;
      }
    }
    std::vector<int> nbrs = neighbor_ids(u);
    if (!nbrs.empty()) {
      int v = -1;
      double max_nerr = -1.0;
      for (int nid : nbrs) {
        const Node& nb = nodes_[index_of(nid)];
        if (nb.error > max_nerr) {
          max_nerr = nb.error;
          v = nb.id;
        }
      }
      Node& nu = nodes_[index_of(u)];
      Node& nv = nodes_[index_of(v)];
      Node w;
      w.id = next_id_++;
      w.position = 0.5 * (nu.position + nv.position);
      nu.error *= cfg.alpha;
      nv.error *= cfg.alpha;
      w.error = nu.error;  // post-decay value, literal line order
      edges_.erase({std::min(u, v), std::max(u, v)});
      edges_[{std::min(u, w.id), std::max(u, w.id)}] = 0;
      edges_[{std::min(v, w.id), std::max(v, w.id)}] = 0;
      nodes_.push_back(std::move(w));  // ids grow monotonically, order kept
    }
  }

  // Global error decay.
  for (Node& node : nodes_) node.error *= cfg.beta;
}

MatrixXd GngGraph::extract_prototypes() const {
  MatrixXd out(nodes_.size(), nodes_.front().position.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) out.row(i) = nodes_[i].position.transpose();
  return out;
}

int GngGraph::component_count() const {
  if (nodes_.empty()) return 0;
  std::map<int, int> parent;
  for (const Node& n : nodes_) parent[n.id] = n.id;
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [key, age] : edges_) {
    (void)age;
    parent[find(key.first)] = find(key.second);
  }
  int count = 0;
  for (const Node& n : nodes_) {
    if (find(n.id) == n.id) ++count;
  }
  return count;
}

}  // namespace gmje
