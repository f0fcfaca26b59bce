#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "gmje/errors.hpp"
#include "gmje/gaussian.hpp"

namespace gmje {

/// Growing Neural Gas hyperparameters.
struct GngConfig {
  double epsilon_b = 0.2;   // winner learning rate
  double epsilon_n = 0.01;  // neighbor learning rate
  int lambda_interval = 100;
  int a_max = 50;
  double alpha = 0.5;   // local error decay at insertion
  double beta = 0.995;  // global error decay
  int k_max = 25;

  void validate() const;
};

/// Prototype graph: vertices with positions/accumulated errors, aged edges.
/// Node ids are stable across removals; ties in nearest-node search break on
/// the lowest id for determinism.
class GngGraph {
 public:
  struct Node {
    int id;
    VectorXd position;
    double error = 0.0;
  };

  /// Initialize with two distinct seed points, one fresh edge, zero errors.
  static GngGraph init(const VectorXd& a, const VectorXd& b);

  /// Rebuild from a saved node/edge snapshot (counters restart at zero).
  static GngGraph from_snapshot(std::vector<Node> nodes,
                                std::map<std::pair<int, int>, int> edges);

  /// One online adaptation step on a single joint embedding (Algorithm order:
  /// nearest-pair search, winner error accrual, winner/neighbor pulls, edge
  /// refresh, aging of winner-incident edges, pruning + isolated-node removal,
  /// interval insertion with error redistribution, global error decay).
  void step(const VectorXd& z, const GngConfig& cfg);

  /// Node positions as mixture means, K x dim, ordered by node id.
  MatrixXd extract_prototypes() const;

  /// Connected-component count of the edge graph.
  int component_count() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::map<std::pair<int, int>, int>& edges() const { return edges_; }
  long step_counter() const { return step_counter_; }

  /// Distance evaluations performed by the most recent nearest-pair scan
  /// (cost instrumentation: equals the live node count per step).
  long last_scan_distance_evals() const { return last_scan_distance_evals_; }

  /// Average squared quantization error of the most recent step's input
  /// against the winner at scan time.
  double last_quantization_error() const { return last_quantization_error_; }

 private:
  std::vector<Node> nodes_;                      // sorted by id
  std::map<std::pair<int, int>, int> edges_;     // (min_id, max_id) -> age
  int next_id_ = 0;
  long step_counter_ = 0;
  long last_scan_distance_evals_ = 0;
  double last_quantization_error_ = 0.0;

  int index_of(int id) const;
  std::vector<int> neighbor_ids(int id) const;
};

}  // namespace gmje
