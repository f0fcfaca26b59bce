#include "gmje/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace gmje {

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

MatrixXd matrix_from_json(const json& j) {
  MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const json& data = j.at("data");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = data[i][k].get<double>();
  }
  return m;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

json mixture_to_json(const JointMixture& mix) {
  json comps = json::array();
  for (const JointGaussian& c : mix.components) {
    comps.push_back(json{{"mean_c", vector_to_json(c.mean_c)},
                         {"mean_t", vector_to_json(c.mean_t)},
                         {"cov_cc", matrix_to_json(c.cov_cc)},
                         {"cov_ct", matrix_to_json(c.cov_ct)},
                         {"cov_tc", matrix_to_json(c.cov_tc)},
                         {"cov_tt", matrix_to_json(c.cov_tt)}});
  }
  return json{{"type", "joint_mixture"},
              {"weights", vector_to_json(mix.weights)},
              {"components", std::move(comps)}};
}

JointMixture mixture_from_json(const json& j) {
  if (j.at("type") != "joint_mixture") throw std::runtime_error("mixture_from_json: wrong type");
  std::vector<JointGaussian> comps;
  for (const json& c : j.at("components")) {
    comps.emplace_back(vector_from_json(c.at("mean_c")), vector_from_json(c.at("mean_t")),
                       matrix_from_json(c.at("cov_cc")), matrix_from_json(c.at("cov_ct")),
                       matrix_from_json(c.at("cov_tc")), matrix_from_json(c.at("cov_tt")));
  }
  return JointMixture(vector_from_json(j.at("weights")), std::move(comps));
}

json mlp_to_json(const Mlp& net) {
  json weights = json::array();
  json biases = json::array();
  for (const MatrixXd& w : net.weights) weights.push_back(matrix_to_json(w));
  for (const VectorXd& b : net.biases) biases.push_back(vector_to_json(b));
  return json{{"type", "mlp"},
              {"layer_dims", net.layer_dims},
              {"relu_on_output", net.relu_on_output},
              {"weights", std::move(weights)},
              {"biases", std::move(biases)}};
}

Mlp mlp_from_json(const json& j) {
  if (j.at("type") != "mlp") throw std::runtime_error("mlp_from_json: wrong type");
  Mlp net;
  net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  net.relu_on_output = j.at("relu_on_output").get<bool>();
  for (const json& w : j.at("weights")) net.weights.push_back(matrix_from_json(w));
  for (const json& b : j.at("biases")) net.biases.push_back(vector_from_json(b));
  return net;
}

json mdn_to_json(const MdnModel& model) {
  return json{{"type", "mdn"},
              {"dim_c", model.dim_c},
              {"dim_t", model.dim_t},
              {"trunk", mlp_to_json(model.trunk)},
              {"head",
               json{{"component_count", model.head.component_count},
                    {"dim_t", model.head.dim_t},
                    {"sigma_floor", model.head.sigma_floor},
                    {"linear", mlp_to_json(model.head.linear)}}}};
}

MdnModel mdn_from_json(const json& j) {
  if (j.at("type") != "mdn") throw std::runtime_error("mdn_from_json: wrong type");
  MdnModel model;
  model.dim_c = j.at("dim_c").get<int>();
  model.dim_t = j.at("dim_t").get<int>();
  model.trunk = mlp_from_json(j.at("trunk"));
  const json& h = j.at("head");
  model.head.component_count = h.at("component_count").get<int>();
  model.head.dim_t = h.at("dim_t").get<int>();
  model.head.sigma_floor = h.at("sigma_floor").get<double>();
  model.head.linear = mlp_from_json(h.at("linear"));
  return model;
}

json gng_to_json(const GngGraph& graph) {
  json nodes = json::array();
  for (const GngGraph::Node& n : graph.nodes()) {
    nodes.push_back(json{{"id", n.id}, {"position", vector_to_json(n.position)},
                         {"error", n.error}});
  }
  json edges = json::array();
  for (const auto& [key, age] : graph.edges()) {
    edges.push_back(json{{"a", key.first}, {"b", key.second}, {"age", age}});
  }
  return json{{"type", "gng"}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

GngGraph gng_from_json(const json& j) {
  if (j.at("type") != "gng") throw std::runtime_error("gng_from_json: wrong type");
  std::vector<GngGraph::Node> nodes;
  for (const json& n : j.at("nodes")) {
    nodes.push_back({n.at("id").get<int>(), vector_from_json(n.at("position")),
                     n.at("error").get<double>()});
  }
  std::map<std::pair<int, int>, int> edges;
  for (const json& e : j.at("edges")) {
    edges[{e.at("a").get<int>(), e.at("b").get<int>()}] = e.at("age").get<int>();
  }
  return GngGraph::from_snapshot(std::move(nodes), std::move(edges));
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_json: cannot open " + path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_json: cannot open " + path);
  return json::parse(in);
}

}  // namespace gmje
