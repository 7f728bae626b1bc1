#include "gmnds/json_io.hpp"

#include <fstream>

namespace gmnds {

namespace {

[[noreturn]] void fail(const std::string& what) { throw ArgumentError("json: " + what); }

const Json& member(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) fail(std::string("missing key '") + key + "'");
  return *it;
}

double number(const Json& j, const char* context) {
  if (!j.is_number()) fail(std::string(context) + " must be a number");
  return j.get<double>();
}

}  // namespace

Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) fail("vector must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = number(j[i], "vector entry");
  }
  return v;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) fail("matrix must be an array of row arrays");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  if (!j[0].is_array()) fail("matrix rows must be arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      fail("matrix rows must all have the same length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = number(row[static_cast<std::size_t>(c)], "matrix entry");
    }
  }
  return m;
}

Json to_json(const GaussianMixture& gm) {
  Json comps = Json::array();
  for (const auto& c : gm.components()) {
    comps.push_back(Json{{"weight", c.weight}, {"mean", to_json(c.mean)}, {"cov", to_json(c.cov)}});
  }
  return Json{{"dim", gm.dim()}, {"components", std::move(comps)}};
}

GaussianMixture gm_from_json(const Json& j) {
  if (!j.is_object()) fail("Gaussian mixture must be an object");
  const auto dim = static_cast<Eigen::Index>(number(member(j, "dim"), "dim"));
  const Json& comps = member(j, "components");
  if (!comps.is_array() || comps.empty()) fail("components must be a nonempty array");
  std::vector<GaussianComponent> out;
  out.reserve(comps.size());
  for (const auto& c : comps) {
    GaussianComponent gc;
    gc.weight = number(member(c, "weight"), "weight");
    gc.mean = vector_from_json(member(c, "mean"));
    gc.cov = matrix_from_json(member(c, "cov"));
    out.push_back(std::move(gc));
  }
  GaussianMixture gm(std::move(out));
  if (gm.dim() != dim) fail("declared dim does not match components");
  return gm;
}

Json to_json(const GenChi2& g) {
  Json k = Json::array();
  for (Eigen::Index i = 0; i < g.k.size(); ++i) k.push_back(g.k[i]);
  return Json{{"w", to_json(g.w)}, {"k", std::move(k)}, {"lambda", to_json(g.lambda)}, {"t", g.t}};
}

GenChi2 gen_chi2_from_json(const Json& j) {
  if (!j.is_object()) fail("generalized chi-square must be an object");
  const Eigen::VectorXd w = vector_from_json(member(j, "w"));
  const Json& kj = member(j, "k");
  if (!kj.is_array()) fail("k must be an array of integers");
  Eigen::VectorXi k(static_cast<Eigen::Index>(kj.size()));
  for (std::size_t i = 0; i < kj.size(); ++i) {
    if (!kj[i].is_number_integer()) fail("k entries must be integers");
    k[static_cast<Eigen::Index>(i)] = kj[i].get<int>();
  }
  const Eigen::VectorXd lambda = vector_from_json(member(j, "lambda"));
  const double t = number(member(j, "t"), "t");
  return GenChi2(w, k, lambda, t);
}

Json to_json(const GenChi2Mixture& m) {
  Json comps = Json::array();
  for (const auto& c : m.components) comps.push_back(to_json(c));
  return Json{{"weights", to_json(m.weights)},
              {"components", std::move(comps)},
              {"truncation_mass", m.truncation_mass}};
}

GenChi2Mixture gen_chi2_mixture_from_json(const Json& j) {
  if (!j.is_object()) fail("generalized chi-square mixture must be an object");
  const Eigen::VectorXd weights = vector_from_json(member(j, "weights"));
  const Json& comps = member(j, "components");
  if (!comps.is_array() || comps.empty()) fail("components must be a nonempty array");
  std::vector<GenChi2> out;
  out.reserve(comps.size());
  for (const auto& c : comps) out.push_back(gen_chi2_from_json(c));
  double mass = 0.0;
  if (const auto it = j.find("truncation_mass"); it != j.end()) {
    mass = number(*it, "truncation_mass");
  }
  return GenChi2Mixture(weights, std::move(out), mass);
}

Json to_json(const NdsTestResult& r) {
  return Json{{"statistic", r.statistic},   {"tau", r.tau},
              {"alpha", r.alpha},           {"p_value", r.p_value},
              {"reject", r.reject},         {"truncation_mass", r.truncation_mass}};
}

Json to_json(const LinearGmModel& m) {
  return Json{{"F", to_json(m.F)},
              {"B", to_json(m.B)},
              {"H", to_json(m.H)},
              {"prior", to_json(m.prior)},
              {"process_noise", to_json(m.process_noise)},
              {"meas_noise", to_json(m.meas_noise)},
              {"g_max", m.g_max}};
}

LinearGmModel model_from_json(const Json& j) {
  if (!j.is_object()) fail("model must be an object");
  const Eigen::MatrixXd f = matrix_from_json(member(j, "F"));
  Eigen::MatrixXd b;
  if (const auto it = j.find("B"); it != j.end() && !it->is_null()) {
    b = matrix_from_json(*it);
  }
  const Eigen::MatrixXd h = matrix_from_json(member(j, "H"));
  GaussianMixture prior = gm_from_json(member(j, "prior"));
  GaussianMixture process = gm_from_json(member(j, "process_noise"));
  GaussianMixture meas = gm_from_json(member(j, "meas_noise"));
  const Json& gj = member(j, "g_max");
  if (!gj.is_number_integer()) fail("g_max must be an integer");
  return LinearGmModel(f, b, h, std::move(prior), std::move(process), std::move(meas),
                       gj.get<int>());
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw ArgumentError("cannot parse " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace gmnds
