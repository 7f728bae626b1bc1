#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "gmnds/filter.hpp"
#include "gmnds/gaussian_mixture.hpp"
#include "gmnds/gen_chi2.hpp"
#include "gmnds/hypothesis_test.hpp"

namespace gmnds {

using Json = nlohmann::json;

// Interchange formats. Matrices are stored row-major as nested arrays.
//
//   GaussianMixture  {"dim": n, "components": [{"weight", "mean", "cov"}, ...]}
//   GenChi2          {"w": [...], "k": [...], "lambda": [...], "t": r}
//   GenChi2Mixture   {"weights": [...], "components": [...], "truncation_mass": r}
//   NdsTestResult    {"statistic", "tau", "alpha", "p_value", "reject", "truncation_mass"}
//   LinearGmModel    {"F", "B", "H", "prior", "process_noise", "meas_noise", "g_max"}
//
// Parsing failures throw ArgumentError.

Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json to_json(const GaussianMixture& gm);
GaussianMixture gm_from_json(const Json& j);

Json to_json(const GenChi2& g);
GenChi2 gen_chi2_from_json(const Json& j);

Json to_json(const GenChi2Mixture& m);
GenChi2Mixture gen_chi2_mixture_from_json(const Json& j);

Json to_json(const NdsTestResult& r);

Json to_json(const LinearGmModel& m);
LinearGmModel model_from_json(const Json& j);

Json load_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace gmnds
