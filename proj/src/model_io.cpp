#include "fdapred/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fdapred {

namespace {
using Json = nlohmann::ordered_json;

Json vector_to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from_json(const Json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
  return v;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(i, j) = rows[i][j].get<double>();
  return m;
}
}  // namespace

std::string model_to_json(const FpcaModel& model) {
  Json j;
  j["basis"] = {{"degree", SplineBasis::kDegree},
                {"size", model.basis.size()}};
  j["coefficients"] = matrix_to_json(model.coefficients);
  j["eigenvalues"] = vector_to_json(model.eigenvalues);
  j["noise_variance"] = model.noise_variance;
  j["mean"] = {{"grid", vector_to_json(model.mean.grid)},
               {"values", vector_to_json(model.mean.values)},
               {"bandwidth", model.mean.bandwidth},
               {"kernel", model.mean.kernel}};
  j["fit_log"] = {{"iterations", model.fit_log.iterations},
                  {"final_nll", model.fit_log.final_nll},
                  {"converged", model.fit_log.converged},
                  {"effective_rank", model.fit_log.effective_rank}};
  return j.dump(2) + "\n";
}

FpcaModel model_from_json(const std::string& text) {
  Json j = Json::parse(text);
  FpcaModel model;
  model.basis = SplineBasis(j.at("basis").at("size").get<int>());
  model.basis.orthonormalize();
  model.coefficients = matrix_from_json(j.at("coefficients"));
  model.eigenvalues = vector_from_json(j.at("eigenvalues"));
  model.noise_variance = j.at("noise_variance").get<double>();
  model.mean.grid = vector_from_json(j.at("mean").at("grid"));
  model.mean.values = vector_from_json(j.at("mean").at("values"));
  model.mean.bandwidth = j.at("mean").at("bandwidth").get<double>();
  model.mean.kernel = j.at("mean").at("kernel").get<std::string>();
  model.fit_log.iterations = j.at("fit_log").at("iterations").get<int>();
  model.fit_log.final_nll = j.at("fit_log").at("final_nll").get<double>();
  model.fit_log.converged = j.at("fit_log").at("converged").get<bool>();
  model.fit_log.effective_rank =
      j.at("fit_log").at("effective_rank").get<int>();
  return model;
}

void save_model(const FpcaModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << model_to_json(model);
}

FpcaModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace fdapred
