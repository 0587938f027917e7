#include "optnet/qp_json.hpp"

#include <fstream>
#include <stdexcept>

namespace optnet {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, std::size_t cols_if_empty) {
  if (!j.is_array()) throw ShapeError("expected a nested array for a matrix");
  if (j.empty()) return Matrix(0, cols_if_empty);
  const std::size_t rows = j.size();
  const std::size_t cols = j.at(0).size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& r = j.at(i);
    if (!r.is_array() || r.size() != cols) throw ShapeError("ragged matrix rows");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = r.at(k).get<double>();
  }
  return m;
}

QPInstance qp_from_json(const json& j) {
  if (!j.is_object()) throw ShapeError("QP must be a JSON object");
  const auto n = j.contains("n") ? j.at("n").get<std::size_t>() : j.at("q").size();
  const auto m = j.contains("m") ? j.at("m").get<std::size_t>() : j.value("b", json::array()).size();
  const auto p = j.contains("p") ? j.at("p").get<std::size_t>() : j.value("h", json::array()).size();

  QPInstance qp;
  qp.Q = matrix_from_json(j.at("Q"), n);
  qp.q = j.at("q").get<Vector>();
  qp.A = j.contains("A") ? matrix_from_json(j.at("A"), n) : Matrix(0, n);
  qp.b = j.contains("b") ? j.at("b").get<Vector>() : Vector{};
  qp.G = j.contains("G") ? matrix_from_json(j.at("G"), n) : Matrix(0, n);
  qp.h = j.contains("h") ? j.at("h").get<Vector>() : Vector{};
  qp.check_shapes();
  if (qp.n() != n || qp.m() != m || qp.p() != p)
    throw ShapeError("declared n/m/p do not match the array shapes");
  return qp;
}

json qp_to_json(const QPInstance& qp) {
  json j;
  j["n"] = qp.n();
  j["m"] = qp.m();
  j["p"] = qp.p();
  j["Q"] = matrix_to_json(qp.Q);
  j["q"] = qp.q;
  if (qp.m() > 0) {
    j["A"] = matrix_to_json(qp.A);
    j["b"] = qp.b;
  }
  if (qp.p() > 0) {
    j["G"] = matrix_to_json(qp.G);
    j["h"] = qp.h;
  }
  return j;
}

std::vector<QPInstance> qps_from_json(const json& j) {
  std::vector<QPInstance> out;
  if (j.is_array()) {
    for (const auto& item : j) out.push_back(qp_from_json(item));
  } else {
    out.push_back(qp_from_json(j));
  }
  return out;
}

std::vector<QPInstance> read_qp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return qps_from_json(json::parse(in));
}

}  // namespace optnet
