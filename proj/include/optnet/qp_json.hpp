#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "optnet/qp.hpp"

namespace optnet {

/// QP file schema: {"n","m","p", "Q","q","A","b","G","h"} with row-major
/// nested arrays. "n", "m" and "p" are optional and inferred from q, b and h;
/// when present they must agree. Missing "A"/"b" means m = 0 and missing
/// "G"/"h" means p = 0. A batch file is a JSON array of such objects.
QPInstance qp_from_json(const nlohmann::json& j);
nlohmann::json qp_to_json(const QPInstance& qp);

/// Accepts either a single object or an array of objects.
std::vector<QPInstance> qps_from_json(const nlohmann::json& j);
std::vector<QPInstance> read_qp_file(const std::string& path);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, std::size_t cols_if_empty);

}  // namespace optnet
