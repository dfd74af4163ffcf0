#pragma once

#include <string>

#include "fdapred/fpca.hpp"

namespace fdapred {

// JSON model file: basis description, coefficients, eigenvalues, noise
// variance, mean grid, fit log. write -> read -> write is byte-identical.
std::string model_to_json(const FpcaModel& model);
FpcaModel model_from_json(const std::string& text);

void save_model(const FpcaModel& model, const std::string& path);
FpcaModel load_model(const std::string& path);

}  // namespace fdapred
