#pragma once

#include <string>
#include <utility>
#include <vector>

#include "linalg.hpp"

namespace iace {

// Named views over model parameters, used for checkpoints and by the optimizer.
using ParamRefs = std::vector<std::pair<std::string, Matrix*>>;
using ConstParamRefs = std::vector<std::pair<std::string, const Matrix*>>;

ConstParamRefs as_const_refs(const ParamRefs& refs);

// JSON map: name -> {"shape": [rows, cols], "data": row-major values rounded
// to float32}. Keys serialize sorted, so equal parameters give equal bytes.
std::string checkpoint_to_json(const ConstParamRefs& params);
void checkpoint_save(const std::string& path, const ConstParamRefs& params);

// Populates `params` in place. Every named entry must exist with a matching
// shape; extra names in the file are an error, so checkpoints cannot silently
// drop weights.
void checkpoint_from_json(const std::string& text, const ParamRefs& params, const std::string& origin);
void checkpoint_load(const std::string& path, const ParamRefs& params);

}  // namespace iace
