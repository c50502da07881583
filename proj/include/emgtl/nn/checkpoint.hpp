#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "emgtl/nn/network.hpp"

namespace emgtl::nn {

inline constexpr int kCheckpointVersion = 1;

/// Parameters (values, ADAM moments, frozen flags), every batch-norm bank and
/// the optimiser step. Key order and number formatting are fixed, so equal
/// models serialise to equal bytes.
nlohmann::json model_state_to_json(Model& model);
/// Loads into a model of the same structure; names and shapes must match.
void model_state_from_json(Model& model, const nlohmann::json& j);

/// Writes {"format","version","kind","architecture","state",...extra}.
void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& architecture,
                     Model& model, const nlohmann::json& extra = nlohmann::json::object());
nlohmann::json read_checkpoint(const std::filesystem::path& path);

}  // namespace emgtl::nn
