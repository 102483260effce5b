#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace percvae {

/// Validates `instance` against a JSON Schema subset: type (single or list),
/// required, properties, additionalProperties=false, items, minItems,
/// minLength, minimum, maximum and enum. Returns one message per violation.
std::vector<std::string> validate_schema(const nlohmann::json& schema, const nlohmann::json& instance);

const nlohmann::json& generate_request_schema();
const nlohmann::json& generate_response_schema();
const nlohmann::json& model_info_schema();

}  // namespace percvae
