#include "percvae/schema.hpp"

#include <algorithm>
#include <cmath>

#include "percvae_schemas.inc"

namespace percvae {

namespace {

bool has_type(const nlohmann::json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    if (type == "integer") return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    if (type == "number") return v.is_number();
    return false;
}

void check(const nlohmann::json& schema, const nlohmann::json& v, const std::string& where,
           std::vector<std::string>& errors) {
    if (auto t = schema.find("type"); t != schema.end()) {
        bool ok = false;
        if (t->is_string()) {
            ok = has_type(v, t->get<std::string>());
        } else {
            for (const auto& option : *t) ok = ok || has_type(v, option.get<std::string>());
        }
        if (!ok) {
            errors.push_back(where + ": expected type " + t->dump());
            return;
        }
    }
    if (auto e = schema.find("enum"); e != schema.end()) {
        if (std::find(e->begin(), e->end(), v) == e->end()) errors.push_back(where + ": value not in " + e->dump());
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (auto m = schema.find("minimum"); m != schema.end() && x < m->get<double>())
            errors.push_back(where + ": below minimum " + m->dump());
        if (auto m = schema.find("maximum"); m != schema.end() && x > m->get<double>())
            errors.push_back(where + ": above maximum " + m->dump());
    }
    if (v.is_string()) {
        if (auto m = schema.find("minLength"); m != schema.end() && v.get<std::string>().size() < m->get<std::size_t>())
            errors.push_back(where + ": shorter than " + m->dump());
    }
    if (v.is_array()) {
        if (auto m = schema.find("minItems"); m != schema.end() && v.size() < m->get<std::size_t>())
            errors.push_back(where + ": fewer than " + m->dump() + " items");
        if (auto items = schema.find("items"); items != schema.end())
            for (std::size_t i = 0; i < v.size(); ++i) check(*items, v[i], where + "[" + std::to_string(i) + "]", errors);
    }
    if (v.is_object()) {
        if (auto req = schema.find("required"); req != schema.end())
            for (const auto& name : *req)
                if (!v.contains(name.get<std::string>()))
                    errors.push_back(where + ": missing required field '" + name.get<std::string>() + "'");
        const auto props = schema.find("properties");
        const bool closed = schema.value("additionalProperties", true) == false;
        for (const auto& [key, value] : v.items()) {
            if (props != schema.end() && props->contains(key)) {
                check(props->at(key), value, where + "." + key, errors);
            } else if (closed) {
                errors.push_back(where + ": unexpected field '" + key + "'");
            }
        }
    }
}

}  // namespace

std::vector<std::string> validate_schema(const nlohmann::json& schema, const nlohmann::json& instance) {
    std::vector<std::string> errors;
    check(schema, instance, "$", errors);
    return errors;
}

const nlohmann::json& generate_request_schema() {
    static const auto j = nlohmann::json::parse(schema_text::generate_request);
    return j;
}

const nlohmann::json& generate_response_schema() {
    static const auto j = nlohmann::json::parse(schema_text::generate_response);
    return j;
}

const nlohmann::json& model_info_schema() {
    static const auto j = nlohmann::json::parse(schema_text::model_info);
    return j;
}

}  // namespace percvae
