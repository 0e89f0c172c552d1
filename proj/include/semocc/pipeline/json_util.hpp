// ----------------------------------------------------------------------------
// Copyright 2026 The semocc Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#pragma once

// Strict reading of JSON configuration objects: unknown keys and wrong
// types are rejected with SchemaError naming the offending path.

#include <array>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semocc/core/errors.hpp"
#include "semocc/core/types.hpp"

namespace semocc::json_util {

using nlohmann::json;

inline void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw SchemaError(where + ": expected an object");
}

inline void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    require_object(j, where);
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) throw SchemaError(where + ": unknown key '" + it.key() + "'");
    }
}

inline double number(const json& j, const char* key, double fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw SchemaError(where + "." + key + ": expected a number");
    return j[key].get<double>();
}

inline long long integer(const json& j, const char* key, long long fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer()) throw SchemaError(where + "." + key + ": expected an integer");
    return j[key].get<long long>();
}

inline bool boolean(const json& j, const char* key, bool fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_boolean()) throw SchemaError(where + "." + key + ": expected a boolean");
    return j[key].get<bool>();
}

inline std::string string(const json& j, const char* key, const std::string& fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_string()) throw SchemaError(where + "." + key + ": expected a string");
    return j[key].get<std::string>();
}

inline Vec3 vec3(const json& j, const char* key, const Vec3& fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& a = j[key];
    if (!a.is_array() || a.size() != 3) throw SchemaError(where + "." + key + ": expected 3 numbers");
    Vec3 v;
    for (int k = 0; k < 3; ++k) {
        if (!a[k].is_number()) throw SchemaError(where + "." + key + ": expected 3 numbers");
        v[k] = a[k].get<double>();
    }
    return v;
}

inline json to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace semocc::json_util
