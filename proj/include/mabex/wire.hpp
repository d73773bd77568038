#pragma once

#include <json.hpp>

#include "mabex/object_system.hpp"
#include "mabex/scenario.hpp"

namespace mabex {
struct Event;
}

// JSON encodings shared by the history export, the service and the C API.
namespace mabex::wire {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "mabex/1";

// bool and integers are native; symbols are bare strings; text is
// {"text": s}; object references are {"ref": id}; collections are arrays.
Json to_json(const Value& v);
Value value_from_json(const Json& j);

Json to_json(const ObjectSnapshot& s);
ObjectSnapshot snapshot_from_json(const Json& j);

Json to_json(const MessagePattern& p);
Json to_json(const Event& e);
Json to_json(const Diagnostic& d);

}  // namespace mabex::wire
