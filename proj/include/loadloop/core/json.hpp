#pragma once

#include <json.hpp>

namespace loadloop {

// Objects keep keys sorted, so dump() is the canonical text form of every record.
using Json = nlohmann::json;

}  // namespace loadloop
