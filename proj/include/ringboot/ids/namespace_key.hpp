#pragma once

#include "ringboot/ids/node_id.hpp"

#include <string_view>

namespace ringboot::ids {

// Private overlays and their rendezvous records are both named by the same
// 160-bit digest of "<name>:<version>". Throws std::invalid_argument when the
// name is empty.
NodeId namespace_key(std::string_view name, std::string_view version);

} // namespace ringboot::ids
