#include "ringboot/ids/namespace_key.hpp"

#include "ringboot/sha1.hpp"

#include <stdexcept>
#include <string>

namespace ringboot::ids {

NodeId namespace_key(std::string_view name, std::string_view version)
{
    if (name.empty())
        throw std::invalid_argument("namespace name must not be empty");
    std::string material;
    material.reserve(name.size() + 1 + version.size());
    material += name;
    material += ':';
    material += version;
    return NodeId { Sha1::hash(material) };
}

} // namespace ringboot::ids
