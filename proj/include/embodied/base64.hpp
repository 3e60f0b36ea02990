#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace embodied::roschain {

class Base64Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Standard alphabet, '=' padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace embodied::roschain
