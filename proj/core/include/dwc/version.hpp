#pragma once

#include <string_view>

namespace dwc {

std::string_view version() noexcept;

}  // namespace dwc
