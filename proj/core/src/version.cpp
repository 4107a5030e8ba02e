#include "dwc/version.hpp"

namespace dwc {

std::string_view version() noexcept { return DWC_VERSION_STRING; }

}  // namespace dwc
