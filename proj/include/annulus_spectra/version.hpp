#pragma once

namespace annulus_spectra {

inline constexpr const char* tool_version = "0.1.0";

} // namespace annulus_spectra
