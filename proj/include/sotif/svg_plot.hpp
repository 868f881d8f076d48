#pragma once

#include <span>
#include <string>

#include "sotif/protocol.hpp"

namespace sotif::plot {

/// Self-contained SVG of ACR, FAR and CQS (left axis, [0,1]) and UQS (right
/// axis) against theta_w. Infinite UQS values break the UQS polyline.
std::string sweep_svg(std::span<const eval::ProtocolReport> sweep);

}  // namespace sotif::plot
