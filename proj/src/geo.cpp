#include "mrlf/geo.hpp"

#include <cmath>

namespace mrlf {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  double phi1 = lat1 * kDegToRad, phi2 = lat2 * kDegToRad;
  double dphi = (lat2 - lat1) * kDegToRad;
  double dlam = (lon2 - lon1) * kDegToRad;
  double sp = std::sin(dphi / 2.0), sl = std::sin(dlam / 2.0);
  double a = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
  a = std::min(1.0, std::max(0.0, a));
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(a));
}

}  // namespace mrlf
