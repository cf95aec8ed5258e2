#pragma once

namespace mrlf {

inline constexpr double kEarthRadiusKm = 6371.0088;

// Great-circle distance in km between two points given in degrees.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

}  // namespace mrlf
