#pragma once

#include <array>

namespace cdm {

/// Center-size box in normalized image coordinates: (x, y) in [0, 1],
/// w, h in (0, 1].
struct Box {
    double x = 0.5;
    double y = 0.5;
    double w = 1.0;
    double h = 1.0;

    double x0() const { return x - 0.5 * w; }
    double x1() const { return x + 0.5 * w; }
    double y0() const { return y - 0.5 * h; }
    double y1() const { return y + 0.5 * h; }
    double area() const { return w * h; }

    std::array<double, 4> as_array() const { return {x, y, w, h}; }
    bool operator==(const Box&) const = default;
};

inline constexpr double kMinBoxSide = 1e-3;

/// True when w, h > 0 and the box lies inside the unit image (tolerance tol).
bool inside_unit_image(const Box& b, double tol = 1e-12);

/// Clamps the center into [0,1], w/h into [kMinBoxSide, 1], then shrinks the
/// box to its intersection with the unit image (keeping sides >= kMinBoxSide).
Box clamp_to_image(Box b);

}  // namespace cdm
