#pragma once

#include <array>
#include <vector>

#include "prism/grid.hpp"

namespace prism {

// One of the 24 orientation-preserving cube symmetries, stored as a
// signed axis permutation: dest[i] = sign[i] * src[axis[i]].
struct Rotation24 {
    std::array<int, 3> axis{0, 1, 2};
    std::array<int, 3> sign{1, 1, 1};

    std::array<int, 3> apply(const std::array<int, 3>& p) const {
        return {sign[0] * p[axis[0]], sign[1] * p[axis[1]], sign[2] * p[axis[2]]};
    }
    std::array<double, 3> apply(const std::array<double, 3>& p) const {
        return {sign[0] * p[axis[0]], sign[1] * p[axis[1]], sign[2] * p[axis[2]]};
    }
    Rotation24 inverse() const;
    Rotation24 compose(const Rotation24& then) const;  // apply *this first, `then` second
    bool operator==(const Rotation24&) const = default;

    int determinant() const;
    static Rotation24 identity() { return {}; }
    static Rotation24 rot90_x();  // +90 about x: (x,y,z) -> (x,-z,y)
    static Rotation24 rot90_y();  // +90 about y: (x,y,z) -> (z,y,-x)
    static Rotation24 rot90_z();  // +90 about z: (x,y,z) -> (-y,x,z)

    // All 24 elements, deterministic order, identity first.
    static const std::vector<Rotation24>& group();
};

SdfGrid3 rotate_grid(const SdfGrid3& g, const Rotation24& r);
BinaryGrid3 rotate_grid(const BinaryGrid3& g, const Rotation24& r);

// Maximizes iou(target, rotate(candidate, r)) over the group.
// Ties break by enumeration order.
struct BestRotation {
    double ratio = 0.0;
    Rotation24 rot;
};
BestRotation iou_best_rotation(const BinaryGrid3& target, const BinaryGrid3& candidate);

}  // namespace prism
