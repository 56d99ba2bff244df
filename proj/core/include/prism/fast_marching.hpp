#pragma once

#include <stdexcept>

#include "prism/grid.hpp"

namespace prism {

struct NoInterfaceError : std::runtime_error {
    NoInterfaceError() : std::runtime_error("no interface") {}
};
struct ShapeEliminatedError : std::runtime_error {
    ShapeEliminatedError() : std::runtime_error("shape eliminated by offset") {}
};

// First-order upwind fast marching re-initialization. The zero level set
// is preserved to sub-cell accuracy: the initial band is seeded by linear
// interpolation across sign changes. Signs away from the band are kept.
// Throws NoInterfaceError on uniform-sign input.
SdfGrid2 fast_march_reinit(const SdfGrid2& g);
SdfGrid3 fast_march_reinit(const SdfGrid3& g);

// Morphological opening by a ball: offset inward by `radius` (world units),
// re-initialize, offset back out, re-initialize. Convex edges acquire
// fillets of that radius. Throws ShapeEliminatedError when the eroded
// shape vanishes.
SdfGrid2 round_offset(const SdfGrid2& g, float radius);
SdfGrid3 round_offset(const SdfGrid3& g, float radius);

// SDF from an occupancy mask: +-1 field re-initialized, so the zero set
// sits midway between inside and outside cells.
SdfGrid2 sdf_from_binary(const BinaryGrid2& mask);
SdfGrid3 sdf_from_binary(const BinaryGrid3& mask);

}  // namespace prism
