#pragma once

#include <array>
#include <string>
#include <vector>

#include "prism/grid.hpp"

namespace prism {

struct TriMesh {
    std::vector<std::array<float, 3>> vertices;
    std::vector<std::array<int, 3>> triangles;

    double area() const;
};

// Standard 256-case marching cubes, vertices by linear edge interpolation.
// Fields with no crossing yield an empty mesh.
TriMesh marching_cubes(const SdfGrid3& g, float level = 0.f);

// ASCII OBJ, v/f records only.
void save_obj(const std::string& path, const TriMesh& mesh);

}  // namespace prism
