#include "prism/rotation24.hpp"

#include <stdexcept>

namespace prism {

int Rotation24::determinant() const {
    // Sign of the permutation times the product of the axis signs.
    int perm_sign = 1;
    int a[3] = {axis[0], axis[1], axis[2]};
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            if (a[i] > a[j]) perm_sign = -perm_sign;
    return perm_sign * sign[0] * sign[1] * sign[2];
}

Rotation24 Rotation24::inverse() const {
    Rotation24 r;
    for (int i = 0; i < 3; ++i) {
        r.axis[axis[i]] = i;
        r.sign[axis[i]] = sign[i];
    }
    return r;
}

Rotation24 Rotation24::compose(const Rotation24& then) const {
    Rotation24 r;
    for (int i = 0; i < 3; ++i) {
        r.axis[i] = axis[then.axis[i]];
        r.sign[i] = then.sign[i] * sign[then.axis[i]];
    }
    return r;
}

Rotation24 Rotation24::rot90_x() { return {{0, 2, 1}, {1, -1, 1}}; }
Rotation24 Rotation24::rot90_y() { return {{2, 1, 0}, {1, 1, -1}}; }
Rotation24 Rotation24::rot90_z() { return {{1, 0, 2}, {-1, 1, 1}}; }

const std::vector<Rotation24>& Rotation24::group() {
    static const std::vector<Rotation24> g = [] {
        std::vector<Rotation24> out;
        const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        for (auto& p : perms)
            for (int s = 0; s < 8; ++s) {
                Rotation24 r{{p[0], p[1], p[2]},
                             {(s & 4) ? -1 : 1, (s & 2) ? -1 : 1, (s & 1) ? -1 : 1}};
                if (r.determinant() == 1) out.push_back(r);
            }
        return out;
    }();
    return g;
}

namespace {

// Rotates voxel indices about the grid center using doubled coordinates,
// so half-integer centers stay exact.
template <class G>
G rotate_impl(const G& g, const Rotation24& r) {
    Rotation24 inv = r.inverse();
    G out(g.n);
    const int c = g.n - 1;  // doubled center is c
    for (int z = 0; z < g.n; ++z)
        for (int y = 0; y < g.n; ++y)
            for (int x = 0; x < g.n; ++x) {
                std::array<int, 3> d{2 * x - c, 2 * y - c, 2 * z - c};
                auto s = inv.apply(d);
                out.at(x, y, z) = g.at((s[0] + c) / 2, (s[1] + c) / 2, (s[2] + c) / 2);
            }
    return out;
}

}  // namespace

SdfGrid3 rotate_grid(const SdfGrid3& g, const Rotation24& r) { return rotate_impl(g, r); }
BinaryGrid3 rotate_grid(const BinaryGrid3& g, const Rotation24& r) { return rotate_impl(g, r); }

BestRotation iou_best_rotation(const BinaryGrid3& target, const BinaryGrid3& candidate) {
    if (target.n != candidate.n) throw std::invalid_argument("iou_best_rotation: dimension mismatch");
    BestRotation best;
    best.ratio = -1.0;
    for (const auto& r : Rotation24::group()) {
        double score = iou(target, rotate_grid(candidate, r));
        if (score > best.ratio) {
            best.ratio = score;
            best.rot = r;
        }
    }
    return best;
}

}  // namespace prism
