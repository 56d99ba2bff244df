#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prism {

// Scalar fields on regular grids, negative inside the shape.
// Values are stored row-major with x fastest: idx = x + n*(y + n*z).
// The world extent is always the unit cube / unit square, so the
// spacing is 1/n world units per cell.

struct SdfGrid2 {
    int n = 0;
    std::vector<float> v;

    SdfGrid2() = default;
    explicit SdfGrid2(int res, float fill = 0.f) : n(res), v(size_t(res) * res, fill) {}

    float& at(int x, int y) { return v[size_t(x) + size_t(n) * y]; }
    float at(int x, int y) const { return v[size_t(x) + size_t(n) * y]; }
    float spacing() const { return 1.0f / float(n); }
    size_t count() const { return v.size(); }
};

struct SdfGrid3 {
    int n = 0;
    std::vector<float> v;

    SdfGrid3() = default;
    explicit SdfGrid3(int res, float fill = 0.f) : n(res), v(size_t(res) * res * res, fill) {}

    float& at(int x, int y, int z) { return v[size_t(x) + size_t(n) * (size_t(y) + size_t(n) * z)]; }
    float at(int x, int y, int z) const { return v[size_t(x) + size_t(n) * (size_t(y) + size_t(n) * z)]; }
    float spacing() const { return 1.0f / float(n); }
    size_t count() const { return v.size(); }
};

struct BinaryGrid2 {
    int n = 0;
    std::vector<uint8_t> v;  // 1 = inside the object

    BinaryGrid2() = default;
    explicit BinaryGrid2(int res, uint8_t fill = 0) : n(res), v(size_t(res) * res, fill) {}

    uint8_t& at(int x, int y) { return v[size_t(x) + size_t(n) * y]; }
    uint8_t at(int x, int y) const { return v[size_t(x) + size_t(n) * y]; }
    size_t count() const { return v.size(); }
};

struct BinaryGrid3 {
    int n = 0;
    std::vector<uint8_t> v;

    BinaryGrid3() = default;
    explicit BinaryGrid3(int res, uint8_t fill = 0) : n(res), v(size_t(res) * res * res, fill) {}

    uint8_t& at(int x, int y, int z) { return v[size_t(x) + size_t(n) * (size_t(y) + size_t(n) * z)]; }
    uint8_t at(int x, int y, int z) const { return v[size_t(x) + size_t(n) * (size_t(y) + size_t(n) * z)]; }
    size_t count() const { return v.size(); }
};

BinaryGrid2 threshold(const SdfGrid2& g);  // value < 0 -> inside
BinaryGrid3 threshold(const SdfGrid3& g);

// |a&b| / |a|b|. Both empty -> 1 by convention.
double iou(const BinaryGrid2& a, const BinaryGrid2& b);
double iou(const BinaryGrid3& a, const BinaryGrid3& b);

// Binary grid format: magic "VSDF", u32 version=1, u8 rank, u32 dims[rank],
// then little-endian f32 values, x fastest.
void save_vsdf(const std::string& path, const SdfGrid2& g);
void save_vsdf(const std::string& path, const SdfGrid3& g);
bool load_vsdf(const std::string& path, SdfGrid2& out);
bool load_vsdf(const std::string& path, SdfGrid3& out);
int vsdf_rank(const std::string& path);  // 2, 3, or -1 on error

}  // namespace prism
