#include "prism/grid.hpp"

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace prism {

BinaryGrid2 threshold(const SdfGrid2& g) {
    BinaryGrid2 b(g.n);
    for (size_t i = 0; i < g.count(); ++i) b.v[i] = g.v[i] < 0.f ? 1 : 0;
    return b;
}

BinaryGrid3 threshold(const SdfGrid3& g) {
    BinaryGrid3 b(g.n);
    for (size_t i = 0; i < g.count(); ++i) b.v[i] = g.v[i] < 0.f ? 1 : 0;
    return b;
}

namespace {

template <class B>
double iou_impl(const B& a, const B& b) {
    if (a.n != b.n) throw std::invalid_argument("iou: dimension mismatch");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.count(); ++i) {
        bool ia = a.v[i] != 0, ib = b.v[i] != 0;
        inter += (ia && ib);
        uni += (ia || ib);
    }
    if (uni == 0) return 1.0;  // both empty
    return double(inter) / double(uni);
}

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_header(std::FILE* f, uint8_t rank, const uint32_t* dims) {
    std::fwrite("VSDF", 1, 4, f);
    uint32_t version = 1;
    std::fwrite(&version, 4, 1, f);
    std::fwrite(&rank, 1, 1, f);
    std::fwrite(dims, 4, rank, f);
}

bool read_header(std::FILE* f, uint8_t& rank, uint32_t dims[3]) {
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::string(magic, 4) != "VSDF") return false;
    uint32_t version = 0;
    if (std::fread(&version, 4, 1, f) != 1 || version != 1) return false;
    if (std::fread(&rank, 1, 1, f) != 1 || (rank != 2 && rank != 3)) return false;
    return std::fread(dims, 4, rank, f) == rank;
}

}  // namespace

double iou(const BinaryGrid2& a, const BinaryGrid2& b) { return iou_impl(a, b); }
double iou(const BinaryGrid3& a, const BinaryGrid3& b) { return iou_impl(a, b); }

void save_vsdf(const std::string& path, const SdfGrid2& g) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    uint32_t dims[2] = {uint32_t(g.n), uint32_t(g.n)};
    write_header(f.get(), 2, dims);
    std::fwrite(g.v.data(), 4, g.count(), f.get());
}

void save_vsdf(const std::string& path, const SdfGrid3& g) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    uint32_t dims[3] = {uint32_t(g.n), uint32_t(g.n), uint32_t(g.n)};
    write_header(f.get(), 3, dims);
    std::fwrite(g.v.data(), 4, g.count(), f.get());
}

bool load_vsdf(const std::string& path, SdfGrid2& out) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) return false;
    uint8_t rank;
    uint32_t dims[3];
    if (!read_header(f.get(), rank, dims) || rank != 2 || dims[0] != dims[1]) return false;
    out = SdfGrid2(int(dims[0]));
    return std::fread(out.v.data(), 4, out.count(), f.get()) == out.count();
}

bool load_vsdf(const std::string& path, SdfGrid3& out) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) return false;
    uint8_t rank;
    uint32_t dims[3];
    if (!read_header(f.get(), rank, dims) || rank != 3) return false;
    if (dims[0] != dims[1] || dims[1] != dims[2]) return false;
    out = SdfGrid3(int(dims[0]));
    return std::fread(out.v.data(), 4, out.count(), f.get()) == out.count();
}

int vsdf_rank(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) return -1;
    uint8_t rank;
    uint32_t dims[3];
    if (!read_header(f.get(), rank, dims)) return -1;
    return rank;
}

}  // namespace prism
