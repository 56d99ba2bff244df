#include "prism/checkpoint.hpp"

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace prism::ad {

namespace {
using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;
}

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& params) {
    FilePtr f(std::fopen(path.c_str(), "wb"), std::fclose);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    std::fwrite("PRCK", 1, 4, f.get());
    uint32_t version = 1, count = uint32_t(params.size());
    std::fwrite(&version, 4, 1, f.get());
    std::fwrite(&count, 4, 1, f.get());
    for (const auto& [name, tensor] : params) {
        uint32_t len = uint32_t(name.size());
        std::fwrite(&len, 4, 1, f.get());
        std::fwrite(name.data(), 1, len, f.get());
        uint32_t rank = uint32_t(tensor.shape.size());
        std::fwrite(&rank, 4, 1, f.get());
        for (int d : tensor.shape) {
            uint32_t u = uint32_t(d);
            std::fwrite(&u, 4, 1, f.get());
        }
        for (Scalar x : tensor.v) {
            float fx = float(x);
            std::fwrite(&fx, 4, 1, f.get());
        }
    }
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"), std::fclose);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    uint32_t version = 0, count = 0;
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::string(magic, 4) != "PRCK")
        throw std::runtime_error("bad checkpoint magic: " + path);
    if (std::fread(&version, 4, 1, f.get()) != 1 || version != 1)
        throw std::runtime_error("unsupported checkpoint version");
    if (std::fread(&count, 4, 1, f.get()) != 1) throw std::runtime_error("truncated checkpoint");
    std::map<std::string, Tensor> out;
    for (uint32_t e = 0; e < count; ++e) {
        uint32_t len = 0;
        if (std::fread(&len, 4, 1, f.get()) != 1) throw std::runtime_error("truncated checkpoint");
        std::string name(len, '\0');
        if (std::fread(name.data(), 1, len, f.get()) != len)
            throw std::runtime_error("truncated checkpoint");
        uint32_t rank = 0;
        if (std::fread(&rank, 4, 1, f.get()) != 1) throw std::runtime_error("truncated checkpoint");
        std::vector<int> shape(rank);
        for (uint32_t i = 0; i < rank; ++i) {
            uint32_t d = 0;
            if (std::fread(&d, 4, 1, f.get()) != 1) throw std::runtime_error("truncated checkpoint");
            shape[i] = int(d);
        }
        Tensor t(shape);
        for (auto& x : t.v) {
            float fx = 0;
            if (std::fread(&fx, 4, 1, f.get()) != 1) throw std::runtime_error("truncated checkpoint");
            x = double(fx);
        }
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace prism::ad
