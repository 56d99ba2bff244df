#include "prism/nets.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace prism::nets {

namespace {

constexpr double kLeakySlope = 0.01;

int conv_param_2d(ad::Graph& g, const std::string& name, int oc, int ic, int k,
                  std::mt19937_64& rng) {
    return g.param(name, ad::kaiming_uniform({oc, ic, k, k}, ic * k * k, rng));
}

void assert_shape(const ad::Graph& g, int node, const std::vector<int>& expect,
                  const std::string& what) {
    if (g.node(node).shape != expect)
        throw std::logic_error("architecture chain broken at " + what);
}

}  // namespace

int scaled(int channels, double scale) {
    return std::max(1, int(std::lround(channels * scale)));
}

int build_voxel_encoder(ad::Graph& g, int x, double scale, std::mt19937_64& rng,
                        const std::string& prefix) {
    assert_shape(g, x, {1, kVoxelRes, kVoxelRes, kVoxelRes}, prefix + " input");
    const int raw[] = {1, 16, 32, 64, 128, 128};
    int h = x;
    int ch = 1;
    for (int layer = 0; layer < 5; ++layer) {
        int oc = layer == 0 ? scaled(raw[1], scale) : scaled(raw[layer + 1], scale);
        std::string base = prefix + ".conv" + std::to_string(layer);
        int w = g.param(base + ".w", ad::kaiming_uniform({oc, ch, 4, 4, 4}, ch * 64, rng));
        int b = g.param(base + ".b", ad::Tensor({oc}));
        h = g.conv3d(h, w, b, 4, 2, 1);
        h = g.leaky_relu(h, kLeakySlope);
        ch = oc;
    }
    // 64 -> 32 -> 16 -> 8 -> 4 -> 2 spatial
    assert_shape(g, h, {ch, 2, 2, 2}, prefix + " conv chain");
    int flat = g.reshape(h, {ch * 8});
    int w = g.param(prefix + ".fc.w", ad::kaiming_uniform({kEmbed3d, ch * 8}, ch * 8, rng));
    int b = g.param(prefix + ".fc.b", ad::Tensor({kEmbed3d}));
    return g.linear(flat, w, b);
}

std::vector<int> build_split_mlp(ad::Graph& g, int z, int n, double scale, std::mt19937_64& rng,
                                 const std::string& prefix) {
    if (n < 1) throw std::invalid_argument("split_embedding: extrusion count must be >= 1");
    assert_shape(g, z, {kEmbed3d}, prefix + " input");
    const int sizes[] = {kEmbed3d, scaled(512, scale), scaled(512, scale), kEmbed3d * n};
    int h = z;
    for (int layer = 0; layer < 3; ++layer) {
        std::string base = prefix + ".fc" + std::to_string(layer);
        int w = g.param(base + ".w",
                        ad::kaiming_uniform({sizes[layer + 1], sizes[layer]}, sizes[layer], rng));
        int b = g.param(base + ".b", ad::Tensor({sizes[layer + 1]}));
        h = g.linear(h, w, b);
        if (layer + 1 < 3) h = g.relu(h);  // per-step embeddings keep sign
    }
    std::vector<int> out;
    for (int i = 0; i < n; ++i) out.push_back(g.split(h, n, i));
    return out;
}

int build_decoder2d(ad::Graph& g, int z64, double scale, std::mt19937_64& rng,
                    const std::string& prefix) {
    assert_shape(g, z64, {kEmbed2d}, prefix + " input");
    int h = g.reshape(z64, {kEmbed2d, 1, 1});
    const int raw[] = {kEmbed2d, 512, 64, 64, 32, 32, 16, 1};
    // First layer 1x1; then six k4 s2 layers with paddings 0,1,1,1,1,1
    // so the spatial chain 1 -> 1 -> 4 -> 8 -> 16 -> 32 -> 64 -> 128 closes.
    const int kernels[] = {1, 4, 4, 4, 4, 4, 4};
    const int strides[] = {1, 2, 2, 2, 2, 2, 2};
    const int pads[] = {0, 0, 1, 1, 1, 1, 1};
    int ch = kEmbed2d;
    for (int layer = 0; layer < 7; ++layer) {
        int oc = layer == 6 ? 1 : scaled(raw[layer + 1], scale);
        std::string base = prefix + ".deconv" + std::to_string(layer);
        int k = kernels[layer];
        int w = g.param(base + ".w", ad::kaiming_uniform({ch, oc, k, k}, ch * k * k, rng));
        int b = g.param(base + ".b", ad::Tensor({oc}));
        h = g.conv_transpose2d(h, w, b, k, strides[layer], pads[layer]);
        if (layer + 1 < 7) h = g.relu(h);
        ch = oc;
    }
    assert_shape(g, h, {1, kProfileRes, kProfileRes}, prefix + " deconv chain");
    return g.reshape(h, {kProfileRes, kProfileRes});
}

int build_profile_decoder(ad::Graph& g, int e128, double scale, std::mt19937_64& rng,
                          const std::string& embed_prefix, const std::string& dec_prefix) {
    assert_shape(g, e128, {kEmbed3d}, embed_prefix + " input");
    int w = g.param(embed_prefix + ".to64.w", ad::kaiming_uniform({kEmbed2d, kEmbed3d}, kEmbed3d, rng));
    int b = g.param(embed_prefix + ".to64.b", ad::Tensor({kEmbed2d}));
    int z64 = g.linear(e128, w, b);
    return build_decoder2d(g, z64, scale, rng, dec_prefix);
}

int build_envelope_decoder(ad::Graph& g, int e128, double scale, std::mt19937_64& rng,
                           const std::string& prefix) {
    assert_shape(g, e128, {kEmbed3d}, prefix + " input");
    int h = g.reshape(e128, {kEmbed3d, 1});
    const int raw[] = {kEmbed3d, 512, 64, 64, 32, 32, 1};
    // First kernel 1, first two strides 1, then k4 s2; paddings make the
    // chain 1 -> 1 -> 4 -> 8 -> 16 -> 32 -> 64 land exactly.
    const int kernels[] = {1, 4, 4, 4, 4, 4};
    const int strides[] = {1, 1, 2, 2, 2, 2};
    const int pads[] = {0, 0, 1, 1, 1, 1};
    int ch = kEmbed3d;
    for (int layer = 0; layer < 6; ++layer) {
        int oc = layer == 5 ? 1 : scaled(raw[layer + 1], scale);
        std::string base = prefix + ".deconv" + std::to_string(layer);
        int k = kernels[layer];
        int w = g.param(base + ".w", ad::kaiming_uniform({ch, oc, k}, ch * k, rng));
        int b = g.param(base + ".b", ad::Tensor({oc}));
        h = g.conv_transpose1d(h, w, b, k, strides[layer], pads[layer]);
        if (layer + 1 < 6) h = g.relu(h);
        ch = oc;
    }
    assert_shape(g, h, {1, kEnvelopeLen}, prefix + " deconv chain");
    return g.reshape(h, {kEnvelopeLen});
}

int build_encoder2d(ad::Graph& g, int x, double scale, std::mt19937_64& rng,
                    const std::string& prefix) {
    assert_shape(g, x, {1, kProfileRes, kProfileRes}, prefix + " input");
    const int raw[] = {1, 64, 64, 128, 256, 512, kEmbed2d};
    // k4 s2, paddings 1,1,1,1,1,0: 128 -> 64 -> 32 -> 16 -> 8 -> 4 -> 1.
    const int pads[] = {1, 1, 1, 1, 1, 0};
    int h = x;
    int ch = 1;
    for (int layer = 0; layer < 6; ++layer) {
        int oc = layer == 5 ? kEmbed2d : scaled(raw[layer + 1], scale);
        std::string base = prefix + ".conv" + std::to_string(layer);
        int w = conv_param_2d(g, base + ".w", oc, ch, 4, rng);
        int b = g.param(base + ".b", ad::Tensor({oc}));
        h = g.conv2d(h, w, b, 4, 2, pads[layer]);
        if (layer + 1 < 6) h = g.leaky_relu(h, kLeakySlope);
        ch = oc;
    }
    assert_shape(g, h, {kEmbed2d, 1, 1}, prefix + " conv chain");
    return g.reshape(h, {kEmbed2d});
}

int build_downsample_profile(ad::Graph& g, int p) {
    assert_shape(g, p, {kProfileRes, kProfileRes}, "downsampler input");
    int x = g.reshape(p, {1, kProfileRes, kProfileRes});
    ad::Tensor w({1, 1, 3, 3});
    for (auto& v : w.v) v = 1.0 / 3.0;
    int wc = g.constant(std::move(w));
    int h = g.conv2d(x, wc, -1, 3, 2, 1);
    assert_shape(g, h, {1, kEnvelopeLen, kEnvelopeLen}, "downsampler output");
    return g.reshape(h, {kEnvelopeLen, kEnvelopeLen});
}

SdfGrid2 downsample_profile_values(const SdfGrid2& p) {
    if (p.n != kProfileRes) throw std::invalid_argument("downsampler input must be 128x128");
    SdfGrid2 out(kEnvelopeLen);
    for (int oy = 0; oy < out.n; ++oy)
        for (int ox = 0; ox < out.n; ++ox) {
            double acc = 0;
            for (int dy = 0; dy < 3; ++dy)
                for (int dx = 0; dx < 3; ++dx) {
                    int x = 2 * ox + dx - 1, y = 2 * oy + dy - 1;
                    if (x < 0 || y < 0 || x >= p.n || y >= p.n) continue;
                    acc += (1.0 / 3.0) * double(p.at(x, y));
                }
            out.at(ox, oy) = float(acc);
        }
    return out;
}

ad::Tensor tensor_from_grid(const SdfGrid2& g) {
    ad::Tensor t({1, g.n, g.n});
    for (size_t i = 0; i < g.count(); ++i) t.v[i] = double(g.v[i]);
    return t;
}

ad::Tensor tensor_from_grid(const SdfGrid3& g) {
    ad::Tensor t({1, g.n, g.n, g.n});
    for (size_t i = 0; i < g.count(); ++i) t.v[i] = double(g.v[i]);
    return t;
}

std::string architecture_json(double scale) {
    std::ostringstream os;
    os << "{\"scale\":" << scale
       << ",\"embed3d\":" << kEmbed3d << ",\"embed2d\":" << kEmbed2d
       << ",\"voxel_encoder\":{\"channels\":[1," << scaled(16, scale) << "," << scaled(32, scale)
       << "," << scaled(64, scale) << "," << scaled(128, scale) << "," << scaled(128, scale)
       << "],\"kernel\":4,\"stride\":2,\"pad\":1}"
       << ",\"split_mlp\":{\"hidden\":" << scaled(512, scale) << "}"
       << ",\"decoder2d\":{\"channels\":[" << kEmbed2d << "," << scaled(512, scale) << ","
       << scaled(64, scale) << "," << scaled(64, scale) << "," << scaled(32, scale) << ","
       << scaled(32, scale) << "," << scaled(16, scale) << ",1]}"
       << ",\"encoder2d\":{\"channels\":[1," << scaled(64, scale) << "," << scaled(64, scale)
       << "," << scaled(128, scale) << "," << scaled(256, scale) << "," << scaled(512, scale)
       << "," << kEmbed2d << "]}"
       << ",\"envelope_decoder\":{\"channels\":[" << kEmbed3d << "," << scaled(512, scale) << ","
       << scaled(64, scale) << "," << scaled(64, scale) << "," << scaled(32, scale) << ","
       << scaled(32, scale) << ",1]}"
       << ",\"downsampler\":{\"kernel\":3,\"stride\":2,\"pad\":1,\"weight\":0.3333333333333333}}";
    return os.str();
}

}  // namespace prism::nets
