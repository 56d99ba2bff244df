#include "prism/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace prism::ad {

namespace {

void require(bool cond, int node_id, const std::string& msg) {
    if (!cond) throw ShapeError(node_id, msg);
}

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }
int convt_out(int in, int k, int s, int p) { return (in - 1) * s - 2 * p + k; }

}  // namespace

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    stored_.emplace_back();
    return int(nodes_.size()) - 1;
}

int Graph::input(std::vector<int> shape, std::string name) {
    Node n{Op::Input, {}, {}, 0.0, std::move(shape), std::move(name)};
    return push(std::move(n));
}

int Graph::param(std::string name, Tensor init) {
    // Re-registering a name shares the existing parameter (weight tying for
    // the shared decoders); the first initialization wins.
    int existing = find_param(name);
    if (existing >= 0) {
        if (nodes_[size_t(existing)].shape != init.shape)
            throw std::runtime_error("parameter re-registered with a different shape: " + name);
        return existing;
    }
    Node n{Op::Param, {}, {}, 0.0, init.shape, std::move(name)};
    int id = push(std::move(n));
    stored_[size_t(id)] = std::move(init);
    param_ids_.push_back(id);
    return id;
}

int Graph::constant(Tensor value) {
    Node n{Op::Const, {}, {}, 0.0, value.shape, ""};
    int id = push(std::move(n));
    stored_[size_t(id)] = std::move(value);
    return id;
}

Tensor& Graph::value(int id) { return stored_[size_t(id)]; }
const Tensor& Graph::value(int id) const { return stored_[size_t(id)]; }

int Graph::find_param(const std::string& name) const {
    for (int id : param_ids_)
        if (nodes_[size_t(id)].name == name) return id;
    return -1;
}

std::map<std::string, Tensor> Graph::named_params() const {
    std::map<std::string, Tensor> out;
    for (int id : param_ids_) out[nodes_[size_t(id)].name] = stored_[size_t(id)];
    return out;
}

void Graph::load_params(const std::map<std::string, Tensor>& values) {
    for (int id : param_ids_) {
        auto it = values.find(nodes_[size_t(id)].name);
        if (it == values.end()) throw std::runtime_error("missing parameter: " + nodes_[size_t(id)].name);
        if (it->second.shape != nodes_[size_t(id)].shape)
            throw std::runtime_error("parameter shape mismatch: " + nodes_[size_t(id)].name);
        stored_[size_t(id)] = it->second;
    }
}

int Graph::linear(int x, int w, int b) {
    const auto& xs = nodes_[size_t(x)].shape;
    const auto& ws = nodes_[size_t(w)].shape;
    int id = int(nodes_.size());
    require(xs.size() == 1 && ws.size() == 2 && ws[1] == xs[0], id, "linear shape mismatch");
    if (b >= 0) require(nodes_[size_t(b)].shape == std::vector<int>{ws[0]}, id, "linear bias mismatch");
    std::vector<int> in = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    return push({Op::Linear, std::move(in), {}, 0.0, {ws[0]}, ""});
}

int Graph::conv2d(int x, int w, int b, int k, int s, int p) {
    const auto& xs = nodes_[size_t(x)].shape;
    const auto& ws = nodes_[size_t(w)].shape;
    int id = int(nodes_.size());
    require(xs.size() == 3 && ws.size() == 4, id, "conv2d rank");
    require(ws[1] == xs[0] && ws[2] == k && ws[3] == k, id, "conv2d weight shape");
    int oh = conv_out(xs[1], k, s, p), ow = conv_out(xs[2], k, s, p);
    require(oh > 0 && ow > 0, id, "conv2d output collapsed");
    std::vector<int> in = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    return push({Op::Conv2d, std::move(in), {k, s, p}, 0.0, {ws[0], oh, ow}, ""});
}

int Graph::conv_transpose2d(int x, int w, int b, int k, int s, int p) {
    const auto& xs = nodes_[size_t(x)].shape;
    const auto& ws = nodes_[size_t(w)].shape;
    int id = int(nodes_.size());
    require(xs.size() == 3 && ws.size() == 4, id, "conv_transpose2d rank");
    require(ws[0] == xs[0] && ws[2] == k && ws[3] == k, id, "conv_transpose2d weight shape");
    int oh = convt_out(xs[1], k, s, p), ow = convt_out(xs[2], k, s, p);
    require(oh > 0 && ow > 0, id, "conv_transpose2d output collapsed");
    std::vector<int> in = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    return push({Op::ConvT2d, std::move(in), {k, s, p}, 0.0, {ws[1], oh, ow}, ""});
}

int Graph::conv_transpose1d(int x, int w, int b, int k, int s, int p) {
    const auto& xs = nodes_[size_t(x)].shape;
    const auto& ws = nodes_[size_t(w)].shape;
    int id = int(nodes_.size());
    require(xs.size() == 2 && ws.size() == 3, id, "conv_transpose1d rank");
    require(ws[0] == xs[0] && ws[2] == k, id, "conv_transpose1d weight shape");
    int ol = convt_out(xs[1], k, s, p);
    require(ol > 0, id, "conv_transpose1d output collapsed");
    std::vector<int> in = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    return push({Op::ConvT1d, std::move(in), {k, s, p}, 0.0, {ws[1], ol}, ""});
}

int Graph::conv3d(int x, int w, int b, int k, int s, int p) {
    const auto& xs = nodes_[size_t(x)].shape;
    const auto& ws = nodes_[size_t(w)].shape;
    int id = int(nodes_.size());
    require(xs.size() == 4 && ws.size() == 5, id, "conv3d rank");
    require(ws[1] == xs[0] && ws[2] == k && ws[3] == k && ws[4] == k, id, "conv3d weight shape");
    int od = conv_out(xs[1], k, s, p), oh = conv_out(xs[2], k, s, p), ow = conv_out(xs[3], k, s, p);
    require(od > 0 && oh > 0 && ow > 0, id, "conv3d output collapsed");
    std::vector<int> in = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    return push({Op::Conv3d, std::move(in), {k, s, p}, 0.0, {ws[0], od, oh, ow}, ""});
}

int Graph::relu(int x) { return push({Op::Relu, {x}, {}, 0.0, nodes_[size_t(x)].shape, ""}); }

int Graph::leaky_relu(int x, double slope) {
    return push({Op::LeakyRelu, {x}, {}, slope, nodes_[size_t(x)].shape, ""});
}

int Graph::elementwise_min(int a, int b) {
    int id = int(nodes_.size());
    require(nodes_[size_t(a)].shape == nodes_[size_t(b)].shape, id, "min shape mismatch");
    return push({Op::Min, {a, b}, {}, 0.0, nodes_[size_t(a)].shape, ""});
}

int Graph::elementwise_max(int a, int b) {
    int id = int(nodes_.size());
    require(nodes_[size_t(a)].shape == nodes_[size_t(b)].shape, id, "max shape mismatch");
    return push({Op::Max, {a, b}, {}, 0.0, nodes_[size_t(a)].shape, ""});
}

int Graph::negate(int x) { return push({Op::Neg, {x}, {}, 0.0, nodes_[size_t(x)].shape, ""}); }

int Graph::add(int a, int b) {
    const auto& as = nodes_[size_t(a)].shape;
    const auto& bs = nodes_[size_t(b)].shape;
    int id = int(nodes_.size());
    bool a_scalar = Tensor::count_of(as) == 1, b_scalar = Tensor::count_of(bs) == 1;
    require(as == bs || a_scalar || b_scalar, id, "add shape mismatch");
    return push({Op::Add, {a, b}, {}, 0.0, a_scalar ? bs : as, ""});
}

int Graph::mean(int x) { return push({Op::Mean, {x}, {}, 0.0, {1}, ""}); }

int Graph::replicate_along_axis(int x, int axis, int count) {
    const auto& xs = nodes_[size_t(x)].shape;
    int id = int(nodes_.size());
    require(axis >= 0 && axis <= int(xs.size()) && count >= 1, id, "replicate axis out of range");
    std::vector<int> shape = xs;
    shape.insert(shape.begin() + axis, count);
    return push({Op::Replicate, {x}, {axis, count}, 0.0, std::move(shape), ""});
}

int Graph::split(int x, int parts, int index) {
    const auto& xs = nodes_[size_t(x)].shape;
    int id = int(nodes_.size());
    require(!xs.empty() && parts >= 1 && xs[0] % parts == 0, id, "split: axis 0 not divisible");
    require(index >= 0 && index < parts, id, "split index out of range");
    std::vector<int> shape = xs;
    shape[0] /= parts;
    return push({Op::Split, {x}, {parts, index}, 0.0, std::move(shape), ""});
}

int Graph::reshape(int x, std::vector<int> shape) {
    int id = int(nodes_.size());
    require(Tensor::count_of(shape) == Tensor::count_of(nodes_[size_t(x)].shape), id,
            "reshape element count mismatch");
    return push({Op::Reshape, {x}, {}, 0.0, std::move(shape), ""});
}

int Graph::transpose2d(int x) {
    const auto& xs = nodes_[size_t(x)].shape;
    int id = int(nodes_.size());
    require(xs.size() == 2, id, "transpose2d expects rank 2");
    return push({Op::Transpose2d, {x}, {}, 0.0, {xs[1], xs[0]}, ""});
}

int Graph::bce_with_logits(int logits, int targets) {
    int id = int(nodes_.size());
    require(nodes_[size_t(logits)].shape == nodes_[size_t(targets)].shape, id,
            "bce_with_logits shape mismatch");
    return push({Op::BceWithLogits, {logits, targets}, {}, 0.0, {1}, ""});
}

// ---------------------------------------------------------------------------
// Forward

namespace {

void forward_node(const Graph& g, int id, Context& ctx) {
    const Node& n = g.node(id);
    auto in = [&](int i) -> const Tensor& { return ctx.val[size_t(n.inputs[size_t(i)])]; };
    Tensor& out = ctx.val[size_t(id)];
    out = Tensor(n.shape);

    switch (n.op) {
        case Op::Input:
        case Op::Param:
        case Op::Const:
            break;  // handled by caller
        case Op::Linear: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const bool bias = n.inputs.size() == 3;
            int O = w.shape[0], I = w.shape[1];
            for (int o = 0; o < O; ++o) {
                Scalar acc = bias ? in(2).v[size_t(o)] : 0.0;
                const Scalar* wr = w.v.data() + size_t(o) * I;
                for (int i = 0; i < I; ++i) acc += wr[i] * x.v[size_t(i)];
                out.v[size_t(o)] = acc;
            }
            break;
        }
        case Op::Conv2d: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const bool bias = n.inputs.size() == 3;
            int k = n.iattrs[0], s = n.iattrs[1], p = n.iattrs[2];
            int C = x.shape[0], H = x.shape[1], W = x.shape[2];
            int OC = n.shape[0], OH = n.shape[1], OW = n.shape[2];
            for (int oc = 0; oc < OC; ++oc)
                for (int oh = 0; oh < OH; ++oh)
                    for (int ow = 0; ow < OW; ++ow) {
                        Scalar acc = bias ? in(2).v[size_t(oc)] : 0.0;
                        for (int ic = 0; ic < C; ++ic)
                            for (int kh = 0; kh < k; ++kh) {
                                int ih = oh * s - p + kh;
                                if (ih < 0 || ih >= H) continue;
                                const Scalar* xr = x.v.data() + (size_t(ic) * H + ih) * W;
                                const Scalar* wr =
                                    w.v.data() + ((size_t(oc) * C + ic) * k + kh) * k;
                                for (int kw = 0; kw < k; ++kw) {
                                    int iw = ow * s - p + kw;
                                    if (iw < 0 || iw >= W) continue;
                                    acc += xr[iw] * wr[kw];
                                }
                            }
                        out.v[(size_t(oc) * OH + oh) * OW + ow] = acc;
                    }
            break;
        }
        case Op::ConvT2d: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const bool bias = n.inputs.size() == 3;
            int k = n.iattrs[0], s = n.iattrs[1], p = n.iattrs[2];
            int IC = x.shape[0], H = x.shape[1], W = x.shape[2];
            int OC = n.shape[0], OH = n.shape[1], OW = n.shape[2];
            if (bias)
                for (int oc = 0; oc < OC; ++oc)
                    std::fill_n(out.v.data() + size_t(oc) * OH * OW, size_t(OH) * OW,
                                in(2).v[size_t(oc)]);
            for (int ic = 0; ic < IC; ++ic)
                for (int ih = 0; ih < H; ++ih)
                    for (int iw = 0; iw < W; ++iw) {
                        Scalar xv = x.v[(size_t(ic) * H + ih) * W + iw];
                        if (xv == 0.0) continue;
                        for (int oc = 0; oc < OC; ++oc) {
                            const Scalar* wr = w.v.data() + ((size_t(ic) * OC + oc) * k) * k;
                            for (int kh = 0; kh < k; ++kh) {
                                int oh = ih * s - p + kh;
                                if (oh < 0 || oh >= OH) continue;
                                Scalar* orow = out.v.data() + (size_t(oc) * OH + oh) * OW;
                                for (int kw = 0; kw < k; ++kw) {
                                    int ow = iw * s - p + kw;
                                    if (ow < 0 || ow >= OW) continue;
                                    orow[ow] += xv * wr[size_t(kh) * k + kw];
                                }
                            }
                        }
                    }
            break;
        }
        case Op::ConvT1d: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const bool bias = n.inputs.size() == 3;
            int k = n.iattrs[0], s = n.iattrs[1], p = n.iattrs[2];
            int IC = x.shape[0], L = x.shape[1];
            int OC = n.shape[0], OL = n.shape[1];
            if (bias)
                for (int oc = 0; oc < OC; ++oc)
                    std::fill_n(out.v.data() + size_t(oc) * OL, size_t(OL), in(2).v[size_t(oc)]);
            for (int ic = 0; ic < IC; ++ic)
                for (int il = 0; il < L; ++il) {
                    Scalar xv = x.v[size_t(ic) * L + il];
                    if (xv == 0.0) continue;
                    for (int oc = 0; oc < OC; ++oc) {
                        const Scalar* wr = w.v.data() + (size_t(ic) * OC + oc) * k;
                        for (int kk = 0; kk < k; ++kk) {
                            int ol = il * s - p + kk;
                            if (ol < 0 || ol >= OL) continue;
                            out.v[size_t(oc) * OL + ol] += xv * wr[kk];
                        }
                    }
                }
            break;
        }
        case Op::Conv3d: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const bool bias = n.inputs.size() == 3;
            int k = n.iattrs[0], s = n.iattrs[1], p = n.iattrs[2];
            int C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
            int OC = n.shape[0], OD = n.shape[1], OH = n.shape[2], OW = n.shape[3];
            for (int oc = 0; oc < OC; ++oc)
                for (int od = 0; od < OD; ++od)
                    for (int oh = 0; oh < OH; ++oh)
                        for (int ow = 0; ow < OW; ++ow) {
                            Scalar acc = bias ? in(2).v[size_t(oc)] : 0.0;
                            for (int ic = 0; ic < C; ++ic)
                                for (int kd = 0; kd < k; ++kd) {
                                    int id_ = od * s - p + kd;
                                    if (id_ < 0 || id_ >= D) continue;
                                    for (int kh = 0; kh < k; ++kh) {
                                        int ih = oh * s - p + kh;
                                        if (ih < 0 || ih >= H) continue;
                                        const Scalar* xr =
                                            x.v.data() + ((size_t(ic) * D + id_) * H + ih) * W;
                                        const Scalar* wr =
                                            w.v.data() +
                                            (((size_t(oc) * C + ic) * k + kd) * k + kh) * k;
                                        for (int kw = 0; kw < k; ++kw) {
                                            int iw = ow * s - p + kw;
                                            if (iw < 0 || iw >= W) continue;
                                            acc += xr[iw] * wr[kw];
                                        }
                                    }
                                }
                            out.v[((size_t(oc) * OD + od) * OH + oh) * OW + ow] = acc;
                        }
            break;
        }
        case Op::Relu:
            for (size_t i = 0; i < out.count(); ++i) out.v[i] = std::max(in(0).v[i], 0.0);
            break;
        case Op::LeakyRelu:
            for (size_t i = 0; i < out.count(); ++i) {
                Scalar x = in(0).v[i];
                out.v[i] = x > 0.0 ? x : n.dattr * x;
            }
            break;
        case Op::Min:
            for (size_t i = 0; i < out.count(); ++i) out.v[i] = std::min(in(0).v[i], in(1).v[i]);
            break;
        case Op::Max:
            for (size_t i = 0; i < out.count(); ++i) out.v[i] = std::max(in(0).v[i], in(1).v[i]);
            break;
        case Op::Neg:
            for (size_t i = 0; i < out.count(); ++i) out.v[i] = -in(0).v[i];
            break;
        case Op::Add: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            if (a.count() == b.count())
                for (size_t i = 0; i < out.count(); ++i) out.v[i] = a.v[i] + b.v[i];
            else if (a.count() == 1)
                for (size_t i = 0; i < out.count(); ++i) out.v[i] = a.v[0] + b.v[i];
            else
                for (size_t i = 0; i < out.count(); ++i) out.v[i] = a.v[i] + b.v[0];
            break;
        }
        case Op::Mean: {
            Scalar acc = 0;
            for (Scalar x : in(0).v) acc += x;
            out.v[0] = acc / Scalar(in(0).count());
            break;
        }
        case Op::Replicate: {
            int axis = n.iattrs[0], count = n.iattrs[1];
            const Tensor& x = in(0);
            size_t pre = 1;
            for (int i = 0; i < axis; ++i) pre *= size_t(x.shape[size_t(i)]);
            size_t post = x.count() / pre;
            for (size_t ip = 0; ip < pre; ++ip)
                for (int j = 0; j < count; ++j)
                    std::copy_n(x.v.data() + ip * post, post,
                                out.v.data() + (ip * count + j) * post);
            break;
        }
        case Op::Split: {
            int parts = n.iattrs[0], index = n.iattrs[1];
            (void)parts;
            size_t chunk = out.count();
            std::copy_n(in(0).v.data() + size_t(index) * chunk, chunk, out.v.data());
            break;
        }
        case Op::Reshape:
            out.v = in(0).v;
            break;
        case Op::Transpose2d: {
            int A = in(0).shape[0], B = in(0).shape[1];
            for (int a = 0; a < A; ++a)
                for (int b = 0; b < B; ++b) out.v[size_t(b) * A + a] = in(0).v[size_t(a) * B + b];
            break;
        }
        case Op::BceWithLogits: {
            const Tensor& x = in(0);
            const Tensor& y = in(1);
            Scalar acc = 0;
            for (size_t i = 0; i < x.count(); ++i) {
                Scalar xi = x.v[i], yi = y.v[i];
                acc += std::max(xi, 0.0) - xi * yi + std::log1p(std::exp(-std::abs(xi)));
            }
            out.v[0] = acc / Scalar(x.count());
            break;
        }
    }
}

}  // namespace

void evaluate(const Graph& g, const std::map<int, Tensor>& feeds, Context& ctx) {
    ctx.val.assign(size_t(g.size()), Tensor{});
    for (int id = 0; id < g.size(); ++id) {
        const Node& n = g.node(id);
        if (n.op == Op::Input) {
            auto it = feeds.find(id);
            if (it == feeds.end()) throw ShapeError(id, "missing feed for input '" + n.name + "'");
            if (it->second.shape != n.shape) throw ShapeError(id, "feed shape mismatch");
            ctx.val[size_t(id)] = it->second;
        } else if (n.op == Op::Param || n.op == Op::Const) {
            ctx.val[size_t(id)] = g.value(id);
        } else {
            forward_node(g, id, ctx);
        }
    }
}

// ---------------------------------------------------------------------------
// Backward

void backward(const Graph& g, int loss_node, Context& ctx) {
    if (Tensor::count_of(g.node(loss_node).shape) != 1)
        throw ShapeError(loss_node, "loss must be scalar");
    ctx.grad.assign(size_t(g.size()), Tensor{});
    for (int id = 0; id < g.size(); ++id) ctx.grad[size_t(id)] = Tensor(g.node(id).shape);
    ctx.grad[size_t(loss_node)].v[0] = 1.0;

    for (int id = loss_node; id >= 0; --id) {
        const Node& n = g.node(id);
        const Tensor& dy = ctx.grad[size_t(id)];
        bool all_zero = std::all_of(dy.v.begin(), dy.v.end(), [](Scalar x) { return x == 0.0; });
        if (all_zero) continue;
        auto inv = [&](int i) -> const Tensor& { return ctx.val[size_t(n.inputs[size_t(i)])]; };
        auto ing = [&](int i) -> Tensor& { return ctx.grad[size_t(n.inputs[size_t(i)])]; };

        switch (n.op) {
            case Op::Input:
            case Op::Param:
            case Op::Const:
                break;
            case Op::Linear: {
                const Tensor& x = inv(0);
                const Tensor& w = inv(1);
                Tensor& dx = ing(0);
                Tensor& dw = ing(1);
                int O = w.shape[0], I = w.shape[1];
                for (int o = 0; o < O; ++o) {
                    Scalar go = dy.v[size_t(o)];
                    if (go == 0.0) continue;
                    const Scalar* wr = w.v.data() + size_t(o) * I;
                    Scalar* dwr = dw.v.data() + size_t(o) * I;
                    for (int i = 0; i < I; ++i) {
                        dx.v[size_t(i)] += go * wr[i];
                        dwr[i] += go * x.v[size_t(i)];
                    }
                    if (n.inputs.size() == 3) ing(2).v[size_t(o)] += go;
                }
                break;
            }
            case Op::Conv2d: {
                const Tensor& x = inv(0);
                const Tensor& w = inv(1);
                Tensor& dx = ing(0);
                Tensor& dw = ing(1);
                int k = n.iattrs[0], s = n.iattrs[1], p = n.iattrs[2];
                int C = x.shape[0], H = x.shape[1], W = x.shape[2];
                int OC = n.shape[0], OH = n.shape[1], OW = n.shape[2];
                for (int oc = 0; oc < OC; ++oc)
                    for (int oh = 0; oh < OH; ++oh)
                        for (int ow = 0; ow < OW; ++ow) {
                            Scalar go = dy.v[(size_t(oc) * OH + oh) * OW + ow];
                            if (go == 0.0) continue;
                            if (n.inputs.size() == 3) ing(2).v[size_t(oc)] += go;
                            for (int ic = 0; ic < C; ++ic)
                                for (int kh = 0; kh < k; ++kh) {
                                    int ih = oh * s - p + kh;
                                    if (ih < 0 || ih >= H) continue;
                                    size_t xoff = (size_t(ic) * H + ih) * W;
                                    size_t woff = ((size_t(oc) * C + ic) * k + kh) * k;
                                    for (int kw = 0; kw < k; ++kw) {
                                        int iw = ow * s - p + kw;
                                        if (iw < 0 || iw >= W) continue;
                                        dx.v[xoff + iw] += go * w.v[woff + kw];
                                        dw.v[woff + kw] += go * x.v[xoff + iw];
                                    }
                                }
                        }
                break;
            }
            case Op::ConvT2d: {
                const Tensor& x = inv(0);
                const Tensor& w = inv(1);
                Tensor& dx = ing(0);
                Tensor& dw = ing(1);
                int k = n.iattrs[0], s = n.iattrs[1], p = n.iattrs[2];
                int IC = x.shape[0], H = x.shape[1], W = x.shape[2];
                int OC = n.shape[0], OH = n.shape[1], OW = n.shape[2];
                if (n.inputs.size() == 3) {
                    Tensor& db = ing(2);
                    for (int oc = 0; oc < OC; ++oc) {
                        Scalar acc = 0;
                        const Scalar* dr = dy.v.data() + size_t(oc) * OH * OW;
                        for (size_t i = 0; i < size_t(OH) * OW; ++i) acc += dr[i];
                        db.v[size_t(oc)] += acc;
                    }
                }
                for (int ic = 0; ic < IC; ++ic)
                    for (int ih = 0; ih < H; ++ih)
                        for (int iw = 0; iw < W; ++iw) {
                            size_t xi = (size_t(ic) * H + ih) * W + iw;
                            Scalar xv = x.v[xi];
                            Scalar gx = 0;
                            for (int oc = 0; oc < OC; ++oc) {
                                const Scalar* wr = w.v.data() + (size_t(ic) * OC + oc) * k * k;
                                Scalar* dwr = dw.v.data() + (size_t(ic) * OC + oc) * k * k;
                                for (int kh = 0; kh < k; ++kh) {
                                    int oh = ih * s - p + kh;
                                    if (oh < 0 || oh >= OH) continue;
                                    const Scalar* drow = dy.v.data() + (size_t(oc) * OH + oh) * OW;
                                    for (int kw = 0; kw < k; ++kw) {
                                        int ow = iw * s - p + kw;
                                        if (ow < 0 || ow >= OW) continue;
                                        Scalar go = drow[ow];
                                        gx += go * wr[size_t(kh) * k + kw];
                                        dwr[size_t(kh) * k + kw] += go * xv;
                                    }
                                }
                            }
                            dx.v[xi] += gx;
                        }
                break;
            }
            case Op::ConvT1d: {
                const Tensor& x = inv(0);
                const Tensor& w = inv(1);
                Tensor& dx = ing(0);
                Tensor& dw = ing(1);
                int k = n.iattrs[0], s = n.iattrs[1], p = n.iattrs[2];
                int IC = x.shape[0], L = x.shape[1];
                int OC = n.shape[0], OL = n.shape[1];
                if (n.inputs.size() == 3) {
                    Tensor& db = ing(2);
                    for (int oc = 0; oc < OC; ++oc) {
                        Scalar acc = 0;
                        for (int ol = 0; ol < OL; ++ol) acc += dy.v[size_t(oc) * OL + ol];
                        db.v[size_t(oc)] += acc;
                    }
                }
                for (int ic = 0; ic < IC; ++ic)
                    for (int il = 0; il < L; ++il) {
                        size_t xi = size_t(ic) * L + il;
                        Scalar xv = x.v[xi];
                        Scalar gx = 0;
                        for (int oc = 0; oc < OC; ++oc) {
                            const Scalar* wr = w.v.data() + (size_t(ic) * OC + oc) * k;
                            Scalar* dwr = dw.v.data() + (size_t(ic) * OC + oc) * k;
                            for (int kk = 0; kk < k; ++kk) {
                                int ol = il * s - p + kk;
                                if (ol < 0 || ol >= OL) continue;
                                Scalar go = dy.v[size_t(oc) * OL + ol];
                                gx += go * wr[kk];
                                dwr[kk] += go * xv;
                            }
                        }
                        dx.v[xi] += gx;
                    }
                break;
            }
            case Op::Conv3d: {
                const Tensor& x = inv(0);
                const Tensor& w = inv(1);
                Tensor& dx = ing(0);
                Tensor& dw = ing(1);
                int k = n.iattrs[0], s = n.iattrs[1], p = n.iattrs[2];
                int C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
                int OC = n.shape[0], OD = n.shape[1], OH = n.shape[2], OW = n.shape[3];
                for (int oc = 0; oc < OC; ++oc)
                    for (int od = 0; od < OD; ++od)
                        for (int oh = 0; oh < OH; ++oh)
                            for (int ow = 0; ow < OW; ++ow) {
                                Scalar go = dy.v[((size_t(oc) * OD + od) * OH + oh) * OW + ow];
                                if (go == 0.0) continue;
                                if (n.inputs.size() == 3) ing(2).v[size_t(oc)] += go;
                                for (int ic = 0; ic < C; ++ic)
                                    for (int kd = 0; kd < k; ++kd) {
                                        int id_ = od * s - p + kd;
                                        if (id_ < 0 || id_ >= D) continue;
                                        for (int kh = 0; kh < k; ++kh) {
                                            int ih = oh * s - p + kh;
                                            if (ih < 0 || ih >= H) continue;
                                            size_t xoff = ((size_t(ic) * D + id_) * H + ih) * W;
                                            size_t woff =
                                                (((size_t(oc) * C + ic) * k + kd) * k + kh) * k;
                                            for (int kw = 0; kw < k; ++kw) {
                                                int iw = ow * s - p + kw;
                                                if (iw < 0 || iw >= W) continue;
                                                dx.v[xoff + iw] += go * w.v[woff + kw];
                                                dw.v[woff + kw] += go * x.v[xoff + iw];
                                            }
                                        }
                                    }
                            }
                break;
            }
            case Op::Relu: {
                Tensor& dx = ing(0);
                for (size_t i = 0; i < dy.count(); ++i)
                    if (inv(0).v[i] > 0.0) dx.v[i] += dy.v[i];
                break;
            }
            case Op::LeakyRelu: {
                Tensor& dx = ing(0);
                for (size_t i = 0; i < dy.count(); ++i)
                    dx.v[i] += dy.v[i] * (inv(0).v[i] > 0.0 ? 1.0 : n.dattr);
                break;
            }
            case Op::Min: {
                // Ties route the full gradient to the first argument.
                Tensor& da = ing(0);
                Tensor& db = ing(1);
                for (size_t i = 0; i < dy.count(); ++i) {
                    if (inv(0).v[i] <= inv(1).v[i])
                        da.v[i] += dy.v[i];
                    else
                        db.v[i] += dy.v[i];
                }
                break;
            }
            case Op::Max: {
                Tensor& da = ing(0);
                Tensor& db = ing(1);
                for (size_t i = 0; i < dy.count(); ++i) {
                    if (inv(0).v[i] >= inv(1).v[i])
                        da.v[i] += dy.v[i];
                    else
                        db.v[i] += dy.v[i];
                }
                break;
            }
            case Op::Neg: {
                Tensor& dx = ing(0);
                for (size_t i = 0; i < dy.count(); ++i) dx.v[i] -= dy.v[i];
                break;
            }
            case Op::Add: {
                Tensor& da = ing(0);
                Tensor& db = ing(1);
                if (da.count() == dy.count())
                    for (size_t i = 0; i < dy.count(); ++i) da.v[i] += dy.v[i];
                else
                    for (size_t i = 0; i < dy.count(); ++i) da.v[0] += dy.v[i];
                if (db.count() == dy.count())
                    for (size_t i = 0; i < dy.count(); ++i) db.v[i] += dy.v[i];
                else
                    for (size_t i = 0; i < dy.count(); ++i) db.v[0] += dy.v[i];
                break;
            }
            case Op::Mean: {
                Tensor& dx = ing(0);
                Scalar go = dy.v[0] / Scalar(dx.count());
                for (size_t i = 0; i < dx.count(); ++i) dx.v[i] += go;
                break;
            }
            case Op::Replicate: {
                int axis = n.iattrs[0], count = n.iattrs[1];
                Tensor& dx = ing(0);
                size_t pre = 1;
                for (int i = 0; i < axis; ++i) pre *= size_t(dx.shape[size_t(i)]);
                size_t post = dx.count() / pre;
                for (size_t ip = 0; ip < pre; ++ip)
                    for (int j = 0; j < count; ++j) {
                        const Scalar* src = dy.v.data() + (ip * count + j) * post;
                        Scalar* dst = dx.v.data() + ip * post;
                        for (size_t q = 0; q < post; ++q) dst[q] += src[q];
                    }
                break;
            }
            case Op::Split: {
                int index = n.iattrs[1];
                Tensor& dx = ing(0);
                size_t chunk = dy.count();
                Scalar* dst = dx.v.data() + size_t(index) * chunk;
                for (size_t i = 0; i < chunk; ++i) dst[i] += dy.v[i];
                break;
            }
            case Op::Reshape: {
                Tensor& dx = ing(0);
                for (size_t i = 0; i < dy.count(); ++i) dx.v[i] += dy.v[i];
                break;
            }
            case Op::Transpose2d: {
                Tensor& dx = ing(0);
                int A = dx.shape[0], B = dx.shape[1];
                for (int a = 0; a < A; ++a)
                    for (int b = 0; b < B; ++b) dx.v[size_t(a) * B + b] += dy.v[size_t(b) * A + a];
                break;
            }
            case Op::BceWithLogits: {
                const Tensor& x = inv(0);
                const Tensor& y = inv(1);
                Tensor& dx = ing(0);
                Tensor& dyv = ing(1);
                Scalar go = dy.v[0] / Scalar(x.count());
                for (size_t i = 0; i < x.count(); ++i) {
                    Scalar sig = 1.0 / (1.0 + std::exp(-x.v[i]));
                    dx.v[i] += go * (sig - y.v[i]);
                    dyv.v[i] += go * (-x.v[i]);
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

bool has_near_tie(const Graph& g, const Context& ctx, double eps) {
    for (int id = 0; id < g.size(); ++id) {
        const Node& n = g.node(id);
        if (n.op != Op::Min && n.op != Op::Max) continue;
        const Tensor& a = ctx.val[size_t(n.inputs[0])];
        const Tensor& b = ctx.val[size_t(n.inputs[1])];
        for (size_t i = 0; i < a.count(); ++i)
            if (std::abs(a.v[i] - b.v[i]) < eps) return true;
    }
    return false;
}

}  // namespace

GradCheckReport grad_check(Graph& g, const std::map<int, Tensor>& feeds, int loss_node,
                           double tolerance, int samples_per_param, std::mt19937_64& rng,
                           double h, double tie_eps) {
    GradCheckReport report;
    Context ctx;
    evaluate(g, feeds, ctx);
    backward(g, loss_node, ctx);

    for (int pid : g.param_ids()) {
        GradCheckEntry entry;
        entry.name = g.node(pid).name;
        Tensor& p = g.value(pid);
        size_t count = p.count();
        std::vector<size_t> idx(count);
        for (size_t i = 0; i < count; ++i) idx[i] = i;
        if (int(count) > samples_per_param) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(size_t(samples_per_param));
        }
        for (size_t i : idx) {
            Scalar saved = p.v[i];
            Context c1, c2;
            p.v[i] = saved + h;
            evaluate(g, feeds, c1);
            p.v[i] = saved - h;
            evaluate(g, feeds, c2);
            p.v[i] = saved;
            if (has_near_tie(g, c1, tie_eps) || has_near_tie(g, c2, tie_eps)) {
                entry.tie_adjacent = true;
                continue;
            }
            double numeric = (c1.val[size_t(loss_node)].v[0] - c2.val[size_t(loss_node)].v[0]) / (2 * h);
            double analytic = ctx.grad[size_t(pid)].v[i];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
            entry.max_rel_err = std::max(entry.max_rel_err, std::abs(numeric - analytic) / denom);
        }
        if (entry.max_rel_err > tolerance) report.pass = false;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    double bound = std::sqrt(3.0 / std::max(1, fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : t.v) x = dist(rng);
    return t;
}

}  // namespace prism::ad
