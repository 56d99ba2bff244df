#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace prism::ad {

using Scalar = double;

struct Tensor {
    std::vector<int> shape;
    std::vector<Scalar> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(count_of(shape), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<Scalar> data) : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != count_of(shape)) throw std::invalid_argument("tensor data/shape mismatch");
    }
    static size_t count_of(const std::vector<int>& s) {
        size_t c = 1;
        for (int d : s) c *= size_t(d);
        return c;
    }
    size_t count() const { return v.size(); }
    static Tensor scalar(Scalar x) { return Tensor({1}, {x}); }
};

enum class Op {
    Input,
    Param,
    Const,
    Linear,       // inputs: x, w[out,in], (b[out])
    Conv2d,       // x[C,H,W], w[OC,IC,K,K], (b[OC]); iattrs: k,s,p
    ConvT2d,      // x[C,H,W], w[IC,OC,K,K], (b[OC]); iattrs: k,s,p
    ConvT1d,      // x[C,L],   w[IC,OC,K],   (b[OC]); iattrs: k,s,p
    Conv3d,       // x[C,D,H,W], w[OC,IC,K,K,K], (b[OC]); iattrs: k,s,p
    Relu,
    LeakyRelu,    // dattr: slope
    Min,          // elementwise; ties route gradient to the first argument
    Max,
    Neg,
    Add,          // same shape, or one side scalar [1]
    Mean,         // -> [1]
    Replicate,    // iattrs: axis, count; inserts a new axis
    Split,        // iattrs: parts, index; splits axis 0
    Reshape,
    Transpose2d,  // [A,B] -> [B,A]
    BceWithLogits // inputs: logits, targets; -> [1]
};

struct Node {
    Op op;
    std::vector<int> inputs;
    std::vector<int> iattrs;
    double dattr = 0.0;
    std::vector<int> shape;
    std::string name;  // inputs and parameters
};

struct ShapeError : std::runtime_error {
    int node_id;
    ShapeError(int id, const std::string& msg)
        : std::runtime_error("node " + std::to_string(id) + ": " + msg), node_id(id) {}
};

class Graph {
public:
    int input(std::vector<int> shape, std::string name = "");
    int param(std::string name, Tensor init);
    int constant(Tensor value);

    int linear(int x, int w, int b = -1);
    int conv2d(int x, int w, int b, int k, int s, int p);
    int conv_transpose2d(int x, int w, int b, int k, int s, int p);
    int conv_transpose1d(int x, int w, int b, int k, int s, int p);
    int conv3d(int x, int w, int b, int k, int s, int p);
    int relu(int x);
    int leaky_relu(int x, double slope);
    int elementwise_min(int a, int b);
    int elementwise_max(int a, int b);
    int negate(int x);
    int add(int a, int b);
    int mean(int x);
    int replicate_along_axis(int x, int axis, int count);
    int split(int x, int parts, int index);
    int reshape(int x, std::vector<int> shape);
    int transpose2d(int x);
    int bce_with_logits(int logits, int targets);

    const Node& node(int id) const { return nodes_[size_t(id)]; }
    int size() const { return int(nodes_.size()); }
    const std::vector<int>& param_ids() const { return param_ids_; }
    Tensor& value(int id);              // Param/Const storage, mutable
    const Tensor& value(int id) const;
    int find_param(const std::string& name) const;  // -1 if absent

    std::map<std::string, Tensor> named_params() const;
    void load_params(const std::map<std::string, Tensor>& values);

private:
    int push(Node n);
    std::vector<Node> nodes_;
    std::vector<Tensor> stored_;  // parallel to nodes_, used by Param/Const
    std::vector<int> param_ids_;
};

struct Context {
    std::vector<Tensor> val;
    std::vector<Tensor> grad;
};

// Deterministic, pure forward pass. Feeds map input node id -> tensor.
void evaluate(const Graph& g, const std::map<int, Tensor>& feeds, Context& ctx);

// Reverse-mode adjoints from a scalar loss node. Context must hold the
// matching forward values.
void backward(const Graph& g, int loss_node, Context& ctx);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool tie_adjacent = false;
};
struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool pass = true;
};

// Central finite differences on sampled parameter entries. Entries whose
// perturbation sits within `tie_eps` of a min/max tie are reported as
// tie-adjacent and skipped rather than failed.
GradCheckReport grad_check(Graph& g, const std::map<int, Tensor>& feeds, int loss_node,
                           double tolerance, int samples_per_param, std::mt19937_64& rng,
                           double h = 1e-5, double tie_eps = 1e-7);

// Kaiming-style uniform fan-in init: U(-sqrt(3/fan_in), +sqrt(3/fan_in)).
Tensor kaiming_uniform(std::vector<int> shape, int fan_in, std::mt19937_64& rng);

}  // namespace prism::ad
