// SPDX-License-Identifier: Apache-2.0
#include "iotsched/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace iotsched::nn {

namespace {

void check_dims(const std::vector<int>& dims)
{
    if (dims.size() < 2) {
        throw ConfigError("network needs at least input and output dimensions");
    }
    for (int d : dims) {
        if (d < 1) {
            throw ConfigError("network dimensions must be positive");
        }
    }
}

std::vector<Layer> zero_layers(const std::vector<Layer>& like)
{
    std::vector<Layer> out;
    out.reserve(like.size());
    for (const auto& l : like) {
        out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                       Eigen::VectorXd::Zero(l.bias.size())});
    }
    return out;
}

constexpr std::array<char, 8> kMagic{'I', 'O', 'T', 'S', 'C', 'H', 'N', 'N'};

void write_u64_le(std::ostream& out, std::uint64_t v)
{
    for (int k = 0; k < 8; ++k) {
        out.put(static_cast<char>((v >> (8 * k)) & 0xff));
    }
}

std::uint64_t read_u64_le(std::istream& in)
{
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) {
        const int c = in.get();
        if (c == EOF) {
            throw ConfigError("truncated checkpoint");
        }
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * k);
    }
    return v;
}

} // namespace

std::vector<int> standard_dims(int input, int output) { return {input, 64, 128, output}; }

MlpParams MlpParams::zeros(std::vector<int> dims)
{
    check_dims(dims);
    MlpParams p;
    p.dims = std::move(dims);
    for (std::size_t k = 0; k + 1 < p.dims.size(); ++k) {
        p.layers.push_back({Eigen::MatrixXd::Zero(p.dims[k + 1], p.dims[k]),
                            Eigen::VectorXd::Zero(p.dims[k + 1])});
    }
    return p;
}

MlpParams MlpParams::glorot(std::vector<int> dims, Rng& rng)
{
    MlpParams p = zeros(std::move(dims));
    for (auto& l : p.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        // Column-major fill keeps the draw order independent of Eigen internals.
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
                l.weight(r, c) = u(rng);
            }
        }
    }
    return p;
}

std::size_t MlpParams::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    }
    return n;
}

bool MlpParams::all_finite() const
{
    return std::all_of(layers.begin(), layers.end(), [](const Layer& l) {
        return l.weight.allFinite() && l.bias.allFinite();
    });
}

std::vector<double> MlpParams::flatten() const
{
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers) {
        out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

void MlpParams::unflatten(const std::vector<double>& flat)
{
    if (flat.size() != parameter_count()) {
        throw ContractViolation("flat parameter vector has the wrong length");
    }
    std::size_t k = 0;
    for (auto& l : layers) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), l.weight.size(), l.weight.data());
        k += static_cast<std::size_t>(l.weight.size());
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), l.bias.size(), l.bias.data());
        k += static_cast<std::size_t>(l.bias.size());
    }
}

Eigen::MatrixXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs,
                              ForwardCache* cache)
{
    if (inputs.rows() != params.input_dim()) {
        throw ContractViolation("input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                                std::to_string(params.input_dim()));
    }
    if (cache != nullptr) {
        cache->inputs.clear();
        cache->pre_activation.clear();
    }
    Eigen::MatrixXd a = inputs;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const auto& l = params.layers[k];
        Eigen::MatrixXd z = l.weight * a;
        z.colwise() += l.bias;
        if (cache != nullptr) {
            cache->inputs.push_back(a);
            cache->pre_activation.push_back(z);
        }
        if (k + 1 < params.layers.size()) {
            a = z.cwiseMax(0.0);
        } else {
            a = std::move(z);
        }
    }
    return a;
}

Eigen::VectorXd forward(const MlpParams& params, const Eigen::VectorXd& input)
{
    return forward_batch(params, input);
}

Gradients Gradients::zeros_like(const MlpParams& params)
{
    Gradients g;
    g.layers = zero_layers(params.layers);
    return g;
}

void Gradients::add(const Gradients& other)
{
    for (std::size_t k = 0; k < layers.size(); ++k) {
        layers[k].weight += other.layers[k].weight;
        layers[k].bias += other.layers[k].bias;
    }
}

void Gradients::scale(double factor)
{
    for (auto& l : layers) {
        l.weight *= factor;
        l.bias *= factor;
    }
    input *= factor;
}

std::vector<double> Gradients::flatten() const
{
    std::vector<double> out;
    for (const auto& l : layers) {
        out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

Gradients backward(const MlpParams& params, const ForwardCache& cache,
                   const Eigen::MatrixXd& upstream)
{
    const std::size_t depth = params.layers.size();
    if (cache.inputs.size() != depth || upstream.rows() != params.output_dim() ||
        upstream.cols() != cache.inputs.front().cols()) {
        throw ContractViolation("upstream gradient does not match the cached forward pass");
    }
    Gradients g;
    g.layers.resize(depth);
    Eigen::MatrixXd delta = upstream;
    for (std::size_t k = depth; k-- > 0;) {
        if (k + 1 < depth) {
            delta = delta.cwiseProduct((cache.pre_activation[k].array() > 0.0).cast<double>().matrix());
        }
        g.layers[k].weight = delta * cache.inputs[k].transpose();
        g.layers[k].bias = delta.rowwise().sum();
        delta = params.layers[k].weight.transpose() * delta;
    }
    g.input = std::move(delta);
    return g;
}

Gradients backward(const MlpParams& params, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& upstream)
{
    ForwardCache cache;
    forward_batch(params, input, &cache);
    return backward(params, cache, upstream);
}

AdamState AdamState::for_params(const MlpParams& params, double learning_rate)
{
    AdamState s;
    s.learning_rate = learning_rate;
    s.m = zero_layers(params.layers);
    s.v = zero_layers(params.layers);
    return s;
}

void adam_step(MlpParams& params, const Gradients& grads, AdamState& state, bool maximize)
{
    if (state.m.size() != params.layers.size() || grads.layers.size() != params.layers.size()) {
        throw ContractViolation("optimizer state does not match the parameters");
    }
    ++state.step_count;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    const double sign = maximize ? -1.0 : 1.0;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double lr = state.learning_rate;
    const double eps = state.epsilon;

    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * (sign * grad);
        v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        update(params.layers[k].weight, grads.layers[k].weight, state.m[k].weight, state.v[k].weight);
        update(params.layers[k].bias, grads.layers[k].bias, state.m[k].bias, state.v[k].bias);
    }
}

void save_params(const std::filesystem::path& path, const MlpParams& params,
                 const nlohmann::json& meta)
{
    const nlohmann::json header = {{"format", "iotsched.mlp"},
                                   {"version", 1},
                                   {"dims", params.dims},
                                   {"hidden_activation", "relu"},
                                   {"output_activation", "linear"},
                                   {"meta", meta}};
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write checkpoint " + path.string());
    }
    out.write(kMagic.data(), kMagic.size());
    write_u64_le(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (double v : params.flatten()) {
        write_u64_le(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) {
        throw ConfigError("failed writing checkpoint " + path.string());
    }
}

MlpParams load_params(const std::filesystem::path& path, nlohmann::json* meta)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open checkpoint " + path.string());
    }
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        throw ConfigError("not a network checkpoint: " + path.string());
    }
    const std::uint64_t len = read_u64_le(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) {
        throw ConfigError("truncated checkpoint header");
    }
    const auto header = nlohmann::json::parse(text);
    if (header.value("format", std::string{}) != "iotsched.mlp" || header.value("version", 0) != 1) {
        throw ConfigError("unsupported checkpoint format");
    }
    MlpParams p = MlpParams::zeros(header.at("dims").get<std::vector<int>>());
    std::vector<double> flat(p.parameter_count());
    for (double& v : flat) {
        v = std::bit_cast<double>(read_u64_le(in));
    }
    p.unflatten(flat);
    if (meta != nullptr) {
        *meta = header.value("meta", nlohmann::json::object());
    }
    return p;
}

double finite_difference_check(const std::function<double(const std::vector<double>&)>& loss,
                               const std::vector<double>& point, const std::vector<double>& analytic,
                               int probes, Rng& rng, double h, double floor)
{
    if (point.size() != analytic.size() || point.empty()) {
        throw ContractViolation("gradient and point sizes differ");
    }
    std::uniform_int_distribution<std::size_t> pick(0, point.size() - 1);
    std::vector<double> x = point;
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        const std::size_t q = pick(rng);
        x[q] = point[q] + h;
        const double up = loss(x);
        x[q] = point[q] - h;
        const double down = loss(x);
        x[q] = point[q];
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[q];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

} // namespace iotsched::nn
