// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iotsched/common.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <unordered_set>
#include <vector>

namespace iotsched::nn {

struct Layer {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;
};

/// Dense network: ReLU on hidden layers, linear output.
struct MlpParams {
    std::vector<int> dims;
    std::vector<Layer> layers;

    static MlpParams zeros(std::vector<int> dims);
    /// Glorot-uniform weights, zero biases.
    static MlpParams glorot(std::vector<int> dims, Rng& rng);

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    std::size_t parameter_count() const;
    bool all_finite() const;

    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);
};

/// (input, 64, 128, output).
std::vector<int> standard_dims(int input, int output);

/// Activations kept for the backward pass; one column per sample.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;      // input to each layer
    std::vector<Eigen::MatrixXd> pre_activation;
};

Eigen::VectorXd forward(const MlpParams& params, const Eigen::VectorXd& input);
Eigen::MatrixXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs,
                              ForwardCache* cache = nullptr);

struct Gradients {
    std::vector<Layer> layers;
    Eigen::MatrixXd input; // d(loss)/d(input), one column per sample

    static Gradients zeros_like(const MlpParams& params);
    void add(const Gradients& other);
    void scale(double factor);
    std::vector<double> flatten() const;
};

/// Reverse-mode gradients of sum_columns <upstream, output>. Parameter gradients
/// are summed over the batch.
Gradients backward(const MlpParams& params, const ForwardCache& cache,
                   const Eigen::MatrixXd& upstream);
Gradients backward(const MlpParams& params, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& upstream);

struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    std::vector<Layer> m;
    std::vector<Layer> v;

    static AdamState for_params(const MlpParams& params, double learning_rate = 1e-4);
};

/// Bias-corrected Adam. `maximize` ascends instead of descends.
void adam_step(MlpParams& params, const Gradients& grads, AdamState& state, bool maximize = false);

/// Fixed-capacity ring buffer; sampling is uniform without replacement.
template <class T>
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity) : capacity_(capacity)
    {
        if (capacity == 0) {
            throw ConfigError("replay memory capacity must be positive");
        }
    }

    void insert(T item)
    {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
        } else {
            items_[head_] = std::move(item);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool ready(std::size_t batch) const { return items_.size() >= batch; }

    /// Oldest-first view index.
    const T& at(std::size_t k) const { return items_[(head_ + k) % items_.size()]; }

    /// Floyd's algorithm; empty optional when fewer than `batch` items are stored.
    std::optional<std::vector<std::size_t>> sample_indices(std::size_t batch, Rng& rng) const
    {
        const std::size_t n = items_.size();
        if (n < batch) {
            return std::nullopt;
        }
        std::vector<std::size_t> out;
        out.reserve(batch);
        std::unordered_set<std::size_t> chosen;
        chosen.reserve(batch * 2);
        for (std::size_t j = n - batch; j < n; ++j) {
            std::uniform_int_distribution<std::size_t> pick(0, j);
            const std::size_t t = pick(rng);
            const std::size_t v = chosen.insert(t).second ? t : j;
            if (v == j) {
                chosen.insert(j);
            }
            out.push_back(v);
        }
        return out;
    }

    std::optional<std::vector<const T*>> sample(std::size_t batch, Rng& rng) const
    {
        auto idx = sample_indices(batch, rng);
        if (!idx) {
            return std::nullopt;
        }
        std::vector<const T*> out;
        out.reserve(idx->size());
        for (std::size_t k : *idx) {
            out.push_back(&at(k));
        }
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<T> items_;
};

/// "IOTSCHNN", uint64 LE header length, JSON header {dims, meta}, LE f64 values.
void save_params(const std::filesystem::path& path, const MlpParams& params,
                 const nlohmann::json& meta = nlohmann::json::object());
MlpParams load_params(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

/// Central-difference check of `analytic` against `loss` on `probes` random
/// coordinates of the flat parameter vector. Returns the largest relative error,
/// |a - n| / max(|a|, |n|, floor).
double finite_difference_check(const std::function<double(const std::vector<double>&)>& loss,
                               const std::vector<double>& point, const std::vector<double>& analytic,
                               int probes, Rng& rng, double h = 1e-5, double floor = 1e-6);

} // namespace iotsched::nn
