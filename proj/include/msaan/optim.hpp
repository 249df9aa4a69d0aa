#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "msaan/tensor.hpp"

namespace msaan {

// Named, ordered collection of learnable tensors plus Adam moment state.
struct ParamEntry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
};

class ParamStore {
public:
    void add(const std::string& name, Tensor init) {
        MSAAN_CHECK(!index_.count(name), "duplicate parameter name: " + name);
        ParamEntry e;
        e.name = name;
        e.grad = Tensor(init.dims);
        e.m = Tensor(init.dims);
        e.v = Tensor(init.dims);
        e.value = std::move(init);
        index_[name] = entries_.size();
        entries_.push_back(std::move(e));
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    ParamEntry& at(const std::string& name) {
        auto it = index_.find(name);
        MSAAN_CHECK(it != index_.end(), "unknown parameter name: " + name);
        return entries_[it->second];
    }

    const ParamEntry& at(const std::string& name) const {
        auto it = index_.find(name);
        MSAAN_CHECK(it != index_.end(), "unknown parameter name: " + name);
        return entries_[it->second];
    }

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }
    void increment_step() { ++step_; }

    int64_t total_params() const {
        int64_t total = 0;
        for (const auto& e : entries_) total += e.value.numel();
        return total;
    }

    void zero_grads() {
        for (auto& e : entries_) std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0f);
    }

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, size_t> index_;
    int64_t step_ = 0;
};

struct TrainConfig {
    float lr_max = 1e-3f;
    float lr_min = 1e-7f;
    int total_steps = 2000;
    float beta1 = 0.9f;
    float beta2 = 0.99f;
    float adam_eps = 1e-8f;
    float fft_weight = 0.05f;
    int patch_size = 64;
    int batch_size = 8;
    uint64_t seed = 0;

    void validate() const {
        MSAAN_CHECK(lr_min > 0 && lr_min <= lr_max, "require 0 < lr_min <= lr_max");
        MSAAN_CHECK(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1, "require 0 < beta1, beta2 < 1");
        MSAAN_CHECK(fft_weight >= 0, "require fft_weight >= 0");
        MSAAN_CHECK(total_steps >= 1 && patch_size >= 1 && batch_size >= 1, "steps/patch/batch must be >= 1");
    }
};

// Standard Adam with bias correction. Gradients must be populated and finite.
inline void adam_step(ParamStore& store, float lr, const TrainConfig& cfg) {
    const int64_t t = store.step() + 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(t));
    for (auto& e : store.entries()) {
        for (int64_t i = 0; i < e.value.numel(); ++i) {
            const float g = e.grad.data[i];
            if (!std::isfinite(g))
                throw NumericError("training divergence: non-finite gradient in " + e.name);
            e.m.data[i] = cfg.beta1 * e.m.data[i] + (1.0f - cfg.beta1) * g;
            e.v.data[i] = cfg.beta2 * e.v.data[i] + (1.0f - cfg.beta2) * g * g;
            const double mhat = e.m.data[i] / bc1;
            const double vhat = e.v.data[i] / bc2;
            e.value.data[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
        }
    }
    store.increment_step();
}

// lr_min + 0.5*(lr_max - lr_min)*(1 + cos(pi*t/total_steps))
inline float cosine_lr(int t, const TrainConfig& cfg) {
    MSAAN_CHECK(t >= 0 && t <= cfg.total_steps, "cosine_lr: t out of [0, total_steps]");
    const double phase = std::numbers::pi * static_cast<double>(t) / cfg.total_steps;
    return static_cast<float>(cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase)));
}

}  // namespace msaan
