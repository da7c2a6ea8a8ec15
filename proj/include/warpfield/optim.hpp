#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace warpfield {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected ADAM over a fixed, named parameter list. The list order is
// the contract shared with gradient collection and checkpointing.
class Adam {
public:
    explicit Adam(std::vector<std::pair<std::string, Tensor*>> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (auto& [name, t] : params_) {
            m_.emplace_back(t->rows(), t->cols());
            v_.emplace_back(t->rows(), t->cols());
        }
    }

    void step(const std::vector<Tensor>& grads, double lr) {
        if (grads.size() != params_.size())
            throw UsageError("adam: expected " + std::to_string(params_.size()) + " gradients, got " +
                             std::to_string(grads.size()));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            if (!grads[p].same_shape(*params_[p].second))
                throw UsageError("adam: gradient shape mismatch for " + params_[p].first);
            if (!grads[p].all_finite())
                throw NumericError("adam: non-finite gradient for " + params_[p].first);
        }
        ++t_;
        double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            Tensor& w = *params_[p].second;
            const Tensor& g = grads[p];
            Tensor& m = m_[p];
            Tensor& v = v_[p];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
            }
        }
    }

    int step_count() const { return t_; }
    std::size_t parameter_count() const { return params_.size(); }
    const std::string& name(std::size_t p) const { return params_[p].first; }
    const AdamConfig& config() const { return cfg_; }

    // checkpoint access
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void restore(std::vector<Tensor> m, std::vector<Tensor> v, int step_count) {
        if (m.size() != params_.size() || v.size() != params_.size())
            throw DataError("adam: moment count does not match parameter list");
        for (std::size_t p = 0; p < params_.size(); ++p)
            if (!m[p].same_shape(*params_[p].second) || !v[p].same_shape(*params_[p].second))
                throw DataError("adam: moment shape mismatch for " + params_[p].first);
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = step_count;
    }

private:
    std::vector<std::pair<std::string, Tensor*>> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    int t_ = 0;
};

} // namespace warpfield
